//! Directed graphs over a point universe.
//!
//! Every graph contains all loops `(x, x)`; they are implicit and never stored.
//! Finite edge sets are kept explicitly, while infinite parametric families
//! (needed when the vertex set is the real line) are represented by a
//! membership predicate plus an optional sampler producing concrete edges.
//!
//! Path and connectivity queries search a finite vertex pool: the vertices
//! known to the graph plus the query points.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bmetric::{Point, POINT_TOL};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("vertex sample must not be empty")]
    EmptySample,
    #[error("orbit has {got} entries, horizon needs {needed}")]
    ShortOrbit { needed: usize, got: usize },
    #[error("consecutive pair at index {index} is not an edge of the symmetrized graph")]
    PreconditionViolation { index: usize },
}

type Predicate<P> = Arc<dyn Fn(&P, &P) -> bool + Send + Sync>;
type Sampler<P> = Arc<dyn Fn(usize, usize, u64) -> Vec<(P, P)> + Send + Sync>;

/// An intensional edge family.
#[derive(Clone)]
pub struct EdgeFamily<P> {
    name: String,
    contains: Predicate<P>,
    /// `(first, random, seed)` → the first `first` members in parameter order
    /// followed by `random` members drawn with the given seed.
    sampler: Option<Sampler<P>>,
}

impl<P> EdgeFamily<P> {
    pub fn new(name: impl Into<String>, contains: impl Fn(&P, &P) -> bool + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            contains: Arc::new(contains),
            sampler: None,
        }
    }

    pub fn with_sampler(
        mut self,
        sampler: impl Fn(usize, usize, u64) -> Vec<(P, P)> + Send + Sync + 'static,
    ) -> Self {
        self.sampler = Some(Arc::new(sampler));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Clone)]
pub struct DirectedGraph<P> {
    edges: Vec<(P, P)>,
    family: Option<EdgeFamily<P>>,
    vertices: Vec<P>,
    symmetric: bool,
}

impl<P: Point> fmt::Debug for DirectedGraph<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirectedGraph")
            .field("edges", &self.edges)
            .field("family", &self.family.as_ref().map(|fam| fam.name.as_str()))
            .field("known_vertices", &self.vertices.len())
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

fn push_unique<P: Point>(v: &mut Vec<P>, p: P) {
    if !v.iter().any(|q| q.same_point(&p)) {
        v.push(p);
    }
}

fn push_edge<P: Point>(edges: &mut Vec<(P, P)>, (x, y): (P, P)) {
    if x.same_point(&y) {
        return;
    }
    if !edges.iter().any(|(a, b)| a.same_point(&x) && b.same_point(&y)) {
        edges.push((x, y));
    }
}

/// Vertex sequence of a path; `path[0]` is the source.
#[derive(Debug, Clone, PartialEq)]
pub struct PathQuery<P> {
    pub source: P,
    pub target: P,
    pub path: Option<Vec<P>>,
}

impl<P> PathQuery<P> {
    /// Number of edges, if a path was found.
    pub fn length(&self) -> Option<usize> {
        self.path.as_ref().map(|p| p.len() - 1)
    }
}

impl<P: Point> DirectedGraph<P> {
    /// Graph with the given edges plus all loops. Duplicate edges collapse.
    pub fn from_edges(edges: impl IntoIterator<Item = (P, P)>) -> Self {
        let mut g = Self {
            edges: Vec::new(),
            family: None,
            vertices: Vec::new(),
            symmetric: false,
        };
        for (x, y) in edges {
            push_unique(&mut g.vertices, x.clone());
            push_unique(&mut g.vertices, y.clone());
            push_edge(&mut g.edges, (x, y));
        }
        g.symmetric = g.edges_are_symmetric();
        g
    }

    pub fn loops_only() -> Self {
        Self::from_edges(std::iter::empty())
    }

    pub fn from_family(family: EdgeFamily<P>) -> Self {
        Self {
            edges: Vec::new(),
            family: Some(family),
            vertices: Vec::new(),
            symmetric: false,
        }
    }

    /// Every ordered pair is an edge.
    pub fn complete() -> Self {
        let mut g = Self::from_family(EdgeFamily::new("complete", |_, _| true));
        g.symmetric = true;
        g
    }

    /// Registers vertices for path searches.
    pub fn with_vertices(mut self, vertices: impl IntoIterator<Item = P>) -> Self {
        for v in vertices {
            push_unique(&mut self.vertices, v);
        }
        self
    }

    pub fn known_vertices(&self) -> &[P] {
        &self.vertices
    }

    /// Explicit non-loop edges.
    pub fn explicit_edges(&self) -> &[(P, P)] {
        &self.edges
    }

    pub fn family_name(&self) -> Option<&str> {
        self.family.as_ref().map(|f| f.name.as_str())
    }

    pub fn has_edge(&self, x: &P, y: &P) -> bool {
        x.same_point(y)
            || self
                .edges
                .iter()
                .any(|(a, b)| a.same_point(x) && b.same_point(y))
            || self.family.as_ref().is_some_and(|f| (f.contains)(x, y))
    }

    /// Compares explicit edge sets and family identity.
    pub fn same_edges(&self, other: &Self) -> bool {
        let contained = |a: &Self, b: &Self| {
            a.edges
                .iter()
                .all(|(x, y)| b.edges.iter().any(|(u, v)| u.same_point(x) && v.same_point(y)))
        };
        self.edges.len() == other.edges.len()
            && contained(self, other)
            && contained(other, self)
            && self.family_name() == other.family_name()
    }

    fn edges_are_symmetric(&self) -> bool {
        self.family.is_none()
            && self
                .edges
                .iter()
                .all(|(x, y)| self.edges.iter().any(|(u, v)| u.same_point(y) && v.same_point(x)))
    }

    /// `G⁻¹`: every edge reversed.
    pub fn reverse(&self) -> Self {
        if self.symmetric {
            return self.clone();
        }
        let edges = self.edges.iter().map(|(x, y)| (y.clone(), x.clone())).collect();
        let family = self.family.as_ref().map(|f| {
            let contains = f.contains.clone();
            EdgeFamily {
                name: format!("reverse({})", f.name),
                contains: Arc::new(move |x: &P, y: &P| contains(y, x)) as Predicate<P>,
                sampler: f.sampler.clone().map(|s| {
                    Arc::new(move |first, random, seed| {
                        s(first, random, seed).into_iter().map(|(x, y)| (y, x)).collect()
                    }) as Sampler<P>
                }),
            }
        });
        Self {
            edges,
            family,
            vertices: self.vertices.clone(),
            symmetric: false,
        }
    }

    /// `G̃`: edges of `G` together with edges of `G⁻¹`.
    pub fn symmetrize(&self) -> Self {
        if self.symmetric {
            return self.clone();
        }
        let mut edges = self.edges.clone();
        for (x, y) in &self.edges {
            push_edge(&mut edges, (y.clone(), x.clone()));
        }
        let family = self.family.as_ref().map(|f| {
            let contains = f.contains.clone();
            EdgeFamily {
                name: format!("symmetrize({})", f.name),
                contains: Arc::new(move |x: &P, y: &P| contains(x, y) || contains(y, x))
                    as Predicate<P>,
                sampler: f.sampler.clone().map(|s| {
                    Arc::new(move |first, random, seed| {
                        s(first, random, seed)
                            .into_iter()
                            .flat_map(|(x, y)| [(x.clone(), y.clone()), (y, x)])
                            .collect()
                    }) as Sampler<P>
                }),
            }
        });
        Self {
            edges,
            family,
            vertices: self.vertices.clone(),
            symmetric: true,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Explicit edges followed by family samples (when the family has a sampler).
    pub fn sample_edges(&self, first: usize, random: usize, seed: u64) -> Vec<(P, P)> {
        let mut out = self.edges.clone();
        if let Some(s) = self.family.as_ref().and_then(|f| f.sampler.as_ref()) {
            out.extend(s(first, random, seed));
        }
        out
    }

    /// Shortest directed path with at most `max_len` edges.
    pub fn find_path(&self, x: &P, y: &P, max_len: usize) -> PathQuery<P> {
        let mut pool = vec![x.clone()];
        push_unique(&mut pool, y.clone());
        for v in &self.vertices {
            push_unique(&mut pool, v.clone());
        }
        let path = self.bfs(&pool, 0, |i| pool[i].same_point(y), max_len);
        PathQuery {
            source: x.clone(),
            target: y.clone(),
            path: path.map(|idx| idx.into_iter().map(|i| pool[i].clone()).collect()),
        }
    }

    fn bfs(
        &self,
        pool: &[P],
        start: usize,
        is_target: impl Fn(usize) -> bool,
        max_len: usize,
    ) -> Option<Vec<usize>> {
        let mut parent: Vec<Option<usize>> = vec![None; pool.len()];
        let mut depth = vec![usize::MAX; pool.len()];
        depth[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            if is_target(u) {
                let mut path = vec![u];
                let mut cur = u;
                while let Some(p) = parent[cur] {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            if depth[u] == max_len {
                continue;
            }
            for v in 0..pool.len() {
                if depth[v] == usize::MAX && self.has_edge(&pool[u], &pool[v]) {
                    depth[v] = depth[u] + 1;
                    parent[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        None
    }

    /// Whether every pair of sampled vertices is joined in `G̃`.
    pub fn is_weakly_connected(&self, sample: &[P]) -> Result<bool, GraphError> {
        if sample.is_empty() {
            return Err(GraphError::EmptySample);
        }
        let sym = self.symmetrize();
        let mut pool = Vec::new();
        for v in sample.iter().chain(&self.vertices) {
            push_unique(&mut pool, v.clone());
        }
        // Connectivity in a symmetric graph is an equivalence relation, so one
        // search from the first sample vertex decides every pair.
        let reach = sym.reachable(&pool, 0);
        Ok(sample
            .iter()
            .all(|s| pool.iter().zip(&reach).any(|(p, r)| *r && p.same_point(s))))
    }

    fn reachable(&self, pool: &[P], start: usize) -> Vec<bool> {
        let mut seen = vec![false; pool.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in 0..pool.len() {
                if !seen[v] && self.has_edge(&pool[u], &pool[v]) {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Membership of an orbit in `C_gf` as observed up to `horizon`: every
    /// ordered pair among the first `horizon + 1` entries is an edge of `G̃`.
    pub fn check_orbit_membership(&self, orbit: &[P], horizon: usize) -> Result<bool, GraphError> {
        if orbit.len() < horizon + 1 {
            return Err(GraphError::ShortOrbit {
                needed: horizon + 1,
                got: orbit.len(),
            });
        }
        let sym = self.symmetrize();
        let head = &orbit[..=horizon];
        Ok(head
            .iter()
            .enumerate()
            .all(|(i, a)| head[i + 1..].iter().all(|b| sym.has_edge(a, b))))
    }

    /// Property P1 (and P3, with `g` the identity) observed on a finite sequence.
    ///
    /// Requires consecutive entries to be joined in `G̃`. Returns the indices
    /// `i` with `(sequence[i], limit) ∈ E(G̃)` when they cover at least half of
    /// the second half of the sequence, otherwise `None`.
    pub fn check_p1_p3(&self, sequence: &[P], limit: &P) -> Result<Option<Vec<usize>>, GraphError> {
        let sym = self.symmetrize();
        for (i, w) in sequence.windows(2).enumerate() {
            if !sym.has_edge(&w[0], &w[1]) {
                return Err(GraphError::PreconditionViolation { index: i });
            }
        }
        let hits: Vec<usize> = sequence
            .iter()
            .enumerate()
            .filter(|(_, x)| sym.has_edge(x, limit))
            .map(|(i, _)| i)
            .collect();
        let tail_start = sequence.len() / 2;
        let tail_len = sequence.len() - tail_start;
        let tail_hits = hits.iter().filter(|&&i| i >= tail_start).count();
        if tail_len > 0 && 2 * tail_hits >= tail_len {
            Ok(Some(hits))
        } else {
            Ok(None)
        }
    }

    /// Property P2 (and P4 for fixed points): all candidates pairwise joined in `G̃`.
    pub fn check_p2_p4(&self, candidates: &[P]) -> bool {
        let sym = self.symmetrize();
        candidates
            .iter()
            .all(|a| candidates.iter().all(|b| sym.has_edge(a, b)))
    }
}

fn nearest_exponent(value: f64, base: f64) -> Option<i32> {
    if !(value > 0.0) || !value.is_finite() {
        return None;
    }
    let k = (value.ln() / base.ln()).round();
    if k.abs() > 1e4 {
        return None;
    }
    let k = k as i32;
    let expected = base.powi(k);
    ((value - expected).abs() <= POINT_TOL * value.max(expected) * 16.0).then_some(k)
}

impl DirectedGraph<f64> {
    /// `Δ ∪ {(0, base^{-n}) : n = 0, 1, 2, ...}`.
    pub fn zero_to_powers(base: f64) -> Self {
        assert!(base > 1.0, "base must exceed 1");
        let family = EdgeFamily::new(format!("zero_to_powers({base})"), move |x: &f64, y: &f64| {
            *x == 0.0 && nearest_exponent(*y, base).is_some_and(|k| k <= 0)
        })
        .with_sampler(move |first, random, seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..first as i32)
                .chain((0..random).map(|_| rng.gen_range(0..128)))
                .map(|n| (0.0, base.powi(-n)))
                .collect()
        });
        Self::from_family(family).with_vertices(
            std::iter::once(0.0).chain((0..=64).map(|n| base.powi(-n))),
        )
    }

    /// `Δ ∪ {(base^t z, base^t (z + 1)) : z ≥ z_min, t = 0, 1, 2, ...}`.
    pub fn scaled_successor(base: f64, z_min: f64) -> Self {
        assert!(base > 1.0, "base must exceed 1");
        assert!(z_min > 0.0, "z_min must be positive");
        let contains = move |x: &f64, y: &f64| {
            let (x, y) = (*x, *y);
            if !(x > 0.0) || !(y > x) {
                return false;
            }
            let step = y - x;
            let Some(t) = nearest_exponent(step, base) else {
                return false;
            };
            t >= 0 && x / step >= z_min * (1.0 - 16.0 * POINT_TOL)
        };
        let edge = move |t: i32, z: f64| {
            let s = base.powi(t);
            (s * z, s * (z + 1.0))
        };
        let family = EdgeFamily::new(format!("scaled_successor({base}, {z_min})"), contains)
            .with_sampler(move |first, random, seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out: Vec<(f64, f64)> = (0..first)
                    .map(|i| edge((i / 8) as i32, z_min + (i % 8) as f64))
                    .collect();
                out.extend((0..random).map(|_| {
                    let t = rng.gen_range(0..12);
                    let z = rng.gen_range(z_min..z_min + 50.0);
                    edge(t, z)
                }));
                out
            });
        let known: Vec<f64> = (0..32)
            .flat_map(|i| {
                let (a, b) = edge(i / 8, z_min + (i % 8) as f64);
                [a, b]
            })
            .collect();
        Self::from_family(family).with_vertices(std::iter::once(0.0).chain(known))
    }
}
