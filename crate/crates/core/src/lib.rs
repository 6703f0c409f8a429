//! Fixed points of mappings on b-metric spaces whose metric takes values in
//! the positive cone of a matrix algebra, with contraction conditions imposed
//! only along the edges of a directed graph.
//!
//! The crate is organised bottom-up:
//!
//! * [`algebra`]: the matrix C*-algebra `M_n(C)`, its norms, orders and
//!   positive cone.
//! * [`bmetric`]: algebra-valued b-metric spaces and an axiom checker.
//! * [`graph`]: directed graphs with implicit loops, reversal, symmetrization
//!   and the graph properties used by the solvers.
//! * [`engine`]: Jungck iteration, contraction certificates, a priori bounds
//!   and coincidence / common fixed point extraction.
//! * [`applications`]: Stein-type operator equations and Fredholm integral
//!   equations, each with a direct linear-algebra oracle.

pub mod algebra;
pub mod applications;
pub mod bmetric;
pub mod graph;
pub mod engine;

pub use algebra::{AlgebraElement, AlgebraError, NormMode, OrderMode, PositivityReport};
pub use bmetric::{BMetricSpace, Point};
pub use engine::{
    ContractionCertificate, ContractionFamily, EngineError, MappingPair, SolveOptions,
};
pub use graph::DirectedGraph;
