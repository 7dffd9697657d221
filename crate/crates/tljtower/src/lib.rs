//! Markov towers of finite-dimensional tracial algebras built from pointed
//! bipartite graphs, together with numerical verifiers for the tower axioms,
//! the Temperley-Lieb-Jones diagram algebra, graph planar algebras, the
//! projection category of a tower, and the embedding of TLJ into the graph
//! planar algebra of a module graph.

pub mod embed;
pub mod error;
pub mod gpa;
pub mod graph;
pub mod linalg;
pub mod multimatrix;
pub mod projcat;
pub mod report;
pub mod sparse;
pub mod tljdiag;
pub mod tower;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{builtin, frobenius_perron, load_graph, save_graph, verify_dimension_function, GraphShape, WeightedBipartiteGraph};
pub use report::{Check, Report};
