use thiserror::Error;

/// Errors raised by constructors and operations across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is disconnected: vertices {component:?} are not reachable from {start}")]
    Disconnected { start: String, component: Vec<String> },
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown builtin family `{0}`")]
    UnknownFamily(String),
    #[error("elements belong to different algebras")]
    ParentMismatch,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("input is not a projection (residual {0:.3e})")]
    NotProjection(f64),
    #[error("projection is zero")]
    ZeroProjection,
    #[error("depth {have} is insufficient, {need} required")]
    Depth { have: usize, need: usize },
    #[error("modulus mismatch: {0} vs {1}")]
    Modulus(f64, f64),
    #[error("inclusion is not Markov: {0}")]
    NotMarkov(String),
    #[error("projection has zero central support in block {0}, so its ideal span is proper")]
    IdealSpan(String),
    #[error("enumeration bound exceeded: n = {0} > 8")]
    Enumeration(usize),
    #[error("no standard level found up to depth {0}")]
    NoStandardLevel(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
