use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("source {0} has an empty route")]
    EmptyRoute(usize),
    #[error("link {0} is not used by any source")]
    UnusedLink(usize),
    #[error("source {source_index} references link {link} but only {num_links} links exist")]
    LinkOutOfRange {
        source_index: usize,
        link: usize,
        num_links: usize,
    },
    #[error("source {source_index} visits link {link} more than once")]
    DuplicateLink { source_index: usize, link: usize },
    #[error("link {link} has nonpositive capacity {value}")]
    NonPositiveCapacity { link: usize, value: f64 },
    #[error("utility of source {source_index} rejected: {reason}")]
    InvalidUtility { source_index: usize, reason: String },
    #[error("network is disconnected: source {0} shares no link with the rest")]
    Disconnected(usize),
    #[error("component {index} of the primal vector is not strictly positive ({value})")]
    NonPositive { index: usize, value: f64 },
    #[error("linear system is singular")]
    Singular,
    #[error("dual state has no cached all-ones route prices")]
    Uninitialized,
    #[error("max-cut enumeration needs {links} links but the limit is {limit}")]
    EnumerationLimit { links: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{what} did not finish within {limit} iterations")]
    IterationCap { what: &'static str, limit: usize },
    #[error("iterate {k} lost positivity at component {index} ({value})")]
    PositivityViolation { k: usize, index: usize, value: f64 },
    #[error("stage two entered with beta = {0}, which already certifies the iterate")]
    StageTwoNotNeeded(f64),
    #[error("communication graph is disconnected")]
    GraphDisconnected,
    #[error("no valid routing matrix after {0} draws")]
    RedrawCap(usize),
    #[error("first-order iteration diverged at step {0}")]
    Divergence(usize),
    #[error("cannot pick an objective scale: {0}")]
    ScaleUndefined(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
