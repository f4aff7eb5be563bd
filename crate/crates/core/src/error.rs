use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidSpec(String),
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("no latent type satisfies the restriction")]
    EmptySupport,
    #[error("capacity exceeded: more than {limit} {what}")]
    CapacityExceeded { what: &'static str, limit: usize },
    #[error("empty type list")]
    EmptyTypeList,
    #[error("model `{0}` has no pairwise predicate; build the graph from the support matrix")]
    NoPredicateAvailable(String),
    #[error("vertex {index} out of range for a graph on {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("output limit exceeded: more than {0} sets")]
    OutputLimitExceeded(usize),
    #[error("brute force limited to {limit} vertices, graph has {n}")]
    TooLarge { n: usize, limit: usize },
    #[error("time budget exceeded")]
    TimeBudgetExceeded,
    #[error("models are not nested: {0}")]
    NotNested(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("empty conditioning cells: {}", .0.join(", "))]
    EmptyConditioningCell(Vec<String>),
    #[error("invalid shares: {0}")]
    InvalidShares(String),
    #[error("no testable inequalities")]
    NoTestableInequalities,
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Budget and capacity failures are distinguished from model errors at the CLI.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::CapacityExceeded { .. }
                | Error::OutputLimitExceeded(_)
                | Error::TimeBudgetExceeded
                | Error::TooLarge { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
