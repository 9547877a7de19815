use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature count {0} outside the supported range 1..=20 for exact enumeration")]
    Capacity(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("covariance matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("cannot condition on coalition {mask:#b}: covariance block is singular")]
    Conditioning { mask: u32 },

    #[error("data error: {0}")]
    Data(String),

    #[error("contribution table is missing {} coalition(s): {masks:?}", masks.len())]
    MissingCoalitions { masks: Vec<u32> },

    #[error("no fitted regression for coalition {mask:#b}")]
    UnfittedCoalition { mask: u32 },

    #[error("fitting coalition {mask:#b} failed: {source}")]
    Fit {
        mask: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("estimation failed for observation {observation}, coalition {mask:#b}: {source}")]
    Estimation {
        observation: usize,
        mask: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownName {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context,
            expected,
            actual,
        }
    }
}
