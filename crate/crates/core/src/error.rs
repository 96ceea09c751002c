use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("portfolio is not long-only: weight {weight:e} for asset {asset}")]
    NotLongOnly { asset: usize, weight: f64 },
    #[error("evaluation error at asset {asset}: {msg}")]
    Evaluation { asset: usize, msg: String },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("asset {asset} is not a member on day {day} but has weight {weight:e}")]
    Membership { day: usize, asset: usize, weight: f64 },
    #[error("Sharpe ratio undefined: zero standard deviation")]
    UndefinedSharpe,
    #[error("no feasible point: {0}")]
    NoFeasiblePoint(String),
    #[error("initialization failed: {0}")]
    Initialization(String),
    #[error("resource limit: {0}")]
    Resource(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: alloc::boxed::Box::new(self),
        }
    }

    /// True for errors caused by malformed inputs rather than numerics.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::InvalidArgument(_) | Error::Membership { .. } => true,
            Error::AtStep { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
