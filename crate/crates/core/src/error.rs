use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}, field `{field}`: {message}")]
    Row {
        row: usize,
        field: String,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("record `{id}`: parent features contradict parent `{parent}` on `{field}`")]
    ParentConflict {
        id: String,
        parent: String,
        field: String,
    },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("conditioning class \"{0}\" is empty")]
    EmptyClass(&'static str),

    #[error(
        "fewer than 2 usable records for contingency table ({usable} usable, {excluded} excluded)"
    )]
    TooFewRecords { usable: usize, excluded: usize },

    #[error("non-contracting map (slope = {0})")]
    NonContracting(f64),

    #[error("non-contracting controlled map (denominator = {0})")]
    NonContractingControlled(f64),

    #[error("infeasible fit: {0}")]
    InfeasibleFit(String),

    #[error("no convergence within {0} steps")]
    NoConvergence(usize),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        message: message.into(),
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(invalid(name, format!("{value} is outside [0, 1]")))
    }
}
