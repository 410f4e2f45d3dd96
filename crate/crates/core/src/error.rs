use thiserror::Error;

/// A single rejected configuration field.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

impl Issue {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("temperature {temp_c} °C outside model range [{min_c}, {max_c}] °C")]
    TemperatureOutOfRange { temp_c: f64, min_c: f64, max_c: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("qber undefined: total gain is zero")]
    UndefinedQber,

    #[error("no signal: {0}")]
    NoSignal(String),

    #[error("sweep grids are not aligned: {0}")]
    GridMismatch(String),

    #[error("no sign change of the rate difference in [{lo_km}, {hi_km}] km ({diagnostic})")]
    CrossoverNotFound {
        lo_km: f64,
        hi_km: f64,
        diagnostic: String,
    },

    #[error("secure rate is zero at the near end of the bracket ({0} km)")]
    Bracket(f64),

    #[error("invalid configuration: {}", join_issues(.0))]
    Validation(Vec<Issue>),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Collects the issues reported by a `validate`-style check into a `Result`.
pub(crate) fn check(issues: Vec<Issue>) -> Result<()> {
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(issues))
    }
}
