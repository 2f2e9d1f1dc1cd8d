use thiserror::Error;

/// Errors raised while building models or running an analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("class '{class}' can drive '{species}' negative from a state inside its guard")]
    ClosureViolation { class: String, species: String },

    #[error("classes '{first}' and '{second}' share the same change vector")]
    DuplicateChange { first: String, second: String },

    #[error("initial distribution sums to {0}, expected 1")]
    NotNormalized(f64),

    #[error("unknown builtin model '{0}'")]
    UnknownModel(String),

    #[error("time {t} lies beyond the validity horizon {valid_until} of class '{class}'")]
    TimeOutOfRange {
        class: String,
        t: f64,
        valid_until: f64,
    },

    #[error("uniformization rate is negative on [{t}, {t_end}]")]
    NegativeRate { t: f64, t_end: f64 },

    #[error("transition bound {value} outside [0, 1] at state {state:?}")]
    InvalidBound { state: Vec<u32>, value: f64 },

    #[error("state {state:?} is not dominated by x_max {x_max:?}")]
    NotDominated { state: Vec<u32>, x_max: Vec<u32> },

    #[error("class '{class}' has a state factor of degree {degree}; moment equations need degree <= 2")]
    UnsupportedDegree { class: String, degree: u32 },

    #[error("moment integration produced non-finite values at t={0}")]
    NonFiniteMoments(f64),

    #[error("all probability mass was pruned at t={0}")]
    MassExhausted(f64),

    #[error("time limit of {limit_secs} s reached at t={reached} (max window {max_window_size}, lost mass {lost_mass:e})")]
    TimeLimit {
        reached: f64,
        limit_secs: f64,
        max_window_size: usize,
        lost_mass: f64,
    },

    #[error("no admissible step length found at t={0}")]
    StepUnderflow(f64),

    #[error("integrator step size underflow at t={0}")]
    IntegratorUnderflow(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
