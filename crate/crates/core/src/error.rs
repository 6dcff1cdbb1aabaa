use thiserror::Error;

/// Errors produced by the particle schemes and their supporting machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("density {value} outside the admissible range [0, {rho_max}]")]
    DensityOutOfRange { value: f64, rho_max: f64 },

    #[error("invalid model parameter: {0}")]
    InvalidModel(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("the density carries zero mass")]
    ZeroMass,

    #[error("mass mismatch: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("at least {min} particles are required, got {got}")]
    TooFewParticles { min: usize, got: usize },

    #[error("particle ordering violated between indices {index} and {} (gap {gap})", index + 1)]
    Ordering { index: usize, gap: f64 },

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("queue exhausted at t = {t}: {crossed} of {queue} queuing particles entered the domain")]
    QueueUnderflow { t: f64, crossed: usize, queue: usize },

    #[error("turning point collided with particle {particle} at t = {t}")]
    TurningPointCollision { t: f64, particle: usize },

    #[error("CFL condition violated: courant number {0}")]
    Cfl(f64),

    #[error("flux is not concave on [{0}, {1}]")]
    NonConcaveFlux(f64, f64),

    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("io error: {0}")]
    Io(String),

    #[error("scenario '{scenario}': {source}")]
    Scenario { scenario: String, source: Box<Error> },
}

impl Error {
    pub fn in_scenario(self, scenario: &str) -> Self {
        match self {
            Error::Scenario { .. } => self,
            other => Error::Scenario {
                scenario: scenario.into(),
                source: Box::new(other),
            },
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(vec![e.to_string()])
    }
}

pub type Result<T> = std::result::Result<T, Error>;
