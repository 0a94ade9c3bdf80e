use vls_core::atomprops::AtomError;
use vls_core::protocols::ProtocolError;
use vls_core::ramsey::FitError;
use vls_core::spinmix::SpinMixError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Degenerate(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Config(m) => CliError::Config(m),
            e if e.is_phase_degenerate() => CliError::Degenerate(e.to_string()),
            FitError::TooFewPoints { .. } | FitError::NotAnEllipse { .. } => CliError::Degenerate(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Plan(m) | ProtocolError::Input(m) => CliError::Config(m),
            ProtocolError::RankDeficient(_) | ProtocolError::Degenerate(_) => CliError::Degenerate(e.to_string()),
            ProtocolError::Fit(f) => f.into(),
            ProtocolError::Physics(m) => CliError::Numerical(m),
        }
    }
}

impl From<AtomError> for CliError {
    fn from(e: AtomError) -> Self {
        match e {
            AtomError::Resonant(_) => CliError::Numerical(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<SpinMixError> for CliError {
    fn from(e: SpinMixError) -> Self {
        match e {
            SpinMixError::StepFailure { .. } => CliError::Numerical(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}
