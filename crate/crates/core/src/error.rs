use crate::{atomprops::AtomError, polopt::PolError, protocols::ProtocolError, ramsey::FitError};
use crate::{spinmix::SpinMixError, trapfield::TrapError};

/// Union of the module errors, for callers that drive several stages.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Polarization(#[from] PolError),
    #[error(transparent)]
    Trap(#[from] TrapError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    SpinMix(#[from] SpinMixError),
    #[error("invalid input: {0}")]
    Input(String),
}
