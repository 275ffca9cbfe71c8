use alloc::string::String;

use crate::autodiff::AutodiffError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("light {index} points away from the camera (l_z = {lz})")]
    LightBelowHorizon { index: usize, lz: f64 },
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("{what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite {term} loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, term: &'static str },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
