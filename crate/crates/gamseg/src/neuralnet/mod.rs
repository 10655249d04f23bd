//! Minimal dense-tensor compute core: exactly the layers the boundary
//! detector needs, with hand-derived backward passes, an Adam optimizer,
//! bit-exact checkpoints, and a finite-difference gradient checker.

mod adam;
mod checkpoint;
mod gradcheck;
pub mod layers;
mod loss;
mod model;
mod tensor;

pub use adam::{adam_update, Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader};
pub use gradcheck::grad_finite_diff_check;
pub use loss::{weighted_bce_loss_and_grad, weighted_bce_with_logits};
pub use model::{ArchitectureConfig, ForwardCache, Model};
pub use tensor::{sigmoid, softplus, Scalar, Tensor};

use std::fmt;
use std::io;

pub type NetResult<T> = Result<T, NetError>;

#[derive(Debug)]
pub enum NetError {
    ShapeMismatch(String),
    LengthMismatch { logits: usize, targets: usize },
    Io(io::Error),
    BadMagic,
    ArchitectureMismatch(String),
    Corrupt(String),
}

impl fmt::Display for NetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetError::ShapeMismatch(why) => write!(f, "shape mismatch: {why}"),
            NetError::LengthMismatch { logits, targets } => {
                write!(f, "{logits} logits vs {targets} targets")
            }
            NetError::Io(e) => write!(f, "checkpoint i/o: {e}"),
            NetError::BadMagic => write!(f, "not a checkpoint file (bad magic)"),
            NetError::ArchitectureMismatch(why) => write!(f, "architecture mismatch: {why}"),
            NetError::Corrupt(why) => write!(f, "corrupt checkpoint: {why}"),
        }
    }
}

impl std::error::Error for NetError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            NetError::Io(e) => Some(e),
            _ => None,
        }
    }
}
