//! Reverse-mode differentiation over small dense matrices, plus the AdaMax
//! optimizer used by every trainer in the crate.

mod adamax;
mod gradcheck;
mod linalg;
mod tape;

pub use adamax::{adamax_step, AdaMaxConfig, AdaMaxState};
pub use gradcheck::{grad_check, op_suite, GradCheckReport, OpCheck, OP_NAMES};
pub use linalg::{det_with_grad, determinant, inverse, Lu, MAX_DET_DIM};
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::softmax_in_place as tape_softmax;
