//! Dense matrices, a define-by-run reverse-mode tape, and optimizers.

mod matrix;
mod optim;
mod tape;

pub use matrix::Matrix;
pub(crate) use matrix::softmax_in_place;
pub use optim::{sgd_step, AdamConfig, Optimizer, Parameter};
pub use tape::{Tape, Var, PROB_FLOOR};
