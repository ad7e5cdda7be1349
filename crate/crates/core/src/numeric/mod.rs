//! Dense f64 arrays, a tape-based reverse-mode engine, and Adam.
//!
//! Single-threaded per tape; distinct model instances can train on
//! independent threads since nothing here holds global state.

pub mod gradcheck;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_fn, numeric_grads, rel_error};
pub use optim::{Adam, AdamConfig};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
