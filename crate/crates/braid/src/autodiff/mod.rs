//! Reverse-mode automatic differentiation over dense 2-D f64 arrays.
//!
//! Small by intent: just enough machinery to train the concept-alignment
//! modules and the prototype network, expose per-group gradient norms, and
//! stay bit-deterministic on a single thread.

pub mod mat;
pub mod optim;
pub mod param;
pub mod tape;

pub use mat::Mat;
pub use optim::AdamW;
pub use param::{grad_norm_over, PTensor, ParameterGroup};
pub use tape::{Tape, TensorId};
