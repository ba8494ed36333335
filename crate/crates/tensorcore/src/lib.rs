//! Minimal reverse-mode differentiable tensor engine.
//!
//! Supplies every primitive the surrogate networks and attack losses need:
//! im2col-lowered convolution, batch norm with train/eval modes, pooling,
//! losses and similarity metrics, plus built-in finite-difference
//! verification and SGD with momentum. Data-parallel kernels run on rayon
//! behind the `parallel` feature (default) with a bit-identical sequential
//! fallback.

pub mod error;
pub mod gradcheck;
pub mod hash;
pub mod kernels;
pub mod optim;
pub mod par;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{finite_difference_check, FdReport};
pub use par::Parallelism;
pub use tape::{ResizePlan, Tape, Var, EPS_BN, EPS_COS, EPS_L2NORM};
pub use tensor::Tensor;
