//! Surrogate and target network architectures, truncated feature
//! extraction, the error-transform identity check, and checkpoint
//! persistence.

pub mod checkpoint;
pub mod error;
pub mod identity;
pub mod model;
pub mod params;
pub mod spec;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint};
pub use error::{NetError, Result};
pub use identity::{verify_error_transform_identity, IdentitySubject, LinearFirstNet};
pub use model::{BoundForward, EvalOptions, FeatureSite, Mode, Model};
pub use params::{Param, ParameterStore, StoreMeta};
pub use spec::{Family, NetworkSpec, StemKind, TruncationPoint};
