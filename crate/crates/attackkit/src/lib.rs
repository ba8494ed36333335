//! Adversarial example generation: projections, the four step rules, the
//! deep/shallow/etf loss surfaces, the error-transform inner maximizer and
//! its hidden-layer variant, and adversarial set archives.

pub mod archive;
pub mod attack;
pub mod config;
pub mod error;
pub mod etf;
pub mod guide;
pub mod project;
pub mod surfaces;

pub use archive::{load_archive, save_archive, ArchiveManifest, ExampleRecord};
pub use attack::{run_attack, run_attack_with, AttackBatch, AttackOutcome, InnerSpace, StepTrace};
pub use config::{
    l2_eps_for, AttackConfig, FeatureMetric, GuideStrategy, LossSurface, NormKind, StepMethod,
};
pub use error::{AttackError, Result};
pub use etf::{etf_inner_max, sites_for, weight_space_inner_max, InnerOutcome};
pub use guide::{select_guide, select_guides};
pub use project::{ball_violation, box_violation, project, project_delta};
