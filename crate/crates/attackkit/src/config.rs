//! Attack configuration: norms, budgets, step rules, loss surfaces.

use crate::error::{AttackError, Result};
use nets::TruncationPoint;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    #[serde(rename = "linf")]
    Linf,
    #[serde(rename = "l2")]
    L2,
}

impl FromStr for NormKind {
    type Err = AttackError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linf" => Ok(NormKind::Linf),
            "l2" => Ok(NormKind::L2),
            other => Err(AttackError::InvalidConfig(format!("unknown norm: {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepMethod {
    #[serde(rename = "pgd")]
    Pgd,
    #[serde(rename = "mi")]
    Mi,
    #[serde(rename = "di")]
    Di,
    #[serde(rename = "ti")]
    Ti,
}

impl FromStr for StepMethod {
    type Err = AttackError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgd" => Ok(StepMethod::Pgd),
            "mi" => Ok(StepMethod::Mi),
            "di" => Ok(StepMethod::Di),
            "ti" => Ok(StepMethod::Ti),
            other => Err(AttackError::InvalidConfig(format!("unknown step method: {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossSurface {
    #[serde(rename = "deep")]
    Deep,
    #[serde(rename = "shallow")]
    Shallow,
    #[serde(rename = "etf")]
    Etf,
    #[serde(rename = "etf-all")]
    EtfAll,
}

impl LossSurface {
    pub fn uses_inner_max(&self) -> bool {
        matches!(self, LossSurface::Etf | LossSurface::EtfAll)
    }
}

impl FromStr for LossSurface {
    type Err = AttackError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deep" => Ok(LossSurface::Deep),
            "shallow" => Ok(LossSurface::Shallow),
            "etf" => Ok(LossSurface::Etf),
            "etf-all" => Ok(LossSurface::EtfAll),
            other => Err(AttackError::InvalidConfig(format!("unknown loss surface: {other}"))),
        }
    }
}

/// Feature distance d. The contrastive variant scores the guide as positive
/// against the frozen source features as negative at temperature 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMetric {
    #[serde(rename = "mse")]
    Mse,
    #[serde(rename = "contrastive-cos")]
    ContrastiveCos,
}

impl FromStr for FeatureMetric {
    type Err = AttackError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(FeatureMetric::Mse),
            "contrastive-cos" => Ok(FeatureMetric::ContrastiveCos),
            other => Err(AttackError::InvalidConfig(format!("unknown feature metric: {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuideStrategy {
    #[serde(rename = "random-diff-label")]
    RandomDiffLabel,
    #[serde(rename = "feature-far")]
    FeatureFar,
}

impl FromStr for GuideStrategy {
    type Err = AttackError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-diff-label" => Ok(GuideStrategy::RandomDiffLabel),
            "feature-far" => Ok(GuideStrategy::FeatureFar),
            other => Err(AttackError::InvalidConfig(format!("unknown guide strategy: {other}"))),
        }
    }
}

/// Contrastive feature-metric temperature.
pub const METRIC_TEMPERATURE: f32 = 0.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub norm: NormKind,
    /// Outer budget in pixel units (images live in [0,1]).
    pub eps: f32,
    /// Outer iterations T.
    pub steps: usize,
    /// Outer step size; default 2*eps/T.
    pub step_size: Option<f32>,
    pub method: StepMethod,
    /// MI momentum decay.
    pub mi_decay: f32,
    /// DI transform probability and resize scale range.
    pub di_prob: f32,
    pub di_scale: (f32, f32),
    /// TI Gaussian kernel.
    pub ti_kernel_size: usize,
    pub ti_sigma: f32,
    pub surface: LossSurface,
    /// Feature-extraction cut for shallow/etf surfaces.
    pub truncation: TruncationPoint,
    pub metric: FeatureMetric,
    /// Inner budget; default eps/2.
    pub tau: Option<f32>,
    /// Inner iterations K.
    pub inner_steps: usize,
    /// Inner step size; default tau/K.
    pub inner_step_size: Option<f32>,
    pub guide: GuideStrategy,
    pub seed: u64,
    /// Instances processed per tape.
    pub batch_size: usize,
}

impl AttackConfig {
    /// Defaults for a surface and method at a given outer budget; the metric
    /// follows the surface (mse for shallow, contrastive for etf).
    pub fn new(surface: LossSurface, method: StepMethod, eps: f32) -> Self {
        let metric = match surface {
            LossSurface::Shallow => FeatureMetric::Mse,
            _ => FeatureMetric::ContrastiveCos,
        };
        Self {
            norm: NormKind::Linf,
            eps,
            steps: 50,
            step_size: None,
            method,
            mi_decay: 1.0,
            di_prob: 0.5,
            di_scale: (0.9, 1.0),
            ti_kernel_size: 7,
            ti_sigma: 3.0,
            surface,
            truncation: TruncationPoint::Block1,
            metric,
            tau: None,
            inner_steps: 5,
            inner_step_size: None,
            guide: GuideStrategy::RandomDiffLabel,
            seed: 0,
            batch_size: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps < 0.0 {
            return Err(AttackError::InvalidConfig(format!("eps must be non-negative, got {}", self.eps)));
        }
        if self.steps == 0 || self.inner_steps == 0 {
            return Err(AttackError::InvalidConfig("T and K must be >= 1".into()));
        }
        if self.tau() < 0.0 {
            return Err(AttackError::InvalidConfig(format!("tau must be non-negative, got {}", self.tau())));
        }
        if self.eps > 0.0 && self.alpha() <= 0.0 {
            return Err(AttackError::InvalidConfig("outer step size must be positive".into()));
        }
        if self.tau() > 0.0 && self.beta() <= 0.0 {
            return Err(AttackError::InvalidConfig("inner step size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.di_prob) {
            return Err(AttackError::InvalidConfig("di_prob must lie in [0,1]".into()));
        }
        if self.ti_kernel_size % 2 == 0 || self.ti_kernel_size == 0 {
            return Err(AttackError::InvalidConfig("TI kernel size must be odd".into()));
        }
        if self.di_scale.0 <= 0.0 || self.di_scale.0 > self.di_scale.1 || self.di_scale.1 > 1.0 {
            return Err(AttackError::InvalidConfig("di_scale must satisfy 0 < lo <= hi <= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(AttackError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f32 {
        self.step_size.unwrap_or(2.0 * self.eps / self.steps as f32)
    }

    pub fn tau(&self) -> f32 {
        self.tau.unwrap_or(self.eps / 2.0)
    }

    pub fn beta(&self) -> f32 {
        self.inner_step_size.unwrap_or(self.tau() / self.inner_steps as f32)
    }

    /// Stable fingerprint for archives and reports.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        tensorcore::hash::fnv1a64(&json)
    }
}

/// The l2 budget convention for appendix-style runs: 16/255 per-pixel scale
/// times sqrt(dimension count).
pub fn l2_eps_for(dims: (usize, usize, usize)) -> f32 {
    let n = (dims.0 * dims.1 * dims.2) as f32;
    (16.0 / 255.0) * n.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_step_sizes() {
        let cfg = AttackConfig::new(LossSurface::Etf, StepMethod::Pgd, 0.1);
        assert!((cfg.alpha() - 2.0 * 0.1 / 50.0).abs() < 1e-7);
        assert!((cfg.tau() - 0.05).abs() < 1e-7);
        assert!((cfg.beta() - 0.01).abs() < 1e-7);
        cfg.validate().unwrap();
    }

    #[test]
    fn surface_defaults_pick_metric() {
        assert_eq!(AttackConfig::new(LossSurface::Shallow, StepMethod::Pgd, 0.1).metric, FeatureMetric::Mse);
        assert_eq!(
            AttackConfig::new(LossSurface::Etf, StepMethod::Pgd, 0.1).metric,
            FeatureMetric::ContrastiveCos
        );
    }

    #[test]
    fn l2_budget_convention() {
        let eps = l2_eps_for((3, 32, 32));
        assert!((eps - (16.0 / 255.0) * (3072f32).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn zero_eps_is_valid_identity_budget() {
        let cfg = AttackConfig::new(LossSurface::Deep, StepMethod::Pgd, 0.0);
        cfg.validate().unwrap();
    }
}
