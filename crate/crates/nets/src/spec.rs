//! Architecture descriptions and feature-extraction truncation points.

use crate::error::{NetError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Surrogate and target families. Surrogates are attacked through their
/// shallow stages; targets exist to be evaluated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "simplified-resnet18")]
    SimplifiedResnet18,
    #[serde(rename = "vgg-slim")]
    VggSlim,
    #[serde(rename = "senet-slim")]
    SenetSlim,
    #[serde(rename = "resnet20-target")]
    Resnet20Target,
    #[serde(rename = "vgg11-target")]
    Vgg11Target,
    #[serde(rename = "mobilenet-lite-target")]
    MobilenetLiteTarget,
}

impl FromStr for Family {
    type Err = NetError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simplified-resnet18" => Family::SimplifiedResnet18,
            "vgg-slim" => Family::VggSlim,
            "senet-slim" => Family::SenetSlim,
            "resnet20-target" => Family::Resnet20Target,
            "vgg11-target" => Family::Vgg11Target,
            "mobilenet-lite-target" => Family::MobilenetLiteTarget,
            other => return Err(NetError::UnknownFamily(other.to_string())),
        })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::SimplifiedResnet18 => "simplified-resnet18",
            Family::VggSlim => "vgg-slim",
            Family::SenetSlim => "senet-slim",
            Family::Resnet20Target => "resnet20-target",
            Family::Vgg11Target => "vgg11-target",
            Family::MobilenetLiteTarget => "mobilenet-lite-target",
        };
        f.write_str(s)
    }
}

/// Input stem variant: 3x3/stride-1 for 32px inputs, 7x7/stride-2 plus a
/// 3x3/stride-2 max pool for 224px inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StemKind {
    #[serde(rename = "conv3x3")]
    Conv3x3,
    #[serde(rename = "conv7x7-pool")]
    Conv7x7Pool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub family: Family,
    /// Input dims (C, H, W).
    pub input: (usize, usize, usize),
    pub num_classes: usize,
    pub stem: StemKind,
    /// Base stage width; stages use [w, 2w, 4w, 8w] (resnet20: [w, 2w, 4w]).
    pub width_base: usize,
}

impl NetworkSpec {
    pub fn new(family: Family, input: (usize, usize, usize), num_classes: usize, width_base: usize) -> Result<Self> {
        let stem = if input.1 >= 64 { StemKind::Conv7x7Pool } else { StemKind::Conv3x3 };
        let s = Self { family, input, num_classes, stem, width_base };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_base == 0 {
            return Err(NetError::InvalidSpec("width_base must be positive".into()));
        }
        if self.num_classes == 0 {
            return Err(NetError::InvalidSpec("num_classes must be positive".into()));
        }
        let (c, h, w) = self.input;
        if c == 0 || h < 8 || w < 8 {
            return Err(NetError::InvalidSpec(format!("input dims too small: {:?}", self.input)));
        }
        Ok(())
    }

    /// Stable fingerprint over the canonical JSON encoding.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("spec serializes");
        tensorcore::hash::fnv1a64(&json)
    }

    pub fn stage_widths(&self) -> Vec<usize> {
        let w = self.width_base;
        match self.family {
            Family::Resnet20Target => vec![w, 2 * w, 4 * w],
            _ => vec![w, 2 * w, 4 * w, 8 * w],
        }
    }
}

/// Where to cut the network when extracting features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TruncationPoint {
    #[serde(rename = "stem")]
    Stem,
    #[serde(rename = "block1")]
    Block1,
    #[serde(rename = "block2")]
    Block2,
    #[serde(rename = "block3")]
    Block3,
    #[serde(rename = "block4")]
    Block4,
    #[serde(rename = "pool")]
    Pool,
    #[serde(rename = "fc")]
    Fc,
}

impl TruncationPoint {
    pub const ALL: [TruncationPoint; 7] = [
        TruncationPoint::Stem,
        TruncationPoint::Block1,
        TruncationPoint::Block2,
        TruncationPoint::Block3,
        TruncationPoint::Block4,
        TruncationPoint::Pool,
        TruncationPoint::Fc,
    ];

    /// Position of this cut in the stage order; `fc` is the full depth L.
    pub fn ordinal(&self) -> usize {
        Self::ALL.iter().position(|t| t == self).unwrap()
    }

    pub fn is_final(&self) -> bool {
        matches!(self, TruncationPoint::Fc)
    }
}

impl FromStr for TruncationPoint {
    type Err = NetError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "stem" => TruncationPoint::Stem,
            "block1" => TruncationPoint::Block1,
            "block2" => TruncationPoint::Block2,
            "block3" => TruncationPoint::Block3,
            "block4" => TruncationPoint::Block4,
            "pool" => TruncationPoint::Pool,
            "fc" => TruncationPoint::Fc,
            other => return Err(NetError::InvalidTruncation(other.to_string())),
        })
    }
}

impl fmt::Display for TruncationPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TruncationPoint::Stem => "stem",
            TruncationPoint::Block1 => "block1",
            TruncationPoint::Block2 => "block2",
            TruncationPoint::Block3 => "block3",
            TruncationPoint::Block4 => "block4",
            TruncationPoint::Pool => "pool",
            TruncationPoint::Fc => "fc",
        };
        f.write_str(s)
    }
}
