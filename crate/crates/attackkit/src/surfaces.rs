//! The three loss surfaces: logits cross-entropy (deep), frozen-guide
//! feature distance (shallow), and the same distance under the worst inner
//! perturbation (etf, built on top of these pieces).

use crate::config::{FeatureMetric, METRIC_TEMPERATURE};
use crate::error::Result;
use tensorcore::{Tape, Tensor, Var};

/// View a (B, ...) tensor as (B, D) rows.
pub(crate) fn rows(tape: &mut Tape, v: Var) -> Result<Var> {
    let shape = tape.value(v).shape().to_vec();
    let b = shape[0];
    let d: usize = shape[1..].iter().product();
    Ok(tape.reshape(v, vec![b, d])?)
}

/// Cross-entropy of the surrogate logits at the source labels; ascend to
/// attack (untargeted).
pub fn deep_loss(tape: &mut Tape, logits: Var, labels: &[u32]) -> Result<Var> {
    Ok(tape.softmax_cross_entropy(logits, labels)?)
}

/// Feature distance d between the iterate's features and the target's.
///
/// `mse` is the plain mean square error. `contrastive-cos` scores the
/// target as positive against the frozen source-features anchor as
/// negative: -log softmax over {cos(x', target)/t, cos(x', anchor)/t}.
/// Minimizing either pulls the iterate's features toward the target.
pub fn metric_loss(
    tape: &mut Tape,
    metric: FeatureMetric,
    phi_x: Var,
    phi_target: Var,
    anchor: Option<Var>,
) -> Result<Var> {
    match metric {
        FeatureMetric::Mse => Ok(tape.mse(phi_target, phi_x)?),
        FeatureMetric::ContrastiveCos => {
            let anchor = anchor.expect("contrastive metric needs the frozen source anchor");
            let zx = rows(tape, phi_x)?;
            let zt = rows(tape, phi_target)?;
            let za = rows(tape, anchor)?;
            let pos = tape.cosine_similarity(zx, zt)?;
            let neg = tape.cosine_similarity(zx, za)?;
            let logits = tape.stack_cols2(pos, neg)?;
            let scaled = tape.scale(logits, 1.0 / METRIC_TEMPERATURE)?;
            let labels = vec![0u32; tape.value(pos).numel()];
            Ok(tape.softmax_cross_entropy(scaled, &labels)?)
        }
    }
}

/// Per-instance metric values computed outside the tape (archive records).
pub fn metric_values_per_instance(
    metric: FeatureMetric,
    phi_x: &Tensor,
    phi_target: &Tensor,
    anchor: Option<&Tensor>,
) -> Vec<f32> {
    let b = phi_x.shape()[0];
    let d: usize = phi_x.shape()[1..].iter().product();
    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        let fx = &phi_x.data()[i * d..(i + 1) * d];
        let ft = &phi_target.data()[i * d..(i + 1) * d];
        match metric {
            FeatureMetric::Mse => {
                let mut acc = 0f64;
                for (a, t) in fx.iter().zip(ft) {
                    let e = (a - t) as f64;
                    acc += e * e;
                }
                out.push((acc / d as f64) as f32);
            }
            FeatureMetric::ContrastiveCos => {
                let fa = &anchor.expect("anchor required").data()[i * d..(i + 1) * d];
                let cos = |a: &[f32], b: &[f32]| {
                    let na = tensorcore::kernels::dot(a, a).sqrt().max(tensorcore::EPS_COS);
                    let nb = tensorcore::kernels::dot(b, b).sqrt().max(tensorcore::EPS_COS);
                    tensorcore::kernels::dot(a, b) / (na * nb)
                };
                let p = (cos(fx, ft) / METRIC_TEMPERATURE) as f64;
                let n = (cos(fx, fa) / METRIC_TEMPERATURE) as f64;
                let m = p.max(n);
                let lse = m + ((p - m).exp() + (n - m).exp()).ln();
                out.push((lse - p) as f32);
            }
        }
    }
    out
}

/// Per-instance cross-entropy values (deep archives).
pub fn ce_values_per_instance(logits: &Tensor, labels: &[u32]) -> Vec<f32> {
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = &logits.data()[i * c..(i + 1) * c];
        let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f32>().ln();
        out.push(lse - row[labels[i] as usize]);
    }
    out
}
