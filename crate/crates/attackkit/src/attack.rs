//! The outer attack loop: T projected steps over a batch of instances,
//! with PGD/MI/DI/TI step rules and the deep/shallow/etf loss surfaces.

use crate::config::{AttackConfig, LossSurface, StepMethod};
use crate::error::{AttackError, Result};
use crate::etf::{etf_inner_max, perturbed_guide_features, sites_for, weight_space_inner_max};
use crate::project::{ball_violation, box_violation, project};
use crate::surfaces::{ce_values_per_instance, deep_loss, metric_loss, metric_values_per_instance};
use nets::{EvalOptions, FeatureSite, Model, TruncationPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorcore::{hash, kernels, Tape, Tensor, Var};

/// A batch of attack instances: sources, their labels, chosen guides.
#[derive(Debug, Clone)]
pub struct AttackBatch {
    pub sources: Tensor,
    pub labels: Option<Vec<u32>>,
    pub guides: Option<Tensor>,
    /// Source-pool indices (bookkeeping for archives and rng streams).
    pub source_indices: Vec<u32>,
    pub guide_indices: Option<Vec<u32>>,
}

impl AttackBatch {
    pub fn len(&self) -> usize {
        self.sources.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Result<AttackBatch> {
        let (c, h, w) = {
            let s = self.sources.shape();
            (s[1], s[2], s[3])
        };
        let chw = c * h * w;
        let take = |t: &Tensor| -> Result<Tensor> {
            Ok(Tensor::new(
                vec![range.len(), c, h, w],
                t.data()[range.start * chw..range.end * chw].to_vec(),
            )?)
        };
        Ok(AttackBatch {
            sources: take(&self.sources)?,
            labels: self.labels.as_ref().map(|l| l[range.clone()].to_vec()),
            guides: self.guides.as_ref().map(take).transpose()?,
            source_indices: self.source_indices[range.clone()].to_vec(),
            guide_indices: self.guide_indices.as_ref().map(|g| g[range.clone()].to_vec()),
        })
    }
}

/// Per-outer-step record: batch objective, inner trace endpoints, and the
/// worst constraint violations measured after projection.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub objective: f32,
    pub inner_initial: Option<f32>,
    pub inner_final: Option<f32>,
    pub max_eps_violation: f32,
    pub max_box_violation: f32,
    pub max_tau_violation: f32,
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub x_adv: Tensor,
    pub steps: Vec<StepTrace>,
    /// Plain objective (metric or cross-entropy) per instance at the result.
    pub final_objectives: Vec<f32>,
}

/// Internal variant switch: the weight-space inner max is the Table-style
/// ablation counterpart of the feature-space etf surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSpace {
    Feature,
    Weight,
}

/// Run the configured attack over a batch; instances are processed in
/// chunks of `cfg.batch_size` with per-instance rng streams keyed by the
/// global source index, so chunking does not change results.
pub fn run_attack(model: &Model, batch: &AttackBatch, cfg: &AttackConfig) -> Result<AttackOutcome> {
    run_attack_with(model, batch, cfg, InnerSpace::Feature)
}

pub fn run_attack_with(
    model: &Model,
    batch: &AttackBatch,
    cfg: &AttackConfig,
    inner_space: InnerSpace,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(AttackError::InvalidConfig("empty attack batch".into()));
    }
    match cfg.surface {
        LossSurface::Deep => {
            if batch.labels.is_none() {
                return Err(AttackError::MissingLabels);
            }
        }
        _ => {
            if batch.guides.is_none() {
                return Err(AttackError::InvalidConfig("feature surfaces need guide images".into()));
            }
        }
    }

    let n = batch.len();
    let mut x_adv = Tensor::zeros(batch.sources.shape().to_vec());
    let mut final_objectives = vec![0f32; n];
    let mut merged_steps: Vec<StepTrace> = Vec::new();
    let chw: usize = batch.sources.shape()[1..].iter().product();

    let mut start = 0usize;
    while start < n {
        let end = (start + cfg.batch_size).min(n);
        let chunk = batch.slice(start..end)?;
        let out = attack_chunk(model, &chunk, cfg, inner_space)?;
        x_adv.data_mut()[start * chw..end * chw].copy_from_slice(out.x_adv.data());
        final_objectives[start..end].copy_from_slice(&out.final_objectives);
        if merged_steps.is_empty() {
            merged_steps = out.steps;
        } else {
            for (m, s) in merged_steps.iter_mut().zip(out.steps) {
                let (wa, wb) = ((start) as f32, (end - start) as f32);
                m.objective = (m.objective * wa + s.objective * wb) / (wa + wb);
                m.max_eps_violation = m.max_eps_violation.max(s.max_eps_violation);
                m.max_box_violation = m.max_box_violation.max(s.max_box_violation);
                m.max_tau_violation = m.max_tau_violation.max(s.max_tau_violation);
                m.inner_initial = match (m.inner_initial, s.inner_initial) {
                    (Some(a), Some(b)) => Some((a * wa + b * wb) / (wa + wb)),
                    (a, b) => a.or(b),
                };
                m.inner_final = match (m.inner_final, s.inner_final) {
                    (Some(a), Some(b)) => Some((a * wa + b * wb) / (wa + wb)),
                    (a, b) => a.or(b),
                };
            }
        }
        start = end;
    }
    Ok(AttackOutcome { x_adv, steps: merged_steps, final_objectives })
}

#[inline]
fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn attack_chunk(
    model: &Model,
    batch: &AttackBatch,
    cfg: &AttackConfig,
    inner_space: InnerSpace,
) -> Result<AttackOutcome> {
    let b = batch.len();
    let (c, h, w) = {
        let s = batch.sources.shape();
        (s[1], s[2], s[3])
    };
    let chw = c * h * w;
    let alpha = cfg.alpha();
    let use_inner = cfg.surface.uses_inner_max() && cfg.tau() > 0.0;
    let sites = sites_for(model, cfg.surface, cfg.truncation);

    // eps = 0 is exactly the identity (no random start).
    if cfg.eps == 0.0 {
        let finals = final_objective(model, batch, cfg, &batch.sources)?;
        return Ok(AttackOutcome { x_adv: batch.sources.clone(), steps: Vec::new(), final_objectives: finals });
    }

    // Frozen per-run quantities.
    let anchor = if needs_anchor(cfg) {
        Some(eval_features(model, cfg.truncation, &batch.sources)?)
    } else {
        None
    };
    let guide_phi_frozen = match (cfg.surface, batch.guides.as_ref()) {
        (LossSurface::Shallow, Some(g)) => Some(eval_features(model, cfg.truncation, g)?),
        (LossSurface::Etf | LossSurface::EtfAll, Some(g)) if !use_inner && inner_space == InnerSpace::Feature => {
            // tau = 0: the etf trajectory must be bit-identical to shallow.
            Some(eval_features(model, cfg.truncation, g)?)
        }
        _ => None,
    };

    let ti_kernel = kernels::gaussian_kernel(cfg.ti_kernel_size, cfg.ti_sigma);
    let mut x = batch.sources.clone();
    let mut momentum = vec![0f32; b * chw];
    let mut steps = Vec::with_capacity(cfg.steps);

    for t in 0..cfg.steps {
        // (a) inner maximization, fresh from zero
        let mut inner_initial = None;
        let mut inner_final = None;
        let mut max_tau_violation = 0f32;
        let mut pert_sites: Vec<(FeatureSite, Tensor)> = Vec::new();
        let mut guide_target: Option<Tensor> = guide_phi_frozen.clone();
        let mut weight_delta: Option<Tensor> = None;
        if use_inner {
            match inner_space {
                InnerSpace::Feature => {
                    let inner = etf_inner_max(
                        model,
                        cfg,
                        &x,
                        batch.guides.as_ref().unwrap(),
                        anchor.as_ref(),
                        &sites,
                    )?;
                    inner_initial = inner.trace.first().copied();
                    inner_final = inner.trace.last().copied();
                    for (_, d) in inner.deltas_s.iter().chain(inner.deltas_g.iter()) {
                        let per = d.numel() / b;
                        for i in 0..b {
                            let slice = &d.data()[i * per..(i + 1) * per];
                            let v = delta_violation(slice, cfg);
                            if v > max_tau_violation {
                                max_tau_violation = v;
                            }
                        }
                    }
                    guide_target = Some(perturbed_guide_features(
                        model,
                        cfg,
                        batch.guides.as_ref().unwrap(),
                        &inner.deltas_g,
                    )?);
                    pert_sites = inner.deltas_s;
                }
                InnerSpace::Weight => {
                    let (dw, trace) =
                        weight_space_inner_max(model, cfg, &x, batch.guides.as_ref().unwrap(), anchor.as_ref())?;
                    inner_initial = trace.first().copied();
                    inner_final = trace.last().copied();
                    guide_target = Some(weight_perturbed_features(
                        model,
                        cfg,
                        batch.guides.as_ref().unwrap(),
                        &dw,
                    )?);
                    weight_delta = Some(dw);
                }
            }
        } else if cfg.surface.uses_inner_max() && inner_space == InnerSpace::Weight {
            guide_target = Some(eval_features(model, cfg.truncation, batch.guides.as_ref().unwrap())?);
        }

        // (b) outer gradient of the surface w.r.t. x'
        let mut tape = Tape::new();
        let x_leaf = tape.leaf(x.clone(), true);
        let plans = di_plans(cfg, &batch.source_indices, t, h, w);
        let input = match &plans {
            Some(p) => tape.resize_pad(x_leaf, p.clone())?,
            None => x_leaf,
        };
        let (obj_var, direction) = match cfg.surface {
            LossSurface::Deep => {
                let logits = model.forward_eval(&mut tape, input, &EvalOptions::default())?;
                (deep_loss(&mut tape, logits, batch.labels.as_ref().unwrap())?, 1.0f32)
            }
            _ => {
                let phi_x = if let Some(dw) = &weight_delta {
                    let dwv = tape.constant(dw.clone());
                    model.forward_eval(
                        &mut tape,
                        input,
                        &EvalOptions {
                            truncation: Some(cfg.truncation),
                            first_weight_delta: Some(dwv),
                            ..Default::default()
                        },
                    )?
                } else if pert_sites.is_empty() {
                    model.forward_features(&mut tape, input, cfg.truncation)?
                } else {
                    let vars: Vec<(FeatureSite, Var)> =
                        pert_sites.iter().map(|(s, d)| (*s, tape.constant(d.clone()))).collect();
                    model.forward_eval(
                        &mut tape,
                        input,
                        &EvalOptions {
                            truncation: Some(cfg.truncation),
                            perturbations: vars,
                            ..Default::default()
                        },
                    )?
                };
                let target = tape.constant(guide_target.clone().expect("guide features"));
                let anchor_var = anchor.as_ref().map(|a| tape.constant(a.clone()));
                (metric_loss(&mut tape, cfg.metric, phi_x, target, anchor_var)?, -1.0f32)
            }
        };
        let objective = tape.value(obj_var).item()?;
        if !objective.is_finite() {
            return Err(AttackError::NonFiniteGradient { step: t });
        }
        tape.backward(obj_var)?;
        let mut grad = tape.grad(x_leaf).expect("input grad").to_vec();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(AttackError::NonFiniteGradient { step: t });
        }

        // TI smooths the input gradient with the Gaussian kernel.
        if cfg.method == StepMethod::Ti {
            grad = kernels::depthwise_blur(
                tensorcore::Parallelism::auto(),
                &grad,
                &ti_kernel,
                b,
                c,
                h,
                w,
                cfg.ti_kernel_size,
            );
        }

        // (c) per-instance step + projection
        let mut max_eps_violation = 0f32;
        let mut max_box_violation = 0f32;
        for i in 0..b {
            let g = &grad[i * chw..(i + 1) * chw];
            let xi = &mut x.data_mut()[i * chw..(i + 1) * chw];
            let src = &batch.sources.data()[i * chw..(i + 1) * chw];
            match cfg.method {
                StepMethod::Mi => {
                    let m = &mut momentum[i * chw..(i + 1) * chw];
                    let l1 = kernels::sum(&g.iter().map(|v| v.abs()).collect::<Vec<_>>());
                    let inv = if l1 > 0.0 { 1.0 / l1 } else { 0.0 };
                    for (mj, gj) in m.iter_mut().zip(g) {
                        *mj = cfg.mi_decay * *mj + direction * gj * inv;
                    }
                    for (xj, mj) in xi.iter_mut().zip(m.iter()) {
                        *xj += alpha * sign(*mj);
                    }
                }
                _ => {
                    for (xj, gj) in xi.iter_mut().zip(g) {
                        *xj += alpha * sign(direction * *gj);
                    }
                }
            }
            project(xi, src, cfg.eps, cfg.norm);
            let ev = ball_violation(xi, src, cfg.eps, cfg.norm);
            let bv = box_violation(xi);
            if ev > max_eps_violation {
                max_eps_violation = ev;
            }
            if bv > max_box_violation {
                max_box_violation = bv;
            }
        }

        steps.push(StepTrace {
            objective,
            inner_initial,
            inner_final,
            max_eps_violation,
            max_box_violation,
            max_tau_violation,
        });
    }

    let finals = final_objective(model, batch, cfg, &x)?;
    Ok(AttackOutcome { x_adv: x, steps, final_objectives: finals })
}

fn needs_anchor(cfg: &AttackConfig) -> bool {
    !matches!(cfg.surface, LossSurface::Deep)
        && cfg.metric == crate::config::FeatureMetric::ContrastiveCos
}

fn eval_features(model: &Model, at: TruncationPoint, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let f = model.forward_features(&mut tape, xv, at)?;
    Ok(tape.value(f).clone())
}

fn weight_perturbed_features(model: &Model, cfg: &AttackConfig, x: &Tensor, dw: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let dwv = tape.constant(dw.clone());
    let f = model.forward_eval(
        &mut tape,
        xv,
        &EvalOptions { truncation: Some(cfg.truncation), first_weight_delta: Some(dwv), ..Default::default() },
    )?;
    Ok(tape.value(f).clone())
}

fn delta_violation(delta: &[f32], cfg: &AttackConfig) -> f32 {
    let tau = cfg.tau();
    match cfg.norm {
        crate::config::NormKind::Linf => {
            delta.iter().map(|d| (d.abs() - tau).max(0.0)).fold(0.0, f32::max)
        }
        crate::config::NormKind::L2 => (kernels::dot(delta, delta).sqrt() - tau).max(0.0),
    }
}

/// Per-instance DI transform plans for outer step `t`; `None` when the
/// method is not DI or no instance drew the transform.
fn di_plans(
    cfg: &AttackConfig,
    source_indices: &[u32],
    t: usize,
    h: usize,
    w: usize,
) -> Option<Vec<tensorcore::ResizePlan>> {
    if cfg.method != StepMethod::Di || cfg.di_prob == 0.0 {
        return None;
    }
    let mut any = false;
    let plans: Vec<tensorcore::ResizePlan> = source_indices
        .iter()
        .map(|&idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(hash::derive_seed(
                cfg.seed,
                "di",
                &[idx as u64, t as u64],
            ));
            if rng.random_range(0.0f32..1.0) >= cfg.di_prob {
                return tensorcore::ResizePlan::identity();
            }
            any = true;
            let scale = rng.random_range(cfg.di_scale.0..=cfg.di_scale.1);
            let rh = ((h as f32 * scale).round() as usize).clamp(1, h);
            let rw = ((w as f32 * scale).round() as usize).clamp(1, w);
            let oy = if rh < h { rng.random_range(0..=(h - rh)) } else { 0 };
            let ox = if rw < w { rng.random_range(0..=(w - rw)) } else { 0 };
            tensorcore::ResizePlan { identity: rh == h && rw == w && oy == 0 && ox == 0, rh, rw, oy, ox }
        })
        .collect();
    if any {
        Some(plans)
    } else {
        None
    }
}

/// Plain objective per instance at the final iterate (archive records):
/// metric distance for feature surfaces, cross-entropy for deep.
fn final_objective(model: &Model, batch: &AttackBatch, cfg: &AttackConfig, x: &Tensor) -> Result<Vec<f32>> {
    match cfg.surface {
        LossSurface::Deep => {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let logits = model.forward_eval(&mut tape, xv, &EvalOptions::default())?;
            Ok(ce_values_per_instance(tape.value(logits), batch.labels.as_ref().unwrap()))
        }
        _ => {
            let phi_x = eval_features(model, cfg.truncation, x)?;
            let phi_g = eval_features(model, cfg.truncation, batch.guides.as_ref().unwrap())?;
            let anchor = if needs_anchor(cfg) {
                Some(eval_features(model, cfg.truncation, &batch.sources)?)
            } else {
                None
            };
            Ok(metric_values_per_instance(cfg.metric, &phi_x, &phi_g, anchor.as_ref()))
        }
    }
}
