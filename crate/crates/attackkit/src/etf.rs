//! The inner maximization: represent the surrogate-vs-target parameter
//! error as bounded perturbations in the input/feature space and find the
//! worst case by sign-gradient ascent inside the tau-ball.

use crate::config::AttackConfig;
use crate::error::Result;
use crate::project::project_delta;
use crate::surfaces::metric_loss;
use nets::{EvalOptions, FeatureSite, Model, TruncationPoint};
use tensorcore::{Tape, Tensor, Var};

/// Perturbation sites for a surface: just the input for plain etf, the
/// input plus every feature stage below the cut for etf-all.
pub fn sites_for(model: &Model, surface: crate::config::LossSurface, at: TruncationPoint) -> Vec<FeatureSite> {
    match surface {
        crate::config::LossSurface::EtfAll => {
            let mut v = vec![FeatureSite::Input];
            for s in model.feature_stages() {
                if s.ordinal() < at.ordinal() {
                    v.push(FeatureSite::Stage(s));
                }
            }
            v
        }
        _ => vec![FeatureSite::Input],
    }
}

/// Result of one inner solve: per-site perturbations for the source and
/// guide streams plus the objective trace (entry k is the objective at the
/// k-th iterate, including the final one; trace.last() >= trace[0]).
pub struct InnerOutcome {
    pub deltas_s: Vec<(FeatureSite, Tensor)>,
    pub deltas_g: Vec<(FeatureSite, Tensor)>,
    pub trace: Vec<f32>,
}

fn site_shapes(model: &Model, x: &Tensor, at: TruncationPoint, sites: &[FeatureSite]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = Vec::with_capacity(sites.len());
    for site in sites {
        match site {
            FeatureSite::Input => shapes.push(x.shape().to_vec()),
            FeatureSite::Stage(s) => {
                debug_assert!(s.ordinal() < at.ordinal());
                let mut tape = Tape::new();
                let xv = tape.constant(x.clone());
                let f = model.forward_features(&mut tape, xv, *s)?;
                shapes.push(tape.value(f).shape().to_vec());
            }
        }
    }
    Ok(shapes)
}

fn signed_step_and_project(delta: &mut Tensor, grad: &[f32], beta: f32, tau: f32, cfg: &AttackConfig) {
    let b = delta.shape()[0];
    let per = delta.numel() / b;
    let data = delta.data_mut();
    for i in 0..b {
        let slice = &mut data[i * per..(i + 1) * per];
        for (d, g) in slice.iter_mut().zip(&grad[i * per..(i + 1) * per]) {
            *d += beta * sign(*g);
        }
        project_delta(slice, tau, cfg.norm);
    }
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

/// Solve the inner max from delta = 0: K steps of joint sign-gradient
/// ascent on d(phi(x_g + dg), phi(x' + ds)), each followed by projection
/// onto the tau-ball of each site's own space. If the final objective did
/// not improve on the initial one, the zero perturbation is returned, so
/// `trace.last() >= trace[0]` always holds.
pub fn etf_inner_max(
    model: &Model,
    cfg: &AttackConfig,
    x_prime: &Tensor,
    x_guide: &Tensor,
    anchor: Option<&Tensor>,
    sites: &[FeatureSite],
) -> Result<InnerOutcome> {
    let tau = cfg.tau();
    let beta = cfg.beta();
    let shapes = site_shapes(model, x_prime, cfg.truncation, sites)?;
    let mut ds: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(s.clone())).collect();
    let mut dg: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(s.clone())).collect();
    let mut trace = Vec::with_capacity(cfg.inner_steps + 1);

    if tau == 0.0 {
        // Degenerate budget: etf reduces to the shallow surface.
        let v = objective_value(model, cfg, x_prime, x_guide, anchor, sites, &ds, &dg)?;
        return Ok(InnerOutcome {
            deltas_s: sites.iter().copied().zip(ds).collect(),
            deltas_g: sites.iter().copied().zip(dg).collect(),
            trace: vec![v, v],
        });
    }

    for _ in 0..cfg.inner_steps {
        let mut tape = Tape::new();
        let xv = tape.constant(x_prime.clone());
        let gv = tape.constant(x_guide.clone());
        let ds_vars: Vec<Var> = ds.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let dg_vars: Vec<Var> = dg.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let phi_x = model.forward_eval(
            &mut tape,
            xv,
            &EvalOptions {
                truncation: Some(cfg.truncation),
                perturbations: sites.iter().copied().zip(ds_vars.iter().copied()).collect(),
                ..Default::default()
            },
        )?;
        let phi_g = model.forward_eval(
            &mut tape,
            gv,
            &EvalOptions {
                truncation: Some(cfg.truncation),
                perturbations: sites.iter().copied().zip(dg_vars.iter().copied()).collect(),
                ..Default::default()
            },
        )?;
        let anchor_var = anchor.map(|a| tape.constant(a.clone()));
        let obj = metric_loss(&mut tape, cfg.metric, phi_x, phi_g, anchor_var)?;
        trace.push(tape.value(obj).item()?);
        tape.backward(obj)?;
        for (i, (dv, gv2)) in ds_vars.iter().zip(&dg_vars).enumerate() {
            if let Some(g) = tape.grad(*dv) {
                signed_step_and_project(&mut ds[i], g, beta, tau, cfg);
            }
            if let Some(g) = tape.grad(*gv2) {
                signed_step_and_project(&mut dg[i], g, beta, tau, cfg);
            }
        }
    }
    let final_obj = objective_value(model, cfg, x_prime, x_guide, anchor, sites, &ds, &dg)?;
    trace.push(final_obj);
    if final_obj < trace[0] {
        // Ascent overshot; fall back to the zero perturbation.
        for d in ds.iter_mut().chain(dg.iter_mut()) {
            d.data_mut().fill(0.0);
        }
        let t0 = trace[0];
        trace.push(t0);
    }
    Ok(InnerOutcome {
        deltas_s: sites.iter().copied().zip(ds).collect(),
        deltas_g: sites.iter().copied().zip(dg).collect(),
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn objective_value(
    model: &Model,
    cfg: &AttackConfig,
    x_prime: &Tensor,
    x_guide: &Tensor,
    anchor: Option<&Tensor>,
    sites: &[FeatureSite],
    ds: &[Tensor],
    dg: &[Tensor],
) -> Result<f32> {
    let mut tape = Tape::new();
    let xv = tape.constant(x_prime.clone());
    let gv = tape.constant(x_guide.clone());
    let ds_vars: Vec<Var> = ds.iter().map(|t| tape.constant(t.clone())).collect();
    let dg_vars: Vec<Var> = dg.iter().map(|t| tape.constant(t.clone())).collect();
    let phi_x = model.forward_eval(
        &mut tape,
        xv,
        &EvalOptions {
            truncation: Some(cfg.truncation),
            perturbations: sites.iter().copied().zip(ds_vars).collect(),
            ..Default::default()
        },
    )?;
    let phi_g = model.forward_eval(
        &mut tape,
        gv,
        &EvalOptions {
            truncation: Some(cfg.truncation),
            perturbations: sites.iter().copied().zip(dg_vars).collect(),
            ..Default::default()
        },
    )?;
    let anchor_var = anchor.map(|a| tape.constant(a.clone()));
    let obj = metric_loss(&mut tape, cfg.metric, phi_x, phi_g, anchor_var)?;
    Ok(tape.value(obj).item()?)
}

/// Guide-stream features under the solved perturbations (outer-step target).
pub fn perturbed_guide_features(
    model: &Model,
    cfg: &AttackConfig,
    x_guide: &Tensor,
    deltas_g: &[(FeatureSite, Tensor)],
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let gv = tape.constant(x_guide.clone());
    let vars: Vec<(FeatureSite, Var)> =
        deltas_g.iter().map(|(s, t)| (*s, tape.constant(t.clone()))).collect();
    let phi = model.forward_eval(
        &mut tape,
        gv,
        &EvalOptions { truncation: Some(cfg.truncation), perturbations: vars, ..Default::default() },
    )?;
    Ok(tape.value(phi).clone())
}

/// Weight-space ablation: the inner max perturbs the first convolution's
/// weights directly by sign-gradient ascent in an l-inf ball of radius
/// `mean|w1| * (tau/eps)`, the feature path otherwise identical.
pub fn weight_space_inner_max(
    model: &Model,
    cfg: &AttackConfig,
    x_prime: &Tensor,
    x_guide: &Tensor,
    anchor: Option<&Tensor>,
) -> Result<(Tensor, Vec<f32>)> {
    let w1 = model.store.get("stem.conv.w")?;
    let mean_abs = tensorcore::kernels::sum(&w1.data().iter().map(|v| v.abs()).collect::<Vec<_>>())
        / w1.numel() as f32;
    let tau_w = mean_abs * (cfg.tau() / cfg.eps.max(1e-12));
    let beta_w = tau_w / cfg.inner_steps as f32;
    let mut dw = Tensor::zeros(w1.shape().to_vec());
    let mut trace = Vec::with_capacity(cfg.inner_steps + 1);

    for _ in 0..cfg.inner_steps {
        let mut tape = Tape::new();
        let xv = tape.constant(x_prime.clone());
        let gv = tape.constant(x_guide.clone());
        let dwv = tape.leaf(dw.clone(), true);
        let phi_x = model.forward_eval(
            &mut tape,
            xv,
            &EvalOptions {
                truncation: Some(cfg.truncation),
                first_weight_delta: Some(dwv),
                ..Default::default()
            },
        )?;
        let phi_g = model.forward_eval(
            &mut tape,
            gv,
            &EvalOptions {
                truncation: Some(cfg.truncation),
                first_weight_delta: Some(dwv),
                ..Default::default()
            },
        )?;
        let anchor_var = anchor.map(|a| tape.constant(a.clone()));
        let obj = metric_loss(&mut tape, cfg.metric, phi_x, phi_g, anchor_var)?;
        trace.push(tape.value(obj).item()?);
        tape.backward(obj)?;
        if let Some(g) = tape.grad(dwv) {
            for (d, gi) in dw.data_mut().iter_mut().zip(g) {
                *d = (*d + beta_w * sign(*gi)).clamp(-tau_w, tau_w);
            }
        }
    }
    let final_obj = weight_objective(model, cfg, x_prime, x_guide, anchor, &dw)?;
    trace.push(final_obj);
    if final_obj < trace[0] {
        dw.data_mut().fill(0.0);
        let t0 = trace[0];
        trace.push(t0);
    }
    Ok((dw, trace))
}

fn weight_objective(
    model: &Model,
    cfg: &AttackConfig,
    x_prime: &Tensor,
    x_guide: &Tensor,
    anchor: Option<&Tensor>,
    dw: &Tensor,
) -> Result<f32> {
    let mut tape = Tape::new();
    let xv = tape.constant(x_prime.clone());
    let gv = tape.constant(x_guide.clone());
    let dwv = tape.constant(dw.clone());
    let phi_x = model.forward_eval(
        &mut tape,
        xv,
        &EvalOptions { truncation: Some(cfg.truncation), first_weight_delta: Some(dwv), ..Default::default() },
    )?;
    let phi_g = model.forward_eval(
        &mut tape,
        gv,
        &EvalOptions { truncation: Some(cfg.truncation), first_weight_delta: Some(dwv), ..Default::default() },
    )?;
    let anchor_var = anchor.map(|a| tape.constant(a.clone()));
    let obj = metric_loss(&mut tape, cfg.metric, phi_x, phi_g, anchor_var)?;
    Ok(tape.value(obj).item()?)
}
