//! Central finite-difference verification of reverse-mode gradients.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Max coordinates probed per tensor; large tensors are strided down.
pub const MAX_PROBES: usize = 64;

/// Outcome of a finite-difference probe.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub max_rel_err: f32,
    pub probes: usize,
}

/// Compare the analytic gradient of `f` at `x` against central finite
/// differences with step `h`.
///
/// `f` receives a fresh tape and the input as a differentiable leaf and must
/// return a scalar output var. The relative error per coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`; the maximum
/// over probed coordinates is returned. A non-finite evaluation yields
/// `+inf`. At most [`MAX_PROBES`] evenly spaced coordinates are probed.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f32) -> FdReport
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    finite_difference_check_with(f, x, h, 1e-8)
}

/// [`finite_difference_check`] with an explicit denominator floor.
///
/// An f32 central difference cannot resolve sensitivities below
/// `ulp(|f|) / (2h)`; callers probing large functions (a full network
/// forward) pass a floor derived from [`fd_noise_floor`] so coordinates
/// whose true gradient drowns in evaluation rounding do not register as
/// spurious mismatches.
pub fn finite_difference_check_with<F>(f: F, x: &Tensor, h: f32, denom_floor: f32) -> FdReport
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let analytic = match analytic_grad(&f, x) {
        Ok(g) => g,
        Err(_) => return FdReport { max_rel_err: f32::INFINITY, probes: 0 },
    };
    let n = x.numel();
    let stride = n.div_ceil(MAX_PROBES).max(1);
    let mut max_rel = 0f32;
    let mut probes = 0usize;
    let mut xp = x.clone();
    for i in (0..n).step_by(stride) {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + h;
        let fp = match eval(&f, &xp) {
            Ok(v) => v,
            Err(_) => return FdReport { max_rel_err: f32::INFINITY, probes },
        };
        xp.data_mut()[i] = orig - h;
        let fm = match eval(&f, &xp) {
            Ok(v) => v,
            Err(_) => return FdReport { max_rel_err: f32::INFINITY, probes },
        };
        xp.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return FdReport { max_rel_err: f32::INFINITY, probes };
        }
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(denom_floor);
        if rel > max_rel {
            max_rel = rel;
        }
        probes += 1;
    }
    FdReport { max_rel_err: max_rel, probes }
}

/// Smallest gradient magnitude an f32 central difference of a function of
/// magnitude `f_mag` can certify to relative tolerance `tol` at step `h`.
/// The evaluations carry a few ulps of accumulated rounding beyond the final
/// store, covered by the factor of 8.
pub fn fd_noise_floor(f_mag: f32, h: f32, tol: f32) -> f32 {
    (8.0 * f32::EPSILON * f_mag.abs().max(1.0)) / (2.0 * h * tol)
}

fn eval<F>(f: &F, x: &Tensor) -> Result<f32>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), false);
    let out = f(&mut tape, xv)?;
    tape.value(out).item()
}

fn analytic_grad<F>(f: &F, x: &Tensor) -> Result<Vec<f32>>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let out = f(&mut tape, xv)?;
    tape.backward(out)?;
    Ok(tape.grad(xv).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; x.numel()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_quadratically_exact() {
        // Central differences are exact for quadratics; the residual is the
        // f32 rounding floor of the loss values (~8e-5 at h=1e-3 here).
        let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let rep = finite_difference_check(
            |t, v| {
                let sq = t.mul(v, v)?;
                t.sum(sq)
            },
            &x,
            1e-3,
        );
        assert!(rep.max_rel_err < 1e-4, "rel err {}", rep.max_rel_err);
        assert_eq!(rep.probes, 3);

        // With a step that clears the rounding floor the error collapses.
        let rep = finite_difference_check(
            |t, v| {
                let sq = t.mul(v, v)?;
                t.sum(sq)
            },
            &x,
            5e-2,
        );
        assert!(rep.max_rel_err < 1e-5, "rel err {}", rep.max_rel_err);
    }

    #[test]
    fn relu_sum_away_from_kink() {
        let x = Tensor::new(vec![4], vec![0.5, -0.7, 1.3, -2.0]).unwrap();
        let rep = finite_difference_check(
            |t, v| {
                let r = t.relu(v)?;
                t.sum(r)
            },
            &x,
            1e-3,
        );
        assert!(rep.max_rel_err < 1e-4, "rel err {}", rep.max_rel_err);
    }

    #[test]
    fn nan_yields_infinite_error() {
        let x = Tensor::new(vec![2], vec![f32::NAN, 1.0]).unwrap();
        let rep = finite_difference_check(|t, v| t.sum(v), &x, 1e-3);
        assert!(rep.max_rel_err.is_infinite());
    }
}
