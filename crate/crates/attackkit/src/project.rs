//! Projection operators for the outer (pixel) and inner (feature) balls.

use crate::config::NormKind;
use tensorcore::kernels;

/// Project an iterate onto the eps-ball around its source, then the [0,1]
/// box. Operates on one instance's flat buffer.
pub fn project(x: &mut [f32], source: &[f32], eps: f32, norm: NormKind) {
    debug_assert_eq!(x.len(), source.len());
    match norm {
        NormKind::Linf => {
            for (xi, si) in x.iter_mut().zip(source) {
                *xi = xi.min(si + eps).max(si - eps).clamp(0.0, 1.0);
            }
        }
        NormKind::L2 => {
            let mut diff: Vec<f32> = x.iter().zip(source).map(|(a, b)| a - b).collect();
            let n2 = kernels::dot(&diff, &diff).sqrt();
            if n2 > eps && n2 > 0.0 {
                let scale = eps / n2;
                for d in diff.iter_mut() {
                    *d *= scale;
                }
            }
            for ((xi, si), di) in x.iter_mut().zip(source).zip(&diff) {
                *xi = (si + di).clamp(0.0, 1.0);
            }
        }
    }
}

/// Project a perturbation onto the tau-ball (no box constraint: deltas live
/// in feature/input perturbation space).
pub fn project_delta(delta: &mut [f32], tau: f32, norm: NormKind) {
    match norm {
        NormKind::Linf => {
            for d in delta.iter_mut() {
                *d = d.clamp(-tau, tau);
            }
        }
        NormKind::L2 => {
            let n2 = kernels::dot(delta, delta).sqrt();
            if n2 > tau && n2 > 0.0 {
                let scale = tau / n2;
                for d in delta.iter_mut() {
                    *d *= scale;
                }
            }
        }
    }
}

/// Max violation of the eps-ball across an instance (0 when inside).
pub fn ball_violation(x: &[f32], source: &[f32], eps: f32, norm: NormKind) -> f32 {
    match norm {
        NormKind::Linf => x
            .iter()
            .zip(source)
            .map(|(a, b)| ((a - b).abs() - eps).max(0.0))
            .fold(0.0, f32::max),
        NormKind::L2 => {
            let diff: Vec<f32> = x.iter().zip(source).map(|(a, b)| a - b).collect();
            (kernels::dot(&diff, &diff).sqrt() - eps).max(0.0)
        }
    }
}

/// Max distance outside the [0,1] box.
pub fn box_violation(x: &[f32]) -> f32 {
    x.iter().map(|v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f32::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_inside_ball() {
        let source = vec![0.2f32, 0.5, 0.8];
        let mut x = source.clone();
        project(&mut x, &source, 0.1, NormKind::Linf);
        assert_eq!(x, source);
        project(&mut x, &source, 0.1, NormKind::L2);
        assert_eq!(x, source);
    }

    #[test]
    fn linf_overshoot_clamps_to_face() {
        let source = vec![0.5f32, 0.5];
        let mut x = vec![0.65f32, 0.5]; // exceeds by 0.05 at eps=0.1
        project(&mut x, &source, 0.1, NormKind::Linf);
        assert!((x[0] - 0.6).abs() < 1e-7);
        assert_eq!(x[1], 0.5);
    }

    #[test]
    fn l2_overshoot_lands_on_sphere() {
        let source = vec![0.5f32; 16];
        let mut x: Vec<f32> = (0..16).map(|i| 0.5 + 0.3 * ((i % 3) as f32 - 1.0)).collect();
        let tau = 0.2;
        let mut delta: Vec<f32> = x.iter().zip(&source).map(|(a, b)| a - b).collect();
        project_delta(&mut delta, tau, NormKind::L2);
        let norm = delta.iter().map(|d| d * d).sum::<f32>().sqrt();
        assert!((norm - tau).abs() < 1e-6, "norm {norm}");
        project(&mut x, &source, tau, NormKind::L2);
        assert!(ball_violation(&x, &source, tau, NormKind::L2) <= 1e-6);
    }

    #[test]
    fn box_clamp_applies() {
        let source = vec![0.05f32, 0.95];
        let mut x = vec![-0.2f32, 1.4];
        project(&mut x, &source, 0.5, NormKind::Linf);
        assert!(x[0] >= 0.0 && x[1] <= 1.0);
        assert_eq!(box_violation(&x), 0.0);
    }
}
