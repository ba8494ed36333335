//! The parameter-to-input error-transform identity.
//!
//! For a network whose first layer is linear without bias,
//! `phi(x; {w1 + w1*A} u rest) == phi(x + A*x; w)` holds exactly: the
//! perturbed first layer absorbs the input transform. This module verifies
//! the identity numerically on such networks. Convolutional first layers
//! admit no such finite A in general, so conv models report an
//! unsupported-architecture error instead of a vacuous number.

use crate::error::{NetError, Result};
use crate::model::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tensorcore::{Tape, Tensor, Var};

/// A small MLP whose first layer is linear with no bias; later layers are
/// linear+relu. The whole net is the feature extractor phi.
pub struct LinearFirstNet {
    /// Layer dims: dims[0] is the input dim, dims.last() the output dim.
    pub dims: Vec<usize>,
    /// Weights; weights[i] has shape (dims[i+1], dims[i]). Only layer 0 is
    /// bias-free by construction; later layers carry biases.
    pub weights: Vec<Tensor>,
    pub biases: Vec<Option<Tensor>>,
}

impl LinearFirstNet {
    pub fn build(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(NetError::InvalidSpec("at least input and output dims required".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for i in 0..dims.len() - 1 {
            let (d_in, d_out) = (dims[i], dims[i + 1]);
            let dist = Normal::new(0.0f32, (2.0 / d_in as f32).sqrt()).expect("std > 0");
            let data: Vec<f32> = (0..d_out * d_in).map(|_| dist.sample(&mut rng)).collect();
            weights.push(Tensor::new(vec![d_out, d_in], data)?);
            if i == 0 {
                biases.push(None);
            } else {
                biases.push(Some(Tensor::zeros(vec![d_out])));
            }
        }
        Ok(Self { dims: dims.to_vec(), weights, biases })
    }

    /// Forward with an optional replacement for the first-layer weight.
    pub fn forward(&self, tape: &mut Tape, x: Var, first_weight: Option<Var>) -> Result<Var> {
        let mut h = x;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wv = match (i, first_weight) {
                (0, Some(v)) => v,
                _ => tape.constant(w.clone()),
            };
            let bv = b.as_ref().map(|t| tape.constant(t.clone()));
            h = tape.linear(h, wv, bv)?;
            if i + 1 < self.weights.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// What to verify the identity on.
pub enum IdentitySubject<'a> {
    Linear(&'a LinearFirstNet),
    /// Convolutional-first models are rejected with
    /// [`NetError::UnsupportedArchitecture`].
    Conv(&'a Model),
}

/// Materialize both sides of the identity and return the max absolute
/// difference: `max | phi(x; {w1+w1*A} u rest) - phi(x + A*x; w) |`.
///
/// `x` is a batch `(n, d)`, `a` a square `(d, d)` transform.
pub fn verify_error_transform_identity(subject: IdentitySubject, x: &Tensor, a: &Tensor) -> Result<f32> {
    let net = match subject {
        IdentitySubject::Linear(net) => net,
        IdentitySubject::Conv(_) => return Err(NetError::UnsupportedArchitecture),
    };
    let d = net.dims[0];
    if x.shape().len() != 2 || x.shape()[1] != d {
        return Err(NetError::InvalidSpec(format!("x must be (n, {d}), got {:?}", x.shape())));
    }
    if a.shape() != [d, d] {
        return Err(NetError::InvalidSpec(format!("A must be ({d}, {d}), got {:?}", a.shape())));
    }

    // Left side: perturb the first-layer weight, w1' = w1 + w1 @ A.
    let left = {
        let mut tape = Tape::new();
        let w1 = &net.weights[0];
        let (rows, _) = w1.dims2()?;
        let w1v = tape.constant(w1.clone());
        let av = tape.constant(a.clone());
        let w1a = tape.matmul(w1v, av)?; // (rows, d) @ (d, d)
        let w1p = tape.add(w1v, w1a)?;
        debug_assert_eq!(tape.value(w1p).shape(), [rows, d]);
        let xv = tape.constant(x.clone());
        let out = net.forward(&mut tape, xv, Some(w1p))?;
        tape.value(out).clone()
    };

    // Right side: transform the input, x' = x + x @ A^T (row-vector form).
    let right = {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let av = tape.constant(a.clone());
        let xa = tape.matmul_nt(xv, av)?; // x @ A^T
        let xp = tape.add(xv, xa)?;
        let out = net.forward(&mut tape, xp, None)?;
        tape.value(out).clone()
    };

    Ok(left.max_abs_diff(&right)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_transform_is_exactly_zero() {
        let net = LinearFirstNet::build(&[6, 8, 5], 3).unwrap();
        let x = Tensor::full(vec![2, 6], 0.3);
        let a = Tensor::zeros(vec![6, 6]);
        let diff = verify_error_transform_identity(IdentitySubject::Linear(&net), &x, &a).unwrap();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn scaling_transform_matches() {
        // A = c*I makes both sides phi((1+c) x).
        let net = LinearFirstNet::build(&[5, 7, 4], 11).unwrap();
        let x = Tensor::new(vec![3, 5], (0..15).map(|i| (i as f32) / 15.0 - 0.4).collect()).unwrap();
        let mut a = Tensor::zeros(vec![5, 5]);
        for i in 0..5 {
            a.data_mut()[i * 5 + i] = 0.3;
        }
        let diff = verify_error_transform_identity(IdentitySubject::Linear(&net), &x, &a).unwrap();
        assert!(diff < 1e-5, "diff {diff}");
    }
}
