//! Convolution forward against a nested-loop oracle, plus backward
//! contracts: accumulation semantics, linearity, a closed-form linear model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorcore::{kernels, Tape, Tensor};

/// Direct nested-loop convolution, the independent oracle for the im2col path.
#[allow(clippy::too_many_arguments)]
fn conv2d_oracle(
    x: &[f32],
    w: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    wd: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0f32; n * co * ho * wo];
    for s in 0..n {
        for o in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0f64;
                    for c in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize || ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x[((s * ci + c) * h + iy as usize) * wd + ix as usize];
                                let wv = w[((o * ci + c) * k + ky) * k + kx];
                                acc += xv as f64 * wv as f64;
                            }
                        }
                    }
                    out[((s * co + o) * ho + oy) * wo + ox] = acc as f32;
                }
            }
        }
    }
    out
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

#[test]
fn identity_like_kernel() {
    // 1x1x3x3 ones, 1x1x1x1 weight of 2 -> 3x3 of 2s
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(vec![1, 1, 3, 3], 1.0));
    let w = tape.constant(Tensor::full(vec![1, 1, 1, 1], 2.0));
    let y = tape.conv2d(x, w, 1, 0).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 1, 3, 3]);
    assert!(tape.value(y).data().iter().all(|&v| v == 2.0));
}

#[test]
fn sum_kernel() {
    // [[1,2],[3,4]] with all-ones 2x2 kernel -> [10]
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let w = tape.constant(Tensor::full(vec![1, 1, 2, 2], 1.0));
    let y = tape.conv2d(x, w, 1, 0).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 1, 1, 1]);
    assert_eq!(tape.value(y).data(), &[10.0]);
}

#[test]
fn random_convs_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // Shapes up to 4x8x16x16 per the engine contract.
    let cases = [
        (2, 3, 8, 8, 4, 3, 1, 1),
        (1, 1, 5, 7, 2, 3, 1, 0),
        (4, 8, 16, 16, 8, 3, 2, 1),
        (3, 4, 9, 9, 6, 1, 1, 0),
        (2, 2, 11, 6, 3, 3, 2, 1),
        (1, 6, 8, 8, 5, 7, 2, 3),
    ];
    for &(n, ci, h, w, co, k, stride, pad) in &cases {
        let x = rand_vec(&mut rng, n * ci * h * w);
        let wt = rand_vec(&mut rng, co * ci * k * k);
        let want = conv2d_oracle(&x, &wt, n, ci, h, w, co, k, stride, pad);

        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(vec![n, ci, h, w], x).unwrap());
        let wv = tape.constant(Tensor::new(vec![co, ci, k, k], wt).unwrap());
        let y = tape.conv2d(xv, wv, stride, pad).unwrap();
        let got = tape.value(y).data();
        assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-5, "case {n}x{ci}x{h}x{w} k{k}s{stride}p{pad}: {a} vs {b}");
        }
    }
}

#[test]
fn shape_mismatch_is_structured_error() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(vec![1, 3, 8, 8]));
    let w = tape.constant(Tensor::zeros(vec![4, 2, 3, 3]));
    let err = tape.conv2d(x, w, 1, 1).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("conv2d"), "unexpected error: {msg}");
}

#[test]
fn backward_sum_gives_ones() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![2, 3], (0..6).map(|i| i as f32).collect()).unwrap(), true);
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);
}

#[test]
fn backward_without_zeroing_doubles() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap(), true);
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq).unwrap();
    tape.backward(s).unwrap();
    let first: Vec<f32> = tape.grad(x).unwrap().to_vec();
    tape.backward(s).unwrap();
    let second: Vec<f32> = tape.grad(x).unwrap().to_vec();
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(vec![2, 2]), true);
    let y = tape.relu(x).unwrap();
    assert!(tape.backward(y).is_err());
}

#[test]
fn linear_model_closed_form() {
    // loss = mse(w*x, y) for scalar-ish shapes; grad_w = 2(wx-y)x / n
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 8;
    let x: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let y: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let w0 = 0.7f32;

    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::new(vec![n, 1], x.clone()).unwrap());
    let wv = tape.leaf(Tensor::new(vec![1, 1], vec![w0]).unwrap(), true);
    let pred = tape.matmul(xv, wv).unwrap();
    let yv = tape.constant(Tensor::new(vec![n, 1], y.clone()).unwrap());
    let loss = tape.mse(pred, yv).unwrap();
    tape.backward(loss).unwrap();
    let got = tape.grad(wv).unwrap()[0];

    let mut want = 0f32;
    for i in 0..n {
        want += 2.0 * (w0 * x[i] - y[i]) * x[i] / n as f32;
    }
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
}

#[test]
fn backward_linearity() {
    // grad of (a*f + b*g) == a*grad(f) + b*grad(g)
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x0 = Tensor::new(vec![6], rand_vec(&mut rng, 6)).unwrap();
    let (a, b) = (1.7f32, -0.6f32);

    let grad_of = |mode: u8| -> Vec<f32> {
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone(), true);
        let sq = tape.mul(x, x).unwrap();
        let f = tape.sum(sq).unwrap();
        let r = tape.relu(x).unwrap();
        let g = tape.sum(r).unwrap();
        let out = match mode {
            0 => f,
            1 => g,
            _ => {
                let af = tape.scale(f, a).unwrap();
                let bg = tape.scale(g, b).unwrap();
                tape.add(af, bg).unwrap()
            }
        };
        tape.backward(out).unwrap();
        tape.grad(x).unwrap().to_vec()
    };

    let gf = grad_of(0);
    let gg = grad_of(1);
    let gc = grad_of(2);
    for i in 0..6 {
        assert!((gc[i] - (a * gf[i] + b * gg[i])).abs() < 1e-6);
    }
}

#[test]
fn conv_module_parallel_and_sequential_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x = rand_vec(&mut rng, 4 * 8 * 16 * 16);
    let w = rand_vec(&mut rng, 8 * 8 * 9);
    let seq = kernels::conv2d_forward(tensorcore::Parallelism::Sequential, &x, &w, 4, 8, 16, 16, 8, 3, 3, 1, 1);
    let par = kernels::conv2d_forward(tensorcore::Parallelism::auto(), &x, &w, 4, 8, 16, 16, 8, 3, 3, 1, 1);
    assert_eq!(seq, par);
}

#[test]
fn conv_grad_matches_f64_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let (n, ci, h, w, co, k, stride, pad) = (2usize, 3usize, 6usize, 6usize, 4usize, 3usize, 1usize, 1usize);
    let nel = |s: &[usize]| s.iter().product::<usize>();
    let shp_x = vec![n, ci, h, w]; let shp_w = vec![co, ci, k, k];
    let x: Vec<f32> = (0..nel(&shp_x)).map(|_| rng.random_range(-0.3f32..0.3)).collect();
    let wt: Vec<f32> = (0..nel(&shp_w)).map(|_| rng.random_range(-0.3f32..0.3)).collect();
    let ho = (h + 2*pad - k)/stride + 1; let wo = (w + 2*pad - k)/stride + 1;
    let tgt: Vec<f32> = (0..n*co*ho*wo).map(|_| rng.random_range(-0.3f32..0.3)).collect();

    // tape analytic
    let mut t = Tape::new();
    let xv = t.leaf(Tensor::new(shp_x.clone(), x.clone()).unwrap(), true);
    let wv = t.constant(Tensor::new(shp_w.clone(), wt.clone()).unwrap());
    let y = t.conv2d(xv, wv, stride, pad).unwrap();
    let tv = t.constant(Tensor::new(vec![n, co, ho, wo], tgt.clone()).unwrap());
    let d = t.sub(y, tv).unwrap();
    let d2 = t.mul(d, d).unwrap();
    let l = t.sum(d2).unwrap();
    t.backward(l).unwrap();
    let got = t.grad(xv).unwrap().to_vec();

    // f64 oracle
    let mut yv = vec![0f64; n*co*ho*wo];
    for s in 0..n { for o in 0..co { for oy in 0..ho { for ox in 0..wo {
        let mut acc = 0f64;
        for c in 0..ci { for ky in 0..k { for kx in 0..k {
            let iy = (oy*stride+ky) as isize - pad as isize;
            let ix = (ox*stride+kx) as isize - pad as isize;
            if iy<0||iy>=h as isize||ix<0||ix>=w as isize { continue; }
            acc += x[((s*ci+c)*h+iy as usize)*w+ix as usize] as f64 * wt[((o*ci+c)*k+ky)*k+kx] as f64;
        }}}
        yv[((s*co+o)*ho+oy)*wo+ox] = acc;
    }}}}
    let gy: Vec<f64> = yv.iter().zip(&tgt).map(|(a,&b)| 2.0*(a - b as f64)).collect();
    let mut gx = vec![0f64; n*ci*h*w];
    for s in 0..n { for o in 0..co { for oy in 0..ho { for ox in 0..wo {
        let g = gy[((s*co+o)*ho+oy)*wo+ox];
        for c in 0..ci { for ky in 0..k { for kx in 0..k {
            let iy = (oy*stride+ky) as isize - pad as isize;
            let ix = (ox*stride+kx) as isize - pad as isize;
            if iy<0||iy>=h as isize||ix<0||ix>=w as isize { continue; }
            gx[((s*ci+c)*h+iy as usize)*w+ix as usize] += g * wt[((o*ci+c)*k+ky)*k+kx] as f64;
        }}}
    }}}}
    let mut worst = 0f64;
    for i in 0..gx.len() {
        let rel = (got[i] as f64 - gx[i]).abs() / gx[i].abs().max(1e-8);
        if rel > worst { worst = rel; }
    }
    eprintln!("worst analytic-vs-f64oracle rel: {worst}");
    assert!(worst < 1e-4, "worst {worst}");
}
