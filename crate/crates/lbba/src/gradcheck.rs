//! The finite-difference battery behind the `gradcheck` command: every
//! tensor primitive plus a full surrogate forward with cross-entropy.

use nets::{Family, Model, NetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorcore::gradcheck::{fd_noise_floor, finite_difference_check_with};
use tensorcore::{Tape, Tensor, Var};

const H: f32 = 5e-3;
const TOL: f32 = 1e-3;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn check<F>(results: &mut Vec<(String, f32)>, label: &str, f: F, x: &Tensor) -> Result<(), String>
where
    F: Fn(&mut Tape, Var) -> tensorcore::Result<Var>,
{
    check_with_step(results, label, f, x, H, 1.0)
}

fn check_with_step<F>(
    results: &mut Vec<(String, f32)>,
    label: &str,
    f: F,
    x: &Tensor,
    h: f32,
    floor_scale: f32,
) -> Result<(), String>
where
    F: Fn(&mut Tape, Var) -> tensorcore::Result<Var>,
{
    let f_mag = {
        let mut t = Tape::new();
        let v = t.leaf(x.clone(), false);
        let out = f(&mut t, v).map_err(|e| format!("{label}: {e}"))?;
        t.value(out).item().map_err(|e| format!("{label}: {e}"))?
    };
    let floor = fd_noise_floor(f_mag, h, TOL) * floor_scale;
    let rep = finite_difference_check_with(f, x, h, floor);
    println!("  {label:<28} max rel err {:.3e} over {} probes", rep.max_rel_err, rep.probes);
    results.push((label.to_string(), rep.max_rel_err));
    Ok(())
}

fn sq_sum(t: &mut Tape, y: Var, target: &Tensor) -> tensorcore::Result<Var> {
    let tv = t.constant(target.clone());
    let d = t.sub(y, tv)?;
    let d2 = t.mul(d, d)?;
    t.sum(d2)
}

/// Run the battery; returns the worst relative error across all checks.
pub fn run_battery(width: usize) -> Result<f32, String> {
    let mut results: Vec<(String, f32)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9dc5);

    // conv2d, both operands
    let x = rand_tensor(&mut rng, vec![2, 3, 8, 8], 0.3);
    let wt = rand_tensor(&mut rng, vec![4, 3, 3, 3], 0.3);
    let tgt = rand_tensor(&mut rng, vec![2, 4, 8, 8], 0.3);
    {
        let (wt, tgt) = (wt.clone(), tgt.clone());
        check(&mut results, "conv2d/input", move |t, v| {
            let w = t.constant(wt.clone());
            let y = t.conv2d(v, w, 1, 1)?;
            sq_sum(t, y, &tgt)
        }, &x)?;
    }
    {
        let (x2, tgt) = (x.clone(), tgt.clone());
        check(&mut results, "conv2d/weight", move |t, v| {
            let xv = t.constant(x2.clone());
            let y = t.conv2d(xv, v, 1, 1)?;
            sq_sum(t, y, &tgt)
        }, &wt)?;
    }

    // depthwise conv
    let dx = rand_tensor(&mut rng, vec![2, 3, 6, 6], 0.4);
    let dw = rand_tensor(&mut rng, vec![3, 1, 3, 3], 0.4);
    let dt = rand_tensor(&mut rng, vec![2, 3, 6, 6], 0.4);
    {
        let (dw, dt) = (dw.clone(), dt.clone());
        check(&mut results, "depthwise_conv2d/input", move |t, v| {
            let w = t.constant(dw.clone());
            let y = t.depthwise_conv2d(v, w, 1, 1)?;
            sq_sum(t, y, &dt)
        }, &dx)?;
    }

    // linear
    let lx = rand_tensor(&mut rng, vec![4, 6], 0.5);
    let lw = rand_tensor(&mut rng, vec![5, 6], 0.5);
    let lb = rand_tensor(&mut rng, vec![5], 0.5);
    let lt = rand_tensor(&mut rng, vec![4, 5], 0.5);
    {
        let (lw, lb, lt) = (lw.clone(), lb.clone(), lt.clone());
        check(&mut results, "linear/input", move |t, v| {
            let w = t.constant(lw.clone());
            let b = t.constant(lb.clone());
            let y = t.linear(v, w, Some(b))?;
            sq_sum(t, y, &lt)
        }, &lx)?;
    }
    {
        let (lx2, lb, lt) = (lx.clone(), lb.clone(), lt.clone());
        check(&mut results, "linear/weight", move |t, v| {
            let xv = t.constant(lx2.clone());
            let b = t.constant(lb.clone());
            let y = t.linear(xv, v, Some(b))?;
            sq_sum(t, y, &lt)
        }, &lw)?;
    }

    // relu away from the kink
    let mut rx = rand_tensor(&mut rng, vec![5, 7], 0.6);
    for v in rx.data_mut() {
        if v.abs() < 5.0 * H {
            *v = if *v < 0.0 { -5.0 * H } else { 5.0 * H };
        }
    }
    check(&mut results, "relu", |t, v| {
        let y = t.relu(v)?;
        t.sum(y)
    }, &rx)?;

    // sigmoid
    let sx = rand_tensor(&mut rng, vec![3, 5], 0.8);
    let st = rand_tensor(&mut rng, vec![3, 5], 0.8);
    {
        let st = st.clone();
        check(&mut results, "sigmoid", move |t, v| {
            let y = t.sigmoid(v)?;
            sq_sum(t, y, &st)
        }, &sx)?;
    }

    // batch norm, train and eval modes
    let bx = rand_tensor(&mut rng, vec![3, 2, 4, 4], 0.6);
    let bg = Tensor::full(vec![2], 0.9);
    let bb = rand_tensor(&mut rng, vec![2], 0.3);
    let bt = rand_tensor(&mut rng, vec![3, 2, 4, 4], 0.6);
    {
        let (bg, bb, bt) = (bg.clone(), bb.clone(), bt.clone());
        check(&mut results, "batchnorm2d/train", move |t, v| {
            let g = t.constant(bg.clone());
            let b = t.constant(bb.clone());
            let (y, _, _) = t.batchnorm2d_train(v, g, b)?;
            sq_sum(t, y, &bt)
        }, &bx)?;
    }
    {
        let (bg, bb, bt) = (bg.clone(), bb.clone(), bt.clone());
        check(&mut results, "batchnorm2d/eval", move |t, v| {
            let g = t.constant(bg.clone());
            let b = t.constant(bb.clone());
            let y = t.batchnorm2d_eval(v, g, b, &[0.1, -0.2], &[0.9, 1.1])?;
            sq_sum(t, y, &bt)
        }, &bx)?;
    }

    // maxpool (values spread to avoid ties near the probe step)
    let mut mx = rand_tensor(&mut rng, vec![2, 2, 6, 6], 0.5);
    for (i, v) in mx.data_mut().iter_mut().enumerate() {
        *v += (i % 97) as f32 * 1e-1 / 97.0;
    }
    check(&mut results, "maxpool2d", |t, v| {
        let y = t.maxpool2d(v, 3, 2, 0)?;
        t.sum(y)
    }, &mx)?;

    // global average pool
    let gx = rand_tensor(&mut rng, vec![2, 3, 5, 5], 0.6);
    let gt = rand_tensor(&mut rng, vec![2, 3], 0.6);
    {
        let gt = gt.clone();
        check(&mut results, "global_avgpool", move |t, v| {
            let y = t.global_avgpool(v)?;
            sq_sum(t, y, &gt)
        }, &gx)?;
    }

    // softmax cross entropy
    let logits = rand_tensor(&mut rng, vec![4, 6], 1.0);
    check(&mut results, "softmax_cross_entropy", |t, v| t.softmax_cross_entropy(v, &[0, 2, 4, 5]), &logits)?;

    // mse
    let ma = rand_tensor(&mut rng, vec![3, 4], 0.7);
    let mb = rand_tensor(&mut rng, vec![3, 4], 0.7);
    {
        let mb = mb.clone();
        check(&mut results, "mse", move |t, v| {
            let b = t.constant(mb.clone());
            t.mse(v, b)
        }, &ma)?;
    }

    // cosine similarity
    let ca = rand_tensor(&mut rng, vec![3, 8], 0.8);
    let cb = rand_tensor(&mut rng, vec![3, 8], 0.8);
    {
        let cb = cb.clone();
        check(&mut results, "cosine_similarity", move |t, v| {
            let b = t.constant(cb.clone());
            let c = t.cosine_similarity(v, b)?;
            t.sum(c)
        }, &ca)?;
    }

    // l2 normalize
    let nx = rand_tensor(&mut rng, vec![4, 6], 0.8);
    let nt = rand_tensor(&mut rng, vec![4, 6], 0.8);
    {
        let nt = nt.clone();
        check(&mut results, "l2_normalize", move |t, v| {
            let y = t.l2_normalize(v)?;
            sq_sum(t, y, &nt)
        }, &nx)?;
    }

    // gaussian blur of the gradient path
    let kb = tensorcore::kernels::gaussian_kernel(7, 3.0);
    let gx2 = rand_tensor(&mut rng, vec![2, 3, 8, 8], 0.6);
    let gt2 = rand_tensor(&mut rng, vec![2, 3, 8, 8], 0.6);
    {
        let (kb, gt2) = (kb.clone(), gt2.clone());
        check(&mut results, "gaussian_blur_grad", move |t, v| {
            let y = t.gaussian_blur(v, &kb)?;
            sq_sum(t, y, &gt2)
        }, &gx2)?;
    }

    // full surrogate forward + cross-entropy on a 4-image batch
    let spec = NetworkSpec::new(Family::SimplifiedResnet18, (3, 32, 32), 10, width).map_err(|e| e.to_string())?;
    let model = Model::build(&spec, 1).map_err(|e| e.to_string())?;
    let batch = {
        let mut t = rand_tensor(&mut rng, vec![4, 3, 32, 32], 0.5);
        for v in t.data_mut() {
            *v = (*v + 0.5).clamp(0.0, 1.0);
        }
        t
    };
    // A deep forward stacks rounding from a dozen layers of long dot
    // products; its evaluation noise runs several times the single-op ulp
    // model, so this case carries a depth factor on the denominator floor.
    check_with_step(&mut results, "surrogate_forward_ce", move |t, v| {
        let logits = model
            .forward_logits(t, v)
            .map_err(|e| tensorcore::TensorError::InvalidConfig(e.to_string()))?;
        t.softmax_cross_entropy(logits, &[1, 3, 5, 7])
    }, &batch, H, 6.0)?;

    Ok(results.iter().map(|(_, e)| *e).fold(0.0, f32::max))
}
