use std::time::Instant;
use tensorcore::{kernels, Parallelism};
fn fill(v: &mut [f32], seed: u64) {
    let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
    for x in v.iter_mut() { s ^= s<<13; s ^= s>>7; s ^= s<<17; *x = ((s>>40) as f32/(1u64<<24) as f32)-0.5; }
}
fn main() {
    for (n, ci, co, h, w) in [(128usize,16usize,16usize,32usize,32usize),(128,16,32,16,16),(128,32,32,16,16),(128,64,64,8,8)] {
        let mut x = vec![0f32; n*ci*h*w]; fill(&mut x, 1);
        let mut wt = vec![0f32; co*ci*9]; fill(&mut wt, 2);
        let iters = 10;
        let flops = 2.0*(n*co*ci*9*h*w) as f64; // stride 1 same pad
        let t0 = Instant::now();
        for _ in 0..iters { std::hint::black_box(kernels::conv2d_forward(Parallelism::auto(), &x, &wt, n, ci, h, w, co, 3, 3, 1, 1)); }
        let dt = t0.elapsed().as_secs_f64()/iters as f64;
        println!("conv fwd n{n} {ci}->{co} {h}x{w}: {:.1} ms, {:.1} GF/s", dt*1e3, flops/dt/1e9);
        let gout = kernels::conv2d_forward(Parallelism::auto(), &x, &wt, n, ci, h, w, co, 3, 3, 1, 1);
        let t0 = Instant::now();
        for _ in 0..iters { std::hint::black_box(kernels::conv2d_grad_input(Parallelism::auto(), &gout, &wt, n, ci, h, w, co, 3, 3, 1, 1)); }
        let dt = t0.elapsed().as_secs_f64()/iters as f64;
        println!("   grad_input : {:.1} ms, {:.1} GF/s", dt*1e3, flops/dt/1e9);
        let t0 = Instant::now();
        for _ in 0..iters { std::hint::black_box(kernels::conv2d_grad_weight(Parallelism::auto(), &x, &gout, n, ci, h, w, co, 3, 3, 1, 1)); }
        let dt = t0.elapsed().as_secs_f64()/iters as f64;
        println!("   grad_weight: {:.1} ms, {:.1} GF/s", dt*1e3, flops/dt/1e9);
    }
}
