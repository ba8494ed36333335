use datapipe::{load_cifar10_binary, sample_few_shot, FewShotSize};
use nets::{Family, Model, NetworkSpec};
use std::time::Instant;
use tensorcore::Tape;

fn main() {
    let (train, _) = load_cifar10_binary(std::path::Path::new("/root/data/cifar10")).unwrap();
    let data = sample_few_shot(&train, FewShotSize::Total(1024), 1).unwrap();
    let labels = data.labels.clone().unwrap();
    let spec = NetworkSpec::new(Family::Resnet20Target, (3, 32, 32), 10, 16).unwrap();
    let mut model = Model::build(&spec, 1).unwrap();
    let policy = datapipe::AugmentationPolicy { enabled: true, crop_scale: (0.7, 1.0), hflip_prob: 0.5, jitter_prob: 0.0, brightness: 0.0, contrast: 0.0, saturation: 0.0, hue: 0.0, grayscale_prob: 0.0 };

    let (mut t_aug, mut t_fwd, mut t_loss, mut t_bwd, mut t_opt) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    let positions: Vec<usize> = (0..1024).collect();
    let reps = 3;
    for _ in 0..reps {
        for chunk in positions.chunks(128) {
            let t0 = Instant::now();
            let x = datapipe::augment_batch(&data, chunk, &policy, 1, 0).unwrap();
            t_aug += t0.elapsed().as_secs_f64();

            let t0 = Instant::now();
            let mut tape = Tape::new();
            let xv = tape.constant(x);
            let bound = model.forward_train(&mut tape, xv, None).unwrap();
            t_fwd += t0.elapsed().as_secs_f64();

            let t0 = Instant::now();
            let lab: Vec<u32> = chunk.iter().map(|&p| labels[p]).collect();
            let loss = tape.softmax_cross_entropy(bound.out, &lab).unwrap();
            t_loss += t0.elapsed().as_secs_f64();

            let t0 = Instant::now();
            tape.backward(loss).unwrap();
            t_bwd += t0.elapsed().as_secs_f64();

            let t0 = Instant::now();
            model.store.accumulate_grads(&tape, &bound.bindings);
            model.store.sgd_momentum_step(0.05, 0.9, 5e-4).unwrap();
            t_opt += t0.elapsed().as_secs_f64();
        }
    }
    let total = t_aug + t_fwd + t_loss + t_bwd + t_opt;
    println!("per 1024 imgs: aug {:.2}s fwd {:.2}s loss {:.3}s bwd {:.2}s opt {:.3}s total {:.2}s",
        t_aug/reps as f64, t_fwd/reps as f64, t_loss/reps as f64, t_bwd/reps as f64, t_opt/reps as f64, total/reps as f64);
    println!("=> per 12.5k epoch: {:.0}s", total/reps as f64 * 12.2);
}
