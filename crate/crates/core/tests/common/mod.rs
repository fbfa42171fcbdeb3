//! Finite-difference gradient checking shared by test targets.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssvep_core::convnet::{loss_xent, xent_grad, Mode, ModelParams, Network, NetworkSpec};

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

fn loss_at(net: &Network, p: &ModelParams, x: &[f64], class: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (logits, _) = net.forward(p, x, Mode::Train, &mut rng).unwrap();
    loss_xent(&logits, class)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Largest relative error between analytic and central-difference gradients
/// over a strided sample of every parameter tensor and the input.
pub fn worst_grad_error(spec: NetworkSpec, seed: u64) -> f64 {
    let net = Network::new(spec).unwrap();
    let mut p = ModelParams::init(net.spec(), seed).unwrap();
    // Non-zero biases so bias paths are exercised.
    for (name, t) in p.iter_mut() {
        if name.ends_with(".bias") {
            t.data
                .iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v = 0.05 * ((i % 5) as f64 - 2.0));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let x: Vec<f64> = (0..net.input_len())
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    let class = 1;

    let mut fwd_rng = ChaCha8Rng::seed_from_u64(7);
    let (logits, cache) = net.forward(&p, &x, Mode::Train, &mut fwd_rng).unwrap();
    let g = net
        .backward(&p, &cache, &xent_grad(&logits, class), true)
        .unwrap();

    let mut worst = 0.0f64;
    for name in p.names() {
        let analytic = g.params.get(&name).unwrap().clone();
        let n = analytic.len();
        for i in (0..n).step_by((n / 40).max(1)) {
            let orig = p.get(&name).unwrap().data[i];
            p.get_mut(&name).unwrap().data[i] = orig + H;
            let lp = loss_at(&net, &p, &x, class);
            p.get_mut(&name).unwrap().data[i] = orig - H;
            let lm = loss_at(&net, &p, &x, class);
            p.get_mut(&name).unwrap().data[i] = orig;
            worst = worst.max(rel_err(analytic[i], (lp - lm) / (2.0 * H)));
        }
    }
    let dx = g.input.unwrap();
    for i in (0..x.len()).step_by((x.len() / 40).max(1)) {
        let mut xp = x.clone();
        xp[i] += H;
        let mut xm = x.clone();
        xm[i] -= H;
        let numeric = (loss_at(&net, &p, &xp, class) - loss_at(&net, &p, &xm, class)) / (2.0 * H);
        worst = worst.max(rel_err(dx[i], numeric));
    }
    worst
}

/// Single-layer-kind networks plus composed ones, by name.
pub fn gradient_cases() -> Vec<(&'static str, NetworkSpec)> {
    use ssvep_core::convnet::{LayerSpec::*, Shape};
    vec![
        (
            "dense",
            NetworkSpec {
                input: Shape::new(12, 1, 1),
                layers: vec![Dense { units: 2 }],
            },
        ),
        (
            "conv3x3",
            NetworkSpec {
                input: Shape::new(2, 6, 5),
                layers: vec![Conv3x3 { out_channels: 3 }, Flatten, Dense { units: 2 }],
            },
        ),
        (
            "relu",
            NetworkSpec {
                input: Shape::new(10, 1, 1),
                layers: vec![Dense { units: 6 }, Relu, Dense { units: 2 }],
            },
        ),
        (
            "maxpool2x2",
            NetworkSpec {
                input: Shape::new(2, 6, 4),
                layers: vec![Maxpool2x2, Flatten, Dense { units: 2 }],
            },
        ),
        (
            "dropout",
            NetworkSpec {
                input: Shape::new(16, 1, 1),
                layers: vec![Dropout { rate: 0.4 }, Dense { units: 2 }],
            },
        ),
        (
            "flatten",
            NetworkSpec {
                input: Shape::new(3, 2, 2),
                layers: vec![Flatten, Dense { units: 2 }],
            },
        ),
        ("tiny", NetworkSpec::tiny()),
        ("scaled_down", NetworkSpec::scaled_down()),
    ]
}
