#![allow(dead_code)]

use framing_core::model::{build_instance, Baselines, Dataset, ModelId, ModelInstance, ModelSpec, VarianceBlock};
use framing_core::synth::{generate_calls, SynthConfig, SynthCorpus, SynthSizes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn synth_baselines() -> Baselines {
    Baselines {
        catcher: Some("C00".into()),
        pitcher: Some("P00".into()),
        batter: Some("B00".into()),
    }
}

pub fn small_sizes() -> SynthSizes {
    SynthSizes {
        n_umpires: 3,
        n_catchers: 6,
        n_pitchers: 8,
        n_batters: 10,
        n_pitches: 400,
        n_history: 0,
    }
}

pub fn corpus(sizes: SynthSizes, model: ModelId, seed: u64) -> SynthCorpus {
    let cfg = SynthConfig {
        sizes,
        model,
        seed,
        ..SynthConfig::default()
    };
    generate_calls(&cfg).expect("synthetic corpus")
}

pub fn instance(data: &Dataset, model: ModelId) -> ModelInstance {
    build_instance(data, &ModelSpec::new(model), &synth_baselines()).expect("instance")
}

/// A prior draw with every coordinate nudged, so no block sits at a special point.
pub fn random_theta(inst: &ModelInstance, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixed: Vec<(VarianceBlock, f64)> = Vec::new();
    let mut theta = inst.sample_prior(&mut rng, &fixed);
    for t in theta.iter_mut() {
        *t += rng.random_range(-0.1..0.1);
    }
    theta
}

/// Largest per-coordinate relative error between the analytic gradient and
/// central differences with step `h`, with the denominator floored at one.
pub fn max_fd_error(inst: &ModelInstance, theta: &[f64], h: f64) -> (f64, usize) {
    let g = inst.grad_log_posterior(theta).unwrap();
    let mut worst = (0.0, 0);
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        t[i] = theta[i] + h;
        let up = inst.log_posterior(&t).unwrap();
        t[i] = theta[i] - h;
        let down = inst.log_posterior(&t).unwrap();
        t[i] = theta[i];
        let fd = (up - down) / (2.0 * h);
        let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1.0);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    worst
}
