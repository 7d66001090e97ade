use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use framing_core::locgam::{fit_hgam, GamConfig, HandCombo};
use framing_core::model::{build_instance, Baselines, ModelId, ModelSpec};
use framing_core::sampler::effective_sample_size;
use framing_core::synth::{generate_calls, SynthConfig, SynthSizes};

fn baselines() -> Baselines {
    Baselines {
        catcher: Some("C00".into()),
        pitcher: Some("P00".into()),
        batter: Some("B00".into()),
    }
}

fn gradient(c: &mut Criterion) {
    let corpus = generate_calls(&SynthConfig::default()).unwrap();
    let data = corpus.dataset().unwrap();
    let mut group = c.benchmark_group("log_posterior_grad");
    group.sample_size(20);
    for model in [ModelId::M1, ModelId::M3, ModelId::M5] {
        let instance = build_instance(&data, &ModelSpec::new(model), &baselines()).unwrap();
        let theta = vec![0.05; instance.dim()];
        let mut grad = vec![0.0; instance.dim()];
        group.bench_function(model.to_string(), |b| {
            b.iter(|| instance.log_posterior_grad(black_box(&theta), &mut grad).unwrap())
        });
    }
    group.finish();
}

fn gam_fit(c: &mut Criterion) {
    let cfg = SynthConfig {
        sizes: SynthSizes {
            n_history: 20_000,
            ..SynthSizes::default()
        },
        ..SynthConfig::default()
    };
    let corpus = generate_calls(&cfg).unwrap();
    let zone = corpus.truth.location.surfaces[0].zone;
    let history: Vec<_> = corpus
        .pitches
        .iter()
        .filter(|p| p.season == cfg.season - 1)
        .cloned()
        .collect();
    let gam = GamConfig::default();
    let mut group = c.benchmark_group("hgam");
    group.sample_size(10);
    group.bench_function("fit_rhb_rhp", |b| {
        b.iter(|| fit_hgam(black_box(&history), HandCombo::ALL[0], &zone, &gam).unwrap())
    });
    group.finish();
}

fn ess(c: &mut Criterion) {
    let chains: Vec<Vec<f64>> = (0..4)
        .map(|k| {
            let mut x = 0.0;
            (0..2000)
                .map(|i| {
                    let u = ((i * 7919 + k * 104_729) % 10_007) as f64 / 10_007.0 - 0.5;
                    x = 0.9 * x + u;
                    x
                })
                .collect()
        })
        .collect();
    c.bench_function("ess_4x2000", |b| {
        b.iter(|| effective_sample_size(black_box(&chains)).unwrap())
    });
}

criterion_group!(benches, gradient, gam_fit, ess);
criterion_main!(benches);
