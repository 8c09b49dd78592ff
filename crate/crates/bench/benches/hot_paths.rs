use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nearfocus_core::dnn::build_critic;
use nearfocus_core::harness::ExperimentConfig;
use nearfocus_core::pdi::{ecc, PhaseImage, RotationSet};
use nearfocus_core::td3::{train_step, Agent, Policy, SubarrayEnv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn channel(c: &mut Criterion) {
    let cfg = ExperimentConfig::desk();
    let model = cfg.scene.model().unwrap();
    c.bench_function("channel_desk_144_elements", |b| {
        b.iter(|| model.at(black_box(cfg.dfp_m)).unwrap())
    });
}

fn similarity(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut img = |n: usize| {
        let v = (0..n * n)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        PhaseImage::new(n, n, v).unwrap()
    };
    let (a, b) = (img(6), img(6));
    let set = RotationSet::default();
    c.bench_function("ecc_6x6_36_angles", |bn| {
        bn.iter(|| ecc(black_box(&a), black_box(&b), &set).unwrap())
    });
}

fn networks(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let critic = build_critic(16, true, &mut rng).unwrap();
    let input: Vec<f64> = (0..64 * 32).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("critic_forward_batch64_n16", |b| {
        b.iter(|| critic.forward_batch(black_box(&input), 64).unwrap())
    });
}

fn td3_step(c: &mut Criterion) {
    let cfg = ExperimentConfig::desk();
    let h = cfg.scene.channel_at(cfg.dfp_m).unwrap();
    let env = SubarrayEnv::from_channel(&cfg.scene.aperture, &h, 4, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let policy = Policy::new(env.elements(), &cfg.agent, &mut rng).unwrap();
    let mut warm = Agent::new(policy, &env, &cfg.agent, 9).unwrap();
    for _ in 0..200 {
        train_step(&mut warm, &env, &cfg.agent).unwrap();
    }
    let mut group = c.benchmark_group("td3");
    group.sample_size(20);
    group.bench_function("train_step_desk_minibatch16", |b| {
        b.iter_batched(
            || warm.clone(),
            |mut a| train_step(&mut a, &env, &cfg.agent).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, channel, similarity, networks, td3_step);
criterion_main!(benches);
