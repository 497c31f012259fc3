use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use advslam_core::attack::fgsm;
use advslam_core::dataset::{generate_synthetic_sequence, SyntheticSpec};
use advslam_core::frontend::{extract_features, FrontendConfig, SamplingPattern};
use advslam_core::metrics::compute_ate;
use advslam_core::odometry::{estimate_rigid, EstimatorConfig};
use advslam_core::rng::{frame_rng, mix64};
use advslam_core::surrogate::InputBridge;
use advslam_core::{AttackConfig, FrameSource, Model, Point3, Pose, Trajectory};

fn unit(seed: u64) -> f64 {
    (mix64(seed) >> 11) as f64 / (1u64 << 53) as f64
}

fn sequence() -> advslam_core::dataset::SyntheticSequence {
    generate_synthetic_sequence(&SyntheticSpec {
        frames: 4,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn surrogate(c: &mut Criterion) {
    let seq = sequence();
    let (rgb, _) = seq.load(0).unwrap();
    let model = Model::default_seeded(1);
    let bridge = InputBridge::new(&model, rgb.width(), rgb.height(), rgb.channels()).unwrap();
    let input = bridge.to_model_input(rgb.pixels());
    let label = model.classify(&input).unwrap();
    c.bench_function("surrogate_forward", |b| b.iter(|| model.forward(black_box(&input)).unwrap()));
    c.bench_function("surrogate_input_gradient", |b| {
        b.iter(|| model.loss_gradient(black_box(&input), label).unwrap())
    });
    let config = AttackConfig::fgsm(0.05);
    c.bench_function("fgsm_320x240", |b| b.iter(|| fgsm(&model, black_box(&rgb), label, &config).unwrap()));
}

fn frontend(c: &mut Criterion) {
    let seq = sequence();
    let (rgb, _) = seq.load(0).unwrap();
    let config = FrontendConfig::default();
    let pattern = SamplingPattern::new(config.pattern_seed);
    c.bench_function("extract_features_320x240", |b| {
        b.iter(|| extract_features(black_box(&rgb), &config, &pattern).unwrap())
    });
}

fn estimator(c: &mut Criterion) {
    let truth = Pose::from_axis_angle(Point3::new(0.1, -0.2, 0.05), Point3::new(0.3, 0.1, -0.2));
    let src: Vec<Point3> = (0..200u64)
        .map(|i| Point3::new(unit(3 * i) * 4.0 - 2.0, unit(3 * i + 1) * 4.0 - 2.0, unit(3 * i + 2) * 4.0 + 1.0))
        .collect();
    let dst: Vec<Point3> = src
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i % 3 == 0 {
                Point3::new(unit(1000 + i as u64), unit(2000 + i as u64), unit(3000 + i as u64)) * 5.0
            } else {
                truth.transform(p)
            }
        })
        .collect();
    let config = EstimatorConfig::default();
    c.bench_function("estimate_rigid_200pts", |b| {
        b.iter(|| estimate_rigid(black_box(&src), &dst, &config, &mut frame_rng(7, 0, 0)).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let poses: Vec<(f64, Pose)> = (0..1000u64)
        .map(|i| {
            let t = i as f64 * 0.03;
            (t, Pose::from_axis_angle(Point3::new(0.0, 0.01 * t, 0.0), Point3::new(t.sin(), t.cos(), 0.1 * t)))
        })
        .collect();
    let noisy: Vec<(f64, Pose)> = poses
        .iter()
        .enumerate()
        .map(|(i, (t, p))| {
            let jitter = Point3::new(unit(i as u64), unit(i as u64 + 7), unit(i as u64 + 13)) * 0.01;
            (*t, Pose::new(p.rotation, p.translation + jitter))
        })
        .collect();
    let gt = Trajectory::new(poses).unwrap();
    let est = Trajectory::new(noisy).unwrap();
    c.bench_function("compute_ate_1000", |b| b.iter(|| compute_ate(black_box(&est), &gt, 0.02).unwrap()));
}

criterion_group!(benches, surrogate, frontend, estimator, metrics);
criterion_main!(benches);
