use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mcqdiff::eval::match_metric;
use mcqdiff::irt::{calibrate, CalibrationConfig};
use mcqdiff::model::population_likelihoods;
use mcqdiff::synth::{irt_synth, teacher_corpus, IrtSynthSpec, TeacherSpec};
use mcqdiff::{DifficultyModel, GenerationConfig, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bench_population(c: &mut Criterion) {
    let spec = TeacherSpec {
        items: 10,
        ..Default::default()
    };
    let data = teacher_corpus(&spec, &GenerationConfig::default()).unwrap();
    let mut group = c.benchmark_group("population_likelihoods");
    for population in [100, 1000] {
        let model = DifficultyModel::new(&ModelConfig {
            population,
            ..Default::default()
        })
        .unwrap();
        let features = model.encoder.encode_mcq(&data.augmented[0]).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(population), &population, |b, _| {
            b.iter(|| population_likelihoods(black_box(&features), &model.knowledge, &model.interaction).unwrap())
        });
    }
    group.finish();
}

fn bench_calibrate(c: &mut Criterion) {
    let data = irt_synth(&IrtSynthSpec {
        items: 40,
        students: 300,
        ..Default::default()
    })
    .unwrap();
    let cfg = CalibrationConfig::default();
    let mut group = c.benchmark_group("calibrate");
    group.sample_size(10);
    group.bench_function("2pl_40x300", |b| b.iter(|| calibrate(black_box(&data.responses), &cfg).unwrap()));
    group.finish();
}

fn bench_match(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("match_metric");
    for n in [100, 10_000] {
        let gt: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| match_metric(black_box(&pred), black_box(&gt)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_population, bench_calibrate, bench_match);
criterion_main!(benches);
