use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use pvhybrid_bench::{sin_demo_sample, scaled_pair, synthetic_frame};
use pvhybrid_core::data::PV_POWER;
use pvhybrid_core::expr::ExprTree;
use pvhybrid_core::featsel::{self, ImportanceConfig};
use pvhybrid_core::mlp::{self, Activation, BatchMode, MlpConfig, NetworkParams};
use pvhybrid_core::{gp, metrics, GpConfig};

fn expr_eval(c: &mut Criterion) {
    let (x, _) = sin_demo_sample(10_000, 1);
    let tree = ExprTree::parse_sexpr("(sin (+ (+ x0 3.141592653589793) (* 0.5 x1)))", 2).unwrap();
    c.bench_function("expr/evaluate_batch_10k", |b| {
        b.iter(|| tree.evaluate_batch(black_box(x.view())).unwrap())
    });
}

fn gp_generation(c: &mut Criterion) {
    let (x, y) = sin_demo_sample(500, 2);
    let cfg = GpConfig {
        population_size: 200,
        generations: 3,
        seed: 5,
        ..GpConfig::default()
    };
    let mut g = c.benchmark_group("gp");
    g.sample_size(10);
    g.bench_function("evolve_pop200_gen3", |b| {
        b.iter(|| gp::evolve(&cfg, x.view(), &y).unwrap())
    });
    g.finish();
}

fn mlp_kernels(c: &mut Criterion) {
    let (x, y) = scaled_pair(10, 3);
    let mut g = c.benchmark_group("mlp");
    g.sample_size(10);
    for act in [Activation::Tanh, Activation::Relu] {
        let cfg = MlpConfig {
            layer_widths: vec![2, 50, 1],
            hidden_activation: act,
            max_iterations: 20,
            batch_mode: BatchMode::FullBatch,
            seed: 1,
            ..MlpConfig::default()
        };
        g.bench_function(format!("train_2x50_20it_{}", act.name()), |b| {
            b.iter(|| mlp::train(&cfg, x.view(), &y).unwrap())
        });
    }
    let mut rng = rand::rng();
    g.bench_function("backprop_single_row_2x50", |b| {
        b.iter_batched(
            || NetworkParams::init(&[2, 50, 1], 0.5, &mut rng),
            |p| mlp::backprop_gradients(&p, Activation::Tanh, &[0.3, 0.7], &[0.4]).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

fn ranking(c: &mut Criterion) {
    let frame = synthetic_frame(30, 4);
    let names: Vec<String> = frame
        .column_names()
        .iter()
        .filter(|n| *n != PV_POWER)
        .cloned()
        .collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let x = frame.to_matrix(&refs).unwrap();
    let y = frame.require(PV_POWER).unwrap().to_vec();
    let cfg = ImportanceConfig::default();
    let mut g = c.benchmark_group("featsel");
    g.sample_size(10);
    g.bench_function("importance_30_days", |b| {
        b.iter(|| featsel::importance(&names, x.view(), &y, &cfg).unwrap())
    });
    g.finish();
}

fn scoring(c: &mut Criterion) {
    let (_, y) = sin_demo_sample(100_000, 6);
    let p: Vec<f64> = y.iter().map(|v| v * 0.9 + 0.01).collect();
    c.bench_function("metrics/score_100k", |b| {
        b.iter(|| metrics::score(black_box(&y), black_box(&p)).unwrap())
    });
}

criterion_group!(benches, expr_eval, gp_generation, mlp_kernels, ranking, scoring);
criterion_main!(benches);
