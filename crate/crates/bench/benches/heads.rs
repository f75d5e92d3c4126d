use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use kanhead::{
    make_uniform_grid, softmax_cross_entropy, Head, HeadKind, KanLinearLayer, Optimizer,
    OptimizerConfig,
};
use kanhead_bench::{input_batch, labels};
use std::hint::black_box;

fn basis(c: &mut Criterion) {
    let mut group = c.benchmark_group("basis");
    for degree in [1, 3, 5] {
        let grid = make_uniform_grid(-1.0, 1.0, 5, degree).unwrap();
        let mut values = vec![0.0; grid.basis_count()];
        let mut derivs = vec![0.0; grid.basis_count()];
        group.bench_with_input(BenchmarkId::new("values", degree), &grid, |b, g| {
            b.iter(|| g.basis_values_into(black_box(0.37), &mut values))
        });
        group.bench_with_input(
            BenchmarkId::new("values+derivatives", degree),
            &grid,
            |b, g| {
                b.iter(|| g.basis_and_derivatives_into(black_box(0.37), &mut values, &mut derivs))
            },
        );
    }
    group.finish();
}

fn kan_layer(c: &mut Criterion) {
    let grid = make_uniform_grid(-1.0, 1.0, 5, 3).unwrap();
    let mut group = c.benchmark_group("kan_layer");
    for (in_dim, out_dim) in [(8, 32), (768, 32)] {
        let layer = KanLinearLayer::new(in_dim, out_dim, grid.clone(), 0).unwrap();
        let x = input_batch(64, in_dim);
        let up = input_batch(64, out_dim);
        let id = format!("{in_dim}x{out_dim}/b64");
        group.throughput(Throughput::Elements((64 * in_dim * out_dim) as u64));
        group.bench_function(BenchmarkId::new("forward", &id), |b| {
            b.iter(|| layer.forward(black_box(&x)).unwrap())
        });
        let (_, cache) = layer.forward(&x).unwrap();
        group.bench_function(BenchmarkId::new("backward", &id), |b| {
            b.iter(|| layer.backward(&cache, black_box(&up)).unwrap())
        });
    }
    group.finish();
}

fn train_step(c: &mut Criterion) {
    let grid = make_uniform_grid(-1.0, 1.0, 5, 3).unwrap();
    let mut group = c.benchmark_group("train_step");
    let x = input_batch(64, 768);
    let y = labels(64, 10);
    for kind in [HeadKind::Kan, HeadKind::Mlp] {
        let mut head = Head::build(kind, 768, 32, 10, &grid, 0).unwrap();
        let mut opt = Optimizer::new(&OptimizerConfig::default(), &head.parameter_lens());
        group.bench_function(BenchmarkId::new(kind.to_string(), "768-32-10/b64"), |b| {
            b.iter(|| {
                let (logits, cache) = head.forward(&x).unwrap();
                let (_, grad) = softmax_cross_entropy(&logits, &y).unwrap();
                let grads = head.backward(&cache, &grad).unwrap();
                let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
                opt.step(&mut head.parameters_mut(), &refs).unwrap();
            })
        });
    }
    group.finish();
}

criterion_group!(benches, basis, kan_layer, train_step);
criterion_main!(benches);
