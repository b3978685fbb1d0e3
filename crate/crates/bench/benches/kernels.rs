use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lga_core::attention::{scaled_attention, Branches, LgaBlock, LgaConfig};
use lga_core::backbone::{AttentionKind, Model, ModelConfig};
use lga_core::nn::ParamStore;
use lga_core::ops::{conv2d_direct, conv2d_im2col, ConvSpec};
use lga_core::{Dims, Rng, Tape, Tensor4};

fn random(dims: impl Into<Dims>, rng: &mut Rng) -> Tensor4<f32> {
    Tensor4::from_fn(dims, |_, _, _, _| rng.normal(0.0, 1.0) as f32)
}

fn conv(c: &mut Criterion) {
    let mut rng = Rng::seeded(0);
    let x = random((64, 16, 14, 14), &mut rng);
    let mut group = c.benchmark_group("conv2d 16->32 14x14 b64");
    for k in [1, 3, 7] {
        let w = random((32, 16, k, k), &mut rng);
        let spec = ConvSpec::same(k, 1).unwrap();
        group.bench_with_input(BenchmarkId::new("im2col", k), &k, |b, _| {
            b.iter(|| conv2d_im2col(black_box(&x), &w, None, spec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("direct", k), &k, |b, _| {
            b.iter(|| conv2d_direct(black_box(&x), &w, None, spec).unwrap())
        });
    }
    group.finish();
}

fn attention(c: &mut Criterion) {
    let mut rng = Rng::seeded(1);
    let d = Dims::new(64, 32, 7, 7);
    let t = [(); 4].map(|_| random(d, &mut rng));
    c.bench_function("scaled_attention 4 heads 7x7 b64", |b| {
        b.iter(|| {
            let mut tape = Tape::<f32>::new();
            let ids = t.each_ref().map(|x| tape.constant(x.clone()));
            scaled_attention(&mut tape, ids[0], ids[1], ids[2], ids[3], 4).unwrap().output
        })
    });
}

fn lga_block(c: &mut Criterion) {
    let cfg = LgaConfig::new(32, 4).unwrap();
    let mut store = ParamStore::<f32>::new();
    let mut rng = Rng::seeded(2);
    let block = LgaBlock::init(&cfg, Branches::Both, &mut store, "lga", &mut rng).unwrap();
    let x = random((64, 32, 7, 7), &mut rng);
    c.bench_function("lga block forward b64", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let p = store.bind_frozen(&mut tape);
            let xv = tape.constant(x.clone());
            block.forward(&mut tape, &p, xv).unwrap()
        })
    });
}

fn models(c: &mut Criterion) {
    let mut rng = Rng::seeded(3);
    let images = random((64, 1, 28, 28), &mut rng);
    let mut group = c.benchmark_group("model forward b64");
    group.sample_size(20);
    for kind in AttentionKind::ALL {
        let model = Model::<f32>::build(&ModelConfig::new(kind), &mut Rng::seeded(0)).unwrap();
        group.bench_function(kind.as_str(), |b| b.iter(|| model.logits(black_box(&images)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, conv, attention, lga_block, models);
criterion_main!(benches);
