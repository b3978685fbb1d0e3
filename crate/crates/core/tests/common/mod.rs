#![allow(dead_code)]

use lga_core::{Dims, Rng, Tensor4};

pub fn normal(dims: impl Into<Dims>, rng: &mut Rng) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_, _, _, _| rng.normal(0.0, 1.0))
}

pub fn normal32(dims: impl Into<Dims>, rng: &mut Rng) -> Tensor4<f32> {
    Tensor4::from_fn(dims, |_, _, _, _| rng.normal(0.0, 1.0) as f32)
}

/// Uniform integer in `lo..=hi`.
pub fn pick(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below((hi - lo + 1) as u32) as usize
}

/// Largest `|a − b| / max(1, |b|)` over all elements.
pub fn max_rel_diff(a: &Tensor4<f64>, b: &Tensor4<f64>) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Naive per-head, per-token attention: for every head, energy between
/// query token `i` and key token `j` is the dot product of their channel
/// slices over `√head_dim`, softmax over `j`, then a weighted sum of value
/// columns plus the residual.
pub fn token_loop_attention(
    q: &Tensor4<f64>,
    k: &Tensor4<f64>,
    v: &Tensor4<f64>,
    x: &Tensor4<f64>,
    heads: usize,
) -> (Tensor4<f64>, Vec<Vec<Vec<Vec<f64>>>>) {
    let d = q.dims();
    let hd = d.c / heads;
    let n = d.h * d.w;
    let tok = |t: &Tensor4<f64>, b: usize, c: usize, i: usize| t.get(b, c, i / d.w, i % d.w);
    let mut out = x.clone();
    let mut weights = vec![vec![vec![vec![0.0; n]; n]; heads]; d.b];
    for b in 0..d.b {
        for h in 0..heads {
            for i in 0..n {
                let mut e = vec![0.0; n];
                for (j, ej) in e.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for c in h * hd..(h + 1) * hd {
                        s += tok(q, b, c, i) * tok(k, b, c, j);
                    }
                    *ej = s / (hd as f64).sqrt();
                }
                let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = e.iter().map(|v| (v - m).exp()).sum();
                let a: Vec<f64> = e.iter().map(|v| (v - m).exp() / z).collect();
                for c in h * hd..(h + 1) * hd {
                    let mut s = 0.0;
                    for (j, aj) in a.iter().enumerate() {
                        s += aj * tok(v, b, c, j);
                    }
                    let (y, xx) = (i / d.w, i % d.w);
                    out.set(b, c, y, xx, out.get(b, c, y, xx) + s);
                }
                weights[b][h][i] = a;
            }
        }
    }
    (out, weights)
}

/// Directory holding `mnist/` and `fashion/` IDX files: `LGA_DATA_DIR` or
/// `<workspace>/data`. `None` when the files are absent.
pub fn data_dir(dataset: &str) -> Option<std::path::PathBuf> {
    let root = std::env::var_os("LGA_DATA_DIR")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    let dir = root.join(dataset);
    dir.join("train-images-idx3-ubyte").is_file().then_some(dir)
}
