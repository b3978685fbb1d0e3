mod common;

use common::data_dir;
use lga_core::data::{
    batches, encode_idx_images, encode_idx_labels, epoch_batches, normalize, parse_idx_images, parse_idx_labels,
    read_idx_images, read_idx_labels, training_subset, write_idx_images, write_idx_labels, Dataset, DatasetName,
    RawImages,
};
use lga_core::{Error, Rng};
use proptest::prelude::*;

fn synthetic(count: usize, rows: usize, cols: usize, seed: u64) -> (RawImages, Vec<u8>) {
    let mut rng = Rng::seeded(seed);
    let pixels = (0..count * rows * cols).map(|_| rng.below(256) as u8).collect();
    let labels = (0..count).map(|_| rng.below(10) as u8).collect();
    (RawImages { count, rows, cols, pixels }, labels)
}

#[test]
fn idx_files_round_trip_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = synthetic(7, 5, 4, 1);
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
    write_idx_images(&ip, &images).unwrap();
    write_idx_labels(&lp, &labels).unwrap();
    let ib = std::fs::read(&ip).unwrap();
    assert_eq!(&ib[..4], &[0, 0, 8, 3]);
    assert_eq!(&ib[4..16], &[0, 0, 0, 7, 0, 0, 0, 5, 0, 0, 0, 4]);
    assert_eq!(ib.len(), 16 + 7 * 20);
    let back = read_idx_images(&ip).unwrap();
    assert_eq!(back, images);
    assert_eq!(encode_idx_images(&back), ib);
    let lb = std::fs::read(&lp).unwrap();
    assert_eq!(&lb[..8], &[0, 0, 8, 1, 0, 0, 0, 7]);
    assert_eq!(read_idx_labels(&lp).unwrap(), labels);
    assert_eq!(encode_idx_labels(&labels), lb);
}

#[test]
fn malformed_idx_is_rejected() {
    let (images, labels) = synthetic(2, 3, 3, 2);
    let mut bytes = encode_idx_images(&images);
    bytes.pop();
    assert!(matches!(parse_idx_images(&bytes), Err(Error::Length(_))));
    let mut bad = encode_idx_labels(&labels);
    bad[3] = 3;
    assert!(matches!(parse_idx_labels(&bad), Err(Error::Format(_))));
    assert!(matches!(parse_idx_labels(&encode_idx_labels(&[1, 10])), Err(Error::Range(_))));
    let empty = RawImages { count: 0, rows: 28, cols: 28, pixels: vec![] };
    let ds = Dataset::<f32>::from_raw(DatasetName::Mnist, &parse_idx_images(&encode_idx_images(&empty)).unwrap(), &[]).unwrap();
    assert!(ds.is_empty());
    let (img3, _) = synthetic(3, 2, 2, 3);
    assert!(Dataset::<f32>::from_raw(DatasetName::Mnist, &img3, &[1, 2]).is_err());
}

#[test]
fn normalization_is_affine_and_exact() {
    let (raw, _) = synthetic(4, 6, 6, 4);
    for name in [DatasetName::Mnist, DatasetName::Fashion] {
        let (mean, std) = name.stats();
        let t = normalize::<f32>(&raw, mean, std).unwrap();
        for (&p, &v) in raw.pixels.iter().zip(t.data()) {
            assert_eq!(v, (p as f32 / 255.0 - mean as f32) / std as f32);
        }
    }
    let edge = RawImages { count: 1, rows: 1, cols: 2, pixels: vec![0, 255] };
    assert_eq!(normalize::<f32>(&edge, 0.0, 1.0).unwrap().data(), &[0.0, 1.0]);
}

#[test]
fn batch_examples() {
    let sizes: Vec<usize> = batches(5, 2, 0, false, None).unwrap().iter().map(Vec::len).collect();
    assert_eq!(sizes, [2, 2, 1]);
    assert_eq!(batches(5, 2, 0, false, None).unwrap().concat(), [0, 1, 2, 3, 4]);
    assert!(batches(5, 0, 0, true, None).is_err());
}

#[test]
fn real_files_have_expected_headers() {
    for (name, train_n) in [("mnist", 60_000), ("fashion", 60_000)] {
        let Some(dir) = data_dir(name) else {
            eprintln!("skipping {name}: data directory not found");
            continue;
        };
        for (split, n) in [("train", train_n), ("t10k", 10_000)] {
            let images = read_idx_images(dir.join(format!("{split}-images-idx3-ubyte"))).unwrap();
            let labels = read_idx_labels(dir.join(format!("{split}-labels-idx1-ubyte"))).unwrap();
            assert_eq!((images.count, images.rows, images.cols), (n, 28, 28));
            assert_eq!(labels.len(), n);
            assert!(labels.iter().all(|&l| l < 10));
        }
    }
}

proptest! {
    #[test]
    fn epoch_batches_cover_subset_once(n in 1usize..300, bs in 1usize..70, seed in any::<u64>(), epoch in 1usize..5, limit in 1usize..300) {
        let subset = training_subset(n, seed, Some(limit));
        prop_assert_eq!(subset.len(), limit.min(n));
        let b = epoch_batches(&subset, bs, seed, epoch).unwrap();
        prop_assert!(b.iter().all(|x| !x.is_empty() && x.len() <= bs));
        let mut seen: Vec<usize> = b.concat();
        prop_assert!(seen.iter().all(|&i| i < n));
        seen.sort_unstable();
        let mut want = subset.clone();
        want.sort_unstable();
        prop_assert_eq!(seen, want);
    }

    #[test]
    fn shuffled_batches_are_permutations(n in 0usize..200, bs in 1usize..50, seed in any::<u64>()) {
        let mut all = batches(n, bs, seed, true, None).unwrap().concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn idx_round_trip(count in 0usize..6, rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let (images, labels) = synthetic(count, rows, cols, seed);
        prop_assert_eq!(parse_idx_images(&encode_idx_images(&images)).unwrap(), images);
        prop_assert_eq!(parse_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels);
    }
}
