//! IDX image/label files, normalization and deterministic batching.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor4};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

/// Unsigned-byte images as stored in an IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn header(bytes: &[u8], words: usize, magic: u32, what: &str) -> Result<Vec<u32>> {
    if bytes.len() >= 4 {
        check_magic(u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]), magic, what)?;
    }
    if bytes.len() < 4 * words {
        return Err(Error::Length(format!(
            "{what}: header needs {} bytes, file has {}",
            4 * words,
            bytes.len()
        )));
    }
    Ok(bytes[..4 * words]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_magic(found: u32, expected: u32, what: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Format(format!(
            "{what}: magic {found:#010x}, expected {expected:#010x}"
        )));
    }
    Ok(())
}

fn check_payload(have: usize, need: usize, what: &str) -> Result<()> {
    if have != need {
        return Err(Error::Length(format!("{what}: payload is {have} bytes, header implies {need}")));
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<RawImages> {
    let h = header(bytes, 4, IMAGE_MAGIC, "image file")?;
    let (count, rows, cols) = (h[1] as usize, h[2] as usize, h[3] as usize);
    let need = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Size(format!("{count}x{rows}x{cols} images")))?;
    check_payload(bytes.len() - 16, need, "image file")?;
    Ok(RawImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let h = header(bytes, 2, LABEL_MAGIC, "label file")?;
    let count = h[1] as usize;
    check_payload(bytes.len() - 8, count, "label file")?;
    let labels = bytes[8..].to_vec();
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES) {
        return Err(Error::Range(format!("label {l} at index {i} is not in 0..{NUM_CLASSES}")));
    }
    Ok(labels)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<RawImages> {
    let path = path.as_ref();
    parse_idx_images(&read(path)?).map_err(|e| e.context(path))
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    parse_idx_labels(&read(path)?).map_err(|e| e.context(path))
}

pub fn encode_idx_images(images: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &RawImages) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_idx_images(images)).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_idx_labels(labels)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetName {
    Mnist,
    Fashion,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Fashion => "fashion",
        }
    }

    /// Pixel mean and standard deviation on the `[0, 1]` scale.
    pub fn stats(self) -> (f64, f64) {
        match self {
            DatasetName::Mnist => (0.1307, 0.3081),
            DatasetName::Fashion => (0.2860, 0.3530),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetName::Mnist),
            "fashion" => Ok(DatasetName::Fashion),
            _ => Err(Error::config(format!("unknown dataset `{s}` (expected mnist|fashion)"))),
        }
    }
}

/// `(byte / 255 − mean) / std` as a `(n, 1, rows, cols)` tensor.
pub fn normalize<T: Scalar>(raw: &RawImages, mean: f64, std: f64) -> Result<Tensor4<T>> {
    if std == 0.0 || !std.is_finite() || !mean.is_finite() {
        return Err(Error::config(format!("cannot normalize with mean {mean}, std {std}")));
    }
    let (m, s, full) = (T::from_f64(mean), T::from_f64(std), T::from_f64(255.0));
    let data = raw.pixels.iter().map(|&p| (T::from_f64(p as f64) / full - m) / s).collect();
    Tensor4::from_vec(Dims::new(raw.count, 1, raw.rows, raw.cols), data)
}

#[derive(Clone, Debug)]
pub struct Dataset<T: Scalar = f32> {
    pub name: DatasetName,
    pub images: Tensor4<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn from_raw(name: DatasetName, raw: &RawImages, labels: &[u8]) -> Result<Self> {
        if raw.count != labels.len() {
            return Err(Error::Length(format!(
                "{} images but {} labels",
                raw.count,
                labels.len()
            )));
        }
        let (mean, std) = name.stats();
        Ok(Dataset {
            name,
            images: normalize(raw, mean, std)?,
            labels: labels.iter().map(|&l| l as usize).collect(),
        })
    }

    pub fn load(name: DatasetName, images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        Self::from_raw(name, &read_idx_images(images)?, &read_idx_labels(labels)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Images and labels at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor4<T>, Vec<usize>)> {
        let d = self.images.dims();
        let per = d.c * d.plane();
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Range(format!("sample {i} of {}", self.len())));
            }
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
            labels.push(self.labels[i]);
        }
        Ok((Tensor4::from_vec(Dims::new(indices.len(), d.c, d.h, d.w), data)?, labels))
    }
}

/// Index batches over `0..n`: a seeded permutation when `shuffle`, cut to the
/// first `limit` entries, then chunked with the final partial batch kept.
pub fn batches(n: usize, batch_size: usize, seed: u64, shuffle: bool, limit: Option<usize>) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let mut order = if shuffle {
        Rng::seeded(seed).shuffle(n)
    } else {
        (0..n).collect()
    };
    if let Some(l) = limit {
        order.truncate(l);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Fixed training subset of size `limit` (or everything) chosen by `seed`.
pub fn training_subset(n: usize, seed: u64, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(l) if l < n => {
            let mut idx = Rng::seeded(seed).shuffle(n);
            idx.truncate(l);
            idx
        }
        _ => (0..n).collect(),
    }
}

/// Shuffled batches of `subset` for one epoch; every epoch draws from its own
/// PCG32 stream so orders are reproducible per `(seed, epoch)`.
pub fn epoch_batches(subset: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let mut order = subset.to_vec();
    Rng::new(seed, 1 + epoch as u64).shuffle_in_place(&mut order);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let raw = RawImages {
            count: 1,
            rows: 1,
            cols: 3,
            pixels: vec![0, 255, 51],
        };
        let t = normalize::<f32>(&raw, 0.0, 1.0).unwrap();
        assert_eq!(&t.data()[..2], &[0.0, 1.0]);
        let t = normalize::<f64>(&raw, 0.2, 0.5).unwrap();
        assert_eq!(t.data()[2], 0.0);
        assert!(normalize::<f32>(&raw, 0.0, 0.0).is_err());
    }

    #[test]
    fn batch_sizes_and_order() {
        let b = batches(5, 2, 0, false, None).unwrap();
        assert_eq!(b, vec![vec![0, 1], vec![2, 3], vec![4]]);
        assert_eq!(batches(5, 2, 7, true, None).unwrap(), batches(5, 2, 7, true, None).unwrap());
        assert_eq!(batches(10, 3, 1, true, Some(4)).unwrap().concat().len(), 4);
        assert!(batches(3, 0, 0, false, None).is_err());
    }

    #[test]
    fn wrong_magic_and_short_payload() {
        let labels = encode_idx_labels(&[1, 2, 3]);
        assert!(matches!(parse_idx_images(&labels), Err(Error::Format(_))));
        let raw = RawImages {
            count: 2,
            rows: 2,
            cols: 2,
            pixels: vec![0; 8],
        };
        let mut bytes = encode_idx_images(&raw);
        bytes.pop();
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Length(_))));
        assert!(matches!(parse_idx_labels(&encode_idx_labels(&[3, 10])), Err(Error::Range(_))));
        assert!(parse_idx_labels(&encode_idx_labels(&[])).unwrap().is_empty());
    }
}
