use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

pub const CSV_HEADER: &str = "epoch,split,loss,top1,top5,seconds";

/// Rank of the true class among `row`: the number of classes scoring higher,
/// with ties going to the lower class index.
pub fn rank_of(row: &[f64], label: usize) -> usize {
    let y = row[label];
    row.iter()
        .enumerate()
        .filter(|&(j, &v)| v > y || (v == y && j < label))
        .count()
}

/// Number of samples whose label is among the `k` largest logits of
/// `(b, classes, 1, 1)` logits.
pub fn topk_hits<T: Scalar>(logits: &Tensor4<T>, labels: &[usize], k: usize) -> Result<usize> {
    let d = logits.dims();
    let classes = d.c * d.plane();
    if d.b != labels.len() {
        return Err(Error::shape(format!("{} logit rows for {} labels", d.b, labels.len())));
    }
    let mut hits = 0;
    let mut row = vec![0.0; classes];
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Range(format!("label {label} with {classes} classes")));
        }
        for (r, v) in row.iter_mut().zip(&logits.data()[i * classes..(i + 1) * classes]) {
            *r = v.as_f64();
        }
        if rank_of(&row, label) < k {
            hits += 1;
        }
    }
    Ok(hits)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Running totals over one pass of a split.
#[derive(Clone, Debug, Default)]
pub struct Tally {
    pub samples: usize,
    pub loss_sum: f64,
    pub top1: usize,
    pub top5: usize,
}

impl Tally {
    pub fn add_batch<T: Scalar>(&mut self, logits: &Tensor4<T>, labels: &[usize], mean_loss: f64) -> Result<()> {
        self.top1 += topk_hits(logits, labels, 1)?;
        self.top5 += topk_hits(logits, labels, 5)?;
        self.loss_sum += mean_loss * labels.len() as f64;
        self.samples += labels.len();
        Ok(())
    }

    pub fn finish(&self, epoch: usize, split: Split, seconds: f64) -> EpochMetrics {
        let pct = |h: usize| if self.samples == 0 { 0.0 } else { 100.0 * h as f64 / self.samples as f64 };
        EpochMetrics {
            epoch,
            split,
            loss: if self.samples == 0 { 0.0 } else { self.loss_sum / self.samples as f64 },
            top1: pct(self.top1),
            top5: pct(self.top5),
            seconds,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: Split,
    /// Sample-weighted mean cross-entropy.
    pub loss: f64,
    pub top1: f64,
    pub top5: f64,
    pub seconds: f64,
}

impl EpochMetrics {
    /// CSV row without a trailing newline.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.2},{:.2},{:.3}",
            self.epoch, self.split, self.loss, self.top1, self.top5, self.seconds
        )
    }
}

/// Header plus one LF-terminated row per entry.
pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}
