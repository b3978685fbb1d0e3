//! FLOP accounting. One multiply-accumulate counts as two FLOPs; element-wise
//! work (activations, residual adds, softmax) is not counted.

use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlopRow {
    pub layer: String,
    pub flops: u64,
}

impl FlopRow {
    pub fn new(layer: impl Into<String>, flops: u64) -> Self {
        FlopRow {
            layer: layer.into(),
            flops,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlopReport {
    pub rows: Vec<FlopRow>,
}

impl FlopReport {
    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.flops).sum()
    }

    pub fn push(&mut self, layer: impl Into<String>, flops: u64) {
        self.rows.push(FlopRow::new(layer, flops));
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = FlopRow>) {
        self.rows.extend(rows);
    }
}

impl fmt::Display for FlopReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.layer.len()).max().unwrap_or(5).max(5);
        for r in &self.rows {
            writeln!(f, "{:<width$}  {:>14}", r.layer, r.flops)?;
        }
        write!(f, "{:<width$}  {:>14}", "total", self.total())
    }
}
