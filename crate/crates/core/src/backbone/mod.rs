//! Two-stage CNN classifier with one attention slot after the last stage.

use std::fmt;
use std::str::FromStr;

use crate::attention::{Branches, LgaBlock, LgaConfig, MhsaBlock, SeBlock};
use crate::autodiff::{Tape, VarId};
use crate::error::{Error, Result};
use crate::flops::FlopReport;
use crate::nn::{Bound, Conv2dLayer, Linear, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor4};

/// Channel count at the attention slot.
pub const SLOT_CHANNELS: usize = 32;
const CONV1_CHANNELS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    None,
    Se,
    Mhsa,
    La,
    Ga,
    Lga,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 6] = [
        AttentionKind::None,
        AttentionKind::Se,
        AttentionKind::Mhsa,
        AttentionKind::La,
        AttentionKind::Ga,
        AttentionKind::Lga,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttentionKind::None => "none",
            AttentionKind::Se => "se",
            AttentionKind::Mhsa => "mhsa",
            AttentionKind::La => "la",
            AttentionKind::Ga => "ga",
            AttentionKind::Lga => "lga",
        }
    }

    fn branches(self) -> Option<Branches> {
        match self {
            AttentionKind::La => Some(Branches::LocalOnly),
            AttentionKind::Ga => Some(Branches::GlobalOnly),
            AttentionKind::Lga => Some(Branches::Both),
            _ => None,
        }
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttentionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown attention `{s}` (expected none|se|mhsa|la|ga|lga)")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub attention: AttentionKind,
    /// Used by `mhsa` (heads only) and the three LGA tags.
    pub lga: LgaConfig,
    pub num_classes: usize,
    /// Input `(h, w)`; both must be divisible by 4.
    pub input_hw: (usize, usize),
}

impl ModelConfig {
    /// 28×28 single-channel input, 10 classes, 4 heads.
    pub fn new(attention: AttentionKind) -> Self {
        ModelConfig {
            attention,
            lga: LgaConfig::new(SLOT_CHANNELS, 4).expect("default block config is valid"),
            num_classes: 10,
            input_hw: (28, 28),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lga.embed_dim != SLOT_CHANNELS {
            return Err(Error::config(format!(
                "attention width {} does not match the {SLOT_CHANNELS} slot channels",
                self.lga.embed_dim
            )));
        }
        self.lga.validate()?;
        let (h, w) = self.input_hw;
        if h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::config(format!("input {h}x{w} must be a positive multiple of 4")));
        }
        if self.num_classes == 0 {
            return Err(Error::config("num_classes must be positive"));
        }
        Ok(())
    }

    /// Spatial size at the attention slot.
    pub fn slot_hw(&self) -> (usize, usize) {
        (self.input_hw.0 / 4, self.input_hw.1 / 4)
    }
}

#[derive(Clone, Debug)]
pub enum Slot {
    Identity,
    Se(SeBlock),
    Mhsa(MhsaBlock),
    Lga(LgaBlock),
}

impl Slot {
    /// Block for `kind` over `lga.embed_dim` channels; `mhsa` uses
    /// `lga.num_heads`. Parameters are named after the tag.
    pub fn build<T: Scalar>(kind: AttentionKind, lga: &LgaConfig, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<Self> {
        let d = lga.embed_dim;
        Ok(match kind {
            AttentionKind::None => Slot::Identity,
            AttentionKind::Se => Slot::Se(SeBlock::init(store, "se", d, rng)?),
            AttentionKind::Mhsa => Slot::Mhsa(MhsaBlock::init(store, "mhsa", d, lga.num_heads, rng)?),
            kind => {
                let branches = kind.branches().expect("lga family");
                Slot::Lga(LgaBlock::init(lga, branches, store, kind.as_str(), rng)?)
            }
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: VarId) -> Result<VarId> {
        match self {
            Slot::Identity => Ok(x),
            Slot::Se(b) => b.forward(tape, p, x),
            Slot::Mhsa(b) => b.forward(tape, p, x),
            Slot::Lga(b) => b.forward(tape, p, x),
        }
    }

    pub fn flops(&self, prefix: &str, h: usize, w: usize) -> Vec<crate::flops::FlopRow> {
        match self {
            Slot::Identity => Vec::new(),
            Slot::Se(b) => b.flops(prefix),
            Slot::Mhsa(b) => b.flops(prefix, h, w),
            Slot::Lga(b) => b.flops(prefix, h, w),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model<T: Scalar = f32> {
    pub cfg: ModelConfig,
    pub params: ParamStore<T>,
    pub conv1: Conv2dLayer,
    pub conv2: Conv2dLayer,
    pub slot: Slot,
    pub head: Linear,
}

impl<T: Scalar> Model<T> {
    pub fn build(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let conv1 = Conv2dLayer::init(&mut params, "conv1", 1, CONV1_CHANNELS, 3, 1, rng)?;
        let conv2 = Conv2dLayer::init(&mut params, "conv2", CONV1_CHANNELS, SLOT_CHANNELS, 3, 1, rng)?;
        let slot = Slot::build(cfg.attention, &cfg.lga, &mut params, rng)?;
        let head = Linear::init(&mut params, "head", SLOT_CHANNELS, cfg.num_classes, rng)?;
        Ok(Model {
            cfg: cfg.clone(),
            params,
            conv1,
            conv2,
            slot,
            head,
        })
    }

    pub fn input_dims(&self, batch: usize) -> Dims {
        Dims::new(batch, 1, self.cfg.input_hw.0, self.cfg.input_hw.1)
    }

    /// Features at the slot, before attention.
    pub fn stem(&self, tape: &mut Tape<T>, p: &Bound, images: VarId) -> Result<VarId> {
        let d = tape.value(images).dims();
        if d != self.input_dims(d.b) {
            return Err(Error::shape(format!(
                "model expects (b, 1, {}, {}) images, got {d:?}",
                self.cfg.input_hw.0, self.cfg.input_hw.1
            )));
        }
        let x = self.conv1.forward(tape, p, images)?;
        let x = tape.relu(x)?;
        let x = tape.maxpool2x2(x)?;
        let x = self.conv2.forward(tape, p, x)?;
        let x = tape.relu(x)?;
        tape.maxpool2x2(x)
    }

    pub fn apply_slot(&self, tape: &mut Tape<T>, p: &Bound, x: VarId) -> Result<VarId> {
        self.slot.forward(tape, p, x)
    }

    /// Pooled slot output through the classifier, `(b, classes, 1, 1)`.
    pub fn classify(&self, tape: &mut Tape<T>, p: &Bound, features: VarId) -> Result<VarId> {
        let pooled = tape.global_avg_pool(features)?;
        self.head.forward(tape, p, pooled)
    }

    /// Logits `(b, num_classes, 1, 1)`.
    pub fn forward(&self, tape: &mut Tape<T>, p: &Bound, images: VarId) -> Result<VarId> {
        let x = self.stem(tape, p, images)?;
        let x = self.apply_slot(tape, p, x)?;
        self.classify(tape, p, x)
    }

    /// Inference-only forward on a fresh tape.
    pub fn logits(&self, images: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let x = tape.constant(images.clone());
        let y = self.forward(&mut tape, &p, x)?;
        Ok(tape.value(y).clone())
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Per-layer FLOPs for `batch` images.
    pub fn flops_estimate(&self, batch: usize) -> FlopReport {
        let (h, w) = self.cfg.input_hw;
        let (sh, sw) = self.cfg.slot_hw();
        let mut report = FlopReport::default();
        report.push("conv1", self.conv1.flops(h, w));
        report.push("conv2", self.conv2.flops(h / 2, w / 2));
        report.extend(self.slot.flops(self.cfg.attention.as_str(), sh, sw));
        report.push("head", self.head.flops());
        for row in &mut report.rows {
            row.flops *= batch as u64;
        }
        report
    }

    /// Same architecture and parameter values at another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
            conv1: self.conv1.clone(),
            conv2: self.conv2.clone(),
            slot: self.slot.clone(),
            head: self.head.clone(),
        }
    }
}
