//! `key = value` run configuration.

use std::path::{Path, PathBuf};

use lga_core::attention::LgaConfig;
use lga_core::backbone::{AttentionKind, ModelConfig, SLOT_CHANNELS};
use lga_core::data::DatasetName;
use lga_core::train::OptimKind;
use lga_core::{Error, Result};

pub const KEYS: [&str; 18] = [
    "seed",
    "dataset.name",
    "dataset.images",
    "dataset.labels",
    "dataset.test_images",
    "dataset.test_labels",
    "dataset.limit",
    "model.attention",
    "model.heads",
    "lga.scale_kernels",
    "lga.local_kernels",
    "lga.global_kernel",
    "lga.pe_size",
    "optim.kind",
    "optim.lr",
    "train.epochs",
    "train.batch_size",
    "out.dir",
];

/// Keys every config must set.
pub const REQUIRED: [&str; 1] = ["model.attention"];
/// Keys `train` and `eval` additionally need.
pub const DATA_KEYS: [&str; 4] = [
    "dataset.images",
    "dataset.labels",
    "dataset.test_images",
    "dataset.test_labels",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub dataset: DatasetName,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Size of the training subset; the full set when absent.
    pub limit: Option<usize>,
    pub attention: AttentionKind,
    pub heads: usize,
    pub scale_kernels: Vec<usize>,
    pub local_kernels: Vec<usize>,
    pub global_kernel: usize,
    pub pe_size: (usize, usize),
    pub optim: OptimKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        let lga = LgaConfig::new(SLOT_CHANNELS, 4).expect("default block config is valid");
        Config {
            seed: 42,
            dataset: DatasetName::Mnist,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            limit: None,
            attention: AttentionKind::None,
            heads: lga.num_heads,
            scale_kernels: lga.scale_kernels,
            local_kernels: lga.local_kernels,
            global_kernel: lga.global_kernel,
            pe_size: lga.pe_base,
            optim: OptimKind::Adam,
            lr: 1e-3,
            epochs: 3,
            batch_size: 64,
            out_dir: None,
        }
    }
}

fn invalid(line: usize, key: &str, msg: impl Into<String>) -> Error {
    Error::InvalidValue {
        line,
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| invalid(line, key, format!("`{v}` is not a valid number")))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<usize>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse_num(line, key, p.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl Config {
    /// Parses config text. Relative paths are kept as written; see
    /// [`Config::resolve_paths`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Syntax {
                line,
                msg: format!("expected `key = value`, found `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(Error::Syntax {
                    line,
                    msg: "missing key before `=`".into(),
                });
            }
            let known = KEYS.iter().find(|k| **k == key).ok_or_else(|| Error::UnknownKey {
                line,
                key: key.to_string(),
            })?;
            if seen.contains(known) {
                return Err(Error::Syntax {
                    line,
                    msg: format!("`{key}` is set twice"),
                });
            }
            seen.push(known);
            cfg.set(line, key, value)?;
        }
        let missing: Vec<String> = REQUIRED
            .iter()
            .filter(|k| !seen.contains(k))
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }
        cfg.model_config().map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("invalid model settings: {msg}")),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    /// Makes relative dataset and output paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.train_images,
            &mut self.train_labels,
            &mut self.test_images,
            &mut self.test_labels,
            &mut self.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let path = |v: &str| -> Result<Option<PathBuf>> {
            if v.is_empty() {
                Err(invalid(line, key, "empty path"))
            } else {
                Ok(Some(PathBuf::from(v)))
            }
        };
        match key {
            "seed" => self.seed = parse_num(line, key, v)?,
            "dataset.name" => self.dataset = v.parse().map_err(|e: Error| invalid(line, key, strip(e)))?,
            "dataset.images" => self.train_images = path(v)?,
            "dataset.labels" => self.train_labels = path(v)?,
            "dataset.test_images" => self.test_images = path(v)?,
            "dataset.test_labels" => self.test_labels = path(v)?,
            "dataset.limit" => {
                let n: usize = parse_num(line, key, v)?;
                if n == 0 {
                    return Err(invalid(line, key, "limit must be positive"));
                }
                self.limit = Some(n);
            }
            "model.attention" => self.attention = v.parse().map_err(|e: Error| invalid(line, key, strip(e)))?,
            "model.heads" => self.heads = parse_num(line, key, v)?,
            "lga.scale_kernels" => self.scale_kernels = parse_list(line, key, v)?,
            "lga.local_kernels" => self.local_kernels = parse_list(line, key, v)?,
            "lga.global_kernel" => self.global_kernel = parse_num(line, key, v)?,
            "lga.pe_size" => {
                let dims = parse_list(line, key, &v.replace('x', ","))?;
                self.pe_size = match dims[..] {
                    [s] => (s, s),
                    [h, w] => (h, w),
                    _ => return Err(invalid(line, key, "expected `n` or `h,w`")),
                };
            }
            "optim.kind" => self.optim = v.parse().map_err(|e: Error| invalid(line, key, strip(e)))?,
            "optim.lr" => {
                let lr: f64 = parse_num(line, key, v)?;
                if !lr.is_finite() || lr < 0.0 {
                    return Err(invalid(line, key, "learning rate must be finite and non-negative"));
                }
                self.lr = lr;
            }
            "train.epochs" => self.epochs = parse_num(line, key, v)?,
            "train.batch_size" => {
                self.batch_size = parse_num(line, key, v)?;
                if self.batch_size == 0 {
                    return Err(invalid(line, key, "batch size must be at least 1"));
                }
            }
            "out.dir" => self.out_dir = path(v)?,
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    pub fn lga_config(&self) -> LgaConfig {
        LgaConfig {
            embed_dim: SLOT_CHANNELS,
            num_heads: self.heads,
            scale_kernels: self.scale_kernels.clone(),
            local_kernels: self.local_kernels.clone(),
            global_kernel: self.global_kernel,
            pe_base: self.pe_size,
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::new(self.attention);
        cfg.lga = self.lga_config();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fails with every missing dataset key at once.
    pub fn require_data(&self) -> Result<()> {
        let present = [
            self.train_images.is_some(),
            self.train_labels.is_some(),
            self.test_images.is_some(),
            self.test_labels.is_some(),
        ];
        let missing: Vec<String> = DATA_KEYS
            .iter()
            .zip(present)
            .filter(|(_, p)| !p)
            .map(|(k, _)| k.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingKeys(missing))
        }
    }

    /// Canonical text: every key in fixed order; parses back to `self`.
    pub fn to_text(&self) -> String {
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let rows: Vec<(&str, Option<String>)> = vec![
            ("seed", Some(self.seed.to_string())),
            ("dataset.name", Some(self.dataset.to_string())),
            ("dataset.images", p(&self.train_images)),
            ("dataset.labels", p(&self.train_labels)),
            ("dataset.test_images", p(&self.test_images)),
            ("dataset.test_labels", p(&self.test_labels)),
            ("dataset.limit", self.limit.map(|l| l.to_string())),
            ("model.attention", Some(self.attention.to_string())),
            ("model.heads", Some(self.heads.to_string())),
            ("lga.scale_kernels", Some(join(&self.scale_kernels))),
            ("lga.local_kernels", Some(join(&self.local_kernels))),
            ("lga.global_kernel", Some(self.global_kernel.to_string())),
            ("lga.pe_size", Some(format!("{},{}", self.pe_size.0, self.pe_size.1))),
            ("optim.kind", Some(self.optim.to_string())),
            ("optim.lr", Some(format!("{:?}", self.lr))),
            ("train.epochs", Some(self.epochs.to_string())),
            ("train.batch_size", Some(self.batch_size.to_string())),
            ("out.dir", p(&self.out_dir)),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            if let Some(v) = v {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

/// Drops the variant prefix so nested messages read naturally.
fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
