use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lga_core::attention::LgaConfig;
use lga_core::backbone::{AttentionKind, Model, ModelConfig};
use lga_core::data::{training_subset, Dataset};
use lga_core::probe::{gradcheck_block, NamedReport};
use lga_core::train::{evaluate, fit, metrics_csv, Checkpoint, EpochMetrics, FitOptions, Optimizer};
use lga_core::{Dims, Error, FlopReport, Result, Rng, Tensor4};

use crate::config::Config;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const MANIFEST_FILE: &str = "manifest.txt";
/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_THRESHOLD: f64 = 1e-5;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn emit(w: &mut dyn Write, text: &str) -> Result<()> {
    w.write_all(text.as_bytes()).map_err(io_err(Path::new("<output>")))
}

/// Parameter count and per-image FLOPs of every attention tag under the
/// block settings of `base`.
pub fn tag_table(base: &ModelConfig) -> Result<Vec<(AttentionKind, usize, u64)>> {
    AttentionKind::ALL
        .into_iter()
        .map(|kind| {
            let mut cfg = base.clone();
            cfg.attention = kind;
            let model = Model::<f32>::build(&cfg, &mut Rng::seeded(0))?;
            Ok((kind, model.param_count(), model.flops_estimate(1).total()))
        })
        .collect()
}

fn format_tag_table(rows: &[(AttentionKind, usize, u64)]) -> String {
    let mut out = format!("{:<6} {:>12} {:>16}\n", "tag", "parameters", "flops_per_image");
    for (k, p, f) in rows {
        out.push_str(&format!("{:<6} {:>12} {:>16}\n", k.as_str(), p, f));
    }
    out
}

fn load_split(cfg: &Config, images: &Option<PathBuf>, labels: &Option<PathBuf>) -> Result<Dataset> {
    let (Some(images), Some(labels)) = (images, labels) else {
        cfg.require_data()?;
        unreachable!("require_data reports missing paths");
    };
    Dataset::load(cfg.dataset, images, labels)
}

/// What a finished training run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub rows: Vec<EpochMetrics>,
    pub final_test: EpochMetrics,
    pub param_count: usize,
    pub flops_per_image: u64,
    pub wall_seconds: f64,
}

/// Trains under `cfg` and writes the metrics CSV, the final checkpoint and a
/// run manifest into `out_dir`. Progress goes to `log`.
pub fn cmd_train(cfg: &Config, out_dir: &Path, log: &mut dyn Write) -> Result<RunSummary> {
    let start = Instant::now();
    cfg.require_data()?;
    let model_cfg = cfg.model_config()?;
    let train = load_split(cfg, &cfg.train_images, &cfg.train_labels)?;
    let test = load_split(cfg, &cfg.test_images, &cfg.test_labels)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut model = Model::<f32>::build(&model_cfg, &mut Rng::seeded(cfg.seed))?;
    let mut optim = Optimizer::new(cfg.optim, cfg.lr, &model.params);
    let subset = training_subset(train.len(), cfg.seed, cfg.limit);
    emit(
        log,
        &format!(
            "training {} on {} of {} {} images, {} parameters\n",
            cfg.attention,
            subset.len(),
            train.len(),
            cfg.dataset,
            model.param_count()
        ),
    )?;
    let opts = FitOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    let mut log_err = None;
    let mut rows = fit(&mut model, &mut optim, &train, &subset, &test, &opts, |report, test_row| {
        for m in [&report.metrics, test_row] {
            let line = format!(
                "epoch {} {:<5} loss {:.4} top1 {:6.2} top5 {:6.2} ({:.1} s)\n",
                m.epoch, m.split, m.loss, m.top1, m.top5, m.seconds
            );
            if let Err(e) = emit(log, &line) {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    let timings: Vec<(usize, String, f64)> = rows.iter().map(|r| (r.epoch, r.split.to_string(), r.seconds)).collect();
    // Wall-clock stays in the manifest so the CSV is reproducible byte for byte.
    for r in &mut rows {
        r.seconds = 0.0;
    }
    let metrics_path = out_dir.join(METRICS_FILE);
    std::fs::write(&metrics_path, metrics_csv(&rows)).map_err(io_err(&metrics_path))?;

    let mut ckpt = Checkpoint::from_params(cfg.to_text(), &model.params);
    ckpt.tensors.extend(optim.state_tensors(&model.params));
    ckpt.save(out_dir.join(CHECKPOINT_FILE))?;

    let final_test = rows
        .iter()
        .rev()
        .find(|r| r.split == lga_core::train::Split::Test)
        .cloned()
        .unwrap_or_else(|| lga_core::train::Tally::default().finish(0, lga_core::train::Split::Test, 0.0));
    let flops_per_image = model.flops_estimate(1).total();
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut manifest = String::from("[config]\n");
    manifest.push_str(&cfg.to_text());
    manifest.push_str("\n[summary]\n");
    for (k, v) in [
        ("seed", cfg.seed.to_string()),
        ("attention", cfg.attention.to_string()),
        ("dataset", cfg.dataset.to_string()),
        ("train_samples", subset.len().to_string()),
        ("test_samples", test.len().to_string()),
        ("parameters", model.param_count().to_string()),
        ("flops_per_image", flops_per_image.to_string()),
        ("final_test_loss", format!("{:.6}", final_test.loss)),
        ("final_test_top1", format!("{:.2}", final_test.top1)),
        ("final_test_top5", format!("{:.2}", final_test.top5)),
        ("wall_seconds", format!("{wall_seconds:.1}")),
    ] {
        manifest.push_str(&format!("{k} = {v}\n"));
    }
    manifest.push_str("\n[timing]\n");
    for (epoch, split, secs) in timings {
        manifest.push_str(&format!("epoch {epoch} {split} = {secs:.1}\n"));
    }
    manifest.push_str("\n[tags]\n");
    manifest.push_str(&format_tag_table(&tag_table(&model_cfg)?));
    let manifest_path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, manifest).map_err(io_err(&manifest_path))?;
    emit(log, &format!("wrote {} ({wall_seconds:.1} s)\n", out_dir.display()))?;

    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        rows,
        final_test,
        param_count: model.param_count(),
        flops_per_image,
        wall_seconds,
    })
}

/// Evaluates a checkpoint on the configured test split. The row carries the
/// configured final epoch so it lines up with the training CSV.
pub fn cmd_eval(checkpoint: &Path, cfg: &Config) -> Result<EpochMetrics> {
    let model_cfg = cfg.model_config()?;
    let mut model = Model::<f32>::build(&model_cfg, &mut Rng::seeded(cfg.seed))?;
    Checkpoint::<f32>::load(checkpoint)?.restore_params(&mut model.params)?;
    let test = load_split(cfg, &cfg.test_images, &cfg.test_labels)?;
    evaluate(&model, &test, cfg.batch_size, cfg.epochs)
}

/// Parses `BxCxHxW`.
pub fn parse_dims(s: &str) -> Result<Dims> {
    let parts: Vec<usize> = s
        .split(['x', 'X'])
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("dims `{s}` must look like BxCxHxW")))?;
    match parts[..] {
        [b, c, h, w] if b * c * h * w > 0 => Ok(Dims::new(b, c, h, w)),
        _ => Err(Error::Config(format!("dims `{s}` must be four positive extents BxCxHxW"))),
    }
}

/// Block settings for a gradient check when no config is given: one small
/// kernel per stage so the check stays fast.
pub fn gradcheck_block_config(channels: usize) -> Result<LgaConfig> {
    let heads = if channels % 2 == 0 { 2 } else { 1 };
    let mut cfg = LgaConfig::new(channels, heads)?;
    cfg.scale_kernels = vec![3];
    cfg.local_kernels = vec![3];
    cfg.global_kernel = 5;
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_gradcheck(kind: AttentionKind, dims: Dims, eps: f64, block: &LgaConfig, seed: u64) -> Result<NamedReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    gradcheck_block(kind, block, dims, eps, seed)
}

pub fn cmd_flops(cfg: &Config) -> Result<(FlopReport, usize, String)> {
    let model_cfg = cfg.model_config()?;
    let model = Model::<f32>::build(&model_cfg, &mut Rng::seeded(cfg.seed))?;
    let report = model.flops_estimate(1);
    Ok((report, model.param_count(), format_tag_table(&tag_table(&model_cfg)?)))
}

#[derive(Clone, Debug)]
pub struct BenchResult {
    pub batch: usize,
    pub repeat: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Wall-clock of one inference forward on a random batch of
/// `train.batch_size` images, after three warm-up passes.
pub fn cmd_bench(cfg: &Config, repeat: usize) -> Result<BenchResult> {
    if repeat == 0 {
        return Err(Error::Config("repeat must be at least 1".into()));
    }
    let model_cfg = cfg.model_config()?;
    let mut rng = Rng::seeded(cfg.seed);
    let model = Model::<f32>::build(&model_cfg, &mut rng)?;
    let images = Tensor4::from_fn(model.input_dims(cfg.batch_size), |_, _, _, _| rng.normal(0.0, 1.0) as f32);
    for _ in 0..3 {
        model.logits(&images)?;
    }
    let mut times = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let t = Instant::now();
        std::hint::black_box(model.logits(&images)?);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let mean = times.iter().sum::<f64>() / repeat as f64;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / repeat as f64;
    Ok(BenchResult {
        batch: cfg.batch_size,
        repeat,
        mean_ms: mean,
        std_ms: var.sqrt(),
    })
}
