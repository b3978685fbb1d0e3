//! Command-line front end: `lga <command> [options]`.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use lga_core::backbone::AttentionKind;
use lga_core::autodiff::DEFAULT_EPS;
use lga_core::{Error, Result};

use crate::commands::*;
use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "lga", version, about = "Train and inspect local-global attention classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes metrics.csv, model.ckpt and manifest.txt.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the configured test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Finite-difference check of one attention block at f64.
    Gradcheck {
        /// none | se | mhsa | la | ga | lga; defaults to the config's tag.
        tag: Option<String>,
        /// Block settings; small default kernels when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "1x4x3x3")]
        dims: String,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Per-layer FLOP table of the configured model.
    Flops {
        #[arg(long)]
        config: PathBuf,
    },
    /// Forward-pass wall-clock of the configured model.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        repeat: usize,
    },
}

fn write_out(w: &mut dyn Write, text: &str) -> Result<()> {
    w.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

/// Runs a parsed command. `Ok(false)` means it completed but its check
/// failed (gradcheck above threshold).
pub fn execute(cli: Cli, out: &mut dyn Write, log: &mut dyn Write) -> Result<bool> {
    match cli.command {
        Command::Train { config, out: dir } => {
            let cfg = Config::load(&config)?;
            let dir = dir
                .or_else(|| cfg.out_dir.clone())
                .ok_or_else(|| Error::MissingKeys(vec!["out.dir".into()]))?;
            let summary = cmd_train(&cfg, &dir, log)?;
            write_out(
                out,
                &format!(
                    "final test top1 {:.2} top5 {:.2} loss {:.6}\n",
                    summary.final_test.top1, summary.final_test.top5, summary.final_test.loss
                ),
            )?;
            Ok(true)
        }
        Command::Eval { config, checkpoint } => {
            let cfg = Config::load(&config)?;
            let start = std::time::Instant::now();
            let mut row = cmd_eval(&checkpoint, &cfg)?;
            row.seconds = 0.0;
            write_out(out, &format!("{}\n", row.csv_row()))?;
            write_out(log, &format!("evaluated in {:.1} s\n", start.elapsed().as_secs_f64()))?;
            Ok(true)
        }
        Command::Gradcheck {
            tag,
            config,
            dims,
            eps,
            seed,
        } => {
            let dims = parse_dims(&dims)?;
            let cfg = config.map(Config::load).transpose()?;
            let kind: AttentionKind = match (&tag, &cfg) {
                (Some(t), _) => t.parse()?,
                (None, Some(c)) => c.attention,
                (None, None) => AttentionKind::Lga,
            };
            let block = match &cfg {
                Some(c) => {
                    let mut b = c.lga_config();
                    b.embed_dim = dims.c;
                    b.validate()?;
                    b
                }
                None => gradcheck_block_config(dims.c)?,
            };
            let r = cmd_gradcheck(kind, dims, eps, &block, seed)?;
            let pass = r.report.max_rel_error < GRADCHECK_THRESHOLD;
            write_out(
                out,
                &format!(
                    "{kind} {dims}: max relative error {:.3e} (worst: {}) over {} evaluations, {}\n",
                    r.report.max_rel_error,
                    r.worst_name().unwrap_or("-"),
                    r.report.evaluations,
                    if pass { "ok" } else { "FAILED" }
                ),
            )?;
            Ok(pass)
        }
        Command::Flops { config } => {
            let cfg = Config::load(&config)?;
            let (report, params, tags) = cmd_flops(&cfg)?;
            write_out(out, &format!("{report}\nparameters  {params}\n\n{tags}"))?;
            Ok(true)
        }
        Command::Bench { config, repeat } => {
            let cfg = Config::load(&config)?;
            let r = cmd_bench(&cfg, repeat)?;
            write_out(
                out,
                &format!(
                    "{} batch {}: {:.3} ms ± {:.3} ms per forward over {} runs\n",
                    cfg.attention, r.batch, r.mean_ms, r.std_ms, r.repeat
                ),
            )?;
            Ok(true)
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, log: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(log, "{e}");
            return code;
        }
    };
    match execute(cli, out, log) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            1
        }
    }
}
