//! Command-line entry point: predict, train-cov, eval and synth.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};

use hsfm_signn::config::{Overrides, RunConfig, CONFIG_KEYS_HELP};
use hsfm_signn::eval::{CoverageMode, Method};
use hsfm_signn::pipeline;
use hsfm_signn::scenegen::{write_synthetic_dataset, FRAME_DT};
use hsfm_signn::{Error, Result};

/// Pedestrian trajectory prediction with uncertainty: forward propagation,
/// Monte-Carlo sampling and a learned per-layer covariance network.
///
/// Exit codes: 0 success, 1 configuration or usage error, 2 data or I/O
/// error, 3 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "hsfm-signn", version, after_help = CONFIG_KEYS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` (also used for Monte-Carlo sampling and training)
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[eval] coverage_mode` (mahalanobis | per_axis)
    #[arg(long)]
    coverage_mode: Option<CoverageMode>,
    /// Overrides `[data] holdout`
    #[arg(long)]
    holdout: Option<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(
            &self.config,
            &Overrides {
                seed: self.seed,
                out: self.out.clone(),
                coverage_mode: self.coverage_mode,
                holdout: self.holdout.clone(),
            },
        )
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predict one window with every available method; writes predict.csv
    #[command(after_help = CONFIG_KEYS_HELP)]
    Predict {
        #[command(flatten)]
        common: Common,
        /// Window index (windows enumerated with stride 1)
        #[arg(long)]
        window: usize,
        /// Scene file (defaults to the holdout scene)
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Train the covariance network on all non-holdout scenes; writes the
    /// weights and train_loss.csv
    #[command(name = "train-cov", after_help = CONFIG_KEYS_HELP)]
    TrainCov {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate FP, MC and SIGNN on the holdout scene; writes coverage.csv,
    /// mahalanobis.csv and errors.csv
    #[command(after_help = CONFIG_KEYS_HELP)]
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// Write five synthetic ETH/UCY-style scenes and a matching config.toml
    Synth {
        /// Output directory
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Predict {
            common,
            window,
            scene,
        } => {
            let cfg = common.load()?;
            let path = match scene {
                Some(p) => p,
                None => cfg.holdout_path()?.to_path_buf(),
            };
            let report = pipeline::predict(&cfg, &path, window)?;
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            println!(
                "scene {} window {} ped {}",
                report.scene, report.window, report.ped_id
            );
            for o in &report.outcomes {
                if let Some(last) = o.steps.last() {
                    let e = last.error();
                    println!(
                        "{:<6} final mean ({:.3}, {:.3})  var ({:.4}, {:.4})  error {:.3} m",
                        o.method.to_string(),
                        last.mean.x,
                        last.mean.y,
                        last.cov2[(0, 0)],
                        last.cov2[(1, 1)],
                        e.norm()
                    );
                }
            }
            println!("wrote {}", cfg.out.join("predict.csv").display());
        }
        Command::TrainCov { common } => {
            let cfg = common.load()?;
            let r = pipeline::train_cov(&cfg)?;
            let h = &r.result.loss_history;
            println!(
                "{} windows, {} samples, loss {:.6} -> {:.6} over {} epochs",
                r.n_windows,
                r.n_samples,
                h.first().copied().unwrap_or(f64::NAN),
                h.last().copied().unwrap_or(f64::NAN),
                h.len()
            );
            println!("wrote {}", r.weights_path.display());
            println!("wrote {}", r.loss_path.display());
        }
        Command::Eval { common } => {
            let cfg = common.load()?;
            let r = pipeline::evaluate(&cfg)?;
            println!("{} windows on `{}`", r.n_windows, cfg.data.holdout);
            print!("{}", r.coverage.render());
            for m in [Method::Fp, Method::Mc, Method::Signn] {
                if let Some(row) = r.mahalanobis.iter().rev().find(|row| row.method == m) {
                    println!(
                        "{:<6} median Mahalanobis at {:.1} s: {:.3}",
                        m.to_string(),
                        row.horizon_s,
                        row.quartiles.median
                    );
                }
            }
            println!(
                "wrote coverage.csv, mahalanobis.csv, errors.csv to {}",
                cfg.out.display()
            );
        }
        Command::Synth { dir, seed } => synth(&dir, seed)?,
    }
    Ok(())
}

fn synth(dir: &Path, seed: u64) -> Result<()> {
    let paths = write_synthetic_dataset(dir, seed)?;
    let mut names = Vec::new();
    for p in &paths {
        println!("wrote {}", p.display());
        names.push(format!(
            "\"{}\"",
            p.file_name().unwrap_or_default().to_string_lossy()
        ));
    }
    let cfg = format!(
        "seed = {seed}\nout = \"out\"\n\n[data]\npaths = [{}]\nholdout = \"eth\"\nsource_dt = {FRAME_DT}\n",
        names.join(", ")
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg).map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
