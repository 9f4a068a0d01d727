//! `ataflow`: fit and diagnose tail-adaptive flow posteriors from the
//! command line.
//!
//! Exit codes: 0 success, 2 usage or data error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use ataflow_cli::csvio::load_csv;
use ataflow_cli::presets::{run_preset, PresetMode, PresetRequest, PRESET_NAMES};
use ataflow_cli::runs::{self, default_hidden, default_k, ensure_dir};
use ataflow_core::vi::{self, FamilyKind, TrainConfig};
use ataflow_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ataflow",
    about = "Flow-based variational inference with learnable per-dimension tails",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// Variational family: advi, taf, or ataf
    #[arg(long, default_value = "ataf")]
    family: String,
    /// Optimizer steps
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Monte-Carlo batch size for the training ELBO
    #[arg(long, default_value_t = 100)]
    elbo_samples: usize,
    /// Draw count for the final ELBO / log p(y) evaluation
    #[arg(long, default_value_t = 1000)]
    eval_samples: usize,
    /// RNG seed; repeat the flag for a sweep
    #[arg(long)]
    seed: Vec<u64>,
    /// Hidden units per conditioner layer (default: 32 if d <= 10, else 256)
    #[arg(long)]
    hidden: Option<usize>,
    /// Number of IAF layers
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl TrainFlags {
    fn seeds(&self) -> Vec<u64> {
        if self.seed.is_empty() {
            vec![0]
        } else {
            self.seed.clone()
        }
    }

    fn config(&self, dim: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            lr: self.lr,
            elbo_samples: self.elbo_samples,
            eval_samples: self.eval_samples,
            seed,
            hidden: self.hidden.unwrap_or_else(|| default_hidden(dim)),
            layers: self.layers,
            ..TrainConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a variational family to a named target posterior
    Fit {
        /// Target name (cauchy, aniso-product, blr, eight-schools,
        /// normal-normal, synthetic-blr)
        #[arg(long)]
        target: String,
        /// Observed data overriding the target's built-in dataset
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Directional tail diagnostics for samples from a CSV, a fitted flow,
    /// or a target's exact sampler
    Diagnose {
        /// CSV of raw draws, one row per sample
        #[arg(long)]
        data: Option<PathBuf>,
        /// Target name (used with --params, or alone for targets with an
        /// exact sampler)
        #[arg(long)]
        target: Option<String>,
        /// params.json from a previous fit; samples are drawn from the flow
        #[arg(long)]
        params: Option<PathBuf>,
        /// Family the params file belongs to
        #[arg(long, default_value = "ataf")]
        family: String,
        /// Hidden units of the fitted stack (must match the fit)
        #[arg(long)]
        hidden: Option<usize>,
        /// IAF layers of the fitted stack (must match the fit)
        #[arg(long, default_value_t = 2)]
        layers: usize,
        /// Number of draws when sampling
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Hill order-statistic count (default: n/50, clamped)
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a bundled experiment preset end to end
    Reproduce {
        /// Preset name: cauchy-appB, aniso-fig1, blr-fig3, eight-schools,
        /// normal-normal, closure-battery
        name: String,
        /// Budget: desk (2000 steps, batch 100) or paper (10000, 1000)
        #[arg(long, default_value = "desk")]
        preset: String,
        /// Seeds overriding the preset's default sweep
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        /// Learning rate override (each preset has a tuned default)
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Maximum-likelihood density estimation on CSV data
    Density {
        /// CSV of n rows by d numeric columns
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Fit { target, data, train } => {
            let t = runs::target_by_name(&target, data.as_deref())?;
            let family = FamilyKind::parse(&train.family)?;
            let seeds = train.seeds();
            let multi = seeds.len() > 1;
            let jobs = runs::seed_sweep(&seeds, |seed| {
                let cfg = train.config(t.dim(), seed);
                let dir = if multi {
                    train.out.join(format!("seed-{seed}"))
                } else {
                    train.out.clone()
                };
                runs::run_fit(&t, family, &cfg, &dir)
            })?;
            for r in jobs {
                println!(
                    "{} {} seed {}: elbo {:.4} ± {:.4}, log p(y) {:.4} ± {:.4}",
                    r.family, r.target, r.seed, r.elbo_mean, r.elbo_stderr, r.logpy_mean,
                    r.logpy_stderr
                );
            }
            Ok(())
        }
        Cmd::Diagnose {
            data,
            target,
            params,
            family,
            hidden,
            layers,
            samples,
            k,
            seed,
            out,
        } => {
            let draws: Vec<Vec<f64>> = match (&data, &target, &params) {
                (Some(path), _, _) => load_csv(path)?,
                (None, Some(name), Some(pfile)) => {
                    let t = runs::target_by_name(name, None)?;
                    let cfg = TrainConfig {
                        hidden: hidden.unwrap_or_else(|| default_hidden(t.dim())),
                        layers,
                        seed,
                        ..TrainConfig::default()
                    };
                    let mut stack = vi::make_family(FamilyKind::parse(&family)?, &t, &cfg);
                    let text = std::fs::read_to_string(pfile).map_err(|e| {
                        Error::Usage(format!("cannot read {}: {e}", pfile.display()))
                    })?;
                    let snap = ataflow_core::snapshot::Snapshot::from_json(&text)?;
                    runs::load_snapshot_into(&mut stack, &snap)?;
                    runs::flow_samples(&stack, samples, seed)
                }
                (None, Some(name), None) => runs::analytic_samples(name, samples, seed)?,
                _ => {
                    return Err(Error::Usage(
                        "diagnose needs --data, or --target (optionally with --params)".into(),
                    ))
                }
            };
            let k = k.unwrap_or_else(|| default_k(draws.len()));
            let report = runs::run_diagnose(&draws, k, seed, &out)?;
            println!(
                "{} directions, k = {}: {:?} (spread {:.3})",
                report.directions.len(),
                report.k,
                report.isotropy,
                report.spread
            );
            Ok(())
        }
        Cmd::Reproduce {
            name,
            preset,
            seed,
            hidden,
            layers,
            lr,
            out,
        } => {
            if !PRESET_NAMES.contains(&name.as_str()) {
                return Err(Error::Usage(format!(
                    "unknown preset {name:?}; valid names: {}",
                    PRESET_NAMES.join(", ")
                )));
            }
            let req = PresetRequest {
                mode: PresetMode::parse(&preset)?,
                seeds: if seed.is_empty() { None } else { Some(seed) },
                hidden,
                layers,
                lr,
            };
            let summary = run_preset(&name, &req, &out)?;
            for f in &summary.families {
                println!(
                    "{}: elbo {:.4} ± {:.4}, log p(y) {:.4} ± {:.4}{}",
                    f.family,
                    f.elbo_mean,
                    f.elbo_stderr,
                    f.logpy_mean,
                    f.logpy_stderr,
                    f.tail_verdict
                        .as_deref()
                        .map(|v| format!(", tails: {v}"))
                        .unwrap_or_default()
                );
            }
            println!("wrote {}", out.join("summary.json").display());
            Ok(())
        }
        Cmd::Density { data, train } => {
            let rows = load_csv(&data)?;
            let family = FamilyKind::parse(&train.family)?;
            let seeds = train.seeds();
            let multi = seeds.len() > 1;
            let jobs = runs::seed_sweep(&seeds, |seed| {
                let cfg = train.config(rows[0].len(), seed);
                let dir = if multi {
                    train.out.join(format!("seed-{seed}"))
                } else {
                    train.out.clone()
                };
                ensure_dir(&dir)?;
                runs::run_density(&rows, family, &cfg, &dir)
            })?;
            for r in jobs {
                println!(
                    "{} seed {}: train loglik {:.4}, held-out loglik {:.4}",
                    r.family, r.seed, r.train_loglik, r.heldout_loglik
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) | Error::NumericOverflow { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
