//! Shared plumbing for the CLI commands: the named-target registry, flow
//! fitting, tail diagnosis, density estimation on CSV data, and artifact
//! serialization.

use std::path::Path;

use ataflow_core::autodiff::{backward, Tape, Var};
use ataflow_core::flows::{FlowStack, SupportBijection, SupportKind};
use ataflow_core::snapshot::Snapshot;
use ataflow_core::targets::{self, TargetModel};
use ataflow_core::tails::{self, TailReport};
use ataflow_core::vi::{self, AdamState, FamilyKind, TrainConfig, TrainResult};
use ataflow_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csvio;

/// Fixed synthetic observations for the conjugate Normal location model.
pub const NORMAL_NORMAL_Y: [f64; 20] = [
    1.73, 0.41, 2.10, 0.88, 1.32, -0.27, 1.95, 0.63, 1.18, 2.41, 0.05, 1.57, 0.92, 1.74, 0.36,
    1.09, 2.02, 0.77, 1.44, 0.58,
];

/// Synthetic covariate/outcome pairs for the conjugate regression target:
/// 30 observations with slope 1.5 and unit-scale noise, generated once from
/// a fixed stream so every invocation sees the same posterior.
pub fn blr_default_data() -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b1e55ed);
    let n = 30;
    let xs: Vec<f64> = (0..n)
        .map(|_| ataflow_core::special::norm_quantile(rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12)))
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| {
            let eps =
                ataflow_core::special::norm_quantile(rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12));
            1.5 * x + eps
        })
        .collect();
    (xs, ys)
}

/// Hyperparameters paired with `blr_default_data`.
pub const BLR_A0: f64 = 2.0;
pub const BLR_B0: f64 = 2.0;

pub const TARGET_NAMES: [&str; 6] = [
    "cauchy",
    "aniso-product",
    "blr",
    "eight-schools",
    "normal-normal",
    "synthetic-blr",
];

#[derive(Deserialize)]
struct SchoolsData {
    y: Vec<f64>,
    sigma: Vec<f64>,
}

/// Resolves a target name, optionally overriding the built-in data with a
/// user file (JSON `{"y": [...], "sigma": [...]}` or CSV, depending on the
/// target).
pub fn target_by_name(name: &str, data: Option<&Path>) -> Result<TargetModel> {
    match name {
        "cauchy" => Ok(targets::cauchy_target()),
        "aniso-product" => Ok(targets::aniso_product_target()),
        "blr" => {
            let (xs, ys) = match data {
                None => blr_default_data(),
                Some(p) => {
                    let rows = csvio::load_csv(p)?;
                    if rows[0].len() != 2 {
                        return Err(Error::Usage(format!(
                            "{}: blr data needs 2 columns (x, y), found {}",
                            p.display(),
                            rows[0].len()
                        )));
                    }
                    (
                        rows.iter().map(|r| r[0]).collect(),
                        rows.iter().map(|r| r[1]).collect(),
                    )
                }
            };
            Ok(targets::blr_conjugate(&xs, &ys, BLR_A0, BLR_B0)?.0)
        }
        "eight-schools" => match data {
            None => Ok(targets::eight_schools_default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Usage(format!("cannot read {}: {e}", p.display())))?;
                if let Ok(d) = serde_json::from_str::<SchoolsData>(&text) {
                    targets::eight_schools(&d.y, &d.sigma)
                } else {
                    let rows = csvio::parse_csv(&text, p)?;
                    if rows[0].len() != 2 {
                        return Err(Error::Usage(format!(
                            "{}: eight-schools data needs 2 columns (y, sigma)",
                            p.display()
                        )));
                    }
                    targets::eight_schools(
                        &rows.iter().map(|r| r[0]).collect::<Vec<_>>(),
                        &rows.iter().map(|r| r[1]).collect::<Vec<_>>(),
                    )
                }
            }
        },
        "normal-normal" => {
            let y: Vec<f64> = match data {
                None => NORMAL_NORMAL_Y.to_vec(),
                Some(p) => csvio::load_csv(p)?.iter().map(|r| r[0]).collect(),
            };
            targets::normal_normal(&y, 1.0, 0.0, 2.0)
        }
        "synthetic-blr" => Ok(targets::synthetic_blr_nonconjugate(30, 3, 0)),
        _ => Err(Error::Usage(format!(
            "unknown target {name:?}; expected one of {}",
            TARGET_NAMES.join(", ")
        ))),
    }
}

/// Default hidden width: small problems use 32 units, larger ones 256.
pub fn default_hidden(dim: usize) -> usize {
    if dim <= 10 {
        32
    } else {
        256
    }
}

/// Parameter snapshot grouped by layer, hex-float exact.
pub fn snapshot_of(stack: &FlowStack) -> Snapshot {
    let mut snap = Snapshot::new();
    for l in 0..stack.layers.len() {
        snap.insert(&format!("layer{l}"), stack.layer_params(&stack.params, l));
    }
    snap.insert("tails", stack.tail_params(&stack.params));
    snap
}

/// Restores parameters from a snapshot into a freshly built stack of the
/// same architecture.
pub fn load_snapshot_into(stack: &mut FlowStack, snap: &Snapshot) -> Result<()> {
    let mut params = Vec::with_capacity(stack.params.len());
    for l in 0..stack.layers.len() {
        params.extend(snap.get(&format!("layer{l}"))?);
    }
    params.extend(snap.get("tails")?);
    if params.len() != stack.params.len() {
        return Err(Error::Usage(format!(
            "snapshot has {} parameters but the stack expects {}; \
             check --family, --hidden and --layers",
            params.len(),
            stack.params.len()
        )));
    }
    stack.params = params;
    Ok(())
}

fn write_string(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)
        .map_err(|e| Error::Usage(format!("cannot write {}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Usage(format!("cannot create {}: {e}", dir.display())))
}

/// Writes result.json, trace.csv and params.json for a finished run.
pub fn write_fit_artifacts(dir: &Path, result: &TrainResult, stack: &FlowStack) -> Result<()> {
    ensure_dir(dir)?;
    let json = serde_json::to_string_pretty(result)
        .map_err(|e| Error::Usage(format!("serialization failed: {e}")))?;
    write_string(&dir.join("result.json"), &json)?;
    let rows: Vec<String> = result
        .trace
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{i},{}", csvio::fmt_cell(*e)))
        .collect();
    csvio::write_csv(&dir.join("trace.csv"), "step,elbo", &rows)?;
    write_string(&dir.join("params.json"), &snapshot_of(stack).to_json())?;
    Ok(())
}

/// Trains one family on one target and persists the artifacts.
pub fn run_fit(
    target: &TargetModel,
    family: FamilyKind,
    config: &TrainConfig,
    out: &Path,
) -> Result<TrainResult> {
    let mut stack = vi::make_family(family, target, config);
    let result = vi::train(&mut stack, target, config)?;
    write_fit_artifacts(out, &result, &stack)?;
    Ok(result)
}

/// Draws n samples from a fitted stack.
pub fn flow_samples(stack: &FlowStack, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    stack.sample(n, &mut rng).0
}

/// Exact samplers for targets with tractable draws, used by `diagnose`
/// when no fitted parameters are given.
pub fn analytic_samples(name: &str, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = |rng: &mut ChaCha8Rng| rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
    match name {
        "gaussian" => Ok((0..n)
            .map(|_| {
                vec![
                    ataflow_core::special::norm_quantile(u(&mut rng)),
                    ataflow_core::special::norm_quantile(u(&mut rng)),
                ]
            })
            .collect()),
        "cauchy" => Ok((0..n)
            .map(|_| vec![ataflow_core::dist::studentt_quantile(u(&mut rng), 1.0)])
            .collect()),
        "aniso-product" => Ok((0..n)
            .map(|_| {
                vec![
                    ataflow_core::dist::studentt_quantile(u(&mut rng), 1.0),
                    ataflow_core::special::norm_quantile(u(&mut rng)),
                ]
            })
            .collect()),
        _ => Err(Error::Usage(format!(
            "no analytic sampler for target {name:?}; pass --params or --data"
        ))),
    }
}

/// Default Hill order statistic count for n samples.
pub fn default_k(n: usize) -> usize {
    (n / 50).clamp(10, 5000)
}

/// Runs the directional tail diagnostic and writes tails.json / tails.csv.
pub fn run_diagnose(samples: &[Vec<f64>], k: usize, seed: u64, out: &Path) -> Result<TailReport> {
    if samples.is_empty() {
        return Err(Error::Usage("no samples to diagnose".into()));
    }
    let d = samples[0].len();
    let directions = tails::direction_grid(d, seed);
    let report = tails::tail_parameter_function(samples, &directions, k)?;
    ensure_dir(out)?;
    write_string(&out.join("tails.json"), &tails_json(&report)?)?;
    let rows: Vec<String> = report
        .directions
        .iter()
        .zip(&report.alpha_hat)
        .map(|(dir, a)| {
            let dir_s: Vec<String> = dir.iter().map(|c| format!("{c}")).collect();
            format!("{},{}", dir_s.join(";"), csvio::fmt_cell(*a))
        })
        .collect();
    csvio::write_csv(&out.join("tails.csv"), "direction,alpha_hat", &rows)?;
    Ok(report)
}

/// JSON rendering of a tail report; infinite estimates (non-power-law
/// directions) become nulls so the file stays valid JSON.
pub fn tails_json(report: &TailReport) -> Result<String> {
    let alpha: Vec<Option<f64>> = report
        .alpha_hat
        .iter()
        .map(|a| if a.is_finite() { Some(*a) } else { None })
        .collect();
    let value = serde_json::json!({
        "directions": report.directions,
        "alpha_hat": alpha,
        "k": report.k,
        "isotropy": report.isotropy,
        "spread": report.spread,
        "spread_threshold": report.spread_threshold,
        "screen_r2": report.screen_r2,
    });
    serde_json::to_string_pretty(&value)
        .map_err(|e| Error::Usage(format!("serialization failed: {e}")))
}

/// Outcome of a density-estimation run on CSV data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityResult {
    pub family: FamilyKind,
    pub n_train: usize,
    pub n_heldout: usize,
    pub train_loglik: f64,
    pub heldout_loglik: f64,
    pub trace: Vec<f64>,
    pub seed: u64,
    pub steps: usize,
}

/// Mean log-likelihood of a batch with its gradient in the stack's
/// parameters.
fn loglik_with_grad(stack: &FlowStack, batch: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let pv: Vec<Var> = stack.params.iter().map(|&p| tape.input(p)).collect();
    let mut acc: Option<Var> = None;
    for y in batch {
        let (x, support_ld) = stack.support.inverse(y)?;
        let xv: Vec<Var> = x.iter().map(|&c| tape.constant(c)).collect();
        let lp = stack.log_prob_at(&pv, &xv, support_ld);
        acc = Some(match acc {
            None => lp,
            Some(a) => a + lp,
        });
    }
    let total = acc.ok_or_else(|| Error::Usage("empty batch".into()))? / batch.len() as f64;
    let adj = backward(total)?;
    Ok((total.value(), pv.iter().map(|v| adj[v.index()]).collect()))
}

fn mean_loglik(stack: &FlowStack, rows: &[Vec<f64>]) -> Result<f64> {
    let mut acc = 0.0;
    for y in rows {
        acc += stack.log_prob(y)?;
    }
    Ok(acc / rows.len() as f64)
}

/// Maximum-likelihood fit of a flow to raw data rows: 80/20 split by a
/// seeded shuffle, Adam on minibatch mean log-likelihood.
pub fn run_density(
    rows: &[Vec<f64>],
    family: FamilyKind,
    config: &TrainConfig,
    out: &Path,
) -> Result<DensityResult> {
    config.validate()?;
    if rows.len() < 10 {
        return Err(Error::Usage(format!(
            "density estimation needs at least 10 rows, got {}",
            rows.len()
        )));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::Usage("density estimation needs at least 1 column".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    // Fisher-Yates with the seeded stream so the split is reproducible
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let n_train = (rows.len() * 4) / 5;
    let train_rows: Vec<Vec<f64>> = order[..n_train].iter().map(|&i| rows[i].clone()).collect();
    let held_rows: Vec<Vec<f64>> = order[n_train..].iter().map(|&i| rows[i].clone()).collect();

    let mut stack = FlowStack::new(
        family.base_kind(),
        SupportBijection::new(vec![SupportKind::Identity; d]),
        config.hidden,
        config.layers,
        config.seed,
    );
    let mut state = AdamState::new(stack.params.len());
    let mut trace = Vec::with_capacity(config.steps);
    let mut nonfinite_streak = 0usize;
    for step in 0..config.steps {
        let batch: Vec<&[f64]> = (0..config.elbo_samples)
            .map(|_| train_rows[rng.random_range(0..train_rows.len())].as_slice())
            .collect();
        match loglik_with_grad(&stack, &batch) {
            Ok((ll, mut grad))
                if ll.is_finite() && grad.iter().all(|g| g.is_finite()) =>
            {
                nonfinite_streak = 0;
                let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > vi::GRAD_CLIP_NORM {
                    let s = vi::GRAD_CLIP_NORM / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
                vi::adam_step(
                    &mut stack.params,
                    &grad,
                    &mut state,
                    config.lr,
                    config.beta1,
                    config.beta2,
                    config.eps,
                );
                trace.push(ll);
            }
            _ => {
                nonfinite_streak += 1;
                if nonfinite_streak >= vi::NONFINITE_ABORT {
                    return Err(Error::Numeric(format!(
                        "density fit aborted at step {step}: {} consecutive non-finite \
                         log-likelihood evaluations",
                        vi::NONFINITE_ABORT
                    )));
                }
                trace.push(f64::NAN);
            }
        }
    }
    let result = DensityResult {
        family,
        n_train,
        n_heldout: held_rows.len(),
        train_loglik: mean_loglik(&stack, &train_rows)?,
        heldout_loglik: mean_loglik(&stack, &held_rows)?,
        trace,
        seed: config.seed,
        steps: config.steps,
    };
    ensure_dir(out)?;
    let json = serde_json::to_string_pretty(&result)
        .map_err(|e| Error::Usage(format!("serialization failed: {e}")))?;
    write_string(&out.join("result.json"), &json)?;
    let rows_csv: Vec<String> = result
        .trace
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{i},{}", csvio::fmt_cell(*e)))
        .collect();
    csvio::write_csv(&out.join("trace.csv"), "step,loglik", &rows_csv)?;
    write_string(&out.join("params.json"), &snapshot_of(&stack).to_json())?;
    Ok(result)
}

/// Sweep-parallelism cap: ATAFLOW_THREADS if set, else the logical core
/// count.
pub fn thread_cap() -> usize {
    std::env::var("ATAFLOW_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs one job per seed, at most `thread_cap()` at a time, preserving
/// seed order in the output.
pub fn seed_sweep<T, F>(seeds: &[u64], job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let cap = thread_cap().max(1);
    let mut out: Vec<Result<T>> = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(cap) {
        let wave: Vec<Result<T>> = std::thread::scope(|scope| {
            let job = &job;
            let handles: Vec<_> = chunk.iter().map(|&s| scope.spawn(move || job(s))).collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Numeric("sweep worker panicked".into())))
                })
                .collect()
        });
        out.extend(wave);
    }
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_all_names() {
        for name in TARGET_NAMES {
            assert!(target_by_name(name, None).is_ok(), "{name}");
        }
        let err = target_by_name("gauss", None).unwrap_err().to_string();
        assert!(err.contains("cauchy"), "{err}");
    }

    #[test]
    fn blr_default_posterior_matches_hyperparameters() {
        let t = target_by_name("blr", None).unwrap();
        let p = t.blr_posterior().unwrap();
        assert_eq!(p.a_n, BLR_A0 + 15.0); // n = 30
    }

    #[test]
    fn snapshot_roundtrip_restores_parameters() {
        let t = target_by_name("cauchy", None).unwrap();
        let cfg = TrainConfig {
            hidden: 8,
            ..TrainConfig::default()
        };
        let mut stack = vi::make_family(FamilyKind::Ataf, &t, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        stack.randomize_params(0.5, &mut rng);
        let snap = snapshot_of(&stack);
        let snap2 = Snapshot::from_json(&snap.to_json()).unwrap();
        let mut fresh = vi::make_family(FamilyKind::Ataf, &t, &cfg);
        load_snapshot_into(&mut fresh, &snap2).unwrap();
        assert_eq!(fresh.params, stack.params);
    }

    #[test]
    fn density_fits_standard_normal_entropy() {
        // held-out mean log-likelihood of a 1-D standard-normal sample
        // approaches −(1/2)(1 + ln 2π) ≈ −1.419
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..4000)
            .map(|_| {
                vec![ataflow_core::special::norm_quantile(
                    rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12),
                )]
            })
            .collect();
        let cfg = TrainConfig {
            steps: 1200,
            lr: 1e-2,
            elbo_samples: 64,
            eval_samples: 100,
            hidden: 8,
            seed: 1,
            ..TrainConfig::default()
        };
        let dir = std::env::temp_dir().join("ataflow-density-test");
        let r = run_density(&rows, FamilyKind::Advi, &cfg, &dir).unwrap();
        assert!(
            (r.heldout_loglik + 1.419).abs() < 0.05,
            "held-out loglik {}",
            r.heldout_loglik
        );
    }

    #[test]
    fn density_rejects_tiny_input() {
        let rows = vec![vec![1.0]; 5];
        let cfg = TrainConfig::default();
        let err = run_density(&rows, FamilyKind::Advi, &cfg, Path::new("/tmp")).unwrap_err();
        assert!(err.to_string().contains("10"));
    }
}
