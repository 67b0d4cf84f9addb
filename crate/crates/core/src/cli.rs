//! Command-line front end. `parse_args` turns argv into a [`Command`] and
//! `run_command` executes it and returns the process exit code.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use crate::bomp::{run_bomp_with, RefitMode, StoppingRule};
use crate::diagnostics::{check_thm1_events, gram, min_eigen};
use crate::envgen::{sample_dataset, sample_instance, DatasetFile, Instance, InstanceSpec, SamplingPolicy};
use crate::error::{Error, Result};
use crate::experiments::{sweep, write_results, OutputFormat, SweepGrid};
use crate::lower_bounds::{
    fano_error_lower_bound, pinsker_tv_bound, run_best_arm_trials, run_coverage_trials, support_packing,
    two_point_coverage_kl, write_rows_csv, BestArmInstance, BestArmRow, CoverageRow, FanoRow, PackingConfig,
    TwoPointInstance, BEST_ARM_COLUMNS, COVERAGE_COLUMNS, FANO_COLUMNS,
};
use crate::model::{build_block_design, read_json, write_json, SupportSet};
use crate::oracle::exhaustive_support_search;
use crate::seeding::{derive_seed, stream};

/// Worker-thread cap read by the binary.
pub const THREADS_ENV: &str = "SPARSE_ACTIONS_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "sparse-actions",
    version,
    about = "Sparse action discovery with Contextual Block-OMP"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Sample an instance and a logged dataset.
    Gen(GenArgs),
    /// Run Block-OMP on a dataset.
    Fit(FitArgs),
    /// Report incoherence, coverage and the sufficient recovery events.
    Diagnose(DiagnoseArgs),
    /// Run a Monte Carlo sweep from a JSON grid.
    Sweep(SweepArgs),
    /// Compare Block-OMP against exhaustive subset search.
    OracleCheck(OracleArgs),
    /// Lower-bound experiments.
    #[command(subcommand)]
    Lowerbound(LowerboundCommand),
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum LowerboundCommand {
    /// Empirical-mean argmax on a one-good-arm Gaussian instance.
    BestArm(BestArmArgs),
    /// Likelihood-ratio test for a single under-sampled action.
    Coverage(CoverageArgs),
    /// Fano floor from a randomized support packing.
    Fano(FanoArgs),
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub t: usize,
    /// Reward noise standard deviation.
    #[arg(long)]
    pub sigma: f64,
    /// Norm of every active row of W*.
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "uniform")]
    pub policy: SamplingPolicy,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the sampled instance (W*, S*) here.
    #[arg(long)]
    pub instance_out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Number of iterations.
    #[arg(long, conflicts_with_all = ["tau", "eta"], required_unless_present_any = ["tau", "eta"])]
    pub k: Option<usize>,
    /// Stop once the residual norm is at most this.
    #[arg(long, conflicts_with = "eta")]
    pub tau: Option<f64>,
    /// Stop once every unselected score is at most this.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Use a minimum-norm refit for rank-deficient blocks instead of failing.
    #[arg(long)]
    pub min_norm: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Instance file written by `gen --instance-out`.
    #[arg(long)]
    pub instance: PathBuf,
    /// Sample-size constant; defaults to the realized λ_min(G_S*)/T.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the extension of `--out`.
    #[arg(long)]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct BestArmArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub delta: f64,
    /// Pull budgets, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub t: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub j_star: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct CoverageArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub b: f64,
    /// Pull counts of the probed action, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 5000)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct FanoArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub k: usize,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub t: Vec<usize>,
    #[arg(long)]
    pub b: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn range_error(msg: impl std::fmt::Display) -> clap::Error {
    Cli::command().error(ErrorKind::ValueValidation, msg)
}

fn check(cond: bool, msg: &str) -> std::result::Result<(), clap::Error> {
    if cond {
        Ok(())
    } else {
        Err(range_error(msg))
    }
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

fn validate(cmd: &Command) -> std::result::Result<(), clap::Error> {
    match cmd {
        Command::Gen(a) => {
            check(a.m >= 1, "--m must be at least 1")?;
            check(a.d >= 1, "--d must be at least 1")?;
            check(a.k >= 1 && a.k <= a.m, "--k must satisfy 1 <= k <= m")?;
            check(a.t >= 1, "--t must be at least 1")?;
            check(finite_nonneg(a.sigma), "--sigma must be nonnegative")?;
            check(a.b.is_finite() && a.b > 0.0, "--b must be positive")?;
        }
        Command::Fit(a) => {
            check(a.k.is_none_or(|k| k >= 1), "--k must be at least 1")?;
            check(a.tau.is_none_or(finite_nonneg), "--tau must be nonnegative")?;
            check(a.eta.is_none_or(finite_nonneg), "--eta must be nonnegative")?;
        }
        Command::Diagnose(a) => {
            check(
                a.alpha.is_none_or(|x| x.is_finite() && x > 0.0),
                "--alpha must be positive",
            )?;
        }
        Command::Sweep(_) => {}
        Command::OracleCheck(a) => check(a.k >= 1, "--k must be at least 1")?,
        Command::Lowerbound(LowerboundCommand::BestArm(a)) => {
            check(a.m >= 2, "--m must be at least 2")?;
            check(a.delta.is_finite() && a.delta > 0.0, "--delta must be positive")?;
            check(a.j_star < a.m, "--j-star must be below m")?;
            check(a.t.iter().all(|&t| t >= a.m), "every --t must be at least m")?;
            check(a.trials >= 100, "--trials must be at least 100")?;
        }
        Command::Lowerbound(LowerboundCommand::Coverage(a)) => {
            check(a.d >= 1, "--d must be at least 1")?;
            check(finite_nonneg(a.b), "--b must be nonnegative")?;
            check(a.trials >= 100, "--trials must be at least 100")?;
        }
        Command::Lowerbound(LowerboundCommand::Fano(a)) => {
            check(a.k >= 1 && 2 * a.k <= a.m, "--k must satisfy 1 <= k <= m/2")?;
            check(finite_nonneg(a.b), "--b must be nonnegative")?;
        }
    }
    Ok(())
}

/// Parses `argv` (program name first) and applies the range checks of the
/// underlying operations.
pub fn parse_args<I, S>(argv: I) -> std::result::Result<Command, clap::Error>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cmd = Cli::try_parse_from(argv)?.command;
    validate(&cmd)?;
    Ok(cmd)
}

fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s: u64 = rand::random();
        println!("seed={s}");
        s
    })
}

fn fmt_support(s: &SupportSet) -> String {
    let items: Vec<String> = s.indices().iter().map(|j| j.to_string()).collect();
    format!("[{}]", items.join(","))
}

/// Runs `cmd`: 0 on success, 1 for domain errors, 2 for I/O and format
/// errors.
pub fn run_command(cmd: Command) -> i32 {
    match execute(cmd) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

/// Parses and runs; parse failures print clap's message and exit 2
/// (`--help` and `--version` exit 0).
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    match parse_args(argv) {
        Ok(cmd) => run_command(cmd),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

#[derive(Serialize)]
struct OracleReport {
    k: usize,
    bomp_support: SupportSet,
    oracle_support: SupportSet,
    oracle_rss: f64,
    oracle_unique: bool,
    agree: bool,
}

fn execute(cmd: Command) -> Result<String> {
    match cmd {
        Command::Gen(a) => {
            let seed = seed_or_random(a.seed);
            let spec = InstanceSpec::new(a.m, a.d, a.k, a.b, a.sigma, seed);
            let inst = sample_instance(&spec)?;
            let g = sample_dataset(&inst, &a.policy, a.t, derive_seed(seed, &[stream::DATASET]))?;
            write_json(&DatasetFile::from_generated(g, a.sigma), &a.out)?;
            if let Some(path) = &a.instance_out {
                write_json(&inst, path)?;
            }
            Ok(format!(
                "wrote t={} samples, s_star={}, seed={seed}",
                a.t,
                fmt_support(&inst.s_star)
            ))
        }
        Command::Fit(a) => {
            let file: DatasetFile<f64> = read_json(&a.data)?;
            let stop = match (a.k, a.tau, a.eta) {
                (Some(k), _, _) => StoppingRule::FixedIterations(k),
                (None, Some(tau), _) => StoppingRule::ResidualThreshold(tau),
                (None, None, Some(eta)) => StoppingRule::ScoreThreshold(eta),
                (None, None, None) => return Err(Error::invalid("one of --k, --tau, --eta is required")),
            };
            let mode = if a.min_norm {
                RefitMode::MinNorm
            } else {
                RefitMode::Strict
            };
            let res = run_bomp_with(&file.dataset, stop, mode)?;
            write_json(&res, &a.out)?;
            let last = res
                .residual_norms
                .last()
                .copied()
                .unwrap_or_else(|| crate::scalar::norm2(&file.dataset.rewards()));
            Ok(format!(
                "support={} residual={last:.6e} iterations={}",
                fmt_support(&res.support),
                res.iterations
            ))
        }
        Command::Diagnose(a) => {
            let file: DatasetFile<f64> = read_json(&a.data)?;
            let inst: Instance<f64> = read_json(&a.instance)?;
            let data = &file.dataset;
            if data.m() != inst.spec.m || data.d() != inst.spec.d {
                return Err(Error::DimensionMismatch {
                    expected: inst.spec.m * inst.spec.d,
                    found: data.m() * data.d(),
                });
            }
            // a noiseless file carries no eps; its noise is exactly zero
            let zeros;
            let eps = match &file.eps {
                Some(e) => Some(e.as_slice()),
                None if inst.spec.noise_sigma == 0.0 => {
                    zeros = vec![0.0; data.len()];
                    Some(zeros.as_slice())
                }
                None => None,
            };
            let alpha = match a.alpha {
                Some(x) => x,
                None => min_eigen(&gram(&build_block_design(data), &inst.s_star))? / data.len() as f64,
            };
            let report = check_thm1_events(&inst, data, eps, alpha)?;
            write_json(&report, &a.out)?;
            Ok(format!(
                "mu={} lambda_min={:.6e} n_min={} event_gram={} event_noise={}",
                report.mu, report.lambda_min, report.n_min_on_support, report.event_gram, report.event_noise
            ))
        }
        Command::Sweep(a) => {
            let grid: SweepGrid = read_json(&a.config)?;
            let rows = sweep(&grid)?;
            let format = a.format.unwrap_or_else(|| OutputFormat::from_path(&a.out));
            write_results(&rows, &a.out, format)?;
            Ok(format!("wrote {} rows, base_seed={}", rows.len(), grid.base_seed))
        }
        Command::OracleCheck(a) => {
            let file: DatasetFile<f64> = read_json(&a.data)?;
            let oracle = exhaustive_support_search(&file.dataset, a.k)?;
            let fit = run_bomp_with(&file.dataset, StoppingRule::FixedIterations(a.k), RefitMode::MinNorm)?;
            let agree = fit.support.same_set(&oracle.best_support);
            let report = OracleReport {
                k: a.k,
                bomp_support: fit.support,
                oracle_support: oracle.best_support,
                oracle_rss: oracle.best_rss,
                oracle_unique: oracle.unique,
                agree,
            };
            write_json(&report, &a.out)?;
            Ok(format!(
                "agree={agree} bomp={} oracle={} unique={}",
                fmt_support(&report.bomp_support),
                fmt_support(&report.oracle_support),
                report.oracle_unique
            ))
        }
        Command::Lowerbound(LowerboundCommand::BestArm(a)) => {
            let seed = seed_or_random(a.seed);
            let inst = BestArmInstance::new(a.m, a.delta, a.j_star)?;
            let rows =
                a.t.iter()
                    .enumerate()
                    .map(|(i, &t)| {
                        let s = derive_seed(seed, &[i as u64]);
                        let (p, ci) = run_best_arm_trials(&inst, t, a.trials, s)?;
                        Ok(BestArmRow {
                            m: a.m,
                            delta: a.delta,
                            t,
                            trials: a.trials,
                            error_prob: p,
                            ci_halfwidth: ci,
                            seed,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
            write_rows_csv(&rows, &BEST_ARM_COLUMNS, &a.out)?;
            let first = &rows[0];
            Ok(format!(
                "t={} error_prob={:.4} ci={:.4}",
                first.t, first.error_prob, first.ci_halfwidth
            ))
        }
        Command::Lowerbound(LowerboundCommand::Coverage(a)) => {
            let seed = seed_or_random(a.seed);
            let rows =
                a.n.iter()
                    .enumerate()
                    .map(|(i, &n)| {
                        let inst = TwoPointInstance::axis(a.d, a.b, n)?;
                        let (sum, ci) = run_coverage_trials(&inst, a.trials, derive_seed(seed, &[i as u64]))?;
                        let kl = two_point_coverage_kl(n, a.b);
                        Ok(CoverageRow {
                            d: a.d,
                            b: a.b,
                            n,
                            trials: a.trials,
                            error_sum: sum,
                            ci_halfwidth: ci,
                            kl,
                            pinsker_floor: 1.0 - pinsker_tv_bound(kl)?,
                            seed,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
            write_rows_csv(&rows, &COVERAGE_COLUMNS, &a.out)?;
            let first = &rows[0];
            Ok(format!(
                "n={} error_sum={:.4} floor={:.4}",
                first.n, first.error_sum, first.pinsker_floor
            ))
        }
        Command::Lowerbound(LowerboundCommand::Fano(a)) => {
            let seed = seed_or_random(a.seed);
            let family = support_packing(a.m, a.k, seed, PackingConfig::default())?;
            let log_packing = (family.len() as f64).ln();
            let rows =
                a.t.iter()
                    .map(|&t| {
                        Ok(FanoRow {
                            m: a.m,
                            k: a.k,
                            t,
                            b: a.b,
                            packing_size: family.len(),
                            log_packing,
                            error_floor: fano_error_lower_bound(t, a.b, log_packing)?,
                            seed,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
            write_rows_csv(&rows, &FANO_COLUMNS, &a.out)?;
            Ok(format!("packing_size={} log_packing={log_packing:.4}", family.len()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        std::iter::once("sparse-actions")
            .chain(s.split_whitespace())
            .map(String::from)
            .collect()
    }

    #[test]
    fn parses_gen() {
        let cmd = parse_args(argv(
            "gen --m 200 --d 5 --k 5 --t 1060 --sigma 0.1 --b 1 --seed 7 --out data.json",
        ))
        .unwrap();
        let Command::Gen(a) = cmd else { panic!("expected gen") };
        assert_eq!((a.m, a.d, a.k, a.t, a.seed), (200, 5, 5, 1060, Some(7)));
        assert_eq!((a.sigma, a.b), (0.1, 1.0));
        assert_eq!(a.out, PathBuf::from("data.json"));
        assert_eq!(a.policy, SamplingPolicy::Uniform);
    }

    #[test]
    fn parses_fit() {
        let cmd = parse_args(argv("fit --data data.json --k 5 --out result.json")).unwrap();
        let Command::Fit(a) = cmd else { panic!("expected fit") };
        assert_eq!(a.k, Some(5));
        assert!(!a.min_norm);
        assert!(parse_args(argv("fit --data data.json --out r.json")).is_err());
        assert!(parse_args(argv("fit --data data.json --k 2 --tau 0.1 --out r.json")).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let e = parse_args(argv("gen --k 10 --m 5 --d 2 --t 10 --sigma 0 --out x.json")).unwrap_err();
        assert!(e.to_string().contains("k <= m"));
        assert!(parse_args(argv("gen --m 5 --d 2 --k 1 --t 10 --sigma -1 --out x.json")).is_err());
        assert!(parse_args(argv("gen --m five --d 2 --k 1 --t 10 --sigma 0 --out x.json")).is_err());
        assert!(parse_args(argv("gen --m 5 --d 2 --k 1 --t 10 --sigma 0 --out x.json --bogus 1")).is_err());
        assert!(parse_args(argv("frobnicate")).is_err());
        assert!(parse_args(argv("lowerbound fano --m 10 --k 6 --t 1 --b 1 --out f.csv")).is_err());
        assert!(parse_args(argv("lowerbound best-arm --m 100 --delta 0.5 --t 50 --out b.csv")).is_err());
    }

    #[test]
    fn parses_lowerbounds() {
        let cmd = parse_args(argv(
            "lowerbound best-arm --m 100 --delta 0.5 --t 100,16000 --seed 1 --out b.csv",
        ))
        .unwrap();
        let Command::Lowerbound(LowerboundCommand::BestArm(a)) = cmd else {
            panic!()
        };
        assert_eq!(a.t, vec![100, 16000]);
        assert_eq!(a.trials, 2000);
    }
}
