//! Monte Carlo harness: single recovery trials, grid sweeps and result
//! tables.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bomp::{run_bomp_on_design, BompResult, RefitMode, StoppingRule};
use crate::decision::{draw_states, param_error, suboptimality_gap, DecisionModel};
use crate::diagnostics::{check_thm1_events, gram, min_eigen, DiagnosticsReport};
use crate::envgen::{
    coverage_counts, min_coverage, sample_dataset, sample_instance, Instance, InstanceSpec, SamplingPolicy,
};
use crate::error::{Error, Result};
use crate::lower_bounds::proportion_ci;
use crate::model::{build_block_design, Dataset, LatentState};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, stream};

/// Fresh states per trial used for the plug-in gap.
pub const EVAL_STATES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct TrialConfig<T> {
    /// `spec.seed` is ignored; every stream is derived from `trial_seed`.
    pub spec: InstanceSpec<T>,
    pub policy: SamplingPolicy,
    pub t: usize,
    pub trial_seed: u64,
    #[serde(default = "default_refit")]
    pub refit: RefitMode,
}

fn default_refit() -> RefitMode {
    RefitMode::MinNorm
}

impl<T: Scalar> TrialConfig<T> {
    pub fn new(spec: InstanceSpec<T>, policy: SamplingPolicy, t: usize, trial_seed: u64) -> Self {
        Self {
            spec,
            policy,
            t,
            trial_seed,
            refit: default_refit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct TrialResult<T> {
    pub recovered: bool,
    pub hamming: usize,
    pub param_err: T,
    pub mean_gap: T,
    /// `(event_gram, event_noise)` at the realized `α = λ_min(G_{S*})/T`.
    pub events: (bool, bool),
    pub runtime_ms: f64,
    /// A selected block had fewer than `d` independent states.
    pub rank_deficient: bool,
    /// Why the fit produced no estimate, if it did not.
    pub failure: Option<String>,
}

impl<T: Scalar> TrialResult<T> {
    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self {
            runtime_ms: 0.0,
            ..self.clone()
        } == Self {
            runtime_ms: 0.0,
            ..other.clone()
        }
    }
}

/// Everything a trial touched, for checks that need more than the summary.
#[derive(Debug, Clone)]
pub struct TrialOutcome<T> {
    pub result: TrialResult<T>,
    pub instance: Instance<T>,
    pub data: Dataset<T>,
    pub eps: Vec<T>,
    pub fit: Option<BompResult<T>>,
    pub report: Option<DiagnosticsReport<T>>,
    pub states: Vec<LatentState<T>>,
}

pub fn run_trial<T: Scalar>(cfg: &TrialConfig<T>) -> Result<TrialResult<T>> {
    Ok(run_trial_detailed(cfg)?.result)
}

/// Instance, dataset, Block-OMP with `k` iterations, diagnostics and
/// decision metrics, all seeded from `cfg.trial_seed`.
pub fn run_trial_detailed<T: Scalar>(cfg: &TrialConfig<T>) -> Result<TrialOutcome<T>> {
    let start = Instant::now();
    let mut spec = cfg.spec.clone();
    spec.seed = derive_seed(cfg.trial_seed, &[stream::INSTANCE]);
    let instance = sample_instance(&spec)?;
    let generated = sample_dataset(
        &instance,
        &cfg.policy,
        cfg.t,
        derive_seed(cfg.trial_seed, &[stream::DATASET]),
    )?;
    let data = generated.dataset;
    let eps = generated.eps;
    let states = draw_states(&spec, EVAL_STATES, derive_seed(cfg.trial_seed, &[stream::EVAL_STATES]))?;

    let report = recovery_events(&instance, &data, &eps)?;
    let events = report
        .as_ref()
        .map_or((false, false), |r| (r.event_gram, r.event_noise));

    let design = build_block_design(&data);
    let fit = match run_bomp_on_design(
        &design,
        &data.rewards(),
        StoppingRule::FixedIterations(spec.k),
        cfg.refit,
    ) {
        Ok(f) => Ok(f),
        Err(e @ (Error::RankDeficient { .. } | Error::InvalidParameter(_))) => Err(e.to_string()),
        Err(e) => return Err(e),
    };

    let s_star = &instance.s_star;
    let result = match &fit {
        Ok(f) => {
            let model = DecisionModel::from(f);
            let err = param_error(&model, &instance.w_star);
            let mut gap_sum = T::zero();
            for z in &states {
                gap_sum += suboptimality_gap(&instance.w_star, &model, z)?.0;
            }
            let hamming = f.support.symmetric_difference(s_star);
            TrialResult {
                recovered: hamming == 0,
                hamming,
                param_err: err.err,
                mean_gap: gap_sum / T::lit(states.len() as f64),
                events,
                runtime_ms: 0.0,
                rank_deficient: f.rank_deficient,
                failure: None,
            }
        }
        Err(msg) => {
            // no estimate: score the trial as Ŝ = ∅, Ŵ = 0
            let norm_sq: T = s_star
                .indices()
                .iter()
                .map(|&j| instance.w_star.row_norm(j).powi(2))
                .sum();
            TrialResult {
                recovered: false,
                hamming: s_star.len(),
                param_err: norm_sq.sqrt(),
                mean_gap: T::nan(),
                events,
                runtime_ms: 0.0,
                rank_deficient: msg.contains("rank"),
                failure: Some(msg.clone()),
            }
        }
    };
    let result = TrialResult {
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        ..result
    };
    Ok(TrialOutcome {
        result,
        instance,
        data,
        eps,
        fit: fit.ok(),
        report,
        states,
    })
}

/// Event report at the realized `α`, or `None` when `G_{S*}` is singular.
fn recovery_events<T: Scalar>(
    instance: &Instance<T>,
    data: &Dataset<T>,
    eps: &[T],
) -> Result<Option<DiagnosticsReport<T>>> {
    let counts = coverage_counts(data);
    if min_coverage(&counts, &instance.s_star).unwrap_or(0) < instance.spec.d {
        return Ok(None);
    }
    let lambda = min_eigen(&gram(&build_block_design(data), &instance.s_star))?;
    let alpha = lambda / T::lit(data.len() as f64);
    if !(alpha > T::zero()) {
        return Ok(None);
    }
    match check_thm1_events(instance, data, Some(eps), alpha) {
        Ok(r) => Ok(Some(r)),
        Err(Error::SingularGram) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Caps `cells × trials` unless a grid sets its own budget.
pub const DEFAULT_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub m: Vec<usize>,
    pub d: Vec<usize>,
    pub k: Vec<usize>,
    /// Sample sizes. Leave empty and set `t_factor` to use
    /// `T = ⌈c · k · d · ln M⌉` per cell instead.
    #[serde(default)]
    pub t: Vec<usize>,
    #[serde(default)]
    pub t_factor: Vec<f64>,
    pub noise_sigma: Vec<f64>,
    pub b: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_policy")]
    pub policy: SamplingPolicy,
    #[serde(default = "default_refit")]
    pub refit: RefitMode,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_policy() -> SamplingPolicy {
    SamplingPolicy::Uniform
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub t: usize,
    pub noise_sigma: f64,
    pub b: f64,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("m", self.m.is_empty()),
            ("d", self.d.is_empty()),
            ("k", self.k.is_empty()),
            ("noise_sigma", self.noise_sigma.is_empty()),
            ("b", self.b.is_empty()),
        ];
        if let Some((name, _)) = axes.iter().find(|a| a.1) {
            return Err(Error::invalid(format!("sweep axis '{name}' is empty")));
        }
        if self.t.is_empty() == self.t_factor.is_empty() {
            return Err(Error::invalid("exactly one of 't' and 't_factor' must be nonempty"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        let n_t = self.t.len().max(self.t_factor.len());
        let cells = self.m.len() * self.d.len() * self.k.len() * n_t * self.noise_sigma.len() * self.b.len();
        if cells.saturating_mul(self.trials) > self.budget {
            return Err(Error::invalid(format!(
                "{cells} cells x {} trials exceeds the budget of {}",
                self.trials, self.budget
            )));
        }
        Ok(())
    }

    /// Cells in grid order: `m` outermost, then `d, k, t, noise_sigma, b`.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        self.validate()?;
        let mut out = Vec::new();
        for &m in &self.m {
            for &d in &self.d {
                for &k in &self.k {
                    let ts: Vec<usize> = if self.t.is_empty() {
                        self.t_factor
                            .iter()
                            .map(|&c| crate::diagnostics::sample_size_threshold(k, d, m, c))
                            .collect::<Result<_>>()?
                    } else {
                        self.t.clone()
                    };
                    for t in ts {
                        for &noise_sigma in &self.noise_sigma {
                            for &b in &self.b {
                                let cell = Cell {
                                    m,
                                    d,
                                    k,
                                    t,
                                    noise_sigma,
                                    b,
                                };
                                cell.spec(0).validate()?;
                                if t == 0 {
                                    return Err(Error::invalid("t must be at least 1"));
                                }
                                out.push(cell);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

impl Cell {
    fn spec(&self, seed: u64) -> InstanceSpec<f64> {
        InstanceSpec::new(self.m, self.d, self.k, self.b, self.noise_sigma, seed)
    }
}

/// One aggregated sweep cell; field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub t: usize,
    pub noise_sigma: f64,
    pub b: f64,
    pub trials: usize,
    pub recovery_rate: f64,
    pub mean_hamming: f64,
    pub mean_param_err: f64,
    /// Mean over trials that produced an estimate.
    pub mean_gap: f64,
    /// Half-width of the 95% interval on `recovery_rate`.
    pub ci_halfwidth: f64,
    pub seed: u64,
}

pub const SWEEP_COLUMNS: [&str; 13] = [
    "m",
    "d",
    "k",
    "t",
    "noise_sigma",
    "b",
    "trials",
    "recovery_rate",
    "mean_hamming",
    "mean_param_err",
    "mean_gap",
    "ci_halfwidth",
    "seed",
];

pub fn aggregate(cell: &Cell, results: &[TrialResult<f64>], seed: u64) -> SweepRow {
    let n = results.len() as f64;
    let rate = results.iter().filter(|r| r.recovered).count() as f64 / n;
    let gaps: Vec<f64> = results.iter().map(|r| r.mean_gap).filter(|g| !g.is_nan()).collect();
    SweepRow {
        m: cell.m,
        d: cell.d,
        k: cell.k,
        t: cell.t,
        noise_sigma: cell.noise_sigma,
        b: cell.b,
        trials: results.len(),
        recovery_rate: rate,
        mean_hamming: results.iter().map(|r| r.hamming as f64).sum::<f64>() / n,
        mean_param_err: results.iter().map(|r| r.param_err).sum::<f64>() / n,
        mean_gap: if gaps.is_empty() {
            f64::NAN
        } else {
            gaps.iter().sum::<f64>() / gaps.len() as f64
        },
        ci_halfwidth: proportion_ci(rate, results.len()),
        seed,
    }
}

/// Config of trial `trial` in cell `index` of `grid`.
pub fn trial_config(grid: &SweepGrid, index: usize, cell: &Cell, trial: usize) -> TrialConfig<f64> {
    TrialConfig {
        spec: cell.spec(0),
        policy: grid.policy.clone(),
        t: cell.t,
        trial_seed: derive_seed(grid.base_seed, &[index as u64, trial as u64]),
        refit: grid.refit,
    }
}

/// Runs every cell of `grid` in parallel and aggregates in grid order.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    let cells = grid.cells()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..grid.trials).map(move |i| (c, i)))
        .collect();
    let results: Vec<TrialResult<f64>> = jobs
        .par_iter()
        .map(|&(c, i)| run_trial(&trial_config(grid, c, &cells[c], i)))
        .collect::<Result<_>>()?;
    Ok(cells
        .iter()
        .zip(results.chunks(grid.trials))
        .map(|(cell, chunk)| aggregate(cell, chunk, grid.base_seed))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::invalid(format!(
                "unknown format '{other}' (expected csv or json)"
            ))),
        }
    }
}

impl OutputFormat {
    /// `json` for a `.json` extension, `csv` otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

pub fn write_results(rows: &[SweepRow], path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => crate::lower_bounds::write_rows_csv(rows, &SWEEP_COLUMNS, path),
        OutputFormat::Json => crate::model::write_json(rows, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SweepGrid {
        SweepGrid {
            m: vec![10],
            d: vec![2],
            k: vec![2],
            t: vec![20, 80],
            t_factor: vec![],
            noise_sigma: vec![0.1],
            b: vec![1.0],
            trials: 20,
            base_seed: 3,
            budget: DEFAULT_BUDGET,
            policy: SamplingPolicy::Uniform,
            refit: RefitMode::MinNorm,
        }
    }

    #[test]
    fn noiseless_budget_recovers() {
        // T = 4·k·d·ln M with M = 10, k = 3, d = 3
        let t = crate::diagnostics::sample_size_threshold(3, 3, 10, 4.0).unwrap();
        let spec = InstanceSpec::new(10, 3, 3, 1.0, 0.0, 0);
        let hits = (0..200)
            .filter(|&s| {
                run_trial(&TrialConfig::new(spec.clone(), SamplingPolicy::Uniform, t, s))
                    .unwrap()
                    .recovered
            })
            .count();
        assert!(hits >= 198, "{hits}/200");
    }

    #[test]
    fn tiny_budget_fails() {
        let spec = InstanceSpec::new(200, 5, 5, 1.0, 0.1, 0);
        let hits = (0..100)
            .filter(|&s| {
                run_trial(&TrialConfig::new(spec.clone(), SamplingPolicy::Uniform, 5, s))
                    .unwrap()
                    .recovered
            })
            .count();
        assert!(hits <= 2);
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = TrialConfig::new(
            InstanceSpec::new(30, 3, 3, 1.0, 0.2, 0),
            SamplingPolicy::Uniform,
            150,
            42,
        );
        let a = run_trial(&cfg).unwrap();
        let b = run_trial(&cfg).unwrap();
        assert!(a.same_outcome(&b));
        assert_eq!(a.hamming == 0, a.recovered);
    }

    #[test]
    fn strict_refit_failure_is_recorded() {
        // d = 5 with about two samples per action leaves blocks rank-deficient
        let mut cfg = TrialConfig::new(
            InstanceSpec::new(20, 5, 3, 1.0, 0.1, 0),
            SamplingPolicy::RoundRobin,
            40,
            1,
        );
        cfg.refit = RefitMode::Strict;
        let res = run_trial(&cfg).unwrap();
        assert!(!res.recovered);
        assert!(res.rank_deficient);
        assert_eq!(res.hamming, 3);
        assert!(res.failure.is_some());
        cfg.refit = RefitMode::MinNorm;
        let res = run_trial(&cfg).unwrap();
        assert!(res.rank_deficient && res.failure.is_none());
    }

    #[test]
    fn single_cell_matches_trials() {
        let mut g = grid();
        g.t = vec![40];
        let rows = sweep(&g).unwrap();
        assert_eq!(rows.len(), 1);
        let cells = g.cells().unwrap();
        let manual: Vec<_> = (0..g.trials)
            .map(|i| run_trial(&trial_config(&g, 0, &cells[0], i)).unwrap())
            .collect();
        assert_eq!(rows[0], aggregate(&cells[0], &manual, g.base_seed));
    }

    #[test]
    fn grid_validation() {
        let mut g = grid();
        g.budget = 10;
        assert!(sweep(&g).is_err());
        let mut g = grid();
        g.t_factor = vec![2.0];
        assert!(g.validate().is_err());
        let mut g = grid();
        g.k = vec![];
        assert!(g.validate().is_err());
        let mut g = grid();
        g.k = vec![20];
        assert!(g.cells().is_err());
        let mut g = grid();
        g.t = vec![];
        g.t_factor = vec![1.0, 2.0];
        let ts: Vec<usize> = g.cells().unwrap().iter().map(|c| c.t).collect();
        assert_eq!(ts, vec![10, 19]);
    }

    #[test]
    fn csv_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let rows = sweep(&grid()).unwrap();
        let csv_path = dir.path().join("r.csv");
        let json_path = dir.path().join("r.json");
        write_results(&rows, &csv_path, OutputFormat::Csv).unwrap();
        write_results(&rows, &json_path, OutputFormat::Json).unwrap();
        let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
        assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), SWEEP_COLUMNS);
        let from_csv: Vec<SweepRow> = rdr.deserialize().collect::<std::result::Result<_, _>>().unwrap();
        let from_json: Vec<SweepRow> = crate::model::read_json(&json_path).unwrap();
        assert_eq!(from_csv, rows);
        assert_eq!(from_json, rows);

        write_results(&[], &csv_path, OutputFormat::Csv).unwrap();
        assert_eq!(
            std::fs::read_to_string(&csv_path).unwrap(),
            SWEEP_COLUMNS.join(",") + "\n"
        );
    }
}
