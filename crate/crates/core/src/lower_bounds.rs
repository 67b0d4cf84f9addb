//! Hard-instance families, closed-form information bounds and Monte Carlo
//! estimates of identification error.

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SupportSet;
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, rng_from_seed};

/// Fewest Monte Carlo trials accepted by the trial runners.
pub const MIN_TRIALS: usize = 100;

/// KL divergence between `N(Δ, 1)` and `N(0, 1)`: `Δ²/2`.
pub fn kl_gaussian_shift<T: Scalar>(delta: T) -> T {
    delta * delta / T::lit(2.0)
}

/// `½·exp(−kl)`, a floor on the sum of type I and type II errors.
pub fn bh_error_lower_bound<T: Scalar>(kl: T) -> Result<T> {
    if !(kl >= T::zero()) {
        return Err(Error::invalid("kl must be nonnegative"));
    }
    Ok((-kl).exp() / T::lit(2.0))
}

/// `n·b²/2`.
pub fn two_point_coverage_kl<T: Scalar>(n: usize, b: T) -> T {
    T::lit(n as f64) * b * b / T::lit(2.0)
}

/// `min(1, √(kl/2))`.
pub fn pinsker_tv_bound<T: Scalar>(kl: T) -> Result<T> {
    if !(kl >= T::zero()) {
        return Err(Error::invalid("kl must be nonnegative"));
    }
    Ok((kl / T::lit(2.0)).sqrt().min(T::one()))
}

/// `max(0, 1 − (b²t/2 + ln 2)/log_packing)`.
pub fn fano_error_lower_bound<T: Scalar>(t: usize, b: T, log_packing: T) -> Result<T> {
    if !(log_packing > T::zero()) {
        return Err(Error::invalid("log_packing must be positive"));
    }
    let info = b * b * T::lit(t as f64) / T::lit(2.0);
    Ok((T::one() - (info + T::lit(std::f64::consts::LN_2)) / log_packing).max(T::zero()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingConfig {
    /// Consecutive rejected draws after which the search stops.
    pub max_rejections: usize,
    /// Family size at which the search stops regardless.
    pub max_size: usize,
}

impl Default for PackingConfig {
    fn default() -> Self {
        Self {
            max_rejections: 1_000,
            max_size: 4_096,
        }
    }
}

/// Greedy randomized packing of `k`-subsets of `{0..m}` with pairwise
/// symmetric difference at least `⌈k/2⌉`.
pub fn support_packing(m: usize, k: usize, seed: u64, cfg: PackingConfig) -> Result<Vec<SupportSet>> {
    if k == 0 || 2 * k > m {
        return Err(Error::invalid(format!(
            "packing needs 1 <= k <= m/2, got m = {m}, k = {k}"
        )));
    }
    let min_dist = k.div_ceil(2);
    let mut rng = rng_from_seed(seed);
    // membership bitmaps keep the pairwise check at O(k) per kept set
    let mut kept: Vec<Vec<usize>> = Vec::new();
    let mut marks = vec![false; m];
    let mut rejections = 0;
    while rejections < cfg.max_rejections && kept.len() < cfg.max_size {
        let mut cand = sample_indices(&mut rng, m, k).into_vec();
        cand.sort_unstable();
        for &j in &cand {
            marks[j] = true;
        }
        let far = kept.iter().all(|s| {
            let shared = s.iter().filter(|&&j| marks[j]).count();
            2 * (k - shared) >= min_dist
        });
        for &j in &cand {
            marks[j] = false;
        }
        if far {
            kept.push(cand);
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    kept.into_iter().map(|s| SupportSet::new(s, m)).collect()
}

/// Normal-approximation 95% half-width of a proportion.
pub fn proportion_ci(p: f64, n: usize) -> f64 {
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::invalid(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    Ok(())
}

/// `m` Gaussian arms with unit variance; arm `j_star` has mean `delta`, the
/// rest mean zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestArmInstance {
    pub m: usize,
    pub delta: f64,
    pub j_star: usize,
}

impl BestArmInstance {
    pub fn new(m: usize, delta: f64, j_star: usize) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid("delta must be positive"));
        }
        if j_star >= m {
            return Err(Error::IndexOutOfRange {
                index: j_star,
                bound: m,
            });
        }
        Ok(Self { m, delta, j_star })
    }
}

/// Estimated error probability of empirical-mean argmax after `t`
/// round-robin pulls, with its 95% half-width.
///
/// Each arm's empirical mean is drawn directly from its exact law
/// `N(θ_j, 1/n_j)` instead of averaging `n_j` individual rewards.
pub fn run_best_arm_trials(inst: &BestArmInstance, t: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    check_trials(trials)?;
    let m = inst.m;
    if t < m {
        return Err(Error::invalid(format!("round-robin needs t >= m ({t} < {m})")));
    }
    let pulls: Vec<f64> = (0..m).map(|j| (t / m + usize::from(j < t % m)) as f64).collect();
    let errors: usize = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, &[i as u64]));
            let mut best = (0, f64::NEG_INFINITY);
            for (j, &n) in pulls.iter().enumerate() {
                let theta = if j == inst.j_star { inst.delta } else { 0.0 };
                let g: f64 = rng.sample(StandardNormal);
                let mean = theta + g / n.sqrt();
                if mean > best.1 {
                    best = (j, mean);
                }
            }
            usize::from(best.0 != inst.j_star)
        })
        .sum();
    let p = errors as f64 / trials as f64;
    Ok((p, proportion_ci(p, trials)))
}

/// `ℙ₀: W_j = 0` against `ℙ₁: W_j = b·u` from `n` pulls of action `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPointInstance {
    pub d: usize,
    pub b: f64,
    pub u: Vec<f64>,
    pub j: usize,
    pub n: usize,
}

impl TwoPointInstance {
    pub fn new(b: f64, u: Vec<f64>, j: usize, n: usize) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::invalid("b must be nonnegative"));
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if u.is_empty() || (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("u must be a unit vector (norm {norm})")));
        }
        Ok(Self { d: u.len(), b, u, j, n })
    }

    /// `u = e_1` in dimension `d`.
    pub fn axis(d: usize, b: f64, n: usize) -> Result<Self> {
        let mut u = vec![0.0; d];
        if let Some(x) = u.first_mut() {
            *x = 1.0;
        }
        Self::new(b, u, 0, n)
    }
}

/// Whether the likelihood-ratio test decides `ℙ₁` on one simulated sample
/// of `n` pulls drawn under `ℙ₁` (`alt`) or `ℙ₀`.
fn lr_test_rejects<R: Rng>(inst: &TwoPointInstance, alt: bool, rng: &mut R) -> bool {
    let mut llr = 0.0;
    for _ in 0..inst.n {
        let mean: f64 = inst
            .u
            .iter()
            .map(|&ui| {
                let z: f64 = rng.sample(StandardNormal);
                inst.b * ui * z
            })
            .sum();
        let noise: f64 = rng.sample(StandardNormal);
        let r = if alt { mean + noise } else { noise };
        llr += r * mean - mean * mean / 2.0;
    }
    llr > 0.0
}

/// `ℙ₀(reject) + ℙ₁(accept)` of the exact likelihood-ratio test, with a 95%
/// half-width combining both estimated error rates.
pub fn run_coverage_trials(inst: &TwoPointInstance, trials: usize, seed: u64) -> Result<(f64, f64)> {
    check_trials(trials)?;
    let (false_alarms, misses) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r0 = rng_from_seed(derive_seed(seed, &[i as u64, 0]));
            let mut r1 = rng_from_seed(derive_seed(seed, &[i as u64, 1]));
            let fa = usize::from(lr_test_rejects(inst, false, &mut r0));
            let miss = usize::from(!lr_test_rejects(inst, true, &mut r1));
            (fa, miss)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = trials as f64;
    let (p0, p1) = (false_alarms as f64 / n, misses as f64 / n);
    let ci = 1.96 * ((p0 * (1.0 - p0) + p1 * (1.0 - p1)) / n).sqrt();
    Ok((p0 + p1, ci))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestArmRow {
    pub m: usize,
    pub delta: f64,
    pub t: usize,
    pub trials: usize,
    pub error_prob: f64,
    pub ci_halfwidth: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub d: usize,
    pub b: f64,
    pub n: usize,
    pub trials: usize,
    pub error_sum: f64,
    pub ci_halfwidth: f64,
    pub kl: f64,
    pub pinsker_floor: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoRow {
    pub m: usize,
    pub k: usize,
    pub t: usize,
    pub b: f64,
    pub packing_size: usize,
    pub log_packing: f64,
    pub error_floor: f64,
    pub seed: u64,
}

/// Writes rows as CSV with a header taken from the field names.
pub fn write_rows_csv<S: Serialize>(rows: &[S], header: &[&str], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        w.write_record(header)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| e.at(path))
}

pub const BEST_ARM_COLUMNS: [&str; 7] = ["m", "delta", "t", "trials", "error_prob", "ci_halfwidth", "seed"];
pub const COVERAGE_COLUMNS: [&str; 9] = [
    "d",
    "b",
    "n",
    "trials",
    "error_sum",
    "ci_halfwidth",
    "kl",
    "pinsker_floor",
    "seed",
];
pub const FANO_COLUMNS: [&str; 8] = ["m", "k", "t", "b", "packing_size", "log_packing", "error_floor", "seed"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert!((kl_gaussian_shift(1.0f64) - 0.5).abs() < 1e-12);
        assert_eq!(kl_gaussian_shift(0.0f64), 0.0);
        assert!((kl_gaussian_shift(2.0f64) - 2.0).abs() < 1e-12);

        assert!((bh_error_lower_bound(2f64.ln()).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(bh_error_lower_bound(0.0f64).unwrap(), 0.5);
        assert!((bh_error_lower_bound(10.0f64).unwrap() - 2.2699964881e-5).abs() < 1e-14);
        assert!(bh_error_lower_bound(-1.0f64).is_err());

        assert!((two_point_coverage_kl(10, 0.1f64) - 0.05).abs() < 1e-12);
        assert_eq!(two_point_coverage_kl(0, 0.7f64), 0.0);
        assert!((two_point_coverage_kl(8, 0.5f64) - 1.0).abs() < 1e-12);

        assert_eq!(pinsker_tv_bound(0.0f64).unwrap(), 0.0);
        assert_eq!(pinsker_tv_bound(2.0f64).unwrap(), 1.0);
        assert!((pinsker_tv_bound(0.5f64).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fano_cases() {
        let v: f64 = fano_error_lower_bound(0, 1.0, 10.0).unwrap();
        assert!((v - (1.0 - 2f64.ln() / 10.0)).abs() < 1e-12);
        assert!((v - 0.9307).abs() < 1e-4);
        assert!(fano_error_lower_bound(5, 1.0, 1e300f64).unwrap() > 1.0 - 1e-12);
        assert_eq!(fano_error_lower_bound(100, 1.0, 10.0f64).unwrap(), 0.0);
        assert!(fano_error_lower_bound(1, 1.0, 0.0f64).is_err());
    }

    #[test]
    fn packing_properties() {
        for (m, k) in [(10, 1), (20, 3), (100, 5), (30, 15)] {
            let fam = support_packing(m, k, 11, PackingConfig::default()).unwrap();
            let need = k.div_ceil(2);
            for (i, a) in fam.iter().enumerate() {
                assert_eq!(a.len(), k);
                for b in &fam[i + 1..] {
                    assert!(a.symmetric_difference(b) >= need);
                }
            }
            if k == 1 {
                assert_eq!(fam.len(), m);
            }
        }
        let fam = support_packing(100, 5, 3, PackingConfig::default()).unwrap();
        assert!((fam.len() as f64).ln() >= 0.1 * 5.0 * (100.0f64 / 5.0).ln());
        assert!(support_packing(10, 6, 0, PackingConfig::default()).is_err());
        assert!(support_packing(10, 0, 0, PackingConfig::default()).is_err());
    }

    #[test]
    fn best_arm_regimes() {
        let easy = BestArmInstance::new(20, 100.0, 3).unwrap();
        assert!(run_best_arm_trials(&easy, 20, 200, 1).unwrap().0 < 0.01);
        let hard = BestArmInstance::new(100, 0.5, 0).unwrap();
        let (p, _) = run_best_arm_trials(&hard, 100, 500, 2).unwrap();
        assert!(p > 1.0 / 3.0);
        assert!(run_best_arm_trials(&hard, 100, 50, 2).is_err());
        assert!(run_best_arm_trials(&hard, 99, 500, 2).is_err());
        assert!(BestArmInstance::new(5, 0.0, 0).is_err());
        assert!(BestArmInstance::new(5, 1.0, 5).is_err());
    }

    #[test]
    fn best_arm_is_deterministic_and_monotone() {
        let inst = BestArmInstance::new(50, 0.5, 7).unwrap();
        assert_eq!(
            run_best_arm_trials(&inst, 400, 300, 9).unwrap(),
            run_best_arm_trials(&inst, 400, 300, 9).unwrap()
        );
        let mut prev: Option<(f64, f64)> = None;
        for t in [50, 200, 800, 3200, 12800] {
            let cur = run_best_arm_trials(&inst, t, 400, 4).unwrap();
            if let Some(p) = prev {
                assert!(cur.0 <= p.0 + 2.0 * (p.1 + cur.1));
            }
            prev = Some(cur);
        }
    }

    #[test]
    fn coverage_regimes() {
        let null = TwoPointInstance::axis(3, 0.0, 10).unwrap();
        assert_eq!(run_coverage_trials(&null, 200, 0).unwrap().0, 1.0);
        let weak = TwoPointInstance::axis(3, 0.1, 10).unwrap();
        let (sum, ci) = run_coverage_trials(&weak, 2000, 5).unwrap();
        let floor = 1.0 - pinsker_tv_bound(two_point_coverage_kl(10, 0.1)).unwrap();
        assert!(sum >= floor - 2.0 * ci);
        assert!(TwoPointInstance::new(0.1, vec![1.0, 1.0], 0, 5).is_err());
        assert!(run_coverage_trials(&weak, 10, 0).is_err());
    }
}
