//! Brute-force references for small instances.

use serde::{Deserialize, Serialize};

use crate::bomp::{block_scores, refit_ls, residual_update, RefitMode};
use crate::error::{Error, Result};
use crate::model::{build_block_design, Dataset, SupportSet};
use crate::scalar::Scalar;

/// Subsets enumerated by [`exhaustive_support_search`] at most.
pub const SUBSET_LIMIT: u128 = 1_000_000;

/// RSS gap below which the best subset is not considered unique.
pub const UNIQUENESS_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct OracleResult<T> {
    pub best_support: SupportSet,
    pub best_rss: T,
    pub unique: bool,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Lexicographic successor of a strictly increasing index combination.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in (i + 1)..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Enumerates every size-`k` subset of the covered actions, refits each by
/// least squares and returns the minimum residual sum of squares. Subsets
/// whose refit is rank-deficient are skipped. Ties keep the
/// lexicographically first subset.
pub fn exhaustive_support_search<T: Scalar>(data: &Dataset<T>, k: usize) -> Result<OracleResult<T>> {
    let design = build_block_design(data);
    let covered = design.covered_actions();
    let subsets = binomial(data.m(), k);
    if subsets > SUBSET_LIMIT {
        return Err(Error::GuardExceeded {
            count: subsets,
            limit: SUBSET_LIMIT,
        });
    }
    if k > covered.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of covered actions ({})",
            covered.len()
        )));
    }
    let r = data.rewards();
    let mut best: Option<(T, Vec<usize>)> = None;
    let mut runner_up = T::infinity();
    let mut comb: Vec<usize> = (0..k).collect();
    loop {
        let subset: Vec<usize> = comb.iter().map(|&i| covered[i]).collect();
        let support = SupportSet::new(subset.clone(), data.m())?;
        match refit_ls(&design, &support, &r, RefitMode::Strict) {
            Ok(w) => {
                let u = residual_update(&design, &support, &w, &r);
                let rss: T = u.iter().map(|&x| x * x).sum();
                match &best {
                    Some((b, _)) if !(rss < *b) => runner_up = runner_up.min(rss),
                    Some((b, _)) => {
                        runner_up = runner_up.min(*b);
                        best = Some((rss, subset));
                    }
                    None => best = Some((rss, subset)),
                }
            }
            Err(Error::RankDeficient { .. }) => {}
            Err(e) => return Err(e),
        }
        if k == 0 || !next_combination(&mut comb, covered.len()) {
            break;
        }
    }
    let (best_rss, subset) = best.ok_or_else(|| Error::invalid("no full-rank subset of the requested size"))?;
    Ok(OracleResult {
        best_support: SupportSet::new(subset, data.m())?,
        best_rss,
        unique: runner_up - best_rss > T::lit(UNIQUENESS_MARGIN),
    })
}

/// The `k` largest initial scores `‖Ψ_jᵀ r‖₂`, descending, lowest index on
/// ties.
pub fn topk_by_initial_score<T: Scalar>(data: &Dataset<T>, k: usize) -> Result<SupportSet> {
    let design = build_block_design(data);
    let covered = design.covered_actions().len();
    if k > covered {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of covered actions ({covered})"
        )));
    }
    let scores = block_scores(&design, &data.rewards())?;
    let mut order: Vec<usize> = (0..data.m()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    SupportSet::new(order, data.m())
}
