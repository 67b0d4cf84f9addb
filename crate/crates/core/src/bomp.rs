//! Contextual Block-OMP.
//!
//! Starting from `u⁽⁰⁾ = r` and `S₀ = ∅`, each iteration picks the action
//! maximizing `‖Ψ_jᵀ u‖₂`, adds it to the support, refits all selected
//! blocks by least squares and recomputes the residual. Because the blocks
//! of a canonical design occupy disjoint rows, the joint least-squares
//! problem separates into one small problem per selected action.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_norm_least_squares, qr_least_squares};
use crate::model::{build_block_design, BlockDesign, Dataset, ParamMatrix, SupportSet};
use crate::scalar::{greater, norm2, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum StoppingRule<T> {
    /// Run exactly `k` selections.
    FixedIterations(usize),
    /// Stop once `‖u‖₂ ≤ τ`.
    ResidualThreshold(T),
    /// Stop once every unselected score is `≤ η`.
    ScoreThreshold(T),
}

/// How to handle a selected block whose Gram matrix is singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefitMode {
    #[default]
    Strict,
    MinNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct BompResult<T> {
    pub support: SupportSet,
    #[serde(with = "crate::model::bare_rows")]
    pub w_hat: ParamMatrix<T>,
    /// `γ` over all actions before each selection.
    #[serde(skip)]
    pub scores_per_iter: Vec<Vec<T>>,
    /// `‖u⁽ᵐ⁾‖₂` after each iteration.
    pub residual_norms: Vec<T>,
    pub iterations: usize,
    /// Set when the loop ended because no unselected block correlates with
    /// the residual.
    #[serde(skip)]
    pub stopped_early: bool,
    /// Set when a min-norm refit was used for a rank-deficient block.
    #[serde(skip)]
    pub rank_deficient: bool,
}

/// `γ_j = ‖Ψ_jᵀ u‖₂` for every action (zero for uncovered actions).
pub fn block_scores<T: Scalar>(design: &BlockDesign<T>, residual: &[T]) -> Result<Vec<T>> {
    if residual.len() != design.t() {
        return Err(Error::DimensionMismatch {
            expected: design.t(),
            found: residual.len(),
        });
    }
    Ok((0..design.m())
        .map(|j| norm2(&design.block_transpose_mul(j, residual)))
        .collect())
}

/// Argmax of `scores` over actions not yet selected, lowest index on ties.
pub fn select_action<T: Scalar>(scores: &[T], already_selected: &SupportSet) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (j, &s) in scores.iter().enumerate() {
        if already_selected.contains(j) {
            continue;
        }
        match best {
            Some(b) if !greater(s, scores[b]) => {}
            _ => best = Some(j),
        }
    }
    best.ok_or(Error::NoCandidates)
}

/// Per-block least squares `W_j = argmin ‖r_{I_j} − Z_j W_j‖`; rows outside
/// the support stay zero.
pub fn refit_ls<T: Scalar>(
    design: &BlockDesign<T>,
    support: &SupportSet,
    r: &[T],
    mode: RefitMode,
) -> Result<ParamMatrix<T>> {
    Ok(refit_flagged(design, support, r, mode)?.0)
}

fn refit_flagged<T: Scalar>(
    design: &BlockDesign<T>,
    support: &SupportSet,
    r: &[T],
    mode: RefitMode,
) -> Result<(ParamMatrix<T>, bool)> {
    if r.len() != design.t() {
        return Err(Error::DimensionMismatch {
            expected: design.t(),
            found: r.len(),
        });
    }
    let d = design.d();
    let mut w = ParamMatrix::zeros(design.m(), d);
    let mut deficient = false;
    for &j in support.indices() {
        if j >= design.m() {
            return Err(Error::IndexOutOfRange {
                index: j,
                bound: design.m(),
            });
        }
        let a = design.block_states(j);
        let rhs: Vec<T> = design.rows_of(j).iter().map(|&t| r[t]).collect();
        let coef = match qr_least_squares(&a, &rhs) {
            Ok(sol) => sol.x,
            Err(rank) => match mode {
                RefitMode::Strict => {
                    return Err(Error::RankDeficient {
                        action: j,
                        rank,
                        d,
                        n: design.count(j),
                    })
                }
                RefitMode::MinNorm => {
                    deficient = true;
                    min_norm_least_squares(&a, &rhs).x
                }
            },
        };
        w.set_row(j, &coef);
    }
    Ok((w, deficient))
}

/// `u = r − Σ_{j∈S} Ψ_j Ŵ_j`. Rows whose action is outside the support are
/// copied from `r` unchanged.
pub fn residual_update<T: Scalar>(
    design: &BlockDesign<T>,
    support: &SupportSet,
    w_hat: &ParamMatrix<T>,
    r: &[T],
) -> Vec<T> {
    let mut u = r.to_vec();
    for &j in support.indices() {
        let wj = w_hat.row(j);
        for &t in design.rows_of(j) {
            u[t] = r[t] - crate::scalar::dot(design.state(t), wj);
        }
    }
    u
}

/// Runs Contextual Block-OMP on `data` with a strict refit.
pub fn run_bomp<T: Scalar>(data: &Dataset<T>, stop: StoppingRule<T>) -> Result<BompResult<T>> {
    run_bomp_with(data, stop, RefitMode::Strict)
}

pub fn run_bomp_with<T: Scalar>(data: &Dataset<T>, stop: StoppingRule<T>, mode: RefitMode) -> Result<BompResult<T>> {
    let design = build_block_design(data);
    run_bomp_on_design(&design, &data.rewards(), stop, mode)
}

pub fn run_bomp_on_design<T: Scalar>(
    design: &BlockDesign<T>,
    r: &[T],
    stop: StoppingRule<T>,
    mode: RefitMode,
) -> Result<BompResult<T>> {
    let covered = design.covered_actions().len();
    let max_iter = match stop {
        StoppingRule::FixedIterations(k) => {
            if k > design.m() {
                return Err(Error::invalid(format!("k = {k} exceeds M = {}", design.m())));
            }
            if k > covered {
                return Err(Error::invalid(format!(
                    "k = {k} exceeds the number of covered actions ({covered})"
                )));
            }
            k
        }
        StoppingRule::ResidualThreshold(tau) | StoppingRule::ScoreThreshold(tau) => {
            if !(tau >= T::zero()) {
                return Err(Error::invalid("stopping threshold must be nonnegative"));
            }
            covered
        }
    };

    let r_norm = norm2(r);
    let floor = T::tiny() * r_norm;
    let mut support = SupportSet::empty();
    let mut w_hat = ParamMatrix::zeros(design.m(), design.d());
    let mut u = r.to_vec();
    let mut scores_per_iter = Vec::new();
    let mut residual_norms = Vec::new();
    let mut stopped_early = false;
    let mut rank_deficient = false;

    while support.len() < max_iter {
        if let StoppingRule::ResidualThreshold(tau) = stop {
            if norm2(&u) <= tau {
                break;
            }
        }
        let scores = block_scores(design, &u)?;
        let best = select_action(&scores, &support)?;
        let top = scores[best];
        if let StoppingRule::ScoreThreshold(eta) = stop {
            if top <= eta {
                scores_per_iter.push(scores);
                break;
            }
        }
        if !(top > floor) {
            stopped_early = true;
            scores_per_iter.push(scores);
            break;
        }
        scores_per_iter.push(scores);
        support.push(best);
        let (w, deficient) = refit_flagged(design, &support, r, mode)?;
        rank_deficient |= deficient;
        w_hat = w;
        u = residual_update(design, &support, &w_hat, r);
        residual_norms.push(norm2(&u));
    }

    Ok(BompResult {
        iterations: support.len(),
        support,
        w_hat,
        scores_per_iter,
        residual_norms,
        stopped_early,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::d1;
    use crate::model::Dataset;

    #[test]
    fn block_scores_examples() {
        let data = d1();
        let design = build_block_design(&data);
        assert_eq!(block_scores(&design, &data.rewards()).unwrap(), vec![4.0, 0.0, 0.0]);
        assert_eq!(block_scores(&design, &[0.0; 4]).unwrap(), vec![0.0; 3]);
        assert!(block_scores(&design, &[0.0; 3]).is_err());

        let two =
            Dataset::<f64>::from_columns(1, 2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], &[0, 0], &[0.0, 0.0]).unwrap();
        let s = block_scores(&build_block_design(&two), &[1.0, -1.0]).unwrap();
        assert!((s[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn select_action_examples() {
        let none = SupportSet::empty();
        assert_eq!(select_action(&[4.0, 0.0, 0.0], &none).unwrap(), 0);
        assert_eq!(select_action(&[1.0, 1.0, 0.0], &none).unwrap(), 0);
        let one = SupportSet::new(vec![1], 3).unwrap();
        assert_eq!(select_action(&[5.0, 9.0, 2.0], &one).unwrap(), 0);
        let all = SupportSet::new(vec![0, 1], 2).unwrap();
        assert!(matches!(select_action(&[1.0, 2.0], &all), Err(Error::NoCandidates)));
    }

    #[test]
    fn refit_examples() {
        let data = d1();
        let design = build_block_design(&data);
        let s0 = SupportSet::new(vec![0], 3).unwrap();
        let w = refit_ls(&design, &s0, &data.rewards(), RefitMode::Strict).unwrap();
        assert!((w.row(0)[0] - 2.0).abs() < 1e-15);
        assert_eq!(w.row(1), &[0.0]);
        assert_eq!(w.row(2), &[0.0]);
        let w0 = refit_ls(&design, &SupportSet::empty(), &data.rewards(), RefitMode::Strict).unwrap();
        assert_eq!(w0, ParamMatrix::zeros(3, 1));
    }

    #[test]
    fn refit_rank_deficiency_modes() {
        // one 2-d state for action 0: n_0 = 1 < d = 2
        let data =
            Dataset::<f64>::from_columns(2, 2, vec![vec![1.0, 1.0], vec![0.0, 1.0]], &[0, 1], &[2.0, 0.0]).unwrap();
        let design = build_block_design(&data);
        let s = SupportSet::new(vec![0], 2).unwrap();
        let err = refit_ls(&design, &s, &data.rewards(), RefitMode::Strict).unwrap_err();
        assert!(matches!(
            err,
            Error::RankDeficient {
                action: 0,
                rank: 1,
                d: 2,
                n: 1
            }
        ));
        let w = refit_ls(&design, &s, &data.rewards(), RefitMode::MinNorm).unwrap();
        assert!((w.row(0)[0] - 1.0).abs() < 1e-14 && (w.row(0)[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn residual_update_examples() {
        let data = d1();
        let design = build_block_design(&data);
        let r = data.rewards();
        let s0 = SupportSet::new(vec![0], 3).unwrap();
        let w = refit_ls(&design, &s0, &r, RefitMode::Strict).unwrap();
        assert_eq!(residual_update(&design, &s0, &w, &r), vec![0.0; 4]);
        assert_eq!(residual_update(&design, &SupportSet::empty(), &w, &r), r);

        let noisy =
            Dataset::<f64>::from_columns(3, 1, vec![vec![1.0]; 4], &[0, 0, 1, 2], &[2.1, 1.9, 0.3, -0.2]).unwrap();
        let design = build_block_design(&noisy);
        let r = noisy.rewards();
        let w = refit_ls(&design, &s0, &r, RefitMode::Strict).unwrap();
        let u = residual_update(&design, &s0, &w, &r);
        assert_eq!(&u[2..], &r[2..]);
    }

    #[test]
    fn run_bomp_single_step_on_d1() {
        let res = run_bomp(&d1(), StoppingRule::FixedIterations(1)).unwrap();
        assert_eq!(res.support.indices(), &[0]);
        assert!((res.w_hat.row(0)[0] - 2.0).abs() < 1e-15);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.residual_norms, vec![0.0]);
        assert_eq!(res.scores_per_iter[0], vec![4.0, 0.0, 0.0]);
    }

    #[test]
    fn run_bomp_stops_early_when_nothing_correlates() {
        let res = run_bomp(&d1(), StoppingRule::FixedIterations(2)).unwrap();
        assert!(res.stopped_early);
        assert_eq!(res.support.indices(), &[0]);
    }

    #[test]
    fn residual_threshold_zero_on_noiseless_data() {
        let res = run_bomp(&d1(), StoppingRule::ResidualThreshold(0.0)).unwrap();
        assert_eq!(res.support.indices(), &[0]);
        assert_eq!(*res.residual_norms.last().unwrap(), 0.0);
    }

    #[test]
    fn score_threshold_stops() {
        let data =
            Dataset::<f64>::from_columns(3, 1, vec![vec![1.0]; 4], &[0, 0, 1, 2], &[2.1, 1.9, 0.3, -0.2]).unwrap();
        let res = run_bomp(&data, StoppingRule::ScoreThreshold(0.5)).unwrap();
        assert_eq!(res.support.indices(), &[0]);
        let res = run_bomp(&data, StoppingRule::ScoreThreshold(0.25)).unwrap();
        assert_eq!(res.support.indices(), &[0, 1]);
    }

    #[test]
    fn fixed_iterations_guarded_by_coverage() {
        let data = Dataset::<f64>::from_columns(3, 1, vec![vec![1.0]; 2], &[0, 0], &[1.0, 1.0]).unwrap();
        assert!(run_bomp(&data, StoppingRule::FixedIterations(2)).is_err());
        assert!(run_bomp(&data, StoppingRule::FixedIterations(4)).is_err());
    }

    #[test]
    fn result_json_schema() {
        let res = run_bomp(&d1(), StoppingRule::FixedIterations(1)).unwrap();
        let text = serde_json::to_string(&res).unwrap();
        assert_eq!(
            text,
            r#"{"support":[0],"w_hat":[[2.0],[0.0],[0.0]],"residual_norms":[0.0],"iterations":1}"#
        );
        let back: BompResult<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back.support, res.support);
        assert_eq!(back.w_hat, res.w_hat);
    }
}
