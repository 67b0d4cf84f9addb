//! Plug-in decisions from a refitted support and the associated error
//! measures.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bomp::BompResult;
use crate::envgen::InstanceSpec;
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::{predict_reward, LatentState, ParamMatrix, SupportSet};
use crate::scalar::{dot, greater, norm2, Scalar};
use crate::seeding::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct DecisionModel<T> {
    pub support: SupportSet,
    pub w_hat: ParamMatrix<T>,
}

impl<T: Scalar> DecisionModel<T> {
    /// Zeroes rows of `w_hat` outside `support`.
    pub fn new(support: SupportSet, w_hat: &ParamMatrix<T>) -> Self {
        let w_hat = w_hat.restricted_to(&support);
        Self { support, w_hat }
    }
}

impl<T: Scalar> From<&BompResult<T>> for DecisionModel<T> {
    fn from(res: &BompResult<T>) -> Self {
        Self::new(res.support.clone(), &res.w_hat)
    }
}

/// `argmax_{j∈Ŝ} ⟨Ŵ_j, z⟩`, lowest index on ties.
pub fn plugin_action<T: Scalar>(model: &DecisionModel<T>, z: &LatentState<T>) -> Result<usize> {
    if model.support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if z.dim() != model.w_hat.d() {
        return Err(Error::DimensionMismatch {
            expected: model.w_hat.d(),
            found: z.dim(),
        });
    }
    let mut best: Option<(usize, T)> = None;
    for j in model.support.sorted() {
        let v = dot(model.w_hat.row(j), z.as_slice());
        match best {
            Some((_, bv)) if !greater(v, bv) => {}
            _ => best = Some((j, v)),
        }
    }
    Ok(best.expect("nonempty support").0)
}

/// Best mean reward at `z` over the given actions.
fn best_mean<T: Scalar>(w_star: &ParamMatrix<T>, z: &LatentState<T>, actions: impl IntoIterator<Item = usize>) -> T {
    actions
        .into_iter()
        .map(|j| dot(w_star.row(j), z.as_slice()))
        .fold(T::neg_infinity(), T::max)
}

/// `(gap, bound)` with `gap = max_{j∈S*∪Ŝ} ⟨W*_j, z⟩ − ⟨W*_{â(z)}, z⟩` and
/// `bound = 2 · max_{j∈Ŝ} ‖Ŵ_j − W*_j‖₂ · ‖z‖₂`.
///
/// The benchmark leaves out inactive actions that are not in `Ŝ`. Their mean
/// is zero, so they beat every active action whenever all active means at
/// `z` are negative, and no estimate restricted to `S*` can track that.
pub fn suboptimality_gap<T: Scalar>(
    w_star: &ParamMatrix<T>,
    model: &DecisionModel<T>,
    z: &LatentState<T>,
) -> Result<(T, T)> {
    if w_star.m() != model.w_hat.m() || w_star.d() != model.w_hat.d() {
        return Err(Error::DimensionMismatch {
            expected: w_star.m() * w_star.d(),
            found: model.w_hat.m() * model.w_hat.d(),
        });
    }
    let chosen = plugin_action(model, z)?;
    let mut pool = w_star.support().sorted();
    pool.extend(model.support.indices().iter().copied());
    let gap = best_mean(w_star, z, pool) - predict_reward(w_star, z, chosen)?;
    let worst_row = model
        .support
        .indices()
        .iter()
        .map(|&j| row_distance(model.w_hat.row(j), w_star.row(j)))
        .fold(T::zero(), T::max);
    let bound = T::lit(2.0) * worst_row * norm2(z.as_slice());
    Ok((gap, bound))
}

fn row_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ParamError<T> {
    /// `‖vec(Ŵ) − vec(W*)‖₂` over `Ŝ ∪ S*`.
    pub err: T,
    /// `‖Ŵ_j − W*_j‖₂` for `j ∈ Ŝ`, in support order.
    pub per_row: Vec<T>,
    /// `Ŝ ≠ S*` as sets.
    pub mismatch: bool,
}

pub fn param_error<T: Scalar>(model: &DecisionModel<T>, w_star: &ParamMatrix<T>) -> ParamError<T> {
    let s_star = w_star.support();
    let mut union = model.support.sorted();
    union.extend(s_star.indices().iter().filter(|j| !model.support.contains(**j)));
    let sq: T = union
        .iter()
        .map(|&j| {
            let d = row_distance(model.w_hat.row(j), w_star.row(j));
            d * d
        })
        .sum();
    ParamError {
        err: sq.sqrt(),
        per_row: model
            .support
            .indices()
            .iter()
            .map(|&j| row_distance(model.w_hat.row(j), w_star.row(j)))
            .collect(),
        mismatch: !model.support.same_set(&s_star),
    }
}

/// Fresh evaluation states drawn from `N(0, Σ_z)`.
pub fn draw_states<T: Scalar>(spec: &InstanceSpec<T>, count: usize, seed: u64) -> Result<Vec<LatentState<T>>> {
    let chol = match &spec.sigma_z {
        None => None,
        Some(_) => {
            Some(cholesky(&spec.covariance()?).ok_or_else(|| Error::invalid("sigma_z must be positive definite"))?)
        }
    };
    let mut rng = rng_from_seed(seed);
    Ok((0..count)
        .map(|_| {
            let g: Vec<T> = (0..spec.d)
                .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
                .collect();
            LatentState(match &chol {
                None => g,
                Some(l) => l.matvec(&g),
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::{sample_instance, InstanceSpec};

    fn two_row_model() -> DecisionModel<f64> {
        let w = ParamMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        DecisionModel::new(SupportSet::new(vec![0, 1], 3).unwrap(), &w)
    }

    #[test]
    fn plugin_examples() {
        let model = two_row_model();
        assert_eq!(plugin_action(&model, &LatentState(vec![2.0, 1.0])).unwrap(), 0);
        assert_eq!(plugin_action(&model, &LatentState(vec![1.0, 2.0])).unwrap(), 1);
        assert_eq!(plugin_action(&model, &LatentState(vec![0.0, 0.0])).unwrap(), 0);
        let empty = DecisionModel::new(SupportSet::empty(), &ParamMatrix::<f64>::zeros(3, 2));
        assert!(matches!(
            plugin_action(&empty, &LatentState(vec![1.0, 1.0])),
            Err(Error::EmptySupport)
        ));
    }

    #[test]
    fn exact_model_matches_global_argmax() {
        let inst = sample_instance(&InstanceSpec::<f64>::new(20, 3, 4, 1.0, 0.0, 5)).unwrap();
        let model = DecisionModel::new(inst.s_star.clone(), &inst.w_star);
        for z in draw_states(&inst.spec, 200, 8).unwrap() {
            let a = plugin_action(&model, &z).unwrap();
            let on_support = best_mean(&inst.w_star, &z, inst.s_star.sorted());
            assert_eq!(predict_reward(&inst.w_star, &z, a).unwrap(), on_support);
            // the global maximizer agrees unless every active mean is negative
            let global = best_mean(&inst.w_star, &z, 0..inst.w_star.m());
            assert_eq!(global, on_support.max(0.0));
            let (gap, bound) = suboptimality_gap(&inst.w_star, &model, &z).unwrap();
            assert_eq!(gap, 0.0);
            assert_eq!(bound, 0.0);
        }
    }

    #[test]
    fn zero_state_has_no_gap() {
        let model = two_row_model();
        let w_star = ParamMatrix::from_rows(vec![vec![0.5, 0.0], vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let (gap, bound) = suboptimality_gap(&w_star, &model, &LatentState(vec![0.0, 0.0])).unwrap();
        assert_eq!((gap, bound), (0.0, 0.0));
    }

    #[test]
    fn perturbed_model_respects_gap_bound() {
        let inst = sample_instance(&InstanceSpec::<f64>::new(10, 2, 3, 1.0, 0.0, 2)).unwrap();
        let mut w_hat = inst.w_star.clone();
        for &j in inst.s_star.indices() {
            let row: Vec<f64> = w_hat.row(j).iter().map(|x| x + 0.3).collect();
            w_hat.set_row(j, &row);
        }
        let model = DecisionModel::new(inst.s_star.clone(), &w_hat);
        for z in draw_states(&inst.spec, 500, 3).unwrap() {
            let (gap, bound) = suboptimality_gap(&inst.w_star, &model, &z).unwrap();
            assert!(gap >= 0.0);
            assert!(gap <= bound + 1e-12);
        }
    }

    #[test]
    fn param_error_cases() {
        let w_star = ParamMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let exact = DecisionModel::new(w_star.support(), &w_star);
        let e = param_error(&exact, &w_star);
        assert_eq!(e.err, 0.0);
        assert!(!e.mismatch);

        // missing action 2, spurious action 1
        let w_hat = ParamMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let wrong = DecisionModel::new(SupportSet::new(vec![0, 1], 3).unwrap(), &w_hat);
        let e = param_error(&wrong, &w_star);
        assert!(e.mismatch);
        assert!((e.err - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(e.per_row, vec![0.0, 1.0]);
    }

    #[test]
    fn plugin_invariant_to_positive_rescaling() {
        let inst = sample_instance(&InstanceSpec::<f64>::new(12, 3, 5, 1.0, 0.0, 9)).unwrap();
        let model = DecisionModel::new(inst.s_star.clone(), &inst.w_star);
        let mut scaled = inst.w_star.clone();
        for j in 0..12 {
            let row: Vec<f64> = scaled.row(j).iter().map(|x| x * 3.5).collect();
            scaled.set_row(j, &row);
        }
        let scaled = DecisionModel::new(inst.s_star.clone(), &scaled);
        for z in draw_states(&inst.spec, 100, 1).unwrap() {
            assert_eq!(plugin_action(&model, &z).unwrap(), plugin_action(&scaled, &z).unwrap());
        }
    }
}
