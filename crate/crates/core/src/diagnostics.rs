//! Quantities entering the recovery conditions, evaluated on a realized
//! dataset: Gram matrices and their smallest eigenvalue, block incoherence,
//! coverage, noise correlations and the two sufficient events for exact
//! recovery.
//!
//! On a canonical design (one action per row) the cross blocks `Ψ_jᵀΨ_S`
//! vanish identically, so the incoherence `μ` is exactly zero. The general
//! formula is still evaluated through [`CrossProducts`], which also admits
//! dense designs with shared rows.

use serde::{Deserialize, Serialize};

use crate::bomp::block_scores;
use crate::envgen::{coverage_counts, min_coverage, Instance};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, operator_norm, symmetric_eigenvalues, Matrix};
use crate::model::{build_block_design, BlockDesign, Dataset, SupportSet};
use crate::scalar::Scalar;

/// Access to the `d × d` products `Ψ_iᵀ Ψ_j` of a block design.
pub trait CrossProducts<T: Scalar> {
    fn num_blocks(&self) -> usize;
    fn block_dim(&self) -> usize;
    fn cross(&self, i: usize, j: usize) -> Matrix<T>;
}

impl<T: Scalar> CrossProducts<T> for BlockDesign<T> {
    fn num_blocks(&self) -> usize {
        self.m()
    }

    fn block_dim(&self) -> usize {
        self.d()
    }

    fn cross(&self, i: usize, j: usize) -> Matrix<T> {
        BlockDesign::cross(self, i, j)
    }
}

/// A general dense design `Ψ ∈ ℝ^{T × M·d}` whose blocks may share rows.
#[derive(Debug, Clone)]
pub struct DenseDesign<T> {
    psi: Matrix<T>,
    d: usize,
}

impl<T: Scalar> DenseDesign<T> {
    pub fn new(psi: Matrix<T>, d: usize) -> Result<Self> {
        if d == 0 || !psi.cols().is_multiple_of(d) {
            return Err(Error::invalid("design width must be a multiple of d"));
        }
        Ok(Self { psi, d })
    }

    pub fn block(&self, j: usize) -> Matrix<T> {
        let mut out = Matrix::zeros(self.psi.rows(), self.d);
        for t in 0..self.psi.rows() {
            for c in 0..self.d {
                out[(t, c)] = self.psi[(t, j * self.d + c)];
            }
        }
        out
    }
}

impl<T: Scalar> CrossProducts<T> for DenseDesign<T> {
    fn num_blocks(&self) -> usize {
        self.psi.cols() / self.d
    }

    fn block_dim(&self) -> usize {
        self.d
    }

    fn cross(&self, i: usize, j: usize) -> Matrix<T> {
        self.block(i).transpose().matmul(&self.block(j))
    }
}

/// `G_S = Ψ_Sᵀ Ψ_S` in support order.
pub fn gram<T: Scalar, D: CrossProducts<T> + ?Sized>(design: &D, support: &SupportSet) -> Matrix<T> {
    let d = design.block_dim();
    let s = support.indices();
    let mut g = Matrix::zeros(s.len() * d, s.len() * d);
    for (a, &i) in s.iter().enumerate() {
        for (b, &j) in s.iter().enumerate() {
            g.set_block(a * d, b * d, &design.cross(i, j));
        }
    }
    g
}

/// Smallest eigenvalue of a symmetric matrix (`+∞` for an empty one).
pub fn min_eigen<T: Scalar>(g: &Matrix<T>) -> Result<T> {
    if !g.is_symmetric(T::tiny()) {
        return Err(Error::NotSymmetric);
    }
    Ok(symmetric_eigenvalues(g).first().copied().unwrap_or_else(T::infinity))
}

/// `min_{j∈S} λ_min(Σ_{t∈I_j} z_t z_tᵀ)`, the block-diagonal shortcut.
pub fn min_eigen_blockwise<T: Scalar>(design: &BlockDesign<T>, support: &SupportSet) -> T {
    support
        .indices()
        .iter()
        .map(|&j| symmetric_eigenvalues(&design.block_gram(j))[0])
        .fold(T::infinity(), T::min)
}

/// `μ = max_{j∉S} ‖Ψ_jᵀ Ψ_S G_S⁻¹‖₂→₂`, zero when the complement is empty.
pub fn block_incoherence<T: Scalar, D: CrossProducts<T> + ?Sized>(design: &D, support: &SupportSet) -> Result<T> {
    let d = design.block_dim();
    let g = gram(design, support);
    let n = g.rows();
    if n == 0 {
        return Err(Error::EmptySupport);
    }
    let eig = symmetric_eigenvalues(&g);
    let scale = eig[n - 1].abs();
    if !(eig[0] > T::tiny() * scale) {
        return Err(Error::SingularGram);
    }
    let chol = cholesky(&g).ok_or(Error::SingularGram)?;

    let mut mu = T::zero();
    for j in (0..design.num_blocks()).filter(|&j| !support.contains(j)) {
        // X = Ψ_jᵀ Ψ_S (d × n); C = X G⁻¹, so row r of C solves G c = x_r
        let mut x = Matrix::zeros(d, n);
        for (b, &i) in support.indices().iter().enumerate() {
            x.set_block(0, b * d, &design.cross(j, i));
        }
        if x.max_abs() == T::zero() {
            continue;
        }
        let mut c = Matrix::zeros(d, n);
        for r in 0..d {
            let sol = cholesky_solve(&chol, x.row(r));
            for (col, v) in sol.into_iter().enumerate() {
                c[(r, col)] = v;
            }
        }
        mu = mu.max(operator_norm(&c));
    }
    Ok(mu)
}

/// `‖Ψ_jᵀ ε‖₂` for every action.
pub fn noise_correlations<T: Scalar>(design: &BlockDesign<T>, eps: &[T]) -> Result<Vec<T>> {
    block_scores(design, eps)
}

/// `lhs − rhs` of each sufficient event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct EventMargins<T> {
    /// `λ_min(G_{S*}) − αT`; the event holds when `≥ 0`.
    pub gram: T,
    /// `max_j ‖Ψ_jᵀε‖₂ − ((1−μ)/2)·αT·b_min`; the event holds when `≤ 0`.
    pub noise: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct DiagnosticsReport<T> {
    pub mu: T,
    pub lambda_min: T,
    pub alpha: T,
    pub coverage: Vec<usize>,
    pub n_min_on_support: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_corr_max: Option<T>,
    pub event_gram: bool,
    pub event_noise: bool,
    pub margins: EventMargins<T>,
}

/// `α = λ_min(G_{S*}) / T` on the realized data.
pub fn realized_alpha<T: Scalar>(inst: &Instance<T>, data: &Dataset<T>) -> Result<T> {
    let design = build_block_design(data);
    let lambda = min_eigen(&gram(&design, &inst.s_star))?;
    Ok(lambda / T::lit(data.len() as f64))
}

/// Evaluates both sufficient events. `eps = None` means the noise is
/// unknown, in which case the noise event is reported false.
pub fn check_thm1_events<T: Scalar>(
    inst: &Instance<T>,
    data: &Dataset<T>,
    eps: Option<&[T]>,
    alpha: T,
) -> Result<DiagnosticsReport<T>> {
    if !(alpha > T::zero()) {
        return Err(Error::invalid("alpha must be positive"));
    }
    let design = build_block_design(data);
    let support = &inst.s_star;
    let lambda_min = min_eigen(&gram(&design, support))?;
    let mu = block_incoherence(&design, support)?;
    let t = T::lit(data.len() as f64);
    let coverage = coverage_counts(data);
    let n_min_on_support = min_coverage(&coverage, support).unwrap_or(0);

    // compared on the α scale so that α = λ_min/T reproduces margin 0 exactly
    let alpha_realized = lambda_min / t;
    let noise_corr_max = match eps {
        Some(e) => Some(noise_correlations(&design, e)?.into_iter().fold(T::zero(), T::max)),
        None => None,
    };
    let noise_rhs = (T::one() - mu) / T::lit(2.0) * alpha * t * inst.b_min();
    let noise_margin = noise_corr_max.map(|n| n - noise_rhs);
    Ok(DiagnosticsReport {
        mu,
        lambda_min,
        alpha: alpha_realized,
        coverage,
        n_min_on_support,
        noise_corr_max,
        event_gram: alpha_realized >= alpha,
        event_noise: noise_margin.is_some_and(|m| m <= T::zero()),
        margins: EventMargins {
            gram: (alpha_realized - alpha) * t,
            noise: noise_margin,
        },
    })
}

/// `max(1, ⌈c · k · d · ln m⌉)`.
pub fn sample_size_threshold(k: usize, d: usize, m: usize, c: f64) -> Result<usize> {
    if !(c > 0.0) {
        return Err(Error::invalid("c must be positive"));
    }
    let raw = (c * (k * d) as f64 * (m as f64).ln()).ceil();
    Ok(if raw.is_finite() && raw >= 1.0 { raw as usize } else { 1 })
}
