//! Synthetic instances and datasets.
//!
//! States are Gaussian with covariance `Σ_z` (Cholesky factor applied to
//! standard normals), noise is Gaussian, and every active row of `W*` has
//! the same norm `b` unless a per-row norm list is supplied.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetric_eigenvalues, Matrix};
use crate::model::{Dataset, LatentState, ParamMatrix, Sample, SupportSet};
use crate::scalar::{norm2, Scalar};
use crate::seeding::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct InstanceSpec<T> {
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub b: T,
    /// Latent covariance; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_z: Option<Vec<Vec<T>>>,
    pub noise_sigma: T,
    pub seed: u64,
    /// Optional per-active-row norms (length `k`), overriding `b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_norms: Option<Vec<T>>,
}

impl<T: Scalar> InstanceSpec<T> {
    /// Identity covariance, uniform row norm.
    pub fn new(m: usize, d: usize, k: usize, b: T, noise_sigma: T, seed: u64) -> Self {
        Self {
            m,
            d,
            k,
            b,
            sigma_z: None,
            noise_sigma,
            seed,
            row_norms: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.d == 0 {
            return Err(Error::invalid("m and d must be positive"));
        }
        if self.k == 0 || self.k > self.m {
            return Err(Error::invalid(format!(
                "need 1 ≤ k ≤ m, got k = {} and m = {}",
                self.k, self.m
            )));
        }
        if !(self.b > T::zero()) {
            return Err(Error::invalid("b must be positive"));
        }
        if !(self.noise_sigma >= T::zero()) {
            return Err(Error::invalid("noise_sigma must be nonnegative"));
        }
        if let Some(norms) = &self.row_norms {
            if norms.len() != self.k || norms.iter().any(|&x| !(x > T::zero())) {
                return Err(Error::invalid("row_norms must hold k positive values"));
            }
        }
        self.covariance_bounds().map(|_| ())
    }

    pub fn covariance(&self) -> Result<Matrix<T>> {
        match &self.sigma_z {
            None => Ok(Matrix::identity(self.d)),
            Some(rows) => {
                if rows.len() != self.d || rows.iter().any(|r| r.len() != self.d) {
                    return Err(Error::invalid("sigma_z must be d × d"));
                }
                let m = Matrix::from_rows(rows);
                if !m.is_symmetric(T::tiny()) {
                    return Err(Error::NotSymmetric);
                }
                Ok(m)
            }
        }
    }

    /// `(κ, Λ)`: extreme eigenvalues of `Σ_z`; fails unless `κ > 0`.
    pub fn covariance_bounds(&self) -> Result<(T, T)> {
        let eig = symmetric_eigenvalues(&self.covariance()?);
        let (lo, hi) = (eig[0], eig[eig.len() - 1]);
        if !(lo > T::zero()) {
            return Err(Error::invalid("sigma_z must be positive definite"));
        }
        Ok((lo, hi))
    }

    /// Smallest active-row norm.
    pub fn b_min(&self) -> T {
        match &self.row_norms {
            Some(n) => n.iter().copied().fold(T::infinity(), T::min),
            None => self.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Instance<T> {
    pub spec: InstanceSpec<T>,
    pub w_star: ParamMatrix<T>,
    pub s_star: SupportSet,
}

impl<T: Scalar> Instance<T> {
    /// `min_{j∈S*} ‖W*_j‖₂`.
    pub fn b_min(&self) -> T {
        self.s_star
            .indices()
            .iter()
            .map(|&j| self.w_star.row_norm(j))
            .fold(T::infinity(), T::min)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingPolicy {
    Uniform,
    RoundRobin,
    ExplicitSchedule(Vec<usize>),
}

impl std::str::FromStr for SamplingPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "round-robin" => Ok(Self::RoundRobin),
            other => Err(Error::invalid(format!(
                "unknown policy '{other}' (expected uniform or round-robin)"
            ))),
        }
    }
}

/// A generated dataset together with the realized noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated<T> {
    pub dataset: Dataset<T>,
    pub eps: Vec<T>,
}

/// On-disk dataset: the core schema plus `"eps"` when noise is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct DatasetFile<T> {
    #[serde(flatten)]
    pub dataset: Dataset<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<T>>,
}

impl<T: Scalar> DatasetFile<T> {
    pub fn from_generated(g: Generated<T>, noise_sigma: T) -> Self {
        let eps = (noise_sigma > T::zero()).then_some(g.eps);
        Self {
            dataset: g.dataset,
            eps,
        }
    }
}

fn gaussian<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let x: f64 = rng.sample(StandardNormal);
    T::lit(x)
}

/// Draws `S*` uniformly among `k`-subsets (stored ascending) and each active
/// row as `b · u/‖u‖` with `u` standard Gaussian.
pub fn sample_instance<T: Scalar>(spec: &InstanceSpec<T>) -> Result<Instance<T>> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let mut idx = sample_indices(&mut rng, spec.m, spec.k).into_vec();
    idx.sort_unstable();
    let mut w = ParamMatrix::zeros(spec.m, spec.d);
    for (i, &j) in idx.iter().enumerate() {
        let norm = spec.row_norms.as_ref().map_or(spec.b, |n| n[i]);
        let dir = loop {
            let u: Vec<T> = (0..spec.d).map(|_| gaussian(&mut rng)).collect();
            let nu = norm2(&u);
            if nu > T::zero() {
                break u.into_iter().map(|x| x / nu).collect::<Vec<T>>();
            }
        };
        let row: Vec<T> = dir.into_iter().map(|x| x * norm).collect();
        w.set_row(j, &row);
    }
    Ok(Instance {
        spec: spec.clone(),
        w_star: w,
        s_star: SupportSet::from_unique(idx),
    })
}

/// Draws `t` samples: per row, the state, then the action, then the noise.
pub fn sample_dataset<T: Scalar>(
    inst: &Instance<T>,
    policy: &SamplingPolicy,
    t: usize,
    seed: u64,
) -> Result<Generated<T>> {
    if t == 0 {
        return Err(Error::invalid("t must be at least 1"));
    }
    let spec = &inst.spec;
    let (m, d) = (spec.m, spec.d);
    if let SamplingPolicy::ExplicitSchedule(s) = policy {
        if s.len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: s.len(),
            });
        }
        if let Some(&bad) = s.iter().find(|&&a| a >= m) {
            return Err(Error::IndexOutOfRange { index: bad, bound: m });
        }
    }
    let cov = spec.covariance()?;
    let chol = if spec.sigma_z.is_none() {
        None
    } else {
        Some(cholesky(&cov).ok_or_else(|| Error::invalid("sigma_z must be positive definite"))?)
    };

    let mut rng = rng_from_seed(seed);
    let mut samples = Vec::with_capacity(t);
    let mut eps = Vec::with_capacity(t);
    for step in 0..t {
        let g: Vec<T> = (0..d).map(|_| gaussian(&mut rng)).collect();
        let z = match &chol {
            None => g,
            Some(l) => l.matvec(&g),
        };
        let a = match policy {
            SamplingPolicy::Uniform => rng.random_range(0..m),
            SamplingPolicy::RoundRobin => step % m,
            SamplingPolicy::ExplicitSchedule(s) => s[step],
        };
        let e = spec.noise_sigma * gaussian::<T, _>(&mut rng);
        let mean = crate::scalar::dot(inst.w_star.row(a), &z);
        samples.push(Sample {
            z: LatentState(z),
            a,
            r: mean + e,
        });
        eps.push(e);
    }
    Ok(Generated {
        dataset: Dataset::new(m, d, samples)?,
        eps,
    })
}

/// `(n_0, …, n_{M−1})`.
pub fn coverage_counts<T: Scalar>(data: &Dataset<T>) -> Vec<usize> {
    let mut n = vec![0; data.m()];
    for s in data.samples() {
        n[s.a] += 1;
    }
    n
}

/// `min_{j∈S} n_j`; `None` for an empty support.
pub fn min_coverage(counts: &[usize], support: &SupportSet) -> Option<usize> {
    support.indices().iter().map(|&j| counts[j]).min()
}
