//! Reward-model domain types and the block design.
//!
//! Rewards follow `r_t = ⟨W_{a_t}, z_t⟩ + ε_t` with `W` an `M × d` matrix
//! whose nonzero rows form the support. Actions are 0-based everywhere.
//! `vec(W)` is the row-major flattening, so block `j` of the stacked
//! parameter occupies coordinates `j·d .. (j+1)·d`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, norm2, Scalar};

/// A latent state `z ∈ ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentState<T>(pub Vec<T>);

impl<T: Scalar> LatentState<T> {
    pub fn new(entries: Vec<T>) -> Result<Self> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("latent state has non-finite entries"));
        }
        Ok(Self(entries))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

/// One observation `(z_t, a_t, r_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub z: LatentState<T>,
    pub a: usize,
    pub r: T,
}

#[derive(Deserialize)]
struct RawDataset<T> {
    m: usize,
    d: usize,
    samples: Vec<Sample<T>>,
}

/// `T ≥ 1` validated samples over `m` actions in dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset<T>", bound(deserialize = "T: Scalar"))]
pub struct Dataset<T> {
    m: usize,
    d: usize,
    samples: Vec<Sample<T>>,
}

impl<T: Scalar> TryFrom<RawDataset<T>> for Dataset<T> {
    type Error = Error;
    fn try_from(raw: RawDataset<T>) -> Result<Self> {
        Dataset::new(raw.m, raw.d, raw.samples)
    }
}

impl<T: Scalar> Dataset<T> {
    pub fn new(m: usize, d: usize, samples: Vec<Sample<T>>) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::invalid("dataset needs m ≥ 1 and d ≥ 1"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("dataset needs at least one sample"));
        }
        for s in &samples {
            if s.a >= m {
                return Err(Error::IndexOutOfRange { index: s.a, bound: m });
            }
            if s.z.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: s.z.dim(),
                });
            }
            if !s.r.is_finite() || s.z.0.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("dataset contains non-finite values"));
            }
        }
        Ok(Self { m, d, samples })
    }

    /// Convenience constructor from parallel columns.
    pub fn from_columns(m: usize, d: usize, states: Vec<Vec<T>>, actions: &[usize], rewards: &[T]) -> Result<Self> {
        if states.len() != actions.len() || actions.len() != rewards.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                found: actions.len().min(rewards.len()),
            });
        }
        let samples = states
            .into_iter()
            .zip(actions.iter().zip(rewards))
            .map(|(z, (&a, &r))| Sample {
                z: LatentState(z),
                a,
                r,
            })
            .collect();
        Self::new(m, d, samples)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    pub fn rewards(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.r).collect()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.a).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ParamRows<T> {
    rows: Vec<Vec<T>>,
}

/// Parameter matrix `W ∈ ℝ^{M×d}`, stored flattened row-major (`vec(W)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "ParamRows<T>",
    into = "ParamRows<T>",
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub struct ParamMatrix<T> {
    m: usize,
    d: usize,
    data: Vec<T>,
}

impl<T: Scalar> TryFrom<ParamRows<T>> for ParamMatrix<T> {
    type Error = Error;
    fn try_from(raw: ParamRows<T>) -> Result<Self> {
        ParamMatrix::from_rows(raw.rows)
    }
}

impl<T: Scalar> From<ParamMatrix<T>> for ParamRows<T> {
    fn from(p: ParamMatrix<T>) -> Self {
        ParamRows {
            rows: (0..p.m).map(|j| p.row(j).to_vec()).collect(),
        }
    }
}

impl<T: Scalar> ParamMatrix<T> {
    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            m,
            d,
            data: vec![T::zero(); m * d],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || d == 0 {
            return Err(Error::invalid("parameter matrix needs at least one nonempty row"));
        }
        let m = rows.len();
        let mut data = Vec::with_capacity(m * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            data.extend(r);
        }
        Ok(Self { m, d, data })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn set_row(&mut self, j: usize, values: &[T]) {
        self.row_mut(j).copy_from_slice(values);
    }

    /// `θ = vec(W)`, row-major.
    pub fn vec(&self) -> &[T] {
        &self.data
    }

    pub fn row_norm(&self, j: usize) -> T {
        norm2(self.row(j))
    }

    /// Indices of rows with positive norm, ascending.
    pub fn support(&self) -> SupportSet {
        SupportSet::from_unique((0..self.m).filter(|&j| self.row_norm(j) > T::zero()).collect())
    }

    /// Copy with every row outside `support` set to zero.
    pub fn restricted_to(&self, support: &SupportSet) -> Self {
        let mut out = Self::zeros(self.m, self.d);
        for &j in support.indices() {
            out.set_row(j, self.row(j));
        }
        out
    }
}

/// Serde adapter writing a [`ParamMatrix`] as a bare array of rows.
pub mod bare_rows {
    use super::ParamMatrix;
    use crate::scalar::Scalar;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Scalar, S: Serializer>(w: &ParamMatrix<T>, ser: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[T]> = (0..w.m()).map(|j| w.row(j)).collect();
        rows.serialize(ser)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(de: D) -> Result<ParamMatrix<T>, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(de)?;
        ParamMatrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// Distinct action indices in discovery order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SupportSet(Vec<usize>);

impl SupportSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Fails on duplicates or indices `≥ m`.
    pub fn new(indices: Vec<usize>, m: usize) -> Result<Self> {
        let mut seen = vec![false; m];
        for &j in &indices {
            if j >= m {
                return Err(Error::IndexOutOfRange { index: j, bound: m });
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::invalid(format!("duplicate action {j} in support")));
            }
        }
        Ok(Self(indices))
    }

    pub(crate) fn from_unique(indices: Vec<usize>) -> Self {
        Self(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.contains(&j)
    }

    pub(crate) fn push(&mut self, j: usize) {
        debug_assert!(!self.contains(j));
        self.0.push(j);
    }

    /// Indices in ascending order.
    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.0.clone();
        v.sort_unstable();
        v
    }

    /// Equality as sets, ignoring discovery order.
    pub fn same_set(&self, other: &SupportSet) -> bool {
        self.sorted() == other.sorted()
    }

    /// `|S Δ S'|`.
    pub fn symmetric_difference(&self, other: &SupportSet) -> usize {
        let a = self.sorted();
        let b = other.sorted();
        let common = a.iter().filter(|j| b.binary_search(j).is_ok()).count();
        a.len() + b.len() - 2 * common
    }
}

/// Block design: for each action the rows where it was played.
///
/// `Ψ_j` (row `t` equal to `z_tᵀ` when `a_t = j`, zero otherwise) is never
/// materialized; all products are evaluated group-locally.
#[derive(Debug, Clone)]
pub struct BlockDesign<T> {
    t: usize,
    m: usize,
    d: usize,
    states: Vec<T>,
    groups: Vec<Vec<usize>>,
}

impl<T: Scalar> BlockDesign<T> {
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `I_j`, ascending.
    pub fn rows_of(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }

    /// `n_j = |I_j|`.
    pub fn count(&self, j: usize) -> usize {
        self.groups[j].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Actions with at least one row.
    pub fn covered_actions(&self) -> Vec<usize> {
        (0..self.m).filter(|&j| !self.groups[j].is_empty()).collect()
    }

    pub fn state(&self, t: usize) -> &[T] {
        &self.states[t * self.d..(t + 1) * self.d]
    }

    /// Action played at row `t`.
    pub fn action_of(&self, t: usize) -> usize {
        // groups partition the rows; linear scan is only used in tests and
        // diagnostics on small designs
        (0..self.m)
            .find(|&j| self.groups[j].binary_search(&t).is_ok())
            .expect("row groups partition 0..T")
    }

    /// `Ψ_jᵀ v = Σ_{t∈I_j} z_t v_t`, summed in increasing `t`.
    pub fn block_transpose_mul(&self, j: usize, v: &[T]) -> Vec<T> {
        let mut acc = vec![T::zero(); self.d];
        for &t in &self.groups[j] {
            let vt = v[t];
            for (a, &z) in acc.iter_mut().zip(self.state(t)) {
                *a += z * vt;
            }
        }
        acc
    }

    /// The `n_j × d` matrix of states in `I_j`.
    pub fn block_states(&self, j: usize) -> Matrix<T> {
        let rows = &self.groups[j];
        let mut data = Vec::with_capacity(rows.len() * self.d);
        for &t in rows {
            data.extend_from_slice(self.state(t));
        }
        Matrix::from_row_major(rows.len(), self.d, data)
    }

    /// `Σ_{t∈I_j} z_t z_tᵀ`.
    pub fn block_gram(&self, j: usize) -> Matrix<T> {
        let d = self.d;
        let mut g = Matrix::zeros(d, d);
        for &t in &self.groups[j] {
            let z = self.state(t);
            for a in 0..d {
                for b in 0..d {
                    g[(a, b)] += z[a] * z[b];
                }
            }
        }
        g
    }

    /// `Ψ_iᵀ Ψ_j`: the block Gram when `i = j`, exactly zero otherwise since
    /// distinct blocks have disjoint nonzero rows.
    pub fn cross(&self, i: usize, j: usize) -> Matrix<T> {
        if i == j {
            self.block_gram(i)
        } else {
            let (gi, gj) = (&self.groups[i], &self.groups[j]);
            let mut out = Matrix::zeros(self.d, self.d);
            // rows shared by both groups; empty for a partition
            for &t in gi.iter().filter(|t| gj.binary_search(t).is_ok()) {
                let z = self.state(t);
                for a in 0..self.d {
                    for b in 0..self.d {
                        out[(a, b)] += z[a] * z[b];
                    }
                }
            }
            out
        }
    }

    /// Materializes `Ψ_j` as a dense `T × d` matrix (tests and small fixtures).
    pub fn dense_block(&self, j: usize) -> Matrix<T> {
        let mut out = Matrix::zeros(self.t, self.d);
        for &t in &self.groups[j] {
            for (c, &z) in self.state(t).iter().enumerate() {
                out[(t, c)] = z;
            }
        }
        out
    }
}

/// `ψ(z, a) = e_a ⊗ z ∈ ℝ^{M·d}`.
pub fn feature_map<T: Scalar>(z: &LatentState<T>, a: usize, m: usize) -> Result<Vec<T>> {
    if a >= m {
        return Err(Error::IndexOutOfRange { index: a, bound: m });
    }
    let d = z.dim();
    let mut psi = vec![T::zero(); m * d];
    psi[a * d..(a + 1) * d].copy_from_slice(z.as_slice());
    Ok(psi)
}

/// Groups rows by action: `I_j = {t : a_t = j}` in increasing `t`.
pub fn build_block_design<T: Scalar>(data: &Dataset<T>) -> BlockDesign<T> {
    let (m, d) = (data.m(), data.d());
    let mut groups = vec![Vec::new(); m];
    let mut states = Vec::with_capacity(data.len() * d);
    for (t, s) in data.samples().iter().enumerate() {
        groups[s.a].push(t);
        states.extend_from_slice(s.z.as_slice());
    }
    BlockDesign {
        t: data.len(),
        m,
        d,
        states,
        groups,
    }
}

/// Noiseless mean reward `⟨W_a, z⟩`.
pub fn predict_reward<T: Scalar>(w: &ParamMatrix<T>, z: &LatentState<T>, a: usize) -> Result<T> {
    if a >= w.m() {
        return Err(Error::IndexOutOfRange { index: a, bound: w.m() });
    }
    if z.dim() != w.d() {
        return Err(Error::DimensionMismatch {
            expected: w.d(),
            found: z.dim(),
        });
    }
    Ok(dot(w.row(a), z.as_slice()))
}

pub fn read_json<D: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<D> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<S: Serialize + ?Sized>(value: &S, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::from(e).at(path))
}


#[cfg(test)]
mod tests {
    use super::fixtures::d1;
    use super::*;

    #[test]
    fn feature_map_examples() {
        let z = LatentState(vec![1.0, 2.0]);
        assert_eq!(feature_map(&z, 0, 2).unwrap(), vec![1.0, 2.0, 0.0, 0.0]);
        let zero = LatentState(vec![0.0, 0.0]);
        assert_eq!(feature_map(&zero, 1, 2).unwrap(), vec![0.0; 4]);
        let s = LatentState(vec![3.0]);
        assert_eq!(feature_map(&s, 2, 3).unwrap(), vec![0.0, 0.0, 3.0]);
        assert!(matches!(
            feature_map(&s, 3, 3),
            Err(Error::IndexOutOfRange { index: 3, bound: 3 })
        ));
    }

    #[test]
    fn block_design_grouping() {
        let design = build_block_design(&d1());
        assert_eq!(design.rows_of(0), &[0, 1]);
        assert_eq!(design.rows_of(1), &[2]);
        assert_eq!(design.rows_of(2), &[3]);
        assert_eq!(design.counts(), vec![2, 1, 1]);

        let data = Dataset::<f64>::from_columns(2, 1, vec![vec![1.0]; 2], &[1, 1], &[0.0, 0.0]).unwrap();
        let design = build_block_design(&data);
        assert!(design.rows_of(0).is_empty());
        assert_eq!(design.count(0), 0);

        let actions: Vec<usize> = (0..6).map(|t| t % 3).collect();
        let data = Dataset::<f64>::from_columns(3, 1, vec![vec![1.0]; 6], &actions, &[0.0; 6]).unwrap();
        assert_eq!(build_block_design(&data).counts(), vec![2, 2, 2]);
    }

    #[test]
    fn predict_reward_examples() {
        let w = ParamMatrix::from_rows(vec![vec![2.0, -1.0], vec![0.0, 0.0]]).unwrap();
        let z = LatentState(vec![1.0, 1.0]);
        assert_eq!(predict_reward(&w, &z, 0).unwrap(), 1.0);
        assert_eq!(predict_reward(&w, &LatentState(vec![3.0, -7.0]), 1).unwrap(), 0.0);
        assert!(matches!(
            predict_reward(&w, &LatentState(vec![1.0]), 0),
            Err(Error::DimensionMismatch { .. })
        ));

        let w1 = ParamMatrix::from_rows(vec![vec![2.0], vec![0.0], vec![0.0]]).unwrap();
        for s in d1().samples() {
            assert_eq!(predict_reward(&w1, &s.z, s.a).unwrap(), s.r);
        }
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::<f64>::new(2, 1, vec![]).is_err());
        let bad_action = Dataset::<f64>::from_columns(2, 1, vec![vec![1.0]], &[2], &[0.0]);
        assert!(matches!(bad_action, Err(Error::IndexOutOfRange { .. })));
        let bad_dim = Dataset::<f64>::from_columns(2, 2, vec![vec![1.0]], &[0], &[0.0]);
        assert!(matches!(bad_dim, Err(Error::DimensionMismatch { .. })));
        let nan = Dataset::<f64>::from_columns(2, 1, vec![vec![1.0]], &[0], &[f64::NAN]);
        assert!(nan.is_err());
    }

    #[test]
    fn dataset_json_schema() {
        let text = serde_json::to_string(&d1()).unwrap();
        assert!(text.starts_with(r#"{"m":3,"d":1,"samples":[{"z":[1.0],"a":0,"r":2.0}"#));
        let back: Dataset<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d1());
        let invalid = r#"{"m":1,"d":1,"samples":[{"z":[1.0],"a":4,"r":0.0}]}"#;
        assert!(serde_json::from_str::<Dataset<f64>>(invalid).is_err());
    }

    #[test]
    fn param_matrix_json_and_support() {
        let w = ParamMatrix::from_rows(vec![vec![0.0, 0.0], vec![1.0, -1.0], vec![0.0, 0.5]]).unwrap();
        let text = serde_json::to_string(&w).unwrap();
        assert_eq!(text, r#"{"rows":[[0.0,0.0],[1.0,-1.0],[0.0,0.5]]}"#);
        assert_eq!(serde_json::from_str::<ParamMatrix<f64>>(&text).unwrap(), w);
        assert_eq!(w.support().indices(), &[1, 2]);
        assert_eq!(w.vec(), &[0.0, 0.0, 1.0, -1.0, 0.0, 0.5]);
        assert!(serde_json::from_str::<ParamMatrix<f64>>(r#"{"rows":[[1.0],[1.0,2.0]]}"#).is_err());
    }

    #[test]
    fn support_set_validation() {
        assert!(SupportSet::new(vec![0, 0], 3).is_err());
        assert!(SupportSet::new(vec![3], 3).is_err());
        let s = SupportSet::new(vec![2, 0], 3).unwrap();
        let t = SupportSet::new(vec![0, 1], 3).unwrap();
        assert!(s.same_set(&SupportSet::new(vec![0, 2], 3).unwrap()));
        assert_eq!(s.symmetric_difference(&t), 2);
    }

    #[test]
    fn cross_blocks_vanish_off_diagonal() {
        let design = build_block_design(&d1());
        let c = design.cross(0, 1);
        assert_eq!(c.as_slice(), &[0.0]);
        assert_eq!(design.cross(0, 0).as_slice(), &[2.0]);
    }
}
