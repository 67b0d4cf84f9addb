//! Small dense linear algebra: row-major matrices, pivoted Householder QR
//! least squares, one-sided Jacobi SVD, cyclic Jacobi symmetric eigenvalues
//! and Cholesky solves. Sizes here are at most a few dozen columns, so the
//! routines favour accuracy and clarity over blocking.

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows).map(|i| crate::scalar::dot(self.row(i), v)).collect()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Symmetric up to `rel_tol` times the largest entry.
    pub fn is_symmetric(&self, rel_tol: T) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Outcome of a pivoted QR least-squares solve.
#[derive(Debug, Clone)]
pub struct QrSolution<T> {
    pub x: Vec<T>,
    pub rank: usize,
}

/// Relative threshold on `|R_ii| / |R_00|` used for numerical rank.
pub fn rank_tolerance<T: Scalar>(rows: usize, cols: usize) -> T {
    T::epsilon() * T::lit(rows.max(cols).max(1) as f64) * T::lit(10.0)
}

/// Solves `min ‖A x − b‖₂` with Householder QR and column pivoting.
///
/// Returns `Err(rank)` when the numerical rank is below `A.cols()`.
pub fn qr_least_squares<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<QrSolution<T>, usize> {
    let (n, p) = (a.rows(), a.cols());
    assert_eq!(b.len(), n, "rhs length mismatch");
    if p == 0 {
        return Ok(QrSolution { x: Vec::new(), rank: 0 });
    }
    if n < p {
        return Err(qr_rank(a));
    }
    let mut r = a.clone();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut col_norms: Vec<T> = (0..p).map(|j| (0..n).map(|i| r[(i, j)] * r[(i, j)]).sum()).collect();

    for k in 0..p {
        // pivot: remaining column of largest norm
        let (piv, _) = col_norms
            .iter()
            .enumerate()
            .skip(k)
            .fold((k, -T::one()), |best, (j, &v)| if v > best.1 { (j, v) } else { best });
        if piv != k {
            for i in 0..n {
                let tmp = r[(i, k)];
                r[(i, k)] = r[(i, piv)];
                r[(i, piv)] = tmp;
            }
            col_norms.swap(k, piv);
            perm.swap(k, piv);
        }

        let alpha_sq: T = (k..n).map(|i| r[(i, k)] * r[(i, k)]).sum();
        let alpha = alpha_sq.sqrt();
        if alpha > T::zero() {
            let sign = if r[(k, k)] >= T::zero() { T::one() } else { -T::one() };
            let v0 = r[(k, k)] + sign * alpha;
            let mut v: Vec<T> = (k..n).map(|i| r[(i, k)]).collect();
            v[0] = v0;
            let vnorm_sq: T = v.iter().map(|&x| x * x).sum();
            if vnorm_sq > T::zero() {
                let two = T::lit(2.0);
                for j in k..p {
                    let s: T = (k..n).map(|i| v[i - k] * r[(i, j)]).sum();
                    let f = two * s / vnorm_sq;
                    for i in k..n {
                        r[(i, j)] -= f * v[i - k];
                    }
                }
                let s: T = (k..n).map(|i| v[i - k] * rhs[i]).sum();
                let f = two * s / vnorm_sq;
                for i in k..n {
                    rhs[i] -= f * v[i - k];
                }
            }
        }
        for j in (k + 1)..p {
            col_norms[j] = ((k + 1)..n).map(|i| r[(i, j)] * r[(i, j)]).sum();
        }
    }

    let tol = rank_tolerance::<T>(n, p) * r[(0, 0)].abs();
    let rank = (0..p).take_while(|&i| r[(i, i)].abs() > tol).count();
    if rank < p || r[(0, 0)] == T::zero() {
        return Err(rank);
    }

    let mut y = vec![T::zero(); p];
    for i in (0..p).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..p {
            s -= r[(i, j)] * y[j];
        }
        y[i] = s / r[(i, i)];
    }
    let mut x = vec![T::zero(); p];
    for (k, &col) in perm.iter().enumerate() {
        x[col] = y[k];
    }
    Ok(QrSolution { x, rank })
}

fn qr_rank<T: Scalar>(a: &Matrix<T>) -> usize {
    let s = singular_values(a);
    let top = s.first().copied().unwrap_or_else(T::zero);
    let tol = rank_tolerance::<T>(a.rows(), a.cols()) * top;
    s.iter().filter(|&&x| x > tol).count()
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`; singular values
/// sorted in decreasing order. `U` is `rows × r`, `V` is `cols × r` with
/// `r = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd<T: Scalar>(a: &Matrix<T>) -> Svd<T> {
    if a.rows() < a.cols() {
        let t = svd(&a.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let (n, p) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = Matrix::<T>::identity(p);
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for r in 0..n {
                    let (x, y) = (w[(r, i)], w[(r, j)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for r in 0..n {
                    let (x, y) = (w[(r, i)], w[(r, j)]);
                    w[(r, i)] = c * x - s * y;
                    w[(r, j)] = s * x + c * y;
                }
                for r in 0..p {
                    let (x, y) = (v[(r, i)], v[(r, j)]);
                    v[(r, i)] = c * x - s * y;
                    v[(r, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = (0..p)
        .map(|j| (0..n).map(|r| w[(r, j)] * w[(r, j)]).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal));

    let mut u = Matrix::zeros(n, p);
    let mut vs = Matrix::zeros(p, p);
    let mut s = Vec::with_capacity(p);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        if sigma > T::zero() {
            for r in 0..n {
                u[(r, k)] = w[(r, j)] / sigma;
            }
        }
        for r in 0..p {
            vs[(r, k)] = v[(r, j)];
        }
    }
    Svd { u, s, v: vs }
}

pub fn singular_values<T: Scalar>(a: &Matrix<T>) -> Vec<T> {
    svd(a).s
}

/// Spectral norm `‖A‖₂→₂`; zero for empty matrices.
pub fn operator_norm<T: Scalar>(a: &Matrix<T>) -> T {
    if a.rows() == 0 || a.cols() == 0 {
        return T::zero();
    }
    singular_values(a).first().copied().unwrap_or_else(T::zero)
}

/// Minimum-norm least-squares solution via the SVD pseudo-inverse.
pub fn min_norm_least_squares<T: Scalar>(a: &Matrix<T>, b: &[T]) -> QrSolution<T> {
    assert_eq!(a.rows(), b.len(), "rhs length mismatch");
    let p = a.cols();
    if p == 0 || a.rows() == 0 {
        return QrSolution {
            x: vec![T::zero(); p],
            rank: 0,
        };
    }
    let Svd { u, s, v } = svd(a);
    let top = s.first().copied().unwrap_or_else(T::zero);
    let tol = rank_tolerance::<T>(a.rows(), a.cols()) * top;
    let mut x = vec![T::zero(); p];
    let mut rank = 0;
    for (k, &sigma) in s.iter().enumerate() {
        if sigma <= tol || sigma == T::zero() {
            continue;
        }
        rank += 1;
        let coef: T = (0..a.rows()).map(|r| u[(r, k)] * b[r]).sum::<T>() / sigma;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += coef * v[(i, k)];
        }
    }
    QrSolution { x, rank }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// The caller is responsible for symmetry.
pub fn symmetric_eigenvalues<T: Scalar>(a: &Matrix<T>) -> Vec<T> {
    assert!(a.is_square(), "eigenvalues need a square matrix");
    let n = a.rows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: T = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off == T::zero() || off <= T::epsilon() * T::epsilon() * diag {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (theta.abs() + (T::one() + theta * theta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    eig
}

/// Lower Cholesky factor of a symmetric positive definite matrix, or `None`
/// when a pivot is not strictly positive.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the lower Cholesky factor.
pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let v = l[(i, k)] * y[k];
            y[i] -= v;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = l[(k, i)] * y[k];
            y[i] -= v;
        }
        y[i] /= l[(i, i)];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample() -> Matrix<f64> {
        Matrix::from_rows(&[
            vec![2.0, -1.0, 0.5],
            vec![0.3, 4.0, 1.0],
            vec![-1.5, 0.2, 3.0],
            vec![1.0, 1.0, 1.0],
        ])
    }

    #[test]
    fn qr_solves_consistent_system_exactly() {
        let a = sample();
        let x_true = [1.0, -2.0, 0.5];
        let b = a.matvec(&x_true);
        let sol = qr_least_squares(&a, &b).unwrap();
        for (x, t) in sol.x.iter().zip(x_true) {
            assert_relative_eq!(*x, t, epsilon = 1e-12);
        }
        assert_eq!(sol.rank, 3);
    }

    #[test]
    fn qr_reports_rank_deficiency() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        assert_eq!(qr_least_squares(&a, &[1.0, 2.0, 3.0]).unwrap_err(), 1);
        let wide = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]);
        assert_eq!(qr_least_squares(&wide, &[1.0]).unwrap_err(), 1);
    }

    #[test]
    fn qr_normal_equations_hold_for_overdetermined_system() {
        let a = sample();
        let b = [1.0, 2.0, -1.0, 0.25];
        let x = qr_least_squares(&a, &b).unwrap().x;
        let fit = a.matvec(&x);
        let res: Vec<f64> = b.iter().zip(&fit).map(|(b, f)| b - f).collect();
        let grad = a.transpose().matvec(&res);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn svd_reconstructs_and_orders() {
        for a in [sample(), sample().transpose()] {
            let Svd { u, s, v } = svd(&a);
            assert!(s.windows(2).all(|w| w[0] >= w[1]));
            let mut us = u.clone();
            for i in 0..us.rows() {
                for k in 0..s.len() {
                    us[(i, k)] *= s[k];
                }
            }
            let rec = us.matmul(&v.transpose());
            for i in 0..a.rows() {
                for j in 0..a.cols() {
                    assert_relative_eq!(rec[(i, j)], a[(i, j)], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn min_norm_matches_pinv_on_rank_one() {
        // A = [1 1], b = 2: min-norm solution (1, 1)
        let a = Matrix::from_rows(&[vec![1.0, 1.0]]);
        let sol = min_norm_least_squares(&a, &[2.0]);
        assert_eq!(sol.rank, 1);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(sol.x[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn jacobi_eigenvalues_of_known_matrix() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = symmetric_eigenvalues(&a);
        assert_relative_eq!(e[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[1], 3.0, epsilon = 1e-14);
        let i3 = Matrix::<f64>::identity(3);
        assert_eq!(symmetric_eigenvalues(&i3), vec![1.0; 3]);
    }

    #[test]
    fn cholesky_solve_round_trip() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        let x = cholesky_solve(&l, &[1.0, 2.0]);
        let back = a.matvec(&x);
        assert_relative_eq!(back[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(back[1], 2.0, epsilon = 1e-14);
        let singular = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(cholesky(&singular).is_none());
    }

    #[test]
    fn operator_norm_of_diagonal() {
        let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -5.0]]);
        assert_relative_eq!(operator_norm(&a), 5.0, epsilon = 1e-14);
        assert_eq!(operator_norm(&Matrix::<f64>::zeros(0, 3)), 0.0);
    }

    #[test]
    fn single_precision_paths_work() {
        let a: Matrix<f32> = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let b = a.matvec(&[1.0, 2.0]);
        let x = qr_least_squares(&a, &b).unwrap().x;
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 2.0).abs() < 1e-5);
    }
}
