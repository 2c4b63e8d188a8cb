//! Small dense linear algebra over `f64` and exact rationals.
//!
//! Everything in this crate works with matrices of a few dozen rows at most,
//! so the implementations favor determinism and accuracy over asymptotics:
//! LU with partial pivoting for determinants and solves, one-sided Jacobi for
//! singular values (high relative accuracy on small matrices), and modified
//! Gram-Schmidt with re-orthogonalization for bases. Exact determinants and
//! ranks run over `BigRational` with no tolerance at all.

use alloc::{vec, vec::Vec};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from a row-major nested slice; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        Mat::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|t| self[(i, t)] * other[(t, j)]).sum()
        })
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| c * x).collect() }
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Mat { rows: self.rows + other.rows, cols: self.cols, data }
    }

    /// Side-by-side concatenation.
    pub fn hstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        Mat::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                other[(i, j - self.cols)]
            }
        })
    }

    /// New matrix from a subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        Mat::from_fn(idx.len(), self.cols, |i, j| self[(idx[i], j)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| if x.abs() > m { x.abs() } else { m })
    }
}

impl core::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Determinant by LU with partial pivoting.
pub fn lu_det(a: &Mat) -> f64 {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut m = a.clone();
    let mut det = 1.0;
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if m[(i, k)].abs() > m[(p, k)].abs() {
                p = i;
            }
        }
        if m[(p, k)] == 0.0 {
            return 0.0;
        }
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            det = -det;
        }
        det *= m[(k, k)];
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            for j in k..n {
                m[(i, j)] -= f * m[(k, j)];
            }
        }
    }
    det
}

/// Solves `a x = b`; `None` when the pivot collapses.
pub fn lu_solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.rows, a.cols);
    assert_eq!(b.len(), a.rows);
    let n = a.rows;
    let mut m = a.clone();
    let mut x: Vec<f64> = b.to_vec();
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if m[(i, k)].abs() > m[(p, k)].abs() {
                p = i;
            }
        }
        if m[(p, k)].abs() < 1e-300 {
            return None;
        }
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            x.swap(k, p);
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            for j in k..n {
                m[(i, j)] -= f * m[(k, j)];
            }
            x[i] -= f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Some(x)
}

/// Thin SVD `a = u diag(sigma) v^T` of a matrix with `rows >= cols`,
/// singular values sorted descending. Columns of `u` belonging to zero
/// singular values are zero.
pub struct Svd {
    pub u: Mat,
    pub sigma: Vec<f64>,
    pub v: Mat,
}

/// One-sided Jacobi SVD for `rows >= cols`.
pub fn svd_tall(a: &Mat) -> Svd {
    assert!(a.rows >= a.cols, "svd_tall requires rows >= cols");
    let n = a.cols;
    let mut b = a.clone();
    let mut v = Mat::identity(n);
    for _sweep in 0..64 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for k in 0..b.rows {
                    app += b[(k, i)] * b[(k, i)];
                    aqq += b[(k, j)] * b[(k, j)];
                    apq += b[(k, i)] * b[(k, j)];
                }
                if apq.abs() <= 1e-15 * libm::sqrt(app * aqq) + 1e-300 {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + libm::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + libm::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for k in 0..b.rows {
                    let (x, y) = (b[(k, i)], b[(k, j)]);
                    b[(k, i)] = c * x - s * y;
                    b[(k, j)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (v[(k, i)], v[(k, j)]);
                    v[(k, i)] = c * x - s * y;
                    v[(k, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| norm(&b.col(j))).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = Mat::zeros(a.rows, n);
    let mut vv = Mat::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        if s > 0.0 {
            for k in 0..a.rows {
                u[(k, dst)] = b[(k, src)] / s;
            }
        }
        for k in 0..n {
            vv[(k, dst)] = v[(k, src)];
        }
    }
    Svd { u, sigma, v: vv }
}

/// Singular values of any shape, descending, length `min(rows, cols)`.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    if a.rows >= a.cols {
        svd_tall(a).sigma
    } else {
        svd_tall(&a.transpose()).sigma
    }
}

/// `(sigma_min, sigma_max)` over the `min(rows, cols)` singular values.
pub fn sigma_extremes(a: &Mat) -> (f64, f64) {
    let s = singular_values(a);
    (*s.last().unwrap(), s[0])
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Vectors whose
/// residual drops below `1e-10` of their original norm are dropped.
pub fn mgs_orthonormalize(candidates: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for cand in candidates {
        let orig = norm(cand);
        if orig == 0.0 {
            continue;
        }
        let mut v = cand.clone();
        for _pass in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let n = norm(&v);
        if n > 1e-10 * orig {
            for x in v.iter_mut() {
                *x /= n;
            }
            basis.push(v);
        }
    }
    basis
}

/// Flips signs so the first coordinate exceeding `1e-9` in absolute value is
/// positive. Makes bases reproducible across platforms.
pub fn canonical_sign(v: &mut [f64]) {
    for &x in v.iter() {
        if x.abs() > 1e-9 {
            if x < 0.0 {
                for y in v.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}

/// Orthonormal vectors spanning the complement of `span(basis)` in `R^dim`,
/// built by Gram-Schmidt over the standard basis.
pub fn orthonormal_complement(basis: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let mut cands: Vec<Vec<f64>> = basis.to_vec();
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        cands.push(e);
    }
    let all = mgs_orthonormalize(&cands);
    let mut out: Vec<Vec<f64>> = all.into_iter().skip(basis.len()).collect();
    for v in out.iter_mut() {
        canonical_sign(v);
    }
    out
}

/// Orthonormal basis of the null space of `a`, via a singular-value
/// factorization followed by Gram-Schmidt cleanup and a sign convention.
/// `rel_tol` is relative to the largest singular value.
pub fn null_space_basis(a: &Mat, rel_tol: f64) -> Vec<Vec<f64>> {
    if a.rows >= a.cols {
        let s = svd_tall(a);
        let smax = s.sigma[0];
        let cands: Vec<Vec<f64>> = (0..a.cols)
            .filter(|&j| s.sigma[j] <= rel_tol * smax)
            .map(|j| s.v.col(j))
            .collect();
        let mut out = mgs_orthonormalize(&cands);
        for v in out.iter_mut() {
            canonical_sign(v);
        }
        out
    } else {
        // Wide: null(a) is the complement of the range of a^T.
        let s = svd_tall(&a.transpose());
        let smax = s.sigma[0];
        let range: Vec<Vec<f64>> = (0..s.sigma.len())
            .filter(|&j| s.sigma[j] > rel_tol * smax)
            .map(|j| s.u.col(j))
            .collect();
        orthonormal_complement(&range, a.cols)
    }
}

/// Componentwise bounds on `x` implied by `a x` lying in `[lo, hi]` per
/// coordinate, using the pseudo-inverse of a full-column-rank `a`.
pub fn preimage_box(a: &Mat, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    assert!(a.rows >= a.cols);
    let s = svd_tall(a);
    let m = a.cols;
    // pinv = v diag(1/sigma) u^T
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut blo = 0.0;
        let mut bhi = 0.0;
        for j in 0..a.rows {
            let mut p = 0.0;
            for t in 0..m {
                if s.sigma[t] > 1e-12 * s.sigma[0] {
                    p += s.v[(i, t)] * s.u[(j, t)] / s.sigma[t];
                }
            }
            let (a0, a1) = (p * lo, p * hi);
            blo += if a0 < a1 { a0 } else { a1 };
            bhi += if a0 < a1 { a1 } else { a0 };
        }
        out.push((blo, bhi));
    }
    out
}

// ---------------------------------------------------------------------------
// Exact rational arithmetic
// ---------------------------------------------------------------------------

pub type Rat = BigRational;

/// Exact conversion; every finite `f64` is a binary rational.
pub fn rat_from_f64(x: f64) -> Option<Rat> {
    BigRational::from_float(x)
}

pub fn rat_to_f64(x: &Rat) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn rat_int(v: i64) -> Rat {
    BigRational::from_integer(BigInt::from(v))
}

/// Exact determinant by fraction elimination with a nonzero pivot search.
pub fn rat_det(m: &[Vec<Rat>]) -> Rat {
    let n = m.len();
    assert!(m.iter().all(|r| r.len() == n));
    let mut a: Vec<Vec<Rat>> = m.to_vec();
    let mut det = BigRational::from_integer(BigInt::from(1));
    for k in 0..n {
        let Some(p) = (k..n).find(|&i| !a[i][k].is_zero()) else {
            return BigRational::zero();
        };
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det *= a[k][k].clone();
        for i in k + 1..n {
            if a[i][k].is_zero() {
                continue;
            }
            let f = &a[i][k] / &a[k][k];
            for j in k..n {
                let sub = &f * &a[k][j];
                a[i][j] -= sub;
            }
        }
    }
    det
}

/// Exact rank by Gaussian elimination over the rationals.
pub fn rat_rank(m: &[Vec<Rat>]) -> usize {
    if m.is_empty() {
        return 0;
    }
    let rows = m.len();
    let cols = m[0].len();
    let mut a: Vec<Vec<Rat>> = m.to_vec();
    let mut rank = 0;
    let mut row = 0;
    for col in 0..cols {
        let Some(p) = (row..rows).find(|&i| !a[i][col].is_zero()) else {
            continue;
        };
        a.swap(p, row);
        for i in row + 1..rows {
            if a[i][col].is_zero() {
                continue;
            }
            let f = &a[i][col] / &a[row][col];
            for j in col..cols {
                let sub = &f * &a[row][j];
                a[i][j] -= sub;
            }
        }
        rank += 1;
        row += 1;
        if row == rows {
            break;
        }
    }
    rank
}

/// Sign of a rational: -1, 0, or 1.
pub fn rat_sign(x: &Rat) -> i32 {
    if x.is_zero() {
        0
    } else if x.is_positive() {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_and_solve() {
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        assert!((lu_det(&a) - 5.0).abs() < 1e-12);
        let x = lu_solve(&a, &[3.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_reconstructs() {
        let a = Mat::from_rows(&[
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![5.0, 6.0],
        ]);
        let s = svd_tall(&a);
        // check a = u S v^T entrywise
        for i in 0..3 {
            for j in 0..2 {
                let mut x = 0.0;
                for t in 0..2 {
                    x += s.u[(i, t)] * s.sigma[t] * s.v[(j, t)];
                }
                assert!((x - a[(i, j)]).abs() < 1e-10, "({i},{j})");
            }
        }
        assert!(s.sigma[0] >= s.sigma[1]);
    }

    #[test]
    fn null_space_of_wide() {
        // x + y + z = 0, y + 2z = 0  ->  span (1, -2, 1)/sqrt(6)
        let a = Mat::from_rows(&[vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]]);
        let ns = null_space_basis(&a, 1e-12);
        assert_eq!(ns.len(), 1);
        let v = &ns[0];
        let s6 = libm::sqrt(6.0);
        assert!((v[0] - 1.0 / s6).abs() < 1e-12);
        assert!((v[1] + 2.0 / s6).abs() < 1e-12);
        assert!((v[2] - 1.0 / s6).abs() < 1e-12);
    }

    #[test]
    fn rational_det_exact() {
        let m = vec![
            vec![rat_int(2), rat_int(3)],
            vec![rat_int(4), rat_int(9)],
        ];
        assert_eq!(rat_det(&m), rat_int(6));
        let sing = vec![
            vec![rat_int(1), rat_int(2)],
            vec![rat_int(2), rat_int(4)],
        ];
        assert!(rat_det(&sing).is_zero());
        assert_eq!(rat_rank(&sing), 1);
    }

    #[test]
    fn preimage_box_contains_region() {
        // a = (1; 1): x in [0,1] from both rows -> box [0,1]
        let a = Mat::from_rows(&[vec![1.0], vec![1.0]]);
        let b = preimage_box(&a, 0.0, 1.0);
        assert!(b[0].0 <= 0.0 + 1e-12 && b[0].1 >= 1.0 - 1e-12);
    }
}
