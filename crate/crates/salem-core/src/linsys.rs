//! Matrix systems `A_j = (I | B_j)`, the structural integers `r` and `n'`,
//! non-degeneracy verification, and the constraint subspace `S`.
//!
//! A system of `k` matrices `B_j` (each `n x (m-n)`) encodes the point family
//! `{x + B_j y}`. The derived `n x m` matrices `A_j = (I | B_j)` act on the
//! combined variable `z = (x, y)`. Systems built directly from general `A_j`
//! (not of translation form) are also supported; operations that need the
//! translation structure report [`Error::Unsupported`] for them.
//!
//! Non-degeneracy follows the submatrix criterion: for every index set `J`
//! of size `k - r`, every `j` outside `J`, and every row subset of `A_j` of
//! size `n - n'`, the assembled `m x m` matrix must be non-singular. The
//! float path classifies singularity by the smallest relative singular value;
//! systems with rational entries and `m <= 12` are decided exactly instead.

use alloc::{format, string::String, vec, vec::Vec};

use crate::linalg::{self, Mat, Rat};
use crate::{Error, Result};

/// Default relative singular-value threshold below which a matrix counts as
/// singular.
pub const DEFAULT_SINGULARITY_TOL: f64 = 1e-9;

/// Default cap on the number of `m x m` matrices the non-degeneracy
/// enumeration may test.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Largest `m` for which the exact rational determinant path is used.
pub const EXACT_PATH_MAX_DIM: usize = 12;

/// Computes the unique positive `r` with `n(r-1) < nk - m <= nr`, and
/// `n' = nk - m - n(r-1)`.
pub fn derive_r_nprime(n: usize, k: usize, m: usize) -> Result<(usize, usize)> {
    if n < 1 || k < 3 {
        return Err(Error::InvalidArgument(format!("need n >= 1 and k >= 3, got n={n}, k={k}")));
    }
    if m < n || m >= n * k {
        return Err(Error::InvalidArgument(format!(
            "need n <= m < nk for a solvable defining inequality, got n={n}, k={k}, m={m}"
        )));
    }
    let d = n * k - m; // > 0
    let r = d.div_ceil(n);
    let nprime = d - n * (r - 1);
    debug_assert!(n * (r - 1) < d && d <= n * r);
    debug_assert!(0 < nprime && nprime <= n);
    Ok((r, nprime))
}

/// A validated system of configuration matrices.
#[derive(Debug, Clone)]
pub struct MatrixSystem {
    n: usize,
    k: usize,
    m: usize,
    a: Vec<Mat>,
    b: Option<Vec<Mat>>,
    exact_a: Option<Vec<Vec<Vec<Rat>>>>,
    r: usize,
    nprime: usize,
}

/// Promotes an `f64` matrix to exact rationals when every entry is a
/// moderate-denominator rational, so factory-built systems get exact
/// verdicts. Entries like `cos(0.7)` have full-width mantissas and stay on
/// the float path.
fn exact_mirror(mats: &[Mat]) -> Option<Vec<Vec<Vec<Rat>>>> {
    let mut out = Vec::with_capacity(mats.len());
    for m in mats {
        let mut rows = Vec::with_capacity(m.rows());
        for i in 0..m.rows() {
            let mut row = Vec::with_capacity(m.cols());
            for j in 0..m.cols() {
                let r = linalg::rat_from_f64(m[(i, j)])?;
                if r.denom().bits() > 20 || r.numer().bits() > 40 {
                    return None;
                }
                row.push(r);
            }
            rows.push(row);
        }
        out.push(rows);
    }
    Some(out)
}

fn rational_to_mat(m: &[Vec<Rat>]) -> Mat {
    Mat::from_fn(m.len(), m[0].len(), |i, j| linalg::rat_to_f64(&m[i][j]))
}

impl MatrixSystem {
    /// Builds the translation-invariant system `A_j = (I | B_j)` from the
    /// `k` matrices `B_j`, each `n x (m-n)`.
    pub fn from_b(n: usize, k: usize, m: usize, b: Vec<Mat>) -> Result<Self> {
        let (r, nprime) = derive_r_nprime(n, k, m)?;
        if b.len() != k {
            return Err(Error::ShapeMismatch(format!("expected {k} matrices, got {}", b.len())));
        }
        for (j, bj) in b.iter().enumerate() {
            if bj.rows() != n || bj.cols() != m - n {
                return Err(Error::ShapeMismatch(format!(
                    "B[{j}] is {}x{}, expected {}x{}",
                    bj.rows(),
                    bj.cols(),
                    n,
                    m - n
                )));
            }
            if !bj.is_finite() {
                return Err(Error::NonFinite(format!("B[{j}] contains NaN or infinity")));
            }
        }
        let a: Vec<Mat> = b
            .iter()
            .map(|bj| {
                Mat::from_fn(n, m, |i, j| {
                    if j < n {
                        if i == j {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        bj[(i, j - n)]
                    }
                })
            })
            .collect();
        let exact_a = exact_mirror(&a);
        Ok(MatrixSystem { n, k, m, a, b: Some(b), exact_a, r, nprime })
    }

    /// Builds the translation-invariant system from exact rational `B_j`.
    pub fn from_b_rational(n: usize, k: usize, m: usize, b: &[Vec<Vec<Rat>>]) -> Result<Self> {
        if b.len() != k {
            return Err(Error::ShapeMismatch(format!("expected {k} matrices, got {}", b.len())));
        }
        for (j, bj) in b.iter().enumerate() {
            if bj.len() != n || bj.iter().any(|row| row.len() != m - n) {
                return Err(Error::ShapeMismatch(format!("B[{j}] shape mismatch")));
            }
        }
        let mats: Vec<Mat> = b.iter().map(|bj| rational_to_mat(bj)).collect();
        let mut sys = Self::from_b(n, k, m, mats)?;
        let one = linalg::rat_int(1);
        let zero = linalg::rat_int(0);
        let exact: Vec<Vec<Vec<Rat>>> = b
            .iter()
            .map(|bj| {
                (0..n)
                    .map(|i| {
                        let mut row: Vec<Rat> =
                            (0..n).map(|j| if i == j { one.clone() } else { zero.clone() }).collect();
                        row.extend(bj[i].iter().cloned());
                        row
                    })
                    .collect()
            })
            .collect();
        sys.exact_a = Some(exact);
        Ok(sys)
    }

    /// Builds a system from general `n x m` matrices `A_j`, for inputs that
    /// are not of translation form.
    pub fn from_a(n: usize, k: usize, m: usize, a: Vec<Mat>) -> Result<Self> {
        let (r, nprime) = derive_r_nprime(n, k, m)?;
        if a.len() != k {
            return Err(Error::ShapeMismatch(format!("expected {k} matrices, got {}", a.len())));
        }
        for (j, aj) in a.iter().enumerate() {
            if aj.rows() != n || aj.cols() != m {
                return Err(Error::ShapeMismatch(format!(
                    "A[{j}] is {}x{}, expected {n}x{m}",
                    aj.rows(),
                    aj.cols()
                )));
            }
            if !aj.is_finite() {
                return Err(Error::NonFinite(format!("A[{j}] contains NaN or infinity")));
            }
        }
        // Recover B when the first n columns form the identity.
        let is_translation = a.iter().all(|aj| {
            (0..n).all(|i| (0..n).all(|j| aj[(i, j)] == if i == j { 1.0 } else { 0.0 }))
        });
        let b = is_translation.then(|| {
            a.iter().map(|aj| Mat::from_fn(n, m - n, |i, j| aj[(i, j + n)])).collect()
        });
        let exact_a = exact_mirror(&a);
        Ok(MatrixSystem { n, k, m, a, b, exact_a, r, nprime })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn nprime(&self) -> usize {
        self.nprime
    }

    pub fn a(&self) -> &[Mat] {
        &self.a
    }

    /// The `B_j` blocks; `None` for systems not of translation form.
    pub fn b(&self) -> Option<&[Mat]> {
        self.b.as_deref()
    }

    pub fn is_translation(&self) -> bool {
        self.b.is_some()
    }

    /// Exact rational mirror of the `A_j`, when the entries admit one.
    pub fn exact_a(&self) -> Option<&[Vec<Vec<Rat>>]> {
        self.exact_a.as_deref()
    }

    /// `true` when `n ceil((k+1)/2) <= m < nk`.
    pub fn in_main_regime(&self) -> bool {
        self.m >= self.n * (self.k + 1).div_ceil(2) && self.m < self.n * self.k
    }

    /// The `nk x m` stack of all `A_j`.
    pub fn a_stacked(&self) -> Mat {
        let mut s = self.a[0].clone();
        for aj in &self.a[1..] {
            s = s.vstack(aj);
        }
        s
    }

    fn b_or_unsupported(&self) -> Result<&[Mat]> {
        self.b.as_deref().ok_or_else(|| {
            Error::Unsupported(String::from("operation requires a translation-form system (A_j = (I | B_j))"))
        })
    }

    /// `B_j` of a translation system, or an error.
    pub fn b_blocks(&self) -> Result<&[Mat]> {
        self.b_or_unsupported()
    }
}

/// Outcome of the non-degeneracy enumeration.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NondegeneracyReport {
    pub passed: bool,
    /// `(J, j, row_subset)` attaining the minimum, all 0-based.
    pub worst_case: WorstCase,
    /// Smallest criterion value over all tested matrices: the relative
    /// singular value `sigma_min/sigma_max` on the float path, the exact
    /// `|det|` on the rational path.
    pub min_abs_det: f64,
    /// Threshold compared against `min_abs_det`; `0` on the exact path.
    pub tolerance: f64,
    /// Whether exact rational arithmetic decided the verdict.
    pub exact: bool,
    /// Number of `m x m` matrices tested.
    pub tests: u64,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorstCase {
    pub j_set: Vec<usize>,
    pub extra_index: usize,
    pub row_subset: Vec<usize>,
}

/// Lexicographic combinations of size `t` from `0..n`.
pub(crate) fn combinations(n: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if t > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..t).collect();
    loop {
        out.push(idx.clone());
        // advance
        let mut i = t;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - t {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..t {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn binom(n: usize, t: usize) -> u64 {
    if t > n {
        return 0;
    }
    let mut r: u64 = 1;
    for i in 0..t.min(n - t) {
        r = r * (n - i) as u64 / (i + 1) as u64;
    }
    r
}

/// Assembles the stacked `m x m` test matrix for `(J, j, rows)`: the rows of
/// every `A_i`, `i` in `J`, followed by the selected rows of `A_j`.
fn stack_rows_f64(sys: &MatrixSystem, j_set: &[usize], extra: usize, rows: &[usize]) -> Mat {
    let mut s = Mat::zeros(0, sys.m);
    let mut first = true;
    for &i in j_set {
        s = if first {
            first = false;
            sys.a[i].clone()
        } else {
            s.vstack(&sys.a[i])
        };
    }
    let extra_rows = sys.a[extra].select_rows(rows);
    if first {
        extra_rows
    } else {
        s.vstack(&extra_rows)
    }
}

fn stack_rows_rat(
    exact: &[Vec<Vec<Rat>>],
    j_set: &[usize],
    extra: usize,
    rows: &[usize],
) -> Vec<Vec<Rat>> {
    let mut out = Vec::new();
    for &i in j_set {
        for row in &exact[i] {
            out.push(row.clone());
        }
    }
    for &r in rows {
        out.push(exact[extra][r].clone());
    }
    out
}

/// Tests the submatrix non-degeneracy criterion by full enumeration.
///
/// For every `J` of size `k - r`, every `j` outside `J`, and every subset of
/// `n - n'` rows of `A_j`, the `m x m` stack must be non-singular. The float
/// path classifies a matrix as singular when its smallest singular value is
/// at most `tolerance` times its largest; rational systems with `m <= 12`
/// are decided by exact determinants instead and `tolerance` is ignored.
pub fn check_nondegenerate(sys: &MatrixSystem, tolerance: f64) -> Result<NondegeneracyReport> {
    check_nondegenerate_capped(sys, tolerance, DEFAULT_ENUMERATION_CAP)
}

/// [`check_nondegenerate`] with an explicit enumeration cap.
pub fn check_nondegenerate_capped(
    sys: &MatrixSystem,
    tolerance: f64,
    cap: u64,
) -> Result<NondegeneracyReport> {
    let (n, k, r, nprime) = (sys.n, sys.k, sys.r, sys.nprime);
    let total = binom(k, k - r) * r as u64 * binom(n, n - nprime);
    if total > cap {
        return Err(Error::BudgetExceeded { required: total, cap });
    }
    let exact = sys.exact_a.as_ref().filter(|_| sys.m <= EXACT_PATH_MAX_DIM);
    let j_sets = combinations(k, k - r);
    let row_subsets = combinations(n, n - nprime);
    let mut tests = 0u64;
    let mut min_val = f64::INFINITY;
    let mut min_rat: Option<Rat> = None;
    let mut worst = WorstCase { j_set: Vec::new(), extra_index: 0, row_subset: Vec::new() };
    for j_set in &j_sets {
        for extra in 0..k {
            if j_set.contains(&extra) {
                continue;
            }
            for rows in &row_subsets {
                tests += 1;
                if let Some(ex) = exact {
                    let m = stack_rows_rat(ex, j_set, extra, rows);
                    let d = linalg::rat_det(&m);
                    let abs = if linalg::rat_sign(&d) < 0 { -d } else { d };
                    let better = min_rat.as_ref().is_none_or(|cur| abs < *cur);
                    if better {
                        min_val = linalg::rat_to_f64(&abs);
                        min_rat = Some(abs);
                        worst =
                            WorstCase { j_set: j_set.clone(), extra_index: extra, row_subset: rows.clone() };
                    }
                } else {
                    let m = stack_rows_f64(sys, j_set, extra, rows);
                    let (smin, smax) = linalg::sigma_extremes(&m);
                    let ratio = if smax == 0.0 { 0.0 } else { smin / smax };
                    if ratio < min_val {
                        min_val = ratio;
                        worst =
                            WorstCase { j_set: j_set.clone(), extra_index: extra, row_subset: rows.clone() };
                    }
                }
            }
        }
    }
    let exactness = exact.is_some();
    let tol_used = if exactness { 0.0 } else { tolerance };
    let passed = if exactness {
        min_rat.as_ref().is_some_and(|r| !num_traits::Zero::is_zero(r))
    } else {
        min_val > tol_used
    };
    Ok(NondegeneracyReport {
        passed,
        worst_case: worst,
        min_abs_det: min_val,
        tolerance: tol_used,
        exact: exactness,
        tests,
    })
}

/// The reduced rank criterion for the minimal regime `m = n ceil((k+1)/2)`:
/// for every choice of `m/n` distinct indices, the stacked difference matrix
/// `(B_{i_2}-B_{i_1}; ...; B_{i_{m/n}}-B_{i_1})` must have rank `m - n`.
pub fn check_reduced_nondegenerate(sys: &MatrixSystem, tolerance: f64) -> Result<bool> {
    let (n, k, m) = (sys.n, sys.k, sys.m);
    if m != n * (k + 1).div_ceil(2) || m % n != 0 {
        return Err(Error::InvalidArgument(format!(
            "reduced criterion needs m = n*ceil((k+1)/2) with m/n integral; got n={n}, k={k}, m={m}"
        )));
    }
    let b = sys.b_or_unsupported()?;
    let q = m / n;
    let exact = sys.exact_a.as_ref().filter(|_| m - n <= EXACT_PATH_MAX_DIM);
    for pick in combinations(k, q) {
        let base = pick[0];
        if let Some(ex) = exact {
            // difference of the B-blocks inside the exact A mirror
            let mut rows: Vec<Vec<Rat>> = Vec::new();
            for &i in &pick[1..] {
                for ri in 0..n {
                    let row: Vec<Rat> = (n..m)
                        .map(|c| ex[i][ri][c].clone() - ex[base][ri][c].clone())
                        .collect();
                    rows.push(row);
                }
            }
            if linalg::rat_rank(&rows) != m - n {
                return Ok(false);
            }
        } else {
            let mut stack = Mat::zeros(0, m - n);
            let mut first = true;
            for &i in &pick[1..] {
                let diff = Mat::from_fn(n, m - n, |a, c| b[i][(a, c)] - b[base][(a, c)]);
                stack = if first {
                    first = false;
                    diff
                } else {
                    stack.vstack(&diff)
                };
            }
            let (smin, smax) = linalg::sigma_extremes(&stack);
            if smax == 0.0 || smin / smax <= tolerance {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Orthonormal basis of the constraint subspace
/// `S = { xi in (R^n)^k : sum_j A_j^t xi_j = 0 }`.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubspaceBasis {
    pub ambient: usize,
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

impl SubspaceBasis {
    /// Splits a vector in `R^{nk}` into its `k` blocks of length `n`.
    pub fn block(v: &[f64], n: usize, j: usize) -> &[f64] {
        &v[j * n..(j + 1) * n]
    }

    /// Max residual `|sum_j A_j^t xi_j|` over the basis vectors.
    pub fn residual(&self, sys: &MatrixSystem) -> f64 {
        let p = stacked_transpose(sys);
        self.vectors
            .iter()
            .map(|v| linalg::norm(&p.mul_vec(v)))
            .fold(0.0, f64::max)
    }
}

/// The `m x nk` map `xi -> sum_j A_j^t xi_j`.
pub(crate) fn stacked_transpose(sys: &MatrixSystem) -> Mat {
    let mut p = sys.a[0].transpose();
    for aj in &sys.a[1..] {
        p = p.hstack(&aj.transpose());
    }
    p
}

/// Computes the orthonormal basis of `S`; the stacked map must have full
/// rank `m` (guaranteed by non-degeneracy).
pub fn subspace_s_basis(sys: &MatrixSystem) -> Result<SubspaceBasis> {
    let p = stacked_transpose(sys);
    let nk = sys.n * sys.k;
    let want = nk - sys.m;
    let basis = linalg::null_space_basis(&p, 1e-12);
    if basis.len() != want {
        return Err(Error::RankDeficient(format!(
            "stacked map xi -> sum A_j^t xi_j has null space of dimension {} on a {}-dim domain, expected {}; \
             the A_j do not span rank m = {}",
            basis.len(),
            nk,
            want,
            sys.m
        )));
    }
    Ok(SubspaceBasis { ambient: nk, dim: want, vectors: basis })
}

/// Verifies the chart rank condition for `(J, J')`: with `I` the complement
/// of `J` and `j_r` the last entry of `J`, the `m x m` matrix stacking every
/// `A_i` (`i` in `I`) with the rows of `A_{j_r}` outside `J'` must have full
/// rank. `true` means `(xi_{j_1}, ..., xi_{j_{r-1}}, xi_{j_r}(J'))` projects
/// to a coordinate system on `S`.
pub fn coordinate_chart_check(
    sys: &MatrixSystem,
    j_list: &[usize],
    jprime: &[usize],
    tolerance: f64,
) -> Result<bool> {
    let (n, k, r, nprime) = (sys.n, sys.k, sys.r, sys.nprime);
    if j_list.len() != r {
        return Err(Error::InvalidArgument(format!("J must have r = {r} indices, got {}", j_list.len())));
    }
    if jprime.len() != nprime {
        return Err(Error::InvalidArgument(format!(
            "J' must have n' = {nprime} indices, got {}",
            jprime.len()
        )));
    }
    let mut seen = vec![false; k];
    for &j in j_list {
        if j >= k {
            return Err(Error::InvalidArgument(format!("index {j} out of range 0..{k}")));
        }
        if seen[j] {
            return Err(Error::InvalidArgument(format!("duplicate index {j} in J")));
        }
        seen[j] = true;
    }
    let mut seen_p = vec![false; n];
    for &i in jprime {
        if i >= n {
            return Err(Error::InvalidArgument(format!("coordinate {i} out of range 0..{n}")));
        }
        if seen_p[i] {
            return Err(Error::InvalidArgument(format!("duplicate coordinate {i} in J'")));
        }
        seen_p[i] = true;
    }
    let j_r = *j_list.last().unwrap();
    let complement: Vec<usize> = (0..k).filter(|i| !seen[*i]).collect();
    let kept_rows: Vec<usize> = (0..n).filter(|i| !seen_p[*i]).collect();
    if let Some(ex) = sys.exact_a.as_ref().filter(|_| sys.m <= EXACT_PATH_MAX_DIM) {
        let m = stack_rows_rat(ex, &complement, j_r, &kept_rows);
        Ok(!num_traits::Zero::is_zero(&linalg::rat_det(&m)))
    } else {
        let m = stack_rows_f64(sys, &complement, j_r, &kept_rows);
        let (smin, smax) = linalg::sigma_extremes(&m);
        Ok(smax > 0.0 && smin / smax > tolerance)
    }
}

/// The Jacobian constant `C` with `d sigma = C d(chart)` for the chart of
/// [`coordinate_chart_check`]: the reciprocal of `|det|` of the selected
/// chart coordinates of the orthonormal basis.
pub fn chart_jacobian(
    basis: &SubspaceBasis,
    n: usize,
    j_list: &[usize],
    jprime: &[usize],
) -> Result<f64> {
    let mut coords: Vec<usize> = Vec::new();
    let j_r = *j_list.last().ok_or_else(|| Error::InvalidArgument(String::from("empty J")))?;
    for &j in &j_list[..j_list.len() - 1] {
        coords.extend((0..n).map(|i| j * n + i));
    }
    coords.extend(jprime.iter().map(|&i| j_r * n + i));
    if coords.len() != basis.dim {
        return Err(Error::InvalidArgument(format!(
            "chart selects {} coordinates but S has dimension {}",
            coords.len(),
            basis.dim
        )));
    }
    let t = Mat::from_fn(basis.dim, basis.dim, |i, j| basis.vectors[j][coords[i]]);
    let d = linalg::lu_det(&t).abs();
    if d < 1e-14 {
        return Err(Error::RankDeficient(String::from("chart is degenerate for this subspace")));
    }
    Ok(1.0 / d)
}
