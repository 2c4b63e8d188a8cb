//! Configuration families, brute-force detection of non-trivial
//! configurations in discretized sets, exact positive-root counting, and the
//! Monte Carlo measure of the near-integral translation set.

use alloc::{format, string::String, vec, vec::Vec};
use num_traits::{Signed, Zero};

use crate::linalg::{self, Mat, Rat};
use crate::linsys::MatrixSystem;
use crate::rng::CounterRng;
use crate::{Error, Result};

/// Default candidate-evaluation cap for the configuration search.
pub const DEFAULT_SEARCH_CAP: u64 = 100_000_000;

// ---------------------------------------------------------------------------
// Factories for the standard families
// ---------------------------------------------------------------------------

fn snap_integer(x: f64) -> f64 {
    let r = libm::round(x);
    if (x - r).abs() <= 1e-12 {
        r
    } else {
        x
    }
}

/// Triangles in the plane: `x, x + y, x + lam * y_theta` with `y_theta` the
/// rotation of `y` by `theta` counter-clockwise. `n = 2`, `k = 3`, `m = 4`.
pub fn make_triangle_system(theta: f64, lam: f64) -> Result<MatrixSystem> {
    if !(theta > 0.0 && theta <= core::f64::consts::PI) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, pi], got {theta}")));
    }
    if !(lam > 0.0) {
        return Err(Error::InvalidArgument(format!("lam must be positive, got {lam}")));
    }
    let (c, s) = (snap_integer(libm::cos(theta)), snap_integer(libm::sin(theta)));
    let b3 = Mat::from_rows(&[vec![lam * c, -lam * s], vec![lam * s, lam * c]]);
    MatrixSystem::from_b(2, 3, 4, vec![Mat::zeros(2, 2), Mat::identity(2), b3])
}

/// Colinear triples `x, x + y, x + lam y` in `R^n`; `k = 3`, `m = 2n`.
/// `lam = 1` collapses the last two points and is rejected.
pub fn make_colinear_system(n: usize, lam: f64) -> Result<MatrixSystem> {
    if !(lam > 1.0) {
        return Err(Error::InvalidArgument(format!("lam must exceed 1, got {lam}")));
    }
    MatrixSystem::from_b(n, 3, 2 * n, vec![Mat::zeros(n, n), Mat::identity(n), Mat::identity(n).scale(lam)])
}

/// Parallelograms `x, x + y', x + y'', x + y' + y''` in `R^n`; `k = 4`,
/// `m = 3n`. Also returns the four exceptional subspaces whose avoidance
/// keeps the four points distinct.
pub fn make_parallelogram_system(n: usize) -> Result<(MatrixSystem, Vec<ExceptionalSubspace>)> {
    let b2 = Mat::from_fn(n, 2 * n, |i, j| if j == i { 1.0 } else { 0.0 });
    let b3 = Mat::from_fn(n, 2 * n, |i, j| if j == n + i { 1.0 } else { 0.0 });
    let b4 = Mat::from_fn(n, 2 * n, |i, j| if j == i || j == n + i { 1.0 } else { 0.0 });
    let sys = MatrixSystem::from_b(n, 4, 3 * n, vec![Mat::zeros(n, 2 * n), b2.clone(), b3.clone(), b4.clone()])?;
    let v4 = Mat::from_fn(n, 2 * n, |i, j| {
        if j == i {
            1.0
        } else if j == n + i {
            -1.0
        } else {
            0.0
        }
    });
    let subspaces = vec![
        ExceptionalSubspace::new(b2)?,  // y' = 0
        ExceptionalSubspace::new(b3)?,  // y'' = 0
        ExceptionalSubspace::new(b4)?,  // y' + y'' = 0
        ExceptionalSubspace::new(v4)?,  // y' - y'' = 0
    ];
    Ok((sys, subspaces))
}

/// Power-matrix (Vandermonde-style) systems from `2n` distinct bases
/// `a_j > 1`: row `i` of `B_t` holds `a_j^(eta + (offset + i - 1) d)` with
/// offsets `0, n, 2n` for `t = 2, 3, 4`. `k = 4`, `m = 3n`. The exceptional
/// subspaces are the null spaces of `B_2, B_3, B_4`.
pub fn make_vandermonde_system(
    a: &[f64],
    eta: u32,
    d: u32,
) -> Result<(MatrixSystem, Vec<ExceptionalSubspace>)> {
    if a.len() < 2 || !a.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("need 2n base values, got {}", a.len())));
    }
    if d < 1 {
        return Err(Error::InvalidArgument(String::from("d must be >= 1")));
    }
    let n = a.len() / 2;
    for (i, &ai) in a.iter().enumerate() {
        if !(ai > 1.0) {
            return Err(Error::InvalidArgument(format!("entries must exceed 1; a[{i}] = {ai}")));
        }
        for &aj in &a[..i] {
            if ai == aj {
                return Err(Error::InvalidArgument(format!("duplicate entry {ai}")));
            }
        }
    }
    let rats: Vec<Rat> = a
        .iter()
        .map(|&x| linalg::rat_from_f64(x).ok_or_else(|| Error::NonFinite(format!("entry {x}"))))
        .collect::<Result<_>>()?;
    let power = |base: &Rat, e: u32| -> Rat {
        let mut acc = linalg::rat_int(1);
        for _ in 0..e {
            acc *= base.clone();
        }
        acc
    };
    let block = |offset: u32| -> Vec<Vec<Rat>> {
        (0..n)
            .map(|i| {
                rats.iter()
                    .map(|aj| power(aj, eta + (offset + i as u32) * d))
                    .collect()
            })
            .collect()
    };
    let zero_block: Vec<Vec<Rat>> =
        vec![vec![linalg::rat_int(0); 2 * n]; n];
    let b2 = block(0);
    let b3 = block(n as u32);
    let b4 = block(2 * n as u32);
    let sys = MatrixSystem::from_b_rational(2 * n / 2, 4, 3 * n, &[zero_block, b2, b3, b4])?;
    let b_mats = sys.b_blocks()?.to_vec();
    let subspaces = vec![
        ExceptionalSubspace::new(b_mats[1].clone())?,
        ExceptionalSubspace::new(b_mats[2].clone())?,
        ExceptionalSubspace::new(b_mats[3].clone())?,
    ];
    Ok((sys, subspaces))
}

// ---------------------------------------------------------------------------
// Point sets and the search
// ---------------------------------------------------------------------------

/// A finite point set (or occupancy grid) in `[0,1]^n` with its matching
/// tolerance, indexed for near-neighbor queries.
#[derive(Debug, Clone)]
pub struct PointSet {
    n: usize,
    points: Vec<Vec<f64>>,
    tol: f64,
    bucket: f64,
    index: Vec<([i64; 3], u32)>,
}

fn bucket_key(p: &[f64], h: f64) -> [i64; 3] {
    let mut k = [0i64; 3];
    for (a, &x) in p.iter().enumerate() {
        k[a] = libm::floor(x / h) as i64;
    }
    k
}

impl PointSet {
    pub fn from_points(n: usize, points: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
        }
        if n == 0 || n > 3 {
            return Err(Error::InvalidArgument(format!("dimension {n} not supported (1..=3)")));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != n {
                return Err(Error::ShapeMismatch(format!("point {i} has {} coordinates", p.len())));
            }
            if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::InvalidArgument(format!("point {i} lies outside [0,1]^{n}")));
            }
        }
        let bucket = tol.max(1e-12);
        let mut index: Vec<([i64; 3], u32)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (bucket_key(p, bucket), i as u32))
            .collect();
        index.sort_unstable();
        Ok(PointSet { n, points, tol, bucket, index })
    }

    /// Occupied cell centers of a grid at resolution `cells`, with the
    /// default tolerance of 1.5 cell diagonals.
    pub fn from_grid(n: usize, cells: usize, occupied: &[bool]) -> Result<Self> {
        let tol = 1.5 * libm::sqrt(n as f64) / cells as f64;
        Self::from_grid_with_tol(n, cells, occupied, tol)
    }

    pub fn from_grid_with_tol(n: usize, cells: usize, occupied: &[bool], tol: f64) -> Result<Self> {
        let expect = cells.pow(n as u32);
        if occupied.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "occupancy grid has {} cells, expected {expect}",
                occupied.len()
            )));
        }
        let mut points = Vec::new();
        for (flat, &occ) in occupied.iter().enumerate() {
            if occ {
                let coords = crate::fractal::unflatten(flat, cells, n);
                points.push(coords.iter().map(|&c| (c as f64 + 0.5) / cells as f64).collect());
            }
        }
        Self::from_points(n, points, tol)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Nearest point within `tol`, if any: `(index, distance)`.
    pub fn nearest_within_tol(&self, p: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let center = bucket_key(p, self.bucket);
        let mut delta = [0i64; 3];
        let axes = self.n;
        let mut cur = [-1i64; 3];
        // odometer over the 3^n neighbor buckets
        loop {
            for a in 0..3 {
                delta[a] = if a < axes { cur[a] } else { 0 };
            }
            let key = [center[0] + delta[0], center[1] + delta[1], center[2] + delta[2]];
            let start = self.index.partition_point(|e| e.0 < key);
            for e in &self.index[start..] {
                if e.0 != key {
                    break;
                }
                let q = &self.points[e.1 as usize];
                let d2: f64 = p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum();
                let d = libm::sqrt(d2);
                if d <= self.tol && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((e.1 as usize, d));
                }
            }
            let mut a = axes;
            loop {
                if a == 0 {
                    return best;
                }
                a -= 1;
                cur[a] += 1;
                if cur[a] <= 1 {
                    break;
                }
                cur[a] = -1;
                if a == 0 {
                    return best;
                }
            }
        }
    }
}

/// A subspace `V = null(matrix)` that non-trivial configurations must avoid.
#[derive(Debug, Clone)]
pub struct ExceptionalSubspace {
    matrix: Mat,
    null_basis: Vec<Vec<f64>>,
}

impl ExceptionalSubspace {
    pub fn new(matrix: Mat) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::NonFinite(String::from("subspace matrix")));
        }
        let null_basis = linalg::null_space_basis(&matrix, 1e-12);
        Ok(ExceptionalSubspace { matrix, null_basis })
    }

    /// The origin `{0}` in `R^dim` (the plain non-triviality constraint
    /// `y != 0`).
    pub fn origin(dim: usize) -> Self {
        ExceptionalSubspace { matrix: Mat::identity(dim), null_basis: Vec::new() }
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.null_basis.len()
    }

    pub fn ambient(&self) -> usize {
        self.matrix.cols()
    }

    /// Euclidean distance from `y` to the subspace.
    pub fn distance(&self, y: &[f64]) -> f64 {
        let mut res = y.to_vec();
        for b in &self.null_basis {
            let c = linalg::dot(y, b);
            for (r, bb) in res.iter_mut().zip(b) {
                *r -= c * bb;
            }
        }
        linalg::norm(&res)
    }
}

/// A detected configuration: `x` and `y` with the realized points
/// `x + B_j y`, the worst distance to the set, and the smallest margin to
/// any exceptional subspace.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfigurationHit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub realized: Vec<Vec<f64>>,
    pub max_dist: f64,
    pub excluded_margin: f64,
}

/// Brute-force configuration search: `x` ranges over the set's points, `y`
/// over the uniform grid in `[-1,1]^(m-n)` with `y_resolution` nodes per
/// axis. A hit requires every realized point within `tol` of the set,
/// `y != 0`, and distance above `exclusion_threshold` from every exceptional
/// subspace. Hits are sorted by `max_dist` ascending (ties by coordinates).
pub fn search_configurations(
    sys: &MatrixSystem,
    set: &PointSet,
    exclusions: &[ExceptionalSubspace],
    y_resolution: usize,
    exclusion_threshold: f64,
    cap: u64,
) -> Result<Vec<ConfigurationHit>> {
    let b = sys.b_blocks()?;
    if set.dim() != sys.n() {
        return Err(Error::ShapeMismatch(format!(
            "set dimension {} differs from system n = {}",
            set.dim(),
            sys.n()
        )));
    }
    if y_resolution < 2 {
        return Err(Error::InvalidArgument(String::from("y_resolution must be >= 2")));
    }
    let ydim = sys.m() - sys.n();
    for (i, v) in exclusions.iter().enumerate() {
        if v.ambient() != ydim {
            return Err(Error::ShapeMismatch(format!("exclusion {i} lives in R^{}, expected R^{ydim}", v.ambient())));
        }
        if v.dim() >= ydim {
            return Err(Error::InvalidArgument(format!(
                "exclusion {i} has dimension {} >= m - n = {ydim}",
                v.dim()
            )));
        }
    }
    let per_x = (y_resolution as u64).pow(ydim as u32);
    let total = per_x.saturating_mul(set.points().len() as u64);
    if total > cap {
        return Err(Error::BudgetExceeded { required: total, cap });
    }
    let grid: Vec<f64> = (0..y_resolution)
        .map(|i| -1.0 + 2.0 * i as f64 / (y_resolution - 1) as f64)
        .collect();
    let mut hits = Vec::new();
    let mut y = vec![0.0f64; ydim];
    let mut idx = vec![0usize; ydim];
    let mut point = vec![0.0f64; sys.n()];
    for x in set.points() {
        idx.iter_mut().for_each(|i| *i = 0);
        'ygrid: loop {
            for a in 0..ydim {
                y[a] = grid[idx[a]];
            }
            if y.iter().any(|&v| v != 0.0) {
                let margin = exclusions
                    .iter()
                    .map(|v| v.distance(&y))
                    .fold(f64::INFINITY, f64::min);
                if margin > exclusion_threshold {
                    let mut max_dist = 0.0f64;
                    let mut ok = true;
                    let mut realized = Vec::with_capacity(sys.k());
                    for bj in b {
                        let shift = bj.mul_vec(&y);
                        for (slot, (&xa, &sa)) in point.iter_mut().zip(x.iter().zip(&shift)) {
                            *slot = xa + sa;
                        }
                        match set.nearest_within_tol(&point) {
                            Some((_, d)) => {
                                max_dist = max_dist.max(d);
                                realized.push(point.clone());
                            }
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if ok {
                        hits.push(ConfigurationHit {
                            x: x.clone(),
                            y: y.clone(),
                            realized,
                            max_dist,
                            excluded_margin: margin,
                        });
                    }
                }
            }
            let mut a = ydim;
            loop {
                if a == 0 {
                    break 'ygrid;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < y_resolution {
                    break;
                }
                idx[a] = 0;
                if a == 0 {
                    break 'ygrid;
                }
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
    }
    hits.sort_by(|p, q| {
        p.max_dist
            .total_cmp(&q.max_dist)
            .then_with(|| cmp_vec(&p.x, &q.x))
            .then_with(|| cmp_vec(&p.y, &q.y))
    });
    Ok(hits)
}

fn cmp_vec(a: &[f64], b: &[f64]) -> core::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.total_cmp(y);
        if c != core::cmp::Ordering::Equal {
            return c;
        }
    }
    core::cmp::Ordering::Equal
}

/// Independent re-validation of an emitted hit against its invariants.
pub fn validate_hit(
    sys: &MatrixSystem,
    set: &PointSet,
    exclusions: &[ExceptionalSubspace],
    hit: &ConfigurationHit,
    exclusion_threshold: f64,
) -> bool {
    let Ok(b) = sys.b_blocks() else {
        return false;
    };
    if hit.y.iter().all(|&v| v == 0.0) {
        return false;
    }
    let margin = exclusions.iter().map(|v| v.distance(&hit.y)).fold(f64::INFINITY, f64::min);
    if margin <= exclusion_threshold || (margin - hit.excluded_margin).abs() > 1e-12 {
        return false;
    }
    let mut worst = 0.0f64;
    for (j, bj) in b.iter().enumerate() {
        let shift = bj.mul_vec(&hit.y);
        let p: Vec<f64> = hit.x.iter().zip(&shift).map(|(a, s)| a + s).collect();
        if hit.realized.get(j).map(|r| cmp_vec(r, &p)) != Some(core::cmp::Ordering::Equal) {
            return false;
        }
        match set.nearest_within_tol(&p) {
            Some((_, d)) => worst = worst.max(d),
            None => return false,
        }
    }
    worst <= set.tol() && (worst - hit.max_dist).abs() <= 1e-12
}

// ---------------------------------------------------------------------------
// Exact positive-root counting
// ---------------------------------------------------------------------------

fn poly_trim(p: &mut Vec<Rat>) {
    while p.len() > 1 && p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
}

fn poly_is_zero(p: &[Rat]) -> bool {
    p.iter().all(Zero::is_zero)
}

fn poly_derivative(p: &[Rat]) -> Vec<Rat> {
    if p.len() <= 1 {
        return vec![Rat::zero()];
    }
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * linalg::rat_int(i as i64))
        .collect()
}

/// Euclidean remainder of `a` by `b` (`b` nonzero).
fn poly_rem(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    let mut r: Vec<Rat> = a.to_vec();
    poly_trim(&mut r);
    let db = b.len() - 1;
    let lead = &b[db];
    while r.len() > db && !poly_is_zero(&r) {
        let dr = r.len() - 1;
        let f = &r[dr] / lead;
        for i in 0..=db {
            let sub = &f * &b[i];
            r[dr - db + i] -= sub;
        }
        poly_trim(&mut r);
        if dr == 0 {
            break;
        }
    }
    r
}

fn poly_gcd(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    let mut x: Vec<Rat> = a.to_vec();
    let mut y: Vec<Rat> = b.to_vec();
    poly_trim(&mut x);
    poly_trim(&mut y);
    while !poly_is_zero(&y) {
        let r = poly_rem(&x, &y);
        x = y;
        y = r;
    }
    // normalize to monic
    if let Some(l) = x.last().cloned() {
        if !l.is_zero() {
            for c in x.iter_mut() {
                *c /= l.clone();
            }
        }
    }
    x
}

fn poly_divide_exact(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    // exact division (remainder known to vanish)
    let mut r: Vec<Rat> = a.to_vec();
    poly_trim(&mut r);
    let db = b.len() - 1;
    let lead = &b[db];
    if r.len() - 1 < db {
        return vec![Rat::zero()];
    }
    let mut q = vec![Rat::zero(); r.len() - db];
    while r.len() > db && !poly_is_zero(&r) {
        let dr = r.len() - 1;
        let f = &r[dr] / lead;
        q[dr - db] = f.clone();
        for i in 0..=db {
            let sub = &f * &b[i];
            r[dr - db + i] -= sub;
        }
        poly_trim(&mut r);
        if dr == 0 {
            break;
        }
    }
    q
}

/// Sign of the limit from the right at 0: the lowest-order nonzero
/// coefficient.
fn sign_at_zero_plus(p: &[Rat]) -> i32 {
    for c in p {
        if !c.is_zero() {
            return if c.is_positive() { 1 } else { -1 };
        }
    }
    0
}

fn sign_at_infinity(p: &[Rat]) -> i32 {
    for c in p.iter().rev() {
        if !c.is_zero() {
            return if c.is_positive() { 1 } else { -1 };
        }
    }
    0
}

fn sign_changes(signs: &[i32]) -> usize {
    let mut last = 0;
    let mut changes = 0;
    for &s in signs {
        if s != 0 {
            if last != 0 && s != last {
                changes += 1;
            }
            last = s;
        }
    }
    changes
}

/// Exact count of distinct positive real roots of
/// `P(x) = sum_i c_i x^(eta_i)` by a Sturm chain over the rationals.
pub fn count_positive_roots_rational(exponents: &[u64], coeffs: &[Rat]) -> Result<usize> {
    if exponents.len() != coeffs.len() || exponents.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} exponents vs {} coefficients",
            exponents.len(),
            coeffs.len()
        )));
    }
    for w in exponents.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidArgument(String::from("exponents must be strictly increasing")));
        }
    }
    if coeffs.iter().all(Zero::is_zero) {
        return Err(Error::InvalidArgument(String::from("coefficients must not all vanish")));
    }
    // drop the common factor x^eta_1 (irrelevant for positive roots)
    let base = exponents[0];
    let deg = (exponents[exponents.len() - 1] - base) as usize;
    let mut p = vec![Rat::zero(); deg + 1];
    for (e, c) in exponents.iter().zip(coeffs) {
        p[(e - base) as usize] = c.clone();
    }
    poly_trim(&mut p);
    if p.len() == 1 {
        return Ok(0); // a monomial has no positive root
    }
    // square-free part, so the Sturm chain counts distinct roots
    let dp = poly_derivative(&p);
    let g = poly_gcd(&p, &dp);
    let sf = if g.len() > 1 { poly_divide_exact(&p, &g) } else { p };
    let mut chain: Vec<Vec<Rat>> = vec![sf.clone(), poly_derivative(&sf)];
    loop {
        let last = &chain[chain.len() - 1];
        if poly_is_zero(last) || last.len() == 1 {
            break;
        }
        let prev = &chain[chain.len() - 2];
        let mut r = poly_rem(prev, last);
        for c in r.iter_mut() {
            *c = -c.clone();
        }
        if poly_is_zero(&r) {
            break;
        }
        chain.push(r);
    }
    let at0: Vec<i32> = chain.iter().map(|q| sign_at_zero_plus(q)).collect();
    let atinf: Vec<i32> = chain.iter().map(|q| sign_at_infinity(q)).collect();
    Ok(sign_changes(&at0).saturating_sub(sign_changes(&atinf)))
}

/// [`count_positive_roots_rational`] with float coefficients, rationalized
/// exactly first.
pub fn count_positive_roots(exponents: &[u64], coeffs: &[f64]) -> Result<usize> {
    let rats: Vec<Rat> = coeffs
        .iter()
        .map(|&c| linalg::rat_from_f64(c).ok_or_else(|| Error::NonFinite(format!("coefficient {c}"))))
        .collect::<Result<_>>()?;
    count_positive_roots_rational(exponents, &rats)
}

// ---------------------------------------------------------------------------
// Near-integral translation set
// ---------------------------------------------------------------------------

/// Distance to the nearest integer.
fn dist_to_int(t: f64) -> f64 {
    (t - libm::round(t)).abs()
}

/// Monte Carlo measure of
/// `{ y in [0,1]^(m-n) : || (B_j^t v_l) . y || <= eps for all j, l }`,
/// with the analytic lower bound `( (1/2) (eps / (2(m-n)))^K )^(k(m-n))`
/// from the pigeonhole argument. Returns `(estimate, analytic_lower_bound)`.
pub fn c_epsilon_measure(
    sys: &MatrixSystem,
    v: &[Vec<i64>],
    eps: f64,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    if v.is_empty() {
        return Err(Error::InvalidArgument(String::from("need at least one test vector")));
    }
    let b = sys.b_blocks()?;
    let n = sys.n();
    let ydim = sys.m() - n;
    for (l, vl) in v.iter().enumerate() {
        if vl.len() != n {
            return Err(Error::ShapeMismatch(format!("v[{l}] has {} entries, expected {n}", vl.len())));
        }
    }
    // w_{j,l} = B_j^t v_l
    let mut forms: Vec<Vec<f64>> = Vec::with_capacity(b.len() * v.len());
    for bj in b {
        for vl in v {
            let w: Vec<f64> = (0..ydim)
                .map(|c| (0..n).map(|i| bj[(i, c)] * vl[i] as f64).sum())
                .collect();
            forms.push(w);
        }
    }
    let rng = CounterRng::new(seed);
    let total = samples.max(1);
    let mut hits = 0u64;
    let mut y = vec![0.0f64; ydim];
    for s in 0..total {
        rng.point_at(s, ydim, &mut y);
        let ok = forms.iter().all(|w| dist_to_int(linalg::dot(w, &y)) <= eps);
        if ok {
            hits += 1;
        }
    }
    let estimate = hits as f64 / total as f64;
    let k_count = v.len() as f64;
    let c_prime = 0.5 * libm::pow(eps / (2.0 * ydim as f64), k_count);
    let bound = libm::pow(c_prime, (sys.k() * ydim) as f64);
    Ok((estimate, bound))
}

/// Upper bound `4 sqrt(2) pi / eps` on the number of cells a unit-circle
/// partition at scale `eps` can populate.
pub fn atom_count_bound(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1], got {eps}")));
    }
    Ok(4.0 * libm::sqrt(2.0) * core::f64::consts::PI / eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{check_nondegenerate, check_reduced_nondegenerate, MatrixSystem};

    #[test]
    fn triangle_right_angle_matrices() {
        let sys = make_triangle_system(core::f64::consts::FRAC_PI_2, 1.0).unwrap();
        let b = sys.b_blocks().unwrap();
        assert_eq!(b[2][(0, 0)], 0.0);
        assert_eq!(b[2][(0, 1)], -1.0);
        assert_eq!(b[2][(1, 0)], 1.0);
        assert_eq!(b[2][(1, 1)], 0.0);
        assert!(check_nondegenerate(&sys, 1e-9).unwrap().passed);
        assert!(sys.exact_a().is_some());
    }

    #[test]
    fn triangle_pi_is_minus_identity() {
        let sys = make_triangle_system(core::f64::consts::PI, 1.0).unwrap();
        let b = sys.b_blocks().unwrap();
        assert_eq!(b[2][(0, 0)], -1.0);
        assert_eq!(b[2][(1, 1)], -1.0);
        assert_eq!(b[2][(0, 1)], 0.0);
    }

    #[test]
    fn triangle_rejects_bad_theta() {
        assert!(make_triangle_system(0.0, 1.0).is_err());
        assert!(make_triangle_system(4.0, 1.0).is_err());
    }

    #[test]
    fn colinear_rejects_lambda_one() {
        assert!(make_colinear_system(2, 1.0).is_err());
        let sys = make_colinear_system(1, 2.0).unwrap();
        assert!(check_nondegenerate(&sys, 1e-9).unwrap().passed);
        // rational scale factor in dimension three, exact verdict
        let sys3 = make_colinear_system(3, 1.5).unwrap();
        let rep = check_nondegenerate(&sys3, 1e-9).unwrap();
        assert!(rep.passed && rep.exact);
        assert!(check_reduced_nondegenerate(&sys3, 1e-9).unwrap());
    }

    #[test]
    fn repeated_block_fails_reduced_check() {
        // B_2 = B_3 gives a zero difference block
        let sys = MatrixSystem::from_b(
            1,
            3,
            2,
            alloc::vec![
                Mat::zeros(1, 1),
                Mat::identity(1),
                Mat::identity(1),
            ],
        )
        .unwrap();
        assert!(!check_reduced_nondegenerate(&sys, 1e-9).unwrap());
    }

    #[test]
    fn vandermonde_accepts_eta_zero() {
        let (sys, _) = make_vandermonde_system(&[2.0, 3.0], 0, 1).unwrap();
        let b = sys.b_blocks().unwrap();
        assert_eq!(b[1].row(0), &[1.0, 1.0]); // a^0
        assert!(check_reduced_nondegenerate(&sys, 1e-9).unwrap());
    }

    #[test]
    fn parallelogram_matrices_and_subspaces() {
        let (sys, vs) = make_parallelogram_system(1).unwrap();
        let b = sys.b_blocks().unwrap();
        assert_eq!(b[0].row(0), &[0.0, 0.0]);
        assert_eq!(b[1].row(0), &[1.0, 0.0]);
        assert_eq!(b[2].row(0), &[0.0, 1.0]);
        assert_eq!(b[3].row(0), &[1.0, 1.0]);
        assert_eq!(vs.len(), 4);
        for v in &vs {
            assert_eq!(v.dim(), 1);
        }
        assert!(check_reduced_nondegenerate(&sys, 1e-9).unwrap());
    }

    #[test]
    fn vandermonde_example_matrices() {
        let (sys, vs) = make_vandermonde_system(&[2.0, 3.0], 1, 1).unwrap();
        let b = sys.b_blocks().unwrap();
        assert_eq!(b[1].row(0), &[2.0, 3.0]);
        assert_eq!(b[2].row(0), &[4.0, 9.0]);
        assert_eq!(b[3].row(0), &[8.0, 27.0]);
        assert_eq!(vs.len(), 3);
        assert!(check_reduced_nondegenerate(&sys, 1e-9).unwrap());
        assert!(make_vandermonde_system(&[2.0, 2.0], 1, 1).is_err());
        assert!(make_vandermonde_system(&[0.5, 3.0], 1, 1).is_err());
    }

    #[test]
    fn sturm_counts_factored_quadratic() {
        // 2 - 3x + x^2 = (x-1)(x-2): two positive roots
        assert_eq!(count_positive_roots(&[0, 1, 2], &[2.0, -3.0, 1.0]).unwrap(), 2);
        // x - 1: one
        assert_eq!(count_positive_roots(&[0, 1], &[-1.0, 1.0]).unwrap(), 1);
        // monomial: none
        assert_eq!(count_positive_roots(&[5], &[3.0]).unwrap(), 0);
        // repeated root counted once: (x-1)^2
        assert_eq!(count_positive_roots(&[0, 1, 2], &[1.0, -2.0, 1.0]).unwrap(), 1);
        assert!(count_positive_roots(&[0, 1], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn dense_grid_search_finds_triangles() {
        let sys = make_triangle_system(core::f64::consts::FRAC_PI_2, 1.0).unwrap();
        let occupied = vec![true; 16 * 16];
        let set = PointSet::from_grid(2, 16, &occupied).unwrap();
        let excl = [ExceptionalSubspace::origin(2)];
        let hits = search_configurations(&sys, &set, &excl, 9, 0.3, DEFAULT_SEARCH_CAP).unwrap();
        assert!(!hits.is_empty());
        for h in hits.iter().take(5) {
            assert!(validate_hit(&sys, &set, &excl, h, 0.3));
        }
    }

    #[test]
    fn single_point_has_no_hits() {
        let sys = make_colinear_system(1, 2.0).unwrap();
        let set = PointSet::from_points(1, vec![vec![0.5]], 1e-6).unwrap();
        let excl = [ExceptionalSubspace::origin(1)];
        let hits = search_configurations(&sys, &set, &excl, 33, 1e-9, DEFAULT_SEARCH_CAP).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn search_cap_is_enforced() {
        let sys = make_colinear_system(1, 2.0).unwrap();
        let set = PointSet::from_points(1, vec![vec![0.5], vec![0.7]], 1e-3).unwrap();
        assert!(matches!(
            search_configurations(&sys, &set, &[], 1000, 1e-9, 10),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn c_epsilon_vacuous_and_ap_value() {
        let sys = make_colinear_system(1, 2.0).unwrap();
        // all-zero vector: constraint vacuous
        let (est, bound) = c_epsilon_measure(&sys, &[vec![0]], 0.5, 10_000, 1).unwrap();
        assert_eq!(est, 1.0);
        assert!(bound <= 1.0);
        // v = (1), eps = 0.2: the exact measure is 0.2 (computed by hand from
        // the three interval systems)
        let (est, bound) = c_epsilon_measure(&sys, &[vec![1]], 0.2, 200_000, 2).unwrap();
        assert!((est - 0.2).abs() < 0.01, "est = {est}");
        assert!(est >= bound);
    }

    #[test]
    fn atom_bound_values() {
        let v = atom_count_bound(0.1).unwrap();
        assert_eq!(v, 4.0 * libm::sqrt(2.0) * core::f64::consts::PI / 0.1);
        assert!((v - 177.7).abs() < 0.1);
        assert!(atom_count_bound(1.0).unwrap() < v);
    }
}
