//! Surface measure on a null space and the approximate-identity constant.
//!
//! For a full-rank `p x d` matrix `P` with null space `V`, a concentrating
//! kernel `eps^-p Phi_hat(P xi / eps)` integrated against a test function
//! converges, as `eps -> 0`, to a constant multiple of the surface integral
//! over `V`. The constant is `1/|det Q|`, where `Q` maps the coordinates of
//! an orthonormal complement of `V` through `P`; it is independent of the
//! basis choice, and `|det Q| = sqrt(det(P P^t))`.

use alloc::{format, string::String, vec, vec::Vec};

use crate::linalg::{self, Mat};
use crate::rng::StreamRng;
use crate::{Error, Result};

/// An orthonormal chart for the null space `V = {xi : P xi = 0}` of a
/// full-rank `p x d` matrix, together with an orthonormal completion.
#[derive(Debug, Clone)]
pub struct SurfaceChart {
    p_mat: Mat,
    v_basis: Vec<Vec<f64>>,
    complement: Vec<Vec<f64>>,
}

impl SurfaceChart {
    pub fn new(p_mat: Mat) -> Result<Self> {
        let (p, d) = (p_mat.rows(), p_mat.cols());
        if p > d {
            return Err(Error::ShapeMismatch(format!("P is {p}x{d}; need p <= d")));
        }
        if !p_mat.is_finite() {
            return Err(Error::NonFinite(String::from("P contains NaN or infinity")));
        }
        let v_basis = linalg::null_space_basis(&p_mat, 1e-12);
        if v_basis.len() != d - p {
            return Err(Error::RankDeficient(format!(
                "null space has dimension {}, expected {}; P is not of full rank {p}",
                v_basis.len(),
                d - p
            )));
        }
        let complement = linalg::orthonormal_complement(&v_basis, d);
        Ok(SurfaceChart { p_mat, v_basis, complement })
    }

    fn rotate_set(set: &[Vec<f64>], ambient: usize, seed: u64) -> Vec<Vec<f64>> {
        let p = set.len();
        let mut rng = StreamRng::seed_from_u64(seed);
        let cand: Vec<Vec<f64>> =
            (0..p).map(|_| (0..p).map(|_| rng.unit_f64() - 0.5).collect()).collect();
        let rot = linalg::mgs_orthonormalize(&cand);
        let mut out = Vec::with_capacity(p);
        for r in &rot {
            let mut v = vec![0.0; ambient];
            for (c, basis_vec) in r.iter().zip(set) {
                for (slot, b) in v.iter_mut().zip(basis_vec) {
                    *slot += c * b;
                }
            }
            out.push(v);
        }
        out
    }

    /// Replaces the completion with a rotated copy (for basis-independence
    /// checks); the span is unchanged.
    pub fn with_rotated_complement(&self, seed: u64) -> Self {
        let complement = Self::rotate_set(&self.complement, self.dim_ambient(), seed);
        SurfaceChart { p_mat: self.p_mat.clone(), v_basis: self.v_basis.clone(), complement }
    }

    /// Replaces the null-space basis with a rotated copy; the span is
    /// unchanged.
    pub fn with_rotated_v_basis(&self, seed: u64) -> Self {
        let v_basis = Self::rotate_set(&self.v_basis, self.dim_ambient(), seed);
        SurfaceChart { p_mat: self.p_mat.clone(), v_basis, complement: self.complement.clone() }
    }

    pub fn p_mat(&self) -> &Mat {
        &self.p_mat
    }

    pub fn v_basis(&self) -> &[Vec<f64>] {
        &self.v_basis
    }

    pub fn complement(&self) -> &[Vec<f64>] {
        &self.complement
    }

    pub fn dim_ambient(&self) -> usize {
        self.p_mat.cols()
    }

    pub fn dim_v(&self) -> usize {
        self.v_basis.len()
    }

    /// Worst constraint violation over the basis: `|P alpha_i|` for the null
    /// vectors and orthonormality residuals for the full set.
    pub fn residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for v in &self.v_basis {
            worst = worst.max(linalg::norm(&self.p_mat.mul_vec(v)));
        }
        let all: Vec<&Vec<f64>> = self.v_basis.iter().chain(&self.complement).collect();
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let d = linalg::dot(a, b) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

/// Surface integral `int_V F dsigma` by a midpoint tensor rule on the chart
/// coordinates over `[-R, R]^v`.
pub fn surface_integral(
    chart: &SurfaceChart,
    f: &dyn Fn(&[f64]) -> f64,
    radius: f64,
    q: usize,
) -> Result<f64> {
    if !(radius > 0.0) || q < 2 {
        return Err(Error::InvalidArgument(format!("need R > 0 and Q >= 2, got R={radius}, Q={q}")));
    }
    let v = chart.dim_v();
    let d = chart.dim_ambient();
    if v == 0 {
        return Ok(f(&vec![0.0; d]));
    }
    let step = 2.0 * radius / q as f64;
    let mut idx = vec![0usize; v];
    let mut xi = vec![0.0f64; d];
    let mut sum = 0.0;
    'outer: loop {
        xi.iter_mut().for_each(|x| *x = 0.0);
        for a in 0..v {
            let s = -radius + (idx[a] as f64 + 0.5) * step;
            for (slot, b) in xi.iter_mut().zip(&chart.v_basis[a]) {
                *slot += s * b;
            }
        }
        sum += f(&xi);
        let mut a = v;
        loop {
            if a == 0 {
                break 'outer;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < q {
                break;
            }
            idx[a] = 0;
            if a == 0 {
                break 'outer;
            }
        }
        if idx.iter().all(|&i| i == 0) {
            break;
        }
    }
    Ok(sum * libm::pow(step, v as f64))
}

/// The approximate-identity constant `C_P` with
/// `lim_eps int F(xi) eps^-p Phi_hat(P xi / eps) dxi = C_P int_V F dsigma`.
///
/// `Q` is the `p x p` matrix with columns `P alpha_{v+j}` over the
/// orthonormal complement; the limit carries `1/|det Q|` (equivalently
/// `det(P P^t)^{-1/2}`), independent of the basis choice.
pub fn constant_cp(chart: &SurfaceChart) -> Result<f64> {
    let p = chart.p_mat.rows();
    let q = Mat::from_fn(p, p, |i, j| {
        linalg::dot(chart.p_mat.row(i), &chart.complement[j])
    });
    let det = linalg::lu_det(&q).abs();
    let scale = chart.p_mat.max_abs().max(1e-300);
    if det < 1e-12 * libm::pow(scale, p as f64) {
        return Err(Error::RankDeficient(format!(
            "complement image determinant {det} is below tolerance; P is not of full rank"
        )));
    }
    Ok(1.0 / det)
}

/// One row of a mollified-limit verification.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MollifiedLimitRow {
    pub eps: f64,
    pub value: f64,
    pub target: f64,
    pub rel_err: f64,
}

/// Verifies the concentrating-kernel limit numerically with the Gaussian
/// kernel `Phi(x) = exp(-pi |x|^2)` (self-dual, `Phi(0) = 1`): for each
/// `eps`, integrates `F(xi) eps^-p Phi_hat(P xi/eps) dxi` over the chart box
/// `[-R, R]^v x [-W, W]^p`, where the transverse half-width `W` covers the
/// kernel mass (`6 eps` against the smallest singular value of `Q`), and
/// compares with `C_P int_V F dsigma`.
pub fn mollified_limit_check(
    chart: &SurfaceChart,
    f: &dyn Fn(&[f64]) -> f64,
    eps_list: &[f64],
    radius: f64,
    q_nodes: usize,
) -> Result<Vec<MollifiedLimitRow>> {
    let d = chart.dim_ambient();
    let p = chart.p_mat.rows();
    let v = chart.dim_v();
    if d > 4 {
        return Err(Error::BudgetExceeded { required: d as u64, cap: 4 });
    }
    let target = constant_cp(chart)? * surface_integral(chart, f, radius, q_nodes)?;
    let qm = Mat::from_fn(p, p, |i, j| linalg::dot(chart.p_mat.row(i), &chart.complement[j]));
    let (smin, _) = linalg::sigma_extremes(&qm);
    let mut out = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
        }
        let w = 6.0 * eps / smin.max(1e-300);
        let trans_nodes = 96usize;
        let vstep = 2.0 * radius / q_nodes as f64;
        let wstep = 2.0 * w / trans_nodes as f64;
        // odometer over v chart axes and p transverse axes
        let axes = v + p;
        let mut idx = vec![0usize; axes];
        let mut xi = vec![0.0f64; d];
        let mut img = vec![0.0f64; p];
        let mut sum = 0.0;
        'outer: loop {
            xi.iter_mut().for_each(|x| *x = 0.0);
            for a in 0..v {
                let s = -radius + (idx[a] as f64 + 0.5) * vstep;
                for (slot, b) in xi.iter_mut().zip(&chart.v_basis[a]) {
                    *slot += s * b;
                }
            }
            for a in 0..p {
                let s = -w + (idx[v + a] as f64 + 0.5) * wstep;
                for (slot, b) in xi.iter_mut().zip(&chart.complement[a]) {
                    *slot += s * b;
                }
            }
            let fv = f(&xi);
            if fv != 0.0 {
                for (i, slot) in img.iter_mut().enumerate() {
                    *slot = linalg::dot(chart.p_mat.row(i), &xi) / eps;
                }
                let ker = libm::exp(-core::f64::consts::PI * linalg::dot(&img, &img));
                sum += fv * ker;
            }
            let mut a = axes;
            loop {
                if a == 0 {
                    break 'outer;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < if a < v { q_nodes } else { trans_nodes } {
                    break;
                }
                idx[a] = 0;
                if a == 0 {
                    break 'outer;
                }
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
        let vol = libm::pow(vstep, v as f64) * libm::pow(wstep, p as f64);
        let value = sum * vol / libm::pow(eps, p as f64);
        let rel_err = (value - target).abs() / target.abs().max(1e-300);
        out.push(MollifiedLimitRow { eps, value, target, rel_err });
    }
    Ok(out)
}
