//! Discretized measures on `[0,1]^n`: random Cantor-type generators, lattice
//! Fourier transforms, ball-condition constants, decay-exponent fits, and the
//! smooth/rough mollification split.
//!
//! Transform convention: `mu_hat(xi) = sum_c w_c exp(-2 pi i x_c . xi)` with
//! `x_c` the cell center. All generators are deterministic functions of their
//! seed; the parent-visit order and the child-selection scheme are part of
//! the contract.

use alloc::{format, vec, vec::Vec};
use num_complex::Complex64;

use crate::rng::StreamRng;
use crate::{Error, Result};

/// A non-negative weight field on a regular grid over `[0,1]^n`, summing to
/// one: a discretized probability measure. `cells` (the per-axis resolution)
/// is a power of two.
#[derive(Debug, Clone)]
pub struct GridMeasure {
    n: usize,
    cells: usize,
    weights: Vec<f64>,
}

fn checked_len(n: usize, cells: usize) -> Result<usize> {
    if n == 0 || n > 3 {
        return Err(Error::InvalidArgument(format!("dimension {n} not supported (1..=3)")));
    }
    if cells == 0 || !cells.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("grid resolution {cells} must be a power of two")));
    }
    let len = cells.checked_pow(n as u32).filter(|&l| l <= 1 << 27).ok_or_else(|| {
        Error::InvalidArgument(format!("grid {cells}^{n} exceeds the supported size"))
    })?;
    Ok(len)
}

impl GridMeasure {
    /// Validates weights: finite, non-negative, total mass 1 within `1e-12`.
    pub fn from_weights(n: usize, cells: usize, weights: Vec<f64>) -> Result<Self> {
        let len = checked_len(n, cells)?;
        if weights.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "expected {len} weights for a {cells}^{n} grid, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NonFinite(alloc::string::String::from(
                "weights must be finite and non-negative",
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("total mass {total} differs from 1 beyond 1e-12")));
        }
        Ok(GridMeasure { n, cells, weights })
    }

    /// Unit mass in a single cell.
    pub fn point_mass(n: usize, cells: usize, cell: &[usize]) -> Result<Self> {
        let len = checked_len(n, cells)?;
        let idx = flat_index(cell, cells);
        let mut w = vec![0.0; len];
        w[idx] = 1.0;
        Ok(GridMeasure { n, cells, weights: w })
    }

    /// The uniform (Lebesgue) measure.
    pub fn uniform(n: usize, cells: usize) -> Result<Self> {
        let len = checked_len(n, cells)?;
        Ok(GridMeasure { n, cells, weights: vec![1.0 / len as f64; len] })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Flat indices of cells with positive weight.
    pub fn support_cells(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    /// Center of the cell with the given flat index.
    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        let coords = unflatten(flat, self.cells, self.n);
        coords.iter().map(|&c| (c as f64 + 0.5) / self.cells as f64).collect()
    }

    /// Exact transform value at an arbitrary real frequency, summed over the
    /// support.
    pub fn fourier_at(&self, xi: &[f64]) -> Complex64 {
        debug_assert_eq!(xi.len(), self.n);
        let mut acc = Complex64::new(0.0, 0.0);
        for (flat, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let x = self.cell_center(flat);
            let phase = -2.0 * core::f64::consts::PI * crate::linalg::dot(&x, xi);
            acc += w * Complex64::new(libm::cos(phase), libm::sin(phase));
        }
        acc
    }
}

pub(crate) fn flat_index(coords: &[usize], cells: usize) -> usize {
    let mut idx = 0;
    for &c in coords {
        debug_assert!(c < cells);
        idx = idx * cells + c;
    }
    idx
}

pub(crate) fn unflatten(mut flat: usize, cells: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0usize; n];
    for a in (0..n).rev() {
        out[a] = flat % cells;
        flat /= cells;
    }
    out
}

/// Values of `mu_hat` on the integer lattice `max_axis |xi| <= xi_max`,
/// stored row-major over `(-xi_max ..= xi_max)^n`.
#[derive(Debug, Clone)]
pub struct FourierSample {
    n: usize,
    xi_max: i64,
    values: Vec<Complex64>,
}

impl FourierSample {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn xi_max(&self) -> i64 {
        self.xi_max
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    fn side(&self) -> usize {
        (2 * self.xi_max + 1) as usize
    }

    /// The frequency vector of the `i`-th stored value.
    pub fn freq(&self, mut i: usize) -> Vec<i64> {
        let side = self.side();
        let mut out = vec![0i64; self.n];
        for a in (0..self.n).rev() {
            out[a] = (i % side) as i64 - self.xi_max;
            i /= side;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at an integer frequency inside the sampled box.
    pub fn value_at(&self, xi: &[i64]) -> Option<Complex64> {
        if xi.len() != self.n || xi.iter().any(|&q| q.abs() > self.xi_max) {
            return None;
        }
        let side = self.side();
        let mut idx = 0usize;
        for &q in xi {
            idx = idx * side + (q + self.xi_max) as usize;
        }
        Some(self.values[idx])
    }

    /// `(|xi|_2, |value|)` pairs for all sampled nonzero frequencies.
    pub fn amplitude_points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let f = self.freq(i);
            let r2: f64 = f.iter().map(|&q| (q * q) as f64).sum();
            if r2 > 0.0 {
                out.push((libm::sqrt(r2), self.values[i].norm()));
            }
        }
        out
    }
}

/// Parameters of the random Cantor-type construction: each retained cube is
/// subdivided `M` per axis and `T` of the `M^n` children are kept uniformly
/// at random without replacement, independently across parents.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CantorParams {
    pub n: usize,
    pub subdivision: usize,
    pub keep: usize,
    pub stages: u32,
    pub seed: u64,
    pub mode: CantorMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CantorMode {
    IndependentUniform,
    RadialProduct,
}

impl CantorParams {
    fn validate(&self) -> Result<()> {
        let branch = self.subdivision.checked_pow(self.n as u32).ok_or_else(|| {
            Error::InvalidArgument(format!("M^n overflows for M={}", self.subdivision))
        })?;
        if self.subdivision < 2 {
            return Err(Error::InvalidArgument(format!("M must be >= 2, got {}", self.subdivision)));
        }
        if self.keep < 1 || self.keep > branch {
            return Err(Error::InvalidArgument(format!(
                "T must satisfy 1 <= T <= M^n = {branch}, got {}",
                self.keep
            )));
        }
        if self.stages < 1 {
            return Err(Error::InvalidArgument(alloc::string::String::from("stages must be >= 1")));
        }
        Ok(())
    }
}

/// Runs the retained-cube subdivision and returns the leaf coordinates at
/// depth `stages`, each in `[0, M^stages)^n`. Parents are visited in
/// row-major order; the `T` children of each parent come from a partial
/// Fisher-Yates pass over the row-major child list.
fn cantor_leaves(params: &CantorParams) -> Result<Vec<Vec<usize>>> {
    params.validate()?;
    let n = params.n;
    let m_sub = params.subdivision;
    let branch = m_sub.pow(n as u32);
    let mut rng = StreamRng::seed_from_u64(params.seed);
    let mut cells: Vec<Vec<usize>> = vec![vec![0; n]];
    for _stage in 0..params.stages {
        let mut next = Vec::with_capacity(cells.len() * params.keep);
        for parent in &cells {
            let chosen = rng.choose_sorted(branch, params.keep);
            for child_flat in chosen {
                let digits = unflatten(child_flat, m_sub, n);
                let coords: Vec<usize> =
                    parent.iter().zip(&digits).map(|(&p, &d)| p * m_sub + d).collect();
                next.push(coords);
            }
        }
        cells = next;
    }
    Ok(cells)
}

/// Generates the random Cantor measure on an `N`-per-axis grid; `M^stages`
/// must divide `N`. The final measure is uniform over the retained cells.
pub fn gen_random_cantor(params: &CantorParams, grid_cells: usize) -> Result<GridMeasure> {
    let len = checked_len(params.n, grid_cells)?;
    let scale = params.subdivision.checked_pow(params.stages).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "M^stages overflows for M={}, stages={}",
            params.subdivision, params.stages
        ))
    })?;
    if !grid_cells.is_multiple_of(scale) {
        return Err(Error::InvalidArgument(format!(
            "M^stages = {scale} must divide the grid resolution {grid_cells}"
        )));
    }
    let leaves = cantor_leaves(params)?;
    let width = grid_cells / scale;
    let per_cell = 1.0 / (leaves.len() as f64 * (width.pow(params.n as u32)) as f64);
    let mut weights = vec![0.0; len];
    let mut offset = vec![0usize; params.n];
    for leaf in &leaves {
        // spread the leaf mass uniformly over its width^n grid cells
        offset.iter_mut().for_each(|o| *o = 0);
        loop {
            let coords: Vec<usize> =
                leaf.iter().zip(&offset).map(|(&c, &o)| c * width + o).collect();
            weights[flat_index(&coords, grid_cells)] += per_cell;
            // odometer over [0, width)^n
            let mut a = params.n;
            loop {
                if a == 0 {
                    break;
                }
                a -= 1;
                offset[a] += 1;
                if offset[a] < width {
                    break;
                }
                offset[a] = 0;
                if a == 0 {
                    break;
                }
            }
            if offset.iter().all(|&o| o == 0) {
                break;
            }
        }
    }
    GridMeasure::from_weights(params.n, grid_cells, weights)
}

/// Product measure in radial coordinates: a 1-D random Cantor measure on the
/// radius range `[1/2, 1]` times the uniform measure on the sphere, mapped
/// into `[0,1]^n` by `u = (1 + r w)/2` and binned to the grid.
pub fn gen_radial_product(params_1d: &CantorParams, n: usize, grid_cells: usize) -> Result<GridMeasure> {
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("radial product needs 2 <= n <= 3, got {n}")));
    }
    let len = checked_len(n, grid_cells)?;
    let mut p1 = params_1d.clone();
    p1.n = 1;
    let leaves = cantor_leaves(&p1)?;
    let scale = p1.subdivision.pow(p1.stages);
    let radial_mass = 1.0 / leaves.len() as f64;
    // radius of a leaf center, mapped to [1/2, 1]
    let radii: Vec<f64> = leaves
        .iter()
        .map(|leaf| {
            let t = (leaf[0] as f64 + 0.5) / scale as f64;
            0.5 + 0.5 * t
        })
        .collect();
    let mut weights = vec![0.0; len];
    let two_pi = 2.0 * core::f64::consts::PI;
    match n {
        2 => {
            let n_theta = 4 * grid_cells;
            let ang_mass = 1.0 / n_theta as f64;
            for (&r, _) in radii.iter().zip(0..) {
                for q in 0..n_theta {
                    let th = (q as f64 + 0.5) * two_pi / n_theta as f64;
                    let u = [(1.0 + r * libm::cos(th)) / 2.0, (1.0 + r * libm::sin(th)) / 2.0];
                    let coords: Vec<usize> = u
                        .iter()
                        .map(|&x| ((x * grid_cells as f64) as usize).min(grid_cells - 1))
                        .collect();
                    weights[flat_index(&coords, grid_cells)] += radial_mass * ang_mass;
                }
            }
        }
        3 => {
            let n_theta = 4 * grid_cells;
            let n_phi = 2 * grid_cells;
            // area weights proportional to sin(phi), normalized exactly
            let sins: Vec<f64> = (0..n_phi)
                .map(|a| libm::sin((a as f64 + 0.5) * core::f64::consts::PI / n_phi as f64))
                .collect();
            let sin_total: f64 = sins.iter().sum::<f64>() * n_theta as f64;
            for &r in &radii {
                for (a, &sphi) in sins.iter().enumerate() {
                    let phi = (a as f64 + 0.5) * core::f64::consts::PI / n_phi as f64;
                    let (cphi, wphi) = (libm::cos(phi), sphi / sin_total);
                    for q in 0..n_theta {
                        let th = (q as f64 + 0.5) * two_pi / n_theta as f64;
                        let w = [
                            sphi * libm::cos(th),
                            sphi * libm::sin(th),
                            cphi,
                        ];
                        let coords: Vec<usize> = w
                            .iter()
                            .map(|&c| {
                                let x = (1.0 + r * c) / 2.0;
                                ((x * grid_cells as f64) as usize).min(grid_cells - 1)
                            })
                            .collect();
                        weights[flat_index(&coords, grid_cells)] += radial_mass * wphi;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    GridMeasure::from_weights(n, grid_cells, weights)
}

/// Lattice Fourier transform of a grid measure, computed axis by axis.
/// Requires `xi_max <= N/2` to stay clear of the grid's aliasing limit.
pub fn fourier_transform(measure: &GridMeasure, xi_max: usize) -> Result<FourierSample> {
    let nn = measure.cells;
    if xi_max > nn / 2 {
        return Err(Error::InvalidArgument(format!(
            "xi_max = {xi_max} exceeds the anti-aliasing bound N/2 = {}",
            nn / 2
        )));
    }
    let n = measure.n;
    let side = 2 * xi_max + 1;
    let mut data: Vec<Complex64> = measure.weights.iter().map(|&w| Complex64::new(w, 0.0)).collect();
    let mut dims = vec![nn; n];
    let mut phase = vec![Complex64::new(0.0, 0.0); nn];
    for axis in 0..n {
        let in_len = dims[axis];
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let mut out = vec![Complex64::new(0.0, 0.0); outer * side * inner];
        for qi in 0..side {
            let q = qi as i64 - xi_max as i64;
            // phase(c) = exp(-2 pi i (c + 1/2) q / N), built by recurrence
            let step_arg = -2.0 * core::f64::consts::PI * q as f64 / nn as f64;
            let step = Complex64::new(libm::cos(step_arg), libm::sin(step_arg));
            let mut cur = Complex64::new(libm::cos(step_arg / 2.0), libm::sin(step_arg / 2.0));
            for slot in phase.iter_mut().take(in_len) {
                *slot = cur;
                cur *= step;
            }
            for o in 0..outer {
                for i in 0..inner {
                    let mut acc = Complex64::new(0.0, 0.0);
                    let base = o * in_len * inner + i;
                    for c in 0..in_len {
                        acc += data[base + c * inner] * phase[c];
                    }
                    out[o * side * inner + qi * inner + i] = acc;
                }
            }
        }
        data = out;
        dims[axis] = side;
    }
    Ok(FourierSample { n, xi_max: xi_max as i64, values: data })
}

/// Per-scale ball-condition constants: for each dyadic radius
/// `r = 2^-j`, `j = 1..log2(N)`, the maximum of `mu(B(x, r)) / r^alpha` over
/// support cells `x`. Ball membership is decided by cell centers.
pub fn ball_constants_per_scale(measure: &GridMeasure, alpha: f64) -> Result<Vec<(u32, f64)>> {
    if !(alpha > 0.0 && alpha <= measure.n as f64) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, n], got {alpha} with n = {}",
            measure.n
        )));
    }
    let nn = measure.cells;
    let n = measure.n;
    let levels = nn.trailing_zeros();
    let support = measure.support_cells();
    let coords: Vec<Vec<usize>> = support.iter().map(|&f| unflatten(f, nn, n)).collect();
    let mut out = Vec::new();
    for j in 1..=levels {
        let r = libm::pow(2.0, -(j as f64));
        let win = libm::ceil(r * nn as f64) as i64;
        let r2_cells = (r * nn as f64) * (r * nn as f64); // squared radius in cell units
        let mut best = 0.0f64;
        for (ci, c) in coords.iter().enumerate() {
            let _ = ci;
            let mut mass = 0.0;
            // scan the coordinate window around c
            let mut lo = vec![0i64; n];
            let mut hi = vec![0i64; n];
            for a in 0..n {
                lo[a] = (c[a] as i64 - win).max(0);
                hi[a] = (c[a] as i64 + win).min(nn as i64 - 1);
            }
            let mut cur = lo.clone();
            'outer: loop {
                let mut d2 = 0.0;
                for a in 0..n {
                    let d = (cur[a] - c[a] as i64) as f64;
                    d2 += d * d;
                }
                if d2 <= r2_cells + 1e-9 {
                    let flat = {
                        let mut idx = 0usize;
                        for &x in &cur {
                            idx = idx * nn + x as usize;
                        }
                        idx
                    };
                    mass += measure.weights[flat];
                }
                let mut a = n;
                loop {
                    if a == 0 {
                        break 'outer;
                    }
                    a -= 1;
                    cur[a] += 1;
                    if cur[a] <= hi[a] {
                        break;
                    }
                    cur[a] = lo[a];
                    if a == 0 {
                        break 'outer;
                    }
                }
            }
            let v = mass / libm::pow(r, alpha);
            if v > best {
                best = v;
            }
        }
        out.push((j, best));
    }
    Ok(out)
}

/// The ball-condition constant: the maximum of [`ball_constants_per_scale`]
/// over all dyadic scales.
pub fn ball_condition_constant(measure: &GridMeasure, alpha: f64) -> Result<f64> {
    Ok(ball_constants_per_scale(measure, alpha)?
        .into_iter()
        .fold(0.0, |m, (_, v)| if v > m { v } else { m }))
}

/// A fitted Fourier-decay envelope `|mu_hat(xi)| <~ C |xi|^(-beta/2)`.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecayFit {
    pub beta_hat: f64,
    pub c_hat: f64,
    pub window: (f64, f64),
}

impl DecayFit {
    pub fn envelope(&self, abs_xi: f64) -> f64 {
        self.c_hat * libm::pow(abs_xi, -self.beta_hat / 2.0)
    }
}

/// Fits the decay exponent from `(|xi|, |mu_hat|)` points restricted to
/// `window`. Frequencies are binned into dyadic annuli; the slope comes from
/// least squares on the log median amplitude per annulus (medians track the
/// envelope shape without the sample-count bias of annulus maxima), and the
/// constant is raised until the envelope dominates 99% of the samples.
pub fn decay_fit_points(points: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo >= 1.0 && hi > lo) {
        return Err(Error::InvalidArgument(format!("bad window [{lo}, {hi}]; need 1 <= lo < hi")));
    }
    let inside: Vec<(f64, f64)> =
        points.iter().copied().filter(|&(r, _)| r >= lo && r <= hi).collect();
    // dyadic annuli [b, 2b), last clipped at hi inclusive
    let mut anns: Vec<(f64, f64)> = Vec::new(); // (log center, log median)
    let mut b = lo;
    while b < hi {
        let t = 2.0 * b;
        let last = t >= hi;
        let mut amps: Vec<f64> = inside
            .iter()
            .filter(|&&(r, _)| r >= b && if last { r <= hi } else { r < t })
            .map(|&(_, a)| a)
            .collect();
        if !amps.is_empty() {
            amps.sort_by(f64::total_cmp);
            let med = if amps.len() % 2 == 1 {
                amps[amps.len() / 2]
            } else {
                0.5 * (amps[amps.len() / 2 - 1] + amps[amps.len() / 2])
            };
            let center = libm::sqrt(b * if last { hi } else { t });
            anns.push((libm::log(center), libm::log(med.max(1e-300))));
        }
        b = t;
    }
    if anns.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "window [{lo}, {hi}] yields {} populated annuli; need at least 3",
            anns.len()
        )));
    }
    // least squares y = a x + b
    let m = anns.len() as f64;
    let sx: f64 = anns.iter().map(|p| p.0).sum();
    let sy: f64 = anns.iter().map(|p| p.1).sum();
    let sxx: f64 = anns.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = anns.iter().map(|p| p.0 * p.1).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let beta_hat = (-2.0 * slope).max(0.0);
    // envelope constant: 99th percentile of |v| |xi|^(beta/2)
    let mut ratios: Vec<f64> =
        inside.iter().map(|&(r, a)| a * libm::pow(r, beta_hat / 2.0)).collect();
    ratios.sort_by(f64::total_cmp);
    let idx = ((0.99 * ratios.len() as f64) as usize).min(ratios.len() - 1);
    let c_hat = ratios[idx];
    Ok(DecayFit { beta_hat, c_hat, window })
}

/// [`decay_fit_points`] applied to a lattice sample.
pub fn decay_exponent_fit(sample: &FourierSample, window: (f64, f64)) -> Result<DecayFit> {
    decay_fit_points(&sample.amplitude_points(), window)
}

/// A grid-sampled density on `[0,1]^n` (values at cell centers), evaluated
/// elsewhere by multilinear interpolation and zero outside the unit cube.
#[derive(Debug, Clone)]
pub struct GridDensity {
    n: usize,
    cells: usize,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn from_values(n: usize, cells: usize, values: Vec<f64>) -> Result<Self> {
        let len = checked_len(n, cells)?;
        if values.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "expected {len} values for a {cells}^{n} grid, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(alloc::string::String::from("density values must be finite")));
        }
        Ok(GridDensity { n, cells, values })
    }

    /// Tabulates a scalar function of the cell center.
    pub fn tabulate(n: usize, cells: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let len = checked_len(n, cells)?;
        let mut values = Vec::with_capacity(len);
        for flat in 0..len {
            let coords = unflatten(flat, cells, n);
            let x: Vec<f64> =
                coords.iter().map(|&c| (c as f64 + 0.5) / cells as f64).collect();
            values.push(f(&x));
        }
        GridDensity::from_values(n, cells, values)
    }

    /// The tensor bump `prod_a exp(-1/(1 - u_a^2))` rescaled to `[lo, hi]`
    /// per axis, with unit peak at the center; zero outside.
    pub fn bump(n: usize, cells: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidArgument(format!("bump needs lo < hi, got [{lo}, {hi}]")));
        }
        GridDensity::tabulate(n, cells, |x| {
            let mut v = 1.0;
            for &xa in x {
                let u = 2.0 * (xa - lo) / (hi - lo) - 1.0;
                if u.abs() >= 1.0 {
                    return 0.0;
                }
                v *= libm::exp(-1.0 / (1.0 - u * u) + 1.0);
            }
            v
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| if v > m { v } else { m })
    }

    /// `integral = sum values / N^n`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Multilinear interpolation between cell centers, clamped at the
    /// half-cell margin, zero outside `[0,1]^n`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let nn = self.cells;
        let mut base = vec![0usize; self.n];
        let mut frac = vec![0.0f64; self.n];
        for a in 0..self.n {
            if !(0.0..=1.0).contains(&x[a]) {
                return 0.0;
            }
            let u = x[a] * nn as f64 - 0.5;
            if u <= 0.0 {
                base[a] = 0;
                frac[a] = 0.0;
            } else if u >= (nn - 1) as f64 {
                base[a] = nn - 2;
                frac[a] = 1.0;
            } else {
                let f = libm::floor(u);
                base[a] = f as usize;
                frac[a] = u - f;
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.n) {
            let mut wgt = 1.0;
            let mut idx = 0usize;
            for a in 0..self.n {
                let up = (corner >> a) & 1 == 1;
                wgt *= if up { frac[a] } else { 1.0 - frac[a] };
                idx = idx * nn + base[a] + usize::from(up);
            }
            if wgt != 0.0 {
                acc += wgt * self.values[idx];
            }
        }
        acc
    }

    /// Exact discrete-sum transform: `sum_c v_c N^{-n} exp(-2 pi i x_c . xi)`.
    pub fn fourier_at(&self, xi: &[f64]) -> Complex64 {
        let nn = self.cells;
        let vol = 1.0 / self.values.len() as f64;
        // per-axis phase tables by recurrence
        let mut tables: Vec<Vec<Complex64>> = Vec::with_capacity(self.n);
        for a in 0..self.n {
            let step_arg = -2.0 * core::f64::consts::PI * xi[a] / nn as f64;
            let step = Complex64::new(libm::cos(step_arg), libm::sin(step_arg));
            let mut cur = Complex64::new(libm::cos(step_arg / 2.0), libm::sin(step_arg / 2.0));
            let mut t = Vec::with_capacity(nn);
            for _ in 0..nn {
                t.push(cur);
                cur *= step;
            }
            tables.push(t);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (flat, &v) in self.values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let coords = unflatten(flat, nn, self.n);
            let mut ph = Complex64::new(1.0, 0.0);
            for a in 0..self.n {
                ph *= tables[a][coords[a]];
            }
            acc += v * ph;
        }
        acc * vol
    }
}

/// The tabulated product bump kernel `phi_N` used by the mollification
/// split. The 1-D profile is the bump `exp(-1/(1-(2t)^2))` on `|t| < 1/2`,
/// scaled to a support of one `1/N_moll`-cube and normalized so its discrete
/// integral is one.
#[derive(Debug, Clone)]
pub struct Mollifier {
    n: usize,
    grid_cells: usize,
    n_moll: usize,
    half: usize,
    profile: Vec<f64>,
}

impl Mollifier {
    pub fn new(n: usize, grid_cells: usize, n_moll: usize) -> Result<Self> {
        if n_moll < 2 {
            return Err(Error::InvalidArgument(format!("N_moll must be >= 2, got {n_moll}")));
        }
        let half = grid_cells / (2 * n_moll);
        if half < 1 {
            return Err(Error::InvalidArgument(format!(
                "mollifier support at N_moll = {n_moll} is below one cell of a {grid_cells}-cell grid; \
                 use a grid with at least {} cells per axis",
                2 * n_moll
            )));
        }
        let mut raw: Vec<f64> = Vec::with_capacity(2 * half + 1);
        for o in -(half as i64)..=(half as i64) {
            let t = o as f64 * n_moll as f64 / grid_cells as f64;
            let u = 2.0 * t;
            raw.push(if u.abs() < 1.0 { libm::exp(-1.0 / (1.0 - u * u)) } else { 0.0 });
        }
        let z: f64 = raw.iter().sum::<f64>() / grid_cells as f64;
        let profile: Vec<f64> = raw.into_iter().map(|v| v / z).collect();
        Ok(Mollifier { n, grid_cells, n_moll, half, profile })
    }

    pub fn n_moll(&self) -> usize {
        self.n_moll
    }

    /// Sup of the scaled kernel `phi_N` as a density on the grid.
    pub fn sup_scaled(&self) -> f64 {
        let pmax = self.profile.iter().fold(0.0f64, |m, &v| if v > m { v } else { m });
        libm::pow(pmax, self.n as f64)
    }

    /// Sup of the unit-scale bump `phi` (so `phi_N` has sup
    /// `N_moll^n * sup(phi)`).
    pub fn sup_base(&self) -> f64 {
        self.sup_scaled() / libm::pow(self.n_moll as f64, self.n as f64)
    }

    /// Transform of the scaled kernel at a real frequency; real-valued by
    /// symmetry of the profile, with `phi_hat(0) = 1` up to rounding.
    pub fn phi_hat(&self, xi: &[f64]) -> f64 {
        debug_assert_eq!(xi.len(), self.n);
        let nn = self.grid_cells as f64;
        let mut out = 1.0;
        for &q in xi {
            let mut s = self.profile[self.half];
            for o in 1..=self.half {
                let c = libm::cos(2.0 * core::f64::consts::PI * o as f64 * q / nn);
                s += (self.profile[self.half + o] + self.profile[self.half - o]) * c;
            }
            out *= s / nn;
        }
        out
    }
}

/// Convolves a measure with the scaled bump kernel on the grid torus
/// (wrapping conserves total mass exactly), returning the smooth density and
/// the kernel.
pub fn mollify(measure: &GridMeasure, n_moll: usize) -> Result<(GridDensity, Mollifier)> {
    let kernel = Mollifier::new(measure.n, measure.cells, n_moll)?;
    let nn = measure.cells;
    let n = measure.n;
    let half = kernel.half as i64;
    let mut values = vec![0.0f64; measure.weights.len()];
    let mut offs = vec![-half; n];
    for (flat, &w) in measure.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let c = unflatten(flat, nn, n);
        offs.iter_mut().for_each(|o| *o = -half);
        'outer: loop {
            let mut kv = w;
            let mut idx = 0usize;
            for a in 0..n {
                kv *= kernel.profile[(offs[a] + half) as usize];
                let t = (c[a] as i64 + offs[a]).rem_euclid(nn as i64) as usize;
                idx = idx * nn + t;
            }
            if kv != 0.0 {
                values[idx] += kv;
            }
            let mut a = n;
            loop {
                if a == 0 {
                    break 'outer;
                }
                a -= 1;
                offs[a] += 1;
                if offs[a] <= half {
                    break;
                }
                offs[a] = -half;
                if a == 0 {
                    break 'outer;
                }
            }
            if offs.iter().all(|&o| o == -half) {
                break;
            }
        }
    }
    Ok((GridDensity { n, cells: nn, values }, kernel))
}

/// The mollification split: returns the smooth part `mu_1 = mu * phi_N` as a
/// density grid and the rough part's transform
/// `mu_2_hat(xi) = mu_hat(xi) (1 - phi_hat(xi))` on the frequency lattice.
pub fn mollify_split(
    measure: &GridMeasure,
    n_moll: usize,
    xi_max: usize,
) -> Result<(GridDensity, FourierSample)> {
    let (mu1, kernel) = mollify(measure, n_moll)?;
    let mu_hat = fourier_transform(measure, xi_max)?;
    let mut values = Vec::with_capacity(mu_hat.len());
    for i in 0..mu_hat.len() {
        let f = mu_hat.freq(i);
        let xf: Vec<f64> = f.iter().map(|&q| q as f64).collect();
        let ph = kernel.phi_hat(&xf);
        values.push(mu_hat.values[i] * (1.0 - ph));
    }
    Ok((mu1, FourierSample { n: measure.n, xi_max: mu_hat.xi_max, values }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lebesgue_cantor_keep_everything() {
        // M=2, T=2 keeps everything: uniform measure
        let p = CantorParams {
            n: 1,
            subdivision: 2,
            keep: 2,
            stages: 3,
            seed: 5,
            mode: CantorMode::IndependentUniform,
        };
        let mu = gen_random_cantor(&p, 8).unwrap();
        for &w in mu.weights() {
            assert!((w - 1.0 / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cantor_mass_bookkeeping() {
        let p = CantorParams {
            n: 1,
            subdivision: 4,
            keep: 2,
            stages: 4,
            seed: 7,
            mode: CantorMode::IndependentUniform,
        };
        let mu = gen_random_cantor(&p, 256).unwrap();
        assert_eq!(mu.support_cells().len(), 16);
        for &c in &mu.support_cells() {
            assert!((mu.weights()[c] - 1.0 / 16.0).abs() < 1e-15);
        }
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cantor_is_deterministic() {
        let p = CantorParams {
            n: 1,
            subdivision: 4,
            keep: 2,
            stages: 5,
            seed: 11,
            mode: CantorMode::IndependentUniform,
        };
        let a = gen_random_cantor(&p, 1024).unwrap();
        let b = gen_random_cantor(&p, 1024).unwrap();
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn cantor_divisibility_guard() {
        let p = CantorParams {
            n: 1,
            subdivision: 4,
            keep: 2,
            stages: 2,
            seed: 0,
            mode: CantorMode::IndependentUniform,
        };
        assert!(gen_random_cantor(&p, 8).is_err()); // 16 does not divide 8
    }

    #[test]
    fn point_mass_transform_is_one() {
        let mu = GridMeasure::point_mass(1, 64, &[0]).unwrap();
        let s = fourier_transform(&mu, 16).unwrap();
        for v in s.values() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_transform_matches_sinc() {
        let mu = GridMeasure::uniform(1, 1024).unwrap();
        // off-lattice check against the closed form |sin(pi xi)/(pi xi)|
        for i in 1..=32 {
            let xi = i as f64 / 2.0;
            let exact = (libm::sin(core::f64::consts::PI * xi) / (core::f64::consts::PI * xi)).abs();
            let got = mu.fourier_at(&[xi]).norm();
            assert!((got - exact).abs() <= 0.01 * exact.max(0.05), "xi={xi}: {got} vs {exact}");
        }
    }

    #[test]
    fn transform_conjugate_symmetry_exact() {
        let p = CantorParams {
            n: 1,
            subdivision: 4,
            keep: 2,
            stages: 4,
            seed: 3,
            mode: CantorMode::IndependentUniform,
        };
        let mu = gen_random_cantor(&p, 256).unwrap();
        let s = fourier_transform(&mu, 64).unwrap();
        for q in 0..=64i64 {
            let a = s.value_at(&[q]).unwrap();
            let b = s.value_at(&[-q]).unwrap();
            assert_eq!(a.re, b.re);
            assert_eq!(a.im, -b.im);
        }
        assert!((s.value_at(&[0]).unwrap().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lebesgue_ball_constant_is_geometric() {
        // the continuum ratio is at most 2^n; deciding membership by cell
        // centers adds one boundary cell, worth 1/(r N) <= 1 at dyadic radii
        let mu = GridMeasure::uniform(1, 256).unwrap();
        let c = ball_condition_constant(&mu, 1.0).unwrap();
        assert!((1.0..=3.0).contains(&c), "c = {c}");
        let per_scale = ball_constants_per_scale(&mu, 1.0).unwrap();
        for (j, v) in &per_scale {
            let r = libm::pow(2.0, -(*j as f64));
            assert!(*v <= 2.0 + 1.0 / (r * 256.0) + 1e-12, "scale {j}: {v}");
            assert!(*v >= 1.0);
        }
    }

    #[test]
    fn point_mass_decay_flat() {
        let mu = GridMeasure::point_mass(1, 256, &[128]).unwrap();
        let s = fourier_transform(&mu, 64).unwrap();
        let fit = decay_exponent_fit(&s, (4.0, 64.0)).unwrap();
        assert!(fit.beta_hat < 0.05, "beta = {}", fit.beta_hat);
    }

    #[test]
    fn uniform_decay_exponent_two() {
        // integer frequencies of the uniform measure are transform zeros, so
        // the fit samples the envelope at half-integers
        let mu = GridMeasure::uniform(1, 2048).unwrap();
        let pts: Vec<(f64, f64)> = (4..128)
            .map(|i| {
                let xi = i as f64 + 0.5;
                (xi, mu.fourier_at(&[xi]).norm())
            })
            .collect();
        let fit = decay_fit_points(&pts, (4.0, 128.0)).unwrap();
        assert!((fit.beta_hat - 2.0).abs() <= 0.2, "beta = {}", fit.beta_hat);
    }

    #[test]
    fn mollify_conserves_mass() {
        let p = CantorParams {
            n: 1,
            subdivision: 4,
            keep: 2,
            stages: 4,
            seed: 9,
            mode: CantorMode::IndependentUniform,
        };
        let mu = gen_random_cantor(&p, 512).unwrap();
        let (mu1, sample) = mollify_split(&mu, 4, 32).unwrap();
        assert!((mu1.integral() - 1.0).abs() < 1e-10);
        // mu2_hat vanishes at 0
        assert!(sample.value_at(&[0]).unwrap().norm() < 1e-10);
    }

    #[test]
    fn mollifier_support_guard() {
        assert!(Mollifier::new(1, 8, 8).is_err());
        assert!(Mollifier::new(1, 32, 8).is_ok());
    }

    #[test]
    fn point_mass_mollified_is_kernel() {
        let mu = GridMeasure::point_mass(1, 256, &[128]).unwrap();
        let (mu1, kernel) = mollify(&mu, 4).unwrap();
        assert!((mu1.integral() - 1.0).abs() < 1e-12);
        assert!((mu1.max_value() - kernel.sup_scaled()).abs() < 1e-12);
    }

    #[test]
    fn point_mass_ball_constant_peaks_at_finest_radius() {
        let mu = GridMeasure::point_mass(1, 256, &[100]).unwrap();
        let scales = ball_constants_per_scale(&mu, 0.5).unwrap();
        // mu(B) = 1 always, so the ratio is r^(-1/2), largest at the finest r
        for (j, v) in &scales {
            assert!((v - libm::pow(2.0, *j as f64 / 2.0)).abs() < 1e-9);
        }
        let c = ball_condition_constant(&mu, 0.5).unwrap();
        assert!((c - 16.0).abs() < 1e-9); // 2^(8/2) at r = 2^-8
    }

    #[test]
    fn radial_product_has_positive_decay_exponent() {
        let p = CantorParams {
            n: 1,
            subdivision: 4,
            keep: 2,
            stages: 3,
            seed: 4,
            mode: CantorMode::RadialProduct,
        };
        let mu = gen_radial_product(&p, 2, 128).unwrap();
        let s = fourier_transform(&mu, 64).unwrap();
        let fit = decay_exponent_fit(&s, (8.0, 64.0)).unwrap();
        assert!(fit.beta_hat > 0.0, "beta = {}", fit.beta_hat);
    }

    #[test]
    fn radial_product_symmetry() {
        let p = CantorParams {
            n: 1,
            subdivision: 4,
            keep: 2,
            stages: 3,
            seed: 2,
            mode: CantorMode::RadialProduct,
        };
        let mu = gen_radial_product(&p, 2, 64).unwrap();
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
        let w = mu.weights();
        let nn = 64usize;
        // reflect both axes: cell (i, j) -> (N-1-i, N-1-j)
        for i in 0..nn {
            for j in 0..nn {
                let a = w[i * nn + j];
                let b = w[(nn - 1 - i) * nn + (nn - 1 - j)];
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
