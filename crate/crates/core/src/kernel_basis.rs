//! Joint grid over (arm means, observed context), the squared-exponential
//! kernel, and its truncated Karhunen–Loève basis.
//!
//! The grid is a Cartesian product laid out with the arm-mean axes varying
//! fastest, followed by the context axes. On such a grid the SE kernel
//! matrix is a Kronecker product of per-axis kernel matrices, so its
//! eigenpairs are products of per-axis eigenpairs. Only per-axis matrices
//! are ever decomposed.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{CocoError, Result};

/// Default upper bound on the number of grid points.
pub const DEFAULT_MAX_GRID_POINTS: usize = 2_000_000;

/// Eigenvalues in `(-EIGEN_CLAMP_TOL, 0)` are rounding noise and clamp to zero.
pub const EIGEN_CLAMP_TOL: f64 = 1e-10;

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// `n` uniformly spaced points including both endpoints.
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        let step = (self.hi - self.lo) / (n - 1) as f64;
        (0..n)
            .map(|i| if i == n - 1 { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Discretization recipe for the joint (μ, x_obs) space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub arms: usize,
    /// Shared range for every arm-mean axis.
    pub mu_range: Interval,
    pub mu_points_per_dim: usize,
    /// One range per observed-context dimension; may be empty.
    pub context_ranges: Vec<Interval>,
    pub context_points_per_dim: Vec<usize>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.arms == 0 {
            return Err(CocoError::config("grid.arms", "must be positive"));
        }
        check_interval("grid.mu_range", &self.mu_range)?;
        if self.mu_points_per_dim < 2 {
            return Err(CocoError::config("grid.mu_points_per_dim", "must be at least 2"));
        }
        if self.context_ranges.len() != self.context_points_per_dim.len() {
            return Err(CocoError::config(
                "grid.context_points_per_dim",
                format!(
                    "{} counts given for {} context ranges",
                    self.context_points_per_dim.len(),
                    self.context_ranges.len()
                ),
            ));
        }
        for (d, r) in self.context_ranges.iter().enumerate() {
            check_interval(&format!("grid.context_ranges[{d}]"), r)?;
        }
        for (d, &n) in self.context_points_per_dim.iter().enumerate() {
            if n < 2 {
                return Err(CocoError::config(
                    format!("grid.context_points_per_dim[{d}]"),
                    "must be at least 2",
                ));
            }
        }
        Ok(())
    }
}

fn check_interval(field: &str, r: &Interval) -> Result<()> {
    if !(r.lo.is_finite() && r.hi.is_finite() && r.lo < r.hi) {
        return Err(CocoError::config(
            field,
            format!("lower bound {} must be strictly below upper bound {}", r.lo, r.hi),
        ));
    }
    Ok(())
}

/// A regular product grid over (μ_1..μ_K, x_1..x_d).
#[derive(Debug, Clone)]
pub struct Grid {
    arms: usize,
    mu_axis: Vec<f64>,
    context_axes: Vec<Vec<f64>>,
    /// Point counts for every axis, μ axes first.
    shape: Vec<usize>,
    mu_len: usize,
    context_len: usize,
    /// `mu_len × arms` coordinates of the μ-subgrid.
    mu_points: Vec<f64>,
    /// Lowest-index argmax arm at each μ-subgrid point.
    best_arm: Vec<usize>,
    best_mean: Vec<f64>,
}

/// Builds the product grid, rejecting grids with more than
/// [`DEFAULT_MAX_GRID_POINTS`] points.
pub fn build_grid(spec: &GridSpec) -> Result<Grid> {
    build_grid_with_limit(spec, DEFAULT_MAX_GRID_POINTS)
}

pub fn build_grid_with_limit(spec: &GridSpec, max_points: usize) -> Result<Grid> {
    spec.validate()?;
    let mut shape = vec![spec.mu_points_per_dim; spec.arms];
    shape.extend_from_slice(&spec.context_points_per_dim);

    let mut total: usize = 1;
    for &n in &shape {
        total = match total.checked_mul(n) {
            Some(v) if v <= max_points => v,
            _ => {
                let product = shape
                    .iter()
                    .map(|n| n.to_string())
                    .collect::<Vec<_>>()
                    .join("·");
                return Err(CocoError::config(
                    "grid",
                    format!("point count {product} exceeds the maximum of {max_points}"),
                ));
            }
        };
    }

    let mu_axis = spec.mu_range.linspace(spec.mu_points_per_dim);
    let context_axes: Vec<Vec<f64>> = spec
        .context_ranges
        .iter()
        .zip(&spec.context_points_per_dim)
        .map(|(r, &n)| r.linspace(n))
        .collect();
    let mu_len = spec.mu_points_per_dim.pow(spec.arms as u32);
    let context_len = spec.context_points_per_dim.iter().product::<usize>();

    let k = spec.arms;
    let n = spec.mu_points_per_dim;
    let mut mu_points = vec![0.0; mu_len * k];
    let mut best_arm = vec![0; mu_len];
    let mut best_mean = vec![0.0; mu_len];
    for j in 0..mu_len {
        let mut rem = j;
        let row = &mut mu_points[j * k..(j + 1) * k];
        for value in row.iter_mut() {
            *value = mu_axis[rem % n];
            rem /= n;
        }
        let (arm, max) = argmax_lowest(row);
        best_arm[j] = arm;
        best_mean[j] = max;
    }

    Ok(Grid {
        arms: k,
        mu_axis,
        context_axes,
        shape,
        mu_len,
        context_len,
        mu_points,
        best_arm,
        best_mean,
    })
}

/// Index and value of the maximum, ties resolved to the lowest index.
pub(crate) fn argmax_lowest(xs: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    (best, xs[best])
}

impl Grid {
    pub fn arms(&self) -> usize {
        self.arms
    }

    /// Total number of grid points L.
    pub fn len(&self) -> usize {
        self.mu_len * self.context_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of points in the μ-subgrid at one context.
    pub fn mu_len(&self) -> usize {
        self.mu_len
    }

    /// Number of distinct context grid values.
    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn context_dims(&self) -> usize {
        self.context_axes.len()
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn mu_axis(&self) -> &[f64] {
        &self.mu_axis
    }

    pub fn context_axes(&self) -> &[Vec<f64>] {
        &self.context_axes
    }

    /// Coordinates of every axis, μ axes first.
    pub fn axes(&self) -> Vec<&[f64]> {
        let mut axes: Vec<&[f64]> = vec![&self.mu_axis; self.arms];
        axes.extend(self.context_axes.iter().map(|a| a.as_slice()));
        axes
    }

    /// Arm-mean vector of μ-subgrid point `j`.
    pub fn mu_point(&self, j: usize) -> &[f64] {
        &self.mu_points[j * self.arms..(j + 1) * self.arms]
    }

    pub fn mu(&self, j: usize, arm: usize) -> f64 {
        self.mu_points[j * self.arms + arm]
    }

    pub fn best_arm(&self, j: usize) -> usize {
        self.best_arm[j]
    }

    pub fn best_mean(&self, j: usize) -> f64 {
        self.best_mean[j]
    }

    /// Context values for flat context index `c`.
    pub fn context_point(&self, c: usize) -> Vec<f64> {
        let mut rem = c;
        self.context_axes
            .iter()
            .map(|axis| {
                let v = axis[rem % axis.len()];
                rem /= axis.len();
                v
            })
            .collect()
    }

    /// Full coordinates of grid point ℓ.
    pub fn point(&self, l: usize) -> Vec<f64> {
        let (j, c) = (l % self.mu_len, l / self.mu_len);
        let mut z = self.mu_point(j).to_vec();
        z.extend(self.context_point(c));
        z
    }

    /// Flat index of (μ multi-index, context index).
    pub fn flat_index(&self, mu_index: &[usize], context_index: usize) -> usize {
        debug_assert_eq!(mu_index.len(), self.arms);
        let n = self.mu_axis.len();
        let j = mu_index.iter().rev().fold(0, |acc, &i| acc * n + i);
        context_index * self.mu_len + j
    }

    /// Inverse of [`Grid::flat_index`].
    pub fn split_index(&self, l: usize) -> (Vec<usize>, usize) {
        let n = self.mu_axis.len();
        let mut rem = l % self.mu_len;
        let mu_index = (0..self.arms)
            .map(|_| {
                let i = rem % n;
                rem /= n;
                i
            })
            .collect();
        (mu_index, l / self.mu_len)
    }

    /// Flat index range of the μ-subgrid at context `c`.
    pub fn context_slice(&self, c: usize) -> std::ops::Range<usize> {
        c * self.mu_len..(c + 1) * self.mu_len
    }

    /// Context index whose grid values are nearest to `x_obs`, per axis.
    pub fn nearest_context_index(&self, x_obs: &[f64]) -> usize {
        let mut index = 0;
        let mut stride = 1;
        for (axis, &x) in self.context_axes.iter().zip(x_obs) {
            let mut best = 0;
            for (i, &v) in axis.iter().enumerate() {
                if (v - x).abs() < (axis[best] - x).abs() {
                    best = i;
                }
            }
            index += best * stride;
            stride *= axis.len();
        }
        index
    }

    /// μ-subgrid point nearest to an arbitrary mean vector.
    pub fn nearest_mu_index(&self, mu: &[f64]) -> usize {
        let n = self.mu_axis.len();
        let lo = self.mu_axis[0];
        let step = self.mu_axis[1] - self.mu_axis[0];
        mu.iter().rev().fold(0, |acc, &m| {
            let i = ((m - lo) / step).round().clamp(0.0, (n - 1) as f64) as usize;
            acc * n + i
        })
    }
}

/// Squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelParams {
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            lengthscale: 0.7,
            signal_variance: 1.0,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(CocoError::config("kernel.lengthscale", "must be positive"));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(CocoError::config("kernel.signal_variance", "must be positive"));
        }
        Ok(())
    }
}

/// σ_f² · exp(−‖z − z′‖² / (2ℓ²)).
pub fn se_kernel(z: &[f64], z_prime: &[f64], params: &KernelParams) -> f64 {
    debug_assert_eq!(z.len(), z_prime.len());
    let sq: f64 = z.iter().zip(z_prime).map(|(a, b)| (a - b) * (a - b)).sum();
    params.signal_variance * (-sq / (2.0 * params.lengthscale * params.lengthscale)).exp()
}

/// The grid kernel matrix held as σ_f² · K_1 ⊗ … ⊗ K_D over unit-variance
/// per-axis factors.
#[derive(Debug, Clone)]
pub struct KroneckerKernel {
    signal_variance: f64,
    /// Factor for axis d; axis 0 varies fastest in the flat layout.
    factors: Vec<DMatrix<f64>>,
}

impl KroneckerKernel {
    pub fn new(grid: &Grid, params: &KernelParams) -> Self {
        let unit = KernelParams {
            lengthscale: params.lengthscale,
            signal_variance: 1.0,
        };
        let factors = grid
            .axes()
            .into_iter()
            .map(|axis| {
                DMatrix::from_fn(axis.len(), axis.len(), |i, j| {
                    se_kernel(&[axis[i]], &[axis[j]], &unit)
                })
            })
            .collect();
        Self {
            signal_variance: params.signal_variance,
            factors,
        }
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.iter().map(|f| f.nrows()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// K·v by successive mode products, never forming K.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.len());
        let mut cur = v.to_vec();
        let mut next = vec![0.0; cur.len()];
        let mut inner = 1;
        for factor in &self.factors {
            let n = factor.nrows();
            let outer = cur.len() / (inner * n);
            for o in 0..outer {
                for i in 0..n {
                    for s in 0..inner {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += factor[(i, j)] * cur[(o * n + j) * inner + s];
                        }
                        next[(o * n + i) * inner + s] = acc;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
            inner *= n;
        }
        for x in &mut cur {
            *x *= self.signal_variance;
        }
        cur
    }
}

/// Truncated eigenbasis of the grid kernel matrix.
#[derive(Debug, Clone)]
pub struct KLBasis {
    len: usize,
    eigenvalues: Vec<f64>,
    /// `M × L`, row m is φ_m.
    eigenvectors: Vec<f64>,
    /// `M × L`, row m is √λ_m φ_m.
    scaled: Vec<f64>,
    /// Per-axis eigen-index of each retained pair.
    multi_indices: Vec<Vec<usize>>,
}

struct AxisEigen {
    values: Vec<f64>,
    /// Column i is the eigenvector for `values[i]`, sorted descending.
    vectors: DMatrix<f64>,
}

fn axis_eigen(axis: usize, factor: &DMatrix<f64>) -> Result<AxisEigen> {
    let n = factor.nrows();
    let eig = SymmetricEigen::try_new(factor.clone(), 1e-15, 10_000)
        .ok_or(CocoError::Eigen { axis, residual: f64::INFINITY })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut value = eig.eigenvalues[src];
        if value < 0.0 {
            if value > -EIGEN_CLAMP_TOL {
                value = 0.0;
            } else {
                return Err(CocoError::NegativeEigenvalue { value });
            }
        }
        values.push(value);
        let mut col = eig.eigenvectors.column(src).into_owned();
        // Sign convention: first non-negligible entry positive.
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                col = -col;
            }
        }
        vectors.set_column(dst, &col);
    }

    let residual = (factor * &vectors - &vectors * DMatrix::from_diagonal(&values.clone().into()))
        .abs()
        .max();
    if residual > 1e-9 * n as f64 {
        return Err(CocoError::Eigen { axis, residual });
    }
    Ok(AxisEigen { values, vectors })
}

/// Top-`m` eigenpairs of the grid kernel matrix, assembled from per-axis
/// eigendecompositions. Ties between equal products are broken
/// lexicographically on the per-axis eigen-index.
pub fn compute_kl_basis(grid: &Grid, params: &KernelParams, m: usize) -> Result<KLBasis> {
    params.validate()?;
    let len = grid.len();
    if m == 0 || m > len {
        return Err(CocoError::config(
            "truncation",
            format!("must lie in 1..={len} for this grid, got {m}"),
        ));
    }
    let kernel = KroneckerKernel::new(grid, params);
    let axes: Vec<AxisEigen> = kernel
        .factors()
        .iter()
        .enumerate()
        .map(|(d, f)| axis_eigen(d, f))
        .collect::<Result<_>>()?;
    let shape: Vec<usize> = axes.iter().map(|a| a.values.len()).collect();

    // Every product eigenvalue, keyed by its multi-index.
    let mut candidates: Vec<(f64, Vec<usize>)> = Vec::with_capacity(len);
    let mut idx = vec![0usize; shape.len()];
    loop {
        let value = idx
            .iter()
            .zip(&axes)
            .fold(params.signal_variance, |acc, (&i, a)| acc * a.values[i]);
        candidates.push((value, idx.clone()));
        if !increment(&mut idx, &shape) {
            break;
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    candidates.truncate(m);

    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenvectors = vec![0.0; m * len];
    let mut scaled = vec![0.0; m * len];
    let mut multi_indices = Vec::with_capacity(m);
    for (row, (value, multi)) in candidates.into_iter().enumerate() {
        let phi = &mut eigenvectors[row * len..(row + 1) * len];
        fill_tensor_product(phi, &axes, &multi);
        let root = value.sqrt();
        for (s, p) in scaled[row * len..(row + 1) * len].iter_mut().zip(phi.iter()) {
            *s = root * p;
        }
        eigenvalues.push(value);
        multi_indices.push(multi);
    }

    Ok(KLBasis {
        len,
        eigenvalues,
        eigenvectors,
        scaled,
        multi_indices,
    })
}

/// Odometer increment over `shape`, axis 0 fastest. Returns false on wrap.
fn increment(idx: &mut [usize], shape: &[usize]) -> bool {
    for (i, n) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < *n {
            return true;
        }
        *i = 0;
    }
    false
}

fn fill_tensor_product(out: &mut [f64], axes: &[AxisEigen], multi: &[usize]) {
    out[0] = 1.0;
    let mut filled = 1;
    for (axis, &k) in axes.iter().zip(multi) {
        let col = axis.vectors.column(k);
        let n = col.len();
        // Expand in place from the back so earlier blocks stay intact.
        for i in (0..n).rev() {
            let c = col[i];
            for s in 0..filled {
                out[i * filled + s] = out[s] * c;
            }
        }
        filled *= n;
    }
}

impl KLBasis {
    /// Truncation order M.
    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Grid size L.
    pub fn grid_len(&self) -> usize {
        self.len
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, m: usize) -> &[f64] {
        &self.eigenvectors[m * self.len..(m + 1) * self.len]
    }

    /// √λ_m φ_m.
    pub fn scaled_eigenvector(&self, m: usize) -> &[f64] {
        &self.scaled[m * self.len..(m + 1) * self.len]
    }

    pub fn multi_index(&self, m: usize) -> &[usize] {
        &self.multi_indices[m]
    }

    /// Builds a basis from explicit eigenpairs; `vectors[m]` has length L.
    pub fn from_parts(eigenvalues: Vec<f64>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if eigenvalues.len() != vectors.len() || vectors.is_empty() {
            return Err(CocoError::InvalidInput(
                "eigenvalue and eigenvector counts differ or are zero".into(),
            ));
        }
        let len = vectors[0].len();
        if vectors.iter().any(|v| v.len() != len) {
            return Err(CocoError::InvalidInput("eigenvectors differ in length".into()));
        }
        if let Some(&value) = eigenvalues.iter().find(|&&v| v < 0.0) {
            return Err(CocoError::NegativeEigenvalue { value });
        }
        let mut scaled = Vec::with_capacity(len * vectors.len());
        for (v, &lambda) in vectors.iter().zip(&eigenvalues) {
            scaled.extend(v.iter().map(|x| lambda.sqrt() * x));
        }
        Ok(Self {
            len,
            multi_indices: (0..eigenvalues.len()).map(|m| vec![m]).collect(),
            eigenvalues,
            eigenvectors: vectors.concat(),
            scaled,
        })
    }
}

/// Log-density values f = Σ_m √λ_m ξ_m φ_m over the whole grid.
pub fn eval_particle(xi: &[f64], basis: &KLBasis) -> Vec<f64> {
    let mut f = vec![0.0; basis.len];
    eval_particle_into(xi, basis, &mut f);
    f
}

pub fn eval_particle_into(xi: &[f64], basis: &KLBasis, out: &mut [f64]) {
    assert_eq!(xi.len(), basis.order(), "coefficient length must equal M");
    out.iter_mut().for_each(|x| *x = 0.0);
    for (m, &coef) in xi.iter().enumerate() {
        if coef == 0.0 {
            continue;
        }
        for (o, s) in out.iter_mut().zip(basis.scaled_eigenvector(m)) {
            *o += coef * s;
        }
    }
}

/// Adjoint of [`eval_particle`]: maps a gradient over grid values to a
/// gradient over coefficients, g_m = √λ_m φ_mᵀ d.
pub fn project_gradient(grid_grad: &[f64], basis: &KLBasis) -> Vec<f64> {
    (0..basis.order())
        .map(|m| {
            basis
                .scaled_eigenvector(m)
                .iter()
                .zip(grid_grad)
                .map(|(s, d)| s * d)
                .sum()
        })
        .collect()
}
