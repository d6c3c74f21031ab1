//! Equiangular sampling grids on the sphere, exact quadrature and the
//! containers for sampled signals, feature maps and dense labels.
//!
//! A grid of bandlimit `B` has `2B` colatitude rings at
//! `theta_j = pi (2j + 1) / (4B)` (no pole samples) and `2B` azimuths at
//! `phi_k = 2 pi k / (2B)`. Ring weights are chosen so that
//! `sum_j w_j P_l(cos theta_j) = 2 delta_{l0}` for every `l < 2B`, which makes
//! the discrete integral exact for integrands of degree below `2B`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Maximum represented degree plus one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bandlimit(usize);

impl Bandlimit {
    pub fn new(b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidBandlimit(b));
        }
        Ok(Bandlimit(b))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    /// Number of samples along each grid axis (`2B`).
    #[inline]
    pub fn resolution(self) -> usize {
        2 * self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphericalGrid {
    bandlimit: Bandlimit,
    thetas: Vec<f64>,
    phis: Vec<f64>,
    weights: Vec<f64>,
    cos_thetas: Vec<f64>,
}

impl SphericalGrid {
    #[inline]
    pub fn bandlimit(&self) -> usize {
        self.bandlimit.get()
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.bandlimit.resolution()
    }

    /// Total node count `(2B)^2`.
    #[inline]
    pub fn len(&self) -> usize {
        let n = self.resolution();
        n * n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn cos_thetas(&self) -> &[f64] {
        &self.cos_thetas
    }

    /// Colatitude quadrature weights; they sum to 2.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Solid angle carried by one node on ring `j`; summing over the grid gives `4 pi`.
    #[inline]
    pub fn node_area(&self, j: usize) -> f64 {
        self.azimuth_step() * self.weights[j]
    }

    #[inline]
    pub fn azimuth_step(&self) -> f64 {
        2.0 * PI / self.resolution() as f64
    }

    /// Unit vector of node `(j, k)`.
    #[inline]
    pub fn direction(&self, j: usize, k: usize) -> [f64; 3] {
        let (st, ct) = self.thetas[j].sin_cos();
        let (sp, cp) = self.phis[k].sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Iterator over all node directions in colatitude-major order.
    pub fn directions(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        let n = self.resolution();
        (0..n).flat_map(move |j| (0..n).map(move |k| self.direction(j, k)))
    }

    /// Index of the grid node closest to the direction `(theta, phi)`.
    pub fn nearest_node(&self, theta: f64, phi: f64) -> usize {
        let n = self.resolution() as f64;
        let j = ((theta * n / PI) - 0.5).round().clamp(0.0, n - 1.0) as usize;
        let k = (phi.rem_euclid(2.0 * PI) * n / (2.0 * PI)).round() as usize % self.resolution();
        j * self.resolution() + k
    }
}

static GRIDS: OnceLock<Mutex<HashMap<usize, Arc<SphericalGrid>>>> = OnceLock::new();

/// Shared grid for bandlimit `b`. Grids are built once per bandlimit and cached.
pub fn make_grid(b: usize) -> Result<Arc<SphericalGrid>> {
    let bandlimit = Bandlimit::new(b)?;
    let cache = GRIDS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(grid) = guard.get(&b) {
        return Ok(Arc::clone(grid));
    }
    let grid = Arc::new(build_grid(bandlimit)?);
    guard.insert(b, Arc::clone(&grid));
    Ok(grid)
}

fn build_grid(bandlimit: Bandlimit) -> Result<SphericalGrid> {
    let b = bandlimit.get();
    let n = bandlimit.resolution();
    let thetas: Vec<f64> = (0..n)
        .map(|j| PI * (2 * j + 1) as f64 / (4 * b) as f64)
        .collect();
    let phis: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
    let weights = solve_quadrature(&thetas)?;
    let cos_thetas = thetas.iter().map(|t| t.cos()).collect();
    Ok(SphericalGrid {
        bandlimit,
        thetas,
        phis,
        weights,
        cos_thetas,
    })
}

/// Legendre polynomials `P_0..P_{n-1}` at `x` (unnormalized, `P_l(1) = 1`).
pub(crate) fn legendre_series(n: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; n];
    if n > 0 {
        p[0] = 1.0;
    }
    if n > 1 {
        p[1] = x;
    }
    for l in 2..n {
        let lf = l as f64;
        p[l] = ((2.0 * lf - 1.0) * x * p[l - 1] - (lf - 1.0) * p[l - 2]) / lf;
    }
    p
}

/// Solves the Legendre–Vandermonde system `sum_j w_j P_l(cos theta_j) = 2 delta_{l0}`,
/// `l = 0..n-1`, for the ring weights of `n` distinct colatitudes.
pub fn solve_quadrature(thetas: &[f64]) -> Result<Vec<f64>> {
    let n = thetas.len();
    if n == 0 {
        return Err(Error::Quadrature("empty node list".into()));
    }
    for (j, &t) in thetas.iter().enumerate() {
        if !(t > 0.0 && t < PI) {
            return Err(Error::Domain(format!("node {j} at colatitude {t} outside (0, pi)")));
        }
    }

    // Row l holds P_l at every node; augmented column is the right-hand side.
    let cols = n + 1;
    let mut a = vec![0.0; n * cols];
    for (j, &t) in thetas.iter().enumerate() {
        for (l, p) in legendre_series(n, t.cos()).into_iter().enumerate() {
            a[l * cols + j] = p;
        }
    }
    a[n] = 2.0;

    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r * cols + col].abs().total_cmp(&a[s * cols + col].abs()))
            .unwrap_or(col);
        if a[pivot * cols + col].abs() < 1e-300 {
            return Err(Error::Internal(format!(
                "singular Legendre-Vandermonde system at column {col}"
            )));
        }
        if pivot != col {
            for c in 0..cols {
                a.swap(pivot * cols + c, col * cols + c);
            }
        }
        let diag = a[col * cols + col];
        for r in col + 1..n {
            let factor = a[r * cols + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for c in col..cols {
                a[r * cols + c] -= factor * a[col * cols + c];
            }
        }
    }

    let mut w = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = a[r * cols + n];
        for c in r + 1..n {
            acc -= a[r * cols + c] * w[c];
        }
        w[r] = acc / a[r * cols + r];
    }

    if let Some((j, &v)) = w.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Quadrature(format!("weight {j} is not positive ({v})")));
    }
    Ok(w)
}

/// Closed-form weights for the offset equiangular nodes (Fejér's first rule).
/// Agrees with [`solve_quadrature`] on `make_grid` nodes.
pub fn closed_form_weights(b: usize) -> Result<Vec<f64>> {
    Bandlimit::new(b)?;
    let n = 2 * b;
    Ok((0..n)
        .map(|j| {
            let theta = PI * (2 * j + 1) as f64 / (2 * n) as f64;
            let s: f64 = (1..=n / 2)
                .map(|k| {
                    let kf = k as f64;
                    (2.0 * kf * theta).cos() / (4.0 * kf * kf - 1.0)
                })
                .sum();
            2.0 / n as f64 * (1.0 - 2.0 * s)
        })
        .collect())
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Domain(format!("non-finite sample at index {i}"))),
        None => Ok(()),
    }
}

/// Real samples of one function on a grid, colatitude-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalSignal {
    grid: Arc<SphericalGrid>,
    values: Vec<f64>,
}

impl SphericalSignal {
    pub fn new(grid: Arc<SphericalGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "signal has {} samples, grid of bandlimit {} needs {}",
                values.len(),
                grid.bandlimit(),
                grid.len()
            )));
        }
        check_finite(&values)?;
        Ok(SphericalSignal { grid, values })
    }

    pub fn zeros(grid: Arc<SphericalGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        SphericalSignal { grid, values }
    }

    /// Samples `f(theta, phi)` at every node.
    pub fn from_fn(grid: Arc<SphericalGrid>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for &t in grid.thetas() {
            for &p in grid.phis() {
                values.push(f(t, p));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn bandlimit(&self) -> usize {
        self.grid.bandlimit()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.grid.resolution() + k]
    }
}

/// `C` channels of spherical signals on a shared grid, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    grid: Arc<SphericalGrid>,
    channels: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(grid: Arc<SphericalGrid>, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::ShapeMismatch("feature map needs at least one channel".into()));
        }
        if values.len() != channels * grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} channels at bandlimit {}",
                values.len(),
                channels,
                grid.bandlimit()
            )));
        }
        check_finite(&values)?;
        Ok(FeatureMap {
            grid,
            channels,
            values,
        })
    }

    pub fn zeros(grid: Arc<SphericalGrid>, channels: usize) -> Self {
        let values = vec![0.0; channels * grid.len()];
        FeatureMap {
            grid,
            channels,
            values,
        }
    }

    pub fn from_signals(signals: &[SphericalSignal]) -> Result<Self> {
        let first = signals
            .first()
            .ok_or_else(|| Error::ShapeMismatch("no channels".into()))?;
        let grid = Arc::clone(first.grid());
        let mut values = Vec::with_capacity(signals.len() * grid.len());
        for s in signals {
            if s.bandlimit() != grid.bandlimit() {
                return Err(Error::BandlimitMismatch {
                    expected: grid.bandlimit(),
                    actual: s.bandlimit(),
                });
            }
            values.extend_from_slice(s.values());
        }
        Ok(FeatureMap {
            grid,
            channels: signals.len(),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn bandlimit(&self) -> usize {
        self.grid.bandlimit()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_signal(&self, c: usize) -> SphericalSignal {
        SphericalSignal {
            grid: Arc::clone(&self.grid),
            values: self.channel(c).to_vec(),
        }
    }
}

/// Dense integer labels on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    grid: Arc<SphericalGrid>,
    num_classes: usize,
    labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(grid: Arc<SphericalGrid>, num_classes: usize, labels: Vec<u16>) -> Result<Self> {
        if num_classes == 0 || num_classes > u16::MAX as usize + 1 {
            return Err(Error::ShapeMismatch(format!("invalid class count {num_classes}")));
        }
        if labels.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a grid of {} nodes",
                labels.len(),
                grid.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Domain(format!("label {bad} >= num_classes {num_classes}")));
        }
        Ok(LabelMap {
            grid,
            num_classes,
            labels,
        })
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn bandlimit(&self) -> usize {
        self.grid.bandlimit()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }
}

/// Quadrature integral over the sphere; exact for integrands of degree below `2B`.
pub fn integrate(s: &SphericalSignal) -> f64 {
    integrate_values(s.grid(), s.values())
}

pub(crate) fn integrate_values(grid: &SphericalGrid, values: &[f64]) -> f64 {
    let n = grid.resolution();
    let ring_sums = values.chunks_exact(n).map(|row| row.iter().sum::<f64>());
    grid.azimuth_step()
        * ring_sums
            .zip(grid.weights())
            .map(|(s, w)| s * w)
            .sum::<f64>()
}
