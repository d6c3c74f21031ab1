//! Zonal spectral filters parameterized by a handful of anchor values.
//!
//! A filter of bandlimit `B` is one real gain per degree. Its `K` anchors sit
//! at evenly spaced (real-valued) degrees `i (B - 1) / (K - 1)` and the gains in
//! between are linear interpolants, so few anchors give a smooth spectrum and
//! hence a spatially compact kernel. `K = B` places one anchor per degree.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::harmonics::{ShtPlan, SpectralCoeffs};
use crate::sphgrid::{legendre_series, SphericalGrid, SphericalSignal};

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorFilter {
    anchors: Vec<f64>,
    bandlimit: usize,
}

impl AnchorFilter {
    pub fn new(anchors: Vec<f64>, bandlimit: usize) -> Result<Self> {
        let k = anchors.len();
        if k < 2 {
            return Err(Error::Config(format!("anchor filter needs at least 2 anchors, got {k}")));
        }
        if k > bandlimit {
            return Err(Error::Config(format!(
                "{k} anchors exceed bandlimit {bandlimit}"
            )));
        }
        Ok(AnchorFilter { anchors, bandlimit })
    }

    pub fn anchors(&self) -> &[f64] {
        &self.anchors
    }

    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    /// Degree position of anchor `i`.
    pub fn position(&self, i: usize) -> f64 {
        anchor_position(i, self.anchors.len(), self.bandlimit)
    }
}

fn anchor_position(i: usize, k: usize, b: usize) -> f64 {
    i as f64 * (b - 1) as f64 / (k - 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeGains {
    gains: Vec<f64>,
}

impl DegreeGains {
    pub fn new(gains: Vec<f64>) -> Result<Self> {
        if gains.is_empty() || gains.iter().any(|g| !g.is_finite()) {
            return Err(Error::Domain("gains must be finite and non-empty".into()));
        }
        Ok(DegreeGains { gains })
    }

    pub fn ones(b: usize) -> Self {
        DegreeGains { gains: vec![1.0; b] }
    }

    pub fn bandlimit(&self) -> usize {
        self.gains.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gains
    }

    /// Pointwise product, the gains of two filters applied in sequence.
    pub fn product(&self, other: &DegreeGains) -> Result<DegreeGains> {
        if self.bandlimit() != other.bandlimit() {
            return Err(Error::BandlimitMismatch {
                expected: self.bandlimit(),
                actual: other.bandlimit(),
            });
        }
        DegreeGains::new(self.gains.iter().zip(&other.gains).map(|(a, b)| a * b).collect())
    }
}

/// Interpolation stencil: degree `l` takes `(1 - t) a_i + t a_{i+1}`; returns `(i, t)` per degree.
#[derive(Debug, Clone, PartialEq)]
pub struct GainInterpolation {
    anchors: usize,
    stencil: Vec<(usize, f64)>,
}

impl GainInterpolation {
    pub fn new(anchors: usize, bandlimit: usize) -> Result<Self> {
        if anchors < 2 || anchors > bandlimit {
            return Err(Error::Config(format!(
                "{anchors} anchors invalid for bandlimit {bandlimit}"
            )));
        }
        let stencil = (0..bandlimit)
            .map(|l| {
                let t = l as f64 * (anchors - 1) as f64 / (bandlimit - 1) as f64;
                let i = (t.floor() as usize).min(anchors - 2);
                let frac = t - i as f64;
                (i, frac)
            })
            .collect();
        Ok(GainInterpolation { anchors, stencil })
    }

    pub fn anchors(&self) -> usize {
        self.anchors
    }

    pub fn bandlimit(&self) -> usize {
        self.stencil.len()
    }

    /// Gains from anchor values.
    pub fn apply(&self, anchors: &[f64], gains: &mut [f64]) {
        for (g, &(i, t)) in gains.iter_mut().zip(&self.stencil) {
            *g = if t == 0.0 {
                anchors[i]
            } else {
                (1.0 - t) * anchors[i] + t * anchors[i + 1]
            };
        }
    }

    /// Transpose of [`GainInterpolation::apply`]: accumulates gain gradients onto anchors.
    pub fn apply_transpose(&self, gain_grads: &[f64], anchor_grads: &mut [f64]) {
        for (g, &(i, t)) in gain_grads.iter().zip(&self.stencil) {
            anchor_grads[i] += (1.0 - t) * g;
            if t != 0.0 {
                anchor_grads[i + 1] += t * g;
            }
        }
    }
}

/// Per-degree gains obtained by linear interpolation between anchors.
pub fn interpolate_gains(f: &AnchorFilter) -> Result<DegreeGains> {
    let interp = GainInterpolation::new(f.anchors.len(), f.bandlimit)?;
    let mut gains = vec![0.0; f.bandlimit];
    interp.apply(&f.anchors, &mut gains);
    DegreeGains::new(gains)
}

/// Zonal convolution in the spectral domain: `out_l^m = k_l f_l^m`.
pub fn spectral_conv(c: &SpectralCoeffs, g: &DegreeGains) -> Result<SpectralCoeffs> {
    if c.bandlimit() != g.bandlimit() {
        return Err(Error::BandlimitMismatch {
            expected: c.bandlimit(),
            actual: g.bandlimit(),
        });
    }
    let mut out = c.clone();
    for (l, &k) in g.as_slice().iter().enumerate() {
        out.degree_mut(l).iter_mut().for_each(|z| *z *= k);
    }
    Ok(out)
}

/// Drops every degree `l >= b_new`.
pub fn truncate(c: &SpectralCoeffs, b_new: usize) -> Result<SpectralCoeffs> {
    if b_new == 0 || b_new > c.bandlimit() {
        return Err(Error::Domain(format!(
            "cannot truncate bandlimit {} to {b_new}",
            c.bandlimit()
        )));
    }
    SpectralCoeffs::from_vec(b_new, c.as_slice()[..b_new * b_new].to_vec())
}

/// Appends zero coefficients up to bandlimit `b_new`.
pub fn zeropad(c: &SpectralCoeffs, b_new: usize) -> Result<SpectralCoeffs> {
    if b_new < c.bandlimit() {
        return Err(Error::Domain(format!(
            "cannot zero-pad bandlimit {} to {b_new}",
            c.bandlimit()
        )));
    }
    let mut data = c.as_slice().to_vec();
    data.resize(b_new * b_new, Complex64::default());
    SpectralCoeffs::from_vec(b_new, data)
}

/// The zonal kernel `h(theta) = sum_l k_l (2l + 1) / (4 pi) P_l(cos theta)` on `grid`.
pub fn render_zonal(g: &DegreeGains, grid: &Arc<SphericalGrid>) -> Result<SphericalSignal> {
    if g.bandlimit() != grid.bandlimit() {
        return Err(Error::BandlimitMismatch {
            expected: grid.bandlimit(),
            actual: g.bandlimit(),
        });
    }
    let n = grid.resolution();
    let mut values = Vec::with_capacity(grid.len());
    for &x in grid.cos_thetas() {
        let p = legendre_series(g.bandlimit(), x);
        let h: f64 = g
            .as_slice()
            .iter()
            .zip(&p)
            .enumerate()
            .map(|(l, (k, p))| k * (2 * l + 1) as f64 / (4.0 * PI) * p)
            .sum();
        values.extend(std::iter::repeat_n(h, n));
    }
    SphericalSignal::new(Arc::clone(grid), values)
}

/// Moves batched half spectra (`[entry][signal]`) between bandlimits, truncating or
/// zero-padding degrees.
pub(crate) fn resample_half(from: &ShtPlan, to: &ShtPlan, data: &[Complex64], n_sig: usize) -> Vec<Complex64> {
    let b_to = to.bandlimit();
    let b_min = from.bandlimit().min(b_to);
    let mut out = vec![Complex64::default(); crate::harmonics::half_len(b_to) * n_sig];
    for m in 0..b_min {
        for l in m..b_min {
            let src = from.half_index(l, m) * n_sig;
            let dst = to.half_index(l, m) * n_sig;
            out[dst..dst + n_sig].copy_from_slice(&data[src..src + n_sig]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::{rotate_coeffs, RotationZYZ};
    use crate::sphgrid::make_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coeffs(b: usize, rng: &mut ChaCha8Rng) -> SpectralCoeffs {
        let data = (0..b * b)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        SpectralCoeffs::from_vec(b, data).unwrap()
    }

    #[test]
    fn constant_anchors_give_constant_gains() {
        let g = interpolate_gains(&AnchorFilter::new(vec![1.0; 16], 32).unwrap()).unwrap();
        assert!(g.as_slice().iter().all(|&k| k == 1.0));
    }

    #[test]
    fn two_anchor_ramp() {
        let (a, b) = (0.5, -1.5);
        let g = interpolate_gains(&AnchorFilter::new(vec![a, b], 5).unwrap()).unwrap();
        let want = [a, a + (b - a) / 4.0, a + (b - a) / 2.0, a + 3.0 * (b - a) / 4.0, b];
        for (x, y) in g.as_slice().iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn global_mode_reproduces_anchors() {
        let anchors: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let g = interpolate_gains(&AnchorFilter::new(anchors.clone(), 9).unwrap()).unwrap();
        assert_eq!(g.as_slice(), anchors.as_slice());
    }

    #[test]
    fn anchors_hit_their_positions() {
        let f = AnchorFilter::new(vec![3.0, -1.0, 2.0, 7.0], 10).unwrap();
        let g = interpolate_gains(&f).unwrap();
        for (i, &a) in f.anchors().iter().enumerate() {
            assert_eq!(g.as_slice()[f.position(i) as usize], a);
        }
    }

    #[test]
    fn invalid_anchor_counts() {
        assert!(AnchorFilter::new(vec![1.0], 4).is_err());
        assert!(AnchorFilter::new(vec![1.0; 5], 4).is_err());
    }

    #[test]
    fn interpolation_transpose_is_adjoint() {
        let interp = GainInterpolation::new(5, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..5).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..13).map(|_| rng.random()).collect();
        let mut ga = vec![0.0; 13];
        interp.apply(&a, &mut ga);
        let mut aty = vec![0.0; 5];
        interp.apply_transpose(&y, &mut aty);
        let lhs: f64 = ga.iter().zip(&y).map(|(p, q)| p * q).sum();
        let rhs: f64 = a.iter().zip(&aty).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn spectral_conv_identity_and_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_coeffs(6, &mut rng);
        assert_eq!(spectral_conv(&c, &DegreeGains::ones(6)).unwrap(), c);
        let mut k = vec![0.0; 6];
        k[0] = 1.0;
        let out = spectral_conv(&c, &DegreeGains::new(k).unwrap()).unwrap();
        assert_eq!(out.get(0, 0), c.get(0, 0));
        assert!(out.as_slice()[1..].iter().all(|z| z.norm() == 0.0));
        assert!(spectral_conv(&c, &DegreeGains::ones(5)).is_err());
    }

    #[test]
    fn spectral_conv_commutes_with_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_coeffs(16, &mut rng);
        let g = DegreeGains::new((0..16).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let r = RotationZYZ::random(&mut rng);
        let a = rotate_coeffs(&spectral_conv(&c, &g).unwrap(), &r);
        let b = spectral_conv(&rotate_coeffs(&c, &r), &g).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn gains_compose_multiplicatively() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_coeffs(8, &mut rng);
        let g1 = DegreeGains::new((0..8).map(|_| rng.random()).collect()).unwrap();
        let g2 = DegreeGains::new((0..8).map(|_| rng.random()).collect()).unwrap();
        let twice = spectral_conv(&spectral_conv(&c, &g1).unwrap(), &g2).unwrap();
        let once = spectral_conv(&c, &g1.product(&g2).unwrap()).unwrap();
        assert!(twice.max_abs_diff(&once) < 1e-12);
    }

    #[test]
    fn truncate_and_zeropad() {
        let mut c = SpectralCoeffs::zeros(4);
        c.set(0, 0, Complex64::new(1.5, 0.0));
        assert_eq!(truncate(&c, 1).unwrap().get(0, 0), c.get(0, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_coeffs(5, &mut rng);
        assert_eq!(truncate(&zeropad(&c, 10).unwrap(), 5).unwrap(), c);
        let r = RotationZYZ::random(&mut rng);
        let a = truncate(&rotate_coeffs(&c, &r), 3).unwrap();
        let b = rotate_coeffs(&truncate(&c, 3).unwrap(), &r);
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn zonal_kernel_views() {
        let grid = make_grid(8).unwrap();
        let mut k = vec![0.0; 8];
        k[0] = 1.0;
        let h = render_zonal(&DegreeGains::new(k).unwrap(), &grid).unwrap();
        assert!(h.values().iter().all(|v| (v - 0.25 / PI).abs() < 1e-15));

        let grid = make_grid(32).unwrap();
        let h = render_zonal(&DegreeGains::ones(32), &grid).unwrap();
        let equator = h.at(31, 0).abs().max(h.at(32, 0).abs());
        assert!(h.at(0, 0) > 10.0 * equator);
    }

    #[test]
    fn smooth_ramp_is_localized() {
        let grid = make_grid(32).unwrap();
        let anchors: Vec<f64> = (0..16)
            .map(|i| (-anchor_position(i, 16, 32) / 4.0).exp())
            .collect();
        let g = interpolate_gains(&AnchorFilter::new(anchors, 32).unwrap()).unwrap();
        let h = render_zonal(&g, &grid).unwrap();
        for j in 1..16 {
            assert!(h.at(j, 0) < h.at(j - 1, 0), "ring {j}");
        }
    }
}
