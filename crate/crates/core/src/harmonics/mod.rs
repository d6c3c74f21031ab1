//! Spherical harmonics: normalized Legendre tables, forward and inverse
//! transforms, Wigner-d blocks and rotations of band-limited signals.
//!
//! Harmonics are complex, orthonormal over the unit sphere and carry the
//! Condon–Shortley phase: `Y_l^m(theta, phi) = N_l^m P_l^m(cos theta) e^{i m phi}`.

mod legendre;
mod rotation;
mod sht;
mod wigner;

pub use legendre::{legendre_normalized, LegendreTable};
pub use rotation::{evaluate_series, rotate_coeffs, rotate_feature_map, rotate_signal, to_spherical, RotationZYZ};
pub use sht::{half_len, sht_forward, sht_inverse, ShtPlan};
pub use wigner::{wigner_d, wigner_d_blocks, WignerDBlock};


use num_complex::Complex64;

use crate::error::{Error, Result};

/// Coefficients `f_l^m` for `0 <= l < B`, `-l <= m <= l`, degree-major
/// (entry `l^2 + l + m`), `B^2` entries total.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    bandlimit: usize,
    data: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn zeros(b: usize) -> Self {
        SpectralCoeffs {
            bandlimit: b,
            data: vec![Complex64::default(); b * b],
        }
    }

    pub fn from_vec(b: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != b * b {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for bandlimit {b} (need {})",
                data.len(),
                b * b
            )));
        }
        Ok(SpectralCoeffs { bandlimit: b, data })
    }

    #[inline]
    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    #[inline]
    fn index(l: usize, m: isize) -> usize {
        debug_assert!(m.unsigned_abs() <= l);
        (l * l + l).wrapping_add_signed(m)
    }

    #[inline]
    pub fn get(&self, l: usize, m: isize) -> Complex64 {
        self.data[Self::index(l, m)]
    }

    #[inline]
    pub fn set(&mut self, l: usize, m: isize, v: Complex64) {
        self.data[Self::index(l, m)] = v;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// The `2l + 1` coefficients of degree `l`, ordered `m = -l..=l`.
    pub fn degree(&self, l: usize) -> &[Complex64] {
        &self.data[l * l..(l + 1) * (l + 1)]
    }

    pub fn degree_mut(&mut self, l: usize) -> &mut [Complex64] {
        &mut self.data[l * l..(l + 1) * (l + 1)]
    }

    /// Euclidean norm of the degree-`l` block.
    pub fn degree_norm(&self, l: usize) -> f64 {
        self.degree(l).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &SpectralCoeffs) -> f64 {
        assert_eq!(self.bandlimit, other.bandlimit);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest violation of `f_l^{-m} = (-1)^m conj(f_l^m)`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for l in 0..self.bandlimit {
            for m in 0..=l as isize {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let d = (self.get(l, -m) - self.get(l, m).conj() * sign).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Expands a half spectrum (orders `m >= 0` of a real signal) using conjugate symmetry.
    pub fn from_half(plan: &ShtPlan, half: &[Complex64]) -> Self {
        let b = plan.bandlimit();
        let mut c = SpectralCoeffs::zeros(b);
        for l in 0..b {
            for m in 0..=l {
                let z = half[plan.half_index(l, m)];
                c.set(l, m as isize, z);
                if m > 0 {
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    c.set(l, -(m as isize), z.conj() * sign);
                }
            }
        }
        c
    }

    /// Half spectrum whose real synthesis equals the real part of this series.
    pub fn to_half(&self, plan: &ShtPlan) -> Vec<Complex64> {
        let b = plan.bandlimit();
        let mut half = vec![Complex64::default(); half_len(b)];
        for l in 0..b {
            half[plan.half_index(l, 0)] = Complex64::new(self.get(l, 0).re, 0.0);
            for m in 1..=l {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let z = (self.get(l, m as isize) + self.get(l, -(m as isize)).conj() * sign) * 0.5;
                half[plan.half_index(l, m)] = z;
            }
        }
        half
    }
}
