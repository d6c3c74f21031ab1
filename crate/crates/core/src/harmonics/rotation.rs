use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::harmonics::{
    legendre_normalized, sht_forward, sht_inverse, wigner_d_blocks, ShtPlan, SpectralCoeffs, WignerDBlock,
};
use crate::sphgrid::{FeatureMap, SphericalSignal};

/// Z–Y–Z Euler angles of the active rotation `Rz(alpha) Ry(beta) Rz(gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationZYZ {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for RotationZYZ {
    fn default() -> Self {
        Self::identity()
    }
}

impl RotationZYZ {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&beta) || !alpha.is_finite() || !gamma.is_finite() {
            return Err(Error::Domain(format!(
                "Euler angles ({alpha}, {beta}, {gamma}) need beta in [0, pi]"
            )));
        }
        Ok(RotationZYZ { alpha, beta, gamma })
    }

    pub fn identity() -> Self {
        RotationZYZ {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        }
    }

    /// Haar-uniform draw: `alpha`, `gamma` uniform on `[0, 2pi)`, `cos(beta)` uniform on `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let alpha = rng.random_range(0.0..2.0 * PI);
        let cos_beta: f64 = rng.random_range(-1.0..=1.0);
        let gamma = rng.random_range(0.0..2.0 * PI);
        RotationZYZ {
            alpha,
            beta: cos_beta.clamp(-1.0, 1.0).acos(),
            gamma,
        }
    }

    /// Inverse rotation, again with `beta` in `[0, pi]`.
    pub fn inverse(&self) -> Self {
        // Rz(-g) Ry(-b) Rz(-a) = Rz(pi - g) Ry(b) Rz(-pi - a)
        RotationZYZ {
            alpha: (PI - self.gamma).rem_euclid(2.0 * PI),
            beta: self.beta,
            gamma: (-PI - self.alpha).rem_euclid(2.0 * PI),
        }
    }

    /// 3x3 rotation matrix, row-major.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let rz = |t: f64| {
            let (s, c) = t.sin_cos();
            [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
        };
        let (s, c) = self.beta.sin_cos();
        let ry = [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]];
        matmul3(&matmul3(&rz(self.alpha), &ry), &rz(self.gamma))
    }

    /// Applies the rotation to a vector.
    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        apply3(&self.matrix(), v)
    }

    /// Applies the inverse rotation to a vector.
    pub fn apply_inverse(&self, v: [f64; 3]) -> [f64; 3] {
        let m = self.matrix();
        [
            m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
            m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
        ]
    }
}

fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn apply3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Colatitude and azimuth of a (not necessarily unit) direction.
pub fn to_spherical(v: [f64; 3]) -> (f64, f64) {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let theta = (v[2] / r).clamp(-1.0, 1.0).acos();
    let phi = v[1].atan2(v[0]).rem_euclid(2.0 * PI);
    (theta, phi)
}

fn phase(m: isize, angle: f64) -> Complex64 {
    Complex64::from_polar(1.0, -(m as f64) * angle)
}

fn rotate_degree(src: &[Complex64], dst: &mut [Complex64], d: &WignerDBlock, rot: &RotationZYZ) {
    let l = d.degree() as isize;
    let twisted: Vec<Complex64> = (-l..=l)
        .map(|mp| phase(mp, rot.gamma) * src[(mp + l) as usize])
        .collect();
    for m in -l..=l {
        let acc: Complex64 = (-l..=l)
            .map(|mp| twisted[(mp + l) as usize] * d.get(m, mp))
            .sum();
        dst[(m + l) as usize] = phase(m, rot.alpha) * acc;
    }
}

/// Applies the rotation to coefficients:
/// `f'_m = sum_{m'} e^{-i m alpha} d^l_{m m'}(beta) e^{-i m' gamma} f_{m'}` per degree.
pub fn rotate_coeffs(c: &SpectralCoeffs, rot: &RotationZYZ) -> SpectralCoeffs {
    let b = c.bandlimit();
    let blocks = wigner_d_blocks(b, rot.beta);
    let mut out = SpectralCoeffs::zeros(b);
    for (l, d) in blocks.iter().enumerate() {
        let src = c.degree(l).to_vec();
        rotate_degree(&src, out.degree_mut(l), d, rot);
    }
    out
}

/// Rotates a band-limited signal: `out(x) = s(R^{-1} x)`.
pub fn rotate_signal(s: &SphericalSignal, rot: &RotationZYZ) -> SphericalSignal {
    let c = rotate_coeffs(&sht_forward(s), rot);
    sht_inverse(&c, s.grid()).expect("same grid")
}

/// Rotates every channel of a feature map spectrally.
pub fn rotate_feature_map(map: &FeatureMap, rot: &RotationZYZ) -> FeatureMap {
    let b = map.bandlimit();
    let plan = ShtPlan::for_bandlimit(b).expect("valid bandlimit");
    let channels = map.channels();
    let half = plan.analyze(map.values(), channels, true);
    let blocks = wigner_d_blocks(b, rot.beta);
    let mut rotated = vec![Complex64::default(); half.len()];
    let mut full = Vec::new();
    let mut out = Vec::new();
    for c in 0..channels {
        for (l, d) in blocks.iter().enumerate() {
            let li = l as isize;
            full.clear();
            for m in -li..=li {
                let z = half[plan.half_index(l, m.unsigned_abs()) * channels + c];
                full.push(if m >= 0 {
                    z
                } else if m % 2 == 0 {
                    z.conj()
                } else {
                    -z.conj()
                });
            }
            out.resize(full.len(), Complex64::default());
            rotate_degree(&full, &mut out, d, rot);
            rotated[plan.half_index(l, 0) * channels + c] = Complex64::new(out[l].re, 0.0);
            for m in 1..=l {
                rotated[plan.half_index(l, m) * channels + c] = out[l + m];
            }
        }
    }
    let values = plan.synthesize(&rotated, channels);
    FeatureMap::new(Arc::clone(map.grid()), channels, values).expect("finite rotation output")
}

/// Point evaluation of the real part of the harmonic series at `(theta, phi)`.
pub fn evaluate_series(c: &SpectralCoeffs, theta: f64, phi: f64) -> f64 {
    let b = c.bandlimit();
    let table = legendre_normalized(b, theta.cos().clamp(-1.0, 1.0)).expect("cosine within [-1, 1]");
    let mut total = 0.0;
    for l in 0..b {
        for m in -(l as isize)..=l as isize {
            let am = m.unsigned_abs();
            let p = table.get(l, am);
            // Y_l^{-m} = (-1)^m conj(Y_l^m)
            let p = if m < 0 && am % 2 == 1 { -p } else { p };
            let y = Complex64::from_polar(p, m as f64 * phi);
            total += (c.get(l, m) * y).re;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphgrid::make_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn random_real_coeffs(b: usize, rng: &mut ChaCha8Rng) -> SpectralCoeffs {
        let mut c = SpectralCoeffs::zeros(b);
        for l in 0..b {
            c.set(l, 0, Complex64::new(rng.random_range(-1.0..1.0), 0.0));
            for m in 1..=l as isize {
                let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                c.set(l, m, z);
                c.set(l, -m, if m % 2 == 0 { z.conj() } else { -z.conj() });
            }
        }
        c
    }

    /// Point evaluation straight from the definition of Y_l^m via Legendre tables.
    fn direct_eval(c: &SpectralCoeffs, v: [f64; 3]) -> f64 {
        let (theta, phi) = to_spherical(v);
        evaluate_series(c, theta, phi)
    }

    #[test]
    fn identity_and_constant_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_real_coeffs(6, &mut rng);
        assert!(rotate_coeffs(&c, &RotationZYZ::identity()).max_abs_diff(&c) < 1e-14);

        let mut k = SpectralCoeffs::zeros(6);
        k.set(0, 0, Complex64::new(2.0, 0.0));
        let r = RotationZYZ::new(0.4, 2.2, 5.0).unwrap();
        assert!(rotate_coeffs(&k, &r).max_abs_diff(&k) < 1e-14);
    }

    #[test]
    fn pure_zonal_degree_one_tilts_by_beta() {
        let mut c = SpectralCoeffs::zeros(2);
        c.set(1, 0, Complex64::new(1.0, 0.0));
        let out = rotate_coeffs(&c, &RotationZYZ::new(0.0, PI / 2.0, 0.0).unwrap());
        assert!((out.get(1, 1).re + FRAC_1_SQRT_2).abs() < 1e-14);
        assert!((out.get(1, -1).re - FRAC_1_SQRT_2).abs() < 1e-14);
        assert!(out.get(1, 0).norm() < 1e-15);
    }

    #[test]
    fn rotation_matches_point_evaluation_at_preimage() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = 8;
        let g = make_grid(b).unwrap();
        let c = random_real_coeffs(b, &mut rng);
        let s = sht_inverse(&c, &g).unwrap();
        let rot = RotationZYZ::new(0.3, 0.7, 1.1).unwrap();
        let rotated = rotate_signal(&s, &rot);
        let n = g.resolution();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for k in 0..n {
                let pre = rot.apply_inverse(g.direction(j, k));
                worst = worst.max((rotated.at(j, k) - direct_eval(&c, pre)).abs());
            }
        }
        assert!(worst < 1e-8, "worst {worst}");
    }

    #[test]
    fn inverse_undoes_rotation_and_matrix_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let r = RotationZYZ::random(&mut rng);
            let v = [0.3, -0.5, 0.81];
            let back = r.inverse().apply(r.apply(v));
            for i in 0..3 {
                assert!((back[i] - v[i]).abs() < 1e-12);
            }
            let w = r.apply_inverse(r.apply(v));
            for i in 0..3 {
                assert!((w[i] - v[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn feature_map_rotation_matches_per_signal_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = make_grid(6).unwrap();
        let signals: Vec<SphericalSignal> = (0..3)
            .map(|_| sht_inverse(&random_real_coeffs(6, &mut rng), &g).unwrap())
            .collect();
        let map = FeatureMap::from_signals(&signals).unwrap();
        let rot = RotationZYZ::random(&mut rng);
        let rotated = rotate_feature_map(&map, &rot);
        for (c, s) in signals.iter().enumerate() {
            let want = rotate_signal(s, &rot);
            for (a, b) in rotated.channel(c).iter().zip(want.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_preserves_degree_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_real_coeffs(12, &mut rng);
        let r = RotationZYZ::random(&mut rng);
        let out = rotate_coeffs(&c, &r);
        for l in 0..12 {
            assert!((out.degree_norm(l) - c.degree_norm(l)).abs() < 1e-10);
        }
        assert!(out.conjugate_symmetry_defect() < 1e-12);
    }
}
