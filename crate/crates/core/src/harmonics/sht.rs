//! Separable spherical harmonic transforms on the offset equiangular grid.
//!
//! Analysis runs a length-`2B` real FFT along every ring, then contracts the
//! ring spectra against the weighted Legendre table one order `m` at a time.
//! Rings `j` and `2B-1-j` mirror each other about the equator, and
//! `P_l^m(-x) = (-1)^{l+m} P_l^m(x)`, so each contraction only touches the
//! northern half of the table: the even-parity rows see `F(j) + F(j')` and the
//! odd-parity rows see `F(j) - F(j')`. Synthesis is the same pipeline run
//! backwards.
//!
//! The batched entry points work on "half spectra": only orders `m >= 0` of a
//! real signal, laid out order-major (`m`, then `l = m..B`), with the batch
//! index innermost so each order's block is one contiguous GEMM operand.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::harmonics::legendre::fill_order_columns;
use crate::harmonics::SpectralCoeffs;
use crate::linalg::gemm;
use crate::par;
use crate::sphgrid::{make_grid, SphericalGrid, SphericalSignal};

/// Number of half-spectrum entries (`m >= 0`) at bandlimit `b`.
#[inline]
pub fn half_len(b: usize) -> usize {
    b * (b + 1) / 2
}

/// Precomputed tables and FFT plans for one bandlimit.
pub struct ShtPlan {
    grid: Arc<SphericalGrid>,
    b: usize,
    /// Per order: rows `l = m, m+2, ...` over the northern rings, row-major.
    even: Vec<Vec<f64>>,
    /// Per order: rows `l = m+1, m+3, ...`.
    odd: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    ring_scale: Vec<f64>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for ShtPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShtPlan").field("bandlimit", &self.b).finish()
    }
}

static PLANS: OnceLock<Mutex<HashMap<usize, Arc<ShtPlan>>>> = OnceLock::new();

impl ShtPlan {
    /// Shared plan for bandlimit `b`, built at most once.
    pub fn for_bandlimit(b: usize) -> Result<Arc<ShtPlan>> {
        let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(plan) = guard.get(&b) {
            return Ok(Arc::clone(plan));
        }
        let plan = Arc::new(ShtPlan::build(make_grid(b)?));
        guard.insert(b, Arc::clone(&plan));
        Ok(plan)
    }

    fn build(grid: Arc<SphericalGrid>) -> ShtPlan {
        let b = grid.bandlimit();
        let mut even: Vec<Vec<f64>> = (0..b).map(|m| vec![0.0; (b - m).div_ceil(2) * b]).collect();
        let mut odd: Vec<Vec<f64>> = (0..b).map(|m| vec![0.0; (b - m) / 2 * b]).collect();
        for j in 0..b {
            let x = grid.cos_thetas()[j];
            let s = grid.thetas()[j].sin();
            fill_order_columns(b, x, s, |l, m, v| {
                let d = l - m;
                let row = d / 2;
                if d % 2 == 0 {
                    even[m][row * b + j] = v;
                } else {
                    odd[m][row * b + j] = v;
                }
            });
        }
        let mut offsets = Vec::with_capacity(b);
        let mut acc = 0;
        for m in 0..b {
            offsets.push(acc);
            acc += b - m;
        }
        let ring_scale = (0..2 * b).map(|j| grid.node_area(j)).collect();
        let mut planner = RealFftPlanner::<f64>::new();
        ShtPlan {
            r2c: planner.plan_fft_forward(2 * b),
            c2r: planner.plan_fft_inverse(2 * b),
            grid,
            b,
            even,
            odd,
            offsets,
            ring_scale,
        }
    }

    pub fn bandlimit(&self) -> usize {
        self.b
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    /// Half-spectrum index of `(l, m)`, `0 <= m <= l < B`.
    #[inline]
    pub fn half_index(&self, l: usize, m: usize) -> usize {
        self.offsets[m] + l - m
    }

    /// Degree of every half-spectrum entry, in layout order.
    pub fn half_degrees(&self) -> Vec<usize> {
        (0..self.b).flat_map(|m| m..self.b).collect()
    }

    /// Order of every half-spectrum entry, in layout order.
    pub fn half_orders(&self) -> Vec<usize> {
        (0..self.b).flat_map(|m| std::iter::repeat_n(m, self.b - m)).collect()
    }

    /// Forward transform of `n_sig` real signals (signal-major, `(2B)^2` nodes each).
    /// Returns half spectra laid out `[entry][signal]`. With `weighted = false`
    /// the quadrature areas are left out, which is the adjoint of synthesis up to
    /// the order multiplicities.
    pub fn analyze(&self, signals: &[f64], n_sig: usize, weighted: bool) -> Vec<Complex64> {
        let b = self.b;
        let n = 2 * b;
        let nodes = n * n;
        assert_eq!(signals.len(), n_sig * nodes, "analyze: signal buffer size");

        let mut spectra = vec![Complex64::default(); n_sig * n * b];
        par::for_each_chunk(&mut spectra, n * b, |sig, out| {
            let mut input = self.r2c.make_input_vec();
            let mut output = self.r2c.make_output_vec();
            let mut scratch = self.r2c.make_scratch_vec();
            for j in 0..n {
                input.copy_from_slice(&signals[sig * nodes + j * n..sig * nodes + (j + 1) * n]);
                self.r2c
                    .process_with_scratch(&mut input, &mut output, &mut scratch)
                    .expect("fft buffer sizes");
                let s = if weighted { self.ring_scale[j] } else { 1.0 };
                for (dst, src) in out[j * b..(j + 1) * b].iter_mut().zip(&output) {
                    *dst = src * s;
                }
            }
        });

        let mut out = vec![Complex64::default(); half_len(b) * n_sig];
        let lengths: Vec<usize> = (0..b).map(|m| (b - m) * n_sig).collect();
        par::for_each_split(&mut out, &lengths, |m, region| {
            let mut sum = vec![Complex64::default(); b * n_sig];
            let mut diff = vec![Complex64::default(); b * n_sig];
            for j in 0..b {
                let jm = n - 1 - j;
                for sig in 0..n_sig {
                    let north = spectra[(sig * n + j) * b + m];
                    let south = spectra[(sig * n + jm) * b + m];
                    sum[j * n_sig + sig] = north + south;
                    diff[j * n_sig + sig] = north - south;
                }
            }
            let width = 2 * n_sig;
            let region = as_f64_mut(region);
            let rows_even = (b - m).div_ceil(2);
            let rows_odd = (b - m) / 2;
            // Even rows land on region rows 0, 2, 4, ...; odd rows on 1, 3, ...
            gemm(
                rows_even, b, width,
                &self.even[m], b as isize, 1,
                as_f64(&sum), width as isize, 1,
                region, 2 * width as isize, 1, 0.0,
            );
            if rows_odd > 0 {
                gemm(
                    rows_odd, b, width,
                    &self.odd[m], b as isize, 1,
                    as_f64(&diff), width as isize, 1,
                    &mut region[width..], 2 * width as isize, 1, 0.0,
                );
            }
        });
        out
    }

    /// Inverse transform of `n_sig` half spectra (`[entry][signal]`) to real signals.
    pub fn synthesize(&self, coeffs: &[Complex64], n_sig: usize) -> Vec<f64> {
        let b = self.b;
        let n = 2 * b;
        let nodes = n * n;
        assert_eq!(coeffs.len(), half_len(b) * n_sig, "synthesize: coefficient buffer size");
        let width = 2 * n_sig;

        // rings[m][j][sig] = sum_l f_lm P_lm(x_j)
        let mut rings = vec![Complex64::default(); b * n * n_sig];
        par::for_each_chunk(&mut rings, n * n_sig, |m, gm| {
            let region = as_f64(&coeffs[self.offsets[m] * n_sig..(self.offsets[m] + b - m) * n_sig]);
            let rows_even = (b - m).div_ceil(2);
            let rows_odd = (b - m) / 2;
            let mut ge = vec![Complex64::default(); b * n_sig];
            let mut go = vec![Complex64::default(); b * n_sig];
            gemm(
                b, rows_even, width,
                &self.even[m], 1, b as isize,
                region, 2 * width as isize, 1,
                as_f64_mut(&mut ge), width as isize, 1, 0.0,
            );
            if rows_odd > 0 {
                gemm(
                    b, rows_odd, width,
                    &self.odd[m], 1, b as isize,
                    &region[width..], 2 * width as isize, 1,
                    as_f64_mut(&mut go), width as isize, 1, 0.0,
                );
            }
            for j in 0..b {
                let jm = n - 1 - j;
                for sig in 0..n_sig {
                    let e = ge[j * n_sig + sig];
                    let o = go[j * n_sig + sig];
                    gm[j * n_sig + sig] = e + o;
                    gm[jm * n_sig + sig] = e - o;
                }
            }
        });

        let mut out = vec![0.0; n_sig * nodes];
        par::for_each_chunk(&mut out, nodes, |sig, dst| {
            let mut spectrum = self.c2r.make_input_vec();
            let mut output = self.c2r.make_output_vec();
            let mut scratch = self.c2r.make_scratch_vec();
            for j in 0..n {
                for (m, slot) in spectrum.iter_mut().enumerate() {
                    *slot = if m < b {
                        rings[(m * n + j) * n_sig + sig]
                    } else {
                        Complex64::default()
                    };
                }
                spectrum[0].im = 0.0;
                self.c2r
                    .process_with_scratch(&mut spectrum, &mut output, &mut scratch)
                    .expect("fft buffer sizes");
                dst[j * n..(j + 1) * n].copy_from_slice(&output);
            }
        });
        out
    }

    /// Adjoint of [`ShtPlan::analyze`] (weighted) with respect to the real inner
    /// products on signals and on `(Re, Im)` half-spectrum components.
    pub fn adjoint_analyze(&self, grad: &[Complex64], n_sig: usize) -> Vec<f64> {
        let mut g = grad.to_vec();
        // Orders m > 0 are doubled by synthesis; undo that before reusing it.
        for (entry, chunk) in g.chunks_mut(n_sig).enumerate() {
            if entry >= self.b {
                chunk.iter_mut().for_each(|z| *z *= 0.5);
            }
        }
        let mut out = self.synthesize(&g, n_sig);
        let n = 2 * self.b;
        for sig in out.chunks_mut(n * n) {
            for (j, row) in sig.chunks_mut(n).enumerate() {
                let s = self.ring_scale[j];
                row.iter_mut().for_each(|v| *v *= s);
            }
        }
        out
    }

    /// Adjoint of [`ShtPlan::synthesize`].
    pub fn adjoint_synthesize(&self, grad: &[f64], n_sig: usize) -> Vec<Complex64> {
        let mut out = self.analyze(grad, n_sig, false);
        for (entry, chunk) in out.chunks_mut(n_sig).enumerate() {
            if entry >= self.b {
                chunk.iter_mut().for_each(|z| *z *= 2.0);
            } else {
                // m = 0 entries only act through their real part.
                chunk.iter_mut().for_each(|z| z.im = 0.0);
            }
        }
        out
    }
}

#[inline]
pub(crate) fn as_f64(z: &[Complex64]) -> &[f64] {
    // SAFETY: Complex<f64> is repr(C) with two f64 fields.
    unsafe { std::slice::from_raw_parts(z.as_ptr() as *const f64, z.len() * 2) }
}

#[inline]
pub(crate) fn as_f64_mut(z: &mut [Complex64]) -> &mut [f64] {
    // SAFETY: Complex<f64> is repr(C) with two f64 fields.
    unsafe { std::slice::from_raw_parts_mut(z.as_mut_ptr() as *mut f64, z.len() * 2) }
}

/// Spherical harmonic coefficients of a real signal.
pub fn sht_forward(s: &SphericalSignal) -> SpectralCoeffs {
    let plan = ShtPlan::for_bandlimit(s.bandlimit()).expect("signal grids have valid bandlimits");
    let half = plan.analyze(s.values(), 1, true);
    SpectralCoeffs::from_half(&plan, &half)
}

/// Evaluates the harmonic series on `grid`, keeping the real part.
///
/// For conjugate-symmetric input the result is exactly the (real) series; any
/// antisymmetric part only contributes to the discarded imaginary component.
pub fn sht_inverse(c: &SpectralCoeffs, grid: &Arc<SphericalGrid>) -> Result<SphericalSignal> {
    if c.bandlimit() != grid.bandlimit() {
        return Err(Error::BandlimitMismatch {
            expected: grid.bandlimit(),
            actual: c.bandlimit(),
        });
    }
    let plan = ShtPlan::for_bandlimit(grid.bandlimit())?;
    let half = c.to_half(&plan);
    let values = plan.synthesize(&half, 1);
    SphericalSignal::new(Arc::clone(grid), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphgrid::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_real_coeffs(b: usize, seed: u64) -> SpectralCoeffs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = SpectralCoeffs::zeros(b);
        for l in 0..b {
            c.set(l, 0, Complex64::new(rng.random_range(-1.0..1.0), 0.0));
            for m in 1..=l as isize {
                let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                c.set(l, m, z);
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                c.set(l, -m, z.conj() * sign);
            }
        }
        c
    }

    #[test]
    fn constant_and_cosine() {
        let g = make_grid(8).unwrap();
        let one = SphericalSignal::from_fn(g.clone(), |_, _| 1.0).unwrap();
        let c = sht_forward(&one);
        assert!((c.get(0, 0).re - 2.0 * PI.sqrt()).abs() < 1e-12);
        for l in 1..8 {
            for m in -(l as isize)..=l as isize {
                assert!(c.get(l, m).norm() < 1e-12);
            }
        }
        let cos = SphericalSignal::from_fn(g, |t, _| t.cos()).unwrap();
        let c = sht_forward(&cos);
        assert!((c.get(1, 0).re - (4.0 * PI / 3.0).sqrt()).abs() < 1e-12);
        assert!(c.get(0, 0).norm() < 1e-12);
        assert!(c.get(2, 0).norm() < 1e-12);
    }

    #[test]
    fn inverse_of_simple_spectra() {
        let g = make_grid(5).unwrap();
        let mut c = SpectralCoeffs::zeros(5);
        c.set(0, 0, Complex64::new(1.0, 0.0));
        let s = sht_inverse(&c, &g).unwrap();
        assert!(s.values().iter().all(|v| (v - 0.5 / PI.sqrt()).abs() < 1e-14));
        let z = sht_inverse(&SpectralCoeffs::zeros(5), &g).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
        assert!(sht_inverse(&SpectralCoeffs::zeros(4), &g).is_err());
    }

    #[test]
    fn round_trip_from_coefficients() {
        let g = make_grid(16).unwrap();
        let c = random_real_coeffs(16, 7);
        let back = sht_forward(&sht_inverse(&c, &g).unwrap());
        assert!(back.max_abs_diff(&c) < 1e-10);
    }

    #[test]
    fn round_trip_from_signal() {
        for b in [1, 2, 3, 7, 12] {
            let g = make_grid(b).unwrap();
            let s = sht_inverse(&random_real_coeffs(b, b as u64), &g).unwrap();
            let again = sht_inverse(&sht_forward(&s), &g).unwrap();
            let err = s
                .values()
                .iter()
                .zip(again.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "b={b} err={err}");
        }
    }

    #[test]
    fn real_signals_give_conjugate_symmetric_coefficients() {
        let g = make_grid(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = SphericalSignal::new(g.clone(), (0..g.len()).map(|_| rng.random()).collect()).unwrap();
        assert!(sht_forward(&s).conjugate_symmetry_defect() < 1e-10);
    }

    #[test]
    fn parseval() {
        let g = make_grid(10).unwrap();
        let c = random_real_coeffs(10, 11);
        let s = sht_inverse(&c, &g).unwrap();
        let sq = SphericalSignal::new(g, s.values().iter().map(|v| v * v).collect()).unwrap();
        let energy: f64 = c.as_slice().iter().map(|z| z.norm_sqr()).sum();
        assert!((integrate(&sq) - energy).abs() / energy < 1e-9);
    }

    fn inner(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn adjoints_satisfy_dot_product_identity() {
        let b = 6;
        let plan = ShtPlan::for_bandlimit(b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n_sig = 3;
        let x: Vec<f64> = (0..n_sig * 4 * b * b).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y: Vec<Complex64> = (0..half_len(b) * n_sig)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        // Real inputs make m = 0 entries real; keep the test on that subspace.
        for z in y[..b * n_sig].iter_mut() {
            z.im = 0.0;
        }
        let ax = plan.analyze(&x, n_sig, true);
        let aty = plan.adjoint_analyze(&y, n_sig);
        assert!((inner(as_f64(&ax), as_f64(&y)) - inner(&x, &aty)).abs() < 1e-10);

        let sy = plan.synthesize(&y, n_sig);
        let stx = plan.adjoint_synthesize(&x, n_sig);
        assert!((inner(&sy, &x) - inner(as_f64(&y), as_f64(&stx))).abs() < 1e-10);
    }
}
