#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use schn::diffnet::Batch;
use schn::harmonics::ShtPlan;

/// Random batch whose channels are bandlimited to degrees below `band`.
pub fn band_batch<R: Rng>(rng: &mut R, samples: usize, channels: usize, b: usize, band: usize) -> Batch {
    let plan = ShtPlan::for_bandlimit(b).unwrap();
    let n_sig = samples * channels;
    let degrees = plan.half_degrees();
    let orders = plan.half_orders();
    let mut half = vec![Complex64::default(); degrees.len() * n_sig];
    for (e, chunk) in half.chunks_mut(n_sig).enumerate() {
        if degrees[e] >= band {
            continue;
        }
        for z in chunk {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = if orders[e] == 0 { 0.0 } else { StandardNormal.sample(rng) };
            *z = Complex64::new(re, im);
        }
    }
    Batch::new(samples, channels, b, plan.synthesize(&half, n_sig)).unwrap()
}

/// Unstructured random batch.
pub fn noise_batch<R: Rng>(rng: &mut R, samples: usize, channels: usize, b: usize) -> Batch {
    let n = samples * channels * 4 * b * b;
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Batch::new(samples, channels, b, data).unwrap()
}

pub fn normal_vec<R: Rng>(rng: &mut R, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `|a - b|_2 / max(|b|_2, tiny)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}
