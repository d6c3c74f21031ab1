use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Fully normalized associated Legendre values `N_l^m P_l^m(x)` (Condon–Shortley
/// phase included) for `0 <= m <= l < B`, so that
/// `Y_l^m(theta, phi) = table[(l, m)] * exp(i m phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreTable {
    bandlimit: usize,
    values: Vec<f64>,
}

impl LegendreTable {
    #[inline]
    fn index(l: usize, m: usize) -> usize {
        l * (l + 1) / 2 + m
    }

    #[inline]
    pub fn get(&self, l: usize, m: usize) -> f64 {
        debug_assert!(m <= l && l < self.bandlimit);
        self.values[Self::index(l, m)]
    }

    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }
}

/// Evaluates the normalized associated Legendre functions at `x = cos(theta)`.
///
/// Seeds the diagonal `m = l` with the sectoral product and moves upward in `l`
/// at fixed `m` with the standard three-term recurrence. Every intermediate is a
/// normalized value, so nothing overflows; for very large `m` near the poles the
/// sectoral seed underflows to zero.
pub fn legendre_normalized(b: usize, x: f64) -> Result<LegendreTable> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("|x| = {} exceeds 1", x.abs())));
    }
    let mut values = vec![0.0; b * (b + 1) / 2];
    let sin_theta = (1.0 - x * x).max(0.0).sqrt();
    fill_order_columns(b, x, sin_theta, |l, m, v| {
        values[LegendreTable::index(l, m)] = v
    });
    Ok(LegendreTable {
        bandlimit: b,
        values,
    })
}

/// Runs the recurrence and hands every `(l, m, value)` to `sink`, column by column.
pub(crate) fn fill_order_columns(b: usize, x: f64, sin_theta: f64, mut sink: impl FnMut(usize, usize, f64)) {
    let mut sectoral = (0.25 / PI).sqrt();
    for m in 0..b {
        if m > 0 {
            let mf = m as f64;
            sectoral *= -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * sin_theta;
        }
        sink(m, m, sectoral);
        if m + 1 >= b {
            continue;
        }
        let mut prev2 = sectoral;
        let mut prev1 = x * (2.0 * m as f64 + 3.0).sqrt() * sectoral;
        sink(m + 1, m, prev1);
        let m2 = (m * m) as f64;
        for l in m + 2..b {
            let lf = l as f64;
            let l2 = lf * lf;
            let a = ((4.0 * l2 - 1.0) / (l2 - m2)).sqrt();
            let lm1 = lf - 1.0;
            let c = ((lm1 * lm1 - m2) / (4.0 * lm1 * lm1 - 1.0)).sqrt();
            let cur = a * (x * prev1 - c * prev2);
            sink(l, m, cur);
            prev2 = prev1;
            prev1 = cur;
        }
    }
}
