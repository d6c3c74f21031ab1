/// Real Wigner little-d matrix `d^l_{m m'}(beta)` of one degree, row-major
/// with rows `m = -l..=l` and columns `m' = -l..=l`.
///
/// Convention: `d^1_{1,0}(beta) = -sin(beta)/sqrt(2)`, i.e. the matrix
/// elements of `exp(-i beta J_y)` in the Condon–Shortley basis.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerDBlock {
    l: usize,
    entries: Vec<f64>,
}

impl WignerDBlock {
    pub fn degree(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        2 * self.l + 1
    }

    #[inline]
    pub fn get(&self, m: isize, mp: isize) -> f64 {
        let l = self.l as isize;
        let dim = self.dim();
        self.entries[(m + l) as usize * dim + (mp + l) as usize]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Matrix product `self * other` (same degree).
    pub fn matmul(&self, other: &WignerDBlock) -> WignerDBlock {
        assert_eq!(self.l, other.l);
        let dim = self.dim();
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for k in 0..dim {
                let a = self.entries[i * dim + k];
                for j in 0..dim {
                    entries[i * dim + j] += a * other.entries[k * dim + j];
                }
            }
        }
        WignerDBlock { l: self.l, entries }
    }

    /// Largest entry of `|d d^T - I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let dim = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let dot: f64 = (0..dim)
                    .map(|k| self.entries[i * dim + k] * self.entries[j * dim + k])
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &WignerDBlock) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `x^e` with the sign handled explicitly; `0^0 = 1`.
fn signed_pow(ln_abs: f64, negative: bool, e: usize) -> (f64, f64) {
    if e == 0 {
        return (0.0, 1.0);
    }
    let sign = if negative && e % 2 == 1 { -1.0 } else { 1.0 };
    (ln_abs * e as f64, sign)
}

/// Little-d blocks for every degree `l < b`.
///
/// Each `(m, m')` pair is seeded at `l = max(|m|, |m'|)` from the closed form
/// (evaluated in log space) and carried upward in `l` with the three-term
/// recurrence
///
/// ```text
/// l sqrt(((l+1)^2 - m^2)((l+1)^2 - m'^2)) d^{l+1}
///     = (2l+1) (l(l+1) cos b - m m') d^l - (l+1) sqrt((l^2 - m^2)(l^2 - m'^2)) d^{l-1}
/// ```
pub fn wigner_d_blocks(b: usize, beta: f64) -> Vec<WignerDBlock> {
    let mut blocks: Vec<WignerDBlock> = (0..b)
        .map(|l| WignerDBlock {
            l,
            entries: vec![0.0; (2 * l + 1) * (2 * l + 1)],
        })
        .collect();
    if b == 0 {
        return blocks;
    }

    let mut ln_fact = vec![0.0; 2 * b + 1];
    for i in 1..ln_fact.len() {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let ln_binom = |n: usize, k: usize| ln_fact[n] - ln_fact[k] - ln_fact[n - k];

    let (half_sin, half_cos) = (beta / 2.0).sin_cos();
    let ln_c = half_cos.abs().ln();
    let ln_s = half_sin.abs().ln();
    let cos_beta = beta.cos();

    // d^j_{j,m'} = (-1)^{j-m'} sqrt(C(2j, j+m')) c^{j+m'} s^{j-m'}
    // d^j_{-j,m'} = sqrt(C(2j, j+m')) c^{j-m'} s^{j+m'}
    let edge_row = |j: usize, top: bool, mp: isize| -> f64 {
        let k = (j as isize + mp) as usize;
        let (ec, es) = if top { (k, 2 * j - k) } else { (2 * j - k, k) };
        let (lc, sc) = signed_pow(ln_c, half_cos < 0.0, ec);
        let (ls, ss) = signed_pow(ln_s, half_sin < 0.0, es);
        if (ec > 0 && half_cos == 0.0) || (es > 0 && half_sin == 0.0) {
            return 0.0;
        }
        let mag = (0.5 * ln_binom(2 * j, k) + lc + ls).exp();
        let phase = if top && (2 * j - k) % 2 == 1 { -1.0 } else { 1.0 };
        phase * sc * ss * mag
    };

    let top = b as isize - 1;
    for m in -top..=top {
        for mp in -top..=top {
            let (am, amp) = (m.unsigned_abs(), mp.unsigned_abs());
            let j0 = am.max(amp);
            let seed = if am >= amp {
                edge_row(j0, m >= 0, mp)
            } else {
                let sign = if (m - mp).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
                sign * edge_row(j0, mp >= 0, m)
            };

            let store = |blocks: &mut Vec<WignerDBlock>, l: usize, v: f64| {
                let dim = 2 * l + 1;
                let li = l as isize;
                blocks[l].entries[(m + li) as usize * dim + (mp + li) as usize] = v;
            };

            store(&mut blocks, j0, seed);
            let mut prev = 0.0;
            let mut cur = seed;
            let mut l = j0;
            if j0 == 0 {
                if b > 1 {
                    prev = 1.0;
                    cur = cos_beta;
                    store(&mut blocks, 1, cur);
                }
                l = 1;
            }
            let (m2, mp2) = ((m * m) as f64, (mp * mp) as f64);
            let mm = (m * mp) as f64;
            while l + 1 < b {
                let lf = l as f64;
                let l1 = lf + 1.0;
                let norm_next = lf * ((l1 * l1 - m2) * (l1 * l1 - mp2)).sqrt();
                let back = l1 * ((lf * lf - m2) * (lf * lf - mp2)).max(0.0).sqrt();
                let next = ((2.0 * lf + 1.0) * (lf * l1 * cos_beta - mm) * cur - back * prev) / norm_next;
                store(&mut blocks, l + 1, next);
                prev = cur;
                cur = next;
                l += 1;
            }
        }
    }
    blocks
}

/// Little-d block of degree `l` at angle `beta`.
pub fn wigner_d(l: usize, beta: f64) -> WignerDBlock {
    wigner_d_blocks(l + 1, beta).pop().expect("at least one block")
}
