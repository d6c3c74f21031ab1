//! Forward kernels and their adjoints on `[sample][channel][node]` buffers.

use num_complex::Complex64;

use crate::harmonics::ShtPlan;
use crate::linalg::{matmul, matmul_nt, matmul_tn};
use crate::par;

/// Mixes half spectra `[entry][sample][cin]` into `[entry][sample][cout]` with
/// per-degree gains stored `[cin][cout][B]`.
pub(crate) fn mix_degrees(
    degrees: &[usize],
    b: usize,
    x: &[Complex64],
    samples: usize,
    cin: usize,
    cout: usize,
    gains: &[f64],
) -> Vec<Complex64> {
    let mut y = vec![Complex64::default(); degrees.len() * samples * cout];
    par::for_each_chunk(&mut y, samples * cout, |e, ye| {
        let l = degrees[e];
        let xe = &x[e * samples * cin..(e + 1) * samples * cin];
        for n in 0..samples {
            let xs = &xe[n * cin..(n + 1) * cin];
            let ys = &mut ye[n * cout..(n + 1) * cout];
            for (c, xv) in xs.iter().enumerate() {
                let row = &gains[c * cout * b..(c + 1) * cout * b];
                for (co, yv) in ys.iter_mut().enumerate() {
                    *yv += xv * row[co * b + l];
                }
            }
        }
    });
    y
}

/// Adjoint of [`mix_degrees`] with respect to the input spectra.
pub(crate) fn mix_degrees_transpose(
    degrees: &[usize],
    b: usize,
    gy: &[Complex64],
    samples: usize,
    cin: usize,
    cout: usize,
    gains: &[f64],
) -> Vec<Complex64> {
    let mut gx = vec![Complex64::default(); degrees.len() * samples * cin];
    par::for_each_chunk(&mut gx, samples * cin, |e, gxe| {
        let l = degrees[e];
        let gye = &gy[e * samples * cout..(e + 1) * samples * cout];
        for n in 0..samples {
            let gys = &gye[n * cout..(n + 1) * cout];
            for (c, gv) in gxe[n * cin..(n + 1) * cin].iter_mut().enumerate() {
                let row = &gains[c * cout * b..(c + 1) * cout * b];
                let mut acc = Complex64::default();
                for (co, g) in gys.iter().enumerate() {
                    acc += g * row[co * b + l];
                }
                *gv = acc;
            }
        }
    });
    gx
}

/// Gradient of the mixing with respect to the gains, `[cin][cout][B]`.
pub(crate) fn mix_degrees_gain_grad(
    plan: &ShtPlan,
    x: &[Complex64],
    gy: &[Complex64],
    samples: usize,
    cin: usize,
    cout: usize,
) -> Vec<f64> {
    let b = plan.bandlimit();
    let per_degree = par::map_range(b, |l| {
        let mut acc = vec![0.0; cin * cout];
        for m in 0..=l {
            let e = plan.half_index(l, m);
            let xe = &x[e * samples * cin..(e + 1) * samples * cin];
            let ge = &gy[e * samples * cout..(e + 1) * samples * cout];
            for n in 0..samples {
                for c in 0..cin {
                    let xv = xe[n * cin + c];
                    for co in 0..cout {
                        let g = ge[n * cout + co];
                        acc[c * cout + co] += xv.re * g.re + xv.im * g.im;
                    }
                }
            }
        }
        acc
    });
    let mut out = vec![0.0; cin * cout * b];
    for (l, acc) in per_degree.iter().enumerate() {
        for (i, v) in acc.iter().enumerate() {
            out[i * b + l] = *v;
        }
    }
    out
}

/// `y_n = W x_n + b` for every sample; `W` is `cout x cin`.
pub(crate) fn pointwise_forward(x: &[f64], samples: usize, cin: usize, cout: usize, nodes: usize, w: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; samples * cout * nodes];
    par::for_each_chunk(&mut y, cout * nodes, |n, yn| {
        for (co, row) in yn.chunks_mut(nodes).enumerate() {
            row.iter_mut().for_each(|v| *v = bias[co]);
        }
        matmul(cout, cin, nodes, w, &x[n * cin * nodes..(n + 1) * cin * nodes], yn, 1.0);
    });
    y
}

/// Returns `(gx, gW, gb)`.
pub(crate) fn pointwise_backward(
    x: &[f64],
    gy: &[f64],
    samples: usize,
    cin: usize,
    cout: usize,
    nodes: usize,
    w: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; samples * cin * nodes];
    par::for_each_chunk(&mut gx, cin * nodes, |n, gxn| {
        matmul_tn(cin, cout, nodes, w, &gy[n * cout * nodes..(n + 1) * cout * nodes], gxn, 0.0);
    });
    let partial = par::map_range(samples, |n| {
        let mut gw = vec![0.0; cout * cin];
        matmul_nt(
            cout,
            nodes,
            cin,
            &gy[n * cout * nodes..(n + 1) * cout * nodes],
            &x[n * cin * nodes..(n + 1) * cin * nodes],
            &mut gw,
            0.0,
        );
        gw
    });
    let mut gw = vec![0.0; cout * cin];
    for p in &partial {
        gw.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    let gb = channel_sums(gy, samples, cout, nodes);
    (gx, gw, gb)
}

/// Per-channel sum over samples and nodes.
pub(crate) fn channel_sums(x: &[f64], samples: usize, channels: usize, nodes: usize) -> Vec<f64> {
    par::map_range(channels, |c| {
        (0..samples)
            .map(|n| {
                let at = (n * channels + c) * nodes;
                x[at..at + nodes].iter().sum::<f64>()
            })
            .sum()
    })
}

/// Per-node quadrature areas of a `2B x 2B` grid, row-major.
pub(crate) fn node_areas(grid: &crate::sphgrid::SphericalGrid) -> Vec<f64> {
    let n = grid.resolution();
    (0..n * n).map(|i| grid.node_area(i / n)).collect()
}

/// Area-weighted per-channel mean and (biased) variance over samples and nodes.
pub(crate) fn weighted_moments(x: &[f64], samples: usize, channels: usize, areas: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nodes = areas.len();
    let total = samples as f64 * areas.iter().sum::<f64>();
    let stats = par::map_range(channels, |c| {
        let mut s = 0.0;
        for n in 0..samples {
            let at = (n * channels + c) * nodes;
            s += x[at..at + nodes].iter().zip(areas).map(|(v, a)| v * a).sum::<f64>();
        }
        let mean = s / total;
        let mut q = 0.0;
        for n in 0..samples {
            let at = (n * channels + c) * nodes;
            q += x[at..at + nodes]
                .iter()
                .zip(areas)
                .map(|(v, a)| a * (v - mean) * (v - mean))
                .sum::<f64>();
        }
        (mean, q / total)
    });
    stats.into_iter().unzip()
}

/// Weighted normalization adjoint in batch-statistics mode.
#[allow(clippy::too_many_arguments)]
pub(crate) fn norm_backward_batch(
    gy: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    scale: &[f64],
    samples: usize,
    channels: usize,
    areas: &[f64],
) -> Vec<f64> {
    let nodes = areas.len();
    let total = samples as f64 * areas.iter().sum::<f64>();
    let sums = par::map_range(channels, |c| {
        let (mut sg, mut sgx) = (0.0, 0.0);
        for n in 0..samples {
            let at = (n * channels + c) * nodes;
            for (g, h) in gy[at..at + nodes].iter().zip(&xhat[at..at + nodes]) {
                sg += g;
                sgx += g * h;
            }
        }
        (sg * scale[c], sgx * scale[c])
    });
    let mut gx = vec![0.0; gy.len()];
    par::for_each_chunk(&mut gx, nodes, |i, out| {
        let c = i % channels;
        let (sg, sgx) = sums[c];
        let at = i * nodes;
        let (gi, hi) = (&gy[at..at + nodes], &xhat[at..at + nodes]);
        for p in 0..nodes {
            let a = areas[p] / total;
            out[p] = inv_std[c] * (scale[c] * gi[p] - a * sg - a * hi[p] * sgx);
        }
    });
    gx
}

/// Columns of 3x3 neighborhoods, `[cin * 9][nodes]`, circular in azimuth and
/// zero beyond the first and last rings.
pub(crate) fn im2col(x: &[f64], cin: usize, res: usize, col: &mut [f64]) {
    let nodes = res * res;
    for c in 0..cin {
        let xc = &x[c * nodes..(c + 1) * nodes];
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &mut col[(c * 9 + dy * 3 + dx) * nodes..(c * 9 + dy * 3 + dx + 1) * nodes];
                for j in 0..res {
                    let dst = &mut row[j * res..(j + 1) * res];
                    let src_j = j as isize + dy as isize - 1;
                    if src_j < 0 || src_j >= res as isize {
                        dst.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &xc[src_j as usize * res..(src_j as usize + 1) * res];
                    for (k, v) in dst.iter_mut().enumerate() {
                        *v = src[(k + res + dx - 1) % res];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back onto the lattice.
pub(crate) fn col2im(col: &[f64], cin: usize, res: usize, x: &mut [f64]) {
    let nodes = res * res;
    x.iter_mut().for_each(|v| *v = 0.0);
    for c in 0..cin {
        let xc = &mut x[c * nodes..(c + 1) * nodes];
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &col[(c * 9 + dy * 3 + dx) * nodes..(c * 9 + dy * 3 + dx + 1) * nodes];
                for j in 0..res {
                    let src_j = j as isize + dy as isize - 1;
                    if src_j < 0 || src_j >= res as isize {
                        continue;
                    }
                    let dst = &mut xc[src_j as usize * res..(src_j as usize + 1) * res];
                    for (k, v) in row[j * res..(j + 1) * res].iter().enumerate() {
                        dst[(k + res + dx - 1) % res] += v;
                    }
                }
            }
        }
    }
}

pub(crate) fn planar_conv_forward(
    x: &[f64],
    samples: usize,
    cin: usize,
    cout: usize,
    res: usize,
    kernel: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let nodes = res * res;
    let mut y = vec![0.0; samples * cout * nodes];
    par::for_each_chunk(&mut y, cout * nodes, |n, yn| {
        let mut col = vec![0.0; cin * 9 * nodes];
        im2col(&x[n * cin * nodes..(n + 1) * cin * nodes], cin, res, &mut col);
        for (co, row) in yn.chunks_mut(nodes).enumerate() {
            row.iter_mut().for_each(|v| *v = bias[co]);
        }
        matmul(cout, cin * 9, nodes, kernel, &col, yn, 1.0);
    });
    y
}

/// Returns `(gx, g_kernel, g_bias)`.
pub(crate) fn planar_conv_backward(
    x: &[f64],
    gy: &[f64],
    samples: usize,
    cin: usize,
    cout: usize,
    res: usize,
    kernel: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let nodes = res * res;
    let partial = par::map_range(samples, |n| {
        let gyn = &gy[n * cout * nodes..(n + 1) * cout * nodes];
        let mut col = vec![0.0; cin * 9 * nodes];
        im2col(&x[n * cin * nodes..(n + 1) * cin * nodes], cin, res, &mut col);
        let mut gk = vec![0.0; cout * cin * 9];
        matmul_nt(cout, nodes, cin * 9, gyn, &col, &mut gk, 0.0);
        matmul_tn(cin * 9, cout, nodes, kernel, gyn, &mut col, 0.0);
        let mut gxn = vec![0.0; cin * nodes];
        col2im(&col, cin, res, &mut gxn);
        (gxn, gk)
    });
    let mut gx = Vec::with_capacity(samples * cin * nodes);
    let mut gk = vec![0.0; cout * cin * 9];
    for (gxn, p) in &partial {
        gx.extend_from_slice(gxn);
        gk.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    let gb = channel_sums(gy, samples, cout, nodes);
    (gx, gk, gb)
}

/// 2x2 average pooling of `planes` square `res x res` planes.
pub(crate) fn avg_pool(x: &[f64], planes: usize, res: usize) -> Vec<f64> {
    let half = res / 2;
    let mut y = vec![0.0; planes * half * half];
    par::for_each_chunk(&mut y, half * half, |p, yp| {
        let xp = &x[p * res * res..(p + 1) * res * res];
        for j in 0..half {
            for k in 0..half {
                let a = xp[2 * j * res + 2 * k] + xp[2 * j * res + 2 * k + 1];
                let b = xp[(2 * j + 1) * res + 2 * k] + xp[(2 * j + 1) * res + 2 * k + 1];
                yp[j * half + k] = 0.25 * (a + b);
            }
        }
    });
    y
}

pub(crate) fn avg_pool_backward(gy: &[f64], planes: usize, res: usize) -> Vec<f64> {
    let half = res / 2;
    let mut gx = vec![0.0; planes * res * res];
    par::for_each_chunk(&mut gx, res * res, |p, gp| {
        let g = &gy[p * half * half..(p + 1) * half * half];
        for j in 0..res {
            for k in 0..res {
                gp[j * res + k] = 0.25 * g[(j / 2) * half + k / 2];
            }
        }
    });
    gx
}

/// Nearest-neighbor 2x upsampling of `planes` planes of size `res x res`.
pub(crate) fn nearest_up(x: &[f64], planes: usize, res: usize) -> Vec<f64> {
    let big = 2 * res;
    let mut y = vec![0.0; planes * big * big];
    par::for_each_chunk(&mut y, big * big, |p, yp| {
        let xp = &x[p * res * res..(p + 1) * res * res];
        for j in 0..big {
            for k in 0..big {
                yp[j * big + k] = xp[(j / 2) * res + k / 2];
            }
        }
    });
    y
}

pub(crate) fn nearest_up_backward(gy: &[f64], planes: usize, res: usize) -> Vec<f64> {
    let big = 2 * res;
    let mut gx = vec![0.0; planes * res * res];
    par::for_each_chunk(&mut gx, res * res, |p, gp| {
        let g = &gy[p * big * big..(p + 1) * big * big];
        for j in 0..big {
            for k in 0..big {
                gp[(j / 2) * res + k / 2] += g[j * big + k];
            }
        }
    });
    gx
}
