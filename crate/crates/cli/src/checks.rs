//! Verification suites exposed by `schn check`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use schn::diffnet::{
    Arch, Batch, ComputationRecord, FilterMode, Hourglass, HourglassConfig, Mode, NodeId, NormParams, ParamStore,
    ResidualBlock,
};
use schn::harmonics::{
    evaluate_series, rotate_coeffs, rotate_signal, sht_forward, sht_inverse, to_spherical, wigner_d, RotationZYZ,
    ShtPlan, SpectralCoeffs,
};
use schn::sphgrid::{integrate, make_grid, SphericalSignal};

use crate::Suite;

struct Report {
    suite: &'static str,
    all_pass: bool,
}

impl Report {
    fn line(&mut self, property: &str, err: f64, tol: f64) {
        let pass = err < tol;
        self.all_pass &= pass;
        let status = if pass { "PASS" } else { "FAIL" };
        println!("{status} suite={} property={property} error={err:.3e} tolerance={tol:.0e}", self.suite);
    }
}

fn random_real_coeffs(rng: &mut ChaCha8Rng, b: usize) -> SpectralCoeffs {
    let mut c = SpectralCoeffs::zeros(b);
    for l in 0..b {
        for m in 0..=l as isize {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = if m == 0 { 0.0 } else { StandardNormal.sample(rng) };
            let z = Complex64::new(re, im);
            c.set(l, m, z);
            if m > 0 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                c.set(l, -m, z.conj() * sign);
            }
        }
    }
    c
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

/// Random batch bandlimited to degree `b - 1`.
fn band_batch(rng: &mut ChaCha8Rng, samples: usize, channels: usize, b: usize) -> Batch {
    let plan = ShtPlan::for_bandlimit(b).expect("valid bandlimit");
    let n_sig = samples * channels;
    let orders = plan.half_orders();
    let mut half = vec![Complex64::default(); orders.len() * n_sig];
    for (e, chunk) in half.chunks_mut(n_sig).enumerate() {
        for z in chunk {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = if orders[e] == 0 { 0.0 } else { StandardNormal.sample(rng) };
            *z = Complex64::new(re, im);
        }
    }
    Batch::new(samples, channels, b, plan.synthesize(&half, n_sig)).expect("consistent shape")
}

fn sht(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for b in [4, 8, 16, 32, 64] {
        let grid = make_grid(b).expect("valid bandlimit");
        let c = random_real_coeffs(&mut rng, b);
        let s = sht_inverse(&c, &grid).expect("matching grid");
        r.line(&format!("round_trip_b{b}"), sht_forward(&s).max_abs_diff(&c), 1e-9);
        let sq = SphericalSignal::new(grid.clone(), s.values().iter().map(|v| v * v).collect()).expect("grid sized");
        let energy: f64 = c.as_slice().iter().map(|z| z.norm_sqr()).sum();
        r.line(&format!("parseval_b{b}"), (integrate(&sq) - energy).abs() / energy, 1e-9);
    }
}

fn rotation(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let b = 8;
    let grid = make_grid(b).expect("valid bandlimit");
    let (mut pointwise, mut round) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let c = random_real_coeffs(&mut rng, b);
        let s = sht_inverse(&c, &grid).expect("matching grid");
        let rot = RotationZYZ::random(&mut rng);
        let rs = rotate_signal(&s, &rot);
        for (i, x) in grid.directions().enumerate() {
            let (t, p) = to_spherical(rot.apply_inverse(x));
            pointwise = pointwise.max((rs.values()[i] - evaluate_series(&c, t, p)).abs());
        }
        round = round.max(rotate_coeffs(&rotate_coeffs(&c, &rot), &rot.inverse()).max_abs_diff(&c));
    }
    r.line("rotated_signal_vs_series_b8", pointwise, 1e-8);
    r.line("rotate_inverse_round_trip_b8", round, 1e-10);
    let (mut ortho, mut compose) = (0.0f64, 0.0f64);
    for l in 0..=32 {
        let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let b: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let da = wigner_d(l, a);
        ortho = ortho.max(da.orthogonality_defect());
        compose = compose.max(da.matmul(&wigner_d(l, b)).max_abs_diff(&wigner_d(l, a + b)));
    }
    r.line("wigner_orthogonality_l32", ortho, 1e-10);
    r.line("wigner_composition_l32", compose, 1e-9);
}

type Build<'a> = &'a dyn Fn(&mut ComputationRecord, &mut ParamStore, NodeId) -> NodeId;

fn run_layer(store: &mut ParamStore, x: &Batch, f: Build) -> Batch {
    let mut rec = ComputationRecord::new();
    let xi = rec.input(x.clone());
    let y = f(&mut rec, store, xi);
    rec.into_value(y)
}

/// `(max |R f(x) - f(R x)|, max |f(x)|)`.
fn defect(store: &mut ParamStore, x: &Batch, f: Build, rot: &RotationZYZ) -> (f64, f64) {
    let y = run_layer(store, x, f);
    let a = y.rotated(rot).expect("valid batch");
    let b = run_layer(store, &x.rotated(rot).expect("valid batch"), f);
    (a.max_abs_diff(&b), y.max_abs())
}

fn norm_params(ps: &mut ParamStore, rng: &mut ChaCha8Rng, c: usize) -> NormParams {
    let mut add = |name: &str, v: Vec<f64>, trainable| ps.add(name, &[c], v, trainable).expect("unique name");
    NormParams {
        scale: add("n.scale", normal_vec(rng, c, 1.0), true),
        shift: add("n.shift", normal_vec(rng, c, 1.0), true),
        running_mean: add("n.rm", vec![0.0; c], false),
        running_var: add("n.rv", vec![1.0; c], false),
    }
}

fn equivariance(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 5];
    for trial in 0..20 {
        let b = if trial % 2 == 0 { 8 } else { 16 };
        let (cin, cout) = (3, 4);
        let x = band_batch(&mut rng, 2, cin, b);
        let rot = RotationZYZ::random(&mut rng);
        let mut ps = ParamStore::new();
        let a = ps.add("c.anchors", &[cin, cout, 4], normal_vec(&mut rng, cin * cout * 4, 1.0), true).expect("new");
        let cb = ps.add("c.bias", &[cout], normal_vec(&mut rng, cout, 1.0), true).expect("new");
        let w = ps.add("p.weight", &[cout, cin], normal_vec(&mut rng, cin * cout, 1.0), true).expect("new");
        let pb = ps.add("p.bias", &[cout], normal_vec(&mut rng, cout, 1.0), true).expect("new");
        let np = norm_params(&mut ps, &mut rng, cin);
        let layers: [Build; 5] = [
            &|r, ps, n| r.sph_conv(ps, n, a, cb).expect("shapes"),
            &|r, ps, n| r.pointwise(ps, n, w, pb).expect("shapes"),
            &|r, _, n| r.downsample_spectral(n).expect("even bandlimit"),
            &|r, _, n| r.upsample_spectral(n).expect("upsample"),
            &|r, ps, n| r.norm(ps, n, np, Mode::Train).expect("shapes"),
        ];
        for (slot, f) in worst.iter_mut().zip(layers) {
            *slot = slot.max(defect(&mut ps, &x, f, &rot).0);
        }
    }
    for (name, d) in ["spectral_conv", "pointwise_conv", "truncate", "zeropad", "weighted_norm"].iter().zip(worst) {
        r.line(&format!("{name}_commutation"), d, 1e-7);
    }

    // Pointwise relus break exact commutation; blocks are only approximately equivariant.
    let cfg = HourglassConfig {
        bandlimit: 16,
        channels: vec![16, 16],
        levels: 1,
        ..HourglassConfig::desk()
    };
    let mut block = 0.0f64;
    for trial in 0..10 {
        let mut ps = ParamStore::new();
        let blk = ResidualBlock::new(&mut ps, &cfg, "b", 16, 16, trial).expect("valid block");
        let x = band_batch(&mut rng, 1, 16, 16);
        let rot = RotationZYZ::random(&mut rng);
        let (d, scale) = defect(&mut ps, &x, &|r, ps, n| blk.forward(r, ps, n, Mode::Train).expect("shapes"), &rot);
        block = block.max(d / scale);
    }
    r.line("residual_block_relative_commutation", block, 0.05);
}

const EPS: f64 = 1e-5;

fn fd_error(ps: &mut ParamStore, x: &Batch, f: Build, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = run_layer(ps, x, f);
    let v = normal_vec(&mut rng, probe.data.len(), 1.0);
    let loss = |ps: &mut ParamStore, x: &Batch| dot(&run_layer(ps, x, f).data, &v);
    ps.zero_grads();
    let mut rec = ComputationRecord::new();
    let xi = rec.input(x.clone());
    let y = f(&mut rec, ps, xi);
    let seed_grad = Batch {
        data: v.clone(),
        ..rec.value(y).clone()
    };
    let grads = rec.backward(ps, y, seed_grad).expect("matching shapes");
    let analytic_x = grads.get(xi).map(|g| g.data.clone()).unwrap_or_else(|| vec![0.0; x.data.len()]);
    let analytic_p = ps.flat_grads();
    let theta = ps.flat_values();
    let mut numeric_p = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] = theta[i] + EPS;
        ps.set_flat_values(&t);
        let up = loss(ps, x);
        t[i] = theta[i] - EPS;
        ps.set_flat_values(&t);
        numeric_p[i] = (up - loss(ps, x)) / (2.0 * EPS);
    }
    ps.set_flat_values(&theta);
    let mut numeric_x = vec![0.0; x.data.len()];
    for i in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[i] += EPS;
        let up = loss(ps, &xp);
        xp.data[i] = x.data[i] - EPS;
        numeric_x[i] = (up - loss(ps, &xp)) / (2.0 * EPS);
    }
    let pe = if theta.is_empty() { 0.0 } else { rel_err(&analytic_p, &numeric_p) };
    pe.max(rel_err(&analytic_x, &numeric_x))
}

fn model_fd_error(model: &mut Hourglass, x: &Batch, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = ComputationRecord::new();
    let y = model.forward(&mut rec, x.clone(), Mode::Train).expect("valid input");
    let w = normal_vec(&mut rng, rec.value(y).data.len(), 1.0);
    let seed_grad = Batch {
        data: w.clone(),
        ..rec.value(y).clone()
    };
    model.params_mut().zero_grads();
    rec.backward(model.params_mut(), y, seed_grad).expect("matching shapes");
    let g = model.params().flat_grads();
    let theta = model.params().flat_values();
    let mut v = normal_vec(&mut rng, theta.len(), 1.0);
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|d| *d /= norm);
    let mut eval = |t: Vec<f64>| {
        model.params_mut().set_flat_values(&t);
        let mut rec = ComputationRecord::new();
        let y = model.forward(&mut rec, x.clone(), Mode::Train).expect("valid input");
        dot(&rec.value(y).data, &w)
    };
    let up = eval(theta.iter().zip(&v).map(|(t, d)| t + EPS * d).collect());
    let down = eval(theta.iter().zip(&v).map(|(t, d)| t - EPS * d).collect());
    model.params_mut().set_flat_values(&theta);
    let numeric = (up - down) / (2.0 * EPS);
    let analytic = dot(&g, &v);
    (analytic - numeric).abs() / numeric.abs().max(analytic.abs())
}

fn gradients(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = |rng: &mut ChaCha8Rng, s, c, b: usize| {
        Batch::new(s, c, b, normal_vec(rng, s * c * 4 * b * b, 1.0)).expect("sized")
    };
    let x = noise(&mut rng, 2, 3, 4);
    let tol = 1e-4;

    let mut ps = ParamStore::new();
    let a = ps.add("c.anchors", &[3, 4, 3], normal_vec(&mut rng, 36, 1.0), true).expect("new");
    let b = ps.add("c.bias", &[4], normal_vec(&mut rng, 4, 1.0), true).expect("new");
    r.line("sph_conv", fd_error(&mut ps, &x, &|r, ps, n| r.sph_conv(ps, n, a, b).expect("shapes"), 1), tol);

    let mut ps = ParamStore::new();
    let w = ps.add("p.weight", &[4, 3], normal_vec(&mut rng, 12, 1.0), true).expect("new");
    let b = ps.add("p.bias", &[4], normal_vec(&mut rng, 4, 1.0), true).expect("new");
    r.line("pointwise", fd_error(&mut ps, &x, &|r, ps, n| r.pointwise(ps, n, w, b).expect("shapes"), 2), tol);

    let mut ps = ParamStore::new();
    r.line("relu", fd_error(&mut ps, &x, &|r, _, n| r.relu(n), 3), tol);
    for (name, mode) in [("norm_train", Mode::Train), ("norm_eval", Mode::Eval)] {
        let mut ps = ParamStore::new();
        let np = norm_params(&mut ps, &mut rng, 3);
        r.line(name, fd_error(&mut ps, &x, &|r, ps, n| r.norm(ps, n, np, mode).expect("shapes"), 4), tol);
    }
    let mut ps = ParamStore::new();
    let add: Build = &|r, _, n| {
        let h = r.relu(n);
        r.add(n, h).expect("same shape")
    };
    r.line("add", fd_error(&mut ps, &x, add, 5), tol);
    r.line("truncate", fd_error(&mut ps, &x, &|r, _, n| r.downsample_spectral(n).expect("even"), 6), tol);
    r.line("zeropad", fd_error(&mut ps, &x, &|r, _, n| r.upsample_spectral(n).expect("ok"), 7), tol);
    r.line("avg_pool", fd_error(&mut ps, &x, &|r, _, n| r.avg_pool(n).expect("even"), 8), tol);
    r.line("upsample_nearest", fd_error(&mut ps, &x, &|r, _, n| r.upsample_nearest(n).expect("ok"), 9), tol);

    let mut ps = ParamStore::new();
    let k = ps.add("q.kernel", &[2, 3, 3, 3], normal_vec(&mut rng, 54, 1.0), true).expect("new");
    let b = ps.add("q.bias", &[2], normal_vec(&mut rng, 2, 1.0), true).expect("new");
    r.line("planar_conv", fd_error(&mut ps, &x, &|r, ps, n| r.planar_conv(ps, n, k, b).expect("shapes"), 10), tol);

    let xb = band_batch(&mut rng, 2, 2, 8);
    for arch in [Arch::Schn, Arch::PlanarBaseline] {
        let cfg = HourglassConfig {
            bandlimit: 8,
            in_channels: 2,
            num_classes: 3,
            levels: 2,
            channels: vec![4, 8, 8],
            blocks_per_level: 1,
            anchors: 3,
            filter_mode: FilterMode::Localized,
            bottleneck_ratio: 2,
            arch,
        };
        let mut model = Hourglass::new(cfg, 4).expect("valid config");
        // Zero shifts leave relus of constant channels on their kink.
        for p in model.params_mut().iter_mut() {
            if p.name().ends_with(".shift") || p.name().ends_with(".bias") {
                let noise = normal_vec(&mut rng, p.len(), 0.1);
                p.values_mut().copy_from_slice(&noise);
            }
        }
        let e = (0..3).map(|s| model_fd_error(&mut model, &xb, s)).fold(0.0, f64::max);
        r.line(&format!("hourglass_{}", arch.as_str()), e, tol);
    }
}

/// Runs the selected suites; true iff every property passes.
pub fn run(suite: Suite) -> bool {
    let selected: &[(Suite, &'static str, fn(&mut Report))] = &[
        (Suite::Sht, "sht", sht),
        (Suite::Rotation, "rotation", rotation),
        (Suite::Equivariance, "equivariance", equivariance),
        (Suite::Gradients, "gradients", gradients),
    ];
    let mut all = true;
    for (s, name, f) in selected {
        if suite == Suite::All || suite == *s {
            let mut report = Report {
                suite: name,
                all_pass: true,
            };
            f(&mut report);
            all &= report.all_pass;
        }
    }
    println!("{}", if all { "all checks passed" } else { "some checks FAILED" });
    all
}
