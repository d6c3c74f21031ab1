mod common;

use common::{band_batch, dot, noise_batch, normal_vec, rel_err};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schn::diffnet::{
    Arch, Batch, ComputationRecord, FilterMode, Hourglass, HourglassConfig, Mode, NodeId, NormParams, ParamId,
    ParamStore, ResidualBlock,
};
use schn::harmonics::RotationZYZ;

type Build<'a> = &'a dyn Fn(&mut ComputationRecord, &mut ParamStore, NodeId) -> NodeId;

fn run(store: &mut ParamStore, x: &Batch, f: Build) -> Batch {
    let mut rec = ComputationRecord::new();
    let xi = rec.input(x.clone());
    let y = f(&mut rec, store, xi);
    rec.into_value(y)
}

fn sph_params(ps: &mut ParamStore, name: &str, anchors: Vec<f64>, shape: [usize; 3], bias: Vec<f64>) -> (ParamId, ParamId) {
    let a = ps.add(&format!("{name}.anchors"), &shape, anchors, true).unwrap();
    let b = ps.add(&format!("{name}.bias"), &[shape[1]], bias, true).unwrap();
    (a, b)
}

fn pw_params(ps: &mut ParamStore, name: &str, w: Vec<f64>, cout: usize, cin: usize, bias: Vec<f64>) -> (ParamId, ParamId) {
    let a = ps.add(&format!("{name}.weight"), &[cout, cin], w, true).unwrap();
    let b = ps.add(&format!("{name}.bias"), &[cout], bias, true).unwrap();
    (a, b)
}

fn norm_params(ps: &mut ParamStore, name: &str, scale: Vec<f64>, shift: Vec<f64>) -> NormParams {
    let c = scale.len();
    NormParams {
        scale: ps.add(&format!("{name}.scale"), &[c], scale, true).unwrap(),
        shift: ps.add(&format!("{name}.shift"), &[c], shift, true).unwrap(),
        running_mean: ps.add(&format!("{name}.rm"), &[c], vec![0.3; c], false).unwrap(),
        running_var: ps.add(&format!("{name}.rv"), &[c], vec![1.7; c], false).unwrap(),
    }
}

fn equivariance_defect(store: &mut ParamStore, x: &Batch, f: Build, rot: &RotationZYZ) -> (f64, f64) {
    let y = run(store, x, f);
    let a = y.rotated(rot).unwrap();
    let b = run(store, &x.rotated(rot).unwrap(), f);
    (a.max_abs_diff(&b), y.max_abs())
}

// ---------------------------------------------------------------- sph_conv

#[test]
fn sph_conv_unit_gains_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = band_batch(&mut rng, 2, 1, 8, 8);
    let mut ps = ParamStore::new();
    let (a, b) = sph_params(&mut ps, "c", vec![1.0; 4], [1, 1, 4], vec![0.0]);
    let y = run(&mut ps, &x, &|r, ps, n| r.sph_conv(ps, n, a, b).unwrap());
    assert!(y.max_abs_diff(&x) < 1e-10, "{}", y.max_abs_diff(&x));
}

#[test]
fn sph_conv_zero_filters_give_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = band_batch(&mut rng, 1, 2, 8, 8);
    let mut ps = ParamStore::new();
    let (a, b) = sph_params(&mut ps, "c", vec![0.0; 2 * 3 * 4], [2, 3, 4], vec![0.5, -1.0, 2.0]);
    let y = run(&mut ps, &x, &|r, ps, n| r.sph_conv(ps, n, a, b).unwrap());
    for (c, want) in [0.5, -1.0, 2.0].iter().enumerate() {
        let plane = &y.data[c * y.nodes()..(c + 1) * y.nodes()];
        assert!(plane.iter().all(|v| (v - want).abs() < 1e-12));
    }
}

#[test]
fn sph_conv_commutes_with_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = band_batch(&mut rng, 2, 3, 8, 8);
    let mut ps = ParamStore::new();
    let (a, b) = sph_params(&mut ps, "c", normal_vec(&mut rng, 3 * 2 * 5, 1.0), [3, 2, 5], vec![0.3, -0.2]);
    let rot = RotationZYZ::random(&mut rng);
    let (d, _) = equivariance_defect(&mut ps, &x, &|r, ps, n| r.sph_conv(ps, n, a, b).unwrap(), &rot);
    assert!(d < 1e-8, "{d}");
}

#[test]
fn sph_conv_rejects_mismatched_anchors() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = band_batch(&mut rng, 1, 2, 4, 4);
    let mut ps = ParamStore::new();
    let (a, b) = sph_params(&mut ps, "c", vec![0.0; 3 * 2 * 2], [3, 2, 2], vec![0.0; 2]);
    let mut rec = ComputationRecord::new();
    let xi = rec.input(x);
    assert!(rec.sph_conv(&ps, xi, a, b).is_err());
    let (a, b) = sph_params(&mut ps, "d", vec![0.0; 2 * 2 * 5], [2, 2, 5], vec![0.0; 2]);
    assert!(rec.sph_conv(&ps, xi, a, b).is_err(), "5 anchors at bandlimit 4");
}

// ---------------------------------------------------------------- pointwise

#[test]
fn pointwise_identity_and_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = noise_batch(&mut rng, 2, 3, 4);
    let mut ps = ParamStore::new();
    let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let (w, b) = pw_params(&mut ps, "i", eye, 3, 3, vec![0.0; 3]);
    let y = run(&mut ps, &x, &|r, ps, n| r.pointwise(ps, n, w, b).unwrap());
    assert_eq!(y, x);
    let (w, b) = pw_params(&mut ps, "z", vec![0.0; 6], 2, 3, vec![4.0, -1.5]);
    let y = run(&mut ps, &x, &|r, ps, n| r.pointwise(ps, n, w, b).unwrap());
    assert_eq!(y.channels, 2);
    for (i, plane) in y.data.chunks(y.nodes()).enumerate() {
        let want = [4.0, -1.5][i % 2];
        assert!(plane.iter().all(|v| *v == want));
    }
}

#[test]
fn pointwise_commutes_with_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = band_batch(&mut rng, 1, 3, 8, 8);
    let mut ps = ParamStore::new();
    let (w, b) = pw_params(&mut ps, "p", normal_vec(&mut rng, 12, 1.0), 4, 3, normal_vec(&mut rng, 4, 1.0));
    let rot = RotationZYZ::random(&mut rng);
    let (d, _) = equivariance_defect(&mut ps, &x, &|r, ps, n| r.pointwise(ps, n, w, b).unwrap(), &rot);
    assert!(d < 1e-8, "{d}");
}

#[test]
fn pointwise_bias_gradient_counts_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = noise_batch(&mut rng, 1, 2, 4);
    let mut ps = ParamStore::new();
    let (w, b) = pw_params(&mut ps, "p", vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0; 2]);
    let mut rec = ComputationRecord::new();
    let xi = rec.input(x);
    let y = rec.pointwise(&ps, xi, w, b).unwrap();
    let ones = Batch::new(1, 2, 4, vec![1.0; 2 * 64]).unwrap();
    rec.backward(&mut ps, y, ones).unwrap();
    assert_eq!(ps.get(b).grad(), &[64.0, 64.0]);
}

// ---------------------------------------------------------------- relu / norm

#[test]
fn relu_values() {
    let x = Batch::new(1, 1, 1, vec![-1.0, 2.0, 0.0, -0.5]).unwrap();
    let mut rec = ComputationRecord::new();
    let xi = rec.input(x);
    let y = rec.relu(xi);
    assert_eq!(rec.value(y).data, vec![0.0, 2.0, 0.0, 0.0]);
}

#[test]
fn norm_of_constant_channel_is_shift() {
    let x = Batch::new(2, 1, 4, vec![3.25; 2 * 64]).unwrap();
    let mut ps = ParamStore::new();
    let np = norm_params(&mut ps, "n", vec![2.0], vec![0.7]);
    let y = run(&mut ps, &x, &|r, ps, n| r.norm(ps, n, np, Mode::Train).unwrap());
    assert!(y.data.iter().all(|v| (v - 0.7).abs() < 1e-12));
}

#[test]
fn norm_standardizes_and_tracks_running_stats() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut x = band_batch(&mut rng, 2, 2, 8, 8);
    x.data.iter_mut().for_each(|v| *v = 3.0 * *v + 5.0);
    let mut ps = ParamStore::new();
    let np = norm_params(&mut ps, "n", vec![1.0, 1.0], vec![0.0, 0.0]);
    let y = run(&mut ps, &x, &|r, ps, n| r.norm(ps, n, np, Mode::Train).unwrap());
    let grid = schn::sphgrid::make_grid(8).unwrap();
    for c in 0..2 {
        let (mut m, mut q, mut w) = (0.0, 0.0, 0.0);
        for s in 0..2 {
            let plane = &y.data[(s * 2 + c) * 256..(s * 2 + c + 1) * 256];
            for (i, v) in plane.iter().enumerate() {
                let a = grid.node_area(i / 16);
                m += a * v;
                q += a * v * v;
                w += a;
            }
        }
        assert!((m / w).abs() < 1e-12);
        assert!((q / w - 1.0).abs() < 1e-3, "unit variance up to eps");
    }
    // running mean moved one tenth of the way from 0.3 towards ~5
    let rm = ps.get(np.running_mean).values();
    assert!(rm.iter().all(|v| *v > 0.3 && *v < 1.0), "{rm:?}");
}

#[test]
fn norm_commutes_with_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = band_batch(&mut rng, 2, 2, 8, 8);
    let mut ps = ParamStore::new();
    let np = norm_params(&mut ps, "n", vec![1.3, 0.4], vec![0.2, -0.1]);
    let rot = RotationZYZ::random(&mut rng);
    let (d, _) = equivariance_defect(&mut ps, &x, &|r, ps, n| r.norm(ps, n, np, Mode::Train).unwrap(), &rot);
    assert!(d < 1e-7, "{d}");
}

// ---------------------------------------------------------------- resampling

#[test]
fn spectral_up_down_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = band_batch(&mut rng, 1, 2, 16, 8);
    let mut ps = ParamStore::new();
    let y = run(&mut ps, &x, &|r, _, n| {
        let d = r.downsample_spectral(n).unwrap();
        r.upsample_spectral(d).unwrap()
    });
    assert!(y.max_abs_diff(&x) < 1e-9, "{}", y.max_abs_diff(&x));

    let c = Batch::new(1, 1, 8, vec![2.5; 256]).unwrap();
    let y = run(&mut ps, &c, &|r, _, n| {
        let d = r.downsample_spectral(n).unwrap();
        r.upsample_spectral(d).unwrap()
    });
    assert!(y.max_abs_diff(&c) < 1e-12);
}

#[test]
fn spectral_resampling_commutes_with_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rot = RotationZYZ::random(&mut rng);
    let mut ps = ParamStore::new();
    let x = band_batch(&mut rng, 1, 2, 16, 16);
    let (d, _) = equivariance_defect(&mut ps, &x, &|r, _, n| r.downsample_spectral(n).unwrap(), &rot);
    assert!(d < 1e-9, "down {d}");
    let x = band_batch(&mut rng, 1, 2, 8, 8);
    let (d, _) = equivariance_defect(&mut ps, &x, &|r, _, n| r.upsample_spectral(n).unwrap(), &rot);
    assert!(d < 1e-9, "up {d}");
}

#[test]
fn downsample_rejects_odd_bandlimit() {
    let mut rec = ComputationRecord::new();
    let xi = rec.input(Batch::zeros(1, 1, 3));
    assert!(rec.downsample_spectral(xi).is_err());
    assert!(rec.avg_pool(xi).is_err());
}

#[test]
fn planar_resampling_keeps_constants() {
    let c = Batch::new(1, 1, 4, vec![-1.25; 64]).unwrap();
    let mut ps = ParamStore::new();
    let y = run(&mut ps, &c, &|r, _, n| {
        let d = r.avg_pool(n).unwrap();
        r.upsample_nearest(d).unwrap()
    });
    assert_eq!(y, c);
}

// ---------------------------------------------------------------- planar conv

fn planar_params(ps: &mut ParamStore, name: &str, kernel: Vec<f64>, cout: usize, cin: usize) -> (ParamId, ParamId) {
    let k = ps.add(&format!("{name}.kernel"), &[cout, cin, 3, 3], kernel, true).unwrap();
    let b = ps.add(&format!("{name}.bias"), &[cout], vec![0.0; cout], true).unwrap();
    (k, b)
}

#[test]
fn planar_conv_identity_and_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = noise_batch(&mut rng, 2, 1, 4);
    let mut ps = ParamStore::new();
    let mut center = vec![0.0; 9];
    center[4] = 1.0;
    let (k, b) = planar_params(&mut ps, "id", center, 1, 1);
    let y = run(&mut ps, &x, &|r, ps, n| r.planar_conv(ps, n, k, b).unwrap());
    assert_eq!(y, x);

    let ones = Batch::new(1, 1, 4, vec![1.0; 64]).unwrap();
    let (k, b) = planar_params(&mut ps, "box", vec![1.0; 9], 1, 1);
    let y = run(&mut ps, &ones, &|r, ps, n| r.planar_conv(ps, n, k, b).unwrap());
    for j in 0..8 {
        for kk in 0..8 {
            let want = if j == 0 || j == 7 { 6.0 } else { 9.0 };
            assert_eq!(y.data[j * 8 + kk], want);
        }
    }
}

#[test]
fn planar_conv_commutes_with_azimuth_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = noise_batch(&mut rng, 1, 2, 4);
    let mut ps = ParamStore::new();
    let (k, b) = planar_params(&mut ps, "p", normal_vec(&mut rng, 3 * 2 * 9, 1.0), 3, 2);
    let shift = |b: &Batch| {
        let mut out = b.clone();
        let res = b.resolution();
        for (src, dst) in b.data.chunks(res).zip(out.data.chunks_mut(res)) {
            for k in 0..res {
                dst[(k + 1) % res] = src[k];
            }
        }
        out
    };
    let f: Build = &|r, ps, n| r.planar_conv(ps, n, k, b).unwrap();
    let a = shift(&run(&mut ps, &x, f));
    let c = run(&mut ps, &shift(&x), f);
    assert_eq!(a, c);
}

// ---------------------------------------------------------------- blocks and model

fn block_cfg() -> HourglassConfig {
    HourglassConfig {
        bandlimit: 16,
        channels: vec![16, 16],
        levels: 1,
        ..HourglassConfig::desk()
    }
}

fn zero_all(ps: &mut ParamStore) {
    for p in ps.iter_mut().filter(|p| p.trainable()) {
        p.values_mut().iter_mut().for_each(|v| *v = 0.0);
    }
}

#[test]
fn zero_block_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = band_batch(&mut rng, 2, 16, 8, 8);
    for arch in [Arch::Schn, Arch::PlanarBaseline] {
        let cfg = block_cfg().with_arch(arch);
        let mut ps = ParamStore::new();
        let blk = ResidualBlock::new(&mut ps, &cfg, "b", 16, 8, 1).unwrap();
        let f: Build = &|r, ps, n| blk.forward(r, ps, n, Mode::Train).unwrap();
        let y = run(&mut ps, &x, f);
        assert_eq!((y.channels, y.bandlimit), (16, 8));
        zero_all(&mut ps);
        assert_eq!(run(&mut ps, &x, f), x, "{arch:?}");
    }
}

#[test]
fn block_rejects_indivisible_width() {
    let mut ps = ParamStore::new();
    assert!(ResidualBlock::new(&mut ps, &block_cfg(), "b", 10, 8, 1).is_err());
}

/// Relative commutation defect of a random spherical block at B=16, worst over 50 trials.
#[test]
fn schn_block_equivariance_defect() {
    let cfg = block_cfg();
    let mut worst: f64 = 0.0;
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let mut ps = ParamStore::new();
        let blk = ResidualBlock::new(&mut ps, &cfg, "b", 16, 16, trial).unwrap();
        let x = band_batch(&mut rng, 1, 16, 16, 16);
        let rot = RotationZYZ::random(&mut rng);
        let (d, scale) = equivariance_defect(&mut ps, &x, &|r, ps, n| blk.forward(r, ps, n, Mode::Train).unwrap(), &rot);
        worst = worst.max(d / scale);
    }
    println!("worst relative block defect: {worst:.4}");
    assert!(worst < 0.05, "{worst}");
}

fn tiny_cfg(arch: Arch) -> HourglassConfig {
    HourglassConfig {
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
    }
}

#[test]
fn hourglass_output_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for arch in [Arch::Schn, Arch::PlanarBaseline] {
        let cfg = HourglassConfig::desk().with_arch(arch);
        let mut model = Hourglass::new(cfg, 1).unwrap();
        let x = band_batch(&mut rng, 1, 3, 32, 32);
        let y = model.infer(x).unwrap();
        assert_eq!((y.samples, y.channels, y.resolution()), (1, 6, 64));
    }
}

#[test]
fn zero_head_gives_uniform_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut model = Hourglass::new(tiny_cfg(Arch::Schn), 2).unwrap();
    for name in ["head.weight", "head.bias"] {
        let id = model.params().id(name).unwrap();
        model.params_mut().get_mut(id).values_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let y = model.infer(band_batch(&mut rng, 2, 2, 8, 8)).unwrap();
    let nodes = y.nodes();
    for s in 0..2 {
        for p in 0..nodes {
            let logits: Vec<f64> = (0..3).map(|c| y.data[(s * 3 + c) * nodes + p]).collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for l in logits {
                assert!((l.exp() / z - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn all_zero_network_outputs_head_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut model = Hourglass::new(tiny_cfg(Arch::Schn), 3).unwrap();
    zero_all(model.params_mut());
    let id = model.params().id("head.bias").unwrap();
    model.params_mut().get_mut(id).values_mut().copy_from_slice(&[0.5, -0.25, 1.0]);
    let y = model.infer(band_batch(&mut rng, 1, 2, 8, 8)).unwrap();
    for (c, want) in [0.5, -0.25, 1.0].iter().enumerate() {
        assert!(y.data[c * 256..(c + 1) * 256].iter().all(|v| v == want));
    }
}

#[test]
fn config_validation() {
    assert!(HourglassConfig::desk().validate().is_ok());
    assert!(HourglassConfig::reference().validate().is_ok());
    let bad = [
        HourglassConfig { bandlimit: 20, ..HourglassConfig::desk() },
        HourglassConfig { channels: vec![16, 32, 64], ..HourglassConfig::desk() },
        HourglassConfig { channels: vec![16, 32, 64, 66], ..HourglassConfig::desk() },
        HourglassConfig { channels: vec![16, 32, 64, 2048], ..HourglassConfig::desk() },
        HourglassConfig { num_classes: 1, ..HourglassConfig::desk() },
        HourglassConfig { anchors: 1, ..HourglassConfig::desk() },
        HourglassConfig { levels: 5, ..HourglassConfig::desk() },
    ];
    for cfg in bad {
        assert!(Hourglass::new(cfg.clone(), 0).is_err(), "{cfg:?}");
    }
}

#[test]
fn parameter_count_matches_formula() {
    for arch in [Arch::Schn, Arch::PlanarBaseline] {
        for cfg in [HourglassConfig::desk(), tiny_cfg(arch), HourglassConfig { filter_mode: FilterMode::Global, ..HourglassConfig::desk() }] {
            let cfg = cfg.with_arch(arch);
            let model = Hourglass::new(cfg.clone(), 0).unwrap();
            assert_eq!(model.params().trainable_count(), cfg.parameter_count());
        }
    }
}

#[test]
fn reference_parameter_count_is_stable() {
    assert_eq!(HourglassConfig::reference().parameter_count(), REFERENCE_SCHN_PARAMS);
    assert_eq!(
        HourglassConfig::reference().with_arch(Arch::PlanarBaseline).parameter_count(),
        REFERENCE_PLANAR_PARAMS
    );
}

const REFERENCE_SCHN_PARAMS: usize = 549_734;
const REFERENCE_PLANAR_PARAMS: usize = 476_998;

#[test]
fn same_seed_same_weights() {
    let a = Hourglass::new(HourglassConfig::desk(), 9).unwrap();
    let b = Hourglass::new(HourglassConfig::desk(), 9).unwrap();
    let c = Hourglass::new(HourglassConfig::desk(), 10).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}

// ---------------------------------------------------------------- gradients

const EPS: f64 = 1e-5;

/// Analytic vs central-difference gradients of `<v, f(x)>` for every trainable
/// scalar and every input value. Returns `(param_err, input_err)`.
fn gradient_errors(ps: &mut ParamStore, x: &Batch, f: Build, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = run(ps, x, f);
    let v = normal_vec(&mut rng, probe.data.len(), 1.0);
    let loss = |ps: &mut ParamStore, x: &Batch| dot(&run(ps, x, f).data, &v);

    ps.zero_grads();
    let mut rec = ComputationRecord::new();
    let xi = rec.input(x.clone());
    let y = f(&mut rec, ps, xi);
    let seed_grad = Batch { data: v.clone(), ..rec.value(y).clone() };
    let grads = rec.backward(ps, y, seed_grad).unwrap();
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
        let down = loss(ps, x);
        numeric_p[i] = (up - down) / (2.0 * EPS);
    }
    ps.set_flat_values(&theta);

    let mut numeric_x = vec![0.0; x.data.len()];
    for i in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[i] += EPS;
        let up = loss(ps, &xp);
        xp.data[i] = x.data[i] - EPS;
        let down = loss(ps, &xp);
        numeric_x[i] = (up - down) / (2.0 * EPS);
    }
    let pe = if theta.is_empty() { 0.0 } else { rel_err(&analytic_p, &numeric_p) };
    (pe, rel_err(&analytic_x, &numeric_x))
}

fn assert_gradients(name: &str, ps: &mut ParamStore, x: &Batch, f: Build) {
    let (pe, xe) = gradient_errors(ps, x, f, 99);
    assert!(pe < 1e-5 && xe < 1e-5, "{name}: params {pe:.2e}, input {xe:.2e}");
}

#[test]
fn gradient_sph_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let x = noise_batch(&mut rng, 2, 3, 4);
    let mut ps = ParamStore::new();
    let (a, b) = sph_params(&mut ps, "c", normal_vec(&mut rng, 3 * 4 * 3, 1.0), [3, 4, 3], normal_vec(&mut rng, 4, 1.0));
    assert_gradients("sph_conv", &mut ps, &x, &|r, ps, n| r.sph_conv(ps, n, a, b).unwrap());
}

#[test]
fn gradient_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = noise_batch(&mut rng, 2, 3, 4);
    let mut ps = ParamStore::new();
    let (w, b) = pw_params(&mut ps, "p", normal_vec(&mut rng, 12, 1.0), 4, 3, normal_vec(&mut rng, 4, 1.0));
    assert_gradients("pointwise", &mut ps, &x, &|r, ps, n| r.pointwise(ps, n, w, b).unwrap());
}

#[test]
fn gradient_relu() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x = noise_batch(&mut rng, 2, 2, 4);
    let mut ps = ParamStore::new();
    assert_gradients("relu", &mut ps, &x, &|r, _, n| r.relu(n));
}

#[test]
fn gradient_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x = noise_batch(&mut rng, 2, 3, 4);
    for mode in [Mode::Train, Mode::Eval] {
        let mut ps = ParamStore::new();
        let np = norm_params(&mut ps, "n", normal_vec(&mut rng, 3, 1.0), normal_vec(&mut rng, 3, 1.0));
        assert_gradients("norm", &mut ps, &x, &|r, ps, n| r.norm(ps, n, np, mode).unwrap());
    }
}

#[test]
fn gradient_add_and_resampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let x = noise_batch(&mut rng, 2, 2, 4);
    let mut ps = ParamStore::new();
    assert_gradients("add", &mut ps, &x, &|r, _, n| {
        let h = r.relu(n);
        r.add(n, h).unwrap()
    });
    assert_gradients("down", &mut ps, &x, &|r, _, n| r.downsample_spectral(n).unwrap());
    assert_gradients("up", &mut ps, &x, &|r, _, n| r.upsample_spectral(n).unwrap());
    assert_gradients("pool", &mut ps, &x, &|r, _, n| r.avg_pool(n).unwrap());
    assert_gradients("nearest", &mut ps, &x, &|r, _, n| r.upsample_nearest(n).unwrap());
}

#[test]
fn gradient_planar_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let x = noise_batch(&mut rng, 2, 3, 4);
    let mut ps = ParamStore::new();
    let (k, b) = planar_params(&mut ps, "p", normal_vec(&mut rng, 2 * 3 * 9, 1.0), 2, 3);
    assert_gradients("planar_conv", &mut ps, &x, &|r, ps, n| r.planar_conv(ps, n, k, b).unwrap());
}

#[test]
fn gradient_residual_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let x = noise_batch(&mut rng, 2, 4, 4);
    for arch in [Arch::Schn, Arch::PlanarBaseline] {
        let cfg = HourglassConfig { anchors: 3, bottleneck_ratio: 2, ..block_cfg() }.with_arch(arch);
        let mut ps = ParamStore::new();
        let blk = ResidualBlock::new(&mut ps, &cfg, "b", 4, 4, 5).unwrap();
        assert_gradients("block", &mut ps, &x, &|r, ps, n| blk.forward(r, ps, n, Mode::Train).unwrap());
    }
}

/// Directional derivative of the whole model along a random parameter direction.
fn directional_error(model: &mut Hourglass, x: &Batch, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = ComputationRecord::new();
    let y = model.forward(&mut rec, x.clone(), Mode::Train).unwrap();
    let w = normal_vec(&mut rng, rec.value(y).data.len(), 1.0);
    let seed_grad = Batch { data: w.clone(), ..rec.value(y).clone() };
    model.params_mut().zero_grads();
    rec.backward(model.params_mut(), y, seed_grad).unwrap();
    let g = model.params().flat_grads();
    let theta = model.params().flat_values();
    let mut v = normal_vec(&mut rng, theta.len(), 1.0);
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|d| *d /= norm);
    let mut eval = |t: Vec<f64>| {
        model.params_mut().set_flat_values(&t);
        let mut rec = ComputationRecord::new();
        let y = model.forward(&mut rec, x.clone(), Mode::Train).unwrap();
        dot(&rec.value(y).data, &w)
    };
    let up = eval(theta.iter().zip(&v).map(|(t, d)| t + EPS * d).collect());
    let down = eval(theta.iter().zip(&v).map(|(t, d)| t - EPS * d).collect());
    model.params_mut().set_flat_values(&theta);
    let numeric = (up - down) / (2.0 * EPS);
    let analytic = dot(&g, &v);
    (analytic - numeric).abs() / numeric.abs().max(analytic.abs())
}

#[test]
fn gradient_whole_hourglass() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let x = band_batch(&mut rng, 2, 2, 8, 8);
    for arch in [Arch::Schn, Arch::PlanarBaseline] {
        let mut model = Hourglass::new(tiny_cfg(arch), 4).unwrap();
        // Zero shifts put relus of dead (constant) channels exactly on their
        // kink; move to a generic point first.
        for p in model.params_mut().iter_mut() {
            if p.name().ends_with(".shift") || p.name().ends_with(".bias") {
                let noise = normal_vec(&mut rng, p.len(), 0.1);
                p.values_mut().copy_from_slice(&noise);
            }
        }
        for seed in 0..3 {
            let e = directional_error(&mut model, &x, seed);
            assert!(e < 1e-4, "{arch:?} seed {seed}: {e:.2e}");
        }
    }
}
