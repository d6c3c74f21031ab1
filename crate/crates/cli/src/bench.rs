use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use schn::diffnet::{Batch, ComputationRecord, Mode, NodeId, NormParams, ParamStore};
use schn::harmonics::{sht_forward, sht_inverse};
use schn::sphgrid::{make_grid, SphericalSignal};

use crate::{BenchSuite, Failure};

const LAYER_CHANNELS: usize = 16;

fn median_ms(repeats: usize, mut f: impl FnMut()) -> f64 {
    f();
    let mut times: Vec<f64> = (0..repeats.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn sht_row(b: usize, threads: usize, repeats: usize) -> Result<(), Failure> {
    let grid = make_grid(b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(b as u64);
    let s = SphericalSignal::new(grid.clone(), normal(&mut rng, grid.len()))?;
    let c = sht_forward(&s);
    let (fwd, inv) = schn::with_threads(threads, || {
        let fwd = median_ms(repeats, || {
            std::hint::black_box(sht_forward(&s));
        });
        let inv = median_ms(repeats, || {
            std::hint::black_box(sht_inverse(&c, &grid).expect("matching grid"));
        });
        (fwd, inv)
    });
    println!(
        "suite=sht bandlimit={b} threads={} sht_forward_ms={fwd:.3} sht_inverse_ms={inv:.3} round_trip_ms={:.3}",
        threads,
        fwd + inv
    );
    Ok(())
}

type Layer<'a> = &'a (dyn Fn(&mut ComputationRecord, &mut ParamStore, NodeId) -> NodeId + Sync);

fn layer_row(name: &str, b: usize, threads: usize, repeats: usize, ps: &mut ParamStore, layer: Layer) -> Result<(), Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Batch::new(1, LAYER_CHANNELS, b, normal(&mut rng, LAYER_CHANNELS * 4 * b * b))?;
    let (fwd, bwd) = schn::with_threads(threads, || {
        let fwd = median_ms(repeats, || {
            let mut rec = ComputationRecord::new();
            let xi = rec.input(x.clone());
            std::hint::black_box(layer(&mut rec, ps, xi));
        });
        let mut rec = ComputationRecord::new();
        let xi = rec.input(x.clone());
        let y = layer(&mut rec, ps, xi);
        let seed = rec.value(y).clone();
        let bwd = median_ms(repeats, || {
            ps.zero_grads();
            std::hint::black_box(rec.backward(ps, y, seed.clone()).expect("matching shapes"));
        });
        (fwd, bwd)
    });
    println!(
        "suite=layers bandlimit={b} threads={} layer={name} channels={LAYER_CHANNELS} forward_ms={fwd:.3} backward_ms={bwd:.3}",
        threads
    );
    Ok(())
}

fn layer_rows(b: usize, threads: usize, repeats: usize) -> Result<(), Failure> {
    let c = LAYER_CHANNELS;
    let k = 16.min(b);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ps = ParamStore::new();
    let anchors = ps.add("c.anchors", &[c, c, k], normal(&mut rng, c * c * k), true)?;
    let cbias = ps.add("c.bias", &[c], vec![0.0; c], true)?;
    let weight = ps.add("p.weight", &[c, c], normal(&mut rng, c * c), true)?;
    let pbias = ps.add("p.bias", &[c], vec![0.0; c], true)?;
    let np = NormParams {
        scale: ps.add("n.scale", &[c], vec![1.0; c], true)?,
        shift: ps.add("n.shift", &[c], vec![0.0; c], true)?,
        running_mean: ps.add("n.rm", &[c], vec![0.0; c], false)?,
        running_var: ps.add("n.rv", &[c], vec![1.0; c], false)?,
    };
    layer_row("spectral_conv", b, threads, repeats, &mut ps, &|r, ps, n| {
        r.sph_conv(ps, n, anchors, cbias).expect("shapes")
    })?;
    layer_row("pointwise_conv", b, threads, repeats, &mut ps, &|r, ps, n| {
        r.pointwise(ps, n, weight, pbias).expect("shapes")
    })?;
    layer_row("weighted_norm", b, threads, repeats, &mut ps, &|r, ps, n| {
        r.norm(ps, n, np, Mode::Train).expect("shapes")
    })?;
    Ok(())
}

fn rayon_default() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Single-threaded rows first, then rows at the requested thread count.
pub fn run(suite: BenchSuite, bandlimits: &[usize], repeats: usize, threads: usize) -> Result<(), Failure> {
    let bandlimits = if bandlimits.is_empty() { vec![32, 64, 128] } else { bandlimits.to_vec() };
    let parallel = if threads == 0 { rayon_default() } else { threads };
    let mut counts = vec![1];
    if parallel != 1 {
        counts.push(parallel);
    }
    for &b in &bandlimits {
        if b == 0 {
            return Err(Failure::config("--bandlimit must be at least 1"));
        }
        for &t in &counts {
            if matches!(suite, BenchSuite::Sht | BenchSuite::All) {
                sht_row(b, t, repeats)?;
            }
            if matches!(suite, BenchSuite::Layers | BenchSuite::All) {
                layer_rows(b, t, repeats)?;
            }
        }
    }
    Ok(())
}
