//! Loss, optimizer, metrics, the training loop and checkpoints.

mod checkpoint;
mod metrics;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use metrics::{argmax, mean_iou, EvalReport};
pub use crate::scenes::Orientation;

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffnet::{Batch, ComputationRecord, Hourglass, Mode, ParamStore};
use crate::error::{Error, Result};
use crate::harmonics::RotationZYZ;
use crate::scenes::{sample_seed, Dataset};
use crate::sphgrid::{make_grid, FeatureMap, LabelMap};

/// Seed of the per-sample rotations used by `3d` evaluation.
pub const EVAL_ROTATION_SEED: u64 = 0x5EED_0E7A;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seeds weight init, shuffling and training rotations.
    pub seed: u64,
    pub train_orientation: Orientation,
    pub eval_orientation: Orientation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 1,
            train_orientation: Orientation::Canonical,
            eval_orientation: Orientation::Canonical,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("train.learning_rate = {}", self.learning_rate)));
        }
        for (k, b) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{k} = {b} outside [0, 1)")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("train.epsilon = {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Softmax cross-entropy per node, weighted by node area / 4pi and averaged
/// over the batch. Returns the loss and its gradient with respect to `logits`.
pub fn weighted_cross_entropy(logits: &Batch, labels: &[&LabelMap]) -> Result<(f64, Batch)> {
    if labels.len() != logits.samples {
        return Err(Error::ShapeMismatch(format!(
            "{} label maps for {} samples",
            labels.len(),
            logits.samples
        )));
    }
    let grid = make_grid(logits.bandlimit)?;
    let (c, nodes, res) = (logits.channels, logits.nodes(), grid.resolution());
    let inv_n = 1.0 / logits.samples as f64;
    let mut grad = Batch::zeros(logits.samples, c, logits.bandlimit);
    let mut loss = 0.0;
    let mut p = vec![0.0; c];
    for (n, lab) in labels.iter().enumerate() {
        if lab.bandlimit() != logits.bandlimit {
            return Err(Error::BandlimitMismatch {
                expected: logits.bandlimit,
                actual: lab.bandlimit(),
            });
        }
        let x = logits.sample(n);
        let g = &mut grad.data[n * c * nodes..(n + 1) * c * nodes];
        for (i, &y) in lab.labels().iter().enumerate() {
            let y = y as usize;
            if y >= c {
                return Err(Error::Domain(format!("label {y} >= {c} classes")));
            }
            let w = grid.node_area(i / res) / (4.0 * PI) * inv_n;
            let max = (0..c).map(|k| x[k * nodes + i]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for k in 0..c {
                p[k] = (x[k * nodes + i] - max).exp();
                z += p[k];
            }
            loss += w * (z.ln() + max - x[y * nodes + i]);
            for k in 0..c {
                g[k * nodes + i] = w * (p[k] / z - if k == y { 1.0 } else { 0.0 });
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// Adam moments, one buffer per parameter in store order (empty for
/// non-trainable entries).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .iter()
            .map(|p| vec![0.0; if p.trainable() { p.len() } else { 0 }])
            .collect();
        Adam {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected update of every trainable parameter from its gradient.
    pub fn step(&mut self, store: &mut ParamStore, h: &AdamHyper) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - h.beta1.powi(t);
        let c2 = 1.0 - h.beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable() {
                continue;
            }
            let (values, grad) = p.split_mut();
            for i in 0..values.len() {
                let g = grad[i];
                m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
                v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
                values[i] -= h.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + h.epsilon);
            }
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub miou_w: f64,
    pub miou_u: f64,
    pub seconds: f64,
    /// Loss of every optimizer step in the epoch.
    pub step_losses: Vec<f64>,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} loss={:.6} miou_w={:.6} miou_u={:.6} seconds={:.3}",
            self.epoch, self.loss, self.miou_w, self.miou_u, self.seconds
        )
    }
}

fn rotation_from(seed: u64, stream: u64) -> RotationZYZ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    RotationZYZ::random(&mut rng)
}

/// Rotation applied to sample `index` during training epoch `epoch`.
pub fn train_rotation(seed: u64, epoch: usize, index: usize) -> RotationZYZ {
    rotation_from(sample_seed(seed ^ (epoch as u64).wrapping_mul(0xA24B_AED4_963E_E407), index), 3)
}

/// Rotation applied to sample `index` by `3d` evaluation.
pub fn eval_rotation(index: usize) -> RotationZYZ {
    rotation_from(sample_seed(EVAL_ROTATION_SEED, index), 4)
}

/// Visiting order of epoch `epoch`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 16);
    order.shuffle(&mut rng);
    order
}

fn check_compatible(model: &Hourglass, data: &Dataset) -> Result<()> {
    let cfg = model.config();
    let (Some(b), Some(c)) = (data.bandlimit(), data.num_classes()) else {
        return Err(Error::Config("empty dataset".into()));
    };
    if b != cfg.bandlimit {
        return Err(Error::BandlimitMismatch {
            expected: cfg.bandlimit,
            actual: b,
        });
    }
    if c > cfg.num_classes {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {c} classes, model predicts {}",
            cfg.num_classes
        )));
    }
    if data.samples[0].input.channels() != cfg.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} input channels, model expects {}",
            data.samples[0].input.channels(),
            cfg.in_channels
        )));
    }
    Ok(())
}

fn oriented(data: &Dataset, idx: &[usize], rot: impl Fn(usize) -> Option<RotationZYZ> + Sync) -> Result<Vec<(FeatureMap, LabelMap)>> {
    crate::par::map_range(idx.len(), |k| {
        let s = &data.samples[idx[k]];
        match rot(idx[k]) {
            None => Ok((s.input.clone(), s.labels.clone())),
            Some(r) => s.rotated(&r),
        }
    })
    .into_iter()
    .collect()
}

impl Checkpoint {
    /// Fresh model and optimizer state for a run.
    pub fn start(model: crate::diffnet::HourglassConfig, train: TrainConfig) -> Result<Self> {
        train.validate()?;
        let model = Hourglass::new(model, train.seed)?;
        let adam = Adam::new(model.params());
        Ok(Checkpoint {
            model,
            train,
            adam,
            epoch: 0,
        })
    }

    /// Runs one epoch over `data`.
    pub fn run_epoch(&mut self, data: &Dataset) -> Result<EpochLog> {
        check_compatible(&self.model, data)?;
        let start = Instant::now();
        let cfg = self.train.clone();
        let hyper = cfg.adam();
        let epoch = self.epoch;
        let order = epoch_order(cfg.seed, epoch, data.len());
        let mut report = EvalReport::new(self.model.config().num_classes);
        let mut step_losses = Vec::new();
        let mut weighted = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let pairs = oriented(data, chunk, |i| match cfg.train_orientation {
                Orientation::Canonical => None,
                Orientation::RandomRotation => Some(train_rotation(cfg.seed, epoch, i)),
            })?;
            let maps: Vec<FeatureMap> = pairs.iter().map(|p| p.0.clone()).collect();
            let labels: Vec<&LabelMap> = pairs.iter().map(|p| &p.1).collect();
            let mut rec = ComputationRecord::new();
            let out = self.model.forward(&mut rec, Batch::from_maps(&maps)?, Mode::Train)?;
            let (loss, grad) = weighted_cross_entropy(rec.value(out), &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    step,
                    loss,
                });
            }
            for (pred, gt) in argmax(rec.value(out))?.iter().zip(&labels) {
                report.add(pred, gt)?;
            }
            self.model.params_mut().zero_grads();
            rec.backward(self.model.params_mut(), out, grad)?;
            self.adam.step(self.model.params_mut(), &hyper);
            step_losses.push(loss);
            weighted += loss * chunk.len() as f64;
        }
        self.epoch += 1;
        Ok(EpochLog {
            epoch: self.epoch,
            loss: weighted / data.len() as f64,
            miou_w: report.miou_weighted(),
            miou_u: report.miou_unweighted(),
            seconds: start.elapsed().as_secs_f64(),
            step_losses,
        })
    }

    /// Trains until `train.epochs` epochs are done, reporting each one.
    pub fn train(&mut self, data: &Dataset, mut on_epoch: impl FnMut(&EpochLog)) -> Result<()> {
        while self.epoch < self.train.epochs {
            let log = self.run_epoch(data)?;
            on_epoch(&log);
        }
        Ok(())
    }
}

/// Trains a fresh model on `data`.
pub fn train(
    model: crate::diffnet::HourglassConfig,
    config: &TrainConfig,
    data: &Dataset,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<Checkpoint> {
    let mut ck = Checkpoint::start(model, config.clone())?;
    ck.train(data, on_epoch)?;
    Ok(ck)
}

/// Scores `model` on `data`; in `3d` mode sample `i` is seen under [`eval_rotation`]`(i)`.
pub fn evaluate(model: &mut Hourglass, data: &Dataset, orientation: Orientation) -> Result<EvalReport> {
    check_compatible(model, data)?;
    let mut report = EvalReport::new(model.config().num_classes);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(8) {
        let pairs = oriented(data, chunk, |i| match orientation {
            Orientation::Canonical => None,
            Orientation::RandomRotation => Some(eval_rotation(i)),
        })?;
        let maps: Vec<FeatureMap> = pairs.iter().map(|p| p.0.clone()).collect();
        let logits = model.infer(Batch::from_maps(&maps)?)?;
        for (pred, (_, gt)) in argmax(&logits)?.iter().zip(&pairs) {
            report.add(pred, gt)?;
        }
    }
    Ok(report)
}

/// Argmax labels of `model` for one input.
pub fn predict(model: &mut Hourglass, input: &FeatureMap) -> Result<LabelMap> {
    let logits = model.infer(Batch::from_maps(std::slice::from_ref(input))?)?;
    Ok(argmax(&logits)?.remove(0))
}
