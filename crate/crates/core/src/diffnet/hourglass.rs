use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::params::{ParamId, ParamStore};
use super::record::{ComputationRecord, NodeId, NormParams};
use super::{Batch, Mode};
use crate::error::{Error, Result};

pub const C_MIN: usize = 1;
pub const C_MAX: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// Spherical convolutions, spectral resampling.
    Schn,
    /// 3x3 planar convolutions, average pooling and nearest upsampling.
    PlanarBaseline,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Schn => "schn",
            Arch::PlanarBaseline => "planar_baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "schn" => Ok(Arch::Schn),
            "planar_baseline" | "2dhg" => Ok(Arch::PlanarBaseline),
            _ => Err(Error::Config(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    /// `K` anchors (capped by each level's bandlimit).
    Localized,
    /// One anchor per degree.
    Global,
}

impl FilterMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterMode::Localized => "localized",
            FilterMode::Global => "global",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "localized" => Ok(FilterMode::Localized),
            "global" => Ok(FilterMode::Global),
            _ => Err(Error::Config(format!("unknown filter mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourglassConfig {
    pub bandlimit: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    pub levels: usize,
    /// `levels + 1` widths, finest first.
    pub channels: Vec<usize>,
    pub blocks_per_level: usize,
    pub anchors: usize,
    pub filter_mode: FilterMode,
    pub bottleneck_ratio: usize,
    pub arch: Arch,
}

impl Default for HourglassConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl HourglassConfig {
    /// 64x64 inputs, three levels.
    pub fn desk() -> Self {
        HourglassConfig {
            bandlimit: 32,
            in_channels: 3,
            num_classes: 6,
            levels: 3,
            channels: vec![16, 32, 64, 64],
            blocks_per_level: 1,
            anchors: 16,
            filter_mode: FilterMode::Localized,
            bottleneck_ratio: 4,
            arch: Arch::Schn,
        }
    }

    /// 256x256 inputs, widths from 32 to 256.
    pub fn reference() -> Self {
        HourglassConfig {
            bandlimit: 128,
            levels: 4,
            channels: vec![32, 64, 128, 256, 256],
            ..Self::desk()
        }
    }

    pub fn with_arch(mut self, arch: Arch) -> Self {
        self.arch = arch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.in_channels == 0 {
            return fail("model.in_channels must be positive".into());
        }
        if self.num_classes < 2 {
            return fail(format!("model.num_classes = {} (need at least 2)", self.num_classes));
        }
        let step = 1usize
            .checked_shl(self.levels as u32)
            .filter(|s| *s <= self.bandlimit)
            .ok_or_else(|| Error::Config(format!("model.levels = {} too deep", self.levels)))?;
        if !self.bandlimit.is_multiple_of(step) || self.bandlimit / step < 2 {
            return fail(format!(
                "model.bandlimit = {} must be a multiple of 2^levels = {step} with a coarsest bandlimit of at least 2",
                self.bandlimit
            ));
        }
        if self.channels.len() != self.levels + 1 {
            return fail(format!(
                "model.channels has {} entries, expected levels + 1 = {}",
                self.channels.len(),
                self.levels + 1
            ));
        }
        for &c in &self.channels {
            if !(C_MIN..=C_MAX).contains(&c) {
                return fail(format!("channel count {c} outside [{C_MIN}, {C_MAX}]"));
            }
            if self.bottleneck_ratio == 0 || c % self.bottleneck_ratio != 0 {
                return fail(format!(
                    "channel count {c} not divisible by model.bottleneck_ratio = {}",
                    self.bottleneck_ratio
                ));
            }
        }
        if self.arch == Arch::Schn && self.filter_mode == FilterMode::Localized && self.anchors < 2 {
            return fail(format!("model.anchors = {} (need at least 2)", self.anchors));
        }
        Ok(())
    }

    pub fn level_bandlimit(&self, level: usize) -> usize {
        self.bandlimit >> level
    }

    /// Anchor count used by spherical convolutions at bandlimit `b`.
    pub fn anchors_at(&self, b: usize) -> usize {
        match self.filter_mode {
            FilterMode::Localized => self.anchors.min(b),
            FilterMode::Global => b,
        }
    }

    /// Trainable scalar count, from the layer formulas.
    pub fn parameter_count(&self) -> usize {
        let conv = |cin: usize, cout: usize, b: usize| match self.arch {
            Arch::Schn => cin * cout * self.anchors_at(b) + cout,
            Arch::PlanarBaseline => cout * cin * 9 + cout,
        };
        let pw = |cin: usize, cout: usize| cin * cout + cout;
        let block = |c: usize, b: usize| {
            let r = c / self.bottleneck_ratio;
            pw(c, r) + 2 * r + conv(r, r, b) + 2 * r + pw(r, c)
        };
        let ch = &self.channels;
        let mut total = conv(self.in_channels, ch[0], self.bandlimit);
        for lvl in 0..self.levels {
            let b = self.level_bandlimit(lvl);
            total += self.blocks_per_level * block(ch[lvl], b);
            total += pw(ch[lvl], ch[lvl + 1]);
            total += pw(ch[lvl + 1], ch[lvl]) + self.blocks_per_level * block(ch[lvl], b);
        }
        total += self.blocks_per_level * block(ch[self.levels], self.level_bandlimit(self.levels));
        total + pw(ch[0], self.num_classes)
    }
}

#[derive(Debug, Clone, Copy)]
enum Conv {
    Sph { anchors: ParamId, bias: ParamId },
    Planar { kernel: ParamId, bias: ParamId },
}

#[derive(Debug, Clone, Copy)]
struct Pointwise {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct ResidualBlock {
    reduce: Pointwise,
    norm1: NormParams,
    mid: Conv,
    norm2: NormParams,
    expand: Pointwise,
}

#[derive(Debug, Clone)]
struct Layout {
    stem: Conv,
    down: Vec<(Vec<ResidualBlock>, Pointwise)>,
    bottom: Vec<ResidualBlock>,
    /// Finest level first; applied in reverse.
    up: Vec<(Pointwise, Vec<ResidualBlock>)>,
    head: Pointwise,
}

/// An hourglass network: its configuration and parameters.
#[derive(Debug, Clone)]
pub struct Hourglass {
    config: HourglassConfig,
    params: ParamStore,
    layout: Layout,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn normal(&mut self, n: usize, std: f64) -> Vec<f64> {
        let dist = Normal::new(0.0, std).expect("finite std");
        (0..n).map(|_| dist.sample(&mut self.rng)).collect()
    }
}

impl Hourglass {
    /// Builds a model with seeded random weights.
    pub fn new(config: HourglassConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let mut ps = ParamStore::new();
        let cfg = &config;
        let ch = cfg.channels.clone();

        let stem = conv(&mut ps, &mut init, cfg, "stem", cfg.in_channels, ch[0], cfg.bandlimit)?;
        let mut down = Vec::new();
        for lvl in 0..cfg.levels {
            let b = cfg.level_bandlimit(lvl);
            let blocks = (0..cfg.blocks_per_level)
                .map(|i| block(&mut ps, &mut init, cfg, &format!("enc{lvl}.block{i}"), ch[lvl], b))
                .collect::<Result<Vec<_>>>()?;
            let proj = pointwise(&mut ps, &mut init, &format!("enc{lvl}.proj"), ch[lvl], ch[lvl + 1], 2.0)?;
            down.push((blocks, proj));
        }
        let b_bottom = cfg.level_bandlimit(cfg.levels);
        let bottom = (0..cfg.blocks_per_level)
            .map(|i| block(&mut ps, &mut init, cfg, &format!("bottom.block{i}"), ch[cfg.levels], b_bottom))
            .collect::<Result<Vec<_>>>()?;
        let mut up = Vec::new();
        for lvl in 0..cfg.levels {
            let b = cfg.level_bandlimit(lvl);
            let proj = pointwise(&mut ps, &mut init, &format!("dec{lvl}.proj"), ch[lvl + 1], ch[lvl], 2.0)?;
            let blocks = (0..cfg.blocks_per_level)
                .map(|i| block(&mut ps, &mut init, cfg, &format!("dec{lvl}.block{i}"), ch[lvl], b))
                .collect::<Result<Vec<_>>>()?;
            up.push((proj, blocks));
        }
        let head = pointwise(&mut ps, &mut init, "head", ch[0], cfg.num_classes, 1.0)?;
        Ok(Hourglass {
            layout: Layout {
                stem,
                down,
                bottom,
                up,
                head,
            },
            config,
            params: ps,
        })
    }

    pub fn config(&self) -> &HourglassConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Records a forward pass and returns the logits node.
    pub fn forward(&mut self, rec: &mut ComputationRecord, x: Batch, mode: Mode) -> Result<NodeId> {
        let cfg = &self.config;
        if x.bandlimit != cfg.bandlimit || x.channels != cfg.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "input {}ch@B{} for a model expecting {}ch@B{}",
                x.channels, x.bandlimit, cfg.in_channels, cfg.bandlimit
            )));
        }
        let arch = cfg.arch;
        let ps = &mut self.params;
        let lay = &self.layout;

        let input = rec.input(x);
        let mut h = apply_conv(rec, ps, input, lay.stem)?;
        let mut skips = Vec::with_capacity(cfg.levels);
        for (blocks, proj) in &lay.down {
            for b in blocks {
                h = apply_block(rec, ps, h, b, mode)?;
            }
            skips.push(h);
            h = match arch {
                Arch::Schn => rec.downsample_spectral(h)?,
                Arch::PlanarBaseline => rec.avg_pool(h)?,
            };
            h = rec.pointwise(ps, h, proj.weight, proj.bias)?;
        }
        for b in &lay.bottom {
            h = apply_block(rec, ps, h, b, mode)?;
        }
        for (lvl, (proj, blocks)) in lay.up.iter().enumerate().rev() {
            // The channel change is applied before upsampling; both are
            // per-channel linear maps that fix constants, so they commute.
            h = rec.pointwise(ps, h, proj.weight, proj.bias)?;
            h = match arch {
                Arch::Schn => rec.upsample_spectral(h)?,
                Arch::PlanarBaseline => rec.upsample_nearest(h)?,
            };
            h = rec.add(h, skips[lvl])?;
            for b in blocks {
                h = apply_block(rec, ps, h, b, mode)?;
            }
        }
        rec.pointwise(ps, h, lay.head.weight, lay.head.bias)
    }

    /// Logits in evaluation mode, without keeping the record.
    pub fn infer(&mut self, x: Batch) -> Result<Batch> {
        let mut rec = ComputationRecord::new();
        let out = self.forward(&mut rec, x, Mode::Eval)?;
        Ok(rec.into_value(out))
    }
}

fn conv(ps: &mut ParamStore, init: &mut Init, cfg: &HourglassConfig, name: &str, cin: usize, cout: usize, b: usize) -> Result<Conv> {
    Ok(match cfg.arch {
        Arch::Schn => {
            let k = cfg.anchors_at(b);
            let anchors = init.normal(cin * cout * k, (2.0 / cin as f64).sqrt());
            Conv::Sph {
                anchors: ps.add(&format!("{name}.anchors"), &[cin, cout, k], anchors, true)?,
                bias: ps.add(&format!("{name}.bias"), &[cout], vec![0.0; cout], true)?,
            }
        }
        Arch::PlanarBaseline => {
            let kernel = init.normal(cout * cin * 9, (2.0 / (9 * cin) as f64).sqrt());
            Conv::Planar {
                kernel: ps.add(&format!("{name}.kernel"), &[cout, cin, 3, 3], kernel, true)?,
                bias: ps.add(&format!("{name}.bias"), &[cout], vec![0.0; cout], true)?,
            }
        }
    })
}

fn pointwise(ps: &mut ParamStore, init: &mut Init, name: &str, cin: usize, cout: usize, gain: f64) -> Result<Pointwise> {
    let w = init.normal(cout * cin, (gain / cin as f64).sqrt());
    Ok(Pointwise {
        weight: ps.add(&format!("{name}.weight"), &[cout, cin], w, true)?,
        bias: ps.add(&format!("{name}.bias"), &[cout], vec![0.0; cout], true)?,
    })
}

fn norm(ps: &mut ParamStore, name: &str, c: usize) -> Result<NormParams> {
    Ok(NormParams {
        scale: ps.add(&format!("{name}.scale"), &[c], vec![1.0; c], true)?,
        shift: ps.add(&format!("{name}.shift"), &[c], vec![0.0; c], true)?,
        running_mean: ps.add(&format!("{name}.running_mean"), &[c], vec![0.0; c], false)?,
        running_var: ps.add(&format!("{name}.running_var"), &[c], vec![1.0; c], false)?,
    })
}

fn block(ps: &mut ParamStore, init: &mut Init, cfg: &HourglassConfig, name: &str, c: usize, b: usize) -> Result<ResidualBlock> {
    let r = c / cfg.bottleneck_ratio;
    Ok(ResidualBlock {
        reduce: pointwise(ps, init, &format!("{name}.reduce"), c, r, 2.0)?,
        norm1: norm(ps, &format!("{name}.norm1"), r)?,
        mid: conv(ps, init, cfg, &format!("{name}.mid"), r, r, b)?,
        norm2: norm(ps, &format!("{name}.norm2"), r)?,
        // Half the unit-variance scale: the commutation defect of a block grows
        // linearly with the size of its residual branch.
        expand: pointwise(ps, init, &format!("{name}.expand"), r, c, 0.25)?,
    })
}

fn apply_conv(rec: &mut ComputationRecord, ps: &ParamStore, x: NodeId, c: Conv) -> Result<NodeId> {
    match c {
        Conv::Sph { anchors, bias } => rec.sph_conv(ps, x, anchors, bias),
        Conv::Planar { kernel, bias } => rec.planar_conv(ps, x, kernel, bias),
    }
}

fn apply_block(rec: &mut ComputationRecord, ps: &mut ParamStore, x: NodeId, b: &ResidualBlock, mode: Mode) -> Result<NodeId> {
    let mut h = rec.pointwise(ps, x, b.reduce.weight, b.reduce.bias)?;
    h = rec.norm(ps, h, b.norm1, mode)?;
    h = rec.relu(h);
    h = apply_conv(rec, ps, h, b.mid)?;
    h = rec.norm(ps, h, b.norm2, mode)?;
    h = rec.relu(h);
    h = rec.pointwise(ps, h, b.expand.weight, b.expand.bias)?;
    rec.add(x, h)
}

impl ResidualBlock {
    /// Registers a bottleneck block for `c` channels at bandlimit `b` under `prefix`.
    pub fn new(ps: &mut ParamStore, cfg: &HourglassConfig, prefix: &str, c: usize, b: usize, seed: u64) -> Result<Self> {
        if cfg.bottleneck_ratio == 0 || !c.is_multiple_of(cfg.bottleneck_ratio) {
            return Err(Error::Config(format!(
                "{c} channels not divisible by bottleneck ratio {}",
                cfg.bottleneck_ratio
            )));
        }
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        block(ps, &mut init, cfg, prefix, c, b)
    }

    pub fn forward(&self, rec: &mut ComputationRecord, ps: &mut ParamStore, x: NodeId, mode: Mode) -> Result<NodeId> {
        apply_block(rec, ps, x, self, mode)
    }
}
