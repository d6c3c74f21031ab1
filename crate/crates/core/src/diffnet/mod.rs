//! Differentiable layers with hand-written reverse-mode adjoints and the two
//! hourglass architectures built from them.
//!
//! A forward pass appends one entry per executed primitive to a
//! [`ComputationRecord`]; [`ComputationRecord::backward`] replays the adjoints
//! in reverse, accumulating parameter gradients into the [`ParamStore`].

mod hourglass;
mod ops;
mod params;
mod record;

pub use hourglass::{Arch, FilterMode, Hourglass, HourglassConfig, ResidualBlock, C_MAX, C_MIN};
pub use params::{ParamId, ParamStore, Parameter};
pub use record::{ComputationRecord, Gradients, NodeId, NormParams};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::harmonics::{rotate_feature_map, RotationZYZ};
use crate::sphgrid::{make_grid, FeatureMap};

/// Whether normalization layers use batch statistics (and update their
/// running averages) or the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A mini-batch of feature maps, laid out `[sample][channel][ring][azimuth]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub samples: usize,
    pub channels: usize,
    pub bandlimit: usize,
    pub data: Vec<f64>,
}

impl Batch {
    pub fn zeros(samples: usize, channels: usize, bandlimit: usize) -> Self {
        Batch {
            samples,
            channels,
            bandlimit,
            data: vec![0.0; samples * channels * 4 * bandlimit * bandlimit],
        }
    }

    pub fn new(samples: usize, channels: usize, bandlimit: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != samples * channels * 4 * bandlimit * bandlimit {
            return Err(Error::ShapeMismatch(format!(
                "{} values for batch {samples}x{channels} at bandlimit {bandlimit}",
                data.len()
            )));
        }
        Ok(Batch {
            samples,
            channels,
            bandlimit,
            data,
        })
    }

    /// Nodes per channel, `(2B)^2`.
    #[inline]
    pub fn nodes(&self) -> usize {
        4 * self.bandlimit * self.bandlimit
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        2 * self.bandlimit
    }

    pub fn signals(&self) -> usize {
        self.samples * self.channels
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.channels * self.nodes();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn from_maps(maps: &[FeatureMap]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::ShapeMismatch("empty batch".into()))?;
        let (channels, bandlimit) = (first.channels(), first.bandlimit());
        let mut data = Vec::with_capacity(maps.len() * first.values().len());
        for m in maps {
            if m.channels() != channels || m.bandlimit() != bandlimit {
                return Err(Error::ShapeMismatch(format!(
                    "batch mixes {}x{} and {}x{} maps",
                    channels,
                    bandlimit,
                    m.channels(),
                    m.bandlimit()
                )));
            }
            data.extend_from_slice(m.values());
        }
        Ok(Batch {
            samples: maps.len(),
            channels,
            bandlimit,
            data,
        })
    }

    pub fn to_maps(&self) -> Result<Vec<FeatureMap>> {
        let grid = make_grid(self.bandlimit)?;
        (0..self.samples)
            .map(|n| FeatureMap::new(Arc::clone(&grid), self.channels, self.sample(n).to_vec()))
            .collect()
    }

    /// Every channel of every sample rotated by `rot`.
    pub fn rotated(&self, rot: &RotationZYZ) -> Result<Batch> {
        let maps: Vec<FeatureMap> = self
            .to_maps()?
            .iter()
            .map(|m| rotate_feature_map(m, rot))
            .collect();
        Batch::from_maps(&maps)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Batch) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
