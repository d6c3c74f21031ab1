//! Line-based `key = value` configuration with dotted section names.
//!
//! ```text
//! # comments and blank lines are ignored
//! model.levels = 3
//! model.channels = 16, 32, 64, 64
//! train.epochs = 20
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use crate::diffnet::{Arch, FilterMode, HourglassConfig};
use crate::error::{Error, Result};
use crate::trainer::{Orientation, TrainConfig};

/// Ordered, duplicate-free key/value pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {line:?}", n + 1)))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {}: bad key {k:?}", n + 1)));
            }
            if kv.get(k).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
            }
            kv.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Inserts or replaces.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))),
        }
    }
}

pub const MODEL_KEYS: &[&str] = &[
    "model.bandlimit",
    "model.in_channels",
    "model.num_classes",
    "model.levels",
    "model.channels",
    "model.blocks_per_level",
    "model.anchors",
    "model.filter_mode",
    "model.bottleneck_ratio",
    "model.skip_mode",
    "model.arch",
];

pub const TRAIN_KEYS: &[&str] = &[
    "train.epochs",
    "train.batch_size",
    "train.learning_rate",
    "train.beta1",
    "train.beta2",
    "train.epsilon",
    "train.seed",
    "train.orientation",
    "eval.orientation",
];

fn model_to_kv(m: &HourglassConfig, kv: &mut KeyValues) {
    kv.set("model.bandlimit", m.bandlimit.to_string());
    kv.set("model.in_channels", m.in_channels.to_string());
    kv.set("model.num_classes", m.num_classes.to_string());
    kv.set("model.levels", m.levels.to_string());
    let ch: Vec<String> = m.channels.iter().map(|c| c.to_string()).collect();
    kv.set("model.channels", ch.join(", "));
    kv.set("model.blocks_per_level", m.blocks_per_level.to_string());
    kv.set("model.anchors", m.anchors.to_string());
    kv.set("model.filter_mode", m.filter_mode.as_str());
    kv.set("model.bottleneck_ratio", m.bottleneck_ratio.to_string());
    kv.set("model.skip_mode", "additive");
    kv.set("model.arch", m.arch.as_str());
}

fn model_from_kv(kv: &KeyValues, base: HourglassConfig) -> Result<HourglassConfig> {
    let mut m = base;
    macro_rules! num {
        ($key:literal, $field:ident) => {
            if let Some(v) = kv.parsed($key)? {
                m.$field = v;
            }
        };
    }
    num!("model.bandlimit", bandlimit);
    num!("model.in_channels", in_channels);
    num!("model.num_classes", num_classes);
    num!("model.levels", levels);
    num!("model.blocks_per_level", blocks_per_level);
    num!("model.anchors", anchors);
    num!("model.bottleneck_ratio", bottleneck_ratio);
    if let Some(v) = kv.get("model.channels") {
        m.channels = v
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("model.channels: cannot parse {v:?}")))?;
    }
    if let Some(v) = kv.get("model.filter_mode") {
        m.filter_mode = FilterMode::parse(v)?;
    }
    if let Some(v) = kv.get("model.arch") {
        m.arch = Arch::parse(v)?;
    }
    if let Some(v) = kv.get("model.skip_mode") {
        if v != "additive" {
            return Err(Error::Config(format!("model.skip_mode: only `additive` is supported, got {v:?}")));
        }
    }
    Ok(m)
}

/// Model hyperparameters as config text.
pub fn model_config_text(m: &HourglassConfig) -> String {
    let mut kv = KeyValues::default();
    model_to_kv(m, &mut kv);
    kv.render()
}

/// Model and training settings of one run.
#[derive(Debug, Clone, PartialEq)]
#[derive(Default)]
pub struct RunConfig {
    pub model: HourglassConfig,
    pub train: TrainConfig,
}


impl RunConfig {
    /// Parses a config, starting from defaults; unknown keys are rejected.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        for (k, _) in kv.iter() {
            if !MODEL_KEYS.contains(&k) && !TRAIN_KEYS.contains(&k) {
                return Err(Error::Config(format!("unknown key {k}")));
            }
        }
        let model = model_from_kv(kv, HourglassConfig::desk())?;
        let mut t = TrainConfig::default();
        macro_rules! num {
            ($key:literal, $field:ident) => {
                if let Some(v) = kv.parsed($key)? {
                    t.$field = v;
                }
            };
        }
        num!("train.epochs", epochs);
        num!("train.batch_size", batch_size);
        num!("train.learning_rate", learning_rate);
        num!("train.beta1", beta1);
        num!("train.beta2", beta2);
        num!("train.epsilon", epsilon);
        num!("train.seed", seed);
        if let Some(v) = kv.get("train.orientation") {
            t.train_orientation = Orientation::parse(v)?;
        }
        if let Some(v) = kv.get("eval.orientation") {
            t.eval_orientation = Orientation::parse(v)?;
        }
        model.validate()?;
        t.validate()?;
        Ok(RunConfig { model, train: t })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        model_to_kv(&self.model, &mut kv);
        let t = &self.train;
        kv.set("train.epochs", t.epochs.to_string());
        kv.set("train.batch_size", t.batch_size.to_string());
        kv.set("train.learning_rate", format!("{:?}", t.learning_rate));
        kv.set("train.beta1", format!("{:?}", t.beta1));
        kv.set("train.beta2", format!("{:?}", t.beta2));
        kv.set("train.epsilon", format!("{:?}", t.epsilon));
        kv.set("train.seed", t.seed.to_string());
        kv.set("train.orientation", t.train_orientation.as_str());
        kv.set("eval.orientation", t.eval_orientation.as_str());
        kv
    }

    pub fn render(&self) -> String {
        self.to_kv().render()
    }
}

/// Parses model keys (others are ignored) on top of the desk defaults.
pub fn parse_model_config(kv: &KeyValues) -> Result<HourglassConfig> {
    let m = model_from_kv(kv, HourglassConfig::desk())?;
    m.validate()?;
    Ok(m)
}
