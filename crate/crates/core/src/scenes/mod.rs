//! Synthetic spherical segmentation scenes and cube-map ingestion.
//!
//! A scene is a background sphere with a sky cap around the up axis, a floor
//! cap around the down axis, and object caps painted on top in depth order.
//! Inputs are per-class colors plus a low-frequency illumination field plus
//! noise; labels come from the same geometry. Everything is a deterministic
//! function of the seed, and rotated scenes are re-rendered from rotated
//! geometry rather than resampled.

mod cubemap;
mod dataset;

pub use cubemap::{cubemap_to_sphere, face_basis, locate, CubeFaceSet, Face};
pub use dataset::{build_dataset, sample_seed, Dataset, Manifest, ManifestEntry, Sample, MANIFEST_NAME};

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::filters::zeropad;
use crate::harmonics::{rotate_coeffs, sht_inverse, RotationZYZ, SpectralCoeffs};
use crate::sphgrid::{make_grid, FeatureMap, LabelMap};

pub const BACKGROUND: u16 = 0;
pub const FLOOR: u16 = 1;
pub const SKY: u16 = 2;
/// Bandlimit of the illumination field.
pub const ILLUMINATION_BANDLIMIT: usize = 4;

/// Canonical or Haar-random orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Canonical,
    RandomRotation,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Canonical => "c",
            Orientation::RandomRotation => "3d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "c" | "canonical" => Ok(Orientation::Canonical),
            "3d" | "random_rotation" => Ok(Orientation::RandomRotation),
            _ => Err(Error::Config(format!("orientation must be `c` or `3d`, got {s:?}"))),
        }
    }
}

/// Generator settings shared by every scene of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub bandlimit: usize,
    pub num_classes: usize,
    /// Inclusive range of caps drawn per object class.
    pub caps_per_class: (usize, usize),
    /// Cap angular radius range, degrees.
    pub radius_deg: (f64, f64),
    /// Colatitude of the sky boundary, degrees.
    pub sky_deg: (f64, f64),
    /// Colatitude of the floor boundary, degrees.
    pub floor_deg: (f64, f64),
    /// How far floor and sky colors sit from the background gray (0 makes them identical).
    pub band_contrast: f64,
    /// Per-scene jitter of every class color.
    pub color_jitter: f64,
    /// Amplitude of the canonical top-lit illumination term.
    pub illumination: f64,
    /// Amplitude of the random low-frequency illumination term.
    pub illumination_jitter: f64,
    /// Standard deviation of the per-node Gaussian noise.
    pub noise: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            bandlimit: 32,
            num_classes: 6,
            caps_per_class: (1, 2),
            radius_deg: (15.0, 40.0),
            sky_deg: (20.0, 30.0),
            floor_deg: (150.0, 160.0),
            band_contrast: 0.25,
            color_jitter: 0.05,
            illumination: 0.3,
            illumination_jitter: 0.1,
            noise: 0.15,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 4 {
            return Err(Error::Config(format!(
                "scenes need at least 4 classes (background, floor, sky, one object), got {}",
                self.num_classes
            )));
        }
        if self.num_classes > u16::MAX as usize {
            return Err(Error::Config(format!("{} classes", self.num_classes)));
        }
        let (r0, r1) = self.radius_deg;
        if !(10.0..=60.0).contains(&r0) || !(r0..=60.0).contains(&r1) {
            return Err(Error::Config(format!("cap radii {r0}..{r1} outside [10, 60] degrees")));
        }
        if self.caps_per_class.0 > self.caps_per_class.1 {
            return Err(Error::Config("caps_per_class range is empty".into()));
        }
        let (s0, s1) = self.sky_deg;
        let (f0, f1) = self.floor_deg;
        if !(0.0 <= s0 && s0 <= s1 && s1 < f0 && f0 <= f1 && f1 <= 180.0) {
            return Err(Error::Config("sky and floor bands overlap or leave [0, 180]".into()));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("illumination", self.illumination),
            ("illumination_jitter", self.illumination_jitter),
            ("color_jitter", self.color_jitter),
            ("band_contrast", self.band_contrast),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("scene {name} = {v}")));
            }
        }
        make_grid(self.bandlimit)?;
        Ok(())
    }

    /// Space-separated `key=value` tokens.
    pub fn to_tokens(&self) -> String {
        format!(
            "bandlimit={} classes={} caps_min={} caps_max={} radius_min={:?} radius_max={:?} sky_min={:?} sky_max={:?} \
             floor_min={:?} floor_max={:?} band_contrast={:?} color_jitter={:?} illumination={:?} \
             illumination_jitter={:?} noise={:?}",
            self.bandlimit,
            self.num_classes,
            self.caps_per_class.0,
            self.caps_per_class.1,
            self.radius_deg.0,
            self.radius_deg.1,
            self.sky_deg.0,
            self.sky_deg.1,
            self.floor_deg.0,
            self.floor_deg.1,
            self.band_contrast,
            self.color_jitter,
            self.illumination,
            self.illumination_jitter,
            self.noise
        )
    }

    pub fn from_tokens(s: &str) -> Result<Self> {
        let mut p = SceneParams::default();
        for tok in s.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("scene token {tok:?}")))?;
            let bad = || Error::Config(format!("scene {k}: cannot parse {v:?}"));
            let f = || v.parse::<f64>().map_err(|_| bad());
            let u = || v.parse::<usize>().map_err(|_| bad());
            match k {
                "bandlimit" => p.bandlimit = u()?,
                "classes" => p.num_classes = u()?,
                "caps_min" => p.caps_per_class.0 = u()?,
                "caps_max" => p.caps_per_class.1 = u()?,
                "radius_min" => p.radius_deg.0 = f()?,
                "radius_max" => p.radius_deg.1 = f()?,
                "sky_min" => p.sky_deg.0 = f()?,
                "sky_max" => p.sky_deg.1 = f()?,
                "floor_min" => p.floor_deg.0 = f()?,
                "floor_max" => p.floor_deg.1 = f()?,
                "band_contrast" => p.band_contrast = f()?,
                "color_jitter" => p.color_jitter = f()?,
                "illumination" => p.illumination = f()?,
                "illumination_jitter" => p.illumination_jitter = f()?,
                "noise" => p.noise = f()?,
                _ => return Err(Error::Config(format!("unknown scene key {k}"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// A spherical cap `{x : x . center >= cos radius}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cap {
    pub center: [f64; 3],
    pub radius: f64,
    pub class: u16,
}

/// Complete geometric and photometric description of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub bandlimit: usize,
    pub num_classes: usize,
    /// Axis of the sky cap; the floor cap is centered on its antipode.
    pub up: [f64; 3],
    /// Sky boundary, colatitude from `up` in radians.
    pub sky_extent: f64,
    /// Floor boundary, colatitude from `up` in radians.
    pub floor_extent: f64,
    /// Object caps in paint order (later caps occlude earlier ones).
    pub caps: Vec<Cap>,
    /// Per-class RGB base values.
    pub colors: Vec<[f64; 3]>,
    /// Real illumination field, added to all three channels.
    pub illumination: SpectralCoeffs,
    pub noise: f64,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as usize % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Display color of a class in mask visualizations: gray background, evenly
/// spaced hues for the rest.
pub fn label_color(class: u16, num_classes: usize) -> [u8; 3] {
    if class == 0 {
        return [96, 96, 96];
    }
    let h = (class as f64 - 1.0) / num_classes.saturating_sub(1).max(1) as f64;
    hsv(h, 0.75, 0.95).map(|c| (c * 255.0).round() as u8)
}

/// Class colors before per-scene jitter.
pub fn palette(num_classes: usize, band_contrast: f64) -> Vec<[f64; 3]> {
    let gray = 0.5;
    let mut colors = vec![[gray; 3]; num_classes];
    colors[FLOOR as usize] = [gray + 0.4 * band_contrast, gray, gray - 0.4 * band_contrast];
    colors[SKY as usize] = [gray - 0.4 * band_contrast, gray, gray + 0.4 * band_contrast];
    let objects = num_classes - 3;
    for k in 0..objects {
        colors[3 + k] = hsv(k as f64 / objects as f64, 0.6, 0.75);
    }
    colors
}

fn random_unit_at_colatitude<R: Rng>(rng: &mut R, lo_deg: f64, hi_deg: f64) -> [f64; 3] {
    let (c0, c1) = (hi_deg.to_radians().cos(), lo_deg.to_radians().cos());
    let z = rng.random_range(c0..=c1);
    let phi = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).max(0.0).sqrt();
    let v = [s * phi.cos(), s * phi.sin(), z];
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Draws the canonical scene for `seed`.
pub fn sample_spec(seed: u64, params: &SceneParams) -> Result<SceneSpec> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = params.num_classes;
    let sky_extent = rng.random_range(params.sky_deg.0..=params.sky_deg.1).to_radians();
    let floor_extent = rng.random_range(params.floor_deg.0..=params.floor_deg.1).to_radians();

    let mut caps = Vec::new();
    for class in 3..c {
        let count = rng.random_range(params.caps_per_class.0..=params.caps_per_class.1);
        for _ in 0..count {
            let center = random_unit_at_colatitude(&mut rng, 60.0, 120.0);
            let radius = rng.random_range(params.radius_deg.0..=params.radius_deg.1).to_radians();
            caps.push(Cap {
                center,
                radius,
                class: class as u16,
            });
        }
    }
    // Depth order: a random permutation, painted back to front.
    for i in (1..caps.len()).rev() {
        let j = rng.random_range(0..=i);
        caps.swap(i, j);
    }

    let mut colors = palette(c, params.band_contrast);
    for col in &mut colors {
        for v in col.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += params.color_jitter * z;
        }
    }

    // cos(theta) = sqrt(4 pi / 3) Y_1^0, so the canonical term brightens the sky side.
    let mut illumination = SpectralCoeffs::zeros(ILLUMINATION_BANDLIMIT);
    illumination.set(1, 0, Complex64::new(params.illumination * (4.0 * PI / 3.0).sqrt(), 0.0));
    for l in 1..ILLUMINATION_BANDLIMIT {
        let scale = params.illumination_jitter / (l as f64);
        for m in 0..=l as isize {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = if m == 0 { 0.0 } else { StandardNormal.sample(&mut rng) };
            let z = illumination.get(l, m) + Complex64::new(re, im) * scale;
            illumination.set(l, m, z);
            if m > 0 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                illumination.set(l, -m, z.conj() * sign);
            }
        }
    }

    Ok(SceneSpec {
        seed,
        bandlimit: params.bandlimit,
        num_classes: c,
        up: [0.0, 0.0, 1.0],
        sky_extent,
        floor_extent,
        caps,
        colors,
        illumination,
        noise: params.noise,
    })
}

impl SceneSpec {
    /// Label of direction `x`.
    pub fn label_at(&self, x: [f64; 3]) -> u16 {
        let mut label = BACKGROUND;
        let up = dot(x, self.up);
        if up >= self.sky_extent.cos() {
            label = SKY;
        } else if up <= self.floor_extent.cos() {
            label = FLOOR;
        }
        for cap in &self.caps {
            if dot(x, cap.center) >= cap.radius.cos() {
                label = cap.class;
            }
        }
        label
    }

    /// The same scene with its geometry and illumination rotated by `rot`.
    pub fn rotated(&self, rot: &RotationZYZ) -> SceneSpec {
        if *rot == RotationZYZ::identity() {
            return self.clone();
        }
        let mut out = self.clone();
        out.up = rot.apply(self.up);
        for cap in &mut out.caps {
            cap.center = rot.apply(cap.center);
        }
        out.illumination = rotate_coeffs(&self.illumination, rot);
        out
    }

    /// Renders inputs and labels on the `2B x 2B` grid.
    pub fn render(&self) -> Result<(FeatureMap, LabelMap)> {
        let grid = make_grid(self.bandlimit)?;
        let labels: Vec<u16> = grid.directions().map(|x| self.label_at(x)).collect();
        let light = if self.bandlimit >= ILLUMINATION_BANDLIMIT {
            sht_inverse(&zeropad(&self.illumination, self.bandlimit)?, &grid)?
        } else {
            sht_inverse(&crate::filters::truncate(&self.illumination, self.bandlimit)?, &grid)?
        };
        let nodes = grid.len();
        let mut values = vec![0.0; 3 * nodes];
        let mut noise = ChaCha8Rng::seed_from_u64(self.seed);
        noise.set_stream(1);
        for ch in 0..3 {
            for i in 0..nodes {
                let z: f64 = StandardNormal.sample(&mut noise);
                values[ch * nodes + i] =
                    self.colors[labels[i] as usize][ch] + light.values()[i] + self.noise * z;
            }
        }
        let map = FeatureMap::new(Arc::clone(&grid), 3, values)?;
        let labels = LabelMap::new(grid, self.num_classes, labels)?;
        Ok((map, labels))
    }
}

/// Canonical scene for `seed`: inputs, labels and the description that produced them.
pub fn sample_scene(seed: u64, params: &SceneParams) -> Result<(FeatureMap, LabelMap, SceneSpec)> {
    let spec = sample_spec(seed, params)?;
    let (map, labels) = spec.render()?;
    Ok((map, labels, spec))
}

/// Re-renders `spec` after rotating its geometry by `rot`.
pub fn rotate_scene(spec: &SceneSpec, rot: &RotationZYZ) -> Result<(FeatureMap, LabelMap)> {
    spec.rotated(rot).render()
}
