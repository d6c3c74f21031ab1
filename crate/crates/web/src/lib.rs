//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Images are returned as RGBA bytes of an equirectangular `2B x 2B` raster
//! (rows follow colatitude, columns azimuth), ready for `ImageData`.

use schn::filters::{truncate, zeropad};
use schn::harmonics::{rotate_feature_map, sht_forward, sht_inverse, RotationZYZ};
use schn::scenes::{label_color, rotate_scene, sample_scene, SceneParams, SceneSpec};
use schn::sphgrid::{FeatureMap, LabelMap};
use wasm_bindgen::prelude::*;

fn rgba_from_map(map: &FeatureMap) -> Vec<u8> {
    let n = map.grid().len();
    let mut out = Vec::with_capacity(4 * n);
    for i in 0..n {
        for c in 0..3 {
            let v = map.channel(c.min(map.channels() - 1))[i];
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}

fn rgba_from_labels(labels: &LabelMap) -> Vec<u8> {
    labels
        .labels()
        .iter()
        .flat_map(|&l| {
            let [r, g, b] = label_color(l, labels.num_classes());
            [r, g, b, 255]
        })
        .collect()
}

/// One synthetic scene and its canonical rendering.
#[wasm_bindgen]
pub struct Scene {
    spec: SceneSpec,
    input: FeatureMap,
    labels: LabelMap,
}

#[wasm_bindgen]
impl Scene {
    /// Draws the scene for `seed` at bandlimit `bandlimit`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, bandlimit: usize) -> Result<Scene, String> {
        let params = SceneParams {
            bandlimit,
            ..SceneParams::default()
        };
        let (input, labels, spec) = sample_scene(seed, &params).map_err(|e| e.to_string())?;
        Ok(Scene { spec, input, labels })
    }

    /// Side length of every raster returned by this scene.
    pub fn resolution(&self) -> usize {
        self.input.grid().resolution()
    }

    pub fn input_rgba(&self) -> Vec<u8> {
        rgba_from_map(&self.input)
    }

    pub fn labels_rgba(&self) -> Vec<u8> {
        rgba_from_labels(&self.labels)
    }

    /// Input rotated through its harmonic coefficients.
    pub fn rotated_input_rgba(&self, alpha: f64, beta: f64, gamma: f64) -> Result<Vec<u8>, String> {
        let rot = RotationZYZ::new(alpha, beta, gamma).map_err(|e| e.to_string())?;
        Ok(rgba_from_map(&rotate_feature_map(&self.input, &rot)))
    }

    /// Labels of the rotated scene, from exact geometry.
    pub fn rotated_labels_rgba(&self, alpha: f64, beta: f64, gamma: f64) -> Result<Vec<u8>, String> {
        let rot = RotationZYZ::new(alpha, beta, gamma).map_err(|e| e.to_string())?;
        let (_, labels) = rotate_scene(&self.spec, &rot).map_err(|e| e.to_string())?;
        Ok(rgba_from_labels(&labels))
    }

    /// Input with every degree at or above `degree` removed.
    pub fn lowpass_rgba(&self, degree: usize) -> Result<Vec<u8>, String> {
        Ok(rgba_from_map(&self.lowpass(degree)?))
    }

    /// Mean power per degree, averaged over channels.
    pub fn degree_power(&self) -> Vec<f64> {
        let b = self.input.bandlimit();
        let mut power = vec![0.0; b];
        for c in 0..self.input.channels() {
            let coeffs = sht_forward(&self.input.channel_signal(c));
            for (l, p) in power.iter_mut().enumerate() {
                *p += coeffs.degree_norm(l).powi(2) / ((2 * l + 1) * self.input.channels()) as f64;
            }
        }
        power
    }
}

impl Scene {
    fn lowpass(&self, degree: usize) -> Result<FeatureMap, String> {
        let b = self.input.bandlimit();
        let keep = degree.clamp(1, b);
        let grid = self.input.grid().clone();
        let signals = (0..self.input.channels())
            .map(|c| {
                let coeffs = sht_forward(&self.input.channel_signal(c));
                let kept = zeropad(&truncate(&coeffs, keep)?, b)?;
                sht_inverse(&kept, &grid)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        FeatureMap::from_signals(&signals).map_err(|e| e.to_string())
    }
}
