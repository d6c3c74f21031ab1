use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{sample_spec, Orientation, SceneParams, SceneSpec};
use crate::error::{Error, Result};
use crate::formats::{read_labels, read_signal, write_labels, write_signal, Dtype};
use crate::harmonics::{rotate_feature_map, RotationZYZ};
use crate::par;
use crate::sphgrid::{FeatureMap, LabelMap};

pub const MANIFEST_NAME: &str = "manifest.txt";
const SCENE_PREFIX: &str = "# scene ";

/// Per-sample seed derived from the dataset seed (splitmix64 of `seed + index`).
pub fn sample_seed(dataset_seed: u64, index: usize) -> u64 {
    let mut z = dataset_seed
        .wrapping_add((index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pose rotation of a `3d` sample.
fn pose_rotation(seed: u64) -> RotationZYZ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    RotationZYZ::random(&mut rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub index: usize,
    pub seed: u64,
    pub pose: Orientation,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub signal: String,
    pub labels: String,
}

impl ManifestEntry {
    pub fn rotation(&self) -> Result<RotationZYZ> {
        RotationZYZ::new(self.alpha, self.beta, self.gamma)
    }

    fn render(&self) -> String {
        format!(
            "index={} seed={} pose={} alpha={:?} beta={:?} gamma={:?} signal={} labels={}",
            self.index,
            self.seed,
            self.pose.as_str(),
            self.alpha,
            self.beta,
            self.gamma,
            self.signal,
            self.labels
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("manifest token {tok:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Config(format!("manifest line lacks {k}: {line:?}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Config(format!("manifest {k}: bad number")))
        };
        Ok(ManifestEntry {
            index: get("index")?
                .parse()
                .map_err(|_| Error::Config("manifest index".into()))?,
            seed: get("seed")?
                .parse()
                .map_err(|_| Error::Config("manifest seed".into()))?,
            pose: Orientation::parse(get("pose")?)?,
            alpha: num("alpha")?,
            beta: num("beta")?,
            gamma: num("gamma")?,
            signal: get("signal")?.to_string(),
            labels: get("labels")?.to_string(),
        })
    }
}

/// Dataset index: generator settings (if synthetic) and one entry per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub scene: Option<SceneParams>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.scene {
            let _ = writeln!(out, "{SCENE_PREFIX}{}", p.to_tokens());
        }
        for e in &self.entries {
            let _ = writeln!(out, "{}", e.render());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut scene = None;
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix(SCENE_PREFIX) {
                scene = Some(SceneParams::from_tokens(rest)?);
            } else if !line.is_empty() && !line.starts_with('#') {
                entries.push(ManifestEntry::parse(line)?);
            }
        }
        Ok(Manifest { scene, entries })
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }
}

fn entry_for(index: usize, dataset_seed: u64, pose: Orientation) -> (ManifestEntry, RotationZYZ) {
    let seed = sample_seed(dataset_seed, index);
    let rot = match pose {
        Orientation::Canonical => RotationZYZ::identity(),
        Orientation::RandomRotation => pose_rotation(seed),
    };
    let entry = ManifestEntry {
        index,
        seed,
        pose,
        alpha: rot.alpha,
        beta: rot.beta,
        gamma: rot.gamma,
        signal: format!("sample_{index:05}.sphs"),
        labels: format!("sample_{index:05}.sphl"),
    };
    (entry, rot)
}

/// Writes `n` rendered samples plus `manifest.txt` into `out_dir`.
pub fn build_dataset(n: usize, seed: u64, pose: Orientation, params: &SceneParams, out_dir: &Path) -> Result<Manifest> {
    params.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let written: Vec<Result<ManifestEntry>> = par::map_range(n, |i| {
        let (entry, rot) = entry_for(i, seed, pose);
        let spec = sample_spec(entry.seed, params)?.rotated(&rot);
        let (map, labels) = spec.render()?;
        write_signal(&map, Dtype::F64, out_dir.join(&entry.signal))?;
        write_labels(&labels, out_dir.join(&entry.labels))?;
        Ok(entry)
    });
    let manifest = Manifest {
        scene: Some(params.clone()),
        entries: written.into_iter().collect::<Result<_>>()?,
    };
    let path = out_dir.join(MANIFEST_NAME);
    fs::write(&path, manifest.render()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// One labeled sample. Synthetic samples keep their scene description so that
/// rotated copies can be re-rendered exactly.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: FeatureMap,
    pub labels: LabelMap,
    pub spec: Option<SceneSpec>,
}

impl Sample {
    /// The sample rotated by `rot`.
    pub fn rotated(&self, rot: &RotationZYZ) -> Result<(FeatureMap, LabelMap)> {
        if *rot == RotationZYZ::identity() {
            return Ok((self.input.clone(), self.labels.clone()));
        }
        if let Some(spec) = &self.spec {
            return spec.rotated(rot).render();
        }
        let input = rotate_feature_map(&self.input, rot);
        let grid = Arc::clone(self.labels.grid());
        let src = self.labels.labels();
        let labels = grid
            .directions()
            .map(|x| {
                let (theta, phi) = crate::harmonics::to_spherical(rot.apply_inverse(x));
                src[grid.nearest_node(theta, phi)]
            })
            .collect();
        Ok((input, LabelMap::new(grid, self.labels.num_classes(), labels)?))
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub root: Option<PathBuf>,
}

impl Dataset {
    /// Renders `n` scenes in memory, exactly as [`build_dataset`] would write them.
    pub fn generate(n: usize, seed: u64, pose: Orientation, params: &SceneParams) -> Result<Self> {
        params.validate()?;
        let samples: Vec<Result<Sample>> = par::map_range(n, |i| {
            let (entry, rot) = entry_for(i, seed, pose);
            let spec = sample_spec(entry.seed, params)?.rotated(&rot);
            let (input, labels) = spec.render()?;
            Ok(Sample {
                input,
                labels,
                spec: Some(spec),
            })
        });
        Ok(Dataset {
            samples: samples.into_iter().collect::<Result<_>>()?,
            root: None,
        })
    }

    /// Reads a dataset directory written by [`build_dataset`] (or any directory
    /// with a manifest and matching files).
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::read(dir)?;
        let samples: Vec<Result<Sample>> = par::map_range(manifest.entries.len(), |i| {
            let e = &manifest.entries[i];
            let input = read_signal(dir.join(&e.signal))?;
            let labels = read_labels(dir.join(&e.labels))?;
            if input.bandlimit() != labels.bandlimit() {
                return Err(Error::BandlimitMismatch {
                    expected: input.bandlimit(),
                    actual: labels.bandlimit(),
                });
            }
            let spec = match &manifest.scene {
                Some(p) => Some(sample_spec(e.seed, p)?.rotated(&e.rotation()?)),
                None => None,
            };
            Ok(Sample { input, labels, spec })
        });
        Ok(Dataset {
            samples: samples.into_iter().collect::<Result<_>>()?,
            root: Some(dir.to_path_buf()),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bandlimit(&self) -> Option<usize> {
        self.samples.first().map(|s| s.input.bandlimit())
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.samples.first().map(|s| s.labels.num_classes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            scene: Some(SceneParams::default()),
            entries: (0..3)
                .map(|i| entry_for(i, 7, if i % 2 == 0 { Orientation::Canonical } else { Orientation::RandomRotation }).0)
                .collect(),
        };
        let text = m.render();
        let back = Manifest::parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.render(), text);
    }

    #[test]
    fn seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| sample_seed(1, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(sample_seed(1, 0), sample_seed(2, 0));
    }
}
