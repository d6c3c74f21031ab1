use std::fs;
use std::io::Write;
use std::path::Path;

use schn::config::{KeyValues, RunConfig};
use schn::formats::{read_signal_with_dtype, write_labels, write_signal, Dtype};
use schn::harmonics::{rotate_feature_map, RotationZYZ};
use schn::scenes::{
    build_dataset, cubemap_to_sphere, label_color, CubeFaceSet, Dataset, Face, Orientation, SceneParams,
};
use schn::sphgrid::LabelMap;
use schn::trainer::{evaluate, Checkpoint};

use crate::Failure;

pub const CONFIG_NAME: &str = "config.txt";
pub const CHECKPOINT_NAME: &str = "model.ckpt";
pub const EPOCH_LOG_NAME: &str = "epochs.log";

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

pub fn gen_data(out: &Path, num: usize, bandlimit: usize, classes: usize, seed: u64, pose: Orientation) -> Result<(), Failure> {
    if num == 0 {
        return Err(Failure::config("--num must be at least 1"));
    }
    let params = SceneParams {
        bandlimit,
        num_classes: classes,
        ..SceneParams::default()
    };
    params.validate()?;
    build_dataset(num, seed, pose, &params, out)?;
    let mut kv = KeyValues::default();
    kv.set("data.num", num.to_string());
    kv.set("data.seed", seed.to_string());
    kv.set("data.pose", pose.as_str());
    kv.set("data.scene", params.to_tokens());
    write_file(&out.join(CONFIG_NAME), kv.render().as_bytes())?;
    println!("wrote {num} samples to {}", out.display());
    Ok(())
}

/// Config file, then `--set` overrides, then dataset-derived shapes for keys
/// still unset.
fn run_config(config: Option<&Path>, overrides: &[String], data: &Dataset) -> Result<RunConfig, Failure> {
    let mut kv = match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            KeyValues::parse(&text)?
        }
        None => KeyValues::default(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        kv.set(k.trim(), v.trim());
    }
    let first = data.samples.first().ok_or_else(|| Failure::config("dataset is empty"))?;
    let derived = [
        ("model.bandlimit", first.input.bandlimit()),
        ("model.in_channels", first.input.channels()),
        ("model.num_classes", first.labels.num_classes()),
    ];
    for (key, value) in derived {
        if kv.get(key).is_none() {
            kv.set(key, value.to_string());
        }
    }
    Ok(RunConfig::from_kv(&kv)?)
}

pub fn train(config: Option<&Path>, data_dir: &Path, out: &Path, overrides: &[String]) -> Result<(), Failure> {
    let data = Dataset::load(data_dir)?;
    let run = run_config(config, overrides, &data)?;
    create_dir(out)?;
    write_file(&out.join(CONFIG_NAME), run.render().as_bytes())?;
    let log_path = out.join(EPOCH_LOG_NAME);
    let mut log = fs::File::create(&log_path).map_err(|e| Failure::io(format!("{}: {e}", log_path.display())))?;
    let mut log_error = None;
    let ck = schn::trainer::train(run.model, &run.train, &data, |entry| {
        println!("{entry}");
        if let Err(e) = writeln!(log, "{entry}") {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(Failure::io(format!("{}: {e}", log_path.display())));
    }
    ck.save(&out.join(CHECKPOINT_NAME))?;
    Ok(())
}

pub fn eval(ckpt: &Path, data_dir: &Path, orientation: Orientation) -> Result<(), Failure> {
    let mut ck = Checkpoint::load(ckpt)?;
    let data = Dataset::load(data_dir)?;
    let report = evaluate(&mut ck.model, &data, orientation)?;
    println!("orientation={}", orientation.as_str());
    print!("{}", report.render());
    Ok(())
}

/// Equirectangular rendering: rows follow colatitude, columns azimuth.
pub fn mask_image(labels: &LabelMap) -> image::RgbImage {
    let res = labels.grid().resolution();
    let scale = (512 / res).max(1) as u32;
    let side = res as u32 * scale;
    image::RgbImage::from_fn(side, side, |x, y| {
        let (j, k) = ((y / scale) as usize, (x / scale) as usize);
        image::Rgb(label_color(labels.labels()[j * res + k], labels.num_classes()))
    })
}

pub fn predict(ckpt: &Path, input: &Path, out: &Path, png: Option<&Path>) -> Result<(), Failure> {
    let mut ck = Checkpoint::load(ckpt)?;
    let (map, _) = read_signal_with_dtype(input)?;
    let labels = schn::trainer::predict(&mut ck.model, &map)?;
    write_labels(&labels, out)?;
    if let Some(path) = png {
        mask_image(&labels)
            .save(path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn project(faces_dir: &Path, bandlimit: usize, out: &Path) -> Result<(), Failure> {
    let mut faces = Vec::with_capacity(6);
    let mut size = None;
    for face in Face::ALL {
        let path = faces_dir.join(format!("{}.png", face.name()));
        let img = image::open(&path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?
            .to_rgb8();
        if img.width() != img.height() {
            return Err(Failure::config(format!("{}: face is not square", path.display())));
        }
        size.get_or_insert(img.width() as usize);
        faces.push((face, img.into_raw()));
    }
    let set = CubeFaceSet::new(size.expect("six faces"), faces)?;
    let map = cubemap_to_sphere(&set, bandlimit)?;
    write_signal(&map, Dtype::F64, out)?;
    Ok(())
}

pub fn rotate(input: &Path, angles: [f64; 3], out: &Path) -> Result<(), Failure> {
    let (map, dtype) = read_signal_with_dtype(input)?;
    let rot = RotationZYZ::new(angles[0], angles[1], angles[2])?;
    write_signal(&rotate_feature_map(&map, &rot), dtype, out)?;
    Ok(())
}
