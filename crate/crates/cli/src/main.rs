mod bench;
mod checks;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use schn::scenes::Orientation;

/// Spherical harmonic segmentation toolkit.
#[derive(Debug, Parser)]
#[command(name = "schn", version)]
struct Cli {
    /// Worker threads for internal parallelism (0 = all cores).
    #[arg(long, global = true, env = "SCHN_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Pose {
    /// Canonical upright pose.
    C,
    /// Uniformly random 3D rotation.
    #[value(name = "3d")]
    ThreeD,
}

impl From<Pose> for Orientation {
    fn from(p: Pose) -> Self {
        match p {
            Pose::C => Orientation::Canonical,
            Pose::ThreeD => Orientation::RandomRotation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Sht,
    Rotation,
    Equivariance,
    Gradients,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchSuite {
    Sht,
    Layers,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        num: usize,
        #[arg(long, default_value_t = 32)]
        bandlimit: usize,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "c")]
        pose: Pose,
    },
    /// Train a model; writes model.ckpt, epochs.log and config.txt into --out.
    Train {
        /// `key = value` run config; missing keys take desk defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override a config key, e.g. `--set train.epochs=5`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint and print key=value metrics.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "c")]
        orientation: Pose,
    },
    /// Label one signal.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write an equirectangular color image of the mask.
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Run verification suites.
    Check {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
    },
    /// Project six cube faces (front/back/left/right/up/down.png) onto the sphere.
    Project {
        #[arg(long)]
        faces: PathBuf,
        #[arg(long)]
        bandlimit: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rotate a signal by ZYZ Euler angles in radians.
    Rotate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time transforms and layers.
    Bench {
        #[arg(long, value_enum, default_value = "sht")]
        suite: BenchSuite,
        /// Bandlimits to time; defaults to 32, 64 and 128.
        #[arg(long, value_delimiter = ',')]
        bandlimit: Vec<usize>,
        #[arg(long, default_value_t = 7)]
        repeats: usize,
    },
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<schn::Error> for Failure {
    fn from(e: schn::Error) -> Self {
        let code = match e {
            schn::Error::Io { .. } | schn::Error::Format(_) => 3,
            schn::Error::Diverged { .. } => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn run(command: Command, threads: usize) -> Result<bool, Failure> {
    match command {
        Command::GenData {
            out,
            num,
            bandlimit,
            classes,
            seed,
            pose,
        } => commands::gen_data(&out, num, bandlimit, classes, seed, pose.into()).map(|_| true),
        Command::Train {
            config,
            data,
            out,
            overrides,
        } => commands::train(config.as_deref(), &data, &out, &overrides).map(|_| true),
        Command::Eval {
            ckpt,
            data,
            orientation,
        } => commands::eval(&ckpt, &data, orientation.into()).map(|_| true),
        Command::Predict { ckpt, input, out, png } => commands::predict(&ckpt, &input, &out, png.as_deref()).map(|_| true),
        Command::Check { suite } => Ok(checks::run(suite)),
        Command::Project { faces, bandlimit, out } => commands::project(&faces, bandlimit, &out).map(|_| true),
        Command::Rotate {
            input,
            alpha,
            beta,
            gamma,
            out,
        } => commands::rotate(&input, [alpha, beta, gamma], &out).map(|_| true),
        Command::Bench {
            suite,
            bandlimit,
            repeats,
        } => bench::run(suite, &bandlimit, repeats, threads).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    match schn::with_threads(threads, || run(cli.command, threads)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
