//! Command-line driver: `fuse`, `odometry`, `eval`, `synth` and `ablate`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{
    evaluate, load_tum_sequence, run_depth_filter, run_odometry, DatasetConfig, MetricsRow, Sequence, Trajectory,
    METRICS_HEADER,
};
use crate::io::{write_depth_png, write_variance_raster};
use crate::pipeline::{DepthModel, FeatureSet, OdometryConfig};
use crate::synthetic::{demo_room, write_sequence, SceneSpec};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "rgbd-vo", version, about = "Uncertainty-aware RGB-D visual odometry")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with pipeline parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for RANSAC and scene generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// points | points+lines | points+planes | all
    #[arg(long, global = true)]
    features: Option<FeatureSet>,
    /// Sliding window length in frames.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// sensor | cgm | ogm
    #[arg(long = "depth-model", global = true)]
    depth_model: Option<DepthModel>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the depth filter only and write fused depth and variance maps.
    Fuse { sequence: PathBuf },
    /// Run the full pipeline and write the trajectory and diagnostics.
    Odometry { sequence: PathBuf },
    /// Compare an estimated trajectory with ground truth.
    Eval { estimate: PathBuf, truth: PathBuf },
    /// Generate a synthetic sequence from a scene spec (default: demo room).
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Also write the scene spec used.
        #[arg(long)]
        write_spec: bool,
    },
    /// Run odometry for every feature subset and write one metrics row each.
    Ablate {
        sequence: PathBuf,
        /// Also sweep every depth model.
        #[arg(long)]
        depth_models: bool,
    },
}

impl Common {
    fn config(&self) -> Result<OdometryConfig> {
        let mut c = match &self.config {
            Some(p) => OdometryConfig::from_file(p)?,
            None => OdometryConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(f) = self.features {
            c.features = f;
        }
        if let Some(w) = self.window {
            c.window_len = w;
        }
        if let Some(d) = self.depth_model {
            c.depth_model = d;
        }
        c.validate()?;
        Ok(c)
    }

    fn out_dir(&self) -> Result<Option<&Path>> {
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        }
        Ok(self.out.as_deref())
    }
}

fn open_sequence(dir: &Path, config: &OdometryConfig) -> Result<Sequence> {
    let seq = load_tum_sequence(
        dir,
        &DatasetConfig {
            depth_scale: config.depth_scale,
            ..DatasetConfig::default()
        },
    )?;
    if seq.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: no frames could be associated ({} skipped)",
            dir.display(),
            seq.skipped
        )));
    }
    Ok(seq)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::file(path, e))
}

fn fuse(common: &Common, dir: &Path) -> Result<()> {
    let config = common.config()?;
    let seq = open_sequence(dir, &config)?;
    let frames = run_depth_filter(&seq, &config)?;
    let out = common.out_dir()?;
    let mut report = String::from("frame,timestamp,raw_rmse_mm,filtered_rmse_mm\n");
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_default();
    for (i, f) in frames.iter().enumerate() {
        if let Some(out) = out {
            write_depth_png(&out.join(format!("fused_{i:05}.png")), &f.depth, config.depth_scale)?;
            write_variance_raster(&out.join(format!("variance_{i:05}.bin")), &f.var)?;
        }
        report.push_str(&format!("{i},{:.6},{},{}\n", f.timestamp, fmt(f.raw_rmse), fmt(f.rmse)));
    }
    match out {
        Some(out) => write(&out.join("fusion.csv"), &report)?,
        None => print!("{report}"),
    }
    Ok(())
}

fn odometry(common: &Common, dir: &Path) -> Result<()> {
    let config = common.config()?;
    let seq = open_sequence(dir, &config)?;
    let run = run_odometry(&seq, &config)?;
    log::info!(
        "{} frames in {:.2} s, {} fallbacks",
        run.diagnostics.len(),
        run.elapsed.as_secs_f64(),
        run.fallback_count()
    );
    let metrics = seq
        .groundtruth
        .as_ref()
        .map(|gt| MetricsRow::new(&seq.name, &config, &run.trajectory, gt));
    match common.out_dir()? {
        Some(out) => {
            run.trajectory.write_tum(&out.join("trajectory.txt"))?;
            write(&out.join("diagnostics.csv"), &run.diagnostics_csv())?;
            if let Some(m) = &metrics {
                write(&out.join("metrics.csv"), &format!("{METRICS_HEADER}\n{}\n", m.csv_row()))?;
            }
        }
        None => print!("{}", run.trajectory.to_tum_string()),
    }
    if let Some(m) = metrics {
        eprintln!("{METRICS_HEADER}\n{}", m.csv_row());
    }
    Ok(())
}

fn eval(estimate: &Path, truth: &Path) -> Result<()> {
    let est = Trajectory::read_tum(estimate)?;
    let gt = Trajectory::read_tum(truth)?;
    let (rpe, ate) = evaluate(&est, &gt)?;
    println!("rpe_trans_mm,rpe_rot_deg,ate_mm");
    println!("{:.3},{:.3},{:.3}", rpe.trans_mm, rpe.rot_deg, ate);
    Ok(())
}

fn synth(common: &Common, spec: Option<&Path>, write_spec: bool) -> Result<()> {
    let mut scene = match spec {
        Some(p) => SceneSpec::from_file(p)?,
        None => demo_room(common.seed.unwrap_or(0)),
    };
    if let (Some(seed), Some(_)) = (common.seed, spec) {
        scene.seed = seed;
    }
    let out = common
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("`synth` needs --out".into()))?;
    write_sequence(&scene, out)?;
    if write_spec {
        scene.resolve_descriptors();
        write(&out.join("scene.json"), &scene.to_json())?;
    }
    println!("wrote {} frames to {}", scene.trajectory.len(), out.display());
    Ok(())
}

fn ablate(common: &Common, dir: &Path, depth_models: bool) -> Result<()> {
    let base = common.config()?;
    let seq = open_sequence(dir, &base)?;
    let gt = seq
        .groundtruth
        .as_ref()
        .ok_or_else(|| Error::InsufficientData(format!("{}: ablation needs ground truth", dir.display())))?;
    let models: Vec<DepthModel> = if depth_models {
        DepthModel::ALL.to_vec()
    } else {
        vec![base.depth_model]
    };
    let mut csv = format!("{METRICS_HEADER}\n");
    for depth_model in models {
        for features in FeatureSet::ALL {
            let config = OdometryConfig {
                features,
                depth_model,
                ..base
            };
            let run = run_odometry(&seq, &config)?;
            let row = MetricsRow::new(&seq.name, &config, &run.trajectory, gt);
            println!("{}", row.csv_row());
            csv.push_str(&row.csv_row());
            csv.push('\n');
        }
    }
    if let Some(out) = common.out_dir()? {
        write(&out.join("ablation.csv"), &csv)?;
    }
    Ok(())
}

/// Parses arguments and runs a subcommand. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Fuse { sequence } => fuse(&cli.common, sequence),
        Command::Odometry { sequence } => odometry(&cli.common, sequence),
        Command::Eval { estimate, truth } => eval(estimate, truth),
        Command::Synth { spec, write_spec } => synth(&cli.common, spec.as_deref(), *write_spec),
        Command::Ablate { sequence, depth_models } => ablate(&cli.common, sequence, *depth_models),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flag_fails() {
        assert_eq!(run(["rgbd-vo", "eval", "--bogus", "a", "b"]), 2);
    }

    #[test]
    fn bad_feature_set_fails() {
        assert_eq!(run(["rgbd-vo", "--features", "lines", "eval", "a", "b"]), 2);
    }

    #[test]
    fn eval_of_identical_files_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        let t = Trajectory::new(
            (0..40)
                .map(|i| (i as f64 * 0.1, nalgebra::Isometry3::translation(i as f64 * 10.0, 0.0, (i * i) as f64)))
                .collect(),
        )
        .unwrap();
        t.write_tum(&path).unwrap();
        let p = path.to_str().unwrap();
        assert_eq!(run(["rgbd-vo", "eval", p, p]), 0);
    }

    #[test]
    fn missing_sequence_reports_error() {
        assert_eq!(run(["rgbd-vo", "odometry", "/nonexistent/sequence"]), 1);
    }
}
