//! Command-line front end for the dataset generator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use oculogen::datagen::{
    self, parse_config, DatagenError, DatasetManifest, DatasetSpec, PoseKey,
};

#[derive(Parser)]
#[command(
    name = "oculogen",
    version,
    about = "Synthesizes gaze-labelled eye images: procedural eye models, \
             physically-based rendering, pixel-accurate labels."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the full dataset described by a config file.
    Generate {
        /// TOML dataset config (an empty file means all defaults).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (imgs/, labels/, manifest.json).
        #[arg(long)]
        out: PathBuf,
        /// Override the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores; env OCULOGEN_JOBS as fallback).
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the config's image.spp.
        #[arg(long)]
        spp: Option<u32>,
    },
    /// Render a contact sheet of gaze variations for a quick look.
    Preview {
        #[arg(long)]
        config: PathBuf,
        /// Output PNG path.
        #[arg(long)]
        out: PathBuf,
        /// Sheet layout as COLSxROWS.
        #[arg(long, default_value = "7x7", value_parser = parse_grid)]
        grid: (usize, usize),
        /// Samples per pixel for the preview tiles.
        #[arg(long, default_value_t = 16)]
        spp: u32,
        /// Override the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Tabulate gaze and head-pose distributions of an emitted dataset.
    Stats {
        /// Path to a manifest.json written by generate.
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for histogram tables and heatmaps.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check label consistency with a pixel-space k-NN gaze regressor.
    EvalKnn {
        #[arg(long)]
        manifest: PathBuf,
        /// Fraction of images hashed into the training split.
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        /// Neighbor count.
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Permute gaze labels first (control run; use a fixed seed).
        #[arg(long)]
        shuffle_seed: Option<u64>,
    },
    /// Render a single image at an explicit camera/gaze pose.
    #[command(allow_negative_numbers = true)]
    RenderOne {
        #[arg(long)]
        config: PathBuf,
        /// Output PNG path; the label record is printed to stdout.
        #[arg(long)]
        out: PathBuf,
        /// Camera azimuth, degrees.
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        /// Camera elevation, degrees.
        #[arg(long, default_value_t = 0.0)]
        phi: f64,
        /// Gaze pitch offset from the camera, degrees.
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Gaze yaw offset from the camera, degrees.
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        spp: Option<u32>,
        /// Also write the linear radiance image in the float-dump format.
        #[arg(long)]
        linear_out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (c, r) = s.split_once(['x', 'X']).ok_or("expected COLSxROWS, e.g. 7x7")?;
    let cols: usize = c.trim().parse().map_err(|_| format!("bad column count `{c}`"))?;
    let rows: usize = r.trim().parse().map_err(|_| format!("bad row count `{r}`"))?;
    if cols == 0 || rows == 0 {
        return Err("grid must be at least 1x1".into());
    }
    Ok((cols, rows))
}

/// Exit 1: the invocation or config is wrong. Exit 2: generation failed.
enum CliError {
    Usage(String),
    Generation(String),
}

impl CliError {
    fn report(self) -> ExitCode {
        match self {
            CliError::Usage(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
            CliError::Generation(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        }
    }
}

fn load_spec(path: &PathBuf, seed: Option<u64>, spp: Option<u32>) -> Result<DatasetSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut spec = parse_config(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    if let Some(s) = seed {
        spec.master_seed = s;
    }
    if let Some(v) = spp {
        spec.image.spp = v;
        spec.validate().map_err(|e| CliError::Usage(format!("--spp {v}: {e}")))?;
    }
    Ok(spec)
}

fn load_manifest(path: &PathBuf) -> Result<DatasetManifest, CliError> {
    DatasetManifest::load(path)
        .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))
}

/// --jobs wins; the OCULOGEN_JOBS environment variable is the fallback.
fn resolve_jobs(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("OCULOGEN_JOBS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("OCULOGEN_JOBS=`{v}` is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn generation(e: DatagenError) -> CliError {
    CliError::Generation(e.to_string())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate { config, out, seed, jobs, spp } => {
            let spec = load_spec(&config, seed, spp)?;
            let jobs = resolve_jobs(jobs)?;
            let manifest = datagen::generate(&spec, &out, jobs).map_err(generation)?;
            let c = manifest.counts;
            println!(
                "wrote {} images to {} ({} enumerated, {} outside constraints, \
                 {} pupil hidden, {} failed)",
                c.emitted,
                out.display(),
                c.enumerated,
                c.skipped_constraint,
                c.skipped_visibility,
                c.failed
            );
            Ok(())
        }
        Command::Preview { config, out, grid, spp, seed, jobs } => {
            let spec = load_spec(&config, seed, None)?;
            let jobs = resolve_jobs(jobs)?;
            let sheet = datagen::preview(&spec, grid, spp, &out, jobs).map_err(generation)?;
            println!(
                "wrote {}x{} preview sheet ({}x{} tiles) to {}",
                sheet.width,
                sheet.height,
                grid.0,
                grid.1,
                out.display()
            );
            Ok(())
        }
        Command::Stats { manifest, out } => {
            let manifest = load_manifest(&manifest)?;
            let report = datagen::stats(&manifest, &out).map_err(generation)?;
            print!("{}", report.gaze.to_table("alpha_deg", "beta_deg"));
            println!();
            print!("{}", report.head_pose.to_table("pitch_deg", "yaw_deg"));
            println!("wrote histograms to {}", out.display());
            Ok(())
        }
        Command::EvalKnn { manifest, train_fraction, k, shuffle_seed } => {
            let root = manifest
                .parent()
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            let manifest = load_manifest(&manifest)?;
            let report = datagen::eval_knn(&manifest, &root, train_fraction, k, shuffle_seed)
                .map_err(generation)?;
            println!(
                "k={} train={} test={} mean_error_deg={:.3} baseline_error_deg={:.3}{}",
                report.k,
                report.n_train,
                report.n_test,
                report.mean_error_deg,
                report.baseline_error_deg,
                if shuffle_seed.is_some() { " (labels shuffled)" } else { "" }
            );
            Ok(())
        }
        Command::RenderOne {
            config,
            out,
            theta,
            phi,
            alpha,
            beta,
            seed,
            spp,
            linear_out,
            jobs,
        } => {
            let spec = load_spec(&config, seed, None)?;
            let jobs = resolve_jobs(jobs)?;
            let pose =
                PoseKey { theta_deg: theta, phi_deg: phi, alpha_deg: alpha, beta_deg: beta };
            let record = datagen::render_one(
                &spec,
                pose,
                &out,
                linear_out.as_deref(),
                spp.unwrap_or(spec.image.spp),
                jobs,
            )
            .map_err(generation)?;
            print!("{}", record.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
