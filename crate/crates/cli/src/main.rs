mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use smm_servo::experiments::{self, lattice, sample_cost_landscape, ExperimentCase, ExperimentReport};
use smm_servo::geometry::Intrinsics;
use smm_servo::image::write_csv_grid;
use smm_servo::smm::{components_from_image, smm_transform};
use smm_servo::Image;

use config::{parse_config, ConfigError, RunConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "smm-servo", version, about = "Visual servoing on Student's t mixture model features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single servo run from `initial` to `desired`.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Planar 3-DOF positioning cases.
    Table1 {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Full 6-DOF positioning cases.
    Table2 {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// One 6-DOF case at the configured resolution and at twice that.
    Resolution {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Clean and occluded runs from the same start pose.
    Occlusion {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// One 6-DOF case over several textures.
    Content {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Cost over a (tx, ty) lattice around the desired pose.
    Landscape {
        #[arg(long)]
        config: PathBuf,
    },
    /// SMM transform of a single image written as a CSV grid.
    Smm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] smm_servo::Error),
}

fn load(config: Option<&Path>) -> Result<RunConfig, ConfigError> {
    match config {
        Some(p) => parse_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn init_threads() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var("SMM_SERVO_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| ConfigError::Field {
        key: "SMM_SERVO_THREADS",
        reason: format!("expected a non-negative integer, got `{v}`"),
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError::Field {
                key: "SMM_SERVO_THREADS",
                reason: e.to_string(),
            })?;
    }
    Ok(())
}

fn finish(report: &ExperimentReport, dir: &Path) -> Result<u8, CliError> {
    let path = report.save(dir)?;
    for c in &report.cases {
        println!(
            "{:<22} {:<10} iters={:<4} |e|={:.3e}",
            c.name,
            c.status.as_str(),
            c.iterations,
            c.final_err_norm
        );
    }
    println!("report: {}", path.display());
    Ok(if report.any_diverged() { EXIT_FAILURE } else { 0 })
}

fn study_run(cfg: &RunConfig, name: &str, run: impl FnOnce(&Path) -> smm_servo::Result<ExperimentReport>) -> Result<u8, CliError> {
    let dir = cfg.output_dir.join(name);
    let report = run(&dir)?;
    finish(&report, &dir)
}

fn execute(command: Command) -> Result<u8, CliError> {
    init_threads()?;
    match command {
        Command::Run { config } => {
            let cfg = parse_config(&config)?;
            let case = ExperimentCase {
                texture: cfg.texture.clone(),
                resolution: cfg.study.resolution,
                ..ExperimentCase::new("run", cfg.initial, cfg.dof_mask)
            };
            let dir = cfg.output_dir.clone();
            let report = experiments::run_cases(&cfg.study, &[case], Some(&dir))?;
            finish(&report, &dir)
        }
        Command::Table1 { config } => {
            let cfg = load(config.as_deref())?;
            study_run(&cfg, "table1", |d| experiments::run_table1(&cfg.study, Some(d)))
        }
        Command::Table2 { config } => {
            let cfg = load(config.as_deref())?;
            study_run(&cfg, "table2", |d| experiments::run_table2(&cfg.study, Some(d)))
        }
        Command::Resolution { config } => {
            let cfg = load(config.as_deref())?;
            study_run(&cfg, "resolution", |d| experiments::run_resolution_study(&cfg.study, Some(d)))
        }
        Command::Occlusion { config } => {
            let cfg = load(config.as_deref())?;
            study_run(&cfg, "occlusion", |d| {
                experiments::run_occlusion_study(&cfg.study, &cfg.occlusion, Some(d))
            })
        }
        Command::Content { config } => {
            let cfg = load(config.as_deref())?;
            study_run(&cfg, "content", |d| {
                experiments::run_content_study(&cfg.study, &cfg.content_textures, Some(d))
            })
        }
        Command::Landscape { config } => {
            let cfg = parse_config(&config)?;
            let axis = lattice(cfg.landscape_half_width, cfg.landscape_steps);
            let scene = cfg.study.scene(&cfg.texture)?;
            let k = cfg.study.intrinsics()?;
            let land = sample_cost_landscape(&scene, &cfg.study.desired_pose(), &k, &cfg.study.smm, &axis, &axis)?;
            let dir = cfg.output_dir.join("landscape");
            std::fs::create_dir_all(&dir).map_err(|e| smm_servo::Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let path = dir.join("landscape.csv");
            land.save_csv(&path)?;
            let ((ix, iy), ties) = land.argmin();
            println!(
                "minimum at tx={:+.4} ty={:+.4} ({ties} minimum), landscape: {}",
                axis[ix],
                axis[iy],
                path.display()
            );
            Ok(0)
        }
        Command::Smm { input, output, config } => {
            let cfg = load(config.as_deref())?;
            let img = Image::load(&input)?;
            // keep the configured field of view for any input size
            let focal = cfg.study.focal * img.width() as f64 / cfg.study.resolution as f64;
            let spread = cfg.study.smm.spread_px * img.width() as f64 / cfg.study.resolution as f64;
            let smm_cfg = smm_servo::smm::SmmConfig {
                spread_px: spread,
                ..cfg.study.smm
            };
            let k = Intrinsics::centered(img.width(), img.height(), focal)?;
            let comps = components_from_image(&img, &k, &smm_cfg)?;
            let s = smm_transform(&comps, &k, &smm_cfg)?;
            write_csv_grid(&output, img.width(), &s.values)?;
            println!("smm: {}", output.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e}");
            let code = match &e {
                CliError::Config(_) | CliError::Run(smm_servo::Error::InvalidParameter { .. }) => EXIT_CONFIG,
                CliError::Run(_) => EXIT_FAILURE,
            };
            ExitCode::from(code)
        }
    }
}
