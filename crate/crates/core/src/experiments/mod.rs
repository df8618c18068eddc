//! Scripted positioning and robustness studies.
//!
//! Every case writes `<out>/<name>/{trace.csv, initial.pgm, final.pgm,
//! desired.pgm, diff.pgm}` and each study aggregates into `<out>/report.csv`.

mod cases;
mod landscape;

pub use cases::*;
pub use landscape::{lattice, sample_cost_landscape, CostLandscape};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::geometry::{pose_from_euler_degrees, CameraPose, Intrinsics};
use crate::image::Image;
use crate::scene::{default_texture, low_texture, OcclusionPatch, PlanarScene, DEFAULT_TEXTURE_WIDTH_M};
use crate::servo::{ControllerConfig, DofMask, Servo, ServoStatus, ServoTrace};
use crate::smm::{SmmConfig, Truncation};
use crate::{Error, Result};

/// Shared setup of a study: camera, scene, SMM and controller settings at a
/// reference resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    /// Square view size in pixels the focal length and spreads refer to.
    pub resolution: usize,
    pub focal: f64,
    pub texture_width_m: f64,
    pub background: f64,
    pub desired: [f64; 6],
    pub smm: SmmConfig,
    pub ctrl: ControllerConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            resolution: 50,
            focal: 10.0,
            texture_width_m: DEFAULT_TEXTURE_WIDTH_M,
            background: 0.0,
            desired: DESIRED_POSE,
            smm: SmmConfig {
                spread_px: 3.0,
                guard_band: 12,
                truncation: Truncation::Radius(crate::smm::DEFAULT_TRUNCATION_RADIUS),
                ..SmmConfig::default()
            },
            ctrl: ControllerConfig {
                lambda: 0.5,
                max_iters: 150,
                convergence_ratio: 1e-3,
                ..ControllerConfig::default()
            },
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 16 {
            return Err(Error::invalid("resolution", "must be at least 16"));
        }
        if !(self.focal > 0.0) {
            return Err(Error::invalid("focal", "must be positive"));
        }
        if !(self.texture_width_m > 0.0) {
            return Err(Error::invalid("texture_width_m", "must be positive"));
        }
        if !self.desired.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("desired pose"));
        }
        self.smm.validate()?;
        self.ctrl.validate()
    }

    /// Same field of view and kernel footprint at another resolution: focal
    /// length, spread and guard band scale with the pixel count per side.
    pub fn at_resolution(&self, resolution: usize) -> StudyConfig {
        let k = resolution as f64 / self.resolution as f64;
        let mut out = self.clone();
        out.resolution = resolution;
        out.focal *= k;
        out.smm.spread_px *= k;
        out.smm.guard_band = (self.smm.guard_band as f64 * k).round() as usize;
        out
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::centered(self.resolution, self.resolution, self.focal)
    }

    pub fn desired_pose(&self) -> CameraPose {
        pose_from_euler_degrees(self.desired)
    }

    pub fn scene(&self, texture: &TextureId) -> Result<PlanarScene> {
        let img = match texture {
            TextureId::Default => default_texture(),
            TextureId::LowTexture => low_texture(32)?,
            TextureId::Constant(v) => Image::constant(32, 32, *v)?,
            TextureId::File(p) => Image::load(p)?,
        };
        let scale = self.texture_width_m / img.width() as f64;
        // a constant texture fills the whole view: no plane border to track
        let background = match texture {
            TextureId::Constant(v) => *v,
            _ => self.background,
        };
        PlanarScene::new(img, CameraPose::identity(), scale, background)
    }

    pub fn servo(&self, texture: &TextureId, mask: DofMask) -> Result<Servo> {
        self.validate()?;
        let ctrl = ControllerConfig {
            dof_mask: mask,
            ..self.ctrl
        };
        Servo::new(&self.scene(texture)?, &self.desired_pose(), &self.intrinsics()?, &self.smm, &ctrl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseStatus {
    Converged,
    MaxIters,
    Diverged,
    /// The desired view carries no gradient, so no control is possible.
    Degenerate,
}

impl CaseStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseStatus::Converged => "converged",
            CaseStatus::MaxIters => "max_iters",
            CaseStatus::Diverged => "diverged",
            CaseStatus::Degenerate => "degenerate",
        }
    }
}

impl From<ServoStatus> for CaseStatus {
    fn from(s: ServoStatus) -> Self {
        match s {
            ServoStatus::Converged => CaseStatus::Converged,
            ServoStatus::MaxIters => CaseStatus::MaxIters,
            ServoStatus::Diverged => CaseStatus::Diverged,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub name: String,
    pub status: CaseStatus,
    pub iterations: usize,
    /// Final pose relative to the desired one: meters and degrees.
    pub final_error: [f64; 6],
    pub final_err_norm: f64,
    pub smoothness: f64,
    pub decay_violations: f64,
    /// Mean wall time of one SMM transform of a current view.
    pub transform_seconds: f64,
    pub trace_path: Option<PathBuf>,
    pub trace: Option<ServoTrace>,
}

impl CaseReport {
    pub fn converged(&self) -> bool {
        self.status == CaseStatus::Converged
    }

    pub fn max_abs_translation(&self) -> f64 {
        self.final_error[..3].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_rotation_deg(&self) -> f64 {
        self.final_error[3..].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub cases: Vec<CaseReport>,
}

pub const REPORT_HEADER: &str = "name,status,iterations,err_tx,err_ty,err_tz,err_alpha_deg,err_beta_deg,err_gamma_deg,final_err_norm,smoothness,decay_violations,trace";

impl ExperimentReport {
    pub fn any_diverged(&self) -> bool {
        self.cases.iter().any(|c| c.status == CaseStatus::Diverged)
    }

    pub fn converged_count(&self) -> usize {
        self.cases.iter().filter(|c| c.converged()).count()
    }

    pub fn case(&self, name: &str) -> Option<&CaseReport> {
        self.cases.iter().find(|c| c.name == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(REPORT_HEADER.split(','))?;
        for c in &self.cases {
            let mut row = vec![c.name.clone(), c.status.as_str().to_string(), c.iterations.to_string()];
            row.extend(c.final_error.iter().map(|v| format!("{v:.6e}")));
            row.push(format!("{:.6e}", c.final_err_norm));
            row.push(format!("{:.6e}", c.smoothness));
            row.push(format!("{:.4}", c.decay_violations));
            row.push(
                c.trace_path
                    .as_ref()
                    .map(|p| p.to_string_lossy().into_owned())
                    .unwrap_or_default(),
            );
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("report", e))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("report.csv");
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        Ok(path)
    }
}

fn occlusion_patch(spec: &OcclusionSpec, res: usize) -> Result<OcclusionPatch> {
    OcclusionPatch::covering_fraction(res, res, spec.fraction, spec.center, spec.fill.clone())
}

/// Run one case and, when `out` is given, write its artifacts under
/// `out/<name>/`.
pub fn run_case(study: &StudyConfig, case: &ExperimentCase, out: Option<&Path>) -> Result<CaseReport> {
    let study = if case.resolution != study.resolution {
        study.at_resolution(case.resolution)
    } else {
        study.clone()
    };
    let servo = match study.servo(&case.texture, case.dof_mask) {
        Ok(s) => s,
        Err(Error::Degenerate(why)) => {
            log::warn!("{}: degenerate desired view ({why})", case.name);
            return Ok(CaseReport {
                name: case.name.clone(),
                status: CaseStatus::Degenerate,
                iterations: 0,
                final_error: [0.0; 6],
                final_err_norm: f64::NAN,
                smoothness: 0.0,
                decay_violations: 0.0,
                transform_seconds: 0.0,
                trace_path: None,
                trace: None,
            });
        }
        Err(e) => return Err(e),
    };
    let occlusion = case
        .occlusion
        .as_ref()
        .map(|o| occlusion_patch(o, case.resolution))
        .transpose()?;
    let initial = pose_from_euler_degrees(case.initial);
    log::info!("{}: start {:?}", case.name, case.initial);
    let start = Instant::now();
    let trace = servo.run(&initial, occlusion.as_ref())?;
    let elapsed = start.elapsed().as_secs_f64();
    let last = trace.final_record();
    let report = CaseReport {
        name: case.name.clone(),
        status: trace.status.into(),
        iterations: trace.iterations(),
        final_error: last.pose.error_relative_to(servo.desired_pose()),
        final_err_norm: last.err_norm,
        smoothness: trace.smoothness(),
        decay_violations: trace.decay_violation_fraction(),
        transform_seconds: elapsed / trace.records.len() as f64,
        trace_path: None,
        trace: None,
    };
    log::info!(
        "{}: {} after {} iterations, final error {:?}",
        case.name,
        report.status.as_str(),
        report.iterations,
        report.final_error
    );
    let trace_path = match out {
        Some(dir) => Some(write_artifacts(&servo, &trace, &initial, occlusion.as_ref(), &dir.join(&case.name))?),
        None => None,
    };
    Ok(CaseReport {
        trace_path,
        trace: Some(trace),
        ..report
    })
}

fn write_artifacts(
    servo: &Servo,
    trace: &ServoTrace,
    initial: &CameraPose,
    occlusion: Option<&OcclusionPatch>,
    dir: &Path,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let trace_path = dir.join("trace.csv");
    trace.save_csv(&trace_path)?;
    let first = servo.view(initial, occlusion)?;
    let last = servo.view(&trace.final_pose(), occlusion)?;
    first.save_pgm(dir.join("initial.pgm"))?;
    last.save_pgm(dir.join("final.pgm"))?;
    servo.desired_image().save_pgm(dir.join("desired.pgm"))?;
    last.abs_diff(servo.desired_image())?.save_pgm(dir.join("diff.pgm"))?;
    Ok(trace_path)
}

pub fn run_cases(study: &StudyConfig, cases: &[ExperimentCase], out: Option<&Path>) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::default();
    for case in cases {
        report.cases.push(run_case(study, case, out)?);
    }
    if let Some(dir) = out {
        report.save(dir)?;
    }
    Ok(report)
}

pub fn run_table1(study: &StudyConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    run_cases(study, &table1_cases(), out)
}

pub fn run_table2(study: &StudyConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    run_cases(study, &table2_cases(), out)
}

/// The same 6-DOF case at `study.resolution` and at twice that.
pub fn resolution_cases(study: &StudyConfig) -> Vec<ExperimentCase> {
    [study.resolution, 2 * study.resolution]
        .iter()
        .map(|&r| ExperimentCase {
            resolution: r,
            ..ExperimentCase::new(format!("resolution_{r}x{r}"), TABLE2[RESOLUTION_CASE], DofMask::FULL)
        })
        .collect()
}

pub fn run_resolution_study(study: &StudyConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    run_cases(study, &resolution_cases(study), out)
}

/// A clean control run and an occluded run from the same start pose.
pub fn occlusion_cases(spec: &OcclusionSpec) -> Vec<ExperimentCase> {
    let base = ExperimentCase::new("occlusion_clean", TABLE2[OCCLUSION_CASE], DofMask::FULL);
    let occluded = ExperimentCase {
        name: "occlusion_patch".into(),
        occlusion: Some(spec.clone()),
        ..base.clone()
    };
    vec![base, occluded]
}

pub fn run_occlusion_study(study: &StudyConfig, spec: &OcclusionSpec, out: Option<&Path>) -> Result<ExperimentReport> {
    run_cases(study, &occlusion_cases(spec), out)
}

/// Textures exercised by default: the photograph, a low-texture scene and a
/// constant plane.
pub fn default_content_textures() -> Vec<TextureId> {
    vec![TextureId::Default, TextureId::LowTexture, TextureId::Constant(128.0)]
}

pub fn content_cases(textures: &[TextureId]) -> Vec<ExperimentCase> {
    textures
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let name = match t {
                TextureId::File(p) => format!(
                    "content_{i}_{}",
                    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
                ),
                other => format!("content_{i}_{other}"),
            };
            ExperimentCase {
                texture: t.clone(),
                ..ExperimentCase::new(name, TABLE2[RESOLUTION_CASE], DofMask::FULL)
            }
        })
        .collect()
}

pub fn run_content_study(study: &StudyConfig, textures: &[TextureId], out: Option<&Path>) -> Result<ExperimentReport> {
    if textures.len() < 2 {
        return Err(Error::invalid("textures", "content study needs at least two textures"));
    }
    run_cases(study, &content_cases(textures), out)
}
