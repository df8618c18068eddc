//! Run configuration: a TOML file of flat `key = value` pairs where dotted
//! prefixes (`smm.sigma_min`, `controller.lambda`) group related settings.
//! Every key is optional and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use smm_servo::experiments::{checker_patch, OcclusionSpec, StudyConfig, TextureId};
use smm_servo::scene::OcclusionFill;
use smm_servo::servo::DofMask;
use smm_servo::smm::{GradientMode, Truncation};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("`{key}`: {reason}")]
    Field { key: &'static str, reason: String },
    #[error(transparent)]
    Invalid(#[from] smm_servo::Error),
}

fn field(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    texture: String,
    output_dir: PathBuf,
    resolution: usize,
    initial: Option<[f64; 6]>,
    desired: [f64; 6],
    dof_mask: String,
    scene: RawScene,
    camera: RawCamera,
    smm: RawSmm,
    controller: RawController,
    occlusion: RawOcclusion,
    landscape: RawLandscape,
    content: RawContent,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawScene {
    plane_scale: f64,
    background: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawCamera {
    focal: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSmm {
    sigma_min: f64,
    sigma_max: f64,
    spread_px: f64,
    truncation_radius: f64,
    truncation_tolerance: f64,
    gradient: String,
    normalize: bool,
    guard_band: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawController {
    lambda: f64,
    dt: f64,
    max_iters: usize,
    convergence_ratio: f64,
    depth: Option<f64>,
    current_jacobian: bool,
    log_every: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawFill {
    Value(f64),
    Name(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOcclusion {
    fraction: f64,
    center: [f64; 2],
    fill: RawFill,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawLandscape {
    half_width: f64,
    steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawContent {
    textures: Vec<String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        let s = StudyConfig::default();
        Self {
            texture: "default".into(),
            output_dir: "out".into(),
            resolution: s.resolution,
            initial: None,
            desired: s.desired,
            dof_mask: DofMask::FULL.to_string(),
            scene: RawScene::default(),
            camera: RawCamera::default(),
            smm: RawSmm::default(),
            controller: RawController::default(),
            occlusion: RawOcclusion::default(),
            landscape: RawLandscape::default(),
            content: RawContent::default(),
        }
    }
}

impl Default for RawScene {
    fn default() -> Self {
        let s = StudyConfig::default();
        Self {
            plane_scale: s.texture_width_m,
            background: s.background,
        }
    }
}

impl Default for RawCamera {
    fn default() -> Self {
        Self {
            focal: StudyConfig::default().focal,
        }
    }
}

impl Default for RawSmm {
    fn default() -> Self {
        let c = StudyConfig::default().smm;
        Self {
            sigma_min: c.sigma_min,
            sigma_max: c.sigma_max,
            spread_px: c.spread_px,
            truncation_radius: match c.truncation {
                Truncation::Radius(r) => r,
                Truncation::Full => 0.0,
            },
            truncation_tolerance: c.truncation_tolerance,
            gradient: "analytic".into(),
            normalize: c.normalize,
            guard_band: c.guard_band,
        }
    }
}

impl Default for RawController {
    fn default() -> Self {
        let c = StudyConfig::default().ctrl;
        Self {
            lambda: c.lambda,
            dt: c.dt,
            max_iters: c.max_iters,
            convergence_ratio: c.convergence_ratio,
            depth: c.depth,
            current_jacobian: c.current_jacobian,
            log_every: c.log_every,
        }
    }
}

impl Default for RawOcclusion {
    fn default() -> Self {
        let o = OcclusionSpec::default();
        Self {
            fraction: o.fraction,
            center: [o.center.0, o.center.1],
            fill: RawFill::Name("checker".into()),
        }
    }
}

impl Default for RawLandscape {
    fn default() -> Self {
        Self {
            half_width: 0.2,
            steps: 21,
        }
    }
}

impl Default for RawContent {
    fn default() -> Self {
        Self {
            textures: vec!["default".into(), "low_texture".into(), "constant:128".into()],
        }
    }
}

/// Validated settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub study: StudyConfig,
    pub texture: TextureId,
    pub initial: [f64; 6],
    pub dof_mask: DofMask,
    pub output_dir: PathBuf,
    pub occlusion: OcclusionSpec,
    pub landscape_half_width: f64,
    pub landscape_steps: usize,
    pub content_textures: Vec<TextureId>,
}

impl Default for RunConfig {
    fn default() -> Self {
        from_raw(RawConfig::default(), Path::new(".")).expect("defaults are valid")
    }
}

/// Reads and validates a config file. Relative paths inside it resolve
/// against the file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_str(&text, base).map_err(|e| match e {
        ConfigError::Parse { source, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn parse_str(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
        path: PathBuf::new(),
        source,
    })?;
    from_raw(raw, base)
}

fn parse_texture(spec: &str, base: &Path, key: &'static str) -> Result<TextureId, ConfigError> {
    match spec {
        "default" => Ok(TextureId::Default),
        "low_texture" => Ok(TextureId::LowTexture),
        s if s.starts_with("constant:") => {
            let v: f64 = s["constant:".len()..]
                .parse()
                .map_err(|_| field(key, format!("bad constant intensity in `{s}`")))?;
            if !(0.0..=255.0).contains(&v) {
                return Err(field(key, "constant intensity must lie in [0, 255]"));
            }
            Ok(TextureId::Constant(v))
        }
        s => {
            let p = base.join(s);
            if !p.is_file() {
                return Err(field(key, format!("texture file {} does not exist", p.display())));
            }
            Ok(TextureId::File(p))
        }
    }
}

fn from_raw(raw: RawConfig, base: &Path) -> Result<RunConfig, ConfigError> {
    let gradient = match raw.smm.gradient.as_str() {
        "analytic" => GradientMode::Analytic,
        "filter" => GradientMode::Filter,
        other => return Err(field("smm.gradient", format!("expected `analytic` or `filter`, got `{other}`"))),
    };
    let r = raw.smm.truncation_radius;
    let truncation = if r == 0.0 { Truncation::Full } else { Truncation::Radius(r) };
    let dof_mask = DofMask::parse(&raw.dof_mask)?;

    let mut study = StudyConfig {
        resolution: raw.resolution,
        focal: raw.camera.focal,
        texture_width_m: raw.scene.plane_scale,
        background: raw.scene.background,
        desired: raw.desired,
        ..StudyConfig::default()
    };
    study.smm.sigma_min = raw.smm.sigma_min;
    study.smm.sigma_max = raw.smm.sigma_max;
    study.smm.spread_px = raw.smm.spread_px;
    study.smm.truncation = truncation;
    study.smm.truncation_tolerance = raw.smm.truncation_tolerance;
    study.smm.gradient = gradient;
    study.smm.normalize = raw.smm.normalize;
    study.smm.guard_band = raw.smm.guard_band;
    study.ctrl.lambda = raw.controller.lambda;
    study.ctrl.dt = raw.controller.dt;
    study.ctrl.max_iters = raw.controller.max_iters;
    study.ctrl.convergence_ratio = raw.controller.convergence_ratio;
    study.ctrl.depth = raw.controller.depth;
    study.ctrl.current_jacobian = raw.controller.current_jacobian;
    study.ctrl.log_every = raw.controller.log_every;
    study.ctrl.dof_mask = dof_mask;
    study.validate()?;
    if !(0.0..=255.0).contains(&study.background) {
        return Err(field("scene.background", "must lie in [0, 255]"));
    }

    let initial = raw.initial.unwrap_or(raw.desired);
    if !initial.iter().all(|v| v.is_finite()) {
        return Err(field("initial", "must be finite"));
    }

    let o = &raw.occlusion;
    if !(o.fraction > 0.0 && o.fraction < 1.0) {
        return Err(field("occlusion.fraction", "must lie in (0, 1)"));
    }
    if !o.center.iter().all(|c| (0.0..=1.0).contains(c)) {
        return Err(field("occlusion.center", "must lie in [0, 1] x [0, 1]"));
    }
    let fill = match &o.fill {
        RawFill::Value(v) if (0.0..=255.0).contains(v) => OcclusionFill::Constant(*v),
        RawFill::Value(_) => return Err(field("occlusion.fill", "intensity must lie in [0, 255]")),
        RawFill::Name(n) if n == "checker" => OcclusionFill::Patch(checker_patch()),
        RawFill::Name(n) => {
            let p = base.join(n);
            if !p.is_file() {
                return Err(field("occlusion.fill", format!("expected `checker`, an intensity or an image file, got `{n}`")));
            }
            OcclusionFill::Patch(smm_servo::Image::load(&p)?)
        }
    };

    if !(raw.landscape.half_width > 0.0 && raw.landscape.half_width.is_finite()) {
        return Err(field("landscape.half_width", "must be positive"));
    }
    if raw.landscape.steps < 3 || raw.landscape.steps.is_multiple_of(2) {
        return Err(field("landscape.steps", "must be odd and at least 3 so the lattice has a center"));
    }
    if raw.content.textures.len() < 2 {
        return Err(field("content.textures", "needs at least two textures"));
    }
    let content_textures = raw
        .content
        .textures
        .iter()
        .map(|t| parse_texture(t, base, "content.textures"))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(RunConfig {
        study,
        texture: parse_texture(&raw.texture, base, "texture")?,
        initial,
        dof_mask,
        output_dir: base.join(&raw.output_dir),
        occlusion: OcclusionSpec {
            fraction: o.fraction,
            center: (o.center[0], o.center[1]),
            fill,
        },
        landscape_half_width: raw.landscape.half_width,
        landscape_steps: raw.landscape.steps,
        content_textures,
    })
}
