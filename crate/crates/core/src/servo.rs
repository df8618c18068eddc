//! Interaction matrix, pseudoinverse, control law and the closed servo loop.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2x6, RowVector6, Vector6};
use rayon::prelude::*;

use crate::geometry::{integrate_twist, CameraPose, Intrinsics, Twist};
use crate::image::Image;
use crate::scene::{apply_occlusion_offset, render_view, OcclusionPatch, PlanarScene};
use crate::smm::{SmmConfig, SmmEncoder, SmmGradient, SmmImage};
use crate::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-6;

/// Active twist components in `(vx, vy, vz, wx, wy, wz)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofMask(pub [bool; 6]);

impl DofMask {
    pub const FULL: DofMask = DofMask([true; 6]);
    /// `vx, vy, wz`: motion parallel to a fronto-parallel plane.
    pub const PLANAR: DofMask = DofMask([true, true, false, false, false, true]);

    pub fn is_active(&self, axis: usize) -> bool {
        self.0[axis]
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn apply(&self, v: &Vector6<f64>) -> Vector6<f64> {
        Vector6::from_fn(|i, _| if self.0[i] { v[i] } else { 0.0 })
    }

    /// Parse six `0`/`1` characters, e.g. `110001`.
    pub fn parse(s: &str) -> Result<Self> {
        let bits: Vec<bool> = s
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(Error::invalid("dof_mask", format!("expected six 0/1 characters, got `{s}`"))),
            })
            .collect::<Result<_>>()?;
        let arr: [bool; 6] = bits
            .try_into()
            .map_err(|_| Error::invalid("dof_mask", format!("expected six 0/1 characters, got `{s}`")))?;
        let mask = DofMask(arr);
        if mask.is_empty() {
            return Err(Error::invalid("dof_mask", "at least one component must be active"));
        }
        Ok(mask)
    }
}

impl std::fmt::Display for DofMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.iter().try_for_each(|&b| write!(f, "{}", if b { '1' } else { '0' }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub lambda: f64,
    pub dt: f64,
    pub max_iters: usize,
    pub convergence_ratio: f64,
    pub dof_mask: DofMask,
    /// Depth used in the interaction matrix; `None` takes the desired
    /// camera's distance to the plane.
    pub depth: Option<f64>,
    /// Rebuild the interaction matrix from the current image every iteration.
    pub current_jacobian: bool,
    /// Progress log period in iterations, 0 to disable.
    pub log_every: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.8,
            dt: 1.0,
            max_iters: 200,
            convergence_ratio: 1e-3,
            dof_mask: DofMask::FULL,
            depth: None,
            current_jacobian: false,
            log_every: 10,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda", format!("gain must be positive, got {}", self.lambda)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.convergence_ratio > 0.0 && self.convergence_ratio < 1.0) {
            return Err(Error::invalid("convergence_ratio", "must lie in (0, 1)"));
        }
        if self.dof_mask.is_empty() {
            return Err(Error::invalid("dof_mask", "at least one component must be active"));
        }
        if let Some(z) = self.depth {
            if !(z > 0.0) || !z.is_finite() {
                return Err(Error::invalid("depth", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Feature-motion Jacobian of a normalized image point at depth `z`.
pub fn point_interaction_matrix(x: f64, y: f64, z: f64) -> Result<Matrix2x6<f64>> {
    if z == 0.0 || !z.is_finite() {
        return Err(Error::invalid("depth", "point depth must be finite and non-zero"));
    }
    let iz = 1.0 / z;
    #[rustfmt::skip]
    let m = Matrix2x6::new(
        -iz, 0.0, x * iz, x * y, -(1.0 + x * x), y,
        0.0, -iz, y * iz, 1.0 + y * y, -x * y, -x,
    );
    Ok(m)
}

/// One row of the SMM interaction matrix, `-grad(S)^T L_x`.
pub fn smm_interaction_row(grad: (f64, f64), x: f64, y: f64, z: f64) -> Result<RowVector6<f64>> {
    if !(grad.0.is_finite() && grad.1.is_finite()) {
        return Err(Error::NonFinite("smm gradient"));
    }
    let l = point_interaction_matrix(x, y, z)?;
    Ok(-(l.row(0) * grad.0 + l.row(1) * grad.1))
}

/// `k x 6` stacked Jacobian, rows in row-major pixel order.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    pub matrix: DMatrix<f64>,
}

impl InteractionMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&v| v == 0.0)
    }

    /// Predicted feature rate for a twist.
    pub fn apply(&self, twist: &Twist) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(twist.to_vector().as_slice())
    }
}

pub fn build_interaction_matrix(
    grad: &SmmGradient,
    k: &Intrinsics,
    z: f64,
    mask: DofMask,
) -> Result<InteractionMatrix> {
    if (grad.width, grad.height) != (k.width, k.height) {
        return Err(Error::DimensionMismatch(format!(
            "gradient is {}x{} but intrinsics describe {}x{}",
            grad.width, grad.height, k.width, k.height
        )));
    }
    if grad.du.is_empty() {
        return Err(Error::EmptyImage);
    }
    let grid = k.normalized_grid();
    let rows: Vec<RowVector6<f64>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &(x, y))| smm_interaction_row((grad.du[i], grad.dv[i]), x, y, z))
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(rows.len(), 6);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..6 {
            if mask.is_active(j) {
                m[(i, j)] = r[j];
            }
        }
    }
    Ok(InteractionMatrix { matrix: m })
}

/// Moore-Penrose pseudoinverse by SVD with a relative rank cutoff.
pub fn pseudo_inverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("interaction matrix"));
    }
    if l.is_empty() {
        return Ok(DMatrix::zeros(l.ncols(), l.nrows()));
    }
    // SVD of the tall orientation keeps U thin for k x 6 inputs
    let transpose = l.nrows() < l.ncols();
    let a = if transpose { l.transpose() } else { l.clone() };
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let cut = PINV_RELATIVE_CUTOFF * smax;
    let inv = svd.singular_values.map(|s| if s > cut && s > 0.0 { 1.0 / s } else { 0.0 });
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let pinv = vt.transpose() * DMatrix::from_diagonal(&inv) * u.transpose();
    Ok(if transpose { pinv.transpose() } else { pinv })
}

/// `t_c = -lambda L+ e` with masked components zeroed.
pub fn control_step(l_pinv: &DMatrix<f64>, e: &[f64], lambda: f64, mask: DofMask) -> Result<Twist> {
    if l_pinv.nrows() != 6 || l_pinv.ncols() != e.len() {
        return Err(Error::DimensionMismatch(format!(
            "pseudoinverse is {}x{} but error has {} entries",
            l_pinv.nrows(),
            l_pinv.ncols(),
            e.len()
        )));
    }
    let ev = DVector::from_column_slice(e);
    let v = l_pinv * ev * (-lambda);
    let v6 = Vector6::from_iterator(v.iter().copied());
    Ok(Twist::from_vector(&mask.apply(&v6)))
}

/// `E = e^T e / 2`.
pub fn cost_value(e: &[f64]) -> f64 {
    0.5 * e.iter().map(|v| v * v).sum::<f64>()
}

pub fn error_norm(e: &[f64]) -> f64 {
    e.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServoStatus {
    Converged,
    MaxIters,
    Diverged,
}

impl ServoStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ServoStatus::Converged => "converged",
            ServoStatus::MaxIters => "max_iters",
            ServoStatus::Diverged => "diverged",
        }
    }
}

impl std::fmt::Display for ServoStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub pose: CameraPose,
    /// Twist commanded at this iteration; zero on the terminal record.
    pub twist: Twist,
    pub err_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServoTrace {
    pub records: Vec<TraceRecord>,
    pub status: ServoStatus,
}

pub const TRACE_HEADER: &str = "iter,tx,ty,tz,alpha_deg,beta_deg,gamma_deg,vx,vy,vz,wx,wy,wz,err_norm";

impl ServoTrace {
    pub fn final_record(&self) -> &TraceRecord {
        self.records.last().expect("trace has at least one record")
    }

    pub fn final_pose(&self) -> CameraPose {
        self.final_record().pose
    }

    /// Iterations of control applied before termination.
    pub fn iterations(&self) -> usize {
        self.final_record().iter
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.err_norm).collect()
    }

    /// Fraction of steps after the first tenth of the run where `log ||e||`
    /// increases.
    pub fn decay_violation_fraction(&self) -> f64 {
        let norms = self.error_norms();
        let skip = norms.len() / 10;
        let tail = &norms[skip..];
        if tail.len() < 2 {
            return 0.0;
        }
        let steps = tail.len() - 1;
        let bad = tail.windows(2).filter(|w| w[1].ln() > w[0].ln()).count();
        bad as f64 / steps as f64
    }

    /// Mean absolute second difference of the commanded twist components,
    /// averaged over the six components.
    pub fn smoothness(&self) -> f64 {
        let twists: Vec<[f64; 6]> = self
            .records
            .iter()
            .filter(|r| !r.twist.is_zero() || r.iter == 0)
            .map(|r| r.twist.to_array())
            .collect();
        if twists.len() < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for w in twists.windows(3) {
            acc += (0..6).map(|j| (w[0][j] - 2.0 * w[1][j] + w[2][j]).abs()).sum::<f64>();
        }
        acc / (6 * (twists.len() - 2)) as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(TRACE_HEADER.split(','))?;
        for r in &self.records {
            let p = r.pose.to_euler_degrees();
            let t = r.twist.to_array();
            let mut row = vec![r.iter.to_string()];
            row.extend(p.iter().chain(t.iter()).map(|v| format!("{v:.9e}")));
            row.push(format!("{:.9e}", r.err_norm));
            w.write_record(&row)?;
        }
        let mut inner = w.into_inner().map_err(|e| Error::io("trace", e.into_error()))?;
        writeln!(inner, "# status={} iterations={}", self.status, self.iterations())
            .map_err(|e| Error::io("trace", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = std::io::BufWriter::new(f);
        self.write_csv(&mut buf)?;
        buf.flush().map_err(|e| Error::io(path, e))
    }
}

/// Everything derived once from the desired view.
#[derive(Debug, Clone)]
pub struct Servo {
    scene: PlanarScene,
    desired: CameraPose,
    encoder: SmmEncoder,
    ctrl: ControllerConfig,
    depth: f64,
    scale: f64,
    desired_image: Image,
    desired_smm: SmmImage,
    interaction: InteractionMatrix,
    pinv: DMatrix<f64>,
}

impl Servo {
    pub fn new(
        scene: &PlanarScene,
        desired: &CameraPose,
        k: &Intrinsics,
        smm_cfg: &SmmConfig,
        ctrl: &ControllerConfig,
    ) -> Result<Self> {
        ctrl.validate()?;
        let encoder = SmmEncoder::new(*k, *smm_cfg)?;
        let depth = match ctrl.depth {
            Some(z) => z,
            None => scene
                .depth_along_axis(desired)
                .ok_or_else(|| Error::invalid("desired", "desired camera does not face the scene plane"))?,
        };
        let rendered = render_view(scene, desired, encoder.render_intrinsics())?;
        if rendered.is_constant() {
            return Err(Error::Degenerate("desired view has uniform intensity".into()));
        }
        let (smm, grad) = encoder.encode_with_gradient(&rendered)?;
        let scale = if smm_cfg.normalize { 1.0 / smm.max_value() } else { 1.0 };
        let desired_smm = SmmImage {
            values: smm.values.iter().map(|v| v * scale).collect(),
            ..smm
        };
        let interaction = build_interaction_matrix(&grad.scaled(scale), k, depth, ctrl.dof_mask)?;
        if interaction.is_zero() {
            return Err(Error::Degenerate("interaction matrix is identically zero".into()));
        }
        let pinv = pseudo_inverse(&interaction.matrix)?;
        let desired_image = encoder.view_window(&rendered)?;
        Ok(Self {
            scene: scene.clone(),
            desired: *desired,
            encoder,
            ctrl: *ctrl,
            depth,
            scale,
            desired_image,
            desired_smm,
            interaction,
            pinv,
        })
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn desired_pose(&self) -> &CameraPose {
        &self.desired
    }

    pub fn desired_image(&self) -> &Image {
        &self.desired_image
    }

    pub fn desired_smm(&self) -> &SmmImage {
        &self.desired_smm
    }

    pub fn interaction_matrix(&self) -> &InteractionMatrix {
        &self.interaction
    }

    pub fn encoder(&self) -> &SmmEncoder {
        &self.encoder
    }

    /// Render at `pose`, returning the guard-band render.
    pub fn render(&self, pose: &CameraPose, occlusion: Option<&OcclusionPatch>) -> Result<Image> {
        let img = render_view(&self.scene, pose, self.encoder.render_intrinsics())?;
        match occlusion {
            Some(p) => apply_occlusion_offset(&img, p, self.encoder.config().guard_band),
            None => Ok(img),
        }
    }

    /// Visible window of the view at `pose`.
    pub fn view(&self, pose: &CameraPose, occlusion: Option<&OcclusionPatch>) -> Result<Image> {
        self.encoder.view_window(&self.render(pose, occlusion)?)
    }

    /// Scaled SMM feature at `pose`.
    pub fn feature(&self, pose: &CameraPose, occlusion: Option<&OcclusionPatch>) -> Result<Vec<f64>> {
        let smm = self.encoder.encode(&self.render(pose, occlusion)?)?;
        Ok(smm.values.iter().map(|v| v * self.scale).collect())
    }

    /// `S(current) - S(desired)`.
    pub fn error(&self, pose: &CameraPose, occlusion: Option<&OcclusionPatch>) -> Result<Vec<f64>> {
        let s = self.feature(pose, occlusion)?;
        Ok(s.iter().zip(&self.desired_smm.values).map(|(a, b)| a - b).collect())
    }

    fn current_pinv(&self, rendered: &Image) -> Result<DMatrix<f64>> {
        let (_, grad) = self.encoder.encode_with_gradient(rendered)?;
        let l = build_interaction_matrix(&grad.scaled(self.scale), self.encoder.view(), self.depth, self.ctrl.dof_mask)?;
        pseudo_inverse(&l.matrix)
    }

    pub fn run(&self, initial: &CameraPose, occlusion: Option<&OcclusionPatch>) -> Result<ServoTrace> {
        let ctrl = &self.ctrl;
        let mut pose = *initial;
        let mut records = Vec::new();
        let mut e0 = None;
        for iter in 0..=ctrl.max_iters {
            let rendered = match self.render(&pose, occlusion) {
                Ok(img) => img,
                Err(Error::EmptyRender) if iter > 0 => {
                    log::warn!("scene left the view at iteration {iter}");
                    return Ok(ServoTrace {
                        records,
                        status: ServoStatus::Diverged,
                    });
                }
                Err(e) => return Err(e),
            };
            let s = self.encoder.encode(&rendered)?;
            let e: Vec<f64> = s
                .values
                .iter()
                .zip(&self.desired_smm.values)
                .map(|(a, b)| a * self.scale - b)
                .collect();
            let norm = error_norm(&e);
            let e0v = *e0.get_or_insert(norm);
            let terminal = |status| {
                let mut records = records.clone();
                records.push(TraceRecord {
                    iter,
                    pose,
                    twist: Twist::zero(),
                    err_norm: norm,
                });
                ServoTrace { records, status }
            };
            if norm <= ctrl.convergence_ratio * e0v {
                return Ok(terminal(ServoStatus::Converged));
            }
            if norm > 10.0 * e0v || !norm.is_finite() {
                return Ok(terminal(ServoStatus::Diverged));
            }
            if iter == ctrl.max_iters {
                return Ok(terminal(ServoStatus::MaxIters));
            }
            let twist = if ctrl.current_jacobian {
                control_step(&self.current_pinv(&rendered)?, &e, ctrl.lambda, ctrl.dof_mask)?
            } else {
                control_step(&self.pinv, &e, ctrl.lambda, ctrl.dof_mask)?
            };
            if ctrl.log_every > 0 && iter % ctrl.log_every == 0 {
                let p = pose.to_euler_degrees();
                log::info!(
                    "iter {iter:4} |e|/|e0| {:.3e} t=({:+.4},{:+.4},{:+.4}) r=({:+.3},{:+.3},{:+.3})",
                    norm / e0v,
                    p[0],
                    p[1],
                    p[2],
                    p[3],
                    p[4],
                    p[5]
                );
            }
            records.push(TraceRecord {
                iter,
                pose,
                twist,
                err_norm: norm,
            });
            pose = integrate_twist(&pose, &twist, ctrl.dt)?;
        }
        unreachable!("loop returns at max_iters")
    }
}

/// Drive the camera from `initial` toward `desired`.
pub fn run_servo(
    scene: &PlanarScene,
    initial: &CameraPose,
    desired: &CameraPose,
    k: &Intrinsics,
    smm_cfg: &SmmConfig,
    ctrl: &ControllerConfig,
) -> Result<ServoTrace> {
    Servo::new(scene, desired, k, smm_cfg, ctrl)?.run(initial, None)
}
