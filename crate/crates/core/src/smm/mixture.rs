use nalgebra::Vector2;
use rayon::prelude::*;

use super::density::{nu_from_sigma, t_log_normalizer};
use super::{GradientMode, SmmConfig, SmmGradient, SmmImage, TComponent, Truncation};
use crate::geometry::Intrinsics;
use crate::image::Image;
use crate::{Error, Result};

/// One mixture component per pixel of `img`, placed at pixel centers of `k`.
pub fn components_from_image(img: &Image, k: &Intrinsics, cfg: &SmmConfig) -> Result<Vec<TComponent>> {
    cfg.validate()?;
    if img.is_empty() {
        return Err(Error::EmptyImage);
    }
    if (img.width(), img.height()) != (k.width, k.height) {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{} but intrinsics describe {}x{}",
            img.width(),
            img.height(),
            k.width,
            k.height
        )));
    }
    let weight = 1.0 / img.len() as f64;
    let scale = cfg.variance_scale(k);
    let mut out = Vec::with_capacity(img.len());
    for v in 0..img.height() {
        for u in 0..img.width() {
            let sigma = cfg.sigma_for_intensity(img.get(u, v));
            let (x, y) = k.pixel_to_normalized(u as f64, v as f64);
            out.push(TComponent {
                mean: Vector2::new(x, y),
                sigma,
                nu: nu_from_sigma(sigma)?,
                weight,
                variance: sigma * scale,
            });
        }
    }
    Ok(out)
}

/// Per-component constants of `w c (1 + d^2 a)^-e`, with `a = 1/(variance nu)`.
#[derive(Clone, Copy)]
struct Kernel {
    mx: f64,
    my: f64,
    a: f64,
    half_exp: f64,
    coef: f64,
    grad_coef: f64,
}

fn kernels(components: &[TComponent]) -> Result<Vec<Kernel>> {
    if components.is_empty() {
        return Err(Error::invalid("components", "mixture has no components"));
    }
    components
        .iter()
        .map(|c| {
            if !(c.variance > 0.0 && c.nu > 0.0 && c.weight > 0.0) {
                return Err(Error::invalid("components", "variance, nu and weight must be positive"));
            }
            let a = 1.0 / (c.variance * c.nu);
            Ok(Kernel {
                mx: c.mean.x,
                my: c.mean.y,
                a,
                half_exp: 0.5 * (c.nu + 2.0),
                coef: c.weight * t_log_normalizer(c.variance, c.nu).exp(),
                grad_coef: (c.nu + 2.0) * a,
            })
        })
        .collect()
}

fn cutoff(truncation: Truncation) -> f64 {
    match truncation {
        Truncation::Full => f64::INFINITY,
        Truncation::Radius(r) => r * r,
    }
}

#[inline]
fn density(ks: &[Kernel], x: f64, y: f64, cut: f64) -> f64 {
    let mut s = 0.0;
    for k in ks {
        let (dx, dy) = (x - k.mx, y - k.my);
        let q = (dx * dx + dy * dy) * k.a;
        if q > cut {
            continue;
        }
        s += k.coef * (-k.half_exp * q.ln_1p()).exp();
    }
    s
}

#[inline]
fn density_and_gradient(ks: &[Kernel], x: f64, y: f64, cut: f64) -> (f64, f64, f64) {
    let (mut s, mut gx, mut gy) = (0.0, 0.0, 0.0);
    for k in ks {
        let (dx, dy) = (x - k.mx, y - k.my);
        let q = (dx * dx + dy * dy) * k.a;
        if q > cut {
            continue;
        }
        let lq = q.ln_1p();
        let phi = k.coef * (-k.half_exp * lq).exp();
        let g = phi * k.grad_coef / (1.0 + q);
        s += phi;
        gx -= g * dx;
        gy -= g * dy;
    }
    (s, gx, gy)
}

/// Mixture density at arbitrary normalized points.
pub fn mixture_density_at(components: &[TComponent], points: &[Vector2<f64>], truncation: Truncation) -> Result<Vec<f64>> {
    let ks = kernels(components)?;
    let cut = cutoff(truncation);
    Ok(points.par_iter().map(|p| density(&ks, p.x, p.y, cut)).collect())
}

/// Evaluate the mixture at every pixel center of `k`.
pub fn smm_transform(components: &[TComponent], k: &Intrinsics, cfg: &SmmConfig) -> Result<SmmImage> {
    let ks = kernels(components)?;
    let cut = cutoff(cfg.truncation);
    let grid = k.normalized_grid();
    let values: Vec<f64> = grid.par_iter().map(|&(x, y)| density(&ks, x, y, cut)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("smm values"));
    }
    Ok(SmmImage {
        intrinsics: *k,
        values,
        components: components.to_vec(),
    })
}

/// Mixture values and their analytic gradient in a single pass.
pub fn smm_transform_with_gradient(
    components: &[TComponent],
    k: &Intrinsics,
    cfg: &SmmConfig,
) -> Result<(SmmImage, SmmGradient)> {
    let ks = kernels(components)?;
    let cut = cutoff(cfg.truncation);
    let grid = k.normalized_grid();
    let triples: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|&(x, y)| density_and_gradient(&ks, x, y, cut))
        .collect();
    let mut values = Vec::with_capacity(triples.len());
    let mut du = Vec::with_capacity(triples.len());
    let mut dv = Vec::with_capacity(triples.len());
    for (s, gx, gy) in triples {
        if !(s.is_finite() && gx.is_finite() && gy.is_finite()) {
            return Err(Error::NonFinite("smm gradient"));
        }
        values.push(s);
        du.push(gx);
        dv.push(gy);
    }
    let smm = SmmImage {
        intrinsics: *k,
        values,
        components: components.to_vec(),
    };
    let grad = SmmGradient {
        width: k.width,
        height: k.height,
        du,
        dv,
    };
    Ok((smm, grad))
}

/// Exact derivative of the mixture at every pixel center of `k`.
pub fn smm_gradient_analytic(components: &[TComponent], k: &Intrinsics, cfg: &SmmConfig) -> Result<SmmGradient> {
    smm_transform_with_gradient(components, k, cfg).map(|(_, g)| g)
}

/// Finite-difference gradient of a sampled SMM: central in the interior,
/// one-sided at the borders.
pub fn smm_gradient_filter(smm: &SmmImage) -> Result<SmmGradient> {
    let (w, h) = (smm.width(), smm.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid("smm", "gradient filter needs at least 3x3 pixels"));
    }
    let (fu, fv) = (smm.intrinsics.focal_u, smm.intrinsics.focal_v);
    let s = |u: usize, v: usize| smm.get(u, v);
    let mut du = Vec::with_capacity(w * h);
    let mut dv = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let gx = match u {
                0 => s(1, v) - s(0, v),
                _ if u == w - 1 => s(u, v) - s(u - 1, v),
                _ => 0.5 * (s(u + 1, v) - s(u - 1, v)),
            };
            let gy = match v {
                0 => s(u, 1) - s(u, 0),
                _ if v == h - 1 => s(u, v) - s(u, v - 1),
                _ => 0.5 * (s(u, v + 1) - s(u, v - 1)),
            };
            du.push(gx * fu);
            dv.push(gy * fv);
        }
    }
    Ok(SmmGradient {
        width: w,
        height: h,
        du,
        dv,
    })
}

/// Largest relative deviation of the truncated sum from the full sum over the
/// pixels of `k`.
pub fn truncation_error(components: &[TComponent], k: &Intrinsics, radius: f64) -> Result<f64> {
    let ks = kernels(components)?;
    let cut = radius * radius;
    let grid = k.normalized_grid();
    let worst = grid
        .par_iter()
        .map(|&(x, y)| {
            let full = density(&ks, x, y, f64::INFINITY);
            let trunc = density(&ks, x, y, cut);
            (full - trunc).abs() / full
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Turns renders into SMM features for a fixed view, including the guard band.
#[derive(Debug, Clone)]
pub struct SmmEncoder {
    cfg: SmmConfig,
    view: Intrinsics,
    render: Intrinsics,
}

impl SmmEncoder {
    pub fn new(view: Intrinsics, cfg: SmmConfig) -> Result<Self> {
        cfg.validate()?;
        view.validate()?;
        Ok(Self {
            cfg,
            view,
            render: view.expanded(cfg.guard_band),
        })
    }

    pub fn config(&self) -> &SmmConfig {
        &self.cfg
    }

    /// Intrinsics of the feature grid.
    pub fn view(&self) -> &Intrinsics {
        &self.view
    }

    /// Intrinsics the scene must be rendered with.
    pub fn render_intrinsics(&self) -> &Intrinsics {
        &self.render
    }

    /// Visible part of a render, without the guard band.
    pub fn view_window(&self, rendered: &Image) -> Result<Image> {
        let g = self.cfg.guard_band;
        rendered.crop(g, g, self.view.width, self.view.height)
    }

    pub fn components(&self, rendered: &Image) -> Result<Vec<TComponent>> {
        components_from_image(rendered, &self.render, &self.cfg)
    }

    pub fn encode(&self, rendered: &Image) -> Result<SmmImage> {
        smm_transform(&self.components(rendered)?, &self.view, &self.cfg)
    }

    /// Feature and gradient, the gradient taken per the configured mode.
    pub fn encode_with_gradient(&self, rendered: &Image) -> Result<(SmmImage, SmmGradient)> {
        let comps = self.components(rendered)?;
        match self.cfg.gradient {
            GradientMode::Analytic => smm_transform_with_gradient(&comps, &self.view, &self.cfg),
            GradientMode::Filter => {
                let smm = smm_transform(&comps, &self.view, &self.cfg)?;
                let g = smm_gradient_filter(&smm)?;
                Ok((smm, g))
            }
        }
    }
}
