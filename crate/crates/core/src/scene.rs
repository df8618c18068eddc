//! Textured planar scene seen through a pinhole camera, plus image-space
//! occlusion.
//!
//! The texture lies in the `z = 0` plane of the plane frame, centered on its
//! origin, with texture columns along `+x` and rows along `+y`.

use rayon::prelude::*;

use crate::geometry::{CameraPose, Intrinsics};
use crate::image::Image;
use crate::{Error, Result};

/// 32x32 "cameraman" photograph, downsampled, lightly blurred and faded to
/// black over its outer quarter so the rendered view varies smoothly as the
/// texture edge enters or leaves the frame.
pub const DEFAULT_TEXTURE_PGM: &[u8] = include_bytes!("../assets/cameraman_32.pgm");

/// Physical width of the default texture.
pub const DEFAULT_TEXTURE_WIDTH_M: f64 = 2.4;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarScene {
    texture: Image,
    plane_pose: CameraPose,
    plane_scale: f64,
    background: f64,
}

impl PlanarScene {
    pub fn new(texture: Image, plane_pose: CameraPose, plane_scale: f64, background: f64) -> Result<Self> {
        if !(plane_scale > 0.0) || !plane_scale.is_finite() {
            return Err(Error::invalid("plane_scale", "must be positive"));
        }
        if !(0.0..=255.0).contains(&background) {
            return Err(Error::invalid("background", "must lie in [0, 255]"));
        }
        if texture.is_empty() {
            return Err(Error::EmptyImage);
        }
        Ok(Self {
            texture,
            plane_pose,
            plane_scale,
            background,
        })
    }

    /// World-aligned plane at the origin with the texture spanning `width_m`.
    pub fn centered(texture: Image, width_m: f64) -> Result<Self> {
        let scale = width_m / texture.width() as f64;
        Self::new(texture, CameraPose::identity(), scale, 0.0)
    }

    /// The shipped texture at its default physical size.
    pub fn default_scene() -> Self {
        Self::centered(default_texture(), DEFAULT_TEXTURE_WIDTH_M).expect("bundled texture is valid")
    }

    pub fn texture(&self) -> &Image {
        &self.texture
    }

    pub fn plane_pose(&self) -> &CameraPose {
        &self.plane_pose
    }

    pub fn plane_scale(&self) -> f64 {
        self.plane_scale
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    pub fn with_texture(&self, texture: Image) -> Result<Self> {
        Self::new(texture, self.plane_pose, self.plane_scale, self.background)
    }

    /// Distance from the camera center to the plane along the optical axis,
    /// or `None` when the camera does not face the plane.
    pub fn depth_along_axis(&self, camera: &CameraPose) -> Option<f64> {
        let o = self.plane_pose.inverse_transform_point(camera.translation());
        let d = self.plane_pose.rotation().transpose() * camera.optical_axis();
        let lambda = -o.z / d.z;
        (d.z != 0.0 && lambda > 0.0 && lambda.is_finite()).then_some(lambda)
    }

    fn texel(&self, u: i64, v: i64) -> f64 {
        let (w, h) = (self.texture.width() as i64, self.texture.height() as i64);
        if u < 0 || v < 0 || u >= w || v >= h {
            self.background
        } else {
            self.texture.get(u as usize, v as usize)
        }
    }

    /// Bilinear lookup in texel coordinates; returns `None` when none of the
    /// four neighbouring texels exist.
    fn sample(&self, tu: f64, tv: f64) -> Option<f64> {
        let (w, h) = (self.texture.width() as f64, self.texture.height() as f64);
        if !(tu > -1.0 && tv > -1.0 && tu < w && tv < h) {
            return None;
        }
        let (u0, v0) = (tu.floor(), tv.floor());
        let (a, b) = (tu - u0, tv - v0);
        let (u0, v0) = (u0 as i64, v0 as i64);
        let top = self.texel(u0, v0) * (1.0 - a) + self.texel(u0 + 1, v0) * a;
        let bottom = self.texel(u0, v0 + 1) * (1.0 - a) + self.texel(u0 + 1, v0 + 1) * a;
        Some(top * (1.0 - b) + bottom * b)
    }
}

/// Render and report the fraction of pixels whose ray lands on the texture.
pub fn render_view_with_coverage(scene: &PlanarScene, camera: &CameraPose, k: &Intrinsics) -> Result<(Image, f64)> {
    let plane = &scene.plane_pose;
    let origin = plane.inverse_transform_point(camera.translation());
    if origin.z == 0.0 {
        return Err(Error::invalid("camera", "camera center lies on the scene plane"));
    }
    let rot = plane.rotation().transpose() * camera.rotation();
    let (cx, cy) = (
        (scene.texture.width() as f64 - 1.0) / 2.0,
        (scene.texture.height() as f64 - 1.0) / 2.0,
    );
    let samples: Vec<Option<f64>> = k
        .normalized_grid()
        .par_iter()
        .map(|&(x, y)| {
            let d = rot * nalgebra::Vector3::new(x, y, 1.0);
            let lambda = -origin.z / d.z;
            if !(lambda > 0.0) || !lambda.is_finite() {
                return None;
            }
            let p = origin + d * lambda;
            scene.sample(p.x / scene.plane_scale + cx, p.y / scene.plane_scale + cy)
        })
        .collect();
    let hits = samples.iter().filter(|s| s.is_some()).count();
    let data = samples.into_iter().map(|s| s.unwrap_or(scene.background)).collect();
    Ok((Image::new(k.width, k.height, data)?, hits as f64 / k.pixel_count() as f64))
}

/// Image of the scene from `camera`. Fails with [`Error::EmptyRender`] when no
/// ray reaches the texture.
pub fn render_view(scene: &PlanarScene, camera: &CameraPose, k: &Intrinsics) -> Result<Image> {
    let (img, coverage) = render_view_with_coverage(scene, camera, k)?;
    if coverage == 0.0 {
        return Err(Error::EmptyRender);
    }
    Ok(img)
}

pub fn default_texture() -> Image {
    Image::decode(DEFAULT_TEXTURE_PGM).expect("bundled texture decodes")
}

fn raised_cosine(t: f64, fade: f64) -> f64 {
    let d = (t.min(1.0 - t) / fade).clamp(0.0, 1.0);
    0.5 - 0.5 * (std::f64::consts::PI * d).cos()
}

/// Multiply by a separable raised-cosine window that reaches zero at the
/// edges and one at `fade` (fraction of the size) inwards.
pub fn faded(img: &Image, fade: f64) -> Result<Image> {
    if !(fade > 0.0 && fade <= 0.5) {
        return Err(Error::invalid("fade", "must lie in (0, 0.5]"));
    }
    let (w, h) = (img.width(), img.height());
    let pos = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    Image::from_fn(w, h, |u, v| {
        img.get(u, v) * raised_cosine(pos(u, w), fade) * raised_cosine(pos(v, h), fade)
    })
}

/// A few broad, faint blobs: a deliberately low-texture scene.
pub fn low_texture(n: usize) -> Result<Image> {
    let blobs = [(0.35, 0.40, 0.16, 1.0), (0.68, 0.62, 0.20, 0.8), (0.55, 0.25, 0.10, 0.6)];
    let img = Image::from_fn(n, n, |u, v| {
        let (x, y) = (u as f64 / (n - 1).max(1) as f64, v as f64 / (n - 1).max(1) as f64);
        let s: f64 = blobs
            .iter()
            .map(|&(bx, by, r, a)| a * (-((x - bx).powi(2) + (y - by).powi(2)) / (2.0 * r * r)).exp())
            .sum();
        60.0 + 120.0 * s.min(1.0)
    })?;
    faded(&img, 0.25)
}

#[derive(Debug, Clone, PartialEq)]
pub enum OcclusionFill {
    Constant(f64),
    /// Tiled from the rectangle's top-left corner.
    Patch(Image),
}

/// Pixel-space rectangle replaced in rendered views.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionPatch {
    pub u0: i64,
    pub v0: i64,
    pub width: usize,
    pub height: usize,
    pub fill: OcclusionFill,
}

impl OcclusionPatch {
    /// Rectangle of exactly `round(fraction * w * h)` pixels when that count
    /// factors to fit, otherwise the closest fitting count. The shape is the
    /// most square one available; `(cu, cv)` is its center as a fraction of
    /// the image size.
    pub fn covering_fraction(
        w: usize,
        h: usize,
        fraction: f64,
        center: (f64, f64),
        fill: OcclusionFill,
    ) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::invalid("occlusion_fraction", "must lie in (0, 1]"));
        }
        let target = (fraction * (w * h) as f64).round().max(1.0) as usize;
        let mut best: Option<(usize, usize, usize, usize)> = None;
        for a in 1..=w {
            for b in [target / a, target / a + 1] {
                if b == 0 || b > h {
                    continue;
                }
                let miss = (a * b).abs_diff(target);
                let skew = a.abs_diff(b);
                if best.is_none_or(|(m, s, _, _)| (miss, skew) < (m, s)) {
                    best = Some((miss, skew, a, b));
                }
            }
        }
        let (_, _, pw, ph) = best.ok_or_else(|| Error::invalid("occlusion_fraction", "no rectangle fits"))?;
        let place = |c: f64, n: usize, p: usize| {
            let start = (c * n as f64 - p as f64 / 2.0).round() as i64;
            start.clamp(0, (n - p) as i64)
        };
        Ok(Self {
            u0: place(center.0, w, pw),
            v0: place(center.1, h, ph),
            width: pw,
            height: ph,
            fill,
        })
    }

    fn fill_at(&self, du: usize, dv: usize) -> f64 {
        match &self.fill {
            OcclusionFill::Constant(c) => *c,
            OcclusionFill::Patch(p) => p.get(du % p.width(), dv % p.height()),
        }
    }

    /// Intersection with a `w x h` image as `(u_start, u_end, v_start, v_end)`.
    fn clip(&self, w: usize, h: usize) -> Option<(usize, usize, usize, usize)> {
        let u1 = (self.u0 + self.width as i64).min(w as i64);
        let v1 = (self.v0 + self.height as i64).min(h as i64);
        let (u0, v0) = (self.u0.max(0), self.v0.max(0));
        (u1 > u0 && v1 > v0).then_some((u0 as usize, u1 as usize, v0 as usize, v1 as usize))
    }
}

/// Overwrite the pixels under `patch`; every other pixel is left untouched.
pub fn apply_occlusion(img: &Image, patch: &OcclusionPatch) -> Result<Image> {
    apply_occlusion_offset(img, patch, 0)
}

/// As [`apply_occlusion`] with the patch given in the coordinates of a view
/// window inset by `margin` pixels into `img`.
pub fn apply_occlusion_offset(img: &Image, patch: &OcclusionPatch, margin: usize) -> Result<Image> {
    if let OcclusionFill::Constant(c) = patch.fill {
        if !(0.0..=255.0).contains(&c) {
            return Err(Error::invalid("occlusion_fill", "must lie in [0, 255]"));
        }
    }
    if 2 * margin >= img.width() || 2 * margin >= img.height() {
        return Err(Error::EmptyIntersection);
    }
    let (u0, u1, v0, v1) = patch
        .clip(img.width() - 2 * margin, img.height() - 2 * margin)
        .ok_or(Error::EmptyIntersection)?;
    let mut out = img.clone();
    for v in v0..v1 {
        for u in u0..u1 {
            let du = (u as i64 - patch.u0) as usize;
            let dv = (v as i64 - patch.v0) as usize;
            out.set(u + margin, v + margin, patch.fill_at(du, dv));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose_from_euler;

    fn psnr(a: &Image, b: &Image) -> f64 {
        let mse: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
        10.0 * (255.0f64.powi(2) / mse).log10()
    }

    /// Camera whose pixel grid lands exactly on texel centers.
    fn identity_framing(tex: &Image, scale: f64) -> (CameraPose, Intrinsics) {
        let z = 0.5;
        let f = z / scale;
        let k = Intrinsics::centered(tex.width(), tex.height(), f).unwrap();
        (pose_from_euler(0.0, 0.0, -z, 0.0, 0.0, 0.0), k)
    }

    #[test]
    fn identity_framing_recovers_texture() {
        let tex = default_texture();
        let scene = PlanarScene::centered(tex.clone(), 1.0).unwrap();
        let (cam, k) = identity_framing(&tex, scene.plane_scale());
        let img = render_view(&scene, &cam, &k).unwrap();
        let p = psnr(&img, &tex);
        assert!(p > 40.0, "psnr {p}");
    }

    #[test]
    fn lateral_translation_shifts_image() {
        let tex = low_texture(64).unwrap();
        let scene = PlanarScene::centered(tex, 1.0).unwrap();
        let k = Intrinsics::centered(40, 40, 30.0).unwrap();
        let z = 0.6;
        let base = render_view(&scene, &pose_from_euler(0.0, 0.0, -z, 0.0, 0.0, 0.0), &k).unwrap();
        let dx = scene.plane_scale() * 10.0;
        let moved = render_view(&scene, &pose_from_euler(dx, 0.0, -z, 0.0, 0.0, 0.0), &k).unwrap();
        let expected = 10.0 * k.focal_u * scene.plane_scale() / z;
        // cross-correlation over integer shifts, content moves toward -u
        let score = |s: i64| {
            let mut acc = 0.0;
            for v in 5..35 {
                for u in 12..28 {
                    acc += base.get(u, v) * moved.get((u as i64 - s) as usize, v);
                }
            }
            acc
        };
        let best = (0..=12).max_by(|&a, &b| score(a).total_cmp(&score(b))).unwrap();
        assert_eq!(best, expected.round() as i64, "expected {expected}");
    }

    #[test]
    fn looking_away_is_empty() {
        let scene = PlanarScene::default_scene();
        let k = Intrinsics::centered(20, 20, 20.0).unwrap();
        let away = pose_from_euler(0.0, 0.0, -0.5, std::f64::consts::PI, 0.0, 0.0);
        let (img, cov) = render_view_with_coverage(&scene, &away, &k).unwrap();
        assert_eq!(cov, 0.0);
        assert!(img.data().iter().all(|&v| v == scene.background()));
        assert!(matches!(render_view(&scene, &away, &k), Err(Error::EmptyRender)));
    }

    #[test]
    fn rendering_is_deterministic_and_continuous() {
        let scene = PlanarScene::default_scene();
        let k = Intrinsics::centered(30, 30, 12.0).unwrap();
        let p = pose_from_euler(0.1, -0.05, -0.5, 0.02, -0.01, 0.1);
        let a = render_view(&scene, &p, &k).unwrap();
        assert_eq!(a, render_view(&scene, &p, &k).unwrap());
        let q = pose_from_euler(0.1 + 1e-7, -0.05, -0.5, 0.02, -0.01, 0.1);
        let b = render_view(&scene, &q, &k).unwrap();
        let jump = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(jump < 1e-3, "{jump}");
    }

    #[test]
    fn coverage_shrinks_with_lateral_offset() {
        let scene = PlanarScene::default_scene();
        let k = Intrinsics::centered(30, 30, 12.0).unwrap();
        let covs: Vec<f64> = (0..8)
            .map(|i| {
                let p = pose_from_euler(0.6 + 0.3 * i as f64, 0.0, -0.5, 0.0, 0.0, 0.0);
                render_view_with_coverage(&scene, &p, &k).unwrap().1
            })
            .collect();
        assert!(covs.windows(2).all(|w| w[1] <= w[0]), "{covs:?}");
        assert!(covs[0] > covs[7]);
    }

    #[test]
    fn occlusion_full_and_empty() {
        let img = Image::constant(6, 4, 90.0).unwrap();
        let full = OcclusionPatch {
            u0: 0,
            v0: 0,
            width: 6,
            height: 4,
            fill: OcclusionFill::Constant(0.0),
        };
        assert!(apply_occlusion(&img, &full).unwrap().data().iter().all(|&v| v == 0.0));
        let outside = OcclusionPatch { u0: 6, ..full.clone() };
        assert!(matches!(apply_occlusion(&img, &outside), Err(Error::EmptyIntersection)));
        let zero = OcclusionPatch { width: 0, ..full };
        assert!(matches!(apply_occlusion(&img, &zero), Err(Error::EmptyIntersection)));
    }

    #[test]
    fn occlusion_changes_exact_fraction() {
        let img = default_texture();
        let patch =
            OcclusionPatch::covering_fraction(50, 50, 0.15, (0.5, 0.5), OcclusionFill::Constant(255.0)).unwrap();
        assert_eq!(patch.width * patch.height, 375);
        let view = Image::from_fn(50, 50, |u, v| img.get(u % 32, v % 32).min(200.0)).unwrap();
        let out = apply_occlusion(&view, &patch).unwrap();
        let changed = view.data().iter().zip(out.data()).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 375);
    }

    #[test]
    fn occlusion_with_margin_and_patch_fill() {
        let img = Image::constant(10, 10, 5.0).unwrap();
        let tile = Image::new(2, 1, vec![1.0, 2.0]).unwrap();
        let p = OcclusionPatch {
            u0: -1,
            v0: 0,
            width: 3,
            height: 1,
            fill: OcclusionFill::Patch(tile),
        };
        let out = apply_occlusion_offset(&img, &p, 2).unwrap();
        assert_eq!(out.get(1, 2), 5.0);
        assert_eq!(out.get(2, 2), 2.0);
        assert_eq!(out.get(3, 2), 1.0);
        assert_eq!(out.get(4, 2), 5.0);
    }

    #[test]
    fn fade_zeroes_edges() {
        let img = Image::constant(9, 9, 200.0).unwrap();
        let f = faded(&img, 0.25).unwrap();
        assert_eq!(f.get(0, 4), 0.0);
        assert_eq!(f.get(4, 4), 200.0);
        assert!(faded(&img, 0.0).is_err());
    }
}
