//! Three-channel geometry images: depth, normal azimuth and normal elevation
//! fitted on a nosetip-centered grid, normalized to 8 bits and resized.

use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::cloud::{to_spherical, PointCloud};
use crate::error::RenderError;
use crate::gridfit::{fit_grid_surfaces, GridSpec, DEFAULT_SMOOTHNESS};
use crate::views::{CameraPose, ViewCloud};

pub const DEFAULT_CROP: usize = 224;
pub const DEFAULT_OUT_SIZE: usize = 160;
pub const DEFAULT_SPACING: f64 = 0.75;
pub const DEFAULT_CENTRAL_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Min-max over the supported pixels of each channel of each image.
    PerImage,
    /// Fixed `(min, max)` per channel shared by a whole corpus; values clamp.
    Global([(f64, f64); 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSpec {
    /// Millimeters per pixel of the fitting grid.
    pub spacing: f64,
    pub smoothness: f64,
    /// Side of the square fitting window around the nosetip, in pixels.
    pub crop: usize,
    pub out_size: usize,
    /// Side of the nosetip search window as a fraction of the cloud's extent.
    pub central_fraction: f64,
    pub normalization: Normalization,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self {
            spacing: DEFAULT_SPACING,
            smoothness: DEFAULT_SMOOTHNESS,
            crop: DEFAULT_CROP,
            out_size: DEFAULT_OUT_SIZE,
            central_fraction: DEFAULT_CENTRAL_FRACTION,
            normalization: Normalization::PerImage,
        }
    }
}

impl ImageSpec {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.crop < 8 || self.out_size < 2 {
            return Err(RenderError::InvalidSpec(format!(
                "crop {} / out_size {} too small",
                self.crop, self.out_size
            )));
        }
        if !(self.central_fraction > 0.0 && self.central_fraction <= 1.0) {
            return Err(RenderError::InvalidSpec(format!(
                "central fraction {}",
                self.central_fraction
            )));
        }
        self.grid_at(0.0, 0.0).validate()
    }

    /// Fitting grid whose center node `(crop/2, crop/2)` sits on `(x, y)`.
    /// Rows run top to bottom, so the grid works in `(x, -y)`.
    fn grid_at(&self, x: f64, y: f64) -> GridSpec {
        let half = (self.crop / 2) as f64 * self.spacing;
        GridSpec {
            width: self.crop,
            height: self.crop,
            spacing: self.spacing,
            origin: (x - half, -y - half),
            smoothness: self.smoothness,
        }
    }

    /// Millimeters per output pixel.
    pub fn pixel_pitch(&self) -> f64 {
        self.spacing * self.crop as f64 / self.out_size as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NosetipSource {
    Detected,
    Override,
    /// Central window was empty; global z maximum used.
    Fallback,
}

/// Highest point (largest z) inside a central x-y window of the cloud.
pub fn detect_nosetip(
    cloud: &PointCloud,
    central_fraction: f64,
    override_point: Option<Point3<f64>>,
) -> Result<(Point3<f64>, NosetipSource), RenderError> {
    if let Some(p) = override_point {
        return Ok((p, NosetipSource::Override));
    }
    let (lo, hi) = cloud
        .bounds()
        .ok_or(RenderError::NoSamples)?;
    let c = cloud.centroid();
    let (hx, hy) = (
        0.5 * central_fraction * (hi.x - lo.x),
        0.5 * central_fraction * (hi.y - lo.y),
    );
    let highest = |filter: &dyn Fn(&Point3<f64>) -> bool| {
        cloud
            .points()
            .iter()
            .filter(|p| filter(p))
            .copied()
            .reduce(|a, b| if b.z > a.z { b } else { a })
    };
    if let Some(p) = highest(&|p| (p.x - c.x).abs() <= hx && (p.y - c.y).abs() <= hy) {
        return Ok((p, NosetipSource::Detected));
    }
    log::warn!("empty central region; nosetip falls back to the global z maximum");
    Ok((highest(&|_| true).expect("nonempty"), NosetipSource::Fallback))
}

/// Round half away from zero.
fn round_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Channels whose masked range is below this fraction of their magnitude are
/// treated as constant.
pub const CONSTANT_TOL: f64 = 1e-9;

/// Min-max maps masked values to 0..=255; unmasked and constant channels map
/// to 0. Returns the range used.
pub fn normalize_u8(channel: &[f64], mask: &[bool]) -> (Vec<u8>, (f64, f64)) {
    let (lo, hi) = channel
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
            (lo.min(*v), hi.max(*v))
        });
    if lo > hi {
        return (vec![0; channel.len()], (0.0, 0.0));
    }
    (normalize_with(channel, mask, (lo, hi)), (lo, hi))
}

fn normalize_with(channel: &[f64], mask: &[bool], (lo, hi): (f64, f64)) -> Vec<u8> {
    channel
        .iter()
        .zip(mask)
        .map(|(v, m)| {
            if !*m || hi - lo <= CONSTANT_TOL * lo.abs().max(hi.abs()).max(1.0) {
                0
            } else {
                round_u8(255.0 * ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            }
        })
        .collect()
}

/// Nested lerp; exact on constant input.
fn lerp2(a: f64, b: f64, c: f64, d: f64, tx: f64, ty: f64) -> f64 {
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    top + (bottom - top) * ty
}

/// Bilinear resize with pixel-center alignment.
fn resize(src: &[f64], n: usize, m: usize) -> Vec<f64> {
    let scale = n as f64 / m as f64;
    let at = |c: usize, r: usize| src[r * n + c];
    let mut out = Vec::with_capacity(m * m);
    for r in 0..m {
        let v = ((r as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let r0 = (v.floor() as usize).min(n - 2);
        let ty = v - r0 as f64;
        for c in 0..m {
            let u = ((c as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
            let c0 = (u.floor() as usize).min(n - 2);
            let tx = u - c0 as f64;
            out.push(lerp2(at(c0, r0), at(c0 + 1, r0), at(c0, r0 + 1), at(c0 + 1, r0 + 1), tx, ty));
        }
    }
    out
}

fn resize_mask(src: &[bool], n: usize, m: usize) -> Vec<bool> {
    let scale = n as f64 / m as f64;
    let mut out = Vec::with_capacity(m * m);
    for r in 0..m {
        let sr = (((r as f64 + 0.5) * scale) as usize).min(n - 1);
        for c in 0..m {
            let sc = (((c as f64 + 0.5) * scale) as usize).min(n - 1);
            out.push(src[sr * n + sc]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub scan_id: String,
    pub pose: Option<CameraPose>,
    /// `(min, max)` for depth, azimuth and elevation before quantization.
    pub ranges: [(f64, f64); 3],
    pub nosetip: [f64; 3],
    pub nosetip_source: NosetipSource,
    /// Crop window reached past the cloud's x-y extent; outside pixels are
    /// unsupported.
    pub crop_out_of_bounds: bool,
    pub pixel_pitch_mm: f64,
    pub spec: ImageSpec,
    pub fit_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceImage3C {
    pub width: usize,
    pub height: usize,
    /// Interleaved depth, azimuth, elevation.
    pub channels: Vec<u8>,
    pub mask: Vec<bool>,
    /// Fitted depth in millimeters before normalization; NaN off the mask.
    pub depth_mm: Vec<f64>,
    pub meta: ImageMeta,
}

impl FaceImage3C {
    pub fn channel(&self, k: usize) -> Vec<u8> {
        self.channels.iter().skip(k).step_by(3).copied().collect()
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.channels[i], self.channels[i + 1], self.channels[i + 2]]
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>, RenderError> {
        encode_png(&self.channels, self.width, self.height, image::ExtendedColorType::Rgb8)
    }

    pub fn mask_png_bytes(&self) -> Result<Vec<u8>, RenderError> {
        let px: Vec<u8> = self.mask.iter().map(|m| if *m { 255 } else { 0 }).collect();
        encode_png(&px, self.width, self.height, image::ExtendedColorType::L8)
    }

    /// Raw depth: magic `FDEP`, u32 width, u32 height, f32 values row-major.
    pub fn depth_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.depth_mm.len());
        out.extend_from_slice(b"FDEP");
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.depth_mm {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    /// Writes `<stem>.png`, `<stem>.json`, `<stem>.depth` and optionally
    /// `<stem>_mask.png` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str, with_mask: bool) -> Result<(), crate::Error> {
        std::fs::write(dir.join(format!("{stem}.png")), self.png_bytes()?)?;
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&self.meta)?)?;
        std::fs::write(dir.join(format!("{stem}.depth")), self.depth_bytes())?;
        if with_mask {
            std::fs::write(dir.join(format!("{stem}_mask.png")), self.mask_png_bytes()?)?;
        }
        Ok(())
    }
}

fn encode_png(px: &[u8], w: usize, h: usize, color: image::ExtendedColorType) -> Result<Vec<u8>, RenderError> {
    use image::ImageEncoder;
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(px, w as u32, h as u32, color)
        .map_err(|e| RenderError::InvalidSpec(e.to_string()))?;
    Ok(out)
}

/// Reads a raw depth file written by [`FaceImage3C::depth_bytes`].
pub fn parse_depth(bytes: &[u8]) -> Option<(usize, usize, Vec<f64>)> {
    if bytes.len() < 12 || &bytes[..4] != b"FDEP" {
        return None;
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().ok()?) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().ok()?) as usize;
    if bytes.len() != 12 + 4 * w * h {
        return None;
    }
    let vals = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Some((w, h, vals))
}

/// Renders a view cloud carrying normals into a geometry image.
pub fn make_three_channel(
    view: &ViewCloud,
    spec: &ImageSpec,
    nosetip_override: Option<Point3<f64>>,
) -> Result<FaceImage3C, RenderError> {
    let mut img = render_cloud(&view.cloud, spec, nosetip_override, &view.source_ref)?;
    img.meta.pose = Some(view.pose);
    Ok(img)
}

/// As [`make_three_channel`] for a bare cloud in a frame where +z faces the
/// sensor.
pub fn render_cloud(
    cloud: &PointCloud,
    spec: &ImageSpec,
    nosetip_override: Option<Point3<f64>>,
    scan_id: &str,
) -> Result<FaceImage3C, RenderError> {
    spec.validate()?;
    let normals = cloud.normals().ok_or(RenderError::MissingNormals)?;
    if cloud.is_empty() {
        return Err(RenderError::NoSamples);
    }
    let (tip, source) = detect_nosetip(cloud, spec.central_fraction, nosetip_override)?;

    let mut xy = Vec::with_capacity(cloud.len());
    let mut z = Vec::with_capacity(cloud.len());
    let mut theta = Vec::with_capacity(cloud.len());
    let mut phi = Vec::with_capacity(cloud.len());
    for (p, n) in cloud.points().iter().zip(normals) {
        let s = to_spherical(n)?;
        xy.push((p.x, -p.y));
        z.push(p.z);
        theta.push(s.theta);
        phi.push(s.phi);
    }
    let grid = spec.grid_at(tip.x, tip.y);
    let fit = fit_grid_surfaces(&xy, &[&z, &theta, &phi], &grid)?;

    let (lo, hi) = cloud.bounds().expect("nonempty");
    let half = (spec.crop / 2) as f64 * spec.spacing;
    let far = (spec.crop - 1 - spec.crop / 2) as f64 * spec.spacing;
    let out_of_bounds =
        tip.x - half < lo.x || tip.x + far > hi.x || tip.y + half > hi.y || tip.y - far < lo.y;

    let (n, m) = (spec.crop, spec.out_size);
    let out_mask = resize_mask(&fit.mask, n, m);
    let mut ranges = [(0.0, 0.0); 3];
    let mut planes = Vec::with_capacity(3);
    for (k, g) in fit.grids.iter().enumerate() {
        let (q, range) = match &spec.normalization {
            Normalization::PerImage => normalize_u8(&g.data, &fit.mask),
            Normalization::Global(r) => (normalize_with(&g.data, &fit.mask, r[k]), r[k]),
        };
        ranges[k] = range;
        let q: Vec<f64> = q.into_iter().map(f64::from).collect();
        let resized = resize(&q, n, m);
        planes.push(
            resized
                .into_iter()
                .zip(&out_mask)
                .map(|(v, keep)| if *keep { round_u8(v) } else { 0 })
                .collect::<Vec<u8>>(),
        );
    }
    let mut channels = Vec::with_capacity(3 * m * m);
    for i in 0..m * m {
        channels.extend([planes[0][i], planes[1][i], planes[2][i]]);
    }
    let depth_mm = resize(&fit.grids[0].data, n, m)
        .into_iter()
        .zip(&out_mask)
        .map(|(v, keep)| if *keep { v } else { f64::NAN })
        .collect();

    Ok(FaceImage3C {
        width: m,
        height: m,
        channels,
        mask: out_mask,
        depth_mm,
        meta: ImageMeta {
            scan_id: scan_id.to_string(),
            pose: None,
            ranges,
            nosetip: [tip.x, tip.y, tip.z],
            nosetip_source: source,
            crop_out_of_bounds: out_of_bounds,
            pixel_pitch_mm: spec.pixel_pitch(),
            spec: spec.clone(),
            fit_residual: fit.residual,
        },
    })
}
