//! Depth variance and keypoint density of sliding windows over geometry
//! images, per kernel size.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::KernelStatsError;
use crate::par;
use crate::render::FaceImage3C;

pub const DEFAULT_KERNEL_SIZES: [usize; 4] = [3, 5, 7, 9];
pub const DEFAULT_KAPPA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSource {
    Millimeters,
    /// Dequantized from the 8-bit depth channel.
    EightBit,
}

/// Depth grid in millimeters; NaN marks unsupported pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    /// Millimeters between pixel centers.
    pub pitch: f64,
    pub source: DepthSource,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, depth: Vec<f64>, pitch: f64) -> Self {
        assert_eq!(depth.len(), width * height, "depth length");
        Self {
            width,
            height,
            depth,
            pitch,
            source: DepthSource::Millimeters,
        }
    }

    pub fn from_face_image(img: &FaceImage3C) -> Self {
        Self::new(img.width, img.height, img.depth_mm.clone(), img.meta.pixel_pitch_mm)
    }

    /// Rebuilds millimeter depth from the 8-bit channel and the stored range.
    pub fn from_eight_bit(img: &FaceImage3C) -> Self {
        let (lo, hi) = img.meta.ranges[0];
        let depth = img
            .channel(0)
            .into_iter()
            .zip(&img.mask)
            .map(|(v, m)| if *m { lo + (hi - lo) * f64::from(v) / 255.0 } else { f64::NAN })
            .collect();
        Self {
            source: DepthSource::EightBit,
            ..Self::new(img.width, img.height, depth, img.meta.pixel_pitch_mm)
        }
    }

    fn windows(&self, k: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (nr, nc) = (self.height + 1 - k, self.width + 1 - k);
        (0..nr).flat_map(move |r| (0..nc).map(move |c| (c, r)))
    }

    fn window_points(&self, k: usize, c0: usize, r0: usize, out: &mut Vec<Vector3<f64>>) {
        out.clear();
        for r in r0..r0 + k {
            for c in c0..c0 + k {
                let d = self.depth[r * self.width + c];
                if d.is_finite() {
                    out.push(Vector3::new(c as f64 * self.pitch, r as f64 * self.pitch, d));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub kernel_sizes: Vec<usize>,
    /// Mean within-window depth variance (mm²) over all evaluated windows.
    pub mean_variance: Vec<f64>,
    /// Qualifying windows over total windows, averaged over images.
    pub keypoints_per_kernel: Vec<f64>,
    pub corpus_size: usize,
    pub kappa: f64,
    pub depth_source: DepthSource,
}

impl KernelReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kernel_size,mean_variance,keypoint_density\n");
        for (i, k) in self.kernel_sizes.iter().enumerate() {
            s.push_str(&format!(
                "{k},{},{}\n",
                self.mean_variance.get(i).copied().unwrap_or(f64::NAN),
                self.keypoints_per_kernel.get(i).copied().unwrap_or(f64::NAN)
            ));
        }
        s
    }
}

fn check(images: &[DepthImage], sizes: &[usize]) -> Result<(), KernelStatsError> {
    if images.is_empty() {
        return Err(KernelStatsError::EmptyCorpus);
    }
    let limit = images.iter().map(|i| i.width.min(i.height)).min().unwrap_or(0);
    for &k in sizes {
        if k < 3 || k % 2 == 0 {
            return Err(KernelStatsError::InvalidSize(k));
        }
        if k > limit {
            return Err(KernelStatsError::SizeTooLarge { k, limit });
        }
    }
    Ok(())
}

fn enough(valid: usize, k: usize) -> bool {
    2 * valid >= k * k
}

/// Mean depth variance of `k`×`k` windows; windows with fewer than half their
/// pixels supported are skipped.
pub fn window_variance_stats(images: &[DepthImage], sizes: &[usize]) -> Result<Vec<f64>, KernelStatsError> {
    check(images, sizes)?;
    Ok(sizes
        .iter()
        .map(|&k| {
            let per_image = par::map(images, |img| {
                let mut buf = Vec::with_capacity(k * k);
                let (mut sum, mut count) = (0.0, 0usize);
                for (c, r) in img.windows(k) {
                    img.window_points(k, c, r, &mut buf);
                    if !enough(buf.len(), k) {
                        continue;
                    }
                    let n = buf.len() as f64;
                    let mean = buf.iter().map(|p| p.z).sum::<f64>() / n;
                    sum += buf.iter().map(|p| (p.z - mean).powi(2)).sum::<f64>() / n;
                    count += 1;
                }
                (sum, count)
            });
            let (sum, count) = per_image
                .into_iter()
                .fold((0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1));
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect())
}

/// Asymmetry `(s1 - s2) / s1` of the principal standard deviations of a
/// window's 3D points.
pub fn window_asymmetry(points: &[Vector3<f64>]) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let cov = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / n;
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] == 0.0 {
        0.0
    } else {
        (ev[0] - ev[1]) / ev[0]
    }
}

/// Fraction of windows whose asymmetry reaches `kappa`, averaged over images.
/// Windows with too few supported pixels never qualify.
pub fn keypoint_density(images: &[DepthImage], sizes: &[usize], kappa: f64) -> Result<Vec<f64>, KernelStatsError> {
    check(images, sizes)?;
    Ok(sizes
        .iter()
        .map(|&k| {
            let per_image = par::map(images, |img| {
                let mut buf = Vec::with_capacity(k * k);
                let (mut hits, mut total) = (0usize, 0usize);
                for (c, r) in img.windows(k) {
                    total += 1;
                    img.window_points(k, c, r, &mut buf);
                    if enough(buf.len(), k) && window_asymmetry(&buf) >= kappa {
                        hits += 1;
                    }
                }
                hits as f64 / total as f64
            });
            per_image.iter().sum::<f64>() / images.len() as f64
        })
        .collect())
}

pub fn kernel_report(images: &[DepthImage], sizes: &[usize], kappa: f64) -> Result<KernelReport, KernelStatsError> {
    let source = if images.iter().any(|i| i.source == DepthSource::EightBit) {
        DepthSource::EightBit
    } else {
        DepthSource::Millimeters
    };
    Ok(KernelReport {
        kernel_sizes: sizes.to_vec(),
        mean_variance: window_variance_stats(images, sizes)?,
        keypoints_per_kernel: keypoint_density(images, sizes, kappa)?,
        corpus_size: images.len(),
        kappa,
        depth_source: source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(w: usize, h: usize, f: impl Fn(f64, f64) -> f64) -> DepthImage {
        let depth = (0..h).flat_map(|r| (0..w).map(move |c| (c, r))).map(|(c, r)| f(c as f64, r as f64)).collect();
        DepthImage::new(w, h, depth, 1.0)
    }

    #[test]
    fn constant_image() {
        let img = [image(20, 20, |_, _| 5.0)];
        assert_eq!(window_variance_stats(&img, &[3, 5, 7, 9]).unwrap(), vec![0.0; 4]);
        assert_eq!(keypoint_density(&img, &[3, 9], 1e-6).unwrap(), vec![0.0; 2]);
    }

    #[test]
    fn ramp_variance_closed_form() {
        let img = [image(30, 30, |c, _| 2.0 * c)];
        let v = window_variance_stats(&img, &[3, 5, 7]).unwrap();
        for (k, got) in [3.0f64, 5.0, 7.0].iter().zip(&v) {
            let want = 4.0 * (k * k - 1.0) / 12.0;
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!(v[0] < v[1] && v[1] < v[2]);
    }

    #[test]
    fn symmetric_paraboloid_window() {
        let img = [image(9, 9, |c, r| 0.05 * ((c - 4.0).powi(2) + (r - 4.0).powi(2)))];
        assert!(window_asymmetry(&{
            let mut b = Vec::new();
            img[0].window_points(9, 0, 0, &mut b);
            b
        }) < 1e-12);
        assert_eq!(keypoint_density(&img, &[9], 1e-6).unwrap(), vec![0.0]);
    }

    #[test]
    fn vacuous_threshold() {
        let img = [image(16, 12, |c, r| (c * 0.3).sin() * r)];
        assert_eq!(keypoint_density(&img, &[3, 5, 7], 0.0).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn sparse_windows_skipped() {
        let mut img = image(10, 10, |c, _| c);
        for r in 0..10 {
            for c in 0..10 {
                if (r + c) % 3 != 0 {
                    img.depth[r * 10 + c] = f64::NAN;
                }
            }
        }
        assert_eq!(window_variance_stats(&[img.clone()], &[3]).unwrap(), vec![0.0]);
        assert_eq!(keypoint_density(&[img], &[3], 0.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn size_checks() {
        let img = [image(8, 8, |_, _| 0.0)];
        assert!(matches!(window_variance_stats(&img, &[9]), Err(KernelStatsError::SizeTooLarge { k: 9, limit: 8 })));
        assert!(matches!(keypoint_density(&img, &[4], 0.1), Err(KernelStatsError::InvalidSize(4))));
        assert!(matches!(window_variance_stats(&[], &[3]), Err(KernelStatsError::EmptyCorpus)));
    }

    #[test]
    fn csv_layout() {
        let r = KernelReport {
            kernel_sizes: vec![3, 5],
            mean_variance: vec![0.5, 1.0],
            keypoints_per_kernel: vec![0.0, 0.25],
            corpus_size: 1,
            kappa: 0.3,
            depth_source: DepthSource::Millimeters,
        };
        assert_eq!(r.to_csv(), "kernel_size,mean_variance,keypoint_density\n3,0.5,0\n5,1,0.25\n");
    }
}
