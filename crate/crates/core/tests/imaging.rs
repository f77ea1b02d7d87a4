use faceforge_core::cloud::PointCloud;
use faceforge_core::gridfit::{fit_grid_surface, fit_grid_surfaces, roughness, GridSpec, RESIDUAL_TOL};
use faceforge_core::normals::compute_normals;
use faceforge_core::render::{make_three_channel, render_cloud, ImageSpec, NosetipSource};
use faceforge_core::synthetic;
use faceforge_core::views::{render_view, CameraPose};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn spec(lam: f64) -> GridSpec {
    GridSpec {
        width: 40,
        height: 32,
        spacing: 1.0,
        origin: (0.0, 0.0),
        smoothness: lam,
    }
}

fn scattered(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (rng.random::<f64>() * 39.0, rng.random::<f64>() * 31.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn affine_reproduced_at_any_smoothness(
        log_lam in -6.0f64..3.0,
        a in -5.0f64..5.0, b in -5.0f64..5.0, c in -50.0f64..50.0,
        seed in any::<u64>(),
    ) {
        let sp = spec(10f64.powf(log_lam));
        let samples: Vec<(f64, f64, f64)> = scattered(200, seed).into_iter().map(|(x, y)| (x, y, a * x + b * y + c)).collect();
        let (g, _) = fit_grid_surface(&samples, &sp).unwrap();
        for r in 0..sp.height {
            for col in 0..sp.width {
                let (x, y) = sp.node_xy(col, r);
                prop_assert!((g.get(col, r) - (a * x + b * y + c)).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn plane_two_three_one() {
    let sp = spec(1e-2);
    let samples: Vec<(f64, f64, f64)> = scattered(300, 1).into_iter().map(|(x, y)| (x, y, 2.0 * x + 3.0 * y + 1.0)).collect();
    let fit = fit_grid_surfaces(
        &samples.iter().map(|s| (s.0, s.1)).collect::<Vec<_>>(),
        &[&samples.iter().map(|s| s.2).collect::<Vec<_>>()],
        &sp,
    )
    .unwrap();
    assert!(fit.residual <= RESIDUAL_TOL);
    let g = &fit.grids[0];
    for r in 0..sp.height {
        for c in 0..sp.width {
            let (x, y) = sp.node_xy(c, r);
            assert!((g.get(c, r) - (2.0 * x + 3.0 * y + 1.0)).abs() < 1e-6);
        }
    }
}

#[test]
fn zero_smoothness_with_full_coverage() {
    let sp = spec(0.0);
    let mut samples = Vec::new();
    for r in 0..sp.height * 2 {
        for c in 0..sp.width * 2 {
            let (x, y) = (c as f64 * 0.5 + 0.1, r as f64 * 0.5 + 0.1);
            if x <= 39.0 && y <= 31.0 {
                samples.push((x, y, -x + 0.5 * y));
            }
        }
    }
    let (g, mask) = fit_grid_surface(&samples, &sp).unwrap();
    assert!(mask.iter().all(|m| *m));
    let (x, y) = sp.node_xy(7, 9);
    assert!((g.get(7, 9) - (-x + 0.5 * y)).abs() < 1e-6);
}

#[test]
fn noisy_plane_rms_below_sigma() {
    let sigma = 0.1;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sp = spec(1e-2);
    let samples: Vec<(f64, f64, f64)> = scattered(6000, 2)
        .into_iter()
        .map(|(x, y)| (x, y, 0.5 * x - 0.25 * y + 3.0 + noise.sample(&mut rng)))
        .collect();
    let (g, _) = fit_grid_surface(&samples, &sp).unwrap();
    let mut se = 0.0;
    for r in 0..sp.height {
        for c in 0..sp.width {
            let (x, y) = sp.node_xy(c, r);
            se += (g.get(c, r) - (0.5 * x - 0.25 * y + 3.0)).powi(2);
        }
    }
    let rms = (se / (sp.width * sp.height) as f64).sqrt();
    assert!(rms < sigma, "rms {rms}");
}

#[test]
fn more_smoothing_never_roughens() {
    let samples: Vec<(f64, f64, f64)> =
        scattered(400, 3).into_iter().map(|(x, y)| (x, y, (x * 0.3).sin() * 4.0 + (y * 0.2).cos() * y)).collect();
    let mut last = f64::INFINITY;
    for lam in [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0] {
        let (g, _) = fit_grid_surface(&samples, &spec(lam)).unwrap();
        let r = roughness(&g);
        assert!(r <= last * (1.0 + 1e-9), "lambda {lam}: {r} > {last}");
        last = r;
    }
}

fn hemisphere(radius: f64) -> PointCloud {
    let mut pts = Vec::new();
    let mut normals = Vec::new();
    let n = (2.0 * radius) as i32;
    for i in 0..=n {
        for j in 0..=n {
            let (x, y) = (i as f64 - radius, j as f64 - radius);
            let rr = x * x + y * y;
            if rr < radius * radius * 0.98 {
                let z = (radius * radius - rr).sqrt();
                pts.push(Point3::new(x, y, z - 700.0));
                normals.push(Vector3::new(x, y, z) / radius);
            }
        }
    }
    PointCloud::with_normals(pts, normals).unwrap()
}

#[test]
fn hemisphere_depth_peaks_at_nosetip() {
    let img = render_cloud(&hemisphere(80.0), &ImageSpec::default(), None, "hemi").unwrap();
    assert_eq!((img.width, img.height, img.channels.len()), (160, 160, 160 * 160 * 3));
    assert_eq!(img.meta.nosetip, [0.0, 0.0, 80.0 - 700.0]);
    // Crop node 112 maps to output pixel 80 under center-aligned 224 -> 160 resampling.
    let depth = img.channel(0);
    assert_eq!(depth[80 * 160 + 80], 255);
    assert_eq!(*depth.iter().max().unwrap(), 255);
    assert!(img.mask.iter().zip(&depth).all(|(m, v)| *m || *v == 0));
}

#[test]
fn image_bytes_are_reproducible() {
    let a = render_cloud(&hemisphere(60.0), &ImageSpec::default(), None, "h").unwrap();
    let b = render_cloud(&hemisphere(60.0), &ImageSpec::default(), None, "h").unwrap();
    assert_eq!(a.png_bytes().unwrap(), b.png_bytes().unwrap());
    assert_eq!(a.depth_bytes(), b.depth_bytes());
    let png = a.png_bytes().unwrap();
    let decoded = image::load_from_memory(&png).unwrap().to_rgb8();
    assert_eq!(decoded.dimensions(), (160, 160));
    assert_eq!(decoded.into_raw(), a.channels);
}

#[test]
fn face_view_pipeline() {
    let set = synthetic::face_set(1, 1, 96, 8);
    let view = render_view(&set.faces()[0].cloud, &CameraPose::new(-30.0, 15.0, 800.0).unwrap(), 2.0, "f").unwrap();
    let mut view = view;
    view.cloud = compute_normals(&view.cloud, 12).unwrap().cloud;
    let img = make_three_channel(&view, &ImageSpec::default(), None).unwrap();
    assert_eq!(img.meta.pose, Some(view.pose));
    assert_eq!(img.meta.nosetip_source, NosetipSource::Detected);
    assert!(img.meta.ranges.iter().all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi));
    assert!(img.mask.iter().filter(|m| **m).count() > 160 * 160 / 3);
    for k in 0..3 {
        let ch = img.channel(k);
        let on: Vec<u8> = ch.iter().zip(&img.mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
        let (lo, hi) = (*on.iter().min().unwrap(), *on.iter().max().unwrap());
        assert!(hi - lo >= 200, "channel {k}: {lo}..{hi}");
    }
    let tip = Point3::new(1.0, 2.0, -700.0);
    let forced = make_three_channel(&view, &ImageSpec::default(), Some(tip)).unwrap();
    assert_eq!(forced.meta.nosetip_source, NosetipSource::Override);
    assert_eq!(forced.meta.nosetip, [1.0, 2.0, -700.0]);
}

#[test]
fn zero_smoothness_with_sparse_samples_stays_affine() {
    let sp = spec(0.0);
    let samples: Vec<(f64, f64, f64)> = scattered(300, 4).into_iter().map(|(x, y)| (x, y, 4.0 - x + 2.5 * y)).collect();
    let (g, mask) = fit_grid_surface(&samples, &sp).unwrap();
    assert!(mask.iter().any(|m| !m));
    for r in 0..sp.height {
        for c in 0..sp.width {
            let (x, y) = sp.node_xy(c, r);
            assert!((g.get(c, r) - (4.0 - x + 2.5 * y)).abs() <= 1e-6, "({c}, {r})");
        }
    }
}
