//! Seeded synthetic features for exercising the harness without a network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::EvalError;
use crate::features::FeatureSet;
use crate::manifest::{build_manifest, EvalManifest, ScanRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticFeatures {
    pub identities: usize,
    pub probes_per_identity: usize,
    pub dim: usize,
    /// Per-component noise standard deviation around the identity center;
    /// centers have unit per-component variance.
    pub noise: f64,
    pub seed: u64,
}

/// Gallery scan `id{i}_e0` plus probes `id{i}_e{k}`, all stored in
/// `feature_file`.
pub fn generate(cfg: &SyntheticFeatures, feature_file: &str) -> Result<(FeatureSet, EvalManifest), EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gauss = move || -> f32 { StandardNormal.sample(&mut rng) };
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut scans = Vec::new();
    for i in 0..cfg.identities {
        let center: Vec<f64> = (0..cfg.dim).map(|_| gauss() as f64).collect();
        for e in 0..=cfg.probes_per_identity {
            let row: Vec<f32> = center.iter().map(|c| (c + cfg.noise * gauss() as f64) as f32).collect();
            let scan = format!("id{i:04}_e{e}");
            ids.push(scan.clone());
            rows.push(row);
            scans.push(ScanRecord {
                subject: format!("id{i:04}"),
                scan,
                expression: e as u32,
                feature_file: feature_file.to_string(),
            });
        }
    }
    let set = FeatureSet::from_rows(ids, &rows)?;
    let manifest = build_manifest(&scans, cfg.dim)?;
    Ok((set, manifest))
}
