//! Declarative run configuration (TOML). Every field has a default, so an
//! empty file is valid as long as the requested stages have inputs.

use std::path::{Path, PathBuf};

use faceforge_core::distance::SelectionMode;
use faceforge_core::kstats::{DEFAULT_KAPPA, DEFAULT_KERNEL_SIZES};
use faceforge_core::render::{
    Normalization, DEFAULT_CENTRAL_FRACTION, DEFAULT_CROP, DEFAULT_OUT_SIZE, DEFAULT_SPACING,
};
use faceforge_core::synth::Provenance;
use faceforge_core::tps::AffineBasis;
use faceforge_core::views::{DEFAULT_CAMERA_RADIUS, DEFAULT_RADIUS_EXPONENT};
use faceforge_eval::curves::DEFAULT_FAR_GRID;
use faceforge_eval::openworld::{DEFAULT_FOLDS, DEFAULT_TAU_STEPS};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub input: InputConfig,
    pub distances: DistancesConfig,
    pub pairs: PairsConfig,
    pub synth: SynthConfig,
    pub views: ViewsConfig,
    pub images: ImagesConfig,
    pub kstats: KstatsConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Directory of `{identity}_{expression}.{ply,obj,xyz}` scans.
    pub dir: Option<PathBuf>,
    /// Generates seed faces instead of reading `dir`.
    pub synthetic: Option<SyntheticInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticInput {
    pub identities: usize,
    #[serde(default = "two")]
    pub expressions: usize,
    /// Grid side; each face has `side * side` vertices.
    #[serde(default = "default_side")]
    pub side: usize,
}

fn two() -> usize {
    2
}

fn default_side() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistancesConfig {
    pub subsample_size: usize,
    pub basis: AffineBasis,
}

impl Default for DistancesConfig {
    fn default() -> Self {
        Self {
            subsample_size: 500,
            basis: AffineBasis::Source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsConfig {
    pub mode: SelectionMode,
    /// Number of pairs; 0 selects every pair.
    pub count: usize,
}

impl Default for PairsConfig {
    fn default() -> Self {
        Self {
            mode: SelectionMode::MostDissimilar,
            count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CombosConfig {
    Named(String),
    Explicit(Vec<(u32, u32)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub combos: CombosConfig,
    /// Defaults to the number of selected pairs.
    pub target_new_identities: Option<usize>,
    pub provenance: Provenance,
    /// Render the input faces alongside the synthetic ones.
    pub include_real: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            combos: CombosConfig::Named("default".into()),
            target_new_identities: None,
            provenance: Provenance::DissimilarPool,
            include_real: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub longitude: f64,
    pub latitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewsConfig {
    /// Custom poses; empty uses the 15-pose cross layout.
    pub poses: Vec<PoseConfig>,
    pub radius: f64,
    pub radius_exponent: f64,
    /// Random subset of (scan, pose) candidates to render; 0 renders all.
    pub max_views: usize,
}

impl Default for ViewsConfig {
    fn default() -> Self {
        Self {
            poses: Vec::new(),
            radius: DEFAULT_CAMERA_RADIUS,
            radius_exponent: DEFAULT_RADIUS_EXPONENT,
            max_views: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagesConfig {
    pub spacing: f64,
    pub smoothness: f64,
    pub crop: usize,
    pub out_size: usize,
    pub central_fraction: f64,
    pub normals_k: usize,
    pub write_mask: bool,
    /// Fixed `[lo, hi]` per channel instead of per-image min-max.
    pub global_ranges: Option<[(f64, f64); 3]>,
}

impl Default for ImagesConfig {
    fn default() -> Self {
        Self {
            spacing: DEFAULT_SPACING,
            smoothness: faceforge_core::gridfit::DEFAULT_SMOOTHNESS,
            crop: DEFAULT_CROP,
            out_size: DEFAULT_OUT_SIZE,
            central_fraction: DEFAULT_CENTRAL_FRACTION,
            normals_k: 12,
            write_mask: false,
            global_ranges: None,
        }
    }
}

impl ImagesConfig {
    pub fn spec(&self) -> faceforge_core::render::ImageSpec {
        faceforge_core::render::ImageSpec {
            spacing: self.spacing,
            smoothness: self.smoothness,
            crop: self.crop,
            out_size: self.out_size,
            central_fraction: self.central_fraction,
            normalization: match self.global_ranges {
                Some(r) => Normalization::Global(r),
                None => Normalization::PerImage,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KstatsConfig {
    pub kernel_sizes: Vec<usize>,
    pub kappa: f64,
}

impl Default for KstatsConfig {
    fn default() -> Self {
        Self {
            kernel_sizes: DEFAULT_KERNEL_SIZES.to_vec(),
            kappa: DEFAULT_KAPPA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Closed,
    Open,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub manifest: Option<PathBuf>,
    /// Replaces the feature file of every manifest entry.
    pub features: Option<PathBuf>,
    /// Generates features and a manifest instead of reading them.
    pub synthetic: Option<SyntheticFeaturesConfig>,
    pub mode: EvalMode,
    pub openness: f64,
    /// Exact unknown identity count; overrides `openness`.
    pub unknowns: Option<usize>,
    pub folds: usize,
    pub tau_steps: usize,
    pub far_grid: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            features: None,
            synthetic: None,
            mode: EvalMode::Closed,
            openness: 0.0,
            unknowns: None,
            folds: DEFAULT_FOLDS,
            tau_steps: DEFAULT_TAU_STEPS,
            far_grid: DEFAULT_FAR_GRID.to_vec(),
        }
    }
}

impl EvalConfig {
    pub fn is_configured(&self) -> bool {
        self.manifest.is_some() || self.synthetic.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticFeaturesConfig {
    pub identities: usize,
    #[serde(default = "four")]
    pub probes_per_identity: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "one")]
    pub noise: f64,
}

fn four() -> usize {
    4
}

fn default_dim() -> usize {
    1024
}

fn one() -> f64 {
    1.0
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut cfg.input.dir);
        fix(&mut cfg.eval.manifest);
        fix(&mut cfg.eval.features);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if let CombosConfig::Named(n) = &self.synth.combos {
            if n != "default" {
                return bad("synth.combos must be \"default\" or a list of [expr_i, expr_j]");
            }
        }
        if self.kstats.kernel_sizes.is_empty() || self.kstats.kernel_sizes.iter().any(|k| k % 2 == 0 || *k < 3) {
            return bad("kstats.kernel_sizes must be odd and at least 3");
        }
        if !(0.0..=1.0).contains(&self.kstats.kappa) {
            return bad("kstats.kappa must lie in [0, 1]");
        }
        if self.images.normals_k < 3 {
            return bad("images.normals_k must be at least 3");
        }
        if self.eval.folds == 0 {
            return bad("eval.folds must be positive");
        }
        if self.input.dir.is_some() && self.input.synthetic.is_some() {
            return bad("set only one of input.dir and input.synthetic");
        }
        if self.eval.manifest.is_some() && self.eval.synthetic.is_some() {
            return bad("set only one of eval.manifest and eval.synthetic");
        }
        self.images.spec().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}
