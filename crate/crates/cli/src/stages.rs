//! Pipeline stages. Each stage reads only files written by earlier stages
//! (or the configured inputs) and writes into its own directory under the
//! output root.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use faceforge_core::cloud::{CorrespondedFace, FaceSet, PointCloud};
use faceforge_core::distance::{pairwise_distances, select_pairs, DistanceOptions, PairSelection, ShapeDistanceMatrix};
use faceforge_core::io::{load_cloud_auto, write_ply};
use faceforge_core::kstats::{kernel_report, DepthImage};
use faceforge_core::normals::compute_normals;
use faceforge_core::par;
use faceforge_core::render::{parse_depth, render_cloud};
use faceforge_core::synth::{generate_identities, thin_indices, ComboRule, SynthesisPlan};
use faceforge_core::synthetic;
use faceforge_core::views::{camera_poses, render_view, CameraLayout, CameraPose};
use faceforge_eval::manifest::EvalManifest;
use faceforge_eval::match_all;
use faceforge_eval::openworld::{make_open_world_folds, open_world_folds_eval, tau_grid, UnknownTarget};
use faceforge_eval::report::{closed_world, summary_json};
use faceforge_eval::synthetic::{generate, SyntheticFeatures};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{CombosConfig, Config, EvalMode};
use crate::stamp::{hash_files, hash_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Distances,
    Pairs,
    Synth,
    Views,
    Images,
    Kstats,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Distances,
        Stage::Pairs,
        Stage::Synth,
        Stage::Views,
        Stage::Images,
        Stage::Kstats,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Distances => "distances",
            Stage::Pairs => "pairs",
            Stage::Synth => "synth",
            Stage::Views => "views",
            Stage::Images => "images",
            Stage::Kstats => "kstats",
            Stage::Eval => "eval",
        }
    }

    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Distances | Stage::Eval => &[],
            Stage::Pairs => &[Stage::Distances],
            Stage::Synth => &[Stage::Pairs],
            Stage::Views => &[Stage::Synth],
            Stage::Images => &[Stage::Views],
            Stage::Kstats => &[Stage::Images],
        }
    }

    fn reads_input(self) -> bool {
        matches!(self, Stage::Distances | Stage::Synth | Stage::Views)
    }
}

/// The requested stages plus everything they depend on, in pipeline order.
pub fn with_dependencies(requested: &[Stage]) -> Vec<Stage> {
    let mut need: BTreeSet<Stage> = BTreeSet::new();
    let mut stack: Vec<Stage> = requested.to_vec();
    while let Some(s) = stack.pop() {
        if need.insert(s) {
            stack.extend_from_slice(s.deps());
        }
    }
    Stage::ALL.into_iter().filter(|s| need.contains(s)).collect()
}

type StageResult<T> = Result<T, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> StageResult<()> {
    std::fs::write(path, serde_json::to_vec_pretty(v).map_err(err)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_json<T: for<'a> Deserialize<'a>>(path: &Path) -> StageResult<T> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn with_seed<T: Serialize>(v: &T, seed: u64) -> StageResult<Value> {
    let mut v = serde_json::to_value(v).map_err(err)?;
    if let Value::Object(m) = &mut v {
        m.insert("seed".into(), json!(seed));
    }
    Ok(v)
}

pub fn scan_id(identity: u32, expression: u32) -> String {
    format!("{identity}_{expression}")
}

/// Parses `{identity}_{expression}` file stems.
pub fn parse_scan_stem(stem: &str) -> Option<(u32, u32)> {
    let (a, b) = stem.split_once('_')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

fn scan_files(dir: &Path) -> StageResult<Vec<(u32, u32, PathBuf)>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for entry in entries {
        let path = entry.map_err(err)?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("ply" | "obj" | "xyz")) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (i, e) = parse_scan_stem(stem)
            .ok_or_else(|| format!("{}: expected {{identity}}_{{expression}} file name", path.display()))?;
        out.push((i, e, path));
    }
    out.sort();
    if let Some(w) = out.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
        return Err(format!("scan {} appears twice", scan_id(w[0].0, w[0].1)));
    }
    Ok(out)
}

fn load_faces(files: &[(u32, u32, PathBuf)]) -> StageResult<Vec<CorrespondedFace>> {
    files
        .iter()
        .map(|(i, e, p)| {
            let mut cloud = load_cloud_auto(p).map_err(|x| format!("{}: {x}", p.display()))?;
            cloud.clear_normals();
            Ok(CorrespondedFace::new(cloud, *i, *e))
        })
        .collect()
}

pub struct Pipeline {
    pub cfg: Config,
    pub out: PathBuf,
}

impl Pipeline {
    pub fn dir(&self, s: Stage) -> PathBuf {
        self.out.join(s.name())
    }

    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    /// Settings that determine a stage's output.
    pub fn stage_config(&self, s: Stage) -> Value {
        let c = &self.cfg;
        let section = match s {
            Stage::Distances => json!(c.distances),
            Stage::Pairs => json!(c.pairs),
            Stage::Synth => json!(c.synth),
            Stage::Views => json!({"views": c.views, "include_real": c.synth.include_real}),
            Stage::Images => json!(c.images),
            Stage::Kstats => json!(c.kstats),
            Stage::Eval => json!(c.eval),
        };
        json!({"stage": s.name(), "seed": c.seed, "config": section})
    }

    fn input_fingerprint(&self) -> StageResult<String> {
        if let Some(syn) = &self.cfg.input.synthetic {
            return Ok(hash_json(&json!({"synthetic": syn})));
        }
        let dir = self.cfg.input.dir.as_ref().ok_or("no input configured: set input.dir or input.synthetic")?;
        let files: Vec<PathBuf> = scan_files(dir)?.into_iter().map(|f| f.2).collect();
        hash_files(&files).map_err(err)
    }

    fn eval_fingerprint(&self) -> StageResult<String> {
        let e = &self.cfg.eval;
        if e.synthetic.is_some() {
            return Ok(hash_json(&json!({"synthetic": e.synthetic})));
        }
        let manifest_path = e.manifest.as_ref().ok_or("eval needs a manifest (eval.manifest or --manifest)")?;
        let manifest = EvalManifest::load(manifest_path).map_err(|x| format!("{}: {x}", manifest_path.display()))?;
        let mut files = vec![manifest_path.clone()];
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut feats: BTreeSet<PathBuf> = BTreeSet::new();
        match &e.features {
            Some(f) => {
                feats.insert(f.clone());
            }
            None => {
                feats.extend(manifest.gallery.iter().map(|g| base.join(&g.feature_file)));
                feats.extend(manifest.probes.iter().map(|p| base.join(&p.feature_file)));
            }
        }
        for f in feats {
            if f.extension().is_none_or(|x| !x.eq_ignore_ascii_case("csv")) {
                files.push(faceforge_eval::features::index_path(&f));
            }
            files.push(f);
        }
        hash_files(&files).map_err(err)
    }

    /// Hash of everything a stage reads: upstream outputs and raw inputs.
    pub fn input_hash(&self, s: Stage, upstream: &[(Stage, String)]) -> StageResult<String> {
        let mut v = serde_json::Map::new();
        for (d, h) in upstream {
            v.insert(d.name().into(), json!(h));
        }
        if s.reads_input() {
            v.insert("input".into(), json!(self.input_fingerprint()?));
        }
        if s == Stage::Eval {
            v.insert("eval".into(), json!(self.eval_fingerprint()?));
        }
        Ok(hash_json(&Value::Object(v)))
    }

    pub fn execute(&self, s: Stage, keep_partial: bool) -> StageResult<()> {
        match s {
            Stage::Distances => self.distances(),
            Stage::Pairs => self.pairs(),
            Stage::Synth => self.synth(),
            Stage::Views => self.views(keep_partial),
            Stage::Images => self.images(keep_partial),
            Stage::Kstats => self.kstats(),
            Stage::Eval => self.eval(),
        }
    }

    fn input_set(&self) -> StageResult<FaceSet> {
        if let Some(syn) = &self.cfg.input.synthetic {
            if syn.identities == 0 || syn.expressions == 0 || syn.side < 4 {
                return Err("input.synthetic needs identities, expressions >= 1 and side >= 4".into());
            }
            return Ok(synthetic::face_set(syn.identities as u32, syn.expressions as u32, syn.side, self.seed()));
        }
        let dir = self.cfg.input.dir.as_ref().ok_or("no input configured")?;
        let faces = load_faces(&scan_files(dir)?)?;
        FaceSet::new(faces).map_err(err)
    }

    fn distances(&self) -> StageResult<()> {
        let set = self.input_set()?;
        let opts = DistanceOptions {
            subsample_size: self.cfg.distances.subsample_size,
            seed: self.seed(),
            basis: self.cfg.distances.basis,
        };
        let d = pairwise_distances(&set, &opts).map_err(err)?;
        if d.failed_pairs() > 0 {
            log::warn!("{} pairs have no finite distance", d.failed_pairs());
        }
        let dir = self.dir(Stage::Distances);
        d.save(&dir.join("matrix.bin"), &dir.join("matrix.json"), Some(self.seed())).map_err(err)
    }

    fn pairs(&self) -> StageResult<()> {
        let src = self.dir(Stage::Distances);
        let d = ShapeDistanceMatrix::load(&src.join("matrix.bin"), &src.join("matrix.json")).map_err(err)?;
        let m = match self.cfg.pairs.count {
            0 => d.pair_count() - d.failed_pairs(),
            m => m,
        };
        let sel = select_pairs(&d, m, self.cfg.pairs.mode).map_err(err)?;
        write_json(
            &self.dir(Stage::Pairs).join("selection.json"),
            &json!({"seed": self.seed(), "selection": sel}),
        )
    }

    fn plan(&self, sel: &PairSelection) -> SynthesisPlan {
        let mut plan = SynthesisPlan::from_selection(sel, self.cfg.synth.provenance);
        if let CombosConfig::Explicit(c) = &self.cfg.synth.combos {
            plan.combos = ComboRule::Explicit(c.clone());
        }
        if let Some(t) = self.cfg.synth.target_new_identities {
            plan.target_new_identities = t;
        }
        plan
    }

    fn synth(&self) -> StageResult<()> {
        let set = self.input_set()?;
        #[derive(Deserialize)]
        struct Sel {
            selection: PairSelection,
        }
        let sel: Sel = read_json(&self.dir(Stage::Pairs).join("selection.json"))?;
        let plan = self.plan(&sel.selection);
        let out = generate_identities(&set, &plan).map_err(err)?;
        let dir = self.dir(Stage::Synth);
        let faces = dir.join("faces");
        std::fs::create_dir_all(&faces).map_err(err)?;
        for s in &out.identities {
            let f = &s.face;
            write_ply(&faces.join(format!("{}.ply", scan_id(f.identity_id, f.expression_id))), &f.cloud).map_err(err)?;
        }
        let plan_json = serde_json::to_value(&plan).map_err(err)?;
        write_json(
            &dir.join("provenance.json"),
            &json!({
                "seed": self.seed(),
                "plan_hash": hash_json(&plan_json),
                "plan": plan_json,
                "identities": out.identity_count(),
                "skipped_pairs": out.skipped_pairs,
                "records": out.records(),
            }),
        )
    }

    /// Real faces (when configured) and synthetic faces, ordered by
    /// (identity, expression).
    fn corpus(&self) -> StageResult<Vec<CorrespondedFace>> {
        let mut faces = if self.cfg.synth.include_real {
            self.input_set()?.into_faces()
        } else {
            Vec::new()
        };
        faces.extend(load_faces(&scan_files(&self.dir(Stage::Synth).join("faces"))?)?);
        faces.sort_by_key(|f| (f.identity_id, f.expression_id));
        Ok(faces)
    }

    fn poses(&self) -> StageResult<Vec<CameraPose>> {
        let v = &self.cfg.views;
        let layout = if v.poses.is_empty() {
            CameraLayout::Paper15
        } else {
            CameraLayout::Custom(
                v.poses
                    .iter()
                    .map(|p| CameraPose::new(p.longitude, p.latitude, v.radius))
                    .collect::<Result<_, _>>()
                    .map_err(err)?,
            )
        };
        camera_poses(&layout, v.radius).map_err(err)
    }

    fn views(&self, keep_partial: bool) -> StageResult<()> {
        let faces = self.corpus()?;
        let poses = self.poses()?;
        let total = faces.len() * poses.len();
        let kept = match self.cfg.views.max_views {
            0 => (0..total).collect(),
            k => thin_indices(total, k, self.seed()),
        };
        let dir = self.dir(Stage::Views);
        let seed = self.seed();
        let exponent = self.cfg.views.radius_exponent;
        let entries = par::map(&kept, |&c| -> StageResult<Value> {
            let face = &faces[c / poses.len()];
            let pose = poses[c % poses.len()];
            let scan = scan_id(face.identity_id, face.expression_id);
            let stem = format!("{scan}_{:+04}_{:+03}", pose.longitude as i64, pose.latitude as i64);
            let (ply, meta) = (dir.join(format!("{stem}.ply")), dir.join(format!("{stem}.json")));
            if !(keep_partial && ply.exists() && meta.exists()) {
                let v = render_view(&face.cloud, &pose, exponent, &scan).map_err(|e| format!("{stem}: {e}"))?;
                write_ply(&ply, &v.cloud).map_err(err)?;
                write_json(&meta, &with_seed(&v.sidecar(), seed)?)?;
            }
            Ok(json!({"stem": stem, "scan_id": scan, "longitude": pose.longitude, "latitude": pose.latitude, "radius": pose.radius}))
        });
        let entries: Vec<Value> = entries.into_iter().collect::<Result<_, _>>()?;
        write_json(
            &dir.join("index.json"),
            &json!({"seed": seed, "candidates": total, "kept": kept.len(), "views": entries}),
        )
    }

    fn images(&self, keep_partial: bool) -> StageResult<()> {
        #[derive(Deserialize)]
        struct Entry {
            stem: String,
            scan_id: String,
            longitude: f64,
            latitude: f64,
            radius: f64,
        }
        #[derive(Deserialize)]
        struct Index {
            views: Vec<Entry>,
        }
        let index: Index = read_json(&self.dir(Stage::Views).join("index.json"))?;
        let spec = self.cfg.images.spec();
        let k = self.cfg.images.normals_k;
        let with_mask = self.cfg.images.write_mask;
        let (src, dir) = (self.dir(Stage::Views), self.dir(Stage::Images));
        let seed = self.seed();
        let results = par::map(&index.views, |e| -> StageResult<Result<String, Value>> {
            let (png, meta) = (dir.join(format!("{}.png", e.stem)), dir.join(format!("{}.json", e.stem)));
            let depth = dir.join(format!("{}.depth", e.stem));
            if keep_partial && png.exists() && meta.exists() && depth.exists() {
                return Ok(Ok(e.stem.clone()));
            }
            let attempt = || -> Result<faceforge_core::render::FaceImage3C, String> {
                let cloud: PointCloud = load_cloud_auto(&src.join(format!("{}.ply", e.stem))).map_err(err)?;
                let cloud = compute_normals(&cloud, k).map_err(err)?.cloud;
                let mut img = render_cloud(&cloud, &spec, None, &e.scan_id).map_err(err)?;
                img.meta.pose = Some(CameraPose::new(e.longitude, e.latitude, e.radius).map_err(err)?);
                Ok(img)
            };
            match attempt() {
                Ok(img) => {
                    std::fs::write(&png, img.png_bytes().map_err(err)?).map_err(err)?;
                    std::fs::write(&depth, img.depth_bytes()).map_err(err)?;
                    if with_mask {
                        std::fs::write(dir.join(format!("{}_mask.png", e.stem)), img.mask_png_bytes().map_err(err)?)
                            .map_err(err)?;
                    }
                    let mut m = with_seed(&img.meta, seed)?;
                    m["view"] = json!(e.stem);
                    write_json(&meta, &m)?;
                    Ok(Ok(e.stem.clone()))
                }
                Err(msg) => {
                    log::warn!("image {} skipped: {msg}", e.stem);
                    Ok(Err(json!({"stem": e.stem, "error": msg})))
                }
            }
        });
        let mut images = Vec::new();
        let mut failed = Vec::new();
        for r in results {
            match r? {
                Ok(stem) => images.push(stem),
                Err(f) => failed.push(f),
            }
        }
        if images.is_empty() && !index.views.is_empty() {
            return Err("every image failed".into());
        }
        write_json(&dir.join("index.json"), &json!({"seed": seed, "images": images, "failed": failed}))
    }

    fn kstats(&self) -> StageResult<()> {
        #[derive(Deserialize)]
        struct Index {
            images: Vec<String>,
        }
        #[derive(Deserialize)]
        struct Meta {
            pixel_pitch_mm: f64,
        }
        let src = self.dir(Stage::Images);
        let index: Index = read_json(&src.join("index.json"))?;
        let imgs = index
            .images
            .iter()
            .map(|stem| -> StageResult<DepthImage> {
                let path = src.join(format!("{stem}.depth"));
                let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let (w, h, depth) = parse_depth(&bytes).ok_or_else(|| format!("{}: malformed depth file", path.display()))?;
                let meta: Meta = read_json(&src.join(format!("{stem}.json")))?;
                Ok(DepthImage::new(w, h, depth, meta.pixel_pitch_mm))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let report = kernel_report(&imgs, &self.cfg.kstats.kernel_sizes, self.cfg.kstats.kappa).map_err(err)?;
        let dir = self.dir(Stage::Kstats);
        write_json(&dir.join("report.json"), &with_seed(&report, self.seed())?)?;
        std::fs::write(dir.join("report.csv"), report.to_csv()).map_err(err)
    }

    fn eval(&self) -> StageResult<()> {
        let e = &self.cfg.eval;
        let dir = self.dir(Stage::Eval);
        let (manifest, base, features) = match &e.synthetic {
            Some(s) => {
                let cfg = SyntheticFeatures {
                    identities: s.identities,
                    probes_per_identity: s.probes_per_identity,
                    dim: s.dim,
                    noise: s.noise,
                    seed: self.seed(),
                };
                let (set, m) = generate(&cfg, "features.bin").map_err(err)?;
                set.save(&dir.join("features.bin")).map_err(err)?;
                m.save(&dir.join("manifest.json")).map_err(err)?;
                (m, dir.clone(), None)
            }
            None => {
                let path = e.manifest.as_ref().ok_or("eval needs a manifest")?;
                let m = EvalManifest::load(path).map_err(|x| format!("{}: {x}", path.display()))?;
                (m, path.parent().unwrap_or(Path::new(".")).to_path_buf(), e.features.clone())
            }
        };
        let (probes, gallery) = manifest.load_features(&base, features.as_deref()).map_err(err)?;
        let scores = match_all(&probes, &gallery).map_err(err)?;
        let mut summary = serde_json::Map::new();
        summary.insert("seed".into(), json!(self.seed()));
        summary.insert("mode".into(), json!(e.mode));
        if matches!(e.mode, EvalMode::Closed | EvalMode::Both) {
            let r = closed_world(&scores, &manifest, &e.far_grid).map_err(err)?;
            std::fs::write(dir.join("cmc.csv"), r.cmc.to_csv()).map_err(err)?;
            std::fs::write(dir.join("roc.csv"), r.roc.to_csv()).map_err(err)?;
            summary.insert("closed_world".into(), summary_json(&r));
        }
        if matches!(e.mode, EvalMode::Open | EvalMode::Both) {
            let ids: Vec<String> = manifest.gallery.iter().map(|g| g.subject.clone()).collect();
            let target = match e.unknowns {
                Some(u) => UnknownTarget::Count(u),
                None => UnknownTarget::Openness(e.openness),
            };
            let folds = make_open_world_folds(&ids, target, e.folds, self.seed()).map_err(err)?;
            let s = open_world_folds_eval(&scores, &manifest, &folds, &tau_grid(e.tau_steps)).map_err(err)?;
            std::fs::write(dir.join("dir.csv"), s.curve.to_csv()).map_err(err)?;
            write_json(&dir.join("folds.json"), &s.folds)?;
            summary.insert(
                "open_world".into(),
                json!({
                    "unknown_count": s.unknown_count,
                    "openness": s.openness,
                    "folds": s.folds.len(),
                    "fold_means": s.fold_means,
                    "mean_rank1": s.mean_rank1,
                    "std_rank1": s.std_rank1,
                }),
            );
        }
        write_json(&dir.join("summary.json"), &Value::Object(summary))
    }
}
