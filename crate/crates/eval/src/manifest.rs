//! Gallery/probe listings.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::features::FeatureSet;

/// Probe subject label for identities that are never enrolled.
pub const UNKNOWN: &str = "UNKNOWN";

/// How a gallery scan was picked for its subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GalleryRule {
    FirstNeutral,
    FirstAvailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub subject: String,
    pub scan: String,
    pub feature_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<GalleryRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub subject: String,
    pub scan: String,
    pub feature_file: String,
}

impl ProbeEntry {
    pub fn is_unknown(&self) -> bool {
        self.subject == UNKNOWN
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalManifest {
    pub feature_dim: usize,
    pub gallery: Vec<GalleryEntry>,
    pub probes: Vec<ProbeEntry>,
}

/// One scan offered to the manifest builder.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub subject: String,
    pub scan: String,
    pub expression: u32,
    pub feature_file: String,
}

/// Puts the first neutral scan of each subject (input order) in the gallery,
/// falling back to the subject's first scan; every other scan becomes a probe.
/// Gallery order follows first appearance of each subject.
pub fn build_manifest(scans: &[ScanRecord], feature_dim: usize) -> Result<EvalManifest, EvalError> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_subject: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in scans.iter().enumerate() {
        if s.subject == UNKNOWN {
            return Err(EvalError::Manifest(format!("scan {} uses the reserved subject label", s.scan)));
        }
        by_subject
            .entry(s.subject.as_str())
            .or_insert_with(|| {
                order.push(s.subject.as_str());
                Vec::new()
            })
            .push(i);
    }
    let mut chosen = vec![false; scans.len()];
    let mut gallery = Vec::with_capacity(order.len());
    for subject in order {
        let idx = &by_subject[subject];
        let (pick, rule) = match idx.iter().find(|&&i| scans[i].expression == 0) {
            Some(&i) => (i, GalleryRule::FirstNeutral),
            None => (idx[0], GalleryRule::FirstAvailable),
        };
        chosen[pick] = true;
        let s = &scans[pick];
        gallery.push(GalleryEntry {
            subject: s.subject.clone(),
            scan: s.scan.clone(),
            feature_file: s.feature_file.clone(),
            rule: Some(rule),
        });
    }
    let probes = scans
        .iter()
        .zip(&chosen)
        .filter(|(_, c)| !**c)
        .map(|(s, _)| ProbeEntry {
            subject: s.subject.clone(),
            scan: s.scan.clone(),
            feature_file: s.feature_file.clone(),
        })
        .collect();
    let m = EvalManifest {
        feature_dim,
        gallery,
        probes,
    };
    m.validate()?;
    Ok(m)
}

impl EvalManifest {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let m: EvalManifest = serde_json::from_slice(&std::fs::read(path)?)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.feature_dim == 0 {
            return Err(EvalError::Manifest("feature_dim is zero".into()));
        }
        let mut seen = HashMap::new();
        for g in &self.gallery {
            if g.subject == UNKNOWN {
                return Err(EvalError::Manifest("gallery subject cannot be UNKNOWN".into()));
            }
            if seen.insert(g.subject.as_str(), ()).is_some() {
                return Err(EvalError::Manifest(format!("subject {} enrolled twice", g.subject)));
            }
        }
        Ok(())
    }

    pub fn gallery_subjects(&self) -> Vec<&str> {
        self.gallery.iter().map(|g| g.subject.as_str()).collect()
    }

    /// Gallery column of each probe's subject, `None` for unknown probes.
    pub fn truth(&self) -> Vec<Option<usize>> {
        let col: HashMap<&str, usize> = self.gallery.iter().enumerate().map(|(i, g)| (g.subject.as_str(), i)).collect();
        self.probes
            .iter()
            .map(|p| if p.is_unknown() { None } else { col.get(p.subject.as_str()).copied() })
            .collect()
    }

    pub fn is_closed_world(&self) -> bool {
        self.truth().iter().all(Option::is_some)
    }

    /// Distinct probe identities; every unknown probe counts as its own.
    pub fn probe_identity_count(&self) -> usize {
        let mut known: Vec<&str> = self.probes.iter().filter(|p| !p.is_unknown()).map(|p| p.subject.as_str()).collect();
        known.sort_unstable();
        known.dedup();
        known.len() + self.probes.iter().filter(|p| p.is_unknown()).count()
    }

    /// Resolves probe and gallery vectors. Relative feature paths are taken
    /// from `base`; `override_file`, when given, replaces every entry's file.
    pub fn load_features(
        &self,
        base: &Path,
        override_file: Option<&Path>,
    ) -> Result<(Vec<Vec<f32>>, Vec<Vec<f32>>), EvalError> {
        let mut cache: BTreeMap<PathBuf, FeatureSet> = BTreeMap::new();
        let mut fetch = |file: &str, scan: &str| -> Result<Vec<f32>, EvalError> {
            let path = match override_file {
                Some(p) => p.to_path_buf(),
                None => base.join(file),
            };
            if !cache.contains_key(&path) {
                let set = FeatureSet::load(&path)?;
                if set.dim() != self.feature_dim {
                    return Err(EvalError::DimensionMismatch {
                        expected: self.feature_dim,
                        found: set.dim(),
                    });
                }
                cache.insert(path.clone(), set);
            }
            cache[&path]
                .get(scan)
                .map(<[f32]>::to_vec)
                .ok_or_else(|| EvalError::MissingFeature(scan.to_string()))
        };
        let probes = self.probes.iter().map(|p| fetch(&p.feature_file, &p.scan)).collect::<Result<_, _>>()?;
        let gallery = self.gallery.iter().map(|g| fetch(&g.feature_file, &g.scan)).collect::<Result<_, _>>()?;
        Ok((probes, gallery))
    }
}
