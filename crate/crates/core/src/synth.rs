//! New identities as vertex-wise midpoints of selected face pairs, crossed
//! over the parents' expressions.

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{CorrespondedFace, FaceSet, PointCloud};
use crate::distance::PairSelection;
use crate::error::SynthError;
use crate::par;

/// Vertex-wise midpoint of two corresponded faces.
///
/// The child is labelled with `face_i`'s identity and expression; callers
/// relabel it.
pub fn interpolate_pair(
    face_i: &CorrespondedFace,
    face_j: &CorrespondedFace,
) -> Result<CorrespondedFace, SynthError> {
    if face_i.vertex_count() != face_j.vertex_count() {
        return Err(SynthError::SizeMismatch(face_i.vertex_count(), face_j.vertex_count()));
    }
    let points = face_i
        .cloud
        .points()
        .iter()
        .zip(face_j.cloud.points())
        .map(|(a, b)| Point3::from((a.coords + b.coords) * 0.5))
        .collect();
    Ok(CorrespondedFace::new(
        PointCloud::new(points)?,
        face_i.identity_id,
        face_i.expression_id,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    DissimilarPool,
    SimilarPool,
    Real,
}

/// Which parent expressions are combined for each pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComboRule {
    /// `(0,0)` plus `(e,0)`, `(0,e)`, `(e,e)` for every non-neutral expression
    /// `e` both parents share.
    Default,
    /// The same `(expr_i, expr_j)` list for every pair.
    Explicit(Vec<(u32, u32)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    /// Parent identity pairs in selection order.
    pub pairs: Vec<(u32, u32)>,
    pub combos: ComboRule,
    pub target_new_identities: usize,
    pub provenance: Provenance,
    /// First label handed out; defaults to one above the set's largest id.
    #[serde(default)]
    pub first_identity: Option<u32>,
}

impl SynthesisPlan {
    pub fn from_selection(sel: &PairSelection, provenance: Provenance) -> Self {
        Self {
            pairs: sel.pairs.iter().map(|p| (p.identity_i, p.identity_j)).collect(),
            combos: ComboRule::Default,
            target_new_identities: sel.pairs.len(),
            provenance,
            first_identity: None,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.target_new_identities > self.pairs.len() {
            return Err(SynthError::PlanExhausted {
                requested: self.target_new_identities,
                available: self.pairs.len(),
            });
        }
        if let Some(&(a, b)) = self.pairs.iter().find(|(a, b)| a == b) {
            return Err(SynthError::InvalidPlan(format!("pair ({a}, {b}) repeats an identity")));
        }
        if let ComboRule::Explicit(c) = &self.combos {
            if c.is_empty() {
                return Err(SynthError::InvalidPlan("empty expression combination list".into()));
            }
        }
        Ok(())
    }

    /// Scans available before thinning: identities × expressions × poses.
    pub fn candidate_scans(identities: u64, expressions_per_identity: u64, poses: u64) -> u64 {
        identities * expressions_per_identity * poses
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticIdentity {
    pub face: CorrespondedFace,
    pub parent_ids: (u32, u32),
    pub parent_expressions: (u32, u32),
    pub provenance: Provenance,
}

/// Serializable provenance line for one synthetic scan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub identity_id: u32,
    pub expression_id: u32,
    pub parents: (u32, u32),
    pub parent_expressions: (u32, u32),
    pub provenance: Provenance,
}

impl From<&SyntheticIdentity> for ProvenanceRecord {
    fn from(s: &SyntheticIdentity) -> Self {
        Self {
            identity_id: s.face.identity_id,
            expression_id: s.face.expression_id,
            parents: s.parent_ids,
            parent_expressions: s.parent_expressions,
            provenance: s.provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub identities: Vec<SyntheticIdentity>,
    /// Parent pairs skipped because no expression combination was available.
    pub skipped_pairs: Vec<(u32, u32)>,
}

impl SyntheticSet {
    pub fn to_face_set(&self) -> Result<FaceSet, SynthError> {
        Ok(FaceSet::new_unlabelled(
            self.identities.iter().map(|s| s.face.clone()).collect(),
        )?)
    }

    pub fn records(&self) -> Vec<ProvenanceRecord> {
        self.identities.iter().map(ProvenanceRecord::from).collect()
    }

    pub fn identity_count(&self) -> usize {
        let mut ids: Vec<u32> = self.identities.iter().map(|s| s.face.identity_id).collect();
        ids.dedup();
        ids.len()
    }
}

fn combos_for(set: &FaceSet, a: u32, b: u32, rule: &ComboRule) -> Vec<(u32, u32)> {
    let ea = set.expressions_of(a);
    let eb = set.expressions_of(b);
    let wanted: Vec<(u32, u32)> = match rule {
        ComboRule::Default => {
            let mut v = vec![(0, 0)];
            for e in ea.iter().filter(|e| **e != 0 && eb.contains(e)) {
                v.extend([(*e, 0), (0, *e), (*e, *e)]);
            }
            v
        }
        ComboRule::Explicit(list) => list.clone(),
    };
    wanted
        .into_iter()
        .filter(|&(x, y)| {
            let ok = ea.contains(&x) && eb.contains(&y);
            if !ok {
                log::warn!("pair ({a}, {b}): combination ({x}, {y}) skipped, expression missing");
            }
            ok
        })
        .collect()
}

/// Produces one new identity per planned pair and one face per available
/// expression combination. Labels are assigned in plan order starting above
/// the set's existing range; output order never depends on scheduling.
pub fn generate_identities(set: &FaceSet, plan: &SynthesisPlan) -> Result<SyntheticSet, SynthError> {
    plan.validate()?;
    let known = set.identity_ids();
    for &(a, b) in &plan.pairs {
        for id in [a, b] {
            if known.binary_search(&id).is_err() {
                return Err(SynthError::InvalidPlan(format!("identity {id} not in face set")));
            }
        }
    }

    // Decide pairs and labels first so the parallel part is pure.
    let mut next_id = plan
        .first_identity
        .unwrap_or_else(|| set.max_identity().map_or(0, |m| m + 1));
    if let Some(max) = set.max_identity() {
        if next_id <= max {
            return Err(SynthError::InvalidPlan(format!(
                "first identity {next_id} collides with existing labels"
            )));
        }
    }
    let mut jobs: Vec<(u32, (u32, u32), Vec<(u32, u32)>)> = Vec::new();
    let mut skipped = Vec::new();
    for &(a, b) in &plan.pairs {
        if jobs.len() == plan.target_new_identities {
            break;
        }
        let combos = combos_for(set, a, b, &plan.combos);
        if combos.is_empty() {
            log::warn!(
                "{}",
                SynthError::MissingExpression {
                    identity: a,
                    expression: 0
                }
            );
            skipped.push((a, b));
            continue;
        }
        jobs.push((next_id, (a, b), combos));
        next_id += 1;
    }
    if jobs.len() < plan.target_new_identities {
        return Err(SynthError::PlanExhausted {
            requested: plan.target_new_identities,
            available: jobs.len(),
        });
    }

    let per_pair: Vec<Result<Vec<SyntheticIdentity>, SynthError>> = par::map(&jobs, |(id, (a, b), combos)| {
        combos
            .iter()
            .enumerate()
            .map(|(k, &(ea, eb))| {
                let fa = set.find(*a, ea).expect("checked above");
                let fb = set.find(*b, eb).expect("checked above");
                let mut child = interpolate_pair(fa, fb)?;
                child.identity_id = *id;
                child.expression_id = k as u32;
                Ok(SyntheticIdentity {
                    face: child,
                    parent_ids: (*a, *b),
                    parent_expressions: (ea, eb),
                    provenance: plan.provenance,
                })
            })
            .collect()
    });
    let mut identities = Vec::new();
    for r in per_pair {
        identities.extend(r?);
    }
    Ok(SyntheticSet {
        identities,
        skipped_pairs: skipped,
    })
}

/// Seeded uniform draw of `keep` indices out of `total` without replacement,
/// returned sorted.
pub fn thin_indices(total: usize, keep: usize, seed: u64) -> Vec<usize> {
    if keep >= total {
        return (0..total).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = rand::seq::index::sample(&mut rng, total, keep).into_vec();
    v.sort_unstable();
    v
}
