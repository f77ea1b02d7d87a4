//! Pairwise shape-distance matrices over a face set and shape-driven pair
//! selection.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::{CorrespondedFace, FaceSet};
use crate::error::TpsError;
use crate::par;
use crate::tps::{self, AffineBasis, BendingMatrix};

const MAGIC: &[u8; 4] = b"FSDM";

/// Symmetric, zero-diagonal matrix of shape distances. Each off-diagonal
/// value is stored once, so `get(i, j)` and `get(j, i)` are bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDistanceMatrix {
    n: usize,
    upper: Vec<f64>,
    face_ids: Vec<u32>,
    subsample: Vec<usize>,
    failed_pairs: usize,
}

/// JSON sidecar accompanying the binary matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSidecar {
    pub face_ids: Vec<u32>,
    pub subsample_indices: Vec<usize>,
    pub failed_pairs: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn upper_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl ShapeDistanceMatrix {
    /// Builds from a full matrix, reading only the strict upper triangle.
    pub fn from_fn(n: usize, face_ids: Vec<u32>, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert_eq!(face_ids.len(), n);
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                upper.push(f(i, j));
            }
        }
        let failed_pairs = upper.iter().filter(|v| !v.is_finite()).count();
        Self {
            n,
            upper,
            face_ids,
            subsample: Vec::new(),
            failed_pairs,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.upper[upper_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.upper[upper_index(self.n, j, i)],
        }
    }

    pub fn face_ids(&self) -> &[u32] {
        &self.face_ids
    }

    pub fn subsample(&self) -> &[usize] {
        &self.subsample
    }

    pub fn failed_pairs(&self) -> usize {
        self.failed_pairs
    }

    /// Number of stored pairs, `N(N−1)/2`.
    pub fn pair_count(&self) -> usize {
        self.upper.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.upper.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        for v in &self.upper {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn sidecar(&self, seed: Option<u64>) -> DistanceSidecar {
        DistanceSidecar {
            face_ids: self.face_ids.clone(),
            subsample_indices: self.subsample.clone(),
            failed_pairs: self.failed_pairs,
            seed,
        }
    }

    /// Writes `<stem>.bin` and `<stem>.json`.
    pub fn save(&self, bin_path: &Path, json_path: &Path, seed: Option<u64>) -> std::io::Result<()> {
        let mut f = fs::File::create(bin_path)?;
        f.write_all(&self.to_bytes())?;
        let json = serde_json::to_vec_pretty(&self.sidecar(seed))?;
        fs::write(json_path, json)
    }

    pub fn load(bin_path: &Path, json_path: &Path) -> std::io::Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(bin_path)?.read_to_end(&mut bytes)?;
        let sidecar: DistanceSidecar = serde_json::from_slice(&fs::read(json_path)?)?;
        Self::from_bytes(&bytes, sidecar)
    }

    pub fn from_bytes(bytes: &[u8], sidecar: DistanceSidecar) -> std::io::Result<Self> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("not a shape distance matrix"));
        }
        let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let count = n * n.saturating_sub(1) / 2;
        if bytes.len() != 12 + 8 * count {
            return Err(bad("matrix body has the wrong length"));
        }
        if sidecar.face_ids.len() != n {
            return Err(bad("sidecar face count does not match matrix"));
        }
        let upper = bytes[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            n,
            upper,
            face_ids: sidecar.face_ids,
            subsample: sidecar.subsample_indices,
            failed_pairs: sidecar.failed_pairs,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceOptions {
    /// Target subsample size `P'`.
    pub subsample_size: usize,
    pub seed: u64,
    pub basis: AffineBasis,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        Self {
            subsample_size: 500,
            seed: 0,
            basis: AffineBasis::Source,
        }
    }
}

/// Shape distances between the neutral representatives of every identity.
///
/// One subsample index set, drawn from the seed on the first representative,
/// is shared by every pair. Pairs whose bending matrix fails get `+∞`.
pub fn pairwise_distances(
    set: &FaceSet,
    opts: &DistanceOptions,
) -> Result<ShapeDistanceMatrix, TpsError> {
    let reps: Vec<&CorrespondedFace> = set.representatives();
    let n = reps.len();
    if n < 2 {
        return Err(TpsError::TooFewFaces(n));
    }
    let subsample =
        tps::farthest_point_subsample(reps[0].cloud.points(), opts.subsample_size, opts.seed);
    let face_ids: Vec<u32> = reps.iter().map(|f| f.identity_id).collect();

    // γ[i][j]: energy to deform i onto j.
    let gamma: Vec<Vec<f64>> = match opts.basis {
        AffineBasis::Source => {
            let mats: Vec<Result<BendingMatrix, TpsError>> =
                par::map(&reps, |f| tps::bending_matrix(f, &subsample));
            for (f, m) in reps.iter().zip(&mats) {
                if let Err(e) = m {
                    log::warn!("bending matrix for identity {} failed: {e}", f.identity_id);
                }
            }
            par::map_range(n, |i| {
                (0..n)
                    .map(|j| match (&mats[i], i == j) {
                        (_, true) => 0.0,
                        (Ok(b), false) => tps::bending_energy(b, reps[j]).unwrap_or(f64::INFINITY),
                        (Err(_), false) => f64::INFINITY,
                    })
                    .collect()
            })
        }
        AffineBasis::Target => par::map_range(n, |i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        tps::directed_energy(reps[i], reps[j], &subsample, AffineBasis::Target)
                            .unwrap_or(f64::INFINITY)
                    }
                })
                .collect()
        }),
    };

    let mut m = ShapeDistanceMatrix::from_fn(n, face_ids, |i, j| {
        tps::symmetrize(gamma[i][j], gamma[j][i])
    });
    m.subsample = subsample;
    if m.failed_pairs > 0 {
        log::warn!("{} of {} pairs failed and were set to +inf", m.failed_pairs, m.pair_count());
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    MostDissimilar,
    MostSimilar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPair {
    /// Row/column indices into the distance matrix, `i < j`.
    pub i: usize,
    pub j: usize,
    pub identity_i: u32,
    pub identity_j: u32,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSelection {
    pub mode: SelectionMode,
    pub m: usize,
    pub pairs: Vec<SelectedPair>,
}

impl PairSelection {
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|p| (p.i, p.j)).collect()
    }
}

/// The `m` largest (or smallest) finite distances. Equal distances are
/// ordered lexicographically by `(i, j)`.
pub fn select_pairs(
    d: &ShapeDistanceMatrix,
    m: usize,
    mode: SelectionMode,
) -> Result<PairSelection, TpsError> {
    let n = d.len();
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(d.pair_count());
    for i in 0..n {
        for j in i + 1..n {
            let v = d.get(i, j);
            if v.is_finite() {
                cand.push((v, i, j));
            }
        }
    }
    if m > cand.len() {
        return Err(TpsError::NotEnoughPairs {
            requested: m,
            available: cand.len(),
        });
    }
    cand.sort_by(|a, b| {
        let by_value = match mode {
            SelectionMode::MostDissimilar => b.0.total_cmp(&a.0),
            SelectionMode::MostSimilar => a.0.total_cmp(&b.0),
        };
        by_value.then((a.1, a.2).cmp(&(b.1, b.2)))
    });
    cand.truncate(m);
    let ids = d.face_ids();
    Ok(PairSelection {
        mode,
        m,
        pairs: cand
            .into_iter()
            .map(|(v, i, j)| SelectedPair {
                i,
                j,
                identity_i: ids[i],
                identity_j: ids[j],
                distance: v,
            })
            .collect(),
    })
}

/// `N(N−1)/2`.
pub fn candidate_pool(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}
