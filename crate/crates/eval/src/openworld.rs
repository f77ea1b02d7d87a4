//! Open-world identification with a single sample per gallery identity.

use std::collections::BTreeSet;

use faceforge_core::par;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::manifest::EvalManifest;
use crate::matching::ScoreMatrix;

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_TAU_STEPS: usize = 101;

/// `1 - sqrt(2 * target / (test + target))`.
pub fn openness(n_target: usize, n_test: usize) -> Result<f64, EvalError> {
    if n_target == 0 || n_test == 0 || n_target > n_test {
        return Err(EvalError::InvalidCounts {
            target: n_target,
            test: n_test,
        });
    }
    Ok(1.0 - (2.0 * n_target as f64 / (n_test + n_target) as f64).sqrt())
}

/// Uniform grid of `steps` points on `[0, 1]`.
pub fn tau_grid(steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..steps).map(|i| i as f64 / (steps - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownTarget {
    /// Unknown count whose openness is closest to this value; fewest unknowns
    /// on ties.
    Openness(f64),
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenWorldSpec {
    pub n_target: usize,
    pub n_test: usize,
    pub unknown_ids: Vec<String>,
    pub fold: usize,
    pub seed: u64,
}

impl OpenWorldSpec {
    pub fn openness(&self) -> f64 {
        openness(self.n_target, self.n_test).unwrap_or(f64::NAN)
    }
}

/// Number of unknown identities out of `n` for a target.
pub fn unknown_count(n: usize, target: UnknownTarget) -> Result<usize, EvalError> {
    if n == 0 {
        return Err(EvalError::InvalidCounts { target: 0, test: 0 });
    }
    match target {
        UnknownTarget::Count(u) if u < n => Ok(u),
        UnknownTarget::Count(u) => Err(EvalError::InvalidCounts {
            target: n.saturating_sub(u),
            test: n,
        }),
        UnknownTarget::Openness(t) => {
            let max = openness(1, n)?;
            if !t.is_finite() || t < 0.0 || t > max {
                return Err(EvalError::Unachievable(t));
            }
            let mut best = (0, f64::INFINITY);
            for u in 0..n {
                let d = (openness(n - u, n)? - t).abs();
                if d < best.1 {
                    best = (u, d);
                }
            }
            Ok(best.0)
        }
    }
}

/// Seeded random unknown sets, one per fold. Folds differ from each other
/// whenever enough distinct subsets exist.
pub fn make_open_world_folds(
    identities: &[String],
    target: UnknownTarget,
    folds: usize,
    seed: u64,
) -> Result<Vec<OpenWorldSpec>, EvalError> {
    let n = identities.len();
    let u = unknown_count(n, target)?;
    let distinct_possible = binomial_at_least(n, u, folds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: Vec<BTreeSet<usize>> = Vec::with_capacity(folds);
    let mut out = Vec::with_capacity(folds);
    for fold in 0..folds {
        let set = loop {
            let s: BTreeSet<usize> = sample(&mut rng, n, u).into_iter().collect();
            if !distinct_possible || !seen.contains(&s) {
                break s;
            }
        };
        out.push(OpenWorldSpec {
            n_target: n - u,
            n_test: n,
            unknown_ids: set.iter().map(|&i| identities[i].clone()).collect(),
            fold,
            seed,
        });
        seen.push(set);
    }
    Ok(out)
}

fn binomial_at_least(n: usize, k: usize, bound: usize) -> bool {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c >= bound as u128 {
            return true;
        }
    }
    c >= bound as u128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirCurve {
    pub taus: Vec<f64>,
    /// Fraction of all probes handled correctly at each tau.
    pub correct: Vec<f64>,
    pub mean: f64,
}

impl DirCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,dir\n");
        for (t, c) in self.taus.iter().zip(&self.correct) {
            s.push_str(&format!("{t},{c}\n"));
        }
        s
    }
}

/// Removes the spec's unknown identities from the gallery, then sweeps the
/// acceptance rate. At each tau the `round(tau * P)` probes with the highest
/// top-1 scores are accepted, together with any probe tied with the last one.
pub fn open_world_eval(
    scores: &ScoreMatrix,
    manifest: &EvalManifest,
    spec: &OpenWorldSpec,
    taus: &[f64],
) -> Result<DirCurve, EvalError> {
    let removed: BTreeSet<&str> = spec.unknown_ids.iter().map(String::as_str).collect();
    let kept: Vec<usize> = manifest
        .gallery
        .iter()
        .enumerate()
        .filter(|(_, g)| !removed.contains(g.subject.as_str()))
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        return Err(EvalError::EmptyGalleryAfterRemoval);
    }
    let truth: Vec<Option<usize>> = manifest
        .truth()
        .into_iter()
        .map(|t| t.filter(|g| kept.binary_search(g).is_ok()))
        .collect();
    let top: Vec<(usize, f64)> = (0..scores.probe_count())
        .map(|p| scores.top1_among(p, &kept).expect("gallery not empty"))
        .collect();
    let mut sorted: Vec<f64> = top.iter().map(|t| t.1).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = top.len();
    let correct = taus
        .iter()
        .map(|&tau| {
            if n == 0 {
                return 0.0;
            }
            let k = (tau.clamp(0.0, 1.0) * n as f64).round() as usize;
            let threshold = if k == 0 { f64::INFINITY } else { sorted[k - 1] };
            let ok = top
                .iter()
                .zip(&truth)
                .filter(|((g, s), t)| {
                    let accepted = *s >= threshold;
                    match t {
                        Some(t) => accepted && g == t,
                        None => !accepted,
                    }
                })
                .count();
            ok as f64 / n as f64
        })
        .collect::<Vec<f64>>();
    let mean = if correct.is_empty() {
        0.0
    } else {
        correct.iter().sum::<f64>() / correct.len() as f64
    };
    Ok(DirCurve {
        taus: taus.to_vec(),
        correct,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenWorldSummary {
    pub unknown_count: usize,
    pub openness: f64,
    pub folds: Vec<OpenWorldSpec>,
    pub fold_means: Vec<f64>,
    /// Per-tau mean over folds.
    pub curve: DirCurve,
    pub mean_rank1: f64,
    pub std_rank1: f64,
}

/// Evaluates every fold and averages.
pub fn open_world_folds_eval(
    scores: &ScoreMatrix,
    manifest: &EvalManifest,
    folds: &[OpenWorldSpec],
    taus: &[f64],
) -> Result<OpenWorldSummary, EvalError> {
    let curves = par::map(folds, |f| open_world_eval(scores, manifest, f, taus))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let k = curves.len().max(1) as f64;
    let per_tau: Vec<f64> = (0..taus.len())
        .map(|i| curves.iter().map(|c| c.correct[i]).sum::<f64>() / k)
        .collect();
    let fold_means: Vec<f64> = curves.iter().map(|c| c.mean).collect();
    let mean = fold_means.iter().sum::<f64>() / k;
    let var = fold_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / k;
    let first = folds.first();
    Ok(OpenWorldSummary {
        unknown_count: first.map_or(0, |f| f.unknown_ids.len()),
        openness: first.map_or(0.0, OpenWorldSpec::openness),
        folds: folds.to_vec(),
        fold_means,
        curve: DirCurve {
            taus: taus.to_vec(),
            mean: if per_tau.is_empty() { 0.0 } else { per_tau.iter().sum::<f64>() / per_tau.len() as f64 },
            correct: per_tau,
        },
        mean_rank1: mean,
        std_rank1: var.sqrt(),
    })
}
