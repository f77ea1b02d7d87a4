//! Closed-world identification (CMC) and verification (ROC) curves.

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::matching::ScoreMatrix;

/// `rates[r - 1]` is the fraction of probes whose true entry ranks within the
/// top `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    pub rates: Vec<f64>,
}

impl CmcCurve {
    pub fn rank(&self, r: usize) -> f64 {
        self.rates[r.clamp(1, self.rates.len()) - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank,rate\n");
        for (i, r) in self.rates.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, r));
        }
        s
    }
}

/// 1-based rank of gallery column `t` in row `p`. Columns with a higher score,
/// or an equal score and a lower index, rank ahead.
pub fn rank_of(scores: &ScoreMatrix, p: usize, t: usize) -> usize {
    let row = scores.row(p);
    let s = row[t];
    1 + row
        .iter()
        .enumerate()
        .filter(|&(g, &v)| v > s || (v == s && g < t))
        .count()
}

/// `truth[p]` is the gallery column of probe `p`.
pub fn cmc(scores: &ScoreMatrix, truth: &[Option<usize>]) -> Result<CmcCurve, EvalError> {
    let g = scores.gallery_count();
    let mut hits = vec![0usize; g];
    for (p, t) in truth.iter().enumerate() {
        let t = t.ok_or(EvalError::UnknownProbeInClosedWorld(p))?;
        hits[rank_of(scores, p, t) - 1] += 1;
    }
    let n = truth.len().max(1) as f64;
    let mut acc = 0;
    let rates = hits
        .into_iter()
        .map(|h| {
            acc += h;
            acc as f64 / n
        })
        .collect();
    Ok(CmcCurve { rates })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub vr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// One point per distinct score, threshold descending; the first point has
    /// an infinite threshold and accepts nothing.
    pub points: Vec<RocPoint>,
    /// `(far, vr)` at the requested FAR grid.
    pub at_far: Vec<(f64, f64)>,
    pub genuine: usize,
    pub impostor: usize,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("far,vr\n");
        for (f, v) in &self.at_far {
            s.push_str(&format!("{f},{v}\n"));
        }
        s
    }

    /// Largest verification rate reachable at or below `far` on the operating
    /// points, linearly interpolated between neighboring FAR values.
    pub fn vr_at(&self, far: f64) -> f64 {
        let mut env: Vec<(f64, f64)> = Vec::new();
        for p in &self.points {
            match env.last_mut() {
                Some(last) if last.0 == p.far => last.1 = last.1.max(p.vr),
                _ => env.push((p.far, p.vr)),
            }
        }
        let i = env.partition_point(|e| e.0 <= far);
        if i == 0 {
            return 0.0;
        }
        let (f0, v0) = env[i - 1];
        match env.get(i) {
            Some(&(f1, v1)) if f0 < far => v0 + (v1 - v0) * (far - f0) / (f1 - f0),
            _ => v0,
        }
    }
}

pub const DEFAULT_FAR_GRID: [f64; 10] = [0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0];

/// Genuine pairs are (probe, its true column); every other (probe, column)
/// pair, including all pairs of unknown probes, is an impostor.
pub fn roc(scores: &ScoreMatrix, truth: &[Option<usize>], far_grid: &[f64]) -> Result<RocCurve, EvalError> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (p, t) in truth.iter().enumerate() {
        for (g, &s) in scores.row(p).iter().enumerate() {
            if *t == Some(g) {
                genuine.push(s);
            } else {
                impostor.push(s);
            }
        }
    }
    if genuine.is_empty() {
        return Err(EvalError::NoGenuinePairs);
    }
    genuine.sort_by(|a, b| b.total_cmp(a));
    impostor.sort_by(|a, b| b.total_cmp(a));
    let mut thresholds: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (ng, ni) = (genuine.len() as f64, impostor.len().max(1) as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        vr: 0.0,
    }];
    let (mut gi, mut ii) = (0, 0);
    for t in thresholds {
        while gi < genuine.len() && genuine[gi] >= t {
            gi += 1;
        }
        while ii < impostor.len() && impostor[ii] >= t {
            ii += 1;
        }
        points.push(RocPoint {
            threshold: t,
            far: ii as f64 / ni,
            vr: gi as f64 / ng,
        });
    }
    let mut curve = RocCurve {
        points,
        at_far: Vec::new(),
        genuine: genuine.len(),
        impostor: impostor.len(),
    };
    curve.at_far = far_grid.iter().map(|&f| (f, curve.vr_at(f))).collect();
    Ok(curve)
}
