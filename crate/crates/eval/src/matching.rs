//! Cosine similarity between probe and gallery vectors.

use faceforge_core::par;

use crate::error::EvalError;

/// Row-major `probes x gallery` similarity scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    probes: usize,
    gallery: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let gallery = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == gallery), "ragged score rows");
        Self {
            probes: rows.len(),
            gallery,
            scores: rows.concat(),
        }
    }

    pub fn probe_count(&self) -> usize {
        self.probes
    }

    pub fn gallery_count(&self) -> usize {
        self.gallery
    }

    pub fn get(&self, p: usize, g: usize) -> f64 {
        self.scores[p * self.gallery + g]
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.scores[p * self.gallery..(p + 1) * self.gallery]
    }

    /// Best-scoring gallery column of a probe among `columns`, lowest index on
    /// ties.
    pub fn top1_among(&self, p: usize, columns: &[usize]) -> Option<(usize, f64)> {
        let row = self.row(p);
        let mut best: Option<(usize, f64)> = None;
        for &g in columns {
            if best.is_none_or(|(_, s)| row[g] > s) {
                best = Some((g, row[g]));
            }
        }
        best
    }

    pub fn top1(&self, p: usize) -> Option<(usize, f64)> {
        let row = self.row(p);
        let mut best: Option<(usize, f64)> = None;
        for (g, &s) in row.iter().enumerate() {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((g, s));
            }
        }
        best
    }
}

fn norm(v: &[f32], what: impl Fn() -> String) -> Result<f64, EvalError> {
    let n = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        Err(EvalError::ZeroVector(what()))
    } else {
        Ok(n)
    }
}

/// `score(p, g) = <p, g> / (|p| |g|)`, accumulated in f64 and clamped to
/// `[-1, 1]`.
pub fn match_all<P: AsRef<[f32]> + Sync, G: AsRef<[f32]> + Sync>(
    probes: &[P],
    gallery: &[G],
) -> Result<ScoreMatrix, EvalError> {
    let dim = probes
        .first()
        .map(|p| p.as_ref().len())
        .or_else(|| gallery.first().map(|g| g.as_ref().len()))
        .unwrap_or(0);
    for v in probes.iter().map(AsRef::as_ref).chain(gallery.iter().map(AsRef::as_ref)) {
        if v.len() != dim {
            return Err(EvalError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    let pn: Vec<f64> = probes
        .iter()
        .enumerate()
        .map(|(i, p)| norm(p.as_ref(), || format!("probe {i}")))
        .collect::<Result<_, _>>()?;
    let gn: Vec<f64> = gallery
        .iter()
        .enumerate()
        .map(|(i, g)| norm(g.as_ref(), || format!("gallery entry {i}")))
        .collect::<Result<_, _>>()?;
    let rows = par::map_range(probes.len(), |p| {
        let pv = probes[p].as_ref();
        gallery
            .iter()
            .zip(&gn)
            .map(|(g, gn)| {
                let dot: f64 = pv.iter().zip(g.as_ref()).map(|(&a, &b)| a as f64 * b as f64).sum();
                (dot / (pn[p] * gn)).clamp(-1.0, 1.0)
            })
            .collect::<Vec<f64>>()
    });
    Ok(ScoreMatrix {
        probes: probes.len(),
        gallery: gallery.len(),
        scores: rows.concat(),
    })
}
