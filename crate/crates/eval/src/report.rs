//! Closed-world summaries.

use serde::{Deserialize, Serialize};

use crate::curves::{cmc, roc, CmcCurve, RocCurve};
use crate::error::EvalError;
use crate::manifest::EvalManifest;
use crate::matching::ScoreMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedWorldReport {
    pub probes: usize,
    pub gallery: usize,
    pub rank1: f64,
    pub rank5: f64,
    pub cmc: CmcCurve,
    pub roc: RocCurve,
}

pub fn closed_world(scores: &ScoreMatrix, manifest: &EvalManifest, far_grid: &[f64]) -> Result<ClosedWorldReport, EvalError> {
    let truth = manifest.truth();
    let c = cmc(scores, &truth)?;
    let r = roc(scores, &truth, far_grid)?;
    Ok(ClosedWorldReport {
        probes: scores.probe_count(),
        gallery: scores.gallery_count(),
        rank1: c.rank(1),
        rank5: c.rank(5),
        cmc: c,
        roc: r,
    })
}

/// Summary without the full operating-point list.
pub fn summary_json(report: &ClosedWorldReport) -> serde_json::Value {
    serde_json::json!({
        "probes": report.probes,
        "gallery": report.gallery,
        "rank1": report.rank1,
        "rank5": report.rank5,
        "genuine_pairs": report.roc.genuine,
        "impostor_pairs": report.roc.impostor,
        "vr_at_far": report.roc.at_far.iter().map(|(f, v)| serde_json::json!({"far": f, "vr": v})).collect::<Vec<_>>(),
    })
}
