use faceforge_eval::curves::{cmc, roc, DEFAULT_FAR_GRID};
use faceforge_eval::manifest::{EvalManifest, ProbeEntry, UNKNOWN};
use faceforge_eval::matching::{match_all, ScoreMatrix};
use faceforge_eval::openworld::{
    make_open_world_folds, open_world_eval, open_world_folds_eval, openness, tau_grid, unknown_count, OpenWorldSpec,
    UnknownTarget,
};
use faceforge_eval::synthetic::{generate, SyntheticFeatures};
use faceforge_eval::FeatureSet;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rows(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect()).collect()
}

fn setup(ids: usize, probes: usize, noise: f64, seed: u64) -> (EvalManifest, ScoreMatrix) {
    let cfg = SyntheticFeatures { identities: ids, probes_per_identity: probes, dim: 32, noise, seed };
    let (set, m) = generate(&cfg, "f.bin").unwrap();
    let p: Vec<&[f32]> = m.probes.iter().map(|e| set.get(&e.scan).unwrap()).collect();
    let g: Vec<&[f32]> = m.gallery.iter().map(|e| set.get(&e.scan).unwrap()).collect();
    let s = match_all(&p, &g).unwrap();
    (m, s)
}

#[test]
fn scores_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_rows(5, 7, &mut rng);
    let g = random_rows(3, 7, &mut rng);
    let s = match_all(&p, &g).unwrap();
    for i in 0..5 {
        for j in 0..3 {
            let mut dot = 0.0;
            let mut np = 0.0;
            let mut ng = 0.0;
            for k in 0..7 {
                dot += p[i][k] as f64 * g[j][k] as f64;
                np += p[i][k] as f64 * p[i][k] as f64;
                ng += g[j][k] as f64 * g[j][k] as f64;
            }
            assert!((s.get(i, j) - dot / (np.sqrt() * ng.sqrt())).abs() <= 1e-12);
        }
    }
}

fn cmc_oracle(s: &ScoreMatrix, truth: &[Option<usize>]) -> Vec<f64> {
    let g = s.gallery_count();
    let mut ranks = Vec::new();
    for (p, t) in truth.iter().enumerate() {
        let mut order: Vec<usize> = (0..g).collect();
        order.sort_by(|&a, &b| s.get(p, b).partial_cmp(&s.get(p, a)).unwrap().then(a.cmp(&b)));
        ranks.push(order.iter().position(|&x| x == t.unwrap()).unwrap() + 1);
    }
    (1..=g).map(|r| ranks.iter().filter(|&&k| k <= r).count() as f64 / ranks.len() as f64).collect()
}

#[test]
fn cmc_fifty_by_five_matches_sort_oracle() {
    let (m, s) = setup(50, 5, 1.0, 17);
    assert_eq!((s.probe_count(), s.gallery_count()), (250, 50));
    let c = cmc(&s, &m.truth()).unwrap();
    assert_eq!(c.rates, cmc_oracle(&s, &m.truth()));
    assert!(c.rates.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*c.rates.last().unwrap(), 1.0);
    assert!(c.rank(1) < 1.0);
}

#[test]
fn cmc_with_tied_scores_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..12).map(|_| rng.random_range(0..4) as f64 / 4.0).collect()).collect();
    let s = ScoreMatrix::from_rows(rows);
    let truth: Vec<Option<usize>> = (0..40).map(|p| Some(p % 12)).collect();
    assert_eq!(cmc(&s, &truth).unwrap().rates, cmc_oracle(&s, &truth));
}

#[test]
fn identical_features_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = random_rows(20, 16, &mut rng);
    let s = match_all(&g, &g).unwrap();
    let truth: Vec<Option<usize>> = (0..20).map(Some).collect();
    assert_eq!(cmc(&s, &truth).unwrap().rank(1), 1.0);
}

#[test]
fn roc_matches_exhaustive_thresholds() {
    let (m, s) = setup(50, 5, 1.0, 23);
    let truth = m.truth();
    let r = roc(&s, &truth, &DEFAULT_FAR_GRID).unwrap();
    let mut gen = Vec::new();
    let mut imp = Vec::new();
    for p in 0..s.probe_count() {
        for g in 0..s.gallery_count() {
            if truth[p] == Some(g) { gen.push(s.get(p, g)) } else { imp.push(s.get(p, g)) }
        }
    }
    let mut all: Vec<f64> = gen.iter().chain(&imp).copied().collect();
    all.sort_by(|a, b| b.partial_cmp(a).unwrap());
    all.dedup();
    assert_eq!(r.points.len(), all.len() + 1);
    for (pt, t) in r.points[1..].iter().zip(&all) {
        assert_eq!(pt.threshold, *t);
        assert_eq!(pt.vr, gen.iter().filter(|&&x| x >= *t).count() as f64 / gen.len() as f64);
        assert_eq!(pt.far, imp.iter().filter(|&&x| x >= *t).count() as f64 / imp.len() as f64);
    }
    assert!(r.points.windows(2).all(|w| w[1].far >= w[0].far && w[1].vr >= w[0].vr));
    assert_eq!(r.at_far.last().unwrap().1, 1.0);
}

#[test]
fn chance_scores_give_vr_near_far() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let rows: Vec<Vec<f64>> = (0..400).map(|_| (0..50).map(|_| rng.random::<f64>()).collect()).collect();
    let s = ScoreMatrix::from_rows(rows);
    let truth: Vec<Option<usize>> = (0..400).map(|p| Some(p % 50)).collect();
    let r = roc(&s, &truth, &[]).unwrap();
    for p in &r.points {
        assert!((p.vr - p.far).abs() < 0.08, "{p:?}");
    }
}

#[test]
fn table_openness_columns() {
    assert!((openness(1581, 1853).unwrap() - 0.040).abs() <= 0.005);
    assert!((openness(261, 1853).unwrap() - 0.503).abs() <= 0.005);
    // Closest-openness rule versus the published unknown counts.
    assert_eq!(unknown_count(1853, UnknownTarget::Openness(0.04)).unwrap(), 269);
    assert_eq!(unknown_count(1853, UnknownTarget::Count(272)).unwrap(), 272);
}

#[test]
fn folds_reproducible() {
    let ids: Vec<String> = (0..1853).map(|i| format!("s{i}")).collect();
    let a = make_open_world_folds(&ids, UnknownTarget::Count(272), 10, 77).unwrap();
    let b = make_open_world_folds(&ids, UnknownTarget::Count(272), 10, 77).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|f| f.unknown_ids.len() == 272 && f.n_target == 1581 && f.n_test == 1853));
    assert!(a.windows(2).all(|w| w[0].unknown_ids != w[1].unknown_ids));
    assert_ne!(a, make_open_world_folds(&ids, UnknownTarget::Count(272), 10, 78).unwrap());
}

fn spec_with(unknown: Vec<String>, n: usize) -> OpenWorldSpec {
    OpenWorldSpec { n_target: n - unknown.len(), n_test: n, unknown_ids: unknown, fold: 0, seed: 0 }
}

#[test]
fn full_acceptance_equals_rank_one() {
    let (m, s) = setup(50, 5, 1.0, 41);
    let c = cmc(&s, &m.truth()).unwrap();
    let dir = open_world_eval(&s, &m, &spec_with(vec![], 50), &[1.0]).unwrap();
    assert_eq!(dir.correct[0], c.rank(1));
}

#[test]
fn zero_acceptance_counts_unknowns() {
    let (m, s) = setup(20, 3, 0.8, 43);
    let unknown: Vec<String> = m.gallery[..5].iter().map(|g| g.subject.clone()).collect();
    let dir = open_world_eval(&s, &m, &spec_with(unknown, 20), &[0.0]).unwrap();
    assert_eq!(dir.correct[0], 15.0 / 60.0);
}

/// Accepts a probe when fewer than k probes have a strictly higher top score.
fn open_oracle(s: &ScoreMatrix, m: &EvalManifest, unknown: &[String], taus: &[f64]) -> Vec<f64> {
    let kept: Vec<usize> = (0..m.gallery.len()).filter(|&g| !unknown.contains(&m.gallery[g].subject)).collect();
    let mut best = Vec::new();
    for p in 0..s.probe_count() {
        let mut b = kept[0];
        for &g in &kept {
            if s.get(p, g) > s.get(p, b) {
                b = g;
            }
        }
        best.push((b, s.get(p, b)));
    }
    let n = best.len();
    taus.iter()
        .map(|&tau| {
            let k = (tau * n as f64).round() as usize;
            let mut ok = 0;
            for (p, &(g, sc)) in best.iter().enumerate() {
                let higher = best.iter().filter(|x| x.1 > sc).count();
                let accepted = higher < k;
                let subj = &m.probes[p].subject;
                let known = subj != UNKNOWN && !unknown.contains(subj);
                if (known && accepted && m.gallery[g].subject == *subj) || (!known && !accepted) {
                    ok += 1;
                }
            }
            ok as f64 / n as f64
        })
        .collect()
}

#[test]
fn twenty_ids_five_unknown_matches_oracle() {
    let (m, s) = setup(20, 4, 1.2, 47);
    let unknown: Vec<String> = ["id0003", "id0007", "id0011", "id0012", "id0019"].map(String::from).to_vec();
    let taus = tau_grid(11);
    let dir = open_world_eval(&s, &m, &spec_with(unknown.clone(), 20), &taus).unwrap();
    assert_eq!(dir.correct, open_oracle(&s, &m, &unknown, &taus));
}

#[test]
fn explicit_unknown_probes_and_ties() {
    let (mut m, _) = setup(4, 1, 0.5, 3);
    m.probes.push(ProbeEntry { subject: UNKNOWN.into(), scan: "x".into(), feature_file: "f.bin".into() });
    let s = ScoreMatrix::from_rows(vec![
        vec![0.9, 0.1, 0.1, 0.1],
        vec![0.5, 0.5, 0.1, 0.1],
        vec![0.1, 0.1, 0.5, 0.1],
        vec![0.1, 0.1, 0.1, 0.3],
        vec![0.2, 0.2, 0.2, 0.2],
    ]);
    let taus = tau_grid(6);
    let dir = open_world_eval(&s, &m, &spec_with(vec![], 4), &taus).unwrap();
    assert_eq!(dir.correct, open_oracle(&s, &m, &[], &taus));
    // tau 0.4 accepts the top two scores, and the tie at 0.5 lets a third in.
    assert_eq!(dir.correct[2], 3.0 / 5.0);
}

#[test]
fn empty_gallery_after_removal() {
    let (m, s) = setup(3, 1, 0.5, 1);
    let all: Vec<String> = m.gallery.iter().map(|g| g.subject.clone()).collect();
    assert!(open_world_eval(&s, &m, &spec_with(all, 3), &[0.5]).is_err());
}

#[test]
fn fold_summary_averages() {
    let (m, s) = setup(30, 2, 1.0, 5);
    let ids: Vec<String> = m.gallery.iter().map(|g| g.subject.clone()).collect();
    let folds = make_open_world_folds(&ids, UnknownTarget::Openness(0.1), 10, 9).unwrap();
    let sum = open_world_folds_eval(&s, &m, &folds, &tau_grid(101)).unwrap();
    assert_eq!(sum.fold_means.len(), 10);
    assert!((sum.mean_rank1 - sum.curve.mean).abs() < 1e-12);
    assert_eq!(sum.unknown_count, unknown_count(30, UnknownTarget::Openness(0.1)).unwrap());
}

#[test]
fn feature_files_through_manifest() {
    let cfg = SyntheticFeatures { identities: 6, probes_per_identity: 2, dim: 8, noise: 0.3, seed: 4 };
    let (set, m) = generate(&cfg, "feats.bin").unwrap();
    let dir = tempfile::tempdir().unwrap();
    set.save(&dir.path().join("feats.bin")).unwrap();
    m.save(&dir.path().join("m.json")).unwrap();
    let m2 = EvalManifest::load(&dir.path().join("m.json")).unwrap();
    assert_eq!(m2, m);
    let (p, g) = m2.load_features(dir.path(), None).unwrap();
    assert_eq!(p.len(), 12);
    assert_eq!(g[1], set.get("id0001_e0").unwrap());
    let bytes = std::fs::read(dir.path().join("feats.bin")).unwrap();
    assert_eq!(&bytes[..4], b"F3DF");
    let csv: String = set.ids().iter().enumerate().map(|(i, id)| {
        let vals: Vec<String> = set.row(i).iter().map(|v| v.to_string()).collect();
        format!("{id},{}\n", vals.join(","))
    }).collect();
    std::fs::write(dir.path().join("feats.csv"), csv).unwrap();
    let from_csv = FeatureSet::load(&dir.path().join("feats.csv")).unwrap();
    assert_eq!(from_csv, set);
    let (p2, _) = m2.load_features(dir.path(), Some(&dir.path().join("feats.csv"))).unwrap();
    assert_eq!(p2, p);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn openness_increases_as_gallery_shrinks(n in 2usize..3000, a in 1usize..3000) {
        let a = a.min(n - 1).max(1);
        prop_assert!(openness(a, n).unwrap() > openness(a + 1, n).unwrap());
        prop_assert_eq!(openness(n, n).unwrap(), 0.0);
    }

    #[test]
    fn power_of_two_scaling_leaves_scores_unchanged(seed in any::<u64>(), ep in -8i32..8, eg in -8i32..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_rows(6, 10, &mut rng);
        let g = random_rows(4, 10, &mut rng);
        let sp: Vec<Vec<f32>> = p.iter().map(|r| r.iter().map(|v| v * 2f32.powi(ep)).collect()).collect();
        let sg: Vec<Vec<f32>> = g.iter().map(|r| r.iter().map(|v| v * 2f32.powi(eg)).collect()).collect();
        prop_assert_eq!(match_all(&p, &g).unwrap(), match_all(&sp, &sg).unwrap());
    }

    #[test]
    fn positive_scaling_keeps_argmax(seed in any::<u64>(), c in 0.01f32..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_rows(6, 10, &mut rng);
        let g = random_rows(5, 10, &mut rng);
        let sp: Vec<Vec<f32>> = p.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let (a, b) = (match_all(&p, &g).unwrap(), match_all(&sp, &g).unwrap());
        for i in 0..6 {
            prop_assert_eq!(a.top1(i).unwrap().0, b.top1(i).unwrap().0);
        }
    }

    #[test]
    fn cmc_monotone_and_complete(seed in any::<u64>()) {
        let (m, s) = setup(12, 3, 1.5, seed);
        let c = cmc(&s, &m.truth()).unwrap();
        prop_assert!(c.rates.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*c.rates.last().unwrap(), 1.0);
    }
}
