//! Metric implementations against brute-force enumeration oracles on every
//! shape with m <= 6, n <= 4, k <= 3, plus symmetry and invariance
//! properties.

use fdrec_core::data::{DatasetSplit, InteractionMatrix, NormalizationScheme};
use fdrec_core::eval::{
    abs_equality, distribution_gap, equal_opportunity, ndcg_at_k, rank_topk, recall_at_k,
    PredictionMatrix, RankedLists,
};
use proptest::prelude::*;
use rand::Rng;

struct Instance {
    matrix: InteractionMatrix,
    split: DatasetSplit,
    preds: PredictionMatrix,
    labels: Vec<u8>,
}

/// Random instance over the full cell grid: each cell independently
/// unobserved / train / val / test, quantized predictions to force ties.
fn random_instance(m: usize, n: usize, seed: u64) -> Instance {
    let mut rng = fdrec_core::rng::stream(seed, "metric-oracle", 0);
    let mut ds = fdrec_core::data::RatingDataset::default();
    for j in 0..n {
        ds.users
            .insert(j as u32 + 1, fdrec_core::data::UserMeta::default());
    }
    let mut tags = vec![3u8; m * n]; // 3 = unobserved
    for j in 0..n {
        for i in 0..m {
            let r: f64 = rng.random_range(0.0..1.0);
            if r < 0.65 {
                let tag = if r < 0.35 {
                    0
                } else if r < 0.5 {
                    1
                } else {
                    2
                };
                tags[j * m + i] = tag;
                ds.events.push(fdrec_core::data::RatingEvent {
                    user_id: j as u32 + 1,
                    item_id: i as u32,
                    rating: rng.random_range(1..=5) as f64,
                    timestamp: None,
                });
            }
        }
    }
    // Guarantee the matrix covers all m items: pin unseen items on user 1.
    for i in 0..m {
        if !(0..n).any(|j| tags[j * m + i] != 3) {
            tags[i] = 0;
            ds.events.push(fdrec_core::data::RatingEvent {
                user_id: 1,
                item_id: i as u32,
                rating: 3.0,
                timestamp: None,
            });
        }
    }
    let matrix = fdrec_core::data::build_matrix(&ds, NormalizationScheme::MinMax).unwrap();
    let mut split = DatasetSplit {
        n_items: m,
        n_users: n,
        train: vec![0; m * n],
        val: vec![0; m * n],
        test: vec![0; m * n],
        dropped_users: vec![],
    };
    for j in 0..n {
        for i in 0..m {
            // item ids equal row indices here by construction
            let row = matrix.item_row_of(i as u32).unwrap();
            match tags[j * m + i] {
                0 => split.train[j * m + row] = 1,
                1 => split.val[j * m + row] = 1,
                2 => split.test[j * m + row] = 1,
                _ => {}
            }
        }
    }
    let values: Vec<f64> = (0..m * n)
        .map(|_| (rng.random_range(0..6) as f64) * 0.5)
        .collect();
    let mut labels = vec![0u8; n];
    if n >= 2 {
        for l in labels.iter_mut() {
            *l = rng.random_range(0..2);
        }
        // Force both groups nonempty.
        labels[0] = 0;
        if labels.iter().all(|&l| l == 0) {
            labels[n - 1] = 1;
        }
    }
    Instance {
        preds: PredictionMatrix {
            n_items: m,
            n_users: n,
            values,
            normalization: matrix.normalization,
        },
        matrix,
        split,
        labels,
    }
}

// ---- brute-force oracles ----

fn oracle_topk(inst: &Instance, k: usize) -> Vec<Vec<usize>> {
    let m = inst.preds.n_items;
    (0..inst.preds.n_users)
        .map(|j| {
            let mut cands: Vec<usize> = (0..m)
                .filter(|&i| inst.split.train[j * m + i] == 0)
                .collect();
            // Selection by repeated scan: argmax with index tiebreak.
            let mut out = Vec::new();
            while out.len() < k && !cands.is_empty() {
                let mut best = cands[0];
                for &c in &cands {
                    if inst.preds.value(c, j) > inst.preds.value(best, j) {
                        best = c;
                    }
                }
                out.push(best);
                cands.retain(|&c| c != best);
            }
            out
        })
        .collect()
}

fn oracle_recall(inst: &Instance, lists: &[Vec<usize>], k: usize) -> Option<f64> {
    let m = inst.preds.n_items;
    let mut acc = 0.0;
    let mut count = 0usize;
    for j in 0..inst.preds.n_users {
        let positives: Vec<usize> = (0..m).filter(|&i| inst.split.test[j * m + i] == 1).collect();
        if positives.is_empty() {
            continue;
        }
        count += 1;
        let hits = lists[j].iter().filter(|&&i| positives.contains(&i)).count();
        acc += hits as f64 / positives.len().min(k) as f64;
    }
    if count == 0 {
        None
    } else {
        Some(acc / count as f64)
    }
}

fn oracle_ndcg(inst: &Instance, lists: &[Vec<usize>], k: usize) -> Option<f64> {
    let m = inst.preds.n_items;
    let mut acc = 0.0;
    let mut count = 0usize;
    for j in 0..inst.preds.n_users {
        let positives: Vec<usize> = (0..m).filter(|&i| inst.split.test[j * m + i] == 1).collect();
        if positives.is_empty() {
            continue;
        }
        count += 1;
        let mut dcg = 0.0;
        for (rank, item) in lists[j].iter().enumerate() {
            if positives.contains(item) {
                dcg += 1.0 / ((rank as f64) + 2.0).log2();
            }
        }
        let mut idcg = 0.0;
        for rank in 0..positives.len().min(k) {
            idcg += 1.0 / ((rank as f64) + 2.0).log2();
        }
        acc += dcg / idcg;
    }
    if count == 0 {
        None
    } else {
        Some(acc / count as f64)
    }
}

fn oracle_abs_equality(inst: &Instance) -> Option<(f64, f64, f64)> {
    let m = inst.preds.n_items;
    let norm = inst.matrix.normalization;
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for j in 0..inst.preds.n_users {
        for i in 0..m {
            if inst.split.test[j * m + i] == 1 {
                let g = inst.labels[j] as usize;
                let truth = norm.denormalize(inst.matrix.value(i, j));
                sums[g] += (inst.preds.value(i, j) - truth).abs();
                counts[g] += 1;
            }
        }
    }
    if counts[0] == 0 || counts[1] == 0 {
        return None;
    }
    let a = sums[0] / counts[0] as f64;
    let b = sums[1] / counts[1] as f64;
    Some((a, b, (a - b).abs()))
}

fn oracle_equal_opportunity(inst: &Instance, lists: &[Vec<usize>]) -> Option<(f64, f64, f64)> {
    let m = inst.preds.n_items;
    let mut incorrect = [0usize; 2];
    let mut total = [0usize; 2];
    for j in 0..inst.preds.n_users {
        let g = inst.labels[j] as usize;
        for &i in &lists[j] {
            total[g] += 1;
            if inst.split.test[j * m + i] == 0 {
                incorrect[g] += 1;
            }
        }
    }
    if total[0] == 0 || total[1] == 0 {
        return None;
    }
    let ea = incorrect[0] as f64 / total[0] as f64;
    let eb = incorrect[1] as f64 / total[1] as f64;
    Some((ea, eb, (ea - eb).abs().sqrt()))
}

fn oracle_dist_gap(inst: &Instance) -> f64 {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for j in 0..inst.preds.n_users {
        for i in 0..inst.preds.n_items {
            if inst.labels[j] == 0 {
                a.push(inst.preds.value(i, j));
            } else {
                b.push(inst.preds.value(i, j));
            }
        }
    }
    let mut all = a.clone();
    all.extend_from_slice(&b);
    let mut d: f64 = 0.0;
    for &v in &all {
        let fa = a.iter().filter(|&&x| x <= v).count() as f64 / a.len() as f64;
        let fb = b.iter().filter(|&&x| x <= v).count() as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

#[test]
fn all_metrics_match_enumeration_oracles_on_small_grid() {
    let mut checked_rank = 0usize;
    let mut checked_fair = 0usize;
    for m in 1..=6usize {
        for n in 1..=4usize {
            for k in 1..=3usize {
                for rep in 0..6u64 {
                    let seed = (m as u64) << 24 | (n as u64) << 16 | (k as u64) << 8 | rep;
                    let inst = random_instance(m, n, seed);
                    let lists: RankedLists = rank_topk(&inst.preds, &inst.split, k).unwrap();
                    let oracle_lists = oracle_topk(&inst, k);
                    assert_eq!(lists.lists, oracle_lists, "topk mismatch ({m},{n},{k},{rep})");

                    match (recall_at_k(&lists, &inst.split), oracle_recall(&inst, &oracle_lists, k)) {
                        (Ok(got), Some(want)) => {
                            assert_eq!(got, want, "recall mismatch ({m},{n},{k},{rep})");
                            checked_rank += 1;
                        }
                        (Err(_), None) => {}
                        (got, want) => panic!("recall eligibility disagreement: {got:?} vs {want:?}"),
                    }
                    match (ndcg_at_k(&lists, &inst.split), oracle_ndcg(&inst, &oracle_lists, k)) {
                        (Ok(got), Some(want)) => {
                            assert!((got - want).abs() < 1e-15, "ndcg mismatch ({m},{n},{k},{rep})")
                        }
                        (Err(_), None) => {}
                        (got, want) => panic!("ndcg eligibility disagreement: {got:?} vs {want:?}"),
                    }

                    if n >= 2 {
                        match (
                            abs_equality(&inst.preds, &inst.matrix, &inst.split, &inst.labels),
                            oracle_abs_equality(&inst),
                        ) {
                            (Ok(got), Some((wa, wb, gap))) => {
                                assert_eq!(got.mae_a, wa);
                                assert_eq!(got.mae_b, wb);
                                assert_eq!(got.gap, gap);
                                checked_fair += 1;
                            }
                            (Err(_), None) => {}
                            (got, want) => {
                                panic!("abs_equality disagreement: {got:?} vs {want:?}")
                            }
                        }
                        match (
                            equal_opportunity(&lists, &inst.split, &inst.labels),
                            oracle_equal_opportunity(&inst, &oracle_lists),
                        ) {
                            (Ok(got), Some((ea, eb, e))) => {
                                assert_eq!(got.incorrect_rate_a, ea);
                                assert_eq!(got.incorrect_rate_b, eb);
                                assert_eq!(got.e_at_k, e);
                            }
                            (Err(_), None) => {}
                            (got, want) => {
                                panic!("equal_opportunity disagreement: {got:?} vs {want:?}")
                            }
                        }
                        let got = distribution_gap(&inst.preds, &inst.labels).unwrap();
                        assert_eq!(got, oracle_dist_gap(&inst), "KS mismatch ({m},{n},{k},{rep})");
                    }
                }
            }
        }
    }
    // The grid must actually have exercised eligible instances.
    assert!(checked_rank > 100, "too few rank-metric checks: {checked_rank}");
    assert!(checked_fair > 50, "too few fairness checks: {checked_fair}");
}

#[test]
fn hand_ndcg_value_is_one_over_log2_three() {
    // Frozen from the oracle: single relevant item at rank 2 with k = 2.
    let want = 1.0 / 3.0f64.log2();
    assert!((want - 0.6309297535714574).abs() < 1e-12);
}

#[test]
fn group_relabeling_leaves_metrics_unchanged() {
    for seed in 0..10u64 {
        let inst = random_instance(5, 4, 777 + seed);
        let swapped: Vec<u8> = inst.labels.iter().map(|&l| 1 - l).collect();
        let lists = rank_topk(&inst.preds, &inst.split, 2).unwrap();
        if let (Ok(a), Ok(b)) = (
            abs_equality(&inst.preds, &inst.matrix, &inst.split, &inst.labels),
            abs_equality(&inst.preds, &inst.matrix, &inst.split, &swapped),
        ) {
            assert_eq!(a.gap, b.gap);
        }
        if let (Ok(a), Ok(b)) = (
            equal_opportunity(&lists, &inst.split, &inst.labels),
            equal_opportunity(&lists, &inst.split, &swapped),
        ) {
            assert_eq!(a.e_at_k, b.e_at_k);
        }
        let d1 = distribution_gap(&inst.preds, &inst.labels).unwrap();
        let d2 = distribution_gap(&inst.preds, &swapped).unwrap();
        assert_eq!(d1, d2);
        // Rank-based aggregates do not depend on labels at all.
        let r = recall_at_k(&lists, &inst.split);
        let n = ndcg_at_k(&lists, &inst.split);
        if let (Ok(r), Ok(n)) = (r, n) {
            assert!(r >= 0.0 && r <= 1.0);
            assert!(n >= 0.0 && n <= 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Strictly increasing transforms of the scores leave every rank-based
    /// metric unchanged.
    #[test]
    fn monotone_transform_invariance(seed in 0u64..1000) {
        let inst = random_instance(5, 3, 31_000 + seed);
        let lists = rank_topk(&inst.preds, &inst.split, 3).unwrap();

        let mut warped = inst.preds.clone();
        for v in warped.values.iter_mut() {
            *v = (*v * 0.7).exp() + 0.1 * *v; // strictly increasing
        }
        let lists_w = rank_topk(&warped, &inst.split, 3).unwrap();
        prop_assert_eq!(&lists.lists, &lists_w.lists);

        if let (Ok(a), Ok(b)) = (recall_at_k(&lists, &inst.split), recall_at_k(&lists_w, &inst.split)) {
            prop_assert_eq!(a, b);
        }
        if let (Ok(a), Ok(b)) = (ndcg_at_k(&lists, &inst.split), ndcg_at_k(&lists_w, &inst.split)) {
            prop_assert_eq!(a, b);
        }
        if inst.labels.iter().any(|&l| l == 1) {
            if let (Ok(a), Ok(b)) = (
                equal_opportunity(&lists, &inst.split, &inst.labels),
                equal_opportunity(&lists_w, &inst.split, &inst.labels),
            ) {
                prop_assert_eq!(a.e_at_k, b.e_at_k);
            }
        }
    }

    /// Metric ranges: recall, ndcg in [0,1]; E@k in [0,1]; KS gap in [0,1].
    #[test]
    fn metric_ranges(seed in 0u64..1000) {
        let inst = random_instance(6, 4, 62_000 + seed);
        let lists = rank_topk(&inst.preds, &inst.split, 2).unwrap();
        if let Ok(r) = recall_at_k(&lists, &inst.split) {
            prop_assert!((0.0..=1.0).contains(&r));
        }
        if let Ok(n) = ndcg_at_k(&lists, &inst.split) {
            prop_assert!((0.0..=1.0).contains(&n));
        }
        if inst.labels.iter().any(|&l| l == 1) {
            if let Ok(eo) = equal_opportunity(&lists, &inst.split, &inst.labels) {
                prop_assert!((0.0..=1.0).contains(&eo.e_at_k));
            }
            let d = distribution_gap(&inst.preds, &inst.labels).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            if let Ok(g) = abs_equality(&inst.preds, &inst.matrix, &inst.split, &inst.labels) {
                prop_assert!(g.gap >= 0.0);
            }
        }
    }
}
