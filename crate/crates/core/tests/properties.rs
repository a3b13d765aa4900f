//! Property tests for the loss representations and the metrics.

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;

use survdsa::data::{read_csv, split_folds_n, ColumnMapping, Subject, SurvivalDataset};
use survdsa::evaluation::{concordance, pairwise_similarity_groups, prediction_error_groups};
use survdsa::loss::{brier_risk, brier_score, brier_score_three_group, empirical_risk_l2, ipcw_l2_risk, TimeScale};
use survdsa::partition::PartitionModel;
use survdsa::survival::{fit_censoring_model, truncate, CensoringKind};

/// Evaluation time inside the observed range that ties no observed time.
fn untied_time(rng: &mut impl Rng, data: &SurvivalDataset) -> f64 {
    let max = data.times().iter().cloned().fold(0.0, f64::max);
    loop {
        let t = rng.random_range(0.0..max);
        if data.times().iter().all(|&x| x != t) {
            return t;
        }
    }
}

fn map_times(data: &SurvivalDataset, f: impl Fn(f64) -> f64) -> SurvivalDataset {
    let subjects = data
        .subjects()
        .iter()
        .map(|s| Subject {
            time: f(s.time),
            ..s.clone()
        })
        .collect();
    SurvivalDataset::new(data.schema().to_vec(), subjects).unwrap()
}

proptest! {
    #[test]
    fn brier_forms_agree(seed in any::<u64>(), n in 2usize..=20) {
        let mut r = rng(seed);
        let data = mixed_dataset(&mut r, n, 1);
        let g = product_limit(&data);
        let t = untied_time(&mut r, &data);
        let psi: Vec<f64> = (0..n).map(|_| r.random()).collect();
        let a = brier_score_three_group(&psi, &data, &g, t).unwrap();
        let b = brier_score(&psi, &data, &g, t).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn brier_is_invariant_to_monotone_time_maps(seed in any::<u64>(), n in 2usize..=20) {
        let mut r = rng(seed);
        let data = mixed_dataset(&mut r, n, 1);
        let t = untied_time(&mut r, &data);
        let model = stump(data.schema().to_vec(), 0, 0.5, r.random(), r.random());
        let base = brier_risk(&model, &data, &product_limit(&data), t).unwrap();
        let maps: [fn(f64) -> f64; 3] = [|x| x * x * x, f64::exp, |x| 5.0 * x + 1.0];
        for f in maps {
            let mapped = map_times(&data, f);
            let v = brier_risk(&model, &mapped, &product_limit(&mapped), f(t)).unwrap();
            prop_assert!((v - base).abs() < 1e-12);
        }
    }

    #[test]
    fn ipcw_without_censoring_is_empirical_risk(seed in any::<u64>(), n in 1usize..=40) {
        let mut r = rng(seed);
        let data = random_dataset(&mut r, n, 2, 0.0);
        let g = fit_censoring_model(&data, CensoringKind::ProductLimit, &[]).unwrap();
        let model = stump(data.schema().to_vec(), 1, r.random(), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        for scale in [TimeScale::Log, TimeScale::Raw] {
            let got = ipcw_l2_risk(&model, &data, &g, scale).unwrap();
            let preds: Vec<f64> = data.subjects().iter().map(|s| model.predict_value(&s.covariates).unwrap()).collect();
            let outcomes: Vec<f64> = data.times().iter().map(|&t| scale.apply(t)).collect();
            let want = empirical_risk_l2(&preds, &outcomes, &vec![1.0; n]).unwrap();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn concordance_is_rank_invariant(obs in prop::collection::vec(0.0f64..10.0, 3..60), seed in any::<u64>()) {
        let mut r = rng(seed);
        let pred: Vec<f64> = obs.iter().map(|_| (r.random_range(0..6) as f64) * 0.7).collect();
        let Ok(a) = concordance(&obs, &pred) else { return Ok(()) };
        for f in [|x: f64| x * x * x + 2.0 * x, |x: f64| x.exp(), |x: f64| 3.0 * x - 7.0] {
            let mapped: Vec<f64> = pred.iter().map(|&p| f(p)).collect();
            let b = concordance(&obs, &mapped).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn pairwise_similarity_ignores_labels(a in prop::collection::vec(0usize..4, 2..40), seed in any::<u64>()) {
        let mut r = rng(seed);
        let b: Vec<usize> = a.iter().map(|_| r.random_range(0..3)).collect();
        let base = pairwise_similarity_groups(&a, &b).unwrap();
        let relabel_a: Vec<usize> = a.iter().map(|&x| 10 + (3 - x) * 7).collect();
        let relabel_b: Vec<usize> = b.iter().map(|&x| [5, 1, 9][x]).collect();
        prop_assert_eq!(base, pairwise_similarity_groups(&relabel_a, &relabel_b).unwrap());
        prop_assert_eq!(pairwise_similarity_groups(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn prediction_error_zero_iff_same_grouping(seed in any::<u64>(), n in 2usize..30) {
        let mut r = rng(seed);
        let times: Vec<f64> = (0..n).map(|_| r.random_range(0.1..5.0)).collect();
        let events = vec![true; n];
        let a: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
        let b: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
        let same = |x: &[usize], y: &[usize]| {
            (0..n).all(|i| (0..n).all(|j| (x[i] == x[j]) == (y[i] == y[j])))
        };
        let relabeled: Vec<usize> = a.iter().map(|&g| (g + 1) % 3).collect();
        prop_assert_eq!(prediction_error_groups(&a, &relabeled, &times, &events).unwrap(), 0.0);
        let lp = prediction_error_groups(&a, &b, &times, &events).unwrap();
        prop_assert_eq!(lp == 0.0, same(&a, &b));
        let perm: Vec<usize> = (0..n).rev().collect();
        let pick = |v: &[usize]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pt: Vec<f64> = perm.iter().map(|&i| times[i]).collect();
        let lp2 = prediction_error_groups(&pick(&a), &pick(&b), &pt, &events).unwrap();
        prop_assert!((lp - lp2).abs() <= 1e-12 * lp.max(1.0));
    }

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..30) {
        let mut r = rng(seed);
        let data = random_dataset(&mut r, n, 3, 0.5);
        let mut buf = Vec::new();
        data.write_csv(&mut buf, "time", "status").unwrap();
        let back = read_csv(buf.as_slice(), &ColumnMapping::new("time", "status")).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn folds_partition_subjects(n in 2usize..200, v in 2usize..10, seed in any::<u64>()) {
        prop_assume!(v <= n);
        let folds = split_folds_n(n, v, seed).unwrap();
        let mut seen = vec![0; n];
        let mut sizes = vec![0; v];
        for f in 0..v {
            let (train, test) = folds.split(f);
            prop_assert_eq!(train.len() + test.len(), n);
            sizes[f] = test.len();
            for i in test {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn censoring_survival_is_non_increasing(seed in any::<u64>(), n in 10usize..80) {
        let mut r = rng(seed);
        let data = mixed_dataset(&mut r, n, 2);
        let mut grid: Vec<f64> = (0..50).map(|_| r.random_range(0.0..5.0)).collect();
        grid.sort_by(f64::total_cmp);
        let w = [r.random::<f64>(), r.random::<f64>()];
        let mut models = vec![product_limit(&data)];
        if let Ok(g) = fit_censoring_model(&data, CensoringKind::ProportionalHazards, &[0, 1]) {
            models.push(g);
        }
        for g in &models {
            for pair in grid.windows(2) {
                prop_assert!(g.evaluate(pair[1], &w) <= g.evaluate(pair[0], &w));
            }
        }
    }

    #[test]
    fn truncation_never_adds_censoring(seed in any::<u64>(), n in 20usize..100) {
        let mut r = rng(seed);
        let rate = r.random_range(0.0..2.0);
        let data = random_dataset(&mut r, n, 1, rate);
        let t = truncate(&data, 0.05).unwrap();
        prop_assert!(t.dataset.censored_fraction() <= data.censored_fraction());
        prop_assert!(t.dataset.times().iter().all(|&x| x <= t.tau));
    }

    #[test]
    fn root_model_risks_are_nonnegative(seed in any::<u64>(), n in 2usize..=20) {
        let mut r = rng(seed);
        let data = mixed_dataset(&mut r, n, 1);
        let g = product_limit(&data);
        let t = untied_time(&mut r, &data);
        let model = PartitionModel::root(data.schema().to_vec(), vec![r.random()]);
        prop_assert!(brier_risk(&model, &data, &g, t).unwrap() >= 0.0);
        prop_assert!(ipcw_l2_risk(&model, &data, &g, TimeScale::Log).unwrap() >= 0.0);
    }
}
