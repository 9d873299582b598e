//! Property checks over the simplex, KL, ranking metric and fold plans.

use std::collections::HashSet;

use mcqdiff::corpus::{split_folds_k, Provenance};
use mcqdiff::eval::{match_metric, mse, r_squared};
use mcqdiff::training::kl_loss;
use mcqdiff::{Corpus, Mcq, SelectionDistribution};
use proptest::prelude::*;

fn simplex() -> impl Strategy<Value = SelectionDistribution> {
    prop::array::uniform4(0.001f64..1.0).prop_map(|w| SelectionDistribution::from_weights(w).unwrap())
}

fn brute_match(pred: &[f64], gt: &[f64]) -> Option<f64> {
    let (mut hits, mut total) = (0u32, 0u32);
    for i in 0..gt.len() {
        for j in i + 1..gt.len() {
            if gt[i] != gt[j] {
                total += 1;
                hits += u32::from((pred[i] - pred[j]) * (gt[i] - gt[j]) > 0.0);
            }
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

fn corpus(n: usize) -> Corpus {
    let items = (0..n)
        .map(|i| Mcq {
            id: format!("m{i}"),
            stem: format!("What is {i} + 1?"),
            key: (i + 1).to_string(),
            distractors: [format!("{i}"), format!("{}", i + 2), format!("{}", i + 11)],
            counts: [3, 1, 1, 1],
            difficulty: Some(i as f64 / 10.0),
            labels: None,
        })
        .collect();
    Corpus::new(items, Provenance::default()).unwrap()
}

proptest! {
    #[test]
    fn softmax_lands_on_simplex(scores in prop::array::uniform4(-50.0f64..50.0), shift in -100.0f64..100.0) {
        let p = SelectionDistribution::softmax(scores).unwrap();
        prop_assert!(p.is_on_simplex(1e-9));
        let q = SelectionDistribution::softmax(scores.map(|s| s + shift)).unwrap();
        for (a, b) in p.0.iter().zip(q.0.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_preserves_score_order(scores in prop::array::uniform4(-10.0f64..10.0)) {
        let p = SelectionDistribution::softmax(scores).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if scores[i] > scores[j] {
                    prop_assert!(p.0[i] >= p.0[j]);
                }
            }
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(p in simplex(), q in simplex()) {
        prop_assert!(kl_loss(&p, &q) >= -1e-15);
        prop_assert!(kl_loss(&p, &p).abs() <= 1e-12);
    }

    #[test]
    fn match_agrees_with_brute_force(
        pairs in prop::collection::vec((0u8..8, -5.0f64..5.0), 2..40)
    ) {
        let gt: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let pred: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        match (brute_match(&pred, &gt), match_metric(&pred, &gt)) {
            (Some(want), Ok(got)) => {
                prop_assert_eq!(got, want);
                prop_assert!((0.0..=1.0).contains(&got));
            }
            (None, Err(_)) => {}
            (want, got) => prop_assert!(false, "oracle {:?} vs {:?}", want, got),
        }
    }

    #[test]
    fn perfect_prediction_scores(gt in prop::collection::vec(-3.0f64..3.0, 2..30)) {
        prop_assert_eq!(mse(&gt, &gt).unwrap(), 0.0);
        if gt.iter().any(|g| *g != gt[0]) {
            prop_assert_eq!(r_squared(&gt, &gt).unwrap(), 1.0);
        }
    }

    #[test]
    fn folds_partition_the_corpus(n in 10usize..80, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(n >= 2 * k);
        let c = corpus(n);
        let plan = split_folds_k(&c, seed, k).unwrap();
        prop_assert_eq!(plan.fold_count(), k);
        let mut tested = HashSet::new();
        for f in &plan.folds {
            let train: HashSet<&String> = f.train.iter().collect();
            let val: HashSet<&String> = f.validation.iter().collect();
            let test: HashSet<&String> = f.test.iter().collect();
            prop_assert_eq!(train.len() + val.len() + test.len(), n);
            prop_assert!(train.is_disjoint(&val) && train.is_disjoint(&test) && val.is_disjoint(&test));
            for id in &f.test {
                prop_assert!(tested.insert(id.clone()));
            }
        }
        prop_assert_eq!(tested.len(), n);
        prop_assert_eq!(split_folds_k(&c, seed, k).unwrap(), plan);
    }
}
