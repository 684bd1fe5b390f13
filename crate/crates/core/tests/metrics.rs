mod common;

use common::{map_oracle, random_metric_case, recall_oracle, rmse_oracle};
use cvit::metrics::{map_score, recall, rmse};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn metrics_match_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let (p, t) = random_metric_case(&mut rng);
        assert!((rmse(&p, &t).unwrap() - rmse_oracle(&p, &t)).abs() <= 1e-12);
        match recall_oracle(&p, &t) {
            Some(r) => {
                assert!((recall(&p, &t).unwrap() - r).abs() <= 1e-12);
                assert!((map_score(&p, &t).unwrap() - map_oracle(&p, &t).unwrap()).abs() <= 1e-12);
            }
            None => assert!(recall(&p, &t).is_err() && map_score(&p, &t).is_err()),
        }
    }
}

#[test]
fn perfect_rankings_score_exactly_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let (_, t) = random_metric_case(&mut rng);
        if recall_oracle(&t, &t).is_none() {
            continue;
        }
        assert_eq!(recall(&t, &t).unwrap(), 1.0);
        assert_eq!(map_score(&t, &t).unwrap(), 1.0);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
    }
}

proptest! {
    #[test]
    fn ranking_metrics_ignore_increasing_transforms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, t) = random_metric_case(&mut rng);
        let q: Vec<Vec<f64>> = p.iter().map(|s| s.iter().map(|v| 3.0 * v + 7.0).collect()).collect();
        if recall_oracle(&p, &t).is_some() {
            prop_assert_eq!(recall(&p, &t).unwrap(), recall(&q, &t).unwrap());
            prop_assert_eq!(map_score(&p, &t).unwrap(), map_score(&q, &t).unwrap());
        }
    }

    #[test]
    fn scores_stay_in_unit_interval(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, t) = random_metric_case(&mut rng);
        prop_assert!(rmse(&p, &t).unwrap() >= 0.0);
        if let (Ok(r), Ok(m)) = (recall(&p, &t), map_score(&p, &t)) {
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((0.0..=1.0).contains(&m));
        }
    }
}
