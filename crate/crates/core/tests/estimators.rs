mod common;

use common::noisyobs;
use prl_core::estimators::{estimate_scores, estimate_with_folds, fold_assignment, score, EstimatorSpec, ScoreKind, Z_975};
use prl_core::pomdp::sample_dataset;
use prl_core::{ControlValue, EvalPolicy, NuisanceSet, PciScheme, TabularFn, VmmConfig};
use proptest::prelude::*;

fn table(values: &[f64]) -> TabularFn {
    // cells (o, a) for 3 observations and 2 actions
    TabularFn::from_pairs(
        (0..3).flat_map(|o| (0..2).map(move |a| (ControlValue::Category(o), a))).zip(values.iter().copied()),
        0.0,
    )
}

fn spec(k: usize, seed: u64) -> EstimatorSpec {
    EstimatorSpec {
        scheme: PciScheme::PrevObs,
        vmm: VmmConfig::default(),
        gamma: 1.0,
        k_folds: k,
        seed,
        n_obs: 3,
        n_actions: 2,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_identities(
        seed in any::<u64>(),
        q in prop::collection::vec(-3.0f64..3.0, 18),
        h in prop::collection::vec(-3.0f64..3.0, 18),
        policy in prop::collection::vec(0usize..2, 3),
        gamma in 0.5f64..=1.0,
    ) {
        let m = noisyobs(0.2);
        let eval = EvalPolicy::current_obs("random", policy);
        let qs: Vec<TabularFn> = q.chunks(6).map(table).collect();
        let hs: Vec<TabularFn> = h.chunks(6).map(table).collect();
        let zeros = vec![TabularFn::constant(0.0); 3];
        let no_h = NuisanceSet::new(qs.clone(), zeros.clone(), 2);
        let no_q = NuisanceSet::new(zeros, hs.clone(), 2);
        for traj in sample_dataset(&m.pomdp, &m.behavior, seed, 6, false) {
            let dr = score(&traj, &eval, &PciScheme::PrevObs, &no_h, gamma, ScoreKind::DR).unwrap();
            let is = score(&traj, &eval, &PciScheme::PrevObs, &no_h, gamma, ScoreKind::IS).unwrap();
            prop_assert!((dr - is).abs() <= 1e-12 * (1.0 + is.abs()));
            let dr = score(&traj, &eval, &PciScheme::PrevObs, &no_q, gamma, ScoreKind::DR).unwrap();
            let w1 = ControlValue::Category(traj.obs(1));
            let reg = hs[0].value_at(w1, 0) + hs[0].value_at(w1, 1);
            prop_assert!((dr - reg).abs() <= 1e-12 * (1.0 + reg.abs()));
        }
    }

    #[test]
    fn folds_partition_the_sample(n in 2usize..200, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let ids = fold_assignment(n, k, seed);
        let mut sizes = vec![0usize; k];
        for f in &ids {
            sizes[*f] += 1;
        }
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(ids, fold_assignment(n, k, seed));
    }
}

#[test]
fn estimate_ignores_trajectory_order() {
    let m = noisyobs(0.2);
    let data = sample_dataset(&m.pomdp, &m.behavior, 17, 1_000, false);
    let s = spec(5, 3);
    let ids = fold_assignment(data.len(), 5, 3);
    let base = estimate_with_folds(&data, &m.easy, &s, &ScoreKind::ALL, &ids).unwrap();
    let perm: Vec<usize> = (0..data.len()).rev().collect();
    let shuffled: Vec<_> = perm.iter().map(|&i| data[i].clone()).collect();
    let shuffled_ids: Vec<usize> = perm.iter().map(|&i| ids[i]).collect();
    let again = estimate_with_folds(&shuffled, &m.easy, &s, &ScoreKind::ALL, &shuffled_ids).unwrap();
    for (a, b) in base.iter().zip(&again) {
        assert!((a.estimate - b.estimate).abs() <= 1e-9 * (1.0 + a.estimate.abs()), "{} vs {}", a.estimate, b.estimate);
        assert!((a.sigma2 - b.sigma2).abs() <= 1e-9 * (1.0 + a.sigma2.abs()));
    }
}

#[test]
fn identical_trajectories_give_identical_folds() {
    let m = noisyobs(0.2);
    let one = sample_dataset(&m.pomdp, &m.behavior, 2, 1, false).remove(0);
    let data = vec![one; 10];
    let reports = estimate_scores(&data, &m.optim, &spec(5, 0), &ScoreKind::ALL).unwrap();
    for r in reports {
        assert!(r.fold_estimates.iter().all(|f| *f == r.fold_estimates[0]), "{:?}", r.fold_estimates);
        assert_eq!(r.sigma2, 0.0);
    }
}

#[test]
fn confidence_interval_matches_the_variance() {
    let m = noisyobs(0.2);
    let data = sample_dataset(&m.pomdp, &m.behavior, 23, 2_000, false);
    for k in [1, 2, 5] {
        for r in estimate_scores(&data, &m.hard, &spec(k, 9), &ScoreKind::ALL).unwrap() {
            let half = Z_975 * (r.sigma2 / r.n as f64).sqrt();
            assert!((r.ci95.0 - (r.estimate - half)).abs() <= 1e-12 * (1.0 + r.estimate.abs()));
            assert!((r.ci95.1 - (r.estimate + half)).abs() <= 1e-12 * (1.0 + r.estimate.abs()));
            assert_eq!(r.cross_fitted, k > 1);
            assert_eq!(r.fold_estimates.len(), k);
            assert!(r.finite && r.max_eta >= 1.0);
        }
    }
}

#[test]
fn too_few_trajectories_for_the_folds_is_an_error() {
    let m = noisyobs(0.2);
    let data = sample_dataset(&m.pomdp, &m.behavior, 1, 3, false);
    assert!(estimate_scores(&data, &m.easy, &spec(5, 0), &[ScoreKind::DR]).is_err());
    assert!(estimate_scores(&data, &m.easy, &spec(0, 0), &[ScoreKind::DR]).is_err());
}
