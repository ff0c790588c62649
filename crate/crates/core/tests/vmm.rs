mod common;

use std::time::Instant;

use common::noisyobs;
use prl_core::oracle::{solve_weighted_moments, TupleLaw, WeightedTrajectorySet};
use prl_core::pomdp::{build_well_posed, sample_dataset};
use prl_core::{fit_nuisances, EvalPolicy, PciScheme, Trajectory, VmmConfig};

fn scale(f: &prl_core::TabularFn) -> f64 {
    f.values().iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

fn compare_with_empirical_solve(data: &[Trajectory], eval: &EvalPolicy, n_obs: usize, gamma: f64) {
    let law = TupleLaw::new(&WeightedTrajectorySet::empirical(data), eval, &PciScheme::PrevObs).unwrap();
    let direct = solve_weighted_moments(&law, 2, gamma).unwrap();
    assert!(direct.q_residuals.iter().chain(&direct.h_residuals).all(|r| *r <= 1e-9), "{direct:?}", direct = (&direct.q_residuals, &direct.h_residuals));
    let fit = fit_nuisances(data, eval, &PciScheme::PrevObs, n_obs, 2, &VmmConfig::with_penalties(0.0, 0.0), gamma).unwrap();
    for t in 0..data[0].horizon() {
        for (fitted, exact) in [(&fit.q[t], &direct.nuisances.q[t]), (&fit.h[t], &direct.nuisances.h[t])] {
            assert_eq!(fitted.support(), exact.support());
            let d = prl_core::tabular::sup_distance(fitted, exact);
            assert!(d <= 1e-7 * scale(exact), "t={}: {d:e} (scale {})", t + 1, scale(exact));
        }
    }
}

#[test]
fn unpenalised_fit_solves_the_empirical_moments_on_the_well_posed_model() {
    let (pomdp, behavior, eval) = build_well_posed();
    for (seed, n) in [(1, 2_000), (2, 50_000)] {
        let data = sample_dataset(&pomdp, &behavior, seed, n, false);
        compare_with_empirical_solve(&data, &eval, pomdp.n_obs, 0.9);
    }
}

#[test]
fn unpenalised_fit_solves_the_empirical_moments_on_noisyobs() {
    let m = noisyobs(0.2);
    for (k, eval) in m.policies().into_iter().enumerate() {
        let data = sample_dataset(&m.pomdp, &m.behavior, 40 + k as u64, 5_000, false);
        compare_with_empirical_solve(&data, eval, 3, 1.0);
    }
}

#[test]
fn solves_never_end_above_their_starting_point() {
    let m = noisyobs(0.2);
    let data = sample_dataset(&m.pomdp, &m.behavior, 8, 3_000, false);
    for (a, l) in [(1e-4, 1e-4), (1e-2, 1e-2), (1.0, 1e-6)] {
        let fit = fit_nuisances(&data, &m.hard, &PciScheme::PrevObs, 3, 2, &VmmConfig::with_penalties(a, l), 1.0).unwrap();
        assert_eq!(fit.reports.len(), 2 * 2 * 3);
        for r in &fit.reports {
            assert!(r.objective <= r.prior_objective * (1.0 + 1e-9) + 1e-12, "{r:?}");
        }
    }
}

#[test]
fn fit_time_grows_linearly_in_n() {
    let m = noisyobs(0.2);
    let config = VmmConfig::default();
    let time = |n: usize| {
        let data = sample_dataset(&m.pomdp, &m.behavior, 3, n, false);
        (0..3)
            .map(|_| {
                let start = Instant::now();
                fit_nuisances(&data, &m.easy, &PciScheme::PrevObs, 3, 2, &config, 1.0).unwrap();
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (small, large) = (time(100_000), time(200_000));
    assert!(large <= 2.5 * small, "{small}s at n, {large}s at 2n");
}
