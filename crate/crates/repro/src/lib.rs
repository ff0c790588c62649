//! Helpers for the scaled NoisyObs reproduction checks.

use nalgebra::DMatrix;
use prl_core::experiment::{ExperimentConfig, Method, RunSummary, SummaryRow};
use prl_core::{EvalPolicy, Result, Trajectory};

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// In-memory replication run for one NoisyObs setting with tuned penalties.
pub fn replicate(eps_noise: f64, policy: &str, n_grid: &[usize], replications: usize, methods: &[Method], base_seed: u64) -> Result<RunSummary> {
    let config = ExperimentConfig {
        eps_noise,
        policy: policy.into(),
        n_grid: n_grid.to_vec(),
        replications,
        methods: methods.to_vec(),
        base_seed,
        ..ExperimentConfig::default()
    };
    prl_core::experiment::run_in_memory(&config)
}

pub fn cell<'a>(run: &'a RunSummary, method: Method, n: usize) -> &'a SummaryRow {
    run.summary
        .iter()
        .find(|s| s.method == method && s.n == n)
        .expect("requested cell was run")
}

/// Finite estimates of one method at one sample size, in replication order.
pub fn estimates(run: &RunSummary, method: Method, n: usize) -> Vec<f64> {
    run.rows
        .iter()
        .filter(|r| r.method == method && r.n == n && r.estimate.is_finite())
        .map(|r| r.estimate)
        .collect()
}

/// Moore-Penrose inverse by Greville's column recursion.
pub fn greville_pinv(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let mut pinv = DMatrix::<f64>::zeros(0, m);
    for k in 0..n {
        let col = a.column(k).into_owned();
        let prev = a.columns(0, k);
        let d = &pinv * &col;
        let c = &col - prev * &d;
        let b = if c.norm() > tol {
            c.transpose() / c.norm_squared()
        } else {
            (d.transpose() * &pinv) / (1.0 + d.norm_squared())
        };
        let mut next = DMatrix::<f64>::zeros(k + 1, m);
        next.rows_mut(0, k).copy_from(&(&pinv - &d * &b));
        next.row_mut(k).copy_from(&b);
        pinv = next;
    }
    pinv
}

/// TIS value by summing over every tuple `(i_0, i_1, .., i_H)` of trajectory
/// indices under the product of empirical per-step laws.
pub fn brute_force_tis(data: &[Trajectory], eval: &EvalPolicy, gamma: f64, n_obs: usize, n_actions: usize) -> f64 {
    let n = data.len();
    let horizon = data[0].horizon();
    // rho[t-1][a][(z, x)]
    let mut rho = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut per_action = Vec::with_capacity(n_actions);
        for a in 0..n_actions {
            let mut q = DMatrix::<f64>::zeros(n_obs, n_obs);
            let mut joint = vec![0.0; n_obs];
            for d in data.iter().filter(|d| d.action(t) == a) {
                q[(d.obs(t), d.obs(t - 1))] += 1.0;
                joint[d.obs(t - 1)] += 1.0 / n as f64;
            }
            for y in 0..n_obs {
                let total = q.column(y).sum();
                if total > 0.0 {
                    q.column_mut(y).unscale_mut(total);
                }
            }
            let inv = greville_pinv(&q, 1e-10);
            per_action.push(DMatrix::from_fn(n_obs, n_obs, |z, x| if joint[z] > 0.0 { inv[(z, x)] / joint[z] } else { 0.0 }));
        }
        rho.push(per_action);
    }
    let tuples = n.pow(horizon as u32 + 1);
    let mut total = 0.0;
    for code in 0..tuples {
        let mut idx = Vec::with_capacity(horizon + 1);
        let mut c = code;
        for _ in 0..=horizon {
            idx.push(c % n);
            c /= n;
        }
        let mut x_prev = data[idx[0]].obs(1);
        let (mut obs, mut acts) = (Vec::new(), Vec::new());
        let (mut weight, mut disc) = (1.0, 1.0);
        for t in 1..=horizon {
            let d = &data[idx[t]];
            obs.push(d.obs(t));
            if d.action(t) != eval.action(&obs, &acts) {
                break;
            }
            weight *= rho[t - 1][d.action(t)][(d.obs(t - 1), x_prev)];
            total += disc * d.reward(t) * weight;
            disc *= gamma;
            if t < horizon {
                x_prev = d.obs(t + 1);
            }
            acts.push(d.action(t));
        }
    }
    total / tuples as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greville_matches_known_inverses() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let inv = greville_pinv(&a, 1e-12);
        assert!((inv - DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 2.0])).norm() < 1e-12);
        // rank one: pinv of u v^T is v u^T / (|u|^2 |v|^2)
        let r = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0]);
        let expected = r.transpose() / 25.0;
        assert!((greville_pinv(&r, 1e-12) - expected).norm() < 1e-12);
        assert_eq!(greville_pinv(&DMatrix::zeros(2, 2), 1e-12), DMatrix::<f64>::zeros(2, 2));
    }

    #[test]
    fn median_of_even_and_odd_lists() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![]).is_nan());
    }
}
