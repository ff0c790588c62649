//! Comparison estimators: mean logged reward, a tabular MDP fitted on
//! observations, and time-independent sampling (TIS).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pseudo_inverse;
use crate::pomdp::{EvalPolicy, Trajectory, ENUMERATION_BUDGET};

/// A baseline value with its warning counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub value: f64,
    /// Unvisited cells touched (MDP) or zero-probability rho cells hit (TIS).
    pub warnings: usize,
    /// Set when a matrix had to be pseudo-inverted.
    pub low_confidence: bool,
}

fn check_nonempty(data: &[Trajectory]) -> Result<usize> {
    let h = data
        .first()
        .map(Trajectory::horizon)
        .ok_or_else(|| Error::InvalidArgument("baseline needs at least one trajectory".into()))?;
    if data.iter().any(|d| d.horizon() != h) {
        return Err(Error::InvalidArgument("trajectories have different horizons".into()));
    }
    Ok(h)
}

/// `(1/n) sum_i sum_t gamma^(t-1) R_t`.
pub fn mean_r(data: &[Trajectory], gamma: f64) -> Result<f64> {
    check_nonempty(data)?;
    Ok(data.iter().map(|d| d.discounted_return(gamma)).sum::<f64>() / data.len() as f64)
}

/// Count-based MDP on observations, pooled over time.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMdp {
    pub n_obs: usize,
    pub n_actions: usize,
    pub initial: Vec<f64>,
    /// `transition[o][a][o']`; uniform where `(o, a)` never moved on.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// Mean reward, 0 where `(o, a)` was never seen.
    pub reward: Vec<Vec<f64>>,
    pub transition_seen: Vec<Vec<bool>>,
    pub reward_seen: Vec<Vec<bool>>,
}

impl ObservationMdp {
    pub fn fit(data: &[Trajectory], n_obs: usize, n_actions: usize) -> Result<Self> {
        let horizon = check_nonempty(data)?;
        let mut initial = vec![0.0; n_obs];
        let mut trans = vec![vec![vec![0.0; n_obs]; n_actions]; n_obs];
        let mut rsum = vec![vec![0.0; n_actions]; n_obs];
        let mut rcount = vec![vec![0.0; n_actions]; n_obs];
        for d in data {
            if d.o0 >= n_obs || d.steps.iter().any(|s| s.o >= n_obs || s.a >= n_actions) {
                return Err(Error::InvalidArgument("trajectory index out of alphabet".into()));
            }
            initial[d.obs(1)] += 1.0;
            for t in 1..=horizon {
                let (o, a) = (d.obs(t), d.action(t));
                rsum[o][a] += d.reward(t);
                rcount[o][a] += 1.0;
                if t < horizon {
                    trans[o][a][d.obs(t + 1)] += 1.0;
                }
            }
        }
        let n = data.len() as f64;
        initial.iter_mut().for_each(|p| *p /= n);
        let mut transition_seen = vec![vec![false; n_actions]; n_obs];
        let mut reward_seen = vec![vec![false; n_actions]; n_obs];
        let mut reward = vec![vec![0.0; n_actions]; n_obs];
        for o in 0..n_obs {
            for a in 0..n_actions {
                let total: f64 = trans[o][a].iter().sum();
                if total > 0.0 {
                    trans[o][a].iter_mut().for_each(|p| *p /= total);
                    transition_seen[o][a] = true;
                } else {
                    trans[o][a] = vec![1.0 / n_obs as f64; n_obs];
                }
                if rcount[o][a] > 0.0 {
                    reward[o][a] = rsum[o][a] / rcount[o][a];
                    reward_seen[o][a] = true;
                }
            }
        }
        Ok(Self {
            n_obs,
            n_actions,
            initial,
            transition: trans,
            reward,
            transition_seen,
            reward_seen,
        })
    }

    /// Value of `eval` over `horizon` steps, treating observations as states.
    pub fn policy_value(&self, eval: &EvalPolicy, gamma: f64, horizon: usize) -> Result<BaselineResult> {
        let mut warnings = 0;
        let value = match eval {
            EvalPolicy::CurrentObs { table, .. } => {
                if table.len() != self.n_obs || table.iter().any(|a| *a >= self.n_actions) {
                    return Err(Error::InvalidArgument("policy table does not match the alphabets".into()));
                }
                let mut v = vec![0.0; self.n_obs];
                for t in (1..=horizon).rev() {
                    v = (0..self.n_obs)
                        .map(|o| {
                            let a = table[o];
                            let future = if t < horizon {
                                self.transition[o][a].iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
                            } else {
                                0.0
                            };
                            self.reward[o][a] + gamma * future
                        })
                        .collect();
                }
                // only count unvisited cells reachable under the fitted model
                let mut reach = self.initial.clone();
                for t in 1..=horizon {
                    let mut next = vec![0.0; self.n_obs];
                    for o in 0..self.n_obs {
                        if reach[o] == 0.0 {
                            continue;
                        }
                        let a = table[o];
                        if !self.reward_seen[o][a] || (t < horizon && !self.transition_seen[o][a]) {
                            warnings += 1;
                        }
                        for (o2, p) in self.transition[o][a].iter().enumerate() {
                            next[o2] += reach[o] * p;
                        }
                    }
                    reach = next;
                }
                self.initial.iter().zip(&v).map(|(p, x)| p * x).sum()
            }
            EvalPolicy::History { .. } => {
                let paths = (self.n_obs as f64).powi(horizon as i32);
                if paths > ENUMERATION_BUDGET {
                    return Err(Error::EnumerationTooLarge {
                        paths,
                        budget: ENUMERATION_BUDGET,
                    });
                }
                let mut obs = Vec::with_capacity(horizon);
                let mut acts = Vec::with_capacity(horizon);
                let mut total = 0.0;
                for o1 in 0..self.n_obs {
                    if self.initial[o1] > 0.0 {
                        obs.push(o1);
                        total += self.initial[o1] * self.history_value(eval, gamma, horizon, &mut obs, &mut acts, &mut warnings);
                        obs.pop();
                    }
                }
                total
            }
        };
        Ok(BaselineResult {
            value,
            warnings,
            low_confidence: false,
        })
    }

    fn history_value(
        &self,
        eval: &EvalPolicy,
        gamma: f64,
        horizon: usize,
        obs: &mut Vec<usize>,
        acts: &mut Vec<usize>,
        warnings: &mut usize,
    ) -> f64 {
        let t = obs.len();
        let o = obs[t - 1];
        let a = eval.action(obs, acts);
        let last = t == horizon;
        if !self.reward_seen[o][a] || (!last && !self.transition_seen[o][a]) {
            *warnings += 1;
        }
        let mut v = self.reward[o][a];
        if !last {
            acts.push(a);
            let mut future = 0.0;
            for o2 in 0..self.n_obs {
                let p = self.transition[o][a][o2];
                if p > 0.0 {
                    obs.push(o2);
                    future += p * self.history_value(eval, gamma, horizon, obs, acts, warnings);
                    obs.pop();
                }
            }
            acts.pop();
            v += gamma * future;
        }
        v
    }
}

/// Fits the observation MDP and evaluates `eval` in it.
pub fn mdp_dp(
    data: &[Trajectory],
    eval: &EvalPolicy,
    gamma: f64,
    n_obs: usize,
    n_actions: usize,
    horizon: usize,
) -> Result<BaselineResult> {
    ObservationMdp::fit(data, n_obs, n_actions)?.policy_value(eval, gamma, horizon)
}

/// One cell of the per-step law of `(Z_t, W_t, X_t, A_t, R_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaCell {
    pub z: usize,
    pub w: usize,
    /// `O_{t+1}`; absent at `t = H`.
    pub x: Option<usize>,
    pub a: usize,
    pub r: f64,
    pub prob: f64,
}

/// Plug-in nuisances of the TIS identification formula.
#[derive(Debug, Clone, PartialEq)]
pub struct TisNuisance {
    pub n_obs: usize,
    pub n_actions: usize,
    /// `q_matrices[t-1][a][(x, y)] = P(O_t = x | A_t = a, O_{t-1} = y)`.
    pub q_matrices: Vec<Vec<DMatrix<f64>>>,
    /// `rho[t-1][a][(z, x)]`; zero where `P(O_{t-1} = z, A_t = a) = 0`.
    pub rho: Vec<Vec<DMatrix<f64>>>,
    /// `P(O_{t-1} = z, A_t = a)` per `t`.
    pub joint_za: Vec<DMatrix<f64>>,
    /// Law of `X_0 = O_1`.
    pub initial: Vec<f64>,
    /// Law of `Omega_t` for `t = 1..=H`.
    pub marginals: Vec<Vec<OmegaCell>>,
    /// Some `Q^(t,a)` was rank deficient and was pseudo-inverted.
    pub singular: bool,
}

impl TisNuisance {
    /// Fits from observable trajectories carrying probability weights summing to one.
    pub fn fit(entries: &[(&Trajectory, f64)], n_obs: usize, n_actions: usize) -> Result<Self> {
        let horizon = entries
            .first()
            .map(|(d, _)| d.horizon())
            .ok_or_else(|| Error::InvalidArgument("TIS needs at least one trajectory".into()))?;
        if entries.iter().any(|(d, w)| d.horizon() != horizon || !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("TIS entries need equal horizons and weights >= 0".into()));
        }
        let mut initial = vec![0.0; n_obs];
        let mut counts = vec![vec![DMatrix::zeros(n_obs, n_obs); n_actions]; horizon];
        let mut cells: Vec<BTreeMap<(usize, usize, Option<usize>, usize, u64), f64>> = vec![BTreeMap::new(); horizon];
        for (d, w) in entries {
            initial[d.obs(1)] += w;
            for t in 1..=horizon {
                let (z, x_now, a) = (d.obs(t - 1), d.obs(t), d.action(t));
                counts[t - 1][a][(x_now, z)] += w;
                let x = (t < horizon).then(|| d.obs(t + 1));
                *cells[t - 1].entry((z, x_now, x, a, d.reward(t).to_bits())).or_insert(0.0) += w;
            }
        }
        let mut singular = false;
        let mut q_matrices = Vec::with_capacity(horizon);
        let mut rho = Vec::with_capacity(horizon);
        let mut joint_za = Vec::with_capacity(horizon);
        for count_t in &counts {
            let mut joint = DMatrix::zeros(n_obs, n_actions);
            let mut q_t = Vec::with_capacity(n_actions);
            let mut rho_t = Vec::with_capacity(n_actions);
            for (a, c) in count_t.iter().enumerate() {
                let mut q = c.clone();
                for y in 0..n_obs {
                    let total: f64 = c.column(y).sum();
                    joint[(y, a)] = total;
                    if total > 0.0 {
                        q.column_mut(y).unscale_mut(total);
                    }
                }
                let (inv, deficient) = pseudo_inverse(&q);
                singular |= deficient;
                let r = DMatrix::from_fn(n_obs, n_obs, |z, x| {
                    let p = joint[(z, a)];
                    if p > 0.0 {
                        inv[(z, x)] / p
                    } else {
                        0.0
                    }
                });
                q_t.push(q);
                rho_t.push(r);
            }
            q_matrices.push(q_t);
            rho.push(rho_t);
            joint_za.push(joint);
        }
        let marginals = cells
            .into_iter()
            .map(|m| {
                m.into_iter()
                    .map(|((z, w, x, a, r), prob)| OmegaCell {
                        z,
                        w,
                        x,
                        a,
                        r: f64::from_bits(r),
                        prob,
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            n_obs,
            n_actions,
            q_matrices,
            rho,
            joint_za,
            initial,
            marginals,
            singular,
        })
    }

    pub fn horizon(&self) -> usize {
        self.marginals.len()
    }

    /// `rho^(t)(z, a, x)` and whether the cell had zero probability.
    pub fn rho_at(&self, t: usize, z: usize, a: usize, x: usize) -> (f64, bool) {
        if self.joint_za[t - 1][(z, a)] > 0.0 {
            (self.rho[t - 1][a][(z, x)], false)
        } else {
            (0.0, true)
        }
    }

    /// `sum_s gamma^(s-1) E_ind[R_s prod_{t<=s} 1{A_t = E_t} rho^(t)(Z_t, A_t, X_{t-1})]`
    /// by forward messages over `(X_t, history)`; the history is empty for
    /// current-observation policies.
    pub fn value(&self, eval: &EvalPolicy, gamma: f64) -> BaselineResult {
        let horizon = self.horizon();
        let keep_history = !eval.is_current_obs();
        // key: (x, observations W_1..W_t, actions A_1..A_t)
        type Key = (usize, Vec<usize>, Vec<usize>);
        let mut messages: BTreeMap<Key, f64> = BTreeMap::new();
        for (x, p) in self.initial.iter().enumerate() {
            if *p > 0.0 {
                messages.insert((x, Vec::new(), Vec::new()), *p);
            }
        }
        let mut warnings = 0;
        let mut total = 0.0;
        let mut disc = 1.0;
        for t in 1..=horizon {
            let mut next: BTreeMap<Key, f64> = BTreeMap::new();
            let mut reward_term = 0.0;
            for ((x_prev, obs, acts), m) in &messages {
                let mut obs_t = obs.clone();
                obs_t.push(0);
                for cell in &self.marginals[t - 1] {
                    *obs_t.last_mut().expect("pushed") = cell.w;
                    let e = eval.action(&obs_t, acts);
                    if cell.a != e {
                        continue;
                    }
                    let (rho, missing) = self.rho_at(t, cell.z, cell.a, *x_prev);
                    if missing {
                        warnings += 1;
                        continue;
                    }
                    let weight = m * cell.prob * rho;
                    reward_term += weight * cell.r;
                    if t < horizon {
                        let x = cell.x.expect("X_t exists before H");
                        let key = if keep_history {
                            let mut a_t = acts.clone();
                            a_t.push(cell.a);
                            (x, obs_t.clone(), a_t)
                        } else {
                            (x, Vec::new(), Vec::new())
                        };
                        *next.entry(key).or_insert(0.0) += weight;
                    }
                }
            }
            total += disc * reward_term;
            disc *= gamma;
            messages = next;
        }
        BaselineResult {
            value: total,
            warnings,
            low_confidence: self.singular,
        }
    }
}

/// TIS with empirical laws (each trajectory has weight `1/n`).
pub fn tis(data: &[Trajectory], eval: &EvalPolicy, gamma: f64, n_obs: usize, n_actions: usize) -> Result<BaselineResult> {
    check_nonempty(data)?;
    let w = 1.0 / data.len() as f64;
    let entries: Vec<(&Trajectory, f64)> = data.iter().map(|d| (d, w)).collect();
    Ok(TisNuisance::fit(&entries, n_obs, n_actions)?.value(eval, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::Step;

    fn traj(o0: usize, steps: &[(usize, usize, f64)]) -> Trajectory {
        Trajectory {
            o0,
            steps: steps.iter().map(|&(o, a, r)| Step { o, a, r }).collect(),
            hidden: None,
        }
    }

    #[test]
    fn mean_r_examples() {
        assert_eq!(mean_r(&[traj(0, &[(0, 0, 1.0), (0, 0, 2.0), (0, 0, 3.0)])], 1.0).unwrap(), 6.0);
        assert_eq!(mean_r(&[traj(0, &[(0, 0, 0.0), (0, 0, 0.0)])], 0.9).unwrap(), 0.0);
        assert!(mean_r(&[], 1.0).is_err());
    }

    #[test]
    fn mdp_on_a_deterministic_chain() {
        let data = vec![traj(0, &[(0, 0, 1.0), (0, 0, 1.0), (0, 0, 1.0)]); 4];
        let eval = EvalPolicy::current_obs("stay", vec![0]);
        let v = mdp_dp(&data, &eval, 0.5, 1, 1, 3).unwrap();
        assert_eq!(v.value, 1.0 + 0.5 + 0.25);
        assert_eq!(v.warnings, 0);
    }

    #[test]
    fn mdp_flags_unvisited_cells() {
        let data = vec![traj(0, &[(0, 0, 1.0), (1, 0, 2.0)])];
        let eval = EvalPolicy::current_obs("other", vec![1, 1]);
        let v = mdp_dp(&data, &eval, 1.0, 2, 2, 2).unwrap();
        assert!(v.warnings > 0);
    }

    #[test]
    fn single_observation_rho_is_inverse_probability() {
        let data = vec![
            traj(0, &[(0, 0, 1.0), (0, 1, 2.0)]),
            traj(0, &[(0, 1, 3.0), (0, 0, 4.0)]),
            traj(0, &[(0, 1, 5.0), (0, 1, 6.0)]),
        ];
        let entries: Vec<(&Trajectory, f64)> = data.iter().map(|d| (d, 1.0 / 3.0)).collect();
        let fit = TisNuisance::fit(&entries, 1, 2).unwrap();
        assert!(!fit.singular);
        for t in 1..=2 {
            for a in 0..2 {
                assert_eq!(fit.q_matrices[t - 1][a][(0, 0)], 1.0);
                let p = fit.joint_za[t - 1][(0, a)];
                assert!((fit.rho_at(t, 0, a, 0).0 - 1.0 / p).abs() < 1e-12);
            }
        }
    }
}
