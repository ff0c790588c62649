//! Exact ground truth by enumerating trajectory laws: bridge-function solves,
//! population expectations of scores and the identification certificates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::TisNuisance;
use crate::error::{Bridge, Error, Result};
use crate::estimators::{score_bundle, ScoreKind};
use crate::linalg::lstsq_min_norm;
use crate::pomdp::{enumerate_paths, exact_policy_value, ActionRule, BehaviorPolicy, EvalPolicy, TabularPomdp, Trajectory};
use crate::reduction::{control_tuples, ControlTuple, ControlValue, PciScheme};
use crate::tabular::{sup_distance_on, Cell, TabularFn};
use crate::vmm::NuisanceSet;

/// Residual bound for exact bridge solves.
pub const SOLVE_TOL: f64 = 1e-10;
/// Agreement bound for population values.
pub const VALUE_TOL: f64 = 1e-8;
/// Bound on finite-difference directional derivatives of `E[psi_DR]`.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-4;
pub const FD_DIRECTIONS: usize = 20;

/// Which measure a weighted set represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LawTag {
    /// Logging law `P_b`.
    Behavior,
    /// Target policy for the first `t - 1` actions, logging policy afterwards.
    Intervention(usize),
    /// Target policy throughout.
    Eval,
}

/// Trajectories with exact probabilities.
#[derive(Debug, Clone)]
pub struct WeightedTrajectorySet {
    pub entries: Vec<(Trajectory, f64)>,
    pub law: LawTag,
}

impl WeightedTrajectorySet {
    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// Merges entries with identical observable parts; rewards compare bit-exactly.
    pub fn observable(&self) -> Self {
        type Key = (usize, Vec<(usize, usize, u64)>);
        let mut groups: BTreeMap<Key, f64> = BTreeMap::new();
        for (traj, p) in &self.entries {
            let key = (traj.o0, traj.steps.iter().map(|s| (s.o, s.a, s.r.to_bits())).collect());
            *groups.entry(key).or_insert(0.0) += p;
        }
        let entries = groups
            .into_iter()
            .map(|((o0, steps), p)| {
                let steps = steps
                    .into_iter()
                    .map(|(o, a, r)| crate::pomdp::Step { o, a, r: f64::from_bits(r) })
                    .collect();
                (Trajectory { o0, steps, hidden: None }, p)
            })
            .collect();
        Self { entries, law: self.law }
    }

    /// The empirical law of a logged dataset, each trajectory weighted `1/n`.
    pub fn empirical(data: &[Trajectory]) -> Self {
        let w = 1.0 / data.len() as f64;
        Self {
            entries: data.iter().map(|t| (t.clone(), w)).collect(),
            law: LawTag::Behavior,
        }
        .observable()
    }

    pub fn as_pairs(&self) -> Vec<(&Trajectory, f64)> {
        self.entries.iter().map(|(t, p)| (t, *p)).collect()
    }
}

/// All paths with actions from `eval` for `t < switch_t` and from `behavior` afterwards.
pub fn enumerate_law(
    pomdp: &TabularPomdp,
    behavior: &BehaviorPolicy,
    eval: &EvalPolicy,
    switch_t: usize,
) -> Result<WeightedTrajectorySet> {
    let h = pomdp.horizon;
    if switch_t == 0 || switch_t > h + 1 {
        return Err(Error::InvalidArgument(format!("switch_t must lie in 1..={}, got {switch_t}", h + 1)));
    }
    behavior.validate(pomdp)?;
    let rule = ActionRule::Switch {
        eval,
        behavior,
        switch_t,
    };
    let law = match switch_t {
        1 => LawTag::Behavior,
        t if t == h + 1 => LawTag::Eval,
        t => LawTag::Intervention(t),
    };
    let entries = enumerate_paths(pomdp, rule)?
        .into_iter()
        .map(|p| (p.trajectory, p.probability))
        .collect();
    Ok(WeightedTrajectorySet { entries, law })
}

/// `sum_tau p(tau) f(tau)`.
pub fn population_expectation(law: &WeightedTrajectorySet, f: impl Fn(&Trajectory) -> f64) -> f64 {
    law.entries.iter().map(|(t, p)| p * f(t)).sum()
}

/// Control tuples of every entry of a law.
#[derive(Debug, Clone)]
pub struct TupleLaw {
    pub rows: Vec<Vec<ControlTuple>>,
    pub probs: Vec<f64>,
}

impl TupleLaw {
    pub fn new(law: &WeightedTrajectorySet, eval: &EvalPolicy, scheme: &PciScheme) -> Result<Self> {
        let mut rows = Vec::with_capacity(law.entries.len());
        let mut probs = Vec::with_capacity(law.entries.len());
        for (traj, p) in &law.entries {
            rows.push(control_tuples(traj, eval, scheme)?);
            probs.push(*p);
        }
        Ok(Self { rows, probs })
    }

    pub fn horizon(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// `Y_t` built backwards from `Y_H = R_H` with the doubly robust one-step backup.
pub fn outcome_variable(row: &[ControlTuple], t: usize, nuisances: &NuisanceSet, gamma: f64) -> f64 {
    let horizon = row.len();
    let mut y = row[horizon - 1].r;
    for u in ((t + 1)..=horizon).rev() {
        let d = &row[u - 1];
        let h = &nuisances.h[u - 1];
        let q = &nuisances.q[u - 1];
        let sum_h: f64 = (0..nuisances.n_actions).map(|a| h.value_at(d.w, a)).sum();
        let matched = if d.matched() { y } else { 0.0 };
        y = row[u - 2].r + gamma * (sum_h + q.value_at(d.z, d.a) * (matched - h.value_at(d.w, d.a)));
    }
    y
}

/// Linear system over tabular cells, solved in the minimum-norm least-squares sense.
struct CellSystem {
    unknowns: Vec<Cell>,
    rows: Vec<(BTreeMap<usize, f64>, f64)>,
}

impl CellSystem {
    fn solve(&self) -> (Vec<f64>, f64) {
        let a = DMatrix::from_fn(self.rows.len(), self.unknowns.len(), |i, j| {
            self.rows[i].0.get(&j).copied().unwrap_or(0.0)
        });
        let b = DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.1));
        let x = lstsq_min_norm(&a, &b);
        let residual = if self.rows.is_empty() { 0.0 } else { (&a * &x - b).amax() };
        (x.iter().copied().collect(), residual)
    }

    fn into_fn(&self, x: &[f64], default_value: f64) -> TabularFn {
        TabularFn::from_pairs(self.unknowns.iter().copied().zip(x.iter().copied()), default_value)
    }
}

fn index_of(cells: &[Cell], cell: Cell) -> usize {
    cells.binary_search(&cell).expect("cell is in the support")
}

/// Solves `E^(t)[q(Z,A) | W, A=a] = 1 / P^(t)(A=a | W)` under the law `P^(t)`.
pub fn solve_oracle_q(law: &TupleLaw, t: usize, n_actions: usize) -> Result<(TabularFn, f64)> {
    let (f, residual) = lstsq_oracle_q(law, t, n_actions)?;
    if residual > SOLVE_TOL {
        return Err(Error::NoSolution {
            t,
            which: Bridge::Q,
            residual,
        });
    }
    Ok((f, residual))
}

/// Minimum-norm least-squares version of [`solve_oracle_q`]; never fails on
/// inconsistency, the residual is returned instead.
pub fn lstsq_oracle_q(law: &TupleLaw, t: usize, n_actions: usize) -> Result<(TabularFn, f64)> {
    let mut p_w: BTreeMap<ControlValue, f64> = BTreeMap::new();
    let mut p_wa: BTreeMap<Cell, f64> = BTreeMap::new();
    let mut p_zwa: BTreeMap<(ControlValue, ControlValue, usize), f64> = BTreeMap::new();
    let mut p_za: BTreeMap<Cell, f64> = BTreeMap::new();
    for (row, p) in law.rows.iter().zip(&law.probs) {
        let d = &row[t - 1];
        *p_w.entry(d.w).or_insert(0.0) += p;
        *p_wa.entry((d.w, d.a)).or_insert(0.0) += p;
        *p_zwa.entry((d.z, d.w, d.a)).or_insert(0.0) += p;
        *p_za.entry((d.z, d.a)).or_insert(0.0) += p;
    }
    let unknowns: Vec<Cell> = p_za.keys().copied().collect();
    let mut row_index: BTreeMap<Cell, usize> = BTreeMap::new();
    let mut rows = Vec::new();
    for (&w, &pw) in &p_w {
        for a in 0..n_actions {
            let pwa = p_wa.get(&(w, a)).copied().unwrap_or(0.0);
            if pwa <= 0.0 {
                return Err(Error::ZeroPropensity { t, action: a });
            }
            row_index.insert((w, a), rows.len());
            rows.push((BTreeMap::new(), pw / pwa));
        }
    }
    for (&(z, w, a), &p) in &p_zwa {
        let i = row_index[&(w, a)];
        let pwa = p_wa[&(w, a)];
        *rows[i].0.entry(index_of(&unknowns, (z, a))).or_insert(0.0) += p / pwa;
    }
    let system = CellSystem { unknowns, rows };
    let (x, residual) = system.solve();
    Ok((system.into_fn(&x, 1.0), residual))
}

/// Solves `E^(t)[h(W,A) | Z, A=a] = E^(t)[1{E=A} Y_t | Z, A=a]` with `Y_t`
/// taken from the later steps of `later`.
pub fn solve_oracle_h(law: &TupleLaw, t: usize, later: &NuisanceSet, gamma: f64) -> Result<(TabularFn, f64)> {
    let y: Vec<f64> = law.rows.iter().map(|row| outcome_variable(row, t, later, gamma)).collect();
    solve_oracle_h_with(law, t, &y)
}

/// As [`solve_oracle_h`] with the outcome `Y_t` given per entry.
pub fn solve_oracle_h_with(law: &TupleLaw, t: usize, y: &[f64]) -> Result<(TabularFn, f64)> {
    let (f, residual) = lstsq_oracle_h_with(law, t, y);
    if residual > SOLVE_TOL {
        return Err(Error::NoSolution {
            t,
            which: Bridge::H,
            residual,
        });
    }
    Ok((f, residual))
}

/// Minimum-norm least-squares version of [`solve_oracle_h_with`].
pub fn lstsq_oracle_h_with(law: &TupleLaw, t: usize, y: &[f64]) -> (TabularFn, f64) {
    let mut p_za: BTreeMap<Cell, f64> = BTreeMap::new();
    let mut target: BTreeMap<Cell, f64> = BTreeMap::new();
    let mut p_zwa: BTreeMap<(ControlValue, ControlValue, usize), f64> = BTreeMap::new();
    let mut p_wa: BTreeMap<Cell, f64> = BTreeMap::new();
    for ((row, p), y) in law.rows.iter().zip(&law.probs).zip(y) {
        let d = &row[t - 1];
        *p_za.entry((d.z, d.a)).or_insert(0.0) += p;
        *target.entry((d.z, d.a)).or_insert(0.0) += if d.matched() { p * y } else { 0.0 };
        *p_zwa.entry((d.z, d.w, d.a)).or_insert(0.0) += p;
        *p_wa.entry((d.w, d.a)).or_insert(0.0) += p;
    }
    let unknowns: Vec<Cell> = p_wa.keys().copied().collect();
    let keys: Vec<Cell> = p_za.keys().copied().collect();
    let mut rows: Vec<(BTreeMap<usize, f64>, f64)> = keys.iter().map(|k| (BTreeMap::new(), target[k] / p_za[k])).collect();
    for (&(z, w, a), &p) in &p_zwa {
        let i = index_of(&keys, (z, a));
        *rows[i].0.entry(index_of(&unknowns, (w, a))).or_insert(0.0) += p / p_za[&(z, a)];
    }
    let system = CellSystem { unknowns, rows };
    let (x, residual) = system.solve();
    (system.into_fn(&x, 0.0), residual)
}

/// Oracle nuisances and the residuals of their defining systems.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub nuisances: NuisanceSet,
    pub q_residuals: Vec<f64>,
    pub h_residuals: Vec<f64>,
}

/// Solves every `q^(t)` under `P^(t)`, then every `h^(t)` backwards; fails
/// with `NoSolution` if some system is inconsistent.
pub fn solve_oracle(
    pomdp: &TabularPomdp,
    behavior: &BehaviorPolicy,
    eval: &EvalPolicy,
    scheme: &PciScheme,
    gamma: f64,
) -> Result<OracleSolution> {
    let sol = lstsq_oracle(pomdp, behavior, eval, scheme, gamma)?;
    for (i, r) in sol.q_residuals.iter().enumerate() {
        if *r > SOLVE_TOL {
            return Err(Error::NoSolution { t: i + 1, which: Bridge::Q, residual: *r });
        }
    }
    for (i, r) in sol.h_residuals.iter().enumerate().rev() {
        if *r > SOLVE_TOL {
            return Err(Error::NoSolution { t: i + 1, which: Bridge::H, residual: *r });
        }
    }
    Ok(sol)
}

/// As [`solve_oracle`], keeping least-squares solutions of inconsistent systems.
pub fn lstsq_oracle(
    pomdp: &TabularPomdp,
    behavior: &BehaviorPolicy,
    eval: &EvalPolicy,
    scheme: &PciScheme,
    gamma: f64,
) -> Result<OracleSolution> {
    scheme.validate()?;
    let horizon = pomdp.horizon;
    let laws: Vec<TupleLaw> = (1..=horizon)
        .map(|t| TupleLaw::new(&enumerate_law(pomdp, behavior, eval, t)?, eval, scheme))
        .collect::<Result<_>>()?;
    let mut q = Vec::with_capacity(horizon);
    let mut q_residuals = Vec::with_capacity(horizon);
    for (t, law) in (1..=horizon).zip(&laws) {
        let (f, r) = lstsq_oracle_q(law, t, pomdp.n_actions)?;
        q.push(f);
        q_residuals.push(r);
    }
    let mut nuisances = NuisanceSet::new(q, vec![TabularFn::constant(0.0); horizon], pomdp.n_actions);
    let mut h_residuals = vec![0.0; horizon];
    for t in (1..=horizon).rev() {
        let y: Vec<f64> = laws[t - 1].rows.iter().map(|row| outcome_variable(row, t, &nuisances, gamma)).collect();
        let (f, r) = lstsq_oracle_h_with(&laws[t - 1], t, &y);
        nuisances.h[t - 1] = f;
        h_residuals[t - 1] = r;
    }
    Ok(OracleSolution {
        nuisances,
        q_residuals,
        h_residuals,
    })
}

/// `eta_t` for every entry of a logging-law tuple set.
fn population_eta(law: &TupleLaw, t: usize, nuisances: &NuisanceSet) -> Vec<f64> {
    law.rows
        .iter()
        .map(|row| {
            row[..t - 1]
                .iter()
                .enumerate()
                .map(|(s, d)| if d.matched() { nuisances.q[s].value_at(d.z, d.a) } else { 0.0 })
                .product()
        })
        .collect()
}

/// Largest violation of the eta-weighted logging-law moments, per step:
/// `E_b[eta_t (g(W,A) q(Z,A) - sum_a g(W,a))]` over indicator `g`, and
/// `E_b[eta_t (h(W,A) - 1{E=A} Y_t) | Z, A]`.
pub fn weighted_moment_residuals(pb: &TupleLaw, nuisances: &NuisanceSet, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let horizon = pb.horizon();
    let na = nuisances.n_actions;
    let mut q_res = Vec::with_capacity(horizon);
    let mut h_res = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let eta = population_eta(pb, t, nuisances);
        let mut q_moment: BTreeMap<Cell, f64> = BTreeMap::new();
        let mut h_moment: BTreeMap<Cell, f64> = BTreeMap::new();
        let mut p_za: BTreeMap<Cell, f64> = BTreeMap::new();
        for ((row, p), e) in pb.rows.iter().zip(&pb.probs).zip(&eta) {
            let d = &row[t - 1];
            let q = nuisances.q[t - 1].value_at(d.z, d.a);
            for a in 0..na {
                let g_term = if a == d.a { q } else { 0.0 } - 1.0;
                *q_moment.entry((d.w, a)).or_insert(0.0) += p * e * g_term;
            }
            let y = if d.matched() { outcome_variable(row, t, nuisances, gamma) } else { 0.0 };
            *h_moment.entry((d.z, d.a)).or_insert(0.0) += p * e * (nuisances.h[t - 1].value_at(d.w, d.a) - y);
            *p_za.entry((d.z, d.a)).or_insert(0.0) += p;
        }
        q_res.push(q_moment.values().fold(0.0_f64, |m, v| m.max(v.abs())));
        h_res.push(h_moment.iter().fold(0.0_f64, |m, (k, v)| m.max((v / p_za[k]).abs())));
    }
    (q_res, h_res)
}

/// Solves the nuisances from the eta-weighted logging-law moments directly,
/// without any intervention law. Inconsistent systems keep their minimum-norm
/// least-squares solution; the residuals are reported.
pub fn solve_weighted_moments(pb: &TupleLaw, n_actions: usize, gamma: f64) -> Result<OracleSolution> {
    let horizon = pb.horizon();
    let mut nuisances = NuisanceSet::new(
        vec![TabularFn::constant(1.0); horizon],
        vec![TabularFn::constant(0.0); horizon],
        n_actions,
    );
    let mut q_residuals = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let eta = population_eta(pb, t, &nuisances);
        let mut weight_w: BTreeMap<ControlValue, f64> = BTreeMap::new();
        let mut weight_zwa: BTreeMap<(ControlValue, ControlValue, usize), f64> = BTreeMap::new();
        let mut cells: Vec<Cell> = Vec::new();
        for ((row, p), e) in pb.rows.iter().zip(&pb.probs).zip(&eta) {
            let d = &row[t - 1];
            *weight_w.entry(d.w).or_insert(0.0) += p * e;
            if *e != 0.0 {
                *weight_zwa.entry((d.z, d.w, d.a)).or_insert(0.0) += p * e;
                cells.push((d.z, d.a));
            }
        }
        cells.sort();
        cells.dedup();
        let mut row_index: BTreeMap<Cell, usize> = BTreeMap::new();
        let mut rows = Vec::new();
        for (&w, &pw) in &weight_w {
            for a in 0..n_actions {
                row_index.insert((w, a), rows.len());
                rows.push((BTreeMap::new(), pw));
            }
        }
        for (&(z, w, a), &p) in &weight_zwa {
            *rows[row_index[&(w, a)]].0.entry(index_of(&cells, (z, a))).or_insert(0.0) += p;
        }
        let system = CellSystem { unknowns: cells, rows };
        let (x, residual) = system.solve();
        nuisances.q[t - 1] = system.into_fn(&x, 1.0);
        q_residuals.push(residual);
    }
    let mut h_residuals = vec![0.0; horizon];
    for t in (1..=horizon).rev() {
        let eta = population_eta(pb, t, &nuisances);
        let mut p_za: BTreeMap<Cell, f64> = BTreeMap::new();
        let mut target: BTreeMap<Cell, f64> = BTreeMap::new();
        let mut weight_zwa: BTreeMap<(ControlValue, ControlValue, usize), f64> = BTreeMap::new();
        let mut cells: Vec<Cell> = Vec::new();
        for ((row, p), e) in pb.rows.iter().zip(&pb.probs).zip(&eta) {
            let d = &row[t - 1];
            *p_za.entry((d.z, d.a)).or_insert(0.0) += p;
            let y = if d.matched() { outcome_variable(row, t, &nuisances, gamma) } else { 0.0 };
            *target.entry((d.z, d.a)).or_insert(0.0) += p * e * y;
            if *e != 0.0 {
                *weight_zwa.entry((d.z, d.w, d.a)).or_insert(0.0) += p * e;
                cells.push((d.w, d.a));
            }
        }
        cells.sort();
        cells.dedup();
        let keys: Vec<Cell> = p_za.keys().copied().collect();
        let mut rows: Vec<(BTreeMap<usize, f64>, f64)> = keys.iter().map(|k| (BTreeMap::new(), target[k] / p_za[k])).collect();
        for (&(z, w, a), &p) in &weight_zwa {
            let i = index_of(&keys, (z, a));
            *rows[i].0.entry(index_of(&cells, (w, a))).or_insert(0.0) += p / p_za[&(z, a)];
        }
        let system = CellSystem { unknowns: cells, rows };
        let (x, residual) = system.solve();
        nuisances.h[t - 1] = system.into_fn(&x, 0.0);
        h_residuals[t - 1] = residual;
    }
    Ok(OracleSolution {
        nuisances,
        q_residuals,
        h_residuals,
    })
}

/// `E_b[psi_kind]` for every kind.
pub fn population_scores(pb: &TupleLaw, nuisances: &NuisanceSet, gamma: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (row, p) in pb.rows.iter().zip(&pb.probs) {
        let b = score_bundle(row, nuisances, gamma);
        for (slot, kind) in out.iter_mut().zip(ScoreKind::ALL) {
            *slot += p * b.get(kind);
        }
    }
    out
}

/// Adds `r * delta` to every stored value of every nuisance.
fn perturb(base: &NuisanceSet, directions: &[(Vec<f64>, Vec<f64>)], r: f64) -> NuisanceSet {
    let shift = |f: &TabularFn, d: &[f64]| {
        TabularFn::from_pairs(
            f.support().iter().copied().zip(f.values().iter().zip(d).map(|(v, dv)| v + r * dv)),
            f.default_value(),
        )
    };
    NuisanceSet::new(
        base.q.iter().zip(directions).map(|(f, d)| shift(f, &d.0)).collect(),
        base.h.iter().zip(directions).map(|(f, d)| shift(f, &d.1)).collect(),
        base.n_actions,
    )
}

/// Central finite differences of `E_b[psi_DR]` along random directions with
/// entries uniform on `[-1, 1]`.
pub fn orthogonality_derivatives(pb: &TupleLaw, nuisances: &NuisanceSet, gamma: f64, n_directions: usize, step: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_directions)
        .map(|_| {
            let dirs: Vec<(Vec<f64>, Vec<f64>)> = nuisances
                .q
                .iter()
                .zip(&nuisances.h)
                .map(|(q, h)| {
                    let dq = (0..q.values().len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                    let dh = (0..h.values().len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                    (dq, dh)
                })
                .collect();
            let plus = population_scores(pb, &perturb(nuisances, &dirs, step), gamma)[2];
            let minus = population_scores(pb, &perturb(nuisances, &dirs, -step), gamma)[2];
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Population TIS value from the logging law.
pub fn population_tis(pb: &WeightedTrajectorySet, eval: &EvalPolicy, gamma: f64, n_obs: usize, n_actions: usize) -> Result<f64> {
    let observable = pb.observable();
    Ok(TisNuisance::fit(&observable.as_pairs(), n_obs, n_actions)?.value(eval, gamma).value)
}

/// One pass/fail check with its measured value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Certificate {
    fn bound(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
        }
    }

    fn failed(name: impl Into<String>, detail: &Error) -> Self {
        Self {
            name: format!("{} ({detail})", name.into()),
            value: f64::NAN,
            tolerance: 0.0,
            passed: false,
        }
    }
}

/// Options for [`certify`].
#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    /// Added to every oracle `q` value before the identification checks.
    pub corrupt_q: f64,
    pub fd_seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            corrupt_q: 0.0,
            fd_seed: 0,
        }
    }
}

/// All population certificates for one target policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCertificates {
    pub policy: String,
    pub truth: f64,
    pub certificates: Vec<Certificate>,
}

impl PolicyCertificates {
    pub fn passed(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }
}

pub fn certify(
    pomdp: &TabularPomdp,
    behavior: &BehaviorPolicy,
    eval: &EvalPolicy,
    scheme: &PciScheme,
    gamma: f64,
    options: &CertifyOptions,
) -> Result<PolicyCertificates> {
    let truth = exact_policy_value(pomdp, eval, gamma)?;
    let pb_paths = enumerate_law(pomdp, behavior, eval, 1)?;
    let pb = TupleLaw::new(&pb_paths.observable(), eval, scheme)?;
    let mut certs = Vec::new();

    match lstsq_oracle(pomdp, behavior, eval, scheme, gamma) {
        Ok(oracle) => {
            let bridge_res = oracle.q_residuals.iter().chain(&oracle.h_residuals).fold(0.0, |m: f64, r| m.max(*r));
            certs.push(Certificate::bound("bridge_residual", bridge_res, SOLVE_TOL));

            let mut nuisances = oracle.nuisances.clone();
            if options.corrupt_q != 0.0 {
                nuisances.q = nuisances.q.iter().map(|f| f.map(|_, v| v + options.corrupt_q)).collect();
            }
            let scores = population_scores(&pb, &nuisances, gamma);
            for (kind, v) in ScoreKind::ALL.iter().zip(scores) {
                certs.push(Certificate::bound(format!("identification_{kind}"), (v - truth).abs(), VALUE_TOL));
            }

            let (qm, hm) = weighted_moment_residuals(&pb, &nuisances, gamma);
            let moment = qm.iter().chain(&hm).fold(0.0, |m: f64, r| m.max(*r));
            certs.push(Certificate::bound("moment_residual", moment, SOLVE_TOL));

            match solve_weighted_moments(&pb, pomdp.n_actions, gamma) {
                Ok(direct) => {
                    let direct_res = direct.q_residuals.iter().chain(&direct.h_residuals).fold(0.0, |m: f64, r| m.max(*r));
                    certs.push(Certificate::bound("moment_solve_residual", direct_res, SOLVE_TOL));
                    let direct_dr = population_scores(&pb, &direct.nuisances, gamma)[2];
                    let oracle_dr = population_scores(&pb, &nuisances, gamma)[2];
                    certs.push(Certificate::bound("moment_solve_value", (direct_dr - oracle_dr).abs(), VALUE_TOL));
                    let gap = (0..pomdp.horizon)
                        .map(|t| {
                            let dq = sup_distance_on(&direct.nuisances.q[t], &nuisances.q[t], common(&direct.nuisances.q[t], &nuisances.q[t]).iter());
                            let dh = sup_distance_on(&direct.nuisances.h[t], &nuisances.h[t], common(&direct.nuisances.h[t], &nuisances.h[t]).iter());
                            dq.max(dh)
                        })
                        .fold(0.0, f64::max);
                    certs.push(Certificate::bound("moment_solve_nuisances", gap, VALUE_TOL));
                }
                Err(e) => certs.push(Certificate::failed("moment_solve_value", &e)),
            }

            let fd = orthogonality_derivatives(&pb, &nuisances, gamma, FD_DIRECTIONS, FD_STEP, options.fd_seed);
            let worst = fd.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            certs.push(Certificate::bound("orthogonality", worst, ORTHOGONALITY_TOL));
        }
        Err(e) => certs.push(Certificate::failed("bridge_residual", &e)),
    }

    match population_tis(&pb_paths, eval, gamma, pomdp.n_obs, pomdp.n_actions) {
        Ok(v) => certs.push(Certificate::bound("tis_identification", (v - truth).abs(), VALUE_TOL)),
        Err(e) => certs.push(Certificate::failed("tis_identification", &e)),
    }

    Ok(PolicyCertificates {
        policy: eval.name().to_string(),
        truth,
        certificates: certs,
    })
}

fn common(f: &TabularFn, g: &TabularFn) -> Vec<Cell> {
    f.support().iter().filter(|c| g.contains(c.0, c.1)).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::build_noisyobs;

    #[test]
    fn laws_sum_to_one() {
        let m = build_noisyobs(0.2).unwrap();
        for t in 1..=4 {
            let law = enumerate_law(&m.pomdp, &m.behavior, &m.hard, t).unwrap();
            assert!((law.total_probability() - 1.0).abs() < 1e-12);
            assert!((law.observable().total_probability() - 1.0).abs() < 1e-12);
        }
        assert!(enumerate_law(&m.pomdp, &m.behavior, &m.hard, 5).is_err());
    }

    #[test]
    fn eval_law_reproduces_exact_value() {
        let m = build_noisyobs(0.2).unwrap();
        let law = enumerate_law(&m.pomdp, &m.behavior, &m.optim, 4).unwrap();
        assert_eq!(law.law, LawTag::Eval);
        let v = population_expectation(&law, |t| t.discounted_return(1.0));
        assert_eq!(v, exact_policy_value(&m.pomdp, &m.optim, 1.0).unwrap());
    }

    #[test]
    fn constant_score_has_unit_expectation() {
        let m = build_noisyobs(0.0).unwrap();
        let law = enumerate_law(&m.pomdp, &m.behavior, &m.easy, 1).unwrap();
        assert!((population_expectation(&law, |_| 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_outcome_gives_zero_h() {
        let m = build_noisyobs(0.2).unwrap();
        let law = TupleLaw::new(&enumerate_law(&m.pomdp, &m.behavior, &m.easy, 2).unwrap(), &m.easy, &PciScheme::PrevObs).unwrap();
        let (h, _) = solve_oracle_h_with(&law, 2, &vec![0.0; law.rows.len()]).unwrap();
        assert!(h.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn last_step_outcome_is_the_reward() {
        let m = build_noisyobs(0.2).unwrap();
        let oracle = lstsq_oracle(&m.pomdp, &m.behavior, &m.easy, &PciScheme::PrevObs, 1.0).unwrap();
        let law = TupleLaw::new(&enumerate_law(&m.pomdp, &m.behavior, &m.easy, 3).unwrap(), &m.easy, &PciScheme::PrevObs).unwrap();
        for row in &law.rows {
            assert_eq!(outcome_variable(row, 3, &oracle.nuisances, 1.0), row[2].r);
        }
        let ys: Vec<f64> = law.rows.iter().map(|r| r[2].r).collect();
        let (direct, _) = solve_oracle_h_with(&law, 3, &ys).unwrap();
        assert_eq!(direct, oracle.nuisances.h[2]);
    }
}
