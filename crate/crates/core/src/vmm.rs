//! Sequential kernel VMM estimation of the bridge functions `q^(t)`, `h^(t)`.
//!
//! Each step solves a kernel method-of-moments problem whose adversarial test
//! functions live in the RKHS spanned by the observed support. For tabular
//! bridge classes the residual vector `rho` is affine in the unknown table, so
//! the minimiser of `rho' Q^-1 rho + lambda ||f||^2_{2,n}` solves a symmetric
//! positive-definite system. All sample sums are pre-aggregated per support
//! cell, which keeps assembly linear in `n`.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Bridge, Error, Result};
use crate::kernel::{embed, gram, KernelSpec};
use crate::linalg::{condition_number, symmetrize};
use crate::pomdp::{EvalPolicy, Trajectory};
use crate::reduction::{dataset_tuples, ControlSpace, ControlTuple, ControlValue, PciScheme};
use crate::tabular::{Cell, TabularFn};

/// Hyperparameters shared by every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmmConfig {
    /// RKHS-norm penalty on the test function.
    pub alpha: f64,
    /// Weight of the squared empirical-norm ridge on the bridge function.
    pub lambda: f64,
    pub outer_iterations: usize,
    pub jitter: f64,
    pub kernel: KernelSpec,
}

impl Default for VmmConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            lambda: 1e-4,
            outer_iterations: 2,
            jitter: 1e-8,
            kernel: KernelSpec::default(),
        }
    }
}

impl VmmConfig {
    pub fn with_penalties(alpha: f64, lambda: f64) -> Self {
        Self {
            alpha,
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.alpha) || !finite_nonneg(self.lambda) || !finite_nonneg(self.jitter) {
            return Err(Error::InvalidArgument(
                "alpha, lambda and jitter must be finite and >= 0".into(),
            ));
        }
        if self.outer_iterations == 0 {
            return Err(Error::InvalidArgument("outer_iterations must be >= 1".into()));
        }
        if self.kernel.scale_multipliers.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::InvalidArgument("kernel scale multipliers must be positive".into()));
        }
        Ok(())
    }
}

/// Value spaces of the controls at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLayout {
    pub n_actions: usize,
    /// `Z_t` space for `t = 1..=H` (index `t - 1`).
    pub z_spaces: Vec<ControlSpace>,
    pub w_space: ControlSpace,
}

impl ControlLayout {
    pub fn new(scheme: &PciScheme, n_obs: usize, n_actions: usize, horizon: usize) -> Self {
        Self {
            n_actions,
            z_spaces: (1..=horizon).map(|t| scheme.z_space(t, n_obs)).collect(),
            w_space: scheme.w_space(n_obs),
        }
    }

    pub fn horizon(&self) -> usize {
        self.z_spaces.len()
    }
}

/// The column `D_t^(1..n)` of a dataset.
#[derive(Debug, Clone)]
pub struct StepProblem<'a> {
    pub t: usize,
    pub tuples: Vec<&'a ControlTuple>,
    pub z_space: ControlSpace,
    pub w_space: ControlSpace,
    pub n_actions: usize,
}

impl<'a> StepProblem<'a> {
    pub fn new(data: &'a [Vec<ControlTuple>], t: usize, layout: &ControlLayout) -> Self {
        Self {
            t,
            tuples: data.iter().map(|row| &row[t - 1]).collect(),
            z_space: layout.z_spaces[t - 1],
            w_space: layout.w_space,
            n_actions: layout.n_actions,
        }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

/// Numerical record of one ComputeQ / ComputeH solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub t: usize,
    pub bridge: String,
    pub iteration: usize,
    pub support_size: usize,
    pub test_support_size: usize,
    /// Max-abs residual of the normal equations at the solution.
    pub residual: f64,
    pub weight_condition: f64,
    pub normal_condition: f64,
    pub objective: f64,
    pub prior_objective: f64,
}

fn sorted_unique<T: Ord + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = items.collect();
    v.sort();
    v.dedup();
    v
}

fn check_weights(eta: &[f64], n: usize, t: usize, which: Bridge) -> Result<()> {
    if eta.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{which} at t={t}: {} weights for {n} trajectories",
            eta.len()
        )));
    }
    if eta.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("{which} at t={t}: non-finite eta")));
    }
    Ok(())
}

/// Quadratic program `min_x (B x - c)' Q^-1 (B x - c) + lambda sum_j p_j x_j^2`
/// with `Q = mtm / n + alpha G + jitter I`.
struct MomentProblem {
    gram: DMatrix<f64>,
    mtm: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DVector<f64>,
    freq: DVector<f64>,
    n: f64,
}

struct MomentSolution {
    x: DVector<f64>,
    residual: f64,
    weight_condition: f64,
    normal_condition: f64,
    weight: Cholesky<f64, nalgebra::Dyn>,
}

impl MomentProblem {
    fn solve(&self, config: &VmmConfig) -> std::result::Result<MomentSolution, String> {
        let dim = self.gram.nrows();
        let mut q = &self.mtm / self.n + &self.gram * config.alpha + DMatrix::identity(dim, dim) * config.jitter;
        symmetrize(&mut q);
        let weight_condition = condition_number(&q);
        let weight = Cholesky::new(q).ok_or("moment weighting matrix is not positive definite")?;
        let qinv_b = weight.solve(&self.b);
        let qinv_c = weight.solve(&self.c);
        let mut normal = self.b.transpose() * qinv_b;
        for j in 0..normal.nrows() {
            normal[(j, j)] += config.lambda * self.freq[j];
        }
        symmetrize(&mut normal);
        let rhs = self.b.transpose() * qinv_c;
        let normal_condition = condition_number(&normal);
        let chol = Cholesky::new(normal.clone()).ok_or_else(|| {
            format!("normal equations are singular (condition {normal_condition:.3e})")
        })?;
        let x = chol.solve(&rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err("solution is not finite".into());
        }
        let residual = (&normal * &x - rhs).amax();
        Ok(MomentSolution {
            x,
            residual,
            weight_condition,
            normal_condition,
            weight,
        })
    }

    fn objective(&self, weight: &Cholesky<f64, nalgebra::Dyn>, x: &DVector<f64>, lambda: f64) -> f64 {
        let rho = &self.b * x - &self.c;
        let ridge: f64 = self.freq.iter().zip(x.iter()).map(|(p, v)| p * v * v).sum();
        rho.dot(&weight.solve(&rho)) + lambda * ridge
    }
}

/// ComputeQ: fits `q^(t)` on the observed `(Z_t, A_t)` support from
/// `E_n[eta (g(W,A) q(Z,A) - sum_a g(W,a))] = 0` over RKHS test functions `g`.
pub fn compute_q(
    problem: &StepProblem<'_>,
    config: &VmmConfig,
    prior_q: &TabularFn,
    eta: &[f64],
) -> Result<(TabularFn, SolveReport)> {
    let (t, n, na) = (problem.t, problem.len(), problem.n_actions);
    if n == 0 {
        return Err(Error::InvalidArgument(format!("q at t={t}: no data")));
    }
    check_weights(eta, n, t, Bridge::Q)?;

    // test-function support S(W; A), indexed w * na + a
    let s_w = sorted_unique(problem.tuples.iter().map(|d| d.w));
    let w_index = |w: ControlValue| s_w.binary_search(&w).expect("w drawn from data");
    let test_points: Vec<Vec<f64>> = s_w
        .iter()
        .flat_map(|w| (0..na).map(move |a| embed(*w, problem.w_space, a, na)))
        .collect();
    let n_test = test_points.len();
    let mut test_counts = vec![0.0; n_test];
    for d in &problem.tuples {
        test_counts[w_index(d.w) * na + d.a] += 1.0;
    }
    let kernel = config.kernel.calibrate(
        test_points
            .iter()
            .zip(&test_counts)
            .filter(|(_, c)| **c > 0.0)
            .map(|(x, c)| (x.as_slice(), *c)),
    );
    let g = gram(&kernel, &test_points, &test_points);
    let l_tilde: Vec<DVector<f64>> = (0..s_w.len())
        .map(|k| (0..na).map(|a| g.column(k * na + a).into_owned()).sum())
        .collect();

    // unknowns on S(Z, A)
    let s_za: Vec<Cell> = sorted_unique(problem.tuples.iter().map(|d| (d.z, d.a)));
    let mut freq = DVector::zeros(s_za.len());
    let mut groups: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for (d, &e) in problem.tuples.iter().zip(eta) {
        let j = s_za.binary_search(&(d.z, d.a)).expect("cell drawn from data");
        freq[j] += 1.0;
        let entry = groups.entry((j, w_index(d.w))).or_insert((0.0, 0.0));
        entry.0 += e;
        entry.1 += e * e;
    }
    freq /= n as f64;

    let nf = n as f64;
    let mut mtm = DMatrix::zeros(n_test, n_test);
    let mut b = DMatrix::zeros(n_test, s_za.len());
    let mut c = DVector::zeros(n_test);
    for (&(j, k), &(sum_eta, sum_eta2)) in &groups {
        let (z, a) = s_za[j];
        let l = g.column(k * na + a);
        let v = &l * prior_q.value_at(z, a) - &l_tilde[k];
        mtm.ger(sum_eta2, &v, &v, 1.0);
        b.column_mut(j).axpy(sum_eta / nf, &l, 1.0);
        c.axpy(sum_eta / nf, &l_tilde[k], 1.0);
    }

    let moments = MomentProblem {
        gram: g,
        mtm,
        b,
        c,
        freq,
        n: nf,
    };
    let prior = DVector::from_iterator(s_za.len(), s_za.iter().map(|(z, a)| prior_q.value_at(*z, *a)));
    let fitted = finish(&moments, config, &prior, t, Bridge::Q)?;
    let q = TabularFn::from_pairs(s_za.iter().copied().zip(fitted.0.iter().copied()), 1.0);
    Ok((q, fitted.1))
}

/// ComputeH: fits `h^(t)` on the observed `(W_t, A_t)` support from
/// `E_n[eta f(Z,A) (h(W,A) - mu)] = 0` over RKHS test functions `f`.
pub fn compute_h(
    problem: &StepProblem<'_>,
    config: &VmmConfig,
    prior_h: &TabularFn,
    eta: &[f64],
    mu: &[f64],
) -> Result<(TabularFn, SolveReport)> {
    let (t, n, na) = (problem.t, problem.len(), problem.n_actions);
    if n == 0 {
        return Err(Error::InvalidArgument(format!("h at t={t}: no data")));
    }
    check_weights(eta, n, t, Bridge::H)?;
    check_weights(mu, n, t, Bridge::H)?;

    // test-function support S(Z, A)
    let s_za: Vec<Cell> = sorted_unique(problem.tuples.iter().map(|d| (d.z, d.a)));
    let test_points: Vec<Vec<f64>> = s_za
        .iter()
        .map(|(z, a)| embed(*z, problem.z_space, *a, na))
        .collect();
    let n_test = s_za.len();
    let za_index = |d: &ControlTuple| s_za.binary_search(&(d.z, d.a)).expect("cell drawn from data");

    // unknowns on S(W, A)
    let s_wa: Vec<Cell> = sorted_unique(problem.tuples.iter().map(|d| (d.w, d.a)));
    let mut freq = DVector::zeros(s_wa.len());
    let mut test_counts = vec![0.0; n_test];
    let mut sq_resid = vec![0.0; n_test];
    let mut target = vec![0.0; n_test];
    let mut groups: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for ((d, &e), &m) in problem.tuples.iter().zip(eta).zip(mu) {
        let i = za_index(d);
        let j = s_wa.binary_search(&(d.w, d.a)).expect("cell drawn from data");
        test_counts[i] += 1.0;
        freq[j] += 1.0;
        let resid = e * (prior_h.value_at(d.w, d.a) - m);
        sq_resid[i] += resid * resid;
        target[i] += e * m;
        *groups.entry((i, j)).or_insert(0.0) += e;
    }
    freq /= n as f64;

    let kernel = config.kernel.calibrate(
        test_points
            .iter()
            .zip(&test_counts)
            .map(|(x, c)| (x.as_slice(), *c)),
    );
    let g = gram(&kernel, &test_points, &test_points);
    let nf = n as f64;
    let mut mtm = DMatrix::zeros(n_test, n_test);
    let mut c = DVector::zeros(n_test);
    for i in 0..n_test {
        let l = g.column(i);
        mtm.ger(sq_resid[i], &l, &l, 1.0);
        c.axpy(target[i] / nf, &l, 1.0);
    }
    let mut b = DMatrix::zeros(n_test, s_wa.len());
    for (&(i, j), &sum_eta) in &groups {
        b.column_mut(j).axpy(sum_eta / nf, &g.column(i), 1.0);
    }

    let moments = MomentProblem {
        gram: g,
        mtm,
        b,
        c,
        freq,
        n: nf,
    };
    let prior = DVector::from_iterator(s_wa.len(), s_wa.iter().map(|(w, a)| prior_h.value_at(*w, *a)));
    let fitted = finish(&moments, config, &prior, t, Bridge::H)?;
    let h = TabularFn::from_pairs(s_wa.iter().copied().zip(fitted.0.iter().copied()), 0.0);
    Ok((h, fitted.1))
}

fn finish(
    moments: &MomentProblem,
    config: &VmmConfig,
    prior: &DVector<f64>,
    t: usize,
    which: Bridge,
) -> Result<(DVector<f64>, SolveReport)> {
    let sol = moments.solve(config).map_err(|detail| Error::SingularSystem { t, which, detail })?;
    let report = SolveReport {
        t,
        bridge: which.to_string(),
        iteration: 0,
        support_size: sol.x.len(),
        test_support_size: moments.gram.nrows(),
        residual: sol.residual,
        weight_condition: sol.weight_condition,
        normal_condition: sol.normal_condition,
        objective: moments.objective(&sol.weight, &sol.x, config.lambda),
        prior_objective: moments.objective(&sol.weight, prior, config.lambda),
    };
    Ok((sol.x, report))
}

/// Fitted `q^(1..H)` and `h^(1..H)` (index `t - 1`).
#[derive(Debug, Clone)]
pub struct NuisanceSet {
    pub q: Vec<TabularFn>,
    pub h: Vec<TabularFn>,
    pub n_actions: usize,
    pub reports: Vec<SolveReport>,
}

impl NuisanceSet {
    /// Nuisances given directly, e.g. oracle solutions or test fixtures.
    pub fn new(q: Vec<TabularFn>, h: Vec<TabularFn>, n_actions: usize) -> Self {
        assert_eq!(q.len(), h.len(), "q and h must cover the same horizon");
        Self {
            q,
            h,
            n_actions,
            reports: Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    pub fn q_at(&self, t: usize) -> &TabularFn {
        &self.q[t - 1]
    }

    pub fn h_at(&self, t: usize) -> &TabularFn {
        &self.h[t - 1]
    }

    pub fn unseen_lookups(&self) -> usize {
        self.q.iter().chain(&self.h).map(TabularFn::unseen_lookups).sum()
    }

    pub fn diagnostics_json(&self) -> serde_json::Value {
        let max_residual = self.reports.iter().map(|r| r.residual).fold(0.0, f64::max);
        let max_condition = self
            .reports
            .iter()
            .map(|r| r.weight_condition.max(r.normal_condition))
            .fold(0.0, f64::max);
        serde_json::json!({
            "unseen_q": self.q.iter().map(TabularFn::unseen_lookups).collect::<Vec<_>>(),
            "unseen_h": self.h.iter().map(TabularFn::unseen_lookups).collect::<Vec<_>>(),
            "max_residual": max_residual,
            "max_condition": if max_condition.is_finite() { serde_json::json!(max_condition) } else { serde_json::json!("inf") },
            "solves": self.reports,
        })
    }
}

/// `eta_t = eta_{t-1} 1{A_{t-1} = E_{t-1}} q^(t-1)(Z_{t-1}, A_{t-1})`.
fn advance_eta(eta: &mut [f64], data: &[Vec<ControlTuple>], t_prev: usize, q_prev: &TabularFn) {
    for (e, row) in eta.iter_mut().zip(data) {
        let d = &row[t_prev - 1];
        *e *= if d.matched() { q_prev.get(d.z, d.a) } else { 0.0 };
    }
}

/// Runs the sequential estimator: forward over `t` for `q`, backward for `h`,
/// repeated `outer_iterations` times with the previous pass as prior.
pub fn fit_nuisances_from_tuples(
    data: &[Vec<ControlTuple>],
    layout: &ControlLayout,
    config: &VmmConfig,
    gamma: f64,
) -> Result<NuisanceSet> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot fit nuisances on an empty dataset".into()));
    }
    let horizon = layout.horizon();
    if data.iter().any(|row| row.len() != horizon) {
        return Err(Error::InvalidArgument("tuple rows must all have length H".into()));
    }
    let n = data.len();
    let problems: Vec<StepProblem<'_>> = (1..=horizon).map(|t| StepProblem::new(data, t, layout)).collect();
    let mut prior_q: Vec<TabularFn> = (0..horizon).map(|_| TabularFn::constant(1.0)).collect();
    let mut prior_h: Vec<TabularFn> = (0..horizon).map(|_| TabularFn::constant(0.0)).collect();
    let mut reports = Vec::new();

    for iteration in 0..config.outer_iterations {
        let mut eta = vec![1.0; n];
        let mut etas: Vec<Vec<f64>> = Vec::with_capacity(horizon);
        let mut q_hat: Vec<TabularFn> = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            if t > 1 {
                advance_eta(&mut eta, data, t - 1, &q_hat[t - 2]);
            }
            let (q, mut report) = compute_q(&problems[t - 1], config, &prior_q[t - 1], &eta)?;
            report.iteration = iteration;
            reports.push(report);
            q_hat.push(q);
            etas.push(eta.clone());
        }

        let mut h_hat: Vec<Option<TabularFn>> = vec![None; horizon];
        let mut mu_next = vec![0.0; n];
        for t in (1..=horizon).rev() {
            let mu: Vec<f64> = data
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let d = &row[t - 1];
                    let omega = if t == horizon {
                        0.0
                    } else {
                        let next = &row[t];
                        let h = h_hat[t].as_ref().expect("fitted on the previous backward step");
                        let q = &q_hat[t];
                        let sum_h: f64 = (0..layout.n_actions).map(|a| h.get(next.w, a)).sum();
                        sum_h + q.get(next.z, next.a) * (mu_next[i] - h.get(next.w, next.a))
                    };
                    if d.matched() {
                        d.r + gamma * omega
                    } else {
                        0.0
                    }
                })
                .collect();
            let (h, mut report) = compute_h(&problems[t - 1], config, &prior_h[t - 1], &etas[t - 1], &mu)?;
            report.iteration = iteration;
            reports.push(report);
            h_hat[t - 1] = Some(h);
            mu_next = mu;
        }
        prior_q = q_hat;
        prior_h = h_hat.into_iter().map(|h| h.expect("all steps fitted")).collect();
    }
    Ok(NuisanceSet {
        q: prior_q,
        h: prior_h,
        n_actions: layout.n_actions,
        reports,
    })
}

/// Fits nuisances for `eval` under `scheme` from logged trajectories.
pub fn fit_nuisances(
    data: &[Trajectory],
    eval: &EvalPolicy,
    scheme: &PciScheme,
    n_obs: usize,
    n_actions: usize,
    config: &VmmConfig,
    gamma: f64,
) -> Result<NuisanceSet> {
    let horizon = data
        .first()
        .map(Trajectory::horizon)
        .ok_or_else(|| Error::InvalidArgument("cannot fit nuisances on an empty dataset".into()))?;
    let tuples = dataset_tuples(data, eval, scheme)?;
    let layout = ControlLayout::new(scheme, n_obs, n_actions, horizon);
    fit_nuisances_from_tuples(&tuples, &layout, config, gamma)
}
