//! Tabular POMDPs, logging and evaluation policies, trajectory sampling and
//! exact policy values by path enumeration.
//!
//! Time indexing follows the logged-data convention: a trajectory starts with a
//! prior step `(S_0, O_0, A_0)` whose only observable trace is `O_0`, followed by
//! `H` recorded steps `(O_t, A_t, R_t)` for `t = 1..=H`.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on distribution row sums.
pub const ROW_TOL: f64 = 1e-12;

/// Maximum number of paths `exact_policy_value` and the oracle will enumerate.
pub const ENUMERATION_BUDGET: f64 = 1e7;

/// A finite POMDP with deterministic mean rewards.
///
/// Tensor layout (all indexed by absolute time):
/// - `obs_kernel[t][s][o]` for `t = 0..=H`
/// - `transition[t][s][a][s']` for `t = 0..H` (`t = 0` is the prior step)
/// - `reward[t - 1][s][a]` for `t = 1..=H`
/// - `prior_action[s][a]` is the law of the unrecorded prior action `A_0`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPomdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_obs: usize,
    pub horizon: usize,
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
    pub r_max: f64,
    pub obs_kernel: Vec<Vec<Vec<f64>>>,
    pub prior_state: Vec<f64>,
    pub prior_action: Vec<Vec<f64>>,
    pub time_homogeneous: bool,
}

fn check_dist(row: &[f64], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(Error::InvalidModel(format!(
            "{what}: expected {len} entries, got {}",
            row.len()
        )));
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidModel(format!("{what}: negative or non-finite entry")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(Error::InvalidModel(format!("{what}: sums to {total}")));
    }
    Ok(())
}

impl TabularPomdp {
    pub fn validate(&self) -> Result<()> {
        let (ns, na, no, h) = (self.n_states, self.n_actions, self.n_obs, self.horizon);
        if h == 0 {
            return Err(Error::InvalidModel("horizon must be >= 1".into()));
        }
        if ns == 0 || na == 0 || no == 0 {
            return Err(Error::InvalidModel("empty state, action or observation space".into()));
        }
        if self.obs_kernel.len() != h + 1 || self.transition.len() != h || self.reward.len() != h
        {
            return Err(Error::InvalidModel(format!(
                "time dimension mismatch: obs {} (want {}), transition {} (want {h}), reward {} (want {h})",
                self.obs_kernel.len(),
                h + 1,
                self.transition.len(),
                self.reward.len()
            )));
        }
        check_dist(&self.prior_state, ns, "prior_state")?;
        if self.prior_action.len() != ns {
            return Err(Error::InvalidModel("prior_action: wrong number of states".into()));
        }
        for (s, row) in self.prior_action.iter().enumerate() {
            check_dist(row, na, &format!("prior_action[{s}]"))?;
        }
        for (t, kernel) in self.obs_kernel.iter().enumerate() {
            if kernel.len() != ns {
                return Err(Error::InvalidModel(format!("obs_kernel[{t}]: wrong number of states")));
            }
            for (s, row) in kernel.iter().enumerate() {
                check_dist(row, no, &format!("obs_kernel[{t}][{s}]"))?;
            }
        }
        for (t, step) in self.transition.iter().enumerate() {
            if step.len() != ns {
                return Err(Error::InvalidModel(format!("transition[{t}]: wrong number of states")));
            }
            for (s, by_action) in step.iter().enumerate() {
                if by_action.len() != na {
                    return Err(Error::InvalidModel(format!(
                        "transition[{t}][{s}]: wrong number of actions"
                    )));
                }
                for (a, row) in by_action.iter().enumerate() {
                    check_dist(row, ns, &format!("transition[{t}][{s}][{a}]"))?;
                }
            }
        }
        for (t, step) in self.reward.iter().enumerate() {
            if step.len() != ns || step.iter().any(|r| r.len() != na) {
                return Err(Error::InvalidModel(format!("reward[{t}]: wrong shape")));
            }
            if step.iter().flatten().any(|r| !r.is_finite() || r.abs() > self.r_max) {
                return Err(Error::InvalidModel(format!(
                    "reward[{t}]: entry exceeds r_max = {}",
                    self.r_max
                )));
            }
        }
        if self.time_homogeneous {
            let same = self.obs_kernel.windows(2).all(|w| w[0] == w[1])
                && self.transition.windows(2).all(|w| w[0] == w[1])
                && self.reward.windows(2).all(|w| w[0] == w[1]);
            if !same {
                return Err(Error::InvalidModel(
                    "time_homogeneous is set but tensors vary with t".into(),
                ));
            }
        }
        Ok(())
    }

    /// `P_O(. | S_t = s)` for `t = 0..=H`.
    pub fn obs_dist(&self, t: usize, s: usize) -> &[f64] {
        &self.obs_kernel[t][s]
    }

    /// `P_T(. | S_t = s, A_t = a)` for `t = 0..H`.
    pub fn next_state_dist(&self, t: usize, s: usize, a: usize) -> &[f64] {
        &self.transition[t][s][a]
    }

    /// Mean reward for `t = 1..=H`.
    pub fn reward_at(&self, t: usize, s: usize, a: usize) -> f64 {
        self.reward[t - 1][s][a]
    }

    /// Returns a copy with every reward multiplied by `factor`.
    pub fn scale_rewards(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for r in out.reward.iter_mut().flatten().flatten() {
            *r *= factor;
        }
        out.r_max *= factor.abs();
        out
    }

    /// Number of paths the enumerators consider, `n_obs^H * n_states^(H+1)`.
    pub fn path_count(&self) -> f64 {
        (self.n_obs as f64).powi(self.horizon as i32)
            * (self.n_states as f64).powi(self.horizon as i32 + 1)
    }

    pub fn check_enumeration_budget(&self) -> Result<()> {
        let paths = self.path_count();
        if paths > ENUMERATION_BUDGET {
            return Err(Error::EnumerationTooLarge {
                paths,
                budget: ENUMERATION_BUDGET,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }
}

/// Logging policy acting on the hidden state: `probs[t - 1][s][a]` for `t = 1..=H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPolicy {
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl BehaviorPolicy {
    pub fn time_homogeneous(row_per_state: Vec<Vec<f64>>, horizon: usize) -> Self {
        Self {
            probs: vec![row_per_state; horizon],
        }
    }

    pub fn dist(&self, t: usize, s: usize) -> &[f64] {
        &self.probs[t - 1][s]
    }

    pub fn validate(&self, pomdp: &TabularPomdp) -> Result<()> {
        if self.probs.len() != pomdp.horizon {
            return Err(Error::InvalidModel(format!(
                "behavior policy covers {} steps, horizon is {}",
                self.probs.len(),
                pomdp.horizon
            )));
        }
        for (t, step) in self.probs.iter().enumerate() {
            if step.len() != pomdp.n_states {
                return Err(Error::InvalidModel(format!("behavior[{t}]: wrong number of states")));
            }
            for (s, row) in step.iter().enumerate() {
                check_dist(row, pomdp.n_actions, &format!("behavior[{t}][{s}]"))?;
            }
        }
        Ok(())
    }
}

/// Scores actions given `(O_1..O_t, A_1..A_{t-1})`; the highest score wins and
/// ties go to the lowest action index.
pub type HistoryScorer = Arc<dyn Fn(&[usize], &[usize]) -> Vec<f64> + Send + Sync>;

/// Deterministic target policy that only sees observable data.
#[derive(Clone)]
pub enum EvalPolicy {
    /// `table[o]` is the action taken on current observation `o`.
    CurrentObs { name: String, table: Vec<usize> },
    /// Arbitrary function of the observable history since `t = 1`.
    History { name: String, scorer: HistoryScorer },
}

impl fmt::Debug for EvalPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalPolicy::CurrentObs { name, table } => f
                .debug_struct("CurrentObs")
                .field("name", name)
                .field("table", table)
                .finish(),
            EvalPolicy::History { name, .. } => {
                f.debug_struct("History").field("name", name).finish_non_exhaustive()
            }
        }
    }
}

impl EvalPolicy {
    pub fn current_obs(name: impl Into<String>, table: Vec<usize>) -> Self {
        EvalPolicy::CurrentObs {
            name: name.into(),
            table,
        }
    }

    pub fn history(name: impl Into<String>, scorer: HistoryScorer) -> Self {
        EvalPolicy::History {
            name: name.into(),
            scorer,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            EvalPolicy::CurrentObs { name, .. } | EvalPolicy::History { name, .. } => name,
        }
    }

    /// True when the action depends on the current observation alone.
    pub fn is_current_obs(&self) -> bool {
        matches!(self, EvalPolicy::CurrentObs { .. })
    }

    /// Action at time `t = obs.len()` given `obs = O_1..O_t` and `actions = A_1..A_{t-1}`.
    pub fn action(&self, obs: &[usize], actions: &[usize]) -> usize {
        debug_assert!(!obs.is_empty());
        match self {
            EvalPolicy::CurrentObs { table, .. } => table[*obs.last().expect("t >= 1")],
            EvalPolicy::History { scorer, .. } => argmax_lowest(&scorer(obs, actions)),
        }
    }
}

fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (a, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = a;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub o: usize,
    pub a: usize,
    pub r: f64,
}

/// Diagnostic-only hidden part of a logged episode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hidden {
    pub s0: usize,
    pub a0: usize,
    /// `S_1..S_H`.
    pub states: Vec<usize>,
}

/// One logged episode `(O_0, (O_t, A_t, R_t)_{t=1..H})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub o0: usize,
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Hidden>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// `O_t` for `t = 0..=H`.
    pub fn obs(&self, t: usize) -> usize {
        if t == 0 {
            self.o0
        } else {
            self.steps[t - 1].o
        }
    }

    /// `A_t` for `t = 1..=H`.
    pub fn action(&self, t: usize) -> usize {
        self.steps[t - 1].a
    }

    /// `R_t` for `t = 1..=H`.
    pub fn reward(&self, t: usize) -> f64 {
        self.steps[t - 1].r
    }

    /// `O_1..O_t`.
    pub fn obs_history(&self, t: usize) -> Vec<usize> {
        self.steps[..t].iter().map(|s| s.o).collect()
    }

    /// `A_1..A_{t-1}`.
    pub fn action_history(&self, t: usize) -> Vec<usize> {
        self.steps[..t - 1].iter().map(|s| s.a).collect()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut disc = 1.0;
        let mut total = 0.0;
        for step in &self.steps {
            total += disc * step.r;
            disc *= gamma;
        }
        total
    }

    /// Copy without the hidden diagnostic part.
    pub fn observable(&self) -> Trajectory {
        Trajectory {
            o0: self.o0,
            steps: self.steps.clone(),
            hidden: None,
        }
    }

    pub fn check_bounds(&self, pomdp: &TabularPomdp) -> Result<()> {
        if self.steps.len() != pomdp.horizon {
            return Err(Error::InvalidArgument(format!(
                "trajectory has {} steps, horizon is {}",
                self.steps.len(),
                pomdp.horizon
            )));
        }
        let bad_obs = self.o0 >= pomdp.n_obs || self.steps.iter().any(|s| s.o >= pomdp.n_obs);
        let bad_act = self.steps.iter().any(|s| s.a >= pomdp.n_actions);
        if bad_obs || bad_act {
            return Err(Error::InvalidArgument("trajectory index out of alphabet".into()));
        }
        Ok(())
    }
}

/// The NoisyObs benchmark: model, logging policy and the three target policies.
#[derive(Debug, Clone)]
pub struct NoisyObs {
    pub pomdp: TabularPomdp,
    pub behavior: BehaviorPolicy,
    pub easy: EvalPolicy,
    pub hard: EvalPolicy,
    pub optim: EvalPolicy,
}

impl NoisyObs {
    pub fn policy(&self, name: &str) -> Option<&EvalPolicy> {
        match name {
            "easy" => Some(&self.easy),
            "hard" => Some(&self.hard),
            "optim" => Some(&self.optim),
            _ => None,
        }
    }

    pub fn policies(&self) -> [&EvalPolicy; 3] {
        [&self.easy, &self.hard, &self.optim]
    }
}

pub const NOISYOBS_HORIZON: usize = 3;

/// Builds NoisyObs with emission noise `eps_noise`: the correct observation with
/// probability `1 - eps`, each wrong one with `eps / 2`.
pub fn build_noisyobs(eps_noise: f64) -> Result<NoisyObs> {
    build_noisyobs_with_horizon(eps_noise, NOISYOBS_HORIZON)
}

pub fn build_noisyobs_with_horizon(eps_noise: f64, horizon: usize) -> Result<NoisyObs> {
    if !(0.0..=1.0).contains(&eps_noise) {
        return Err(Error::InvalidArgument(format!(
            "eps_noise must lie in [0, 1], got {eps_noise}"
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let (ns, na) = (3, 2);
    // (next state, reward) for a1 and a2 from s1, s2, s3
    let dynamics = [[(1, 3.0), (0, 0.0)], [(0, 1.0), (2, -2.0)], [(0, 8.0), (1, -2.0)]];
    let mut trans = vec![vec![vec![0.0; ns]; na]; ns];
    let mut reward = vec![vec![0.0; na]; ns];
    for s in 0..ns {
        for a in 0..na {
            let (next, r) = dynamics[s][a];
            trans[s][a][next] = 1.0;
            reward[s][a] = r;
        }
    }
    let emission: Vec<Vec<f64>> = (0..ns)
        .map(|s| {
            (0..3)
                .map(|o| if o == s { 1.0 - eps_noise } else { eps_noise / 2.0 })
                .collect()
        })
        .collect();
    let logging = vec![vec![0.8, 0.2], vec![0.8, 0.2], vec![0.2, 0.8]];
    let pomdp = TabularPomdp {
        n_states: ns,
        n_actions: na,
        n_obs: 3,
        horizon,
        transition: vec![trans; horizon],
        reward: vec![reward; horizon],
        r_max: 8.0,
        obs_kernel: vec![emission; horizon + 1],
        prior_state: vec![0.5, 0.3, 0.2],
        prior_action: logging.clone(),
        time_homogeneous: true,
    };
    pomdp.validate()?;
    Ok(NoisyObs {
        pomdp,
        behavior: BehaviorPolicy::time_homogeneous(logging, horizon),
        easy: EvalPolicy::current_obs("easy", vec![0, 0, 1]),
        hard: EvalPolicy::current_obs("hard", vec![1, 1, 0]),
        optim: EvalPolicy::current_obs("optim", vec![0, 1, 0]),
    })
}

/// A three-state model with informative noisy observations, mostly
/// predictable transitions and a randomised prior step. For current-observation
/// target policies under the previous-observation reduction every bridge
/// function exists and is unique, so population identities hold exactly.
pub fn build_well_posed() -> (TabularPomdp, BehaviorPolicy, EvalPolicy) {
    let (ns, na, h) = (3, 2, 3);
    let trans: Vec<Vec<Vec<f64>>> = (0..ns)
        .map(|s| {
            (0..na)
                .map(|a| (0..ns).map(|x| if x == (s + a + 1) % ns { 0.9 } else { 0.05 }).collect())
                .collect()
        })
        .collect();
    let emission: Vec<Vec<f64>> = (0..ns)
        .map(|s| (0..ns).map(|o| if o == s { 0.8 } else { 0.1 }).collect())
        .collect();
    let reward = vec![vec![1.0, -0.5], vec![0.25, 2.0], vec![-1.0, 0.5]];
    let logging = vec![vec![0.7, 0.3], vec![0.4, 0.6], vec![0.25, 0.75]];
    let pomdp = TabularPomdp {
        n_states: ns,
        n_actions: na,
        n_obs: ns,
        horizon: h,
        transition: vec![trans; h],
        reward: vec![reward; h],
        r_max: 2.0,
        obs_kernel: vec![emission; h + 1],
        prior_state: vec![0.5, 0.2, 0.3],
        prior_action: logging.clone(),
        time_homogeneous: true,
    };
    let behavior = BehaviorPolicy::time_homogeneous(logging, h);
    (pomdp, behavior, EvalPolicy::current_obs("target", vec![0, 1, 1]))
}

/// Draws an index from a discrete distribution using one uniform variate.
pub(crate) fn draw<R: Rng + ?Sized>(rng: &mut R, dist: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum; take the last positive entry
    dist.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// RNG for trajectory `index` of a dataset drawn with `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Samples one logged trajectory under the logging policy.
pub fn sample_trajectory(
    pomdp: &TabularPomdp,
    behavior: &BehaviorPolicy,
    seed: u64,
    with_hidden: bool,
) -> Trajectory {
    sample_trajectory_with(pomdp, behavior, &mut trajectory_rng(seed, 0), with_hidden)
}

pub fn sample_trajectory_with<R: Rng + ?Sized>(
    pomdp: &TabularPomdp,
    behavior: &BehaviorPolicy,
    rng: &mut R,
    with_hidden: bool,
) -> Trajectory {
    let s0 = draw(rng, &pomdp.prior_state);
    let o0 = draw(rng, pomdp.obs_dist(0, s0));
    let a0 = draw(rng, &pomdp.prior_action[s0]);
    let mut s = draw(rng, pomdp.next_state_dist(0, s0, a0));
    let mut steps = Vec::with_capacity(pomdp.horizon);
    let mut states = Vec::with_capacity(pomdp.horizon);
    for t in 1..=pomdp.horizon {
        states.push(s);
        let o = draw(rng, pomdp.obs_dist(t, s));
        let a = draw(rng, behavior.dist(t, s));
        let r = pomdp.reward_at(t, s, a);
        steps.push(Step { o, a, r });
        if t < pomdp.horizon {
            s = draw(rng, pomdp.next_state_dist(t, s, a));
        }
    }
    Trajectory {
        o0,
        steps,
        hidden: with_hidden.then_some(Hidden { s0, a0, states }),
    }
}

/// Samples `n` trajectories; trajectory `i` depends only on `(seed, i)`.
pub fn sample_dataset(
    pomdp: &TabularPomdp,
    behavior: &BehaviorPolicy,
    seed: u64,
    n: usize,
    with_hidden: bool,
) -> Vec<Trajectory> {
    (0..n)
        .map(|i| {
            let mut rng = trajectory_rng(seed, i as u64);
            sample_trajectory_with(pomdp, behavior, &mut rng, with_hidden)
        })
        .collect()
}

/// Discounted return of one episode of the target policy.
pub fn rollout_return<R: Rng + ?Sized>(
    pomdp: &TabularPomdp,
    eval: &EvalPolicy,
    gamma: f64,
    rng: &mut R,
) -> f64 {
    let s0 = draw(rng, &pomdp.prior_state);
    let _o0 = draw(rng, pomdp.obs_dist(0, s0));
    let a0 = draw(rng, &pomdp.prior_action[s0]);
    let mut s = draw(rng, pomdp.next_state_dist(0, s0, a0));
    let mut obs = Vec::with_capacity(pomdp.horizon);
    let mut acts = Vec::with_capacity(pomdp.horizon);
    let (mut total, mut disc) = (0.0, 1.0);
    for t in 1..=pomdp.horizon {
        obs.push(draw(rng, pomdp.obs_dist(t, s)));
        let a = eval.action(&obs, &acts);
        acts.push(a);
        total += disc * pomdp.reward_at(t, s, a);
        disc *= gamma;
        if t < pomdp.horizon {
            s = draw(rng, pomdp.next_state_dist(t, s, a));
        }
    }
    total
}

/// How actions are chosen at `t = 1..=H` while enumerating paths.
#[derive(Clone, Copy)]
pub enum ActionRule<'a> {
    Behavior(&'a BehaviorPolicy),
    Eval(&'a EvalPolicy),
    /// Target policy for `t < switch_t`, logging policy from `switch_t` on.
    Switch {
        eval: &'a EvalPolicy,
        behavior: &'a BehaviorPolicy,
        switch_t: usize,
    },
}

/// A complete enumerated path with hidden states.
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub trajectory: Trajectory,
    pub probability: f64,
}

/// Enumerates every positive-probability path of the model under `rule`.
pub fn enumerate_paths(pomdp: &TabularPomdp, rule: ActionRule<'_>) -> Result<Vec<PathRecord>> {
    pomdp.validate()?;
    pomdp.check_enumeration_budget()?;
    let mut out = Vec::new();
    let mut cursor = Cursor {
        pomdp,
        rule,
        obs: Vec::with_capacity(pomdp.horizon),
        acts: Vec::with_capacity(pomdp.horizon),
        rewards: Vec::with_capacity(pomdp.horizon),
        states: Vec::with_capacity(pomdp.horizon),
    };
    for (s0, &p0) in pomdp.prior_state.iter().enumerate() {
        if p0 == 0.0 {
            continue;
        }
        for (o0, &po) in pomdp.obs_dist(0, s0).iter().enumerate() {
            if po == 0.0 {
                continue;
            }
            for (a0, &pa) in pomdp.prior_action[s0].iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (s1, &ps) in pomdp.next_state_dist(0, s0, a0).iter().enumerate() {
                    if ps == 0.0 {
                        continue;
                    }
                    let head = (s0, o0, a0);
                    cursor.walk(1, s1, p0 * po * pa * ps, head, &mut out);
                }
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    pomdp: &'a TabularPomdp,
    rule: ActionRule<'a>,
    obs: Vec<usize>,
    acts: Vec<usize>,
    rewards: Vec<f64>,
    states: Vec<usize>,
}

impl Cursor<'_> {
    fn walk(
        &mut self,
        t: usize,
        s: usize,
        prob: f64,
        head: (usize, usize, usize),
        out: &mut Vec<PathRecord>,
    ) {
        let pomdp = self.pomdp;
        self.states.push(s);
        for (o, &po) in pomdp.obs_dist(t, s).iter().enumerate() {
            if po == 0.0 {
                continue;
            }
            self.obs.push(o);
            let choices: Vec<(usize, f64)> = match self.rule {
                ActionRule::Behavior(b) => behavior_choices(b, t, s),
                ActionRule::Eval(e) => vec![(e.action(&self.obs, &self.acts), 1.0)],
                ActionRule::Switch {
                    eval,
                    behavior,
                    switch_t,
                } => {
                    if t < switch_t {
                        vec![(eval.action(&self.obs, &self.acts), 1.0)]
                    } else {
                        behavior_choices(behavior, t, s)
                    }
                }
            };
            for (a, pa) in choices {
                let p = prob * po * pa;
                self.acts.push(a);
                self.rewards.push(pomdp.reward_at(t, s, a));
                if t == pomdp.horizon {
                    out.push(PathRecord {
                        trajectory: self.record(head),
                        probability: p,
                    });
                } else {
                    for (next, &pn) in pomdp.next_state_dist(t, s, a).iter().enumerate() {
                        if pn > 0.0 {
                            self.walk(t + 1, next, p * pn, head, out);
                        }
                    }
                }
                self.acts.pop();
                self.rewards.pop();
            }
            self.obs.pop();
        }
        self.states.pop();
    }

    fn record(&self, (s0, o0, a0): (usize, usize, usize)) -> Trajectory {
        let steps = self
            .obs
            .iter()
            .zip(&self.acts)
            .zip(&self.rewards)
            .map(|((&o, &a), &r)| Step { o, a, r })
            .collect();
        Trajectory {
            o0,
            steps,
            hidden: Some(Hidden {
                s0,
                a0,
                states: self.states.clone(),
            }),
        }
    }
}

fn behavior_choices(b: &BehaviorPolicy, t: usize, s: usize) -> Vec<(usize, f64)> {
    b.dist(t, s)
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, p)| *p > 0.0)
        .collect()
}

/// Exact `v_gamma(pi_e) = sum_t gamma^(t-1) E_e[R_t]` by enumerating all paths.
pub fn exact_policy_value(pomdp: &TabularPomdp, eval: &EvalPolicy, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let paths = enumerate_paths(pomdp, ActionRule::Eval(eval))?;
    Ok(paths
        .iter()
        .map(|p| p.probability * p.trajectory.discounted_return(gamma))
        .sum())
}

/// Writes trajectories as JSON lines.
pub fn write_jsonl<W: Write>(mut out: W, data: &[Trajectory]) -> Result<()> {
    for traj in data {
        serde_json::to_writer(&mut out, traj)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Trajectory>> {
    let mut data = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        data.push(serde_json::from_str(&line)?);
    }
    Ok(data)
}
