//! Negative-control reductions: which observable quantities play the roles of
//! the control action `Z_t` and control outcome `W_t` at each step.
//!
//! Whether a scheme is valid for a given target policy is a semantic property
//! (the target policy must not depend on what is used as `Z_t`). It is not
//! checked here; on simulated models the population oracle certifies it.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pomdp::{EvalPolicy, Step, Trajectory};

/// A negative-control value: an observation-like category or a real number.
#[derive(Debug, Clone, Copy)]
pub enum ControlValue {
    Category(usize),
    Real(f64),
}

impl PartialEq for ControlValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ControlValue {}

impl PartialOrd for ControlValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ControlValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ControlValue::Category(a), ControlValue::Category(b)) => a.cmp(b),
            (ControlValue::Real(a), ControlValue::Real(b)) => a.total_cmp(b),
            (ControlValue::Category(_), ControlValue::Real(_)) => Ordering::Less,
            (ControlValue::Real(_), ControlValue::Category(_)) => Ordering::Greater,
        }
    }
}

impl Hash for ControlValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            ControlValue::Category(c) => {
                0u8.hash(state);
                c.hash(state);
            }
            ControlValue::Real(r) => {
                1u8.hash(state);
                r.to_bits().hash(state);
            }
        }
    }
}

impl fmt::Display for ControlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlValue::Category(c) => write!(f, "#{c}"),
            ControlValue::Real(r) => write!(f, "{r}"),
        }
    }
}

/// Value space of a control variable, used for embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlSpace {
    Categorical(usize),
    Real,
}

/// Factorisation of an observation into two views `O_t = (O_t', O_t'')`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsSplit {
    /// `O_t'` per observation, used as `W_t`.
    pub w_view: Vec<usize>,
    /// `O_t''` per observation, used as `Z_t`.
    pub z_view: Vec<usize>,
    pub w_size: usize,
    pub z_size: usize,
}

impl ObsSplit {
    pub fn new(w_view: Vec<usize>, z_view: Vec<usize>) -> Result<Self> {
        if w_view.len() != z_view.len() || w_view.is_empty() {
            return Err(Error::InvalidArgument("split views must cover the same observations".into()));
        }
        let w_size = w_view.iter().max().map_or(0, |m| m + 1);
        let z_size = z_view.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            w_view,
            z_view,
            w_size,
            z_size,
        })
    }
}

/// The reductions `(Z_t, W_t)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PciScheme {
    /// `(O_{t-1}, O_t)`.
    PrevObs,
    /// `(O_{max(t-k,0)}, O_t)`.
    KPrevObs(usize),
    /// `(O_0, O_t)`.
    InitialObs,
    /// `(O_t'', O_t')`; `None` until a split map is supplied.
    TwoViews(Option<ObsSplit>),
    /// `(R_{t-1}, O_t)` with `Z_1 = O_0`.
    PrevReward,
}

impl PciScheme {
    /// The condition on the target policy under which the scheme is valid.
    pub fn validity_note(&self) -> &'static str {
        match self {
            PciScheme::PrevObs => "target policy must not depend on O_0..O_{t-1}",
            PciScheme::KPrevObs(_) => "target policy may only use the k most recent observations",
            PciScheme::InitialObs => "target policy must not depend on O_0",
            PciScheme::TwoViews(_) => {
                "views must be independent given the state; target policy must ignore O''"
            }
            PciScheme::PrevReward => "target policy must not depend on past rewards or on O_0",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PciScheme::KPrevObs(0) => Err(Error::SchemeInapplicable {
                scheme: self.to_string(),
                reason: "k must be at least 1".into(),
            }),
            PciScheme::TwoViews(None) => Err(Error::SchemeInapplicable {
                scheme: self.to_string(),
                reason: "no observation split map supplied".into(),
            }),
            _ => Ok(()),
        }
    }

    /// Space of `Z_t`.
    pub fn z_space(&self, t: usize, n_obs: usize) -> ControlSpace {
        match self {
            PciScheme::TwoViews(Some(split)) => ControlSpace::Categorical(split.z_size),
            PciScheme::PrevReward if t > 1 => ControlSpace::Real,
            _ => ControlSpace::Categorical(n_obs),
        }
    }

    /// Space of `W_t`.
    pub fn w_space(&self, n_obs: usize) -> ControlSpace {
        match self {
            PciScheme::TwoViews(Some(split)) => ControlSpace::Categorical(split.w_size),
            _ => ControlSpace::Categorical(n_obs),
        }
    }
}

impl fmt::Display for PciScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PciScheme::PrevObs => write!(f, "prev_obs"),
            PciScheme::KPrevObs(k) => write!(f, "k_prev_obs:{k}"),
            PciScheme::InitialObs => write!(f, "initial_obs"),
            PciScheme::TwoViews(_) => write!(f, "two_views"),
            PciScheme::PrevReward => write!(f, "prev_reward"),
        }
    }
}

impl FromStr for PciScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Config {
            field: "scheme".into(),
            reason: format!("{reason}: {s:?}"),
        };
        match s {
            "prev_obs" => Ok(PciScheme::PrevObs),
            "initial_obs" => Ok(PciScheme::InitialObs),
            "prev_reward" => Ok(PciScheme::PrevReward),
            "two_views" => Ok(PciScheme::TwoViews(None)),
            other => {
                let k = other
                    .strip_prefix("k_prev_obs:")
                    .ok_or_else(|| bad("unknown scheme"))?
                    .parse::<usize>()
                    .map_err(|_| bad("k must be a positive integer"))?;
                if k == 0 {
                    return Err(bad("k must be at least 1"));
                }
                Ok(PciScheme::KPrevObs(k))
            }
        }
    }
}

/// The observable part of a trajectory. Reductions only ever see this.
#[derive(Debug, Clone, Copy)]
pub struct ObservedPath<'a> {
    pub o0: usize,
    pub steps: &'a [Step],
}

impl<'a> ObservedPath<'a> {
    pub fn of(traj: &'a Trajectory) -> Self {
        Self {
            o0: traj.o0,
            steps: &traj.steps,
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    fn obs(&self, t: usize) -> usize {
        if t == 0 {
            self.o0
        } else {
            self.steps[t - 1].o
        }
    }
}

/// `(Z_t, W_t)` for step `t` in `1..=H`.
pub fn reduce(path: ObservedPath<'_>, t: usize, scheme: &PciScheme) -> Result<(ControlValue, ControlValue)> {
    if t == 0 || t > path.horizon() {
        return Err(Error::InvalidArgument(format!(
            "step {t} outside 1..={}",
            path.horizon()
        )));
    }
    scheme.validate()?;
    let w = ControlValue::Category(path.obs(t));
    let pair = match scheme {
        PciScheme::PrevObs => (ControlValue::Category(path.obs(t - 1)), w),
        PciScheme::KPrevObs(k) => (ControlValue::Category(path.obs(t.saturating_sub(*k))), w),
        PciScheme::InitialObs => (ControlValue::Category(path.o0), w),
        PciScheme::PrevReward => {
            let z = if t == 1 {
                ControlValue::Category(path.o0)
            } else {
                ControlValue::Real(path.steps[t - 2].r)
            };
            (z, w)
        }
        PciScheme::TwoViews(split) => {
            let split = split.as_ref().expect("validated above");
            let o = path.obs(t);
            if o >= split.w_view.len() {
                return Err(Error::SchemeInapplicable {
                    scheme: scheme.to_string(),
                    reason: format!("observation {o} not covered by split map"),
                });
            }
            (
                ControlValue::Category(split.z_view[o]),
                ControlValue::Category(split.w_view[o]),
            )
        }
    };
    Ok(pair)
}

/// `E_t`: the action the target policy would take at step `t` on this path.
pub fn eval_action(eval: &EvalPolicy, path: ObservedPath<'_>, t: usize) -> usize {
    let obs: Vec<usize> = path.steps[..t].iter().map(|s| s.o).collect();
    let acts: Vec<usize> = path.steps[..t - 1].iter().map(|s| s.a).collect();
    eval.action(&obs, &acts)
}

/// `D_t = (Z_t, W_t, A_t, E_t, R_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlTuple {
    pub z: ControlValue,
    pub w: ControlValue,
    pub a: usize,
    pub e: usize,
    pub r: f64,
}

impl ControlTuple {
    pub fn matched(&self) -> bool {
        self.a == self.e
    }
}

/// `D_1..D_H` for one trajectory.
pub fn control_tuples(traj: &Trajectory, eval: &EvalPolicy, scheme: &PciScheme) -> Result<Vec<ControlTuple>> {
    let path = ObservedPath::of(traj);
    (1..=path.horizon())
        .map(|t| {
            let (z, w) = reduce(path, t, scheme)?;
            Ok(ControlTuple {
                z,
                w,
                a: path.steps[t - 1].a,
                e: eval_action(eval, path, t),
                r: path.steps[t - 1].r,
            })
        })
        .collect()
}

/// Control tuples for a whole dataset.
pub fn dataset_tuples(data: &[Trajectory], eval: &EvalPolicy, scheme: &PciScheme) -> Result<Vec<Vec<ControlTuple>>> {
    data.iter().map(|traj| control_tuples(traj, eval, scheme)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::{build_noisyobs, sample_dataset};
    use proptest::prelude::*;

    fn traj(o0: usize, steps: &[(usize, usize, f64)]) -> Trajectory {
        Trajectory {
            o0,
            steps: steps.iter().map(|&(o, a, r)| Step { o, a, r }).collect(),
            hidden: None,
        }
    }

    #[test]
    fn prev_obs_at_first_step_uses_prior_observation() {
        let tr = traj(1, &[(2, 0, 3.0), (0, 1, 0.0), (1, 0, 1.0)]);
        let (z, w) = reduce(ObservedPath::of(&tr), 1, &PciScheme::PrevObs).unwrap();
        assert_eq!(z, ControlValue::Category(1));
        assert_eq!(w, ControlValue::Category(2));
    }

    #[test]
    fn initial_obs_always_returns_o0() {
        let tr = traj(2, &[(0, 0, 3.0), (1, 1, 0.0), (1, 0, 1.0)]);
        for t in 1..=3 {
            let (z, _) = reduce(ObservedPath::of(&tr), t, &PciScheme::InitialObs).unwrap();
            assert_eq!(z, ControlValue::Category(2));
        }
    }

    #[test]
    fn prev_reward_switches_to_reals_after_first_step() {
        let tr = traj(2, &[(0, 0, 3.0), (1, 1, -2.0), (1, 0, 1.0)]);
        let path = ObservedPath::of(&tr);
        assert_eq!(reduce(path, 1, &PciScheme::PrevReward).unwrap().0, ControlValue::Category(2));
        assert_eq!(reduce(path, 2, &PciScheme::PrevReward).unwrap().0, ControlValue::Real(3.0));
        assert_eq!(reduce(path, 3, &PciScheme::PrevReward).unwrap().0, ControlValue::Real(-2.0));
        assert_eq!(PciScheme::PrevReward.z_space(2, 3), ControlSpace::Real);
    }

    #[test]
    fn two_views_needs_a_split() {
        let tr = traj(0, &[(3, 0, 0.0)]);
        let err = reduce(ObservedPath::of(&tr), 1, &PciScheme::TwoViews(None)).unwrap_err();
        assert!(matches!(err, Error::SchemeInapplicable { .. }));
        // four observations = two binary views
        let split = ObsSplit::new(vec![0, 1, 0, 1], vec![0, 0, 1, 1]).unwrap();
        let (z, w) = reduce(ObservedPath::of(&tr), 1, &PciScheme::TwoViews(Some(split))).unwrap();
        assert_eq!((z, w), (ControlValue::Category(1), ControlValue::Category(1)));
    }

    #[test]
    fn scheme_strings_parse() {
        assert_eq!("prev_obs".parse::<PciScheme>().unwrap(), PciScheme::PrevObs);
        assert_eq!("k_prev_obs:2".parse::<PciScheme>().unwrap(), PciScheme::KPrevObs(2));
        assert_eq!("initial_obs".parse::<PciScheme>().unwrap(), PciScheme::InitialObs);
        assert_eq!("prev_reward".parse::<PciScheme>().unwrap(), PciScheme::PrevReward);
        assert_eq!("two_views".parse::<PciScheme>().unwrap(), PciScheme::TwoViews(None));
        assert!("k_prev_obs:0".parse::<PciScheme>().is_err());
        assert!("k_prev_obs:x".parse::<PciScheme>().is_err());
        assert!("nope".parse::<PciScheme>().is_err());
        for s in ["prev_obs", "k_prev_obs:3", "initial_obs", "prev_reward", "two_views"] {
            assert_eq!(s.parse::<PciScheme>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn eval_action_reads_current_observation() {
        let m = build_noisyobs(0.2).unwrap();
        let tr = traj(1, &[(0, 0, 3.0), (2, 1, 0.0), (1, 0, 1.0)]);
        let path = ObservedPath::of(&tr);
        assert_eq!(eval_action(&m.easy, path, 1), 0);
        assert_eq!(eval_action(&m.hard, path, 1), 1);
        assert_eq!(eval_action(&m.easy, path, 2), 1);
        let constant = EvalPolicy::current_obs("always-a1", vec![0, 0, 0]);
        for t in 1..=3 {
            assert_eq!(eval_action(&constant, path, t), 0);
        }
    }

    #[test]
    fn tuples_mirror_the_trajectory() {
        let m = build_noisyobs(0.2).unwrap();
        for tr in sample_dataset(&m.pomdp, &m.behavior, 5, 30, false) {
            let tuples = control_tuples(&tr, &m.easy, &PciScheme::PrevObs).unwrap();
            assert_eq!(tuples.len(), 3);
            for (t, d) in tuples.iter().enumerate() {
                let step = tr.steps[t];
                assert_eq!(d.w, ControlValue::Category(step.o));
                assert_eq!(d.e, [0, 0, 1][step.o]);
                assert_eq!((d.a, d.r), (step.a, step.r));
            }
        }
    }

    proptest! {
        #[test]
        fn one_previous_observation_is_prev_obs(
            o0 in 0usize..3,
            steps in proptest::collection::vec((0usize..3, 0usize..2, -2.0f64..8.0), 1..6),
        ) {
            let tr = traj(o0, &steps);
            let path = ObservedPath::of(&tr);
            for t in 1..=steps.len() {
                prop_assert_eq!(
                    reduce(path, t, &PciScheme::KPrevObs(1)).unwrap(),
                    reduce(path, t, &PciScheme::PrevObs).unwrap()
                );
            }
        }
    }
}
