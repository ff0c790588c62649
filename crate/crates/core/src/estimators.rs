//! Identification scores and the cross-fitted policy-value estimator.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pomdp::{EvalPolicy, Trajectory};
use crate::reduction::{control_tuples, dataset_tuples, ControlTuple, PciScheme};
use crate::vmm::{fit_nuisances_from_tuples, ControlLayout, NuisanceSet, VmmConfig};

/// 97.5% standard normal quantile.
pub const Z_975: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    #[serde(rename = "is")]
    IS,
    #[serde(rename = "reg")]
    Reg,
    #[serde(rename = "dr")]
    DR,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 3] = [ScoreKind::IS, ScoreKind::Reg, ScoreKind::DR];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::IS => "is",
            ScoreKind::Reg => "reg",
            ScoreKind::DR => "dr",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "is" => Ok(ScoreKind::IS),
            "reg" => Ok(ScoreKind::Reg),
            "dr" => Ok(ScoreKind::DR),
            other => Err(Error::Config {
                field: "score_kind".into(),
                reason: format!("unknown score kind `{other}`"),
            }),
        }
    }
}

/// `(eta_1, ..., eta_{H+1})` for one trajectory.
pub fn eta_weights(tuples: &[ControlTuple], nuisances: &NuisanceSet) -> Vec<f64> {
    assert_eq!(tuples.len(), nuisances.horizon(), "tuples and nuisances disagree on H");
    let mut eta = Vec::with_capacity(tuples.len() + 1);
    eta.push(1.0);
    let mut cur = 1.0;
    for (t, d) in tuples.iter().enumerate() {
        cur *= if d.matched() { nuisances.q[t].get(d.z, d.a) } else { 0.0 };
        eta.push(cur);
    }
    eta
}

/// All three scores of one trajectory plus its largest `|eta_t|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreBundle {
    pub is: f64,
    pub reg: f64,
    pub dr: f64,
    pub max_eta: f64,
}

impl ScoreBundle {
    pub fn get(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::IS => self.is,
            ScoreKind::Reg => self.reg,
            ScoreKind::DR => self.dr,
        }
    }
}

pub fn score_bundle(tuples: &[ControlTuple], nuisances: &NuisanceSet, gamma: f64) -> ScoreBundle {
    let eta = eta_weights(tuples, nuisances);
    let na = nuisances.n_actions;
    let sum_h = |t: usize| -> f64 {
        let d = &tuples[t];
        (0..na).map(|a| nuisances.h[t].get(d.w, a)).sum()
    };
    let mut is = 0.0;
    let mut dr = 0.0;
    let mut disc = 1.0;
    for (t, d) in tuples.iter().enumerate() {
        let weighted_r = eta[t + 1] * d.r;
        is += disc * weighted_r;
        let correction = if eta[t] == 0.0 {
            0.0
        } else {
            eta[t] * (sum_h(t) - nuisances.q[t].get(d.z, d.a) * nuisances.h[t].get(d.w, d.a))
        };
        dr += disc * (weighted_r + correction);
        disc *= gamma;
    }
    ScoreBundle {
        is,
        reg: sum_h(0),
        dr,
        max_eta: eta.iter().fold(0.0, |m, e| m.max(e.abs())),
    }
}

pub fn score_tuples(tuples: &[ControlTuple], nuisances: &NuisanceSet, gamma: f64, kind: ScoreKind) -> f64 {
    score_bundle(tuples, nuisances, gamma).get(kind)
}

pub fn score(
    traj: &Trajectory,
    eval: &EvalPolicy,
    scheme: &PciScheme,
    nuisances: &NuisanceSet,
    gamma: f64,
    kind: ScoreKind,
) -> Result<f64> {
    let tuples = control_tuples(traj, eval, scheme)?;
    Ok(score_tuples(&tuples, nuisances, gamma, kind))
}

/// Settings of the cross-fitted estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub scheme: PciScheme,
    pub vmm: VmmConfig,
    pub gamma: f64,
    pub k_folds: usize,
    pub seed: u64,
    pub n_obs: usize,
    pub n_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub fold_estimates: Vec<f64>,
    pub sigma2: f64,
    pub ci95: (f64, f64),
    pub n: usize,
    pub score: ScoreKind,
    pub k_folds: usize,
    /// False when `k_folds == 1`: nuisances were fit on the scored data.
    pub cross_fitted: bool,
    pub fold_ids: Vec<usize>,
    pub max_eta: f64,
    pub matched_share: f64,
    pub unseen_lookups: usize,
    /// False if some score was NaN or infinite; the estimate is then NaN.
    pub finite: bool,
}

/// Seeded shuffle of `0..n` cut into `k` contiguous blocks whose sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut ids = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        ids[i] = pos * k / n.max(1);
    }
    ids
}

/// Cross-fitted estimate for a single score kind.
pub fn estimate_value(data: &[Trajectory], eval: &EvalPolicy, spec: &EstimatorSpec, kind: ScoreKind) -> Result<EstimateReport> {
    let mut reports = estimate_scores(data, eval, spec, &[kind])?;
    Ok(reports.remove(0))
}

/// Cross-fitted estimates for several score kinds sharing the same nuisance fits.
pub fn estimate_scores(
    data: &[Trajectory],
    eval: &EvalPolicy,
    spec: &EstimatorSpec,
    kinds: &[ScoreKind],
) -> Result<Vec<EstimateReport>> {
    if spec.k_folds == 0 {
        return Err(Error::InvalidArgument("k_folds must be >= 1".into()));
    }
    let fold_ids = fold_assignment(data.len(), spec.k_folds, spec.seed);
    estimate_with_folds(data, eval, spec, kinds, &fold_ids)
}

/// As [`estimate_scores`] with an explicit fold id per trajectory.
pub fn estimate_with_folds(
    data: &[Trajectory],
    eval: &EvalPolicy,
    spec: &EstimatorSpec,
    kinds: &[ScoreKind],
    fold_ids: &[usize],
) -> Result<Vec<EstimateReport>> {
    let n = data.len();
    let k = spec.k_folds;
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("need 1 <= k_folds <= n, got k={k}, n={n}")));
    }
    if fold_ids.len() != n || fold_ids.iter().any(|f| *f >= k) {
        return Err(Error::InvalidArgument("fold ids must be < k_folds, one per trajectory".into()));
    }
    let mut fold_sizes = vec![0usize; k];
    for f in fold_ids {
        fold_sizes[*f] += 1;
    }
    if fold_sizes.contains(&0) {
        return Err(Error::InvalidArgument("every fold must be nonempty".into()));
    }
    let horizon = data[0].horizon();
    let tuples = dataset_tuples(data, eval, &spec.scheme)?;
    let layout = ControlLayout::new(&spec.scheme, spec.n_obs, spec.n_actions, horizon);

    let per_fold: Vec<(Vec<(usize, ScoreBundle)>, usize)> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<Vec<ControlTuple>> = if k == 1 {
                tuples.clone()
            } else {
                tuples
                    .iter()
                    .zip(fold_ids)
                    .filter(|(_, f)| **f != fold)
                    .map(|(row, _)| row.clone())
                    .collect()
            };
            let nuisances = fit_nuisances_from_tuples(&train, &layout, &spec.vmm, spec.gamma).map_err(|e| Error::Fold {
                fold,
                source: Box::new(e),
            })?;
            let scored = tuples
                .iter()
                .enumerate()
                .filter(|(i, _)| fold_ids[*i] == fold)
                .map(|(i, row)| (i, score_bundle(row, &nuisances, spec.gamma)))
                .collect();
            Ok((scored, nuisances.unseen_lookups()))
        })
        .collect::<Result<_>>()?;

    let mut bundles = vec![None; n];
    let mut unseen = 0;
    for (scored, u) in per_fold {
        unseen += u;
        for (i, b) in scored {
            bundles[i] = Some(b);
        }
    }
    let bundles: Vec<ScoreBundle> = bundles.into_iter().map(|b| b.expect("every index is in a fold")).collect();
    let matched = tuples.iter().flatten().filter(|d| d.matched()).count();
    let matched_share = matched as f64 / (n * horizon.max(1)) as f64;
    let max_eta = bundles.iter().fold(0.0_f64, |m, b| m.max(b.max_eta));

    Ok(kinds
        .iter()
        .map(|&kind| {
            let psi: Vec<f64> = bundles.iter().map(|b| b.get(kind)).collect();
            let finite = psi.iter().all(|v| v.is_finite());
            let nf = n as f64;
            let (estimate, sigma2) = if finite {
                let mean = psi.iter().sum::<f64>() / nf;
                let var = psi.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
                (mean, var)
            } else {
                (f64::NAN, f64::NAN)
            };
            let mut fold_sums = vec![0.0; k];
            for (v, f) in psi.iter().zip(fold_ids) {
                fold_sums[*f] += v;
            }
            let fold_estimates = fold_sums.iter().zip(&fold_sizes).map(|(s, c)| s / *c as f64).collect();
            let half = Z_975 * (sigma2 / nf).sqrt();
            EstimateReport {
                estimate,
                fold_estimates,
                sigma2,
                ci95: (estimate - half, estimate + half),
                n,
                score: kind,
                k_folds: k,
                cross_fitted: k >= 2,
                fold_ids: fold_ids.to_vec(),
                max_eta,
                matched_share,
                unseen_lookups: unseen,
                finite,
            }
        })
        .collect())
}
