#![allow(dead_code)]

use prl_core::pomdp::NoisyObs;

pub fn noisyobs(eps: f64) -> NoisyObs {
    prl_core::pomdp::build_noisyobs(eps).expect("valid scenario")
}

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
