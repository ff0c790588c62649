//! Gaussian-mixture kernels on one-hot embeddings of `(control, action)` pairs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::reduction::{ControlSpace, ControlValue};

/// One-hot of the control (or the raw value for a real control) followed by
/// one-hot of the action.
pub fn embed(value: ControlValue, space: ControlSpace, action: usize, n_actions: usize) -> Vec<f64> {
    let mut out = match (value, space) {
        (ControlValue::Category(c), ControlSpace::Categorical(k)) => {
            let mut v = vec![0.0; k];
            v[c] = 1.0;
            v
        }
        (ControlValue::Real(r), ControlSpace::Real) => vec![r],
        (value, space) => panic!("control {value} does not live in {space:?}"),
    };
    out.extend((0..n_actions).map(|a| if a == action { 1.0 } else { 0.0 }));
    out
}

/// Mixture of three Gaussian kernels whose bandwidths are multiples of the
/// mean per-dimension sample variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub scale_multipliers: [f64; 3],
    pub variance_floor: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            scale_multipliers: [0.25, 1.0, 4.0],
            variance_floor: 1e-6,
        }
    }
}

impl KernelSpec {
    /// Fixes the bandwidth from weighted sample points `(x, count)`.
    pub fn calibrate<'a, I>(&self, sample: I) -> CalibratedKernel
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let sample: Vec<(&[f64], f64)> = sample.into_iter().collect();
        let total: f64 = sample.iter().map(|(_, w)| w).sum();
        let dim = sample.first().map_or(0, |(x, _)| x.len());
        let mut sigma2 = 0.0;
        if total > 0.0 && dim > 0 {
            for d in 0..dim {
                let mean = sample.iter().map(|(x, w)| w * x[d]).sum::<f64>() / total;
                let var = sample
                    .iter()
                    .map(|(x, w)| w * (x[d] - mean).powi(2))
                    .sum::<f64>()
                    / total;
                sigma2 += var;
            }
            sigma2 /= dim as f64;
        }
        CalibratedKernel {
            sigma2: sigma2.max(self.variance_floor),
            multipliers: self.scale_multipliers,
        }
    }
}

/// A kernel with its bandwidth fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedKernel {
    pub sigma2: f64,
    pub multipliers: [f64; 3],
}

impl CalibratedKernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.multipliers
            .iter()
            .map(|c| (-d2 / (2.0 * c * self.sigma2)).exp())
            .sum::<f64>()
            / self.multipliers.len() as f64
    }
}

/// `G[i][j] = K(xs[i], ys[j])`.
pub fn gram(kernel: &CalibratedKernel, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), ys.len(), |i, j| kernel.eval(&xs[i], &ys[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_hot_layout() {
        let v = embed(ControlValue::Category(1), ControlSpace::Categorical(3), 0, 2);
        assert_eq!(v, vec![0.0, 1.0, 0.0, 1.0, 0.0]);
        let u = embed(ControlValue::Category(0), ControlSpace::Categorical(3), 1, 2);
        assert_ne!(u, v);
        let r = embed(ControlValue::Real(3.0), ControlSpace::Real, 0, 2);
        assert_eq!(r, vec![3.0, 1.0, 0.0]);
    }

    #[test]
    fn variance_is_floored() {
        let x = vec![1.0, 0.0];
        let k = KernelSpec::default().calibrate([(x.as_slice(), 4.0)]);
        assert_eq!(k.sigma2, 1e-6);
    }

    #[test]
    fn identical_points_give_identical_rows() {
        let k = CalibratedKernel {
            sigma2: 0.3,
            multipliers: [0.25, 1.0, 4.0],
        };
        let xs = vec![vec![1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
        let g = gram(&k, &xs, &xs);
        assert_eq!(g.row(0), g.row(1));
        for i in 0..3 {
            assert_eq!(g[(i, i)], 1.0);
        }
    }

    proptest! {
        #[test]
        fn gram_is_symmetric_and_psd(
            pts in proptest::collection::vec((0usize..4, 0usize..2), 1..12),
            other in proptest::collection::vec((0usize..4, 0usize..2), 1..6),
        ) {
            let emb = |p: &[(usize, usize)]| -> Vec<Vec<f64>> {
                p.iter().map(|&(o, a)| embed(ControlValue::Category(o), ControlSpace::Categorical(4), a, 2)).collect()
            };
            let xs = emb(&pts);
            let ys = emb(&other);
            let k = KernelSpec::default().calibrate(xs.iter().map(|x| (x.as_slice(), 1.0)));
            let g = gram(&k, &xs, &xs);
            let min_eig = g.clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(min_eig >= -1e-9);
            let gxy = gram(&k, &xs, &ys);
            let gyx = gram(&k, &ys, &xs);
            prop_assert!((gxy - gyx.transpose()).abs().max() <= 1e-12);
        }
    }
}
