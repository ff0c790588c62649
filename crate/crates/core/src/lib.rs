//! Off-policy evaluation for tabular POMDPs with negative-control bridge functions.

pub mod baselines;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod oracle;
pub mod pomdp;
pub mod reduction;
pub mod tabular;
pub mod vmm;

pub use error::{Bridge, Error, Result};
pub use pomdp::{BehaviorPolicy, EvalPolicy, NoisyObs, TabularPomdp, Trajectory};
pub use reduction::{ControlTuple, ControlValue, PciScheme};
pub use tabular::TabularFn;
pub use vmm::{fit_nuisances, NuisanceSet, VmmConfig};
