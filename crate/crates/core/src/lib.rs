//! Budget-constrained Bayesian hyperparameter optimisation with Kalman-filter
//! beliefs, regression Monte Carlo value iteration and optimal stopping.

pub mod basis;
pub mod belief;
pub mod controller;
pub mod error;
pub mod oracle;
pub mod presets;
pub mod qvalue;
pub mod regress;
pub mod rng;
pub mod valuemap;

pub use basis::{BasisSet, ControlPoint};
pub use belief::{BeliefState, NoiseModel};
pub use controller::{ProblemSpec, RunOutcome, RunSettings, StopReason};
pub use error::{Error, Result};
pub use oracle::{AnalyticOracle, SubprocessOracle, Trainer};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/beliefs.md")]
    mod beliefs {}
    #[doc = include_str!("../../../book/src/one-step-value.md")]
    mod one_step_value {}
    #[doc = include_str!("../../../book/src/value-maps.md")]
    mod value_maps {}
    #[doc = include_str!("../../../book/src/controller.md")]
    mod controller {}
    #[doc = include_str!("../../../book/src/trainers.md")]
    mod trainers {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
