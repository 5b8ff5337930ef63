//! Ensembles of incrementally trained linear classifiers that prune
//! themselves through liquid-democracy style delegation.
//!
//! Weak voters stop training early and hand their voting weight to a more
//! accurate peer, so the ensemble keeps the wisdom of many voters at the
//! training cost of few.
//!
//! ```
//! use liquid_ensemble::{data::two_gaussians, run_training, MechanismKind, TrainConfig};
//!
//! let data = two_gaussians(400, 4, 2.0, 7);
//! let config = TrainConfig {
//!     n: 30,
//!     n_final: 5,
//!     retention: 0.8,
//!     increment_size: 20,
//!     mechanism: MechanismKind::PropWeighted,
//!     ..TrainConfig::default()
//! };
//! let report = run_training(&config, &data, Some(&data)).unwrap();
//! assert_eq!(report.final_active, 5);
//! assert_eq!(report.final_weights.iter().sum::<u32>(), 30);
//! ```

pub mod analysis;
pub mod baselines;
pub mod classifier;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod mechanisms;
pub mod seed;
pub mod trainer;

pub use classifier::{LinearModel, SgdHyperparams};
pub use data::{ColumnKind, ColumnSchema, Dataset};
pub use ensemble::{EnsembleState, Metrics};
pub use error::{Error, Result};
pub use mechanisms::{DelegationEvent, MechanismKind, MechanismSpec};
pub use trainer::{run_training, run_training_observed, run_trials, run_trials_with, CostLedger, TrainConfig, TrainReport, TrialSummary};

// The guide's snippets run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/voters.md")]
    mod voters {}
    #[doc = include_str!("../../../book/src/delegation.md")]
    mod delegation {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
