//! Encoder–MLP regressor over contrast intensity profiles, trained as a deep
//! ensemble for epistemic uncertainty.

pub mod bundle;
pub mod ensemble;
pub mod metrics;
pub mod network;
pub mod real;
pub mod search;
pub mod train;

pub use ensemble::{ensemble_stats, train_ensemble, EnsembleModel, Prediction};
pub use metrics::{evaluate, Report};
pub use network::{NetworkSpec, Params, Task, INPUT_LENGTH, SCALING_FACTORS};
pub use search::{kfold_scaling_search, SearchReport};
pub use train::{train, Data, NormStats, TrainConfig, TrainHistory, TrainedModel};
