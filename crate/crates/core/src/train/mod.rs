//! Reverse-mode tape, optimiser and training loop.

mod optim;
mod run;
mod tape;

pub use optim::{adamw_step, clip_global_norm, global_norm, OptState, PlateauScheduler};
pub use run::{
    effective_config, evaluate, fmt17, loss_and_grad, predict, prepare_all, train, History, LossKind,
    MetricRecord, Metrics, TrainConfig, TrainOutcome,
};
pub use tape::{NormLayout, SparseConst, Tape, Var};
