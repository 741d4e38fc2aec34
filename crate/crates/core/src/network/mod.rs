//! The HSI and LiDAR branches, the three-level fusion network and stepwise
//! training.

mod checkpoint;
mod config;
mod model;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{NetworkConfig, Toggles};
pub use model::{
    AttentionAudit, Forward, FusionNet, Head, HsiBranch, LidarBranch, LossParts, Multiscale, Network, Route,
};
pub use train::{phases, train, HistoryRow, TrainEvent, TrainReport};
