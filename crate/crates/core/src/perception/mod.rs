//! Learned mapping (panorama -> ego map) and localization (map pair +
//! odometry -> pose) models, differentiable global-map writing, and their
//! supervised pretraining.

mod global;
mod localization;
pub(crate) mod mapping;
mod pretrain;

pub use global::{
    pose_node_to_cells, pose_to_cells, write_global, write_global_tensor, AgentState, FuseMode,
    SOFT_FUSE_TAU,
};
pub use localization::{LocalizationModel, ODO_SCALE};
pub use mapping::MappingModel;
pub use pretrain::{pretrain, PretrainConfig, Pretrained};
pub(crate) use pretrain::random_action;
