//! Pure-graph and O(3)-geometric matrix function networks.

mod checkpoint;
mod config;
mod forward;
mod layers;
mod params;
mod prepared;
mod sh;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CheckpointManifest,
    TensorEntry, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use config::{LayerConfig, LocalKind, ModelConfig, ModelKind, UpdateKind};
pub use forward::{forward, record, OperatorRecord, Prediction, Recorded};
pub use layers::{gcn_layer, seeded_matrix, two_body_o3_layer, NodeFeatures};
pub use params::ModelParams;
pub use prepared::{GraphRef, PreparedGraph};
pub use sh::{o3_block, rep_dim, rotation_from_uniform, spherical_harmonics, wigner_block};
