//! The network: embedding, graph aggregation, attentive CNN and head.

mod checkpoint;
mod config;
mod layers;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use config::{ModelConfig, DEFAULT_FEATURES_PER_STEP};
pub use layers::{
    affine, apply_cbam, attentive_cnn, channel_attention, cnn_input, embed_inputs, forward, forward_on_tape,
    gin_aggregate, mlp, node_inputs, offsets_on_tape, predict_absolute, spatial_attention,
};
pub use params::{layout, Affine, CbamParams, ConvParams, GinParams, Mlp, ModelParams, Weights};
