//! APJFNN, the flat BPJFNN baseline and the side-feature variant.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod params;


pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{ModelConfig, ModelKind, OutputHead};
pub use forward::{
    encode_job, encode_resume, forward, predict, score, side_vector, AttentionTrace, ForwardOutput,
    JobEncoding, PredictionOutput,
};
pub use params::{HierarchicalLayers, Layout, ModelParams};
