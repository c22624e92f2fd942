//! Network layers built on the autograd graph.

mod attention;
mod layers;
mod lstm;

pub use attention::{
    conditioned_attention, conditioned_attention_projected, project_condition, project_inputs,
    self_attention, ConditionedAttentionParams, SelfAttentionParams,
};
pub use layers::{check_keep_prob, dropout, mean_pool, Dense, EmbeddingTable, Mode};
pub use lstm::{bilstm_encode, bilstm_encode_padded, lstm_step, BiLstmParams, LstmParams};
