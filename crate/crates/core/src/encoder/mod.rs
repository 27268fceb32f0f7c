//! Transformer encoder over packed patch tokens, with analytic gradients.

mod attention;
mod model;
mod ops;
mod params;

pub use attention::{masked_self_attention, Spans};
pub use model::{
    backward, classify, cross_entropy, embed, encoder_forward, fixed_forward, mask_attention_pool, FixedSample,
    ForwardTrace, Readout,
};
pub use ops::MASKED_LOGIT;
pub use params::{LayerParams, ModelConfig, ModelParams, TensorMut, TensorRef};
