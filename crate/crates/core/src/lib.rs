//! Variable-length audio spectrogram transformer built around sequence packing.
//!
//! Samples of any length are featurized into log-mel spectrograms, cut into
//! `p×p` patches and packed first-come-first-served into rows of at most
//! `budget` tokens. A transformer encoder with segment-restricted self-attention
//! and a masked attention-pooling read-out keeps every sample isolated from the
//! other samples sharing its row, so packed and one-at-a-time processing agree.
//!
//! Modules map onto the pipeline:
//!
//! * [`spectrogram`]: waveform loading, mel features, temporal compression, patchify.
//! * [`packing`]: greedy packing, segment masks, unpacking, pad/cut accounting.
//! * [`encoder`]: the transformer with analytic gradients.
//! * [`trainer`]: synthetic tasks, training loop and length/resolution sweeps.

pub mod bench;
pub mod checkpoint;
pub mod encoder;
mod error;
pub mod gradcheck;
pub mod packing;
mod real;
pub mod spectrogram;
pub mod trainer;

pub use error::{Error, Result};
pub use real::Real;

/// Default per-row token budget.
pub const DEFAULT_BUDGET: usize = 2048;
/// Default square patch edge, in mel bins and frames.
pub const DEFAULT_PATCH: usize = 16;
