//! Hierarchical paragraph generation with dual (abnormal/normal) word LSTMs,
//! plus the evaluation tooling around it: corpus-level BLEU, ROUGE-L,
//! CIDEr-D and METEOR-lite, distinct-sentence analysis, and checkpoint
//! selection gated on output distinctiveness.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod gradcheck;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod selection;
pub mod tape;
pub mod tensor;
pub mod train;

pub use tape::{Gradients, Tape, Var};
pub use tensor::{Activation, Tensor, TensorError};
