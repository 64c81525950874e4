//! Feature encoder and cosine classifier with exact gradients.
//!
//! Parameters of the encoder and of the classifier weight matrix `W` live in
//! one flat `Vec<f64>` described by a [`ParamLayout`]; gradients use the same
//! layout, so optimizers and checkpoints treat the model as a single vector.

mod encoder;
mod head;
mod kernels;
mod spec;
mod state;

pub use encoder::{Encoder, Trace};
pub use head::{cosine, cosine_grad, cosine_scores, cosine_scores_backward, NORM_EPS};
pub use spec::{BlockSpec, ConvSpec, EncoderSpec, Normalization};
pub use state::{argmax, ModelState, ParamEntry, ParamKind, ParamLayout};
