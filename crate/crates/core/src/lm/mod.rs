//! Masked-LM backends: the built-in [`TinyMlm`] and a remote scoring client.

pub mod checkpoint;
mod optim;
pub mod remote;
mod tiny;
pub mod tokenizer;

pub use optim::{FlatAdam, Optimizer, OptimizerKind};
pub use remote::{Handshake, RemoteBackend, RemoteConfig};
pub use tiny::{TinyConfig, TinyMlm};
pub use tokenizer::{TokenId, Tokenizer};

use crate::mapping::MaskLogits;
use crate::template::RenderedInput;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("input has no mask token at position {0}")]
    MissingMask(usize),
    #[error("input has {0} mask tokens, expected one")]
    MaskCount(usize),
    #[error("input length {len} exceeds backend maximum {max}")]
    TooLong { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenOutOfVocab { id: TokenId, vocab: usize },
    #[error("{0} is not supported by this backend")]
    Unsupported(&'static str),
    #[error("network failure after {attempts} attempt(s): {message}")]
    Network { attempts: usize, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("training objective failed: {0}")]
    Objective(String),
    #[error("gradient shape mismatch: {0}")]
    GradientShape(String),
}

impl LmError {
    /// Whether retrying the same request may succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, LmError::Network { .. })
    }
}

/// Computes the batch loss and per-example `dL/dlogits` from mask logits.
pub type Objective<'a> = dyn FnMut(&[MaskLogits]) -> Result<(f64, Vec<Vec<f64>>), LmError> + 'a;

/// Produces vocabulary logits at the mask position of a rendered input.
pub trait LmBackend: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn max_len(&self) -> usize;
    fn mask_id(&self) -> TokenId;

    fn score(&self, input: &RenderedInput) -> Result<MaskLogits, LmError>;

    fn score_batch(&self, inputs: &[RenderedInput]) -> Result<Vec<MaskLogits>, LmError> {
        inputs.iter().map(|i| self.score(i)).collect()
    }

    fn trainable(&self) -> bool {
        false
    }

    /// One optimisation step: forward, evaluate `objective` on the logits,
    /// backpropagate its logit gradients. Returns the objective's loss.
    fn train_step(&mut self, _inputs: &[RenderedInput], _lr: f64, _objective: &mut Objective<'_>) -> Result<f64, LmError> {
        Err(LmError::Unsupported("train_step"))
    }
}

/// Shared input checks: length budget, vocabulary bounds, one mask at the
/// declared position.
pub fn validate_input(input: &RenderedInput, vocab: usize, max_len: usize, mask_id: TokenId) -> Result<(), LmError> {
    if input.len() > max_len {
        return Err(LmError::TooLong {
            len: input.len(),
            max: max_len,
        });
    }
    if let Some(&id) = input.token_ids.iter().find(|&&id| id as usize >= vocab) {
        return Err(LmError::TokenOutOfVocab { id, vocab });
    }
    if input.token_ids.get(input.mask_position) != Some(&mask_id) {
        return Err(LmError::MissingMask(input.mask_position));
    }
    let masks = input.token_ids.iter().filter(|&&id| id == mask_id).count();
    if masks != 1 {
        return Err(LmError::MaskCount(masks));
    }
    Ok(())
}
