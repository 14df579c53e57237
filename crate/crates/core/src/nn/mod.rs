//! Minimal neural-network toolkit: MLPs with analytic gradients, Adam,
//! Beta and Gaussian policy heads, and a text checkpoint format.

pub mod adam;
pub mod beta;
pub mod checkpoint;
pub mod gaussian;
pub mod mlp;
pub mod special;

use rand::Rng;
use thiserror::Error;

use crate::scalar::Real;

pub use adam::{clip_grad_norm, Adam};
pub use beta::{beta_entropy_grad, beta_head, beta_log_prob_grad, BetaParams};
pub use gaussian::{gaussian_entropy_grad, gaussian_head, gaussian_log_prob_grad, GaussianParams};
pub use checkpoint::Checkpoint;
pub use mlp::{Cache, Mlp};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input width {got} does not match the network's {expected}")]
    Width { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Distribution family of a policy head. Both read `2k` logits for a
/// `k`-dimensional action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Beta,
    Gaussian,
}

impl Head {
    /// Draws the stored action. For the Gaussian this is the unclipped value.
    pub fn sample<T: Real, R: Rng + ?Sized>(self, logits: &[T], rng: &mut R) -> Vec<T> {
        match self {
            Head::Beta => beta_head(logits).sample(rng),
            Head::Gaussian => gaussian_head(logits).sample(rng),
        }
    }

    /// Distribution mean, used for deterministic evaluation.
    pub fn mode<T: Real>(self, logits: &[T]) -> Vec<T> {
        match self {
            Head::Beta => beta_head(logits).mean(),
            Head::Gaussian => gaussian_head(logits).mean,
        }
    }

    /// Maps a stored action to the unit value handed to the environment.
    pub fn to_unit<T: Real>(self, action: &[T]) -> Vec<T> {
        match self {
            Head::Beta => action.to_vec(),
            Head::Gaussian => gaussian::clip_unit(action),
        }
    }

    pub fn log_prob<T: Real>(self, logits: &[T], action: &[T]) -> T {
        match self {
            Head::Beta => beta_head(logits).log_prob(action),
            Head::Gaussian => gaussian_head(logits).log_prob(action),
        }
    }

    pub fn log_prob_grad<T: Real>(self, logits: &[T], action: &[T]) -> (T, Vec<T>) {
        match self {
            Head::Beta => beta_log_prob_grad(logits, action),
            Head::Gaussian => gaussian_log_prob_grad(logits, action),
        }
    }

    pub fn entropy_grad<T: Real>(self, logits: &[T]) -> (T, Vec<T>) {
        match self {
            Head::Beta => beta_entropy_grad(logits),
            Head::Gaussian => gaussian_entropy_grad(logits),
        }
    }
}
