//! Preference-based adversarial imitation learning (PbAIL) on desk-scale
//! control tasks.
//!
//! The crate learns a reward function from a fixed set of pairwise trajectory
//! preferences and consolidates it with "virtual" preferences that compare
//! offline demonstration segments against the agent's own replay experience,
//! optionally weighted by a learned reliability model. A soft actor-critic
//! learner optimizes the evolving reward. Baselines (preference-only reward
//! learning, SAC from demonstrations) and an evaluation harness (normalized
//! returns, rank correlation, generalizability probes) share the same
//! building blocks.
//!
//! Numeric foundations ([`tensor`], [`nn`], [`occupancy`], [`eval`] statistics)
//! are generic over a [`scalar::Scalar`] float type; the training stack and
//! every serialized artifact use the concrete [`Real`] alias below.

pub mod data;
pub mod envs;
pub mod error;
pub mod eval;
pub mod nn;
pub mod occupancy;
pub mod plot;
pub mod reward;
pub mod rng;
pub mod sac;
pub mod scalar;
pub mod tensor;
pub mod trainers;

pub mod cli;

pub use error::{Error, Result};

/// Concrete scalar used by trainers, environments, and file formats.
pub type Real = f64;

/// Dense tensor over [`Real`].
pub type RealTensor = tensor::Tensor<Real>;

/// Autodiff tape over [`Real`].
pub type RealTape = nn::tape::Tape<Real>;
