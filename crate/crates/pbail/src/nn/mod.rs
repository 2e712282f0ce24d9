//! Neural-network core: autodiff tape, MLP container, Adam, spectral
//! normalization, checkpoints, and finite-difference probes.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod spectral;
pub mod tape;

pub use adam::Adam;
pub use mlp::{Activation, Layer, Mlp, OutputActivation, TapedMlp};
pub use spectral::{spectral_normalize, SpectralState};
pub use tape::{Gradients, Tape, Var};
