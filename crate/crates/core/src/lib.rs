//! Adversarial-polytope laboratory.
//!
//! Small dense networks, a particle search for the corner points of the set
//! of logits reachable under an l∞-bounded input perturbation, a training
//! loop that pulls those corners toward their center, and FGSM/PGD
//! evaluation against clean and adversarially trained baselines.
//!
//! | module | contents |
//! |---|---|
//! | [`nn`] | MLP forward pass, softmax/cross-entropy, reverse-mode gradients |
//! | [`polytope`] | particle initialisation, projection, corner search, diameter |
//! | [`train`] | confinement loss, SGD with momentum, trainers |
//! | [`attacks`] | FGSM, PGD, robust accuracy |
//! | [`data`] | blobs/moons generators, CSV I/O, splits |
//! | [`cli`] | config files and the `train`/`eval`/`corners`/`compare` commands |

pub mod attacks;
pub mod cli;
pub mod data;
pub mod error;
pub mod nn;
pub mod plot;
pub mod polytope;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use nn::{Activation, Dense, LabelVector, Mlp};
pub use tensor::Tensor;
