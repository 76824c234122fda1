//! Stackelberg-style GAN training: one discriminator against an equally
//! weighted ensemble of generators, on synthetic 2-D mixtures and IDX image
//! data, with mode-coverage metrics.

pub mod autodiff;
pub mod gan;
pub mod metrics;
pub mod nets;
pub mod rng;
pub mod synthdata;
pub mod tensor;

pub use tensor::Tensor;
