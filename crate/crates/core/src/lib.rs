//! Numerical core of a desk-scale two-stage latent consistency distillation lab.
//!
//! Everything here is a pure function of its inputs and a seed: the diffusion
//! schedule and DDIM solver, small MLP networks with hand-written reverse-mode
//! gradients, teacher training, multistep and milestone consistency
//! distillation, the data-free enhancement losses, and distributional metrics.
//! The crate only needs `alloc`; IO, configuration files and the CLI live in the
//! `tlcm` companion crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod diffusion;
pub mod distill;
pub mod enhance;
mod error;
pub mod eval;
pub mod nets;
pub mod rng;
pub mod teacher;
pub mod tensor;
pub mod trace;

pub use self::{
    diffusion::{ConditionLabel, LatentBatch, Schedule, SegmentPlan},
    error::{Error, Result},
    nets::{Activation, MlpModel, MlpSpec, NoiseModel},
    tensor::Matrix,
};
