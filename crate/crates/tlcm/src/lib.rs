//! Configuration, checkpoints, report files and the `tlcm` command line on top
//! of [`tlcm_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod diagnostics;
mod error;
pub mod io;
pub mod pipeline;

pub use self::{
    checkpoint::{Checkpoint, CheckpointError, StageTag},
    config::RunConfig,
    error::{AppError, AppResult},
};
