//! Variance-preserving diffusion clock, guided DDIM solver and the milestone
//! geometry shared by both distillation stages.

mod batch;
mod plan;
mod schedule;
mod solver;

pub use self::{
    batch::{ConditionLabel, LatentBatch},
    plan::{mds_sample, mds_timesteps, single_step_sample, SegmentPlan},
    schedule::Schedule,
    solver::{cfg_epsilon, ddim_multi, ddim_step, ddim_step_coeffs, forward_diffuse},
};
