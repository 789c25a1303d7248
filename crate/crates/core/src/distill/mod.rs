//! Two-stage consistency distillation: multistep consistency within segments
//! from teacher-generated states, then milestone consistency on states the
//! student generates for itself.

mod consistency;
mod distance;
mod selfsample;
mod train;

pub use self::{
    consistency::{cm_predict, g_transform, CmTape, ConsistencyModel, Parameterization},
    distance::{consistency_distance, Distance, FeatureDistance, FEATURE_DIM},
    selfsample::{renoise_times, selfsample_final_state, student_selfsample},
    train::{
        consistency_loss, ilcd_batch, ilcd_step, mlcd_batch, mlcd_step, substep_grid, train_ilcd, train_mlcd,
        ConsistencyPair, DistanceKind, DistillConfig, StateInit,
    },
};
