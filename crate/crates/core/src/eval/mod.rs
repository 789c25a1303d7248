//! Distributional metrics and step-count sweeps against ground-truth draws.

mod metrics;
mod sweep;

pub use self::{
    metrics::{energy_distance, projection_directions, sliced_w2, w2_squared_1d},
    sweep::{
        score_samples, sweep_inputs, sweep_steps, ClassPolicy, Clock, EvalTarget, MetricReport, NoClock, Sampler,
        TeacherSampler,
    },
};
