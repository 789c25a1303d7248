//! Synthetic conditional data, the noise-prediction teacher and the closed-form
//! Gaussian noise oracle used to validate solvers.

mod analytic;
mod dataset;
mod train;

pub use self::{
    analytic::{analytic_gaussian_eps, gaussian_flow_endpoint, AnalyticGaussian},
    dataset::MixtureDataset,
    train::{cosine_lr, denoising_loss, train_teacher, DivergenceGuard, TeacherConfig},
};
