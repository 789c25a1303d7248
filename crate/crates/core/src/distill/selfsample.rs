use alloc::vec::Vec;

use rand::Rng;

use super::{cm_predict, ConsistencyModel};
use crate::{diffusion::forward_diffuse, rng, ConditionLabel, Error, LatentBatch, Matrix, NoiseModel, Result};

/// Times reached by each re-noising of a `q`-step self-sampling loop:
/// `T - (T/q)(i + 1)` for `i = 0..q`, ending at 0.
pub fn renoise_times(t_max: f64, q: usize) -> Vec<f64> {
    let width = t_max / q as f64;
    (1..=q)
        .map(|i| if i == q { 0.0 } else { t_max - width * i as f64 })
        .collect()
}

/// State fed to the last consistency evaluation of the `q`-step loop.
///
/// Starts from `eps` at `T`; every intermediate clean estimate is re-noised
/// with fresh noise from `rng`.
pub fn selfsample_final_state<N: NoiseModel, R: Rng + ?Sized>(
    cm: &ConsistencyModel<N>,
    eps: &Matrix,
    q: usize,
    labels: &[ConditionLabel],
    rng: &mut R,
) -> Result<LatentBatch> {
    if q == 0 {
        return Err(Error::Config("self-sampling needs q >= 1".into()));
    }
    let schedule = cm.schedule();
    let mut state = LatentBatch::at(eps.clone(), schedule.t_max(), labels.to_vec())?;
    let times = renoise_times(schedule.t_max(), q);
    for &t in &times[..q - 1] {
        let x0 = cm_predict(cm, &state)?;
        let noise = rng::normal_matrix(rng, x0.rows(), x0.cols());
        let clean = LatentBatch::at(x0, 0.0, labels.to_vec())?;
        state = forward_diffuse(schedule, &clean, &alloc::vec![t; labels.len()], &noise)?;
    }
    Ok(state)
}

/// `q`-step consistency sampling from pure noise; the result carries no
/// gradient information.
pub fn student_selfsample<N: NoiseModel, R: Rng + ?Sized>(
    cm: &ConsistencyModel<N>,
    eps: &Matrix,
    q: usize,
    labels: &[ConditionLabel],
    rng: &mut R,
) -> Result<Matrix> {
    let state = selfsample_final_state(cm, eps, q, labels, rng)?;
    cm_predict(cm, &state)
}
