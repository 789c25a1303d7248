use alloc::vec::Vec;

use crate::{
    diffusion::{cfg_epsilon, forward_diffuse},
    distill::ConsistencyModel,
    nets::{adam_step, AdamConfig, AdamState},
    teacher::denoising_loss,
    ConditionLabel, LatentBatch, Matrix, MlpModel, Result, Schedule,
};

/// Frozen teacher score and a trainable copy that tracks the student.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePair {
    real: MlpModel,
    pub fake: MlpModel,
}

impl ScorePair {
    /// Both networks start from the teacher.
    pub fn from_teacher(teacher: &MlpModel) -> Self {
        Self {
            real: teacher.clone(),
            fake: teacher.clone(),
        }
    }

    pub fn real(&self) -> &MlpModel {
        &self.real
    }
}

/// One noise-prediction update of the fake score on student samples `x0`.
#[allow(clippy::too_many_arguments)]
pub fn fake_score_step(
    pair: &mut ScorePair,
    schedule: &Schedule,
    x0: &Matrix,
    labels: &[ConditionLabel],
    t: &[f64],
    eps: &Matrix,
    state: &mut AdamState,
    adam: &AdamConfig,
) -> Result<f64> {
    let (loss, grads) = denoising_loss(&pair.fake, schedule, x0, labels, t, eps)?;
    adam_step(pair.fake.params_mut(), &grads, state, adam)?;
    Ok(loss)
}

/// Difference of the clean-point estimates implied by the guided real score
/// and the conditional fake score at `x` diffused to `t'`.
///
/// It is a positive multiple of `s_real - s_fake`, the direction that moves
/// samples toward the real distribution.
pub fn dm_direction(
    pair: &ScorePair,
    schedule: &Schedule,
    x: &Matrix,
    labels: &[ConditionLabel],
    t_prime: f64,
    noise: &Matrix,
    w: f64,
) -> Result<Matrix> {
    let clean = LatentBatch::at(x.clone(), 0.0, labels.to_vec())?;
    let xt = forward_diffuse(schedule, &clean, &alloc::vec![t_prime; x.rows()], noise)?;
    let eps_real = cfg_epsilon(&pair.real, &xt, w)?;
    let eps_fake = crate::NoiseModel::predict(&pair.fake, &xt.z, &xt.t, &xt.cond)?;
    // x0_real - x0_fake = -(sigma / sqrt(ab)) (eps_real - eps_fake).
    let (s, n) = schedule.signal_noise(t_prime);
    Ok(eps_real.sub(&eps_fake).scale(-n / s))
}

/// Surrogate `-mean_i <direction_i, f(state_i)>` and its parameter gradient;
/// the direction is treated as a constant.
pub fn dfdm_surrogate(student: &ConsistencyModel, state: &LatentBatch, direction: &Matrix) -> Result<(f64, Vec<f64>)> {
    let (x, tape) = student.predict_tape(state)?;
    x.check_same_shape(direction, "dfdm direction")?;
    let n = x.rows() as f64;
    let value = -x
        .as_slice()
        .iter()
        .zip(direction.as_slice())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n;
    Ok((value, student.backward(&tape, &direction.scale(-1.0 / n))?))
}

/// Distribution-matching gradient for the student at `state`: the score
/// difference at the diffused one-step output, pushed back through the
/// student with the score networks held fixed.
#[allow(clippy::too_many_arguments)]
pub fn dfdm_grad(
    pair: &ScorePair,
    student: &ConsistencyModel,
    state: &LatentBatch,
    t_prime: f64,
    noise: &Matrix,
    w: f64,
) -> Result<(f64, Vec<f64>)> {
    let x = crate::distill::cm_predict(student, state)?;
    let direction = dm_direction(pair, student.schedule(), &x, &state.cond, t_prime, noise, w)?;
    dfdm_surrogate(student, state, &direction)
}
