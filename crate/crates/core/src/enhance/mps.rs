use alloc::vec::Vec;

use super::RewardModel;
use crate::{distill::ConsistencyModel, ConditionLabel, Error, LatentBatch, Matrix, Result};

/// Hinge preference loss
/// `mean(max(s0 - s(x, c_pos), 0) + max(s(x, c_neg), 0))` and its gradient
/// with respect to `x`.
pub fn mps_loss(
    reward: &RewardModel,
    x0: &Matrix,
    c_pos: &[ConditionLabel],
    c_neg: &[ConditionLabel],
    s0: f64,
) -> Result<(f64, Matrix)> {
    let n = x0.rows();
    if c_pos.len() != n || c_neg.len() != n {
        return Err(Error::shape("mps_loss labels", n, c_pos.len().min(c_neg.len())));
    }
    if n == 0 {
        return Err(Error::Empty("mps_loss batch"));
    }
    let mut grad = Matrix::zeros(n, x0.cols());
    let mut total = 0.0;
    for (row, (&pos, &neg)) in c_pos.iter().zip(c_neg).enumerate() {
        if pos == neg {
            return Err(Error::SameCondition { row });
        }
        let x = x0.row(row);
        let (sp, gp) = reward.score_grad(x, pos)?;
        let (sn, gn) = reward.score_grad(x, neg)?;
        let g = grad.row_mut(row);
        if s0 - sp > 0.0 {
            total += s0 - sp;
            for (o, v) in g.iter_mut().zip(&gp) {
                *o -= v / n as f64;
            }
        }
        if sn > 0.0 {
            total += sn;
            for (o, v) in g.iter_mut().zip(&gn) {
                *o += v / n as f64;
            }
        }
    }
    Ok((total / n as f64, grad))
}

/// [`mps_loss`] of the student's clean estimate on `state`, with the parameter
/// gradient through that single evaluation.
pub fn mps_student_loss(
    student: &ConsistencyModel,
    state: &LatentBatch,
    reward: &RewardModel,
    c_neg: &[ConditionLabel],
    s0: f64,
) -> Result<(f64, Vec<f64>)> {
    let (x, tape) = student.predict_tape(state)?;
    let (loss, gx) = mps_loss(reward, &x, &state.cond, c_neg, s0)?;
    Ok((loss, student.backward(&tape, &gx)?))
}
