use alloc::{format, vec, vec::Vec};

use crate::{ConditionLabel, Error, LatentBatch, Matrix, NoiseModel, Result, Schedule};

/// `sqrt(ab_t) * z0 + sqrt(1 - ab_t) * eps` row by row.
pub fn forward_diffuse(schedule: &Schedule, z0: &LatentBatch, t: &[f64], eps: &Matrix) -> Result<LatentBatch> {
    z0.z.check_same_shape(eps, "forward_diffuse noise")?;
    if t.len() != z0.len() {
        return Err(Error::shape("forward_diffuse timesteps", z0.len(), t.len()));
    }
    let mut signal = Vec::with_capacity(t.len());
    let mut noise = Vec::with_capacity(t.len());
    for &ti in t {
        schedule.check_timestep(ti)?;
        let (s, n) = schedule.signal_noise(ti);
        signal.push(s);
        noise.push(n);
    }
    let z = Matrix::row_affine(&signal, &z0.z, &noise, eps);
    Ok(LatentBatch {
        z,
        t: t.to_vec(),
        cond: z0.cond.clone(),
    })
}

/// Guided noise prediction `eps(z, null) + w * (eps(z, c) - eps(z, null))`.
///
/// Both branches are evaluated in one stacked forward pass. `w == 1` returns
/// the conditional prediction itself.
pub fn cfg_epsilon(model: &dyn NoiseModel, z: &LatentBatch, w: f64) -> Result<Matrix> {
    if w == 1.0 {
        return model.predict(&z.z, &z.t, &z.cond);
    }
    let n = z.len();
    let stacked = Matrix::vcat(&[&z.z, &z.z]);
    let mut t = Vec::with_capacity(2 * n);
    t.extend_from_slice(&z.t);
    t.extend_from_slice(&z.t);
    let mut labels = vec![ConditionLabel::Null; n];
    labels.extend_from_slice(&z.cond);
    let both = model.predict(&stacked, &t, &labels)?;
    let d = both.cols();
    let (uncond, cond) = both.as_slice().split_at(n * d);
    let data = uncond.iter().zip(cond).map(|(&u, &c)| u + w * (c - u)).collect();
    Ok(Matrix::from_vec(n, d, data))
}

/// Coefficients `(a, b)` with `ddim(z, eps) = a * z + b * eps` for a jump
/// between two noise levels given by their `alpha_bar`.
pub fn ddim_step_coeffs(ab_from: f64, ab_to: f64) -> (f64, f64) {
    let (sf, nf) = (libm::sqrt(ab_from), libm::sqrt(1.0 - ab_from));
    let (st, nt) = (libm::sqrt(ab_to), libm::sqrt(1.0 - ab_to));
    // x0 = (z - nf * eps) / sf ;  out = st * x0 + nt * eps
    (st / sf, nt - st * nf / sf)
}

fn ddim_row(z: &[f64], eps: &[f64], ab_from: f64, ab_to: f64, out: &mut [f64]) {
    let (sf, nf) = (libm::sqrt(ab_from), libm::sqrt(1.0 - ab_from));
    let (st, nt) = (libm::sqrt(ab_to), libm::sqrt(1.0 - ab_to));
    for ((o, &zi), &ei) in out.iter_mut().zip(z).zip(eps) {
        let x0 = (zi - nf * ei) / sf;
        *o = st * x0 + nt * ei;
    }
}

/// Deterministic DDIM step from each row's own timestep to `t_to[i]`.
///
/// Rows with `t_to == t_from` come back bit-identical.
pub fn ddim_step(schedule: &Schedule, z: &LatentBatch, eps_hat: &Matrix, t_to: &[f64]) -> Result<LatentBatch> {
    z.z.check_same_shape(eps_hat, "ddim_step noise prediction")?;
    if t_to.len() != z.len() {
        return Err(Error::shape("ddim_step targets", z.len(), t_to.len()));
    }
    let mut out = z.z.clone();
    for (i, (&from, &to)) in z.t.iter().zip(t_to).enumerate() {
        schedule.check_timestep(from)?;
        schedule.check_timestep(to)?;
        if to > from {
            return Err(Error::Timestep(format!("ddim_step target {to} above source {from}")));
        }
        if to == from {
            continue;
        }
        let (af, at) = (schedule.alpha_bar(from), schedule.alpha_bar(to));
        ddim_row(z.z.row(i), eps_hat.row(i), af, at, out.row_mut(i));
    }
    Ok(LatentBatch {
        z: out,
        t: t_to.to_vec(),
        cond: z.cond.clone(),
    })
}

/// `steps` guided DDIM steps on a uniform grid from each row's timestep down
/// to `t_end[i]`.
pub fn ddim_multi(
    schedule: &Schedule,
    model: &dyn NoiseModel,
    z_init: &LatentBatch,
    t_end: &[f64],
    steps: usize,
    w: f64,
) -> Result<LatentBatch> {
    if steps == 0 {
        return Err(Error::Config("ddim_multi needs at least one step".to_string()));
    }
    if t_end.len() != z_init.len() {
        return Err(Error::shape("ddim_multi targets", z_init.len(), t_end.len()));
    }
    let start = z_init.t.clone();
    let mut z = z_init.clone();
    for k in 1..=steps {
        let to: Vec<f64> = start
            .iter()
            .zip(t_end)
            .map(|(&s, &e)| {
                if k == steps {
                    e
                } else {
                    s - (s - e) * k as f64 / steps as f64
                }
            })
            .collect();
        let eps = cfg_epsilon(model, &z, w)?;
        z = ddim_step(schedule, &z, &eps, &to)?;
    }
    Ok(z)
}
