use alloc::{format, vec::Vec};

use super::solver::{cfg_epsilon, ddim_multi, ddim_step};
use crate::{ConditionLabel, Error, LatentBatch, Matrix, NoiseModel, Result, Schedule};

/// Uniform split of `[0, T]` into `M` segments plus the consistency offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentPlan {
    segments: usize,
    milestones: Vec<usize>,
    skip: usize,
}

impl SegmentPlan {
    /// Milestones `s * T / M`; the skip defaults to one segment length.
    pub fn uniform(segments: usize, steps: usize) -> Result<Self> {
        if segments == 0 || segments > steps || !steps.is_multiple_of(segments) {
            return Err(Error::Config(format!(
                "segment count {segments} must divide T = {steps}"
            )));
        }
        let width = steps / segments;
        Ok(Self {
            segments,
            milestones: (0..=segments).map(|s| s * width).collect(),
            skip: width,
        })
    }

    pub fn with_skip(mut self, skip: usize) -> Result<Self> {
        if skip == 0 {
            return Err(Error::Config("skip must be >= 1".to_string()));
        }
        self.skip = skip;
        Ok(self)
    }

    #[inline]
    pub fn segments(&self) -> usize {
        self.segments
    }

    #[inline]
    pub fn milestones(&self) -> &[usize] {
        &self.milestones
    }

    #[inline]
    pub fn skip(&self) -> usize {
        self.skip
    }

    pub fn steps(&self) -> usize {
        self.milestones[self.segments]
    }

    pub fn width(&self) -> f64 {
        self.steps() as f64 / self.segments as f64
    }

    pub fn floor(&self, segment: usize) -> f64 {
        self.milestones[segment] as f64
    }

    pub fn ceil(&self, segment: usize) -> f64 {
        self.milestones[segment + 1] as f64
    }

    pub fn contains(&self, segment: usize, t: f64) -> bool {
        segment < self.segments && t >= self.floor(segment) && t <= self.ceil(segment)
    }
}

fn check_segment(plan: &SegmentPlan, t_m: f64, s: usize) -> Result<()> {
    if !plan.contains(s, t_m) {
        return Err(Error::Timestep(format!(
            "t_m = {t_m} is not inside segment {s} of {} segments",
            plan.segments()
        )));
    }
    Ok(())
}

/// Timesteps visited when denoising pure noise to `t_m` in segment `s`:
/// `L = M - s` steps of size `(T - t_m) / L`, starting at `T`.
pub fn mds_timesteps(plan: &SegmentPlan, t_m: f64, s: usize) -> Result<Vec<f64>> {
    check_segment(plan, t_m, s)?;
    let t_max = plan.steps() as f64;
    let steps = plan.segments() - s;
    let dt = (t_max - t_m) / steps as f64;
    let mut visited = Vec::with_capacity(steps + 1);
    visited.push(t_max);
    for i in 0..steps {
        let t = t_max - i as f64 * dt;
        visited.push(if i + 1 == steps { t_m } else { t - dt });
    }
    Ok(visited)
}

/// Multistep denoising of pure noise to `t_m[i]` with the guided teacher.
///
/// Each row takes `M - s[i]` DDIM steps of equal size from `T`; rows already
/// at `T` return their noise untouched.
pub fn mds_sample(
    schedule: &Schedule,
    teacher: &dyn NoiseModel,
    eps: &Matrix,
    t_m: &[f64],
    s: &[usize],
    plan: &SegmentPlan,
    cond: &[ConditionLabel],
    w: f64,
) -> Result<LatentBatch> {
    let n = eps.rows();
    if t_m.len() != n || s.len() != n || cond.len() != n {
        return Err(Error::shape(
            "mds_sample",
            n,
            format!("{}/{}/{}", t_m.len(), s.len(), cond.len()),
        ));
    }
    if plan.steps() != schedule.steps() {
        return Err(Error::Config(format!(
            "plan spans {} steps, schedule {}",
            plan.steps(),
            schedule.steps()
        )));
    }
    for (&t, &seg) in t_m.iter().zip(s) {
        check_segment(plan, t, seg)?;
    }
    let t_max = schedule.t_max();
    let noise = LatentBatch::at(eps.clone(), t_max, cond.to_vec())?;
    let mut out = noise.clone();
    out.t = t_m.to_vec();
    for seg in 0..plan.segments() {
        let rows: Vec<usize> = (0..n).filter(|&i| s[i] == seg && t_m[i] < t_max).collect();
        if rows.is_empty() {
            continue;
        }
        let group = noise.select(&rows);
        let ends: Vec<f64> = rows.iter().map(|&i| t_m[i]).collect();
        let steps = plan.segments() - seg;
        let done = ddim_multi(schedule, teacher, &group, &ends, steps, w)?;
        out.z.scatter_rows(&rows, &done.z);
    }
    Ok(out)
}

/// The naive alternative to [`mds_sample`]: a single guided DDIM jump from
/// pure noise straight to `t_m[i]`.
pub fn single_step_sample(
    schedule: &Schedule,
    teacher: &dyn NoiseModel,
    eps: &Matrix,
    t_m: &[f64],
    cond: &[ConditionLabel],
    w: f64,
) -> Result<LatentBatch> {
    let noise = LatentBatch::at(eps.clone(), schedule.t_max(), cond.to_vec())?;
    let guided = cfg_epsilon(teacher, &noise, w)?;
    ddim_step(schedule, &noise, &guided, t_m)
}
