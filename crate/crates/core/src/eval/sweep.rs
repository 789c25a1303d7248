use alloc::{string::String, vec::Vec};

use rand_chacha::ChaCha8Rng;

use super::{energy_distance, sliced_w2};
use crate::{
    diffusion::ddim_multi,
    distill::{student_selfsample, ConsistencyModel},
    enhance::RewardModel,
    rng::{self, stream},
    teacher::MixtureDataset,
    ConditionLabel, Error, LatentBatch, Matrix, MlpModel, NoiseModel, Result,
};

/// Anything that turns noise into samples in a given number of steps.
pub trait Sampler {
    fn sample(&self, eps: &Matrix, labels: &[ConditionLabel], steps: usize, rng: &mut ChaCha8Rng) -> Result<Matrix>;
}

/// `k`-step consistency sampling: the self-sampling loop with `q = k`.
impl<N: NoiseModel> Sampler for ConsistencyModel<N> {
    fn sample(&self, eps: &Matrix, labels: &[ConditionLabel], steps: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
        student_selfsample(self, eps, steps, labels, rng)
    }
}

/// Guided deterministic DDIM with the teacher from `T` to 0.
pub struct TeacherSampler<'a> {
    pub teacher: &'a MlpModel,
    pub schedule: &'a crate::Schedule,
    pub w: f64,
}

impl Sampler for TeacherSampler<'_> {
    fn sample(&self, eps: &Matrix, labels: &[ConditionLabel], steps: usize, _rng: &mut ChaCha8Rng) -> Result<Matrix> {
        let start = LatentBatch::at(eps.clone(), self.schedule.t_max(), labels.to_vec())?;
        Ok(ddim_multi(
            self.schedule,
            self.teacher,
            &start,
            &alloc::vec![0.0; eps.rows()],
            steps,
            self.w,
        )?
        .z)
    }
}

/// Which labels a sweep generates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassPolicy {
    /// Row `i` gets class `i mod K`.
    Balanced,
    Fixed(usize),
}

impl ClassPolicy {
    pub fn labels(&self, n: usize, classes: usize) -> Vec<ConditionLabel> {
        (0..n)
            .map(|i| match *self {
                ClassPolicy::Balanced => ConditionLabel::Class((i % classes) as u32),
                ClassPolicy::Fixed(k) => ConditionLabel::Class(k as u32),
            })
            .collect()
    }
}

/// Milliseconds source for timing; the core never reads a clock itself.
pub trait Clock {
    fn now_ms(&mut self) -> u64;
}

/// Reports zero elapsed time, for byte-reproducible output.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&mut self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub sampler: String,
    pub steps: usize,
    pub n: usize,
    pub w2: f64,
    pub energy: f64,
    pub mean_reward: f64,
    pub wall_ms: u64,
    pub seed: u64,
}

/// Everything a sweep compares against.
#[derive(Debug, Clone, Copy)]
pub struct EvalTarget<'a> {
    pub data: &'a MixtureDataset,
    pub reward: &'a RewardModel,
    pub projections: usize,
    /// Pairs are capped at this many rows per side for the quadratic energy
    /// distance.
    pub energy_rows: usize,
}

/// The noise and labels used for the `k`-step run of a sweep.
pub fn sweep_inputs(
    n: usize,
    dim: usize,
    classes: usize,
    policy: ClassPolicy,
    seed: u64,
) -> (Matrix, Vec<ConditionLabel>) {
    let eps = rng::normal_matrix(&mut rng::stream_rng(seed, stream::EVAL, 0), n, dim);
    (eps, policy.labels(n, classes))
}

/// Metrics of `samples` (generated for `labels`) against held-out truth.
pub fn score_samples(
    samples: &Matrix,
    labels: &[ConditionLabel],
    target: &EvalTarget,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let truth = target.data.truth_for(labels, seed);
    let w2 = sliced_w2(samples, &truth, target.projections, seed)?;
    let m = samples.rows().min(target.energy_rows);
    let idx: Vec<usize> = (0..m).collect();
    let energy = energy_distance(&samples.select_rows(&idx), &truth.select_rows(&idx))?;
    let reward = target.reward.mean_score(samples, labels)?;
    Ok((w2, energy, reward))
}

/// Runs `sampler` at each step count on the same noise and labels and scores
/// the result.
pub fn sweep_steps(
    name: &str,
    sampler: &dyn Sampler,
    steps_list: &[usize],
    n: usize,
    policy: ClassPolicy,
    target: &EvalTarget,
    seed: u64,
    clock: &mut dyn Clock,
) -> Result<Vec<MetricReport>> {
    if steps_list.is_empty() {
        return Err(Error::Empty("step list"));
    }
    if n == 0 {
        return Err(Error::Empty("sample count"));
    }
    let (eps, labels) = sweep_inputs(n, target.data.dim(), target.data.classes(), policy, seed);
    steps_list
        .iter()
        .map(|&k| {
            let mut r = rng::stream_rng(seed, stream::EVAL, rng::sub_counter(1, k as u64));
            let start = clock.now_ms();
            let samples = sampler.sample(&eps, &labels, k, &mut r)?;
            let wall_ms = clock.now_ms().saturating_sub(start);
            let (w2, energy, mean_reward) = score_samples(&samples, &labels, target, seed)?;
            Ok(MetricReport {
                sampler: name.into(),
                steps: k,
                n,
                w2,
                energy,
                mean_reward,
                wall_ms,
                seed,
            })
        })
        .collect()
}
