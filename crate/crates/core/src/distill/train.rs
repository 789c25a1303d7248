use alloc::{format, vec, vec::Vec};

use super::{student_selfsample, ConsistencyModel, Distance, FeatureDistance};
use crate::{
    diffusion::{cfg_epsilon, ddim_multi, ddim_step, forward_diffuse, mds_sample, single_step_sample},
    nets::{adam_step, AdamConfig, AdamState},
    rng::{self, stream},
    teacher::DivergenceGuard,
    trace::{TraceRecord, TraceSink},
    ConditionLabel, Error, LatentBatch, MlpModel, NoiseModel, Result, SegmentPlan,
};

/// How stage 1 produces its training states from pure noise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum StateInit {
    /// `M - s` guided teacher steps.
    #[default]
    Multistep,
    /// One guided teacher jump.
    SingleStep,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DistanceKind {
    #[default]
    Mse,
    Feature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    /// Milestones and the stage-1 skip.
    pub plan: SegmentPlan,
    pub w: f64,
    /// Teacher sub-steps per stage-2 interval.
    pub p: usize,
    /// Student self-sampling steps.
    pub q: usize,
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    pub distance: DistanceKind,
    pub init: StateInit,
    pub classes: usize,
}

impl DistillConfig {
    pub fn new(plan: SegmentPlan, classes: usize) -> Self {
        Self {
            plan,
            w: 8.0,
            p: 3,
            q: 4,
            iterations: 1000,
            batch: 64,
            lr: 1e-4,
            distance: DistanceKind::Mse,
            init: StateInit::Multistep,
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::Config(format!(
                "p and q must be >= 1 (p = {}, q = {})",
                self.p, self.q
            )));
        }
        if self.batch == 0 || self.classes == 0 {
            return Err(Error::Config("batch and class count must be positive".to_string()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !self.w.is_finite() {
            return Err(Error::Config(format!("lr = {} / w = {} invalid", self.lr, self.w)));
        }
        Ok(())
    }

    pub fn build_distance(&self, dim: usize, seed: u64) -> Result<Distance> {
        Ok(match self.distance {
            DistanceKind::Mse => Distance::Mse,
            DistanceKind::Feature => Distance::Feature(FeatureDistance::new(dim, seed)?),
        })
    }
}

/// Paired training states for one consistency update.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyPair {
    /// States the gradient flows through.
    pub online: LatentBatch,
    /// Teacher-advanced states evaluated under stop-gradient.
    pub target: LatentBatch,
    /// Milestone each row is mapped to; `None` compares clean estimates.
    pub anchor: Option<Vec<f64>>,
}

fn uniform_labels<R: rand::Rng + ?Sized>(r: &mut R, n: usize, classes: usize) -> Vec<ConditionLabel> {
    (0..n)
        .map(|_| ConditionLabel::Class(rng::index(r, classes) as u32))
        .collect()
}

/// Stage-1 states: `t_m` uniform in a random segment, `t_n = max(t_m - skip,
/// floor)`, `z_{t_m}` from noise by the configured init and `z_{t_n}` by one
/// guided teacher step.
pub fn mlcd_batch(
    teacher: &dyn NoiseModel,
    schedule: &crate::Schedule,
    cfg: &DistillConfig,
    seed: u64,
    iter: u64,
) -> Result<ConsistencyPair> {
    let plan = &cfg.plan;
    let n = cfg.batch;
    let mut r = rng::stream_rng(seed, stream::MLCD, iter);
    let labels = uniform_labels(&mut r, n, cfg.classes);
    let mut seg = Vec::with_capacity(n);
    let mut t_m = Vec::with_capacity(n);
    let mut t_n = Vec::with_capacity(n);
    let mut anchor = Vec::with_capacity(n);
    for _ in 0..n {
        let s = rng::index(&mut r, plan.segments());
        let floor = plan.floor(s);
        let tm = floor + plan.width() * (1.0 - rng::uniform(&mut r, 0.0, 1.0));
        seg.push(s);
        t_m.push(tm);
        t_n.push((tm - plan.skip() as f64).max(floor));
        anchor.push(floor);
    }
    let eps = rng::normal_matrix(&mut r, n, teacher.data_dim());
    let online = match cfg.init {
        StateInit::Multistep => mds_sample(schedule, teacher, &eps, &t_m, &seg, plan, &labels, cfg.w)?,
        StateInit::SingleStep => single_step_sample(schedule, teacher, &eps, &t_m, &labels, cfg.w)?,
    };
    let guided = cfg_epsilon(teacher, &online, cfg.w)?;
    let target = ddim_step(schedule, &online, &guided, &t_n)?;
    Ok(ConsistencyPair {
        online,
        target,
        anchor: Some(anchor),
    })
}

/// Stage-2 states: student self-samples re-noised to a milestone `t_m`, and
/// `p` guided teacher steps down to `t_m - T/M`.
pub fn ilcd_batch<N: NoiseModel>(
    student: &ConsistencyModel<N>,
    teacher: &dyn NoiseModel,
    cfg: &DistillConfig,
    seed: u64,
    iter: u64,
) -> Result<ConsistencyPair> {
    let schedule = student.schedule();
    let plan = &cfg.plan;
    let n = cfg.batch;
    let dim = teacher.data_dim();
    let mut r = rng::stream_rng(seed, stream::ILCD, iter);
    let labels = uniform_labels(&mut r, n, cfg.classes);
    let t_m: Vec<f64> = (0..n)
        .map(|_| plan.milestones()[1 + rng::index(&mut r, plan.segments())] as f64)
        .collect();
    let t_n: Vec<f64> = t_m.iter().map(|t| t - plan.width()).collect();
    let eps = rng::normal_matrix(&mut r, n, dim);
    let mut self_rng = rng::stream_rng(seed, stream::SELF_SAMPLE, iter);
    let x0 = student_selfsample(student, &eps, cfg.q, &labels, &mut self_rng)?;
    let renoise = rng::normal_matrix(&mut r, n, dim);
    let clean = LatentBatch::at(x0, 0.0, labels)?;
    let online = forward_diffuse(schedule, &clean, &t_m, &renoise)?;
    let target = ddim_multi(schedule, teacher, &online, &t_n, cfg.p, cfg.w)?;
    Ok(ConsistencyPair {
        online,
        target,
        anchor: None,
    })
}

/// `d(F_online(online states), stopgrad(F_target(target states)))` and its
/// gradient with respect to the online parameters only.
pub fn consistency_loss(
    online: &ConsistencyModel,
    target: &ConsistencyModel,
    pair: &ConsistencyPair,
    distance: &Distance,
) -> Result<(f64, Vec<f64>)> {
    let (pred, tape, goal) = match &pair.anchor {
        Some(anchor) => {
            let target_anchor: Vec<f64> = anchor.clone();
            let (pred, tape) = online.anchored_tape(&pair.online, anchor)?;
            let goal = super::g_transform(target, &pair.target, &target_anchor)?;
            (pred, tape, goal)
        }
        None => {
            let (pred, tape) = online.predict_tape(&pair.online)?;
            (pred, tape, super::cm_predict(target, &pair.target)?)
        }
    };
    let (loss, up) = distance.eval_grad(&pred, &goal)?;
    Ok((loss, online.backward(&tape, &up)?))
}

/// One stage-1 loss evaluation for `student`.
pub fn mlcd_step(
    student: &ConsistencyModel,
    teacher: &dyn NoiseModel,
    cfg: &DistillConfig,
    distance: &Distance,
    seed: u64,
    iter: u64,
) -> Result<(f64, Vec<f64>)> {
    let pair = mlcd_batch(teacher, student.schedule(), cfg, seed, iter)?;
    consistency_loss(student, student, &pair, distance)
}

/// One stage-2 loss evaluation for `student`.
pub fn ilcd_step(
    student: &ConsistencyModel,
    teacher: &dyn NoiseModel,
    cfg: &DistillConfig,
    distance: &Distance,
    seed: u64,
    iter: u64,
) -> Result<(f64, Vec<f64>)> {
    let pair = ilcd_batch(student, teacher, cfg, seed, iter)?;
    consistency_loss(student, student, &pair, distance)
}

type StepFn = fn(&ConsistencyModel, &dyn NoiseModel, &DistillConfig, &Distance, u64, u64) -> Result<(f64, Vec<f64>)>;

fn run_stage(
    stage: &'static str,
    step: StepFn,
    student: &mut ConsistencyModel<MlpModel>,
    teacher: &dyn NoiseModel,
    cfg: &DistillConfig,
    seed: u64,
    sink: &mut dyn TraceSink,
) -> Result<()> {
    cfg.validate()?;
    if cfg.plan.steps() != student.schedule().steps() {
        return Err(Error::Config(format!(
            "plan spans {} steps, schedule {}",
            cfg.plan.steps(),
            student.schedule().steps()
        )));
    }
    let distance = cfg.build_distance(teacher.data_dim(), seed)?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut state = AdamState::new(student.net.param_count());
    let mut guard = DivergenceGuard::default();
    for it in 0..cfg.iterations {
        let (loss, grads) = step(student, teacher, cfg, &distance, seed, it as u64)?;
        guard.observe(it, loss)?;
        sink.record(&TraceRecord::loss(stage, it as u64, loss));
        adam_step(student.net.params_mut(), &grads, &mut state, &adam)?;
    }
    Ok(())
}

/// Stage 1: multistep consistency distillation from the guided teacher.
pub fn train_mlcd(
    student: &mut ConsistencyModel<MlpModel>,
    teacher: &dyn NoiseModel,
    cfg: &DistillConfig,
    seed: u64,
    sink: &mut dyn TraceSink,
) -> Result<()> {
    run_stage("mlcd", mlcd_step, student, teacher, cfg, seed, sink)
}

/// Stage 2: milestone consistency distillation on self-generated states.
pub fn train_ilcd(
    student: &mut ConsistencyModel<MlpModel>,
    teacher: &dyn NoiseModel,
    cfg: &DistillConfig,
    seed: u64,
    sink: &mut dyn TraceSink,
) -> Result<()> {
    run_stage("ilcd", ilcd_step, student, teacher, cfg, seed, sink)
}

/// The uniform grid of `p` sub-steps from `t_from` down to `t_to`.
pub fn substep_grid(t_from: f64, t_to: f64, p: usize) -> Vec<f64> {
    let dt = (t_from - t_to) / p as f64;
    let mut grid = vec![t_from];
    grid.extend((1..=p).map(|i| if i == p { t_to } else { t_from - dt * i as f64 }));
    grid
}
