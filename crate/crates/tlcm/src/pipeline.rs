//! Stage functions shared by the subcommands and the acceptance suite.

use tlcm_core::{
    distill::{train_ilcd, train_mlcd, ConsistencyModel},
    enhance::{enhance_loop, EnhanceOutcome, RewardModel},
    eval::{sweep_steps, ClassPolicy, Clock, EvalTarget, MetricReport, TeacherSampler},
    teacher::{train_teacher, MixtureDataset},
    trace::TraceSink,
    MlpModel,
};

use crate::{
    checkpoint::{Checkpoint, StageTag},
    config::RunConfig,
    error::AppResult,
};

pub const TEACHER: &str = "teacher";
pub const STUDENT: &str = "student";

pub type Student = ConsistencyModel<MlpModel>;

pub fn teacher(cfg: &RunConfig, sink: &mut dyn TraceSink) -> AppResult<MlpModel> {
    Ok(train_teacher(
        &cfg.dataset()?,
        &cfg.schedule()?,
        cfg.model_spec(),
        &cfg.teacher_config(),
        sink,
    )?)
}

/// A student carrying the teacher's weights.
pub fn student_from(cfg: &RunConfig, teacher: &MlpModel) -> AppResult<Student> {
    student_with(cfg, teacher.clone())
}

pub fn student_with(cfg: &RunConfig, net: MlpModel) -> AppResult<Student> {
    let mut s = ConsistencyModel::new(net, cfg.schedule()?).with_parameterization(cfg.parameterization()?);
    s.sigma_data = cfg.model.sigma_data;
    Ok(s)
}

pub fn mlcd(cfg: &RunConfig, teacher: &MlpModel, student: &mut Student, sink: &mut dyn TraceSink) -> AppResult<()> {
    Ok(train_mlcd(
        student,
        teacher,
        &cfg.distill_config(false)?,
        cfg.seed,
        sink,
    )?)
}

pub fn ilcd(cfg: &RunConfig, teacher: &MlpModel, student: &mut Student, sink: &mut dyn TraceSink) -> AppResult<()> {
    Ok(train_ilcd(
        student,
        teacher,
        &cfg.distill_config(true)?,
        cfg.seed,
        sink,
    )?)
}

pub fn reward(cfg: &RunConfig, ds: &MixtureDataset) -> AppResult<RewardModel> {
    Ok(RewardModel::from_dataset(
        ds,
        cfg.enhance.reward_radius,
        cfg.enhance.reward_scale,
    )?)
}

pub fn enhance(
    cfg: &RunConfig,
    teacher: &MlpModel,
    student: &mut Student,
    sink: &mut dyn TraceSink,
) -> AppResult<EnhanceOutcome> {
    let reward = reward(cfg, &cfg.dataset()?)?;
    Ok(enhance_loop(
        student,
        teacher,
        &reward,
        &cfg.enhance_config()?,
        cfg.seed,
        sink,
    )?)
}

fn sweep(
    cfg: &RunConfig,
    name: &str,
    sampler: &dyn tlcm_core::eval::Sampler,
    steps: &[usize],
    clock: &mut dyn Clock,
) -> AppResult<Vec<MetricReport>> {
    let ds = cfg.dataset()?;
    let reward = reward(cfg, &ds)?;
    let target = EvalTarget {
        data: &ds,
        reward: &reward,
        projections: cfg.eval.projections,
        energy_rows: cfg.eval.energy_rows,
    };
    Ok(sweep_steps(
        name,
        sampler,
        steps,
        cfg.eval.n,
        ClassPolicy::Balanced,
        &target,
        cfg.seed,
        clock,
    )?)
}

/// Student sweep over `eval.steps`.
pub fn evaluate(cfg: &RunConfig, student: &Student, clock: &mut dyn Clock) -> AppResult<Vec<MetricReport>> {
    sweep(cfg, "tlcm", student, &cfg.eval.steps, clock)
}

/// Guided teacher DDIM at the given step counts, on the same inputs as [`evaluate`].
pub fn evaluate_teacher(
    cfg: &RunConfig,
    teacher: &MlpModel,
    steps: &[usize],
    clock: &mut dyn Clock,
) -> AppResult<Vec<MetricReport>> {
    let schedule = cfg.schedule()?;
    let sampler = TeacherSampler {
        teacher,
        schedule: &schedule,
        w: cfg.distill.w,
    };
    sweep(cfg, "teacher", &sampler, steps, clock)
}

pub fn teacher_checkpoint(cfg: &RunConfig, teacher: &MlpModel) -> AppResult<Checkpoint> {
    let mut ck = Checkpoint::new(StageTag::Teacher, &cfg.schedule()?, cfg.to_toml());
    ck.push_model(TEACHER, teacher);
    Ok(ck)
}

pub fn student_checkpoint(cfg: &RunConfig, stage: StageTag, student: &Student) -> Checkpoint {
    let mut ck = Checkpoint::new(stage, student.schedule(), cfg.to_toml());
    ck.push_model(STUDENT, &student.net);
    ck
}

/// The teacher network from a teacher checkpoint.
pub fn load_teacher(ck: &Checkpoint, cfg: &RunConfig) -> AppResult<MlpModel> {
    ck.require(&[StageTag::Teacher], "teacher")?;
    ck.schedule.check(&cfg.schedule()?)?;
    ck.model(TEACHER, &cfg.model_spec())
}

/// The student from any student checkpoint; a teacher checkpoint yields an
/// untrained student initialized from the teacher.
pub fn load_student(ck: &Checkpoint, cfg: &RunConfig) -> AppResult<Student> {
    ck.schedule.check(&cfg.schedule()?)?;
    let prefix = if ck.stage == StageTag::Teacher {
        TEACHER
    } else {
        STUDENT
    };
    student_with(cfg, ck.model(prefix, &cfg.model_spec())?)
}
