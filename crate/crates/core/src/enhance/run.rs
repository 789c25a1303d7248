use alloc::{format, vec::Vec};

use rand::Rng;

use super::{dfdm_grad, fake_score_step, gan_losses, mps_student_loss, Discriminator, RewardModel, ScorePair};
use crate::{
    diffusion::forward_diffuse,
    distill::{cm_predict, selfsample_final_state, ConsistencyModel},
    nets::{adam_step, AdamConfig, AdamState},
    rng::{self, stream},
    teacher::DivergenceGuard,
    trace::{TraceRecord, TraceSink},
    ConditionLabel, Error, LatentBatch, Matrix, MlpModel, Result, SegmentPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Reward,
    Dm,
    Gan,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Reward => "reward",
            Stage::Dm => "dm",
            Stage::Gan => "gan",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "reward" => Ok(Stage::Reward),
            "dm" => Ok(Stage::Dm),
            "gan" => Ok(Stage::Gan),
            other => Err(Error::Config(format!("unknown enhancement stage {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceConfig {
    pub stages: Vec<Stage>,
    pub s0: f64,
    pub reward_iters: usize,
    pub reward_batch: usize,
    /// Joint distribution-matching / adversarial iterations.
    pub iters: usize,
    pub batch: usize,
    /// Student and fake-score learning rate.
    pub lr: f64,
    pub d_lr: f64,
    /// Guidance scale of the real score.
    pub w: f64,
    /// Self-sampling steps used to generate states.
    pub q: usize,
    pub plan: SegmentPlan,
    pub classes: usize,
    pub disc_hidden: Vec<usize>,
}

impl EnhanceConfig {
    pub fn new(plan: SegmentPlan, classes: usize) -> Self {
        Self {
            stages: alloc::vec![Stage::Reward, Stage::Dm, Stage::Gan],
            s0: 16.0,
            reward_iters: 500,
            reward_batch: 8,
            iters: 1000,
            batch: 4,
            lr: 1e-5,
            d_lr: 1e-4,
            w: 8.0,
            q: 4,
            plan,
            classes,
            disc_hidden: alloc::vec![64, 64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 && self.stages.contains(&Stage::Reward) {
            return Err(Error::Config("the reward stage needs at least two classes".into()));
        }
        if self.q == 0 || self.batch == 0 || self.reward_batch == 0 {
            return Err(Error::Config("q and batch sizes must be positive".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if self.stages[..i].contains(s) {
                return Err(Error::Config(format!("stage {:?} listed twice", s.name())));
            }
        }
        Ok(())
    }
}

/// Score networks and discriminator left behind by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceOutcome {
    pub pair: Option<ScorePair>,
    pub discriminator: Option<Discriminator>,
}

fn labels<R: Rng + ?Sized>(r: &mut R, n: usize, classes: usize) -> Vec<ConditionLabel> {
    (0..n)
        .map(|_| ConditionLabel::Class(rng::index(r, classes) as u32))
        .collect()
}

/// A label different from `c`, uniform over the rest.
fn other_label<R: Rng + ?Sized>(r: &mut R, c: ConditionLabel, classes: usize) -> ConditionLabel {
    let k = c.class().unwrap_or(0);
    let j = rng::index(r, classes - 1);
    ConditionLabel::Class(if j >= k { j + 1 } else { j } as u32)
}

fn reward_stage(
    student: &mut ConsistencyModel<MlpModel>,
    reward: &RewardModel,
    cfg: &EnhanceConfig,
    seed: u64,
    sink: &mut dyn TraceSink,
) -> Result<()> {
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut state = AdamState::new(student.net.param_count());
    let mut guard = DivergenceGuard::default();
    let dim = student.net.spec().data_dim;
    for it in 0..cfg.reward_iters {
        let mut r = rng::stream_rng(seed, stream::REWARD, it as u64);
        let pos = labels(&mut r, cfg.reward_batch, cfg.classes);
        let neg: Vec<ConditionLabel> = pos.iter().map(|&c| other_label(&mut r, c, cfg.classes)).collect();
        let eps = rng::normal_matrix(&mut r, cfg.reward_batch, dim);
        let final_state = selfsample_final_state(student, &eps, cfg.q, &pos, &mut r)?;
        let (loss, grads) = mps_student_loss(student, &final_state, reward, &neg, cfg.s0)?;
        guard.observe(it, loss)?;
        let x = cm_predict(student, &final_state)?;
        let rec = TraceRecord {
            mean_reward: Some(reward.mean_score(&x, &pos)?),
            ..TraceRecord::loss("reward", it as u64, loss)
        };
        sink.record(&rec);
        adam_step(student.net.params_mut(), &grads, &mut state, &adam)?;
    }
    Ok(())
}

/// Time for the distribution-matching and adversarial diffusion, uniform in
/// `[0.02 T, 0.98 T]`.
fn draw_t_prime<R: Rng + ?Sized>(r: &mut R, t_max: f64) -> f64 {
    rng::uniform(r, 0.02 * t_max, 0.98 * t_max)
}

#[allow(clippy::too_many_arguments)]
fn joint_stage(
    student: &mut ConsistencyModel<MlpModel>,
    teacher: &MlpModel,
    cfg: &EnhanceConfig,
    use_dm: bool,
    use_gan: bool,
    seed: u64,
    sink: &mut dyn TraceSink,
) -> Result<EnhanceOutcome> {
    let schedule = student.schedule().clone();
    let spec = teacher.spec();
    let dim = spec.data_dim;
    let n = cfg.batch;
    let t_max = schedule.t_max();
    let mut pair = use_dm.then(|| ScorePair::from_teacher(teacher));
    let mut disc = if use_gan {
        Some(Discriminator::new(
            dim,
            spec.time_dim,
            cfg.classes,
            &cfg.disc_hidden,
            spec.t_scale,
            seed,
        )?)
    } else {
        None
    };
    let student_adam = AdamConfig::with_lr(cfg.lr);
    let d_adam = AdamConfig::with_lr(cfg.d_lr);
    let mut student_state = AdamState::new(student.net.param_count());
    let mut fake_state = AdamState::new(teacher.param_count());
    let mut d_state = disc.as_ref().map(|d| AdamState::new(d.net.param_count()));
    let mut guard = DivergenceGuard::default();

    for it in 0..cfg.iters {
        let mut r = rng::stream_rng(seed, stream::DFDM, it as u64);
        let c = labels(&mut r, n, cfg.classes);
        let eps = rng::normal_matrix(&mut r, n, dim);
        // Detached q-step sample, re-noised to a milestone, then the tracked
        // one-step prediction.
        let z_hat = cm_predict(student, &selfsample_final_state(student, &eps, cfg.q, &c, &mut r)?)?;
        let milestone = cfg.plan.milestones()[1 + rng::index(&mut r, cfg.plan.segments())] as f64;
        let renoise = rng::normal_matrix(&mut r, n, dim);
        let clean = LatentBatch::at(z_hat.clone(), 0.0, c.clone())?;
        let z_t = forward_diffuse(&schedule, &clean, &alloc::vec![milestone; n], &renoise)?;
        let x = cm_predict(student, &z_t)?;

        let mut grads = alloc::vec![0.0; student.net.param_count()];
        let mut loss = 0.0;
        let mut d_acc = None;
        if let Some(pair) = pair.as_mut() {
            let t_fake: Vec<f64> = (0..n).map(|_| t_max * (1.0 - rng::uniform(&mut r, 0.0, 1.0))).collect();
            let noise_fake = rng::normal_matrix(&mut r, n, dim);
            fake_score_step(
                pair,
                &schedule,
                &z_hat,
                &c,
                &t_fake,
                &noise_fake,
                &mut fake_state,
                &student_adam,
            )?;
            let t_prime = draw_t_prime(&mut r, t_max);
            let noise = rng::normal_matrix(&mut r, n, dim);
            let (value, g) = dfdm_grad(pair, student, &z_t, t_prime, &noise, cfg.w)?;
            loss += value;
            grads.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        if let (Some(d), Some(d_state)) = (disc.as_mut(), d_state.as_mut()) {
            let mut rg = rng::stream_rng(seed, stream::GAN, it as u64);
            let t_prime = draw_t_prime(&mut rg, t_max);
            let (nr, nf) = (rng::normal_matrix(&mut rg, n, dim), rng::normal_matrix(&mut rg, n, dim));
            let out = gan_losses(d, &schedule, &z_hat, &x, t_prime, &c, &nr, &nf)?;
            adam_step(d.net.params_mut(), &out.d_grads, d_state, &d_adam)?;
            // Generator loss against the updated discriminator.
            let out = gan_losses(d, &schedule, &z_hat, &x, t_prime, &c, &nr, &nf)?;
            let (_, tape) = student.predict_tape(&z_t)?;
            let g = student.backward(&tape, &out.g_grad_fake)?;
            grads.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            loss += out.g_loss;
            d_acc = Some(out.d_acc);
        }
        guard.observe(it, loss.abs())?;
        let stage = match (use_dm, use_gan) {
            (true, true) => "dm+gan",
            (true, false) => "dm",
            _ => "gan",
        };
        sink.record(&TraceRecord {
            d_acc,
            ..TraceRecord::loss(stage, it as u64, loss)
        });
        adam_step(student.net.params_mut(), &grads, &mut student_state, &student_adam)?;
    }
    Ok(EnhanceOutcome {
        pair,
        discriminator: disc,
    })
}

/// Runs the configured stages in order: the reward stage on its own, then
/// distribution matching and the adversarial loss jointly.
pub fn enhance_loop(
    student: &mut ConsistencyModel<MlpModel>,
    teacher: &MlpModel,
    reward: &RewardModel,
    cfg: &EnhanceConfig,
    seed: u64,
    sink: &mut dyn TraceSink,
) -> Result<EnhanceOutcome> {
    cfg.validate()?;
    let mut outcome = EnhanceOutcome {
        pair: None,
        discriminator: None,
    };
    let mut joint_done = false;
    for &stage in &cfg.stages {
        match stage {
            Stage::Reward => reward_stage(student, reward, cfg, seed, sink)?,
            Stage::Dm | Stage::Gan if !joint_done => {
                let use_dm = cfg.stages.contains(&Stage::Dm);
                let use_gan = cfg.stages.contains(&Stage::Gan);
                outcome = joint_stage(student, teacher, cfg, use_dm, use_gan, seed, sink)?;
                joint_done = true;
            }
            _ => {}
        }
    }
    Ok(outcome)
}

/// Fake-score finetuning on student samples alone, with the student frozen.
pub fn train_fake_score(
    pair: &mut ScorePair,
    student: &ConsistencyModel<MlpModel>,
    cfg: &EnhanceConfig,
    iterations: usize,
    seed: u64,
    sink: &mut dyn TraceSink,
) -> Result<()> {
    let schedule = student.schedule();
    let dim = student.net.spec().data_dim;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut state = AdamState::new(pair.fake.param_count());
    let mut guard = DivergenceGuard::default();
    for it in 0..iterations {
        let mut r = rng::stream_rng(seed, stream::FAKE_SCORE, it as u64);
        let c = labels(&mut r, cfg.batch, cfg.classes);
        let eps = rng::normal_matrix(&mut r, cfg.batch, dim);
        let x0 = crate::distill::student_selfsample(student, &eps, cfg.q, &c, &mut r)?;
        let t: Vec<f64> = (0..cfg.batch)
            .map(|_| schedule.t_max() * (1.0 - rng::uniform(&mut r, 0.0, 1.0)))
            .collect();
        let noise = rng::normal_matrix(&mut r, cfg.batch, dim);
        let loss = fake_score_step(pair, schedule, &x0, &c, &t, &noise, &mut state, &adam)?;
        guard.observe(it, loss)?;
        sink.record(&TraceRecord::loss("fake_score", it as u64, loss));
    }
    Ok(())
}

/// Mean reward of `n` fresh `q`-step generations with balanced labels.
pub fn held_out_reward(
    student: &ConsistencyModel<MlpModel>,
    reward: &RewardModel,
    n: usize,
    q: usize,
    seed: u64,
) -> Result<f64> {
    let dim = student.net.spec().data_dim;
    let labels: Vec<ConditionLabel> = (0..n)
        .map(|i| ConditionLabel::Class((i % reward.classes()) as u32))
        .collect();
    let mut r = rng::stream_rng(seed, stream::EVAL, rng::sub_counter(2, q as u64));
    let eps: Matrix = rng::normal_matrix(&mut r, n, dim);
    let x = crate::distill::student_selfsample(student, &eps, q, &labels, &mut r)?;
    reward.mean_score(&x, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{teacher::MixtureDataset, MlpSpec, Schedule};

    fn setup() -> (ConsistencyModel, MlpModel, RewardModel, EnhanceConfig) {
        let s = Schedule::default();
        let spec = MlpSpec::denoiser(2, 8, 4, &[16, 16], 1000.0);
        let teacher = MlpModel::init(spec.clone(), 1).unwrap();
        let student = ConsistencyModel::new(teacher.clone(), s);
        let ds = MixtureDataset::circle(4, 4.0, 0.3).unwrap();
        let reward = RewardModel::from_dataset(&ds, 2.0, 20.0).unwrap();
        let mut cfg = EnhanceConfig::new(SegmentPlan::uniform(8, 1000).unwrap(), 4);
        cfg.reward_iters = 5;
        cfg.iters = 5;
        cfg.disc_hidden = alloc::vec![8];
        (student, teacher, reward, cfg)
    }

    #[test]
    fn empty_stage_list_changes_nothing() {
        let (mut student, teacher, reward, mut cfg) = setup();
        cfg.stages.clear();
        let before = student.clone();
        enhance_loop(&mut student, &teacher, &reward, &cfg, 0, &mut crate::trace::NullSink).unwrap();
        assert_eq!(student, before);
    }

    #[test]
    fn real_score_stays_frozen_and_runs_repeat() {
        let (student, teacher, reward, cfg) = setup();
        let mut a = student.clone();
        let out = enhance_loop(&mut a, &teacher, &reward, &cfg, 3, &mut crate::trace::NullSink).unwrap();
        let pair = out.pair.unwrap();
        assert_eq!(pair.real(), &teacher);
        assert_ne!(pair.fake, teacher);
        assert!(out.discriminator.is_some());
        let mut b = student.clone();
        enhance_loop(&mut b, &teacher, &reward, &cfg, 3, &mut crate::trace::NullSink).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, student);
    }

    #[test]
    fn negative_labels_differ() {
        let mut r = rng::stream_rng(0, 95, 0);
        for _ in 0..500 {
            let c = ConditionLabel::Class(rng::index(&mut r, 4) as u32);
            let o = other_label(&mut r, c, 4);
            assert_ne!(c, o);
            assert!(o.class().unwrap() < 4);
        }
    }

    #[test]
    fn stage_names_round_trip() {
        for s in [Stage::Reward, Stage::Dm, Stage::Gan] {
            assert_eq!(Stage::parse(s.name()).unwrap(), s);
        }
        assert!(Stage::parse("lpips").is_err());
    }

    #[test]
    fn zero_fake_iterations_keep_initialisation() {
        let (student, teacher, _, cfg) = setup();
        let mut pair = ScorePair::from_teacher(&teacher);
        train_fake_score(&mut pair, &student, &cfg, 0, 1, &mut crate::trace::NullSink).unwrap();
        assert_eq!(pair.fake, teacher);
        let mut p1 = ScorePair::from_teacher(&teacher);
        let mut p2 = ScorePair::from_teacher(&teacher);
        train_fake_score(&mut p1, &student, &cfg, 3, 1, &mut crate::trace::NullSink).unwrap();
        train_fake_score(&mut p2, &student, &cfg, 3, 1, &mut crate::trace::NullSink).unwrap();
        assert_eq!(p1, p2);
    }
}
