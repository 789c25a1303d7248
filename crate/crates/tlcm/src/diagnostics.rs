//! Finite-difference checks of every trained loss.

use tlcm_core::{
    distill::{cm_predict, consistency_loss, ilcd_batch, mlcd_batch, Distance},
    enhance::{dfdm_surrogate, dm_direction, gan_losses, mps_student_loss, Discriminator, RewardModel, ScorePair},
    nets::{finite_diff_check, GradReport},
    rng::{self, stream},
    teacher::denoising_loss,
    ConditionLabel, LatentBatch, Matrix, MlpModel,
};

use crate::{config::RunConfig, error::AppResult};

/// Pass threshold on the maximum relative error.
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradEntry {
    pub name: &'static str,
    pub params: usize,
    pub report: GradReport,
}

fn class_labels(n: usize, k: usize) -> Vec<ConditionLabel> {
    (0..n).map(|i| ConditionLabel::Class((i % k) as u32)).collect()
}

/// Checks each loss on a small batch with `probes` random coordinates.
///
/// The student is the teacher with its parameters nudged so the two differ.
pub fn gradient_suite(cfg: &RunConfig, teacher: &MlpModel, batch: usize, probes: usize) -> AppResult<Vec<GradEntry>> {
    let schedule = cfg.schedule()?;
    let seed = cfg.seed;
    let k = cfg.data.k;
    let dim = cfg.model_spec().data_dim;
    let mut r = rng::stream_rng(seed, stream::GRADCHECK, 1);

    let nudged: Vec<f64> = teacher
        .params()
        .iter()
        .map(|p| p + 0.01 * rng::standard_normal(&mut r))
        .collect();
    let student = crate::pipeline::student_with(cfg, teacher.with_params(nudged)?)?;
    let mut out = Vec::new();
    let mut push = |name, params: usize, report| out.push(GradEntry { name, params, report });

    let labels = class_labels(batch, k);
    let x0 = rng::normal_matrix(&mut r, batch, dim).scale(cfg.data.radius);
    let t: Vec<f64> = (0..batch)
        .map(|_| rng::uniform(&mut r, 1.0, schedule.t_max()))
        .collect();
    let eps = rng::normal_matrix(&mut r, batch, dim);
    let (_, g) = denoising_loss(teacher, &schedule, &x0, &labels, &t, &eps)?;
    let rep = finite_diff_check(
        teacher.params(),
        &g,
        |p| {
            denoising_loss(
                &teacher.with_params(p.to_vec()).unwrap(),
                &schedule,
                &x0,
                &labels,
                &t,
                &eps,
            )
            .unwrap()
            .0
        },
        probes,
        seed,
    );
    push("teacher", g.len(), rep);

    let mut dcfg = cfg.distill_config(false)?;
    dcfg.batch = batch;
    let distance = dcfg.build_distance(dim, seed)?;
    let consistency = |name, pair, distance: &Distance| -> AppResult<GradEntry> {
        let (_, g) = consistency_loss(&student, &student, &pair, distance)?;
        let rep = finite_diff_check(
            student.params(),
            &g,
            |p| {
                consistency_loss(&student.with_params(p.to_vec()).unwrap(), &student, &pair, distance)
                    .unwrap()
                    .0
            },
            probes,
            seed,
        );
        Ok(GradEntry {
            name,
            params: g.len(),
            report: rep,
        })
    };
    let pair = mlcd_batch(teacher, &schedule, &dcfg, seed, 0)?;
    out.push(consistency("mlcd", pair, &distance)?);
    let pair = ilcd_batch(&student, teacher, &dcfg, seed, 0)?;
    out.push(consistency("ilcd", pair, &distance)?);
    let mut push = |name, params: usize, report| out.push(GradEntry { name, params, report });

    let t_state: Vec<f64> = (0..batch)
        .map(|_| rng::uniform(&mut r, 100.0, schedule.t_max()))
        .collect();
    let state = LatentBatch::new(rng::normal_matrix(&mut r, batch, dim), t_state, labels.clone())?;
    // Wide radius keeps most points off the clipped plateau.
    let ds = cfg.dataset()?;
    let reward = RewardModel::from_dataset(&ds, 4.0 * cfg.data.radius, cfg.enhance.reward_scale)?;
    let c_neg: Vec<ConditionLabel> = (0..batch)
        .map(|i| ConditionLabel::Class(((i + 1) % k) as u32))
        .collect();
    let (_, g) = mps_student_loss(&student, &state, &reward, &c_neg, cfg.enhance.s0)?;
    let rep = finite_diff_check(
        student.params(),
        &g,
        |p| {
            mps_student_loss(
                &student.with_params(p.to_vec()).unwrap(),
                &state,
                &reward,
                &c_neg,
                cfg.enhance.s0,
            )
            .unwrap()
            .0
        },
        probes,
        seed,
    );
    push("mps", g.len(), rep);

    let scores = ScorePair::from_teacher(teacher);
    let x = cm_predict(&student, &state)?;
    let noise = rng::normal_matrix(&mut r, batch, dim);
    let direction = dm_direction(&scores, &schedule, &x, &labels, 500.0, &noise, cfg.distill.w)?;
    let (_, g) = dfdm_surrogate(&student, &state, &direction)?;
    let rep = finite_diff_check(
        student.params(),
        &g,
        |p| {
            dfdm_surrogate(&student.with_params(p.to_vec()).unwrap(), &state, &direction)
                .unwrap()
                .0
        },
        probes,
        seed,
    );
    push("dfdm", g.len(), rep);

    let spec = cfg.model_spec();
    let disc = Discriminator::new(dim, spec.time_dim, k, &cfg.enhance.disc_hidden, spec.t_scale, seed)?;
    let real: Matrix = rng::normal_matrix(&mut r, batch, dim).scale(cfg.data.radius);
    let nr = rng::normal_matrix(&mut r, batch, dim);
    let nf = rng::normal_matrix(&mut r, batch, dim);
    let t_prime = 300.0;
    let gan =
        |d: &Discriminator, fake: &Matrix| gan_losses(d, &schedule, &real, fake, t_prime, &labels, &nr, &nf).unwrap();
    let base = gan(&disc, &x);
    let rep = finite_diff_check(
        disc.net.params(),
        &base.d_grads,
        |p| {
            let d = Discriminator {
                net: disc.net.with_params(p.to_vec()).unwrap(),
            };
            gan(&d, &x).d_loss
        },
        probes,
        seed,
    );
    push("gan_d", base.d_grads.len(), rep);

    let (_, tape) = student.predict_tape(&state)?;
    let g = student.backward(&tape, &base.g_grad_fake)?;
    let rep = finite_diff_check(
        student.params(),
        &g,
        |p| {
            gan(
                &disc,
                &cm_predict(&student.with_params(p.to_vec()).unwrap(), &state).unwrap(),
            )
            .g_loss
        },
        probes,
        seed,
    );
    push("gan_g", g.len(), rep);
    Ok(out)
}
