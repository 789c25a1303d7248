use alloc::{format, vec::Vec};

use crate::{
    diffusion::forward_diffuse,
    nets::{adam_step, AdamConfig, AdamState},
    rng::{self, stream},
    trace::{TraceRecord, TraceSink},
    ConditionLabel, Error, LatentBatch, Matrix, MlpModel, MlpSpec, Result, Schedule,
};

use super::MixtureDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherConfig {
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    /// Probability of replacing a label with the null condition.
    pub dropout: f64,
    /// Anneal the learning rate to zero along a half cosine.
    pub cosine_decay: bool,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            batch: 256,
            lr: 1e-3,
            dropout: 0.1,
            cosine_decay: true,
            seed: 0,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1], got {}",
                self.dropout
            )));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".to_string()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Aborts training once the loss stays above `factor` times its first value
/// for `patience` consecutive steps, or turns non-finite.
#[derive(Debug, Clone)]
pub struct DivergenceGuard {
    initial: Option<f64>,
    streak: usize,
    factor: f64,
    patience: usize,
}

impl Default for DivergenceGuard {
    fn default() -> Self {
        Self {
            initial: None,
            streak: 0,
            factor: 10.0,
            patience: 100,
        }
    }
}

impl DivergenceGuard {
    pub fn observe(&mut self, iter: usize, loss: f64) -> Result<()> {
        let initial = *self.initial.get_or_insert(loss);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                iter: iter as u64,
                loss,
                initial,
            });
        }
        if loss > self.factor * initial {
            self.streak += 1;
            if self.streak >= self.patience {
                return Err(Error::Divergence {
                    iter: iter as u64,
                    loss,
                    initial,
                });
            }
        } else {
            self.streak = 0;
        }
        Ok(())
    }
}

/// `lr * (1 + cos(pi * it / total)) / 2`.
pub fn cosine_lr(lr: f64, it: usize, total: usize) -> f64 {
    0.5 * lr * (1.0 + libm::cos(core::f64::consts::PI * it as f64 / total.max(1) as f64))
}

/// Noise-prediction loss `mean((model(z_t, t, c) - eps)^2)` and its parameter
/// gradient.
pub fn denoising_loss(
    model: &MlpModel,
    schedule: &Schedule,
    x0: &Matrix,
    labels: &[ConditionLabel],
    t: &[f64],
    eps: &Matrix,
) -> Result<(f64, Vec<f64>)> {
    let clean = LatentBatch::new(x0.clone(), alloc::vec![0.0; x0.rows()], labels.to_vec())?;
    let zt = forward_diffuse(schedule, &clean, t, eps)?;
    let (pred, tape) = model.forward_tape(&zt.z, t, labels)?;
    let resid = pred.sub(eps);
    let count = resid.as_slice().len() as f64;
    let loss = resid.as_slice().iter().map(|r| r * r).sum::<f64>() / count;
    let grads = model.backward(&tape, &resid.scale(2.0 / count))?;
    Ok((loss, grads.params))
}

/// Draws one teacher minibatch: noise times in `(0, T]`, dropped labels and
/// regression targets.
pub(crate) fn noise_batch(
    schedule: &Schedule,
    labels: &mut [ConditionLabel],
    dropout: f64,
    seed: u64,
    stream_id: u64,
    iter: u64,
    dim: usize,
) -> (Vec<f64>, Matrix) {
    let mut r = rng::stream_rng(seed, stream_id, iter);
    let t_max = schedule.t_max();
    let t = labels
        .iter_mut()
        .map(|l| {
            let t = t_max * (1.0 - rng::uniform(&mut r, 0.0, 1.0));
            if rng::uniform(&mut r, 0.0, 1.0) < dropout {
                *l = ConditionLabel::Null;
            }
            t
        })
        .collect();
    let eps = rng::normal_matrix(&mut r, labels.len(), dim);
    (t, eps)
}

/// Trains the conditional noise predictor on draws from `ds`.
pub fn train_teacher(
    ds: &MixtureDataset,
    schedule: &Schedule,
    spec: MlpSpec,
    cfg: &TeacherConfig,
    sink: &mut dyn TraceSink,
) -> Result<MlpModel> {
    cfg.validate()?;
    if spec.data_dim != ds.dim() || spec.output_dim != ds.dim() {
        return Err(Error::shape("teacher spec", ds.dim(), spec.data_dim));
    }
    let mut model = MlpModel::init(spec, cfg.seed)?;
    let mut adam = AdamConfig::with_lr(cfg.lr);
    let mut state = AdamState::new(model.param_count());
    let mut guard = DivergenceGuard::default();
    for it in 0..cfg.iterations {
        if cfg.cosine_decay {
            adam.lr = cosine_lr(cfg.lr, it, cfg.iterations);
        }
        let (x0, mut labels) = ds.sample_range((it * cfg.batch) as u64, cfg.batch, cfg.seed);
        let (t, eps) = noise_batch(
            schedule,
            &mut labels,
            cfg.dropout,
            cfg.seed,
            stream::TEACHER_BATCH,
            it as u64,
            ds.dim(),
        );
        let (loss, grads) = denoising_loss(&model, schedule, &x0, &labels, &t, &eps)?;
        guard.observe(it, loss)?;
        sink.record(&TraceRecord::loss("teacher", it as u64, loss));
        adam_step(model.params_mut(), &grads, &mut state, &adam)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{nets::finite_diff_check, teacher::analytic_gaussian_eps, NoiseModel};
    use alloc::vec;

    fn single_gaussian() -> MixtureDataset {
        MixtureDataset::new(vec![Matrix::from_rows(&[&[1.0, -0.5]])], 0.5).unwrap()
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let s = Schedule::default();
        let ds = MixtureDataset::circle(4, 4.0, 0.3).unwrap();
        let spec = MlpSpec::denoiser(2, 8, 4, &[16, 16], 1000.0);
        let model = MlpModel::init(spec, 1).unwrap();
        let (x0, mut labels) = ds.sample(6, 2);
        let (t, eps) = noise_batch(&s, &mut labels, 0.3, 2, stream::TEACHER_BATCH, 0, 2);
        let (_, g) = denoising_loss(&model, &s, &x0, &labels, &t, &eps).unwrap();
        let report = finite_diff_check(
            model.params(),
            &g,
            |p| {
                let m = model.with_params(p.to_vec()).unwrap();
                denoising_loss(&m, &s, &x0, &labels, &t, &eps).unwrap().0
            },
            64,
            3,
        );
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn guard_trips_after_patience() {
        let mut g = DivergenceGuard::default();
        g.observe(0, 1.0).unwrap();
        for i in 1..100 {
            g.observe(i, 11.0).unwrap();
        }
        assert!(matches!(g.observe(100, 11.0), Err(Error::Divergence { .. })));
        let mut g = DivergenceGuard::default();
        g.observe(0, 1.0).unwrap();
        assert!(g.observe(1, f64::NAN).is_err());
    }

    #[test]
    fn rejects_bad_dropout() {
        let cfg = TeacherConfig {
            dropout: 1.5,
            ..TeacherConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn full_dropout_ignores_labels() {
        let s = Schedule::default();
        let ds = MixtureDataset::circle(4, 4.0, 0.3).unwrap();
        let cfg = TeacherConfig {
            iterations: 30,
            batch: 32,
            dropout: 1.0,
            ..TeacherConfig::default()
        };
        let spec = MlpSpec::denoiser(2, 8, 4, &[16], 1000.0);
        let model = train_teacher(&ds, &s, spec, &cfg, &mut crate::trace::NullSink).unwrap();
        // First-layer weights on the condition columns never receive gradient.
        let init = MlpModel::init(model.spec().clone(), cfg.seed).unwrap();
        let input = model.spec().input_dim();
        let (w, _) = model.layer(0);
        let (w0, _) = init.layer(0);
        for (row, row0) in w.chunks(input).zip(w0.chunks(input)) {
            assert_eq!(row[2 + 8..], row0[2 + 8..]);
            assert_ne!(row[..2], row0[..2]);
        }
    }

    #[test]
    fn learns_single_gaussian_oracle() {
        let s = Schedule::default();
        let ds = single_gaussian();
        let cfg = TeacherConfig {
            iterations: 3000,
            batch: 128,
            lr: 2e-3,
            dropout: 0.0,
            cosine_decay: true,
            seed: 4,
        };
        let spec = MlpSpec::denoiser(2, 16, 1, &[64, 64], 1000.0);
        let mut trace = Vec::new();
        let model = train_teacher(&ds, &s, spec, &cfg, &mut trace).unwrap();
        let head: f64 = trace[..50].iter().map(|r| r.loss).sum::<f64>() / 50.0;
        let tail: f64 = trace[trace.len() - 50..].iter().map(|r| r.loss).sum::<f64>() / 50.0;
        assert!(tail < head);

        let n = 2000;
        let mut r = rng::stream_rng(9, 77, 0);
        let z = rng::normal_matrix(&mut r, n, 2).scale(1.2);
        let t: Vec<f64> = (0..n).map(|_| rng::uniform(&mut r, 20.0, 1000.0)).collect();
        let pred = model.predict(&z, &t, &vec![ConditionLabel::Null; n]).unwrap();
        let want = analytic_gaussian_eps(&[1.0, -0.5], 0.5, &z, &t, &s);
        let mse = pred.sub(&want).as_slice().iter().map(|v| v * v).sum::<f64>() / (2 * n) as f64;
        assert!(mse < 0.05, "mse {mse}");
    }
}
