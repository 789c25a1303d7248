use alloc::vec::Vec;

use crate::{
    diffusion::forward_diffuse, nets::Tape, rng::stream, ConditionLabel, Error, LatentBatch, Matrix, MlpModel, MlpSpec,
    Result, Schedule,
};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-6;

/// Logistic classifier on `(point, time features, condition)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: MlpModel,
}

impl Discriminator {
    pub fn new(
        data_dim: usize,
        time_dim: usize,
        classes: usize,
        hidden: &[usize],
        t_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let spec = MlpSpec {
            output_dim: 1,
            ..MlpSpec::denoiser(data_dim, time_dim, classes, hidden, t_scale)
        };
        Ok(Self {
            net: MlpModel::init_on_stream(spec, seed, stream::GAN)?,
        })
    }

    fn logits(&self, x: &LatentBatch) -> Result<(Vec<f64>, Tape)> {
        let (out, tape) = self.net.forward_tape(&x.z, &x.t, &x.cond)?;
        Ok((out.into_vec(), tape))
    }

    /// Clamped probability that each row is real.
    pub fn prob(&self, x: &LatentBatch) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.0.into_iter().map(|l| clamped_sigmoid(l).0).collect())
    }
}

/// `(p, clamped)` for the logistic function clamped to `[CLAMP, 1 - CLAMP]`.
fn clamped_sigmoid(l: f64) -> (f64, bool) {
    let p = 1.0 / (1.0 + libm::exp(-l));
    if p < CLAMP {
        (CLAMP, true)
    } else if p > 1.0 - CLAMP {
        (1.0 - CLAMP, true)
    } else {
        (p, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanOutput {
    pub d_loss: f64,
    pub g_loss: f64,
    /// Gradient of `d_loss` with respect to the discriminator parameters.
    pub d_grads: Vec<f64>,
    /// Gradient of `g_loss` with respect to the clean fake points.
    pub g_grad_fake: Matrix,
    /// Fraction of rows classified correctly; ties count half.
    pub d_acc: f64,
}

/// Non-saturating logistic losses on real and fake points diffused to `t'`
/// with independent noise:
/// `d_loss = -mean log D(real) - mean log(1 - D(fake))`,
/// `g_loss = -mean log D(fake)`.
#[allow(clippy::too_many_arguments)]
pub fn gan_losses(
    d: &Discriminator,
    schedule: &Schedule,
    real_z0: &Matrix,
    fake_z0: &Matrix,
    t_prime: f64,
    labels: &[ConditionLabel],
    noise_real: &Matrix,
    noise_fake: &Matrix,
) -> Result<GanOutput> {
    real_z0.check_same_shape(fake_z0, "gan real/fake")?;
    let n = real_z0.rows();
    if n == 0 {
        return Err(Error::Empty("gan batch"));
    }
    let times = alloc::vec![t_prime; n];
    let diffuse = |x: &Matrix, noise: &Matrix| -> Result<LatentBatch> {
        forward_diffuse(
            schedule,
            &LatentBatch::at(x.clone(), 0.0, labels.to_vec())?,
            &times,
            noise,
        )
    };
    let (lr, tape_r) = d.logits(&diffuse(real_z0, noise_real)?)?;
    let (lf, tape_f) = d.logits(&diffuse(fake_z0, noise_fake)?)?;
    let nf = n as f64;

    let mut d_loss = 0.0;
    let mut g_loss = 0.0;
    let mut correct = 0.0;
    let mut up_r = Matrix::zeros(n, 1);
    let mut up_f = Matrix::zeros(n, 1);
    let mut up_g = Matrix::zeros(n, 1);
    for i in 0..n {
        let (pr, cr) = clamped_sigmoid(lr[i]);
        let (pf, cf) = clamped_sigmoid(lf[i]);
        d_loss -= (libm::log(pr) + libm::log(1.0 - pf)) / nf;
        g_loss -= libm::log(pf) / nf;
        if !cr {
            up_r[(i, 0)] = -(1.0 - pr) / nf;
        }
        if !cf {
            up_f[(i, 0)] = pf / nf;
            up_g[(i, 0)] = -(1.0 - pf) / nf;
        }
        correct += score_correct(pr, true) + score_correct(pf, false);
    }
    let mut d_grads = d.net.backward(&tape_r, &up_r)?.params;
    for (g, v) in d_grads.iter_mut().zip(d.net.backward(&tape_f, &up_f)?.params) {
        *g += v;
    }
    let signal = schedule.signal_noise(t_prime).0;
    let g_grad_fake = d.net.backward(&tape_f, &up_g)?.z().scale(signal);
    Ok(GanOutput {
        d_loss,
        g_loss,
        d_grads,
        g_grad_fake,
        d_acc: correct / (2.0 * nf),
    })
}

fn score_correct(p: f64, real: bool) -> f64 {
    if p == 0.5 {
        0.5
    } else if (p > 0.5) == real {
        1.0
    } else {
        0.0
    }
}
