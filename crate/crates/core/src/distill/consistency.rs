use alloc::{format, vec::Vec};

use crate::{nets::Tape, Error, LatentBatch, Matrix, MlpModel, NoiseModel, Result, Schedule};

/// How the clean-point estimate is assembled from the noise prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Parameterization {
    /// `c_skip(t) z + c_out(t) x0_hat`.
    #[default]
    Blend,
    /// The bare DDIM estimate `x0_hat = (z - sqrt(1 - ab) eps) / sqrt(ab)`.
    RawEpsilon,
}

/// Consistency function built around a noise-predicting network.
///
/// Every output is affine in the network output: `a(t) z + b(t) net(z, t, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyModel<N = MlpModel> {
    pub net: N,
    pub sigma_data: f64,
    pub kappa: f64,
    pub parameterization: Parameterization,
    schedule: Schedule,
}

/// Forward record for [`ConsistencyModel::backward`].
#[derive(Debug, Clone)]
pub struct CmTape {
    tape: Tape,
    net_coef: Vec<f64>,
}

impl<N: NoiseModel> ConsistencyModel<N> {
    /// `sigma_data = 0.5`, `kappa = 10 / T`, blended parameterization.
    pub fn new(net: N, schedule: Schedule) -> Self {
        let kappa = 10.0 / schedule.t_max();
        Self {
            net,
            sigma_data: 0.5,
            kappa,
            parameterization: Parameterization::Blend,
            schedule,
        }
    }

    pub fn with_parameterization(mut self, p: Parameterization) -> Self {
        self.parameterization = p;
        self
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn c_skip(&self, t: f64) -> f64 {
        let kt = self.kappa * t;
        let sd2 = self.sigma_data * self.sigma_data;
        sd2 / (kt * kt + sd2)
    }

    pub fn c_out(&self, t: f64) -> f64 {
        let kt = self.kappa * t;
        kt / libm::sqrt(kt * kt + self.sigma_data * self.sigma_data)
    }

    /// `(a, b)` with `cm_predict = a z + b net`.
    pub fn coefficients(&self, t: f64) -> (f64, f64) {
        let (s, n) = self.schedule.signal_noise(t);
        match self.parameterization {
            Parameterization::Blend => {
                let c_out = self.c_out(t);
                (self.c_skip(t) + c_out / s, -c_out * n / s)
            }
            Parameterization::RawEpsilon => (1.0 / s, -n / s),
        }
    }

    /// Coefficients of the DDIM jump from `t` to `anchor` driven by the
    /// consistency estimate.
    pub fn anchored_coefficients(&self, t: f64, anchor: f64) -> Result<(f64, f64)> {
        if anchor > t {
            return Err(Error::Timestep(format!("anchor {anchor} lies above t = {t}")));
        }
        if anchor == t {
            return Ok((1.0, 0.0));
        }
        let (a, b) = self.coefficients(t);
        let (st, nt) = self.schedule.signal_noise(t);
        let (sa, na) = self.schedule.signal_noise(anchor);
        let x0_coef = sa - na * st / nt;
        let z_coef = na / nt;
        Ok((x0_coef * a + z_coef, x0_coef * b))
    }

    fn row_coefficients(&self, z: &LatentBatch, anchor: Option<&[f64]>) -> Result<Vec<(f64, f64)>> {
        z.validate(&self.schedule)?;
        match anchor {
            None => Ok(z.t.iter().map(|&t| self.coefficients(t)).collect()),
            Some(anchor) => {
                if anchor.len() != z.len() {
                    return Err(Error::shape("anchor timesteps", z.len(), anchor.len()));
                }
                for &a in anchor {
                    self.schedule.check_timestep(a)?;
                }
                z.t.iter()
                    .zip(anchor)
                    .map(|(&t, &a)| self.anchored_coefficients(t, a))
                    .collect()
            }
        }
    }

    fn combine(z: &Matrix, net: &Matrix, coef: &[(f64, f64)]) -> Matrix {
        let mut out = z.clone();
        for (r, &(a, b)) in coef.iter().enumerate() {
            for (o, &e) in out.row_mut(r).iter_mut().zip(net.row(r)) {
                *o = a * *o + b * e;
            }
        }
        out
    }

    fn evaluate(&self, z: &LatentBatch, anchor: Option<&[f64]>) -> Result<Matrix> {
        let coef = self.row_coefficients(z, anchor)?;
        let net = self.net.predict(&z.z, &z.t, &z.cond)?;
        Ok(Self::combine(&z.z, &net, &coef))
    }
}

impl ConsistencyModel<MlpModel> {
    fn evaluate_tape(&self, z: &LatentBatch, anchor: Option<&[f64]>) -> Result<(Matrix, CmTape)> {
        let coef = self.row_coefficients(z, anchor)?;
        let (net, tape) = self.net.forward_tape(&z.z, &z.t, &z.cond)?;
        let out = Self::combine(&z.z, &net, &coef);
        Ok((
            out,
            CmTape {
                tape,
                net_coef: coef.into_iter().map(|(_, b)| b).collect(),
            },
        ))
    }

    /// [`cm_predict`] keeping what the parameter gradient needs.
    pub fn predict_tape(&self, z: &LatentBatch) -> Result<(Matrix, CmTape)> {
        self.evaluate_tape(z, None)
    }

    /// [`g_transform`] keeping what the parameter gradient needs.
    pub fn anchored_tape(&self, z: &LatentBatch, anchor: &[f64]) -> Result<(Matrix, CmTape)> {
        self.evaluate_tape(z, Some(anchor))
    }

    /// Parameter gradient of `sum(upstream * output)`.
    pub fn backward(&self, tape: &CmTape, upstream: &Matrix) -> Result<Vec<f64>> {
        if upstream.rows() != tape.net_coef.len() {
            return Err(Error::shape(
                "consistency backward",
                tape.net_coef.len(),
                upstream.rows(),
            ));
        }
        Ok(self
            .net
            .backward(&tape.tape, &upstream.scale_rows(&tape.net_coef))?
            .params)
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        Ok(Self {
            net: self.net.with_params(params)?,
            ..self.clone()
        })
    }
}

/// Clean-point estimate `f(z, t, c)` for each row of `z`.
pub fn cm_predict<N: NoiseModel>(cm: &ConsistencyModel<N>, z: &LatentBatch) -> Result<Matrix> {
    cm.evaluate(z, None)
}

/// DDIM jump from each row's `t` to `target[i]` using the consistency estimate
/// as the clean point.
pub fn g_transform<N: NoiseModel>(cm: &ConsistencyModel<N>, z: &LatentBatch, target: &[f64]) -> Result<Matrix> {
    cm.evaluate(z, Some(target))
}
