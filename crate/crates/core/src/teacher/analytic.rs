use alloc::vec::Vec;

use crate::{ConditionLabel, Matrix, NoiseModel, Result, Schedule};

/// Optimal noise prediction for data `N(mu, sigma^2 I)`:
/// `(z - sqrt(ab) mu) * sqrt(1 - ab) / (ab sigma^2 + 1 - ab)`.
pub fn analytic_gaussian_eps(mu: &[f64], sigma: f64, z: &Matrix, t: &[f64], schedule: &Schedule) -> Matrix {
    assert_eq!(mu.len(), z.cols(), "mean dimension");
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let ab = schedule.alpha_bar(t[r]);
        let (s, n) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
        let var = ab * sigma * sigma + 1.0 - ab;
        for (c, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = (z[(r, c)] - s * mu[c]) * n / var;
        }
    }
    out
}

/// Endpoint of the probability-flow ODE through `z` at `t` for Gaussian data:
/// `mu + sigma * (z - sqrt(ab) mu) / sqrt(ab sigma^2 + 1 - ab)`.
pub fn gaussian_flow_endpoint(mu: &[f64], sigma: f64, z: &Matrix, t: &[f64], schedule: &Schedule) -> Matrix {
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let ab = schedule.alpha_bar(t[r]);
        let s = libm::sqrt(ab);
        let std = libm::sqrt(ab * sigma * sigma + 1.0 - ab);
        for (c, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = mu[c] + sigma * (z[(r, c)] - s * mu[c]) / std;
        }
    }
    out
}

/// [`analytic_gaussian_eps`] as a label-blind noise model.
#[derive(Debug, Clone)]
pub struct AnalyticGaussian {
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub schedule: Schedule,
}

impl NoiseModel for AnalyticGaussian {
    fn data_dim(&self) -> usize {
        self.mu.len()
    }

    fn predict(&self, z: &Matrix, t: &[f64], _labels: &[ConditionLabel]) -> Result<Matrix> {
        Ok(analytic_gaussian_eps(&self.mu, self.sigma, z, t, &self.schedule))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{
        diffusion::{ddim_multi, forward_diffuse},
        rng::{normal_matrix, stream_rng},
        LatentBatch,
    };
    use alloc::vec;

    #[test]
    fn zero_at_clean_boundary() {
        let s = Schedule::default();
        let z = Matrix::from_rows(&[&[1.0, -3.0]]);
        let e = analytic_gaussian_eps(&[0.5, 0.5], 1.0, &z, &[0.0], &s);
        assert!(e.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_variance_simplification() {
        let s = Schedule::default();
        let z = Matrix::from_rows(&[&[0.4, 2.0], &[-1.0, 0.3]]);
        let t = [137.0, 802.5];
        let mu = [1.0, -2.0];
        let e = analytic_gaussian_eps(&mu, 1.0, &z, &t, &s);
        for r in 0..2 {
            let (sa, na) = s.signal_noise(t[r]);
            for c in 0..2 {
                let want = (z[(r, c)] - sa * mu[c]) * na;
                assert!((e[(r, c)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn oracle_beats_scaled_versions() {
        // Expected regression loss at fixed t is minimised by the oracle among
        // its rescalings.
        let s = Schedule::default();
        let mu = [1.5, -0.5];
        let sigma = 0.6;
        let n = 20_000;
        let mut rng = stream_rng(3, 99, 0);
        let x0 = normal_matrix(&mut rng, n, 2).scale(sigma);
        let x0 = Matrix::from_vec(
            n,
            2,
            x0.as_slice().iter().enumerate().map(|(i, v)| v + mu[i % 2]).collect(),
        );
        let eps = normal_matrix(&mut rng, n, 2);
        for t in [50.0, 400.0, 900.0] {
            let tt = vec![t; n];
            let b0 = LatentBatch::at(x0.clone(), 0.0, vec![ConditionLabel::Null; n]).unwrap();
            let zt = forward_diffuse(&s, &b0, &tt, &eps).unwrap();
            let pred = analytic_gaussian_eps(&mu, sigma, &zt.z, &tt, &s);
            let loss = |k: f64| pred.scale(k).sub(&eps).as_slice().iter().map(|v| v * v).sum::<f64>() / (2 * n) as f64;
            let best = loss(1.0);
            for k in [0.8, 0.95, 1.05, 1.2] {
                assert!(loss(k) >= best, "t={t} k={k}");
            }
        }
    }

    #[test]
    fn ddim_with_oracle_recovers_standard_normal() {
        let s = Schedule::default();
        let model = AnalyticGaussian {
            mu: vec![0.0, 0.0],
            sigma: 1.0,
            schedule: s.clone(),
        };
        let n = 10_000;
        let eps = normal_matrix(&mut stream_rng(1, 98, 0), n, 2);
        let start = LatentBatch::at(eps, 1000.0, vec![ConditionLabel::Null; n]).unwrap();
        let out = ddim_multi(&s, &model, &start, &vec![0.0; n], 64, 1.0).unwrap();
        let means = out.z.column_means();
        for (c, m) in means.iter().enumerate() {
            assert!(m.abs() < 0.05, "mean {m}");
            let var = out.z.iter_rows().map(|r| (r[c] - m) * (r[c] - m)).sum::<f64>() / n as f64;
            assert!((0.9..=1.1).contains(&var), "var {var}");
        }
    }

    #[test]
    fn flow_endpoint_fixes_clean_points() {
        let s = Schedule::default();
        let z = Matrix::from_rows(&[&[0.2, -0.4]]);
        let e0 = gaussian_flow_endpoint(&[1.0, 1.0], 0.5, &z, &[0.0], &s);
        assert!(e0.sub(&z).as_slice().iter().all(|v| v.abs() < 1e-12));
    }
}
