use alloc::{format, vec::Vec};

use crate::{Error, Result};

/// Discrete variance-preserving schedule with a linear beta ramp.
///
/// `alpha_bar[t]` is the cumulative product of `1 - beta_i` for `i <= t`, so
/// `alpha_bar[0] == 1`. Fractional timesteps interpolate `ln alpha_bar`
/// linearly between neighbouring grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    steps: usize,
    beta_start: f64,
    beta_end: f64,
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
    log_alpha_bar: Vec<f64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("default schedule is valid")
    }
}

impl Schedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Schedule(format!("T must be >= 2, got {steps}")));
        }
        if !(beta_start.is_finite() && beta_end.is_finite()) {
            return Err(Error::Schedule("non-finite beta range".to_string()));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Schedule(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"
            )));
        }
        let span = (steps - 1) as f64;
        let betas: Vec<f64> = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / span)
            .collect();
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut prod = 1.0;
        for b in &betas {
            prod *= 1.0 - b;
            alpha_bar.push(prod);
        }
        let last = alpha_bar[steps];
        if !(last > 0.0 && last < 1e-3) {
            return Err(Error::Schedule(format!(
                "terminal alpha_bar {last} outside (0, 1e-3); schedule does not reach noise"
            )));
        }
        let log_alpha_bar = alpha_bar.iter().map(|&a| libm::log(a)).collect();
        Ok(Self {
            steps,
            beta_start,
            beta_end,
            betas,
            alpha_bar,
            log_alpha_bar,
        })
    }

    /// Number of diffusion steps `T`.
    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn t_max(&self) -> f64 {
        self.steps as f64
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    /// `beta_1 .. beta_T`.
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `alpha_bar[0] .. alpha_bar[T]`.
    pub fn alpha_bar_table(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn check_timestep(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.t_max()) {
            return Err(Error::Timestep(format!("t = {t} outside [0, {}]", self.steps)));
        }
        Ok(())
    }

    /// `alpha_bar(t)` for real `t` in `[0, T]`; exact on the integer grid.
    pub fn alpha_bar(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0 && t <= self.t_max(), "timestep {t} out of range");
        let t = t.clamp(0.0, self.t_max());
        let lo = libm::floor(t) as usize;
        let frac = t - lo as f64;
        if frac == 0.0 {
            return self.alpha_bar[lo];
        }
        let la = self.log_alpha_bar[lo] + frac * (self.log_alpha_bar[lo + 1] - self.log_alpha_bar[lo]);
        libm::exp(la)
    }

    /// `(sqrt(alpha_bar), sqrt(1 - alpha_bar))` at `t`.
    #[inline]
    pub fn signal_noise(&self, t: f64) -> (f64, f64) {
        let a = self.alpha_bar(t);
        (libm::sqrt(a), libm::sqrt(1.0 - a))
    }
}
