use alloc::format;

use crate::{ConditionLabel, Error, Matrix, Result};

/// Highest angular frequency applied to `t / T`.
const MAX_FREQUENCY: f64 = 100.0;

/// Sinusoidal features of `t / t_scale`: `dim / 2` sine/cosine pairs at
/// geometrically spaced frequencies from 1 to 100.
pub fn time_embedding(t: &[f64], t_scale: f64, dim: usize) -> Matrix {
    let mut out = Matrix::zeros(t.len(), dim);
    let half = dim / 2;
    for (r, &ti) in t.iter().enumerate() {
        let tau = ti / t_scale;
        let row = out.row_mut(r);
        for k in 0..half {
            let freq = if half > 1 {
                libm::pow(MAX_FREQUENCY, k as f64 / (half - 1) as f64)
            } else {
                1.0
            };
            row[2 * k] = libm::sin(freq * tau);
            row[2 * k + 1] = libm::cos(freq * tau);
        }
    }
    out
}

/// One-hot over `classes`; the null label maps to the zero vector.
pub fn condition_embedding(labels: &[ConditionLabel], classes: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(labels.len(), classes);
    for (r, l) in labels.iter().enumerate() {
        if let Some(c) = l.class() {
            if c >= classes {
                return Err(Error::Config(format!(
                    "class id {c} out of range for {classes} classes"
                )));
            }
            out[(r, c)] = 1.0;
        }
    }
    Ok(out)
}
