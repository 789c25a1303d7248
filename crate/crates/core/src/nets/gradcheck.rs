use alloc::vec::Vec;

use crate::rng::{self, stream};

/// Step for central differences in 64-bit arithmetic.
pub const FD_STEP: f64 = 1e-5;

/// Gradient entries smaller than this fraction of the largest analytic entry
/// are compared on an absolute scale.
const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub param_index_worst: usize,
}

/// Compares `analytic` with central differences of `loss` on `probes` random
/// coordinates (all of them when `probes >= params.len()`).
///
/// The error per coordinate is `|a - n| / max(|a|, |n|, 1e-6 * |a|_inf)`, and 0
/// when the two agree exactly.
pub fn finite_diff_check(
    params: &[f64],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    probes: usize,
    seed: u64,
) -> GradReport {
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let coords: Vec<usize> = if probes >= params.len() {
        (0..params.len()).collect()
    } else {
        let mut r = rng::stream_rng(seed, stream::GRADCHECK, 0);
        let mut picked = Vec::with_capacity(probes);
        while picked.len() < probes {
            let i = rng::index(&mut r, params.len());
            if !picked.contains(&i) {
                picked.push(i);
            }
        }
        picked
    };

    let floor = ABS_FLOOR * analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut work = params.to_vec();
    let mut report = GradReport {
        max_rel_err: 0.0,
        param_index_worst: coords.first().copied().unwrap_or(0),
    };
    for i in coords {
        let orig = work[i];
        work[i] = orig + FD_STEP;
        let up = loss(&work);
        work[i] = orig - FD_STEP;
        let down = loss(&work);
        work[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(floor);
        let err = if a == numeric { 0.0 } else { (a - numeric).abs() / denom };
        if err > report.max_rel_err || err.is_nan() {
            report.max_rel_err = if err.is_nan() { f64::INFINITY } else { err };
            report.param_index_worst = i;
        }
    }
    report
}
