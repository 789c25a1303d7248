use alloc::vec::Vec;

use crate::{
    rng::{self, stream},
    Error, Matrix, Result,
};

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Exact squared 2-Wasserstein distance between two 1-D empirical measures
/// with uniform weights, by integrating the quantile difference.
pub fn w2_squared_1d(a: &[f64], b: &[f64]) -> f64 {
    let a = sorted(a.to_vec());
    let b = sorted(b.to_vec());
    if a.len() == b.len() {
        return a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i + 1) as f64 / na;
        let next_b = (j + 1) as f64 / nb;
        let next = next_a.min(next_b);
        total += (next - u) * (a[i] - b[j]) * (a[i] - b[j]);
        u = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    total
}

/// Random unit directions drawn from the projection stream.
pub fn projection_directions(dim: usize, projections: usize, seed: u64) -> Matrix {
    let mut r = rng::stream_rng(seed, stream::PROJECTIONS, 0);
    let mut dirs = Matrix::zeros(projections, dim);
    for p in 0..projections {
        loop {
            let row: Vec<f64> = (0..dim).map(|_| rng::standard_normal(&mut r)).collect();
            let norm = libm::sqrt(row.iter().map(|v| v * v).sum());
            if norm > 1e-12 {
                for (d, v) in dirs.row_mut(p).iter_mut().zip(row) {
                    *d = v / norm;
                }
                break;
            }
        }
    }
    dirs
}

/// Mean over random directions of the exact 1-D W2 between the projected sets.
pub fn sliced_w2(a: &Matrix, b: &Matrix, projections: usize, seed: u64) -> Result<f64> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::Empty("sliced_w2 point set"));
    }
    if a.cols() != b.cols() {
        return Err(Error::shape("sliced_w2 dimension", a.cols(), b.cols()));
    }
    if projections == 0 {
        return Err(Error::Config("sliced_w2 needs at least one projection".into()));
    }
    let dirs = projection_directions(a.cols(), projections, seed);
    let project = |m: &Matrix, d: &[f64]| -> Vec<f64> {
        m.iter_rows()
            .map(|r| r.iter().zip(d).map(|(x, y)| x * y).sum())
            .collect()
    };
    let total: f64 = dirs
        .iter_rows()
        .map(|d| libm::sqrt(w2_squared_1d(&project(a, d), &project(b, d))))
        .sum();
    Ok(total / projections as f64)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn within_mean(a: &Matrix) -> f64 {
    let n = a.rows();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += dist(a.row(i), a.row(j));
        }
    }
    2.0 * total / (n * (n - 1)) as f64
}

/// `2 E|A - B| - E|A - A'| - E|B - B'|` from unbiased pair averages, floored at 0
/// (the unbiased estimate can dip below zero for equal distributions).
pub fn energy_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::Empty("energy_distance point set"));
    }
    if a.cols() != b.cols() {
        return Err(Error::shape("energy_distance dimension", a.cols(), b.cols()));
    }
    let mut cross = 0.0;
    for ra in a.iter_rows() {
        for rb in b.iter_rows() {
            cross += dist(ra, rb);
        }
    }
    cross /= (a.rows() * b.rows()) as f64;
    Ok((2.0 * cross - within_mean(a) - within_mean(b)).max(0.0))
}
