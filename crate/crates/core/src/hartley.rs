//! Value of Hartley information estimated by partition optimization.
//!
//! For squared-error utility the best `k`-cell partition of the response is a
//! `k`-means problem: `U(ln k) = -1/2 * min E[ |x - E[x | z]|^2 ]`. Lloyd
//! iterations from seeded initializations give an upper bound on that minimum
//! (hence a lower bound on `U(ln k)`); the best restart is reported.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Maximum Lloyd iterations per restart.
pub const MAX_LLOYD_ITERATIONS: usize = 300;
/// Relative objective decrease below which Lloyd iterations stop.
pub const LLOYD_RELATIVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HartleyEstimate {
    pub k: usize,
    /// `ln k`.
    pub info_nats: f64,
    /// `-1/2` times the mean squared distance to the assigned centroid.
    pub u_value: f64,
    /// Standard error of `u_value` from the spread of per-sample distances.
    pub std_error: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Restart that produced the reported partition.
    pub best_restart: usize,
    pub iterations: usize,
    pub centroids: Vec<Vec<f64>>,
}

struct Points<'a> {
    data: &'a [f64],
    dim: usize,
}

impl Points<'_> {
    fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Assignment {
    labels: Vec<usize>,
    dists: Vec<f64>,
    objective: f64,
}

fn assign(points: &Points<'_>, centroids: &[f64]) -> Assignment {
    let dim = points.dim;
    let k = centroids.len() / dim;
    let n = points.len();
    let mut labels = vec![0; n];
    let mut dists = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..n {
        let x = points.row(i);
        let mut best = (f64::INFINITY, 0);
        for c in 0..k {
            let d = sq_dist(x, &centroids[c * dim..(c + 1) * dim]);
            if d < best.0 {
                best = (d, c);
            }
        }
        labels[i] = best.1;
        dists[i] = best.0;
        total += best.0;
    }
    Assignment {
        labels,
        dists,
        objective: total / n as f64,
    }
}

/// Recomputes centroids as cluster means. Empty clusters are moved onto the
/// points currently farthest from their centroids.
fn update(points: &Points<'_>, a: &Assignment, k: usize) -> Vec<f64> {
    let dim = points.dim;
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &c) in a.labels.iter().enumerate() {
        counts[c] += 1;
        for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if !empty.is_empty() {
        let mut order: Vec<usize> = (0..a.dists.len()).collect();
        // Farthest first; index breaks ties so the result is deterministic.
        order.sort_by(|&i, &j| a.dists[j].total_cmp(&a.dists[i]).then(i.cmp(&j)));
        for (&c, &i) in empty.iter().zip(&order) {
            sums[c * dim..(c + 1) * dim].copy_from_slice(points.row(i));
            counts[c] = 1;
        }
    }
    for c in 0..k {
        for s in &mut sums[c * dim..(c + 1) * dim] {
            *s /= counts[c] as f64;
        }
    }
    sums
}

fn lloyd(points: &Points<'_>, mut centroids: Vec<f64>, k: usize) -> (Vec<f64>, Assignment, usize) {
    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let a = assign(points, &centroids);
        let converged =
            prev.is_finite() && prev - a.objective <= LLOYD_RELATIVE_TOLERANCE * prev.abs();
        if converged || iterations == MAX_LLOYD_ITERATIONS {
            return (centroids, a, iterations);
        }
        prev = a.objective;
        centroids = update(points, &a, k);
        iterations += 1;
    }
}

/// Best-of-`restarts` Lloyd partition of `samples` into `k` cells.
///
/// Restart `r` draws `k` distinct initial points from a ChaCha8 stream keyed
/// by `(seed, r)`, so the initializations for a given restart do not depend
/// on `k` beyond the number drawn.
pub fn hartley_value_estimate(
    samples: &[Vec<f64>],
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<HartleyEstimate> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    let dim = samples[0].len();
    if dim == 0 {
        return Err(domain("samples must have at least one coordinate"));
    }
    if k == 0 {
        return Err(domain("k must be >= 1"));
    }
    if restarts == 0 {
        return Err(domain("restarts must be >= 1"));
    }
    if k > samples.len() {
        return Err(Error::InsufficientData(format!(
            "k = {k} exceeds the number of samples ({})",
            samples.len()
        )));
    }
    let mut data = Vec::with_capacity(samples.len() * dim);
    for (i, s) in samples.iter().enumerate() {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.len(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i}")));
        }
        data.extend_from_slice(s);
    }
    let points = Points { data: &data, dim };
    let n = points.len();

    let mut best: Option<(f64, usize, Vec<f64>, Assignment, usize)> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let mut init = Vec::with_capacity(k * dim);
        for i in index::sample(&mut rng, n, k).into_iter() {
            init.extend_from_slice(points.row(i));
        }
        let (centroids, a, iters) = lloyd(&points, init, k);
        // Strict comparison keeps the lowest restart index on ties.
        if best.as_ref().is_none_or(|b| a.objective < b.0) {
            best = Some((a.objective, r, centroids, a, iters));
        }
    }
    let (objective, best_restart, centroids, a, iterations) = best.expect("restarts >= 1");

    let var_d = if n > 1 {
        a.dists.iter().map(|d| (d - objective).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Ok(HartleyEstimate {
        k,
        info_nats: (k as f64).ln(),
        u_value: -0.5 * objective,
        std_error: 0.5 * (var_d / n as f64).sqrt(),
        restarts,
        seed,
        best_restart,
        iterations,
        centroids: centroids.chunks(dim).map(<[f64]>::to_vec).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_sample(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| vec![StandardNormal.sample(&mut rng)])
            .collect()
    }

    #[test]
    fn single_cluster_is_prior_value() {
        let s = gaussian_sample(1000, 3);
        let mean = s.iter().map(|v| v[0]).sum::<f64>() / 1000.0;
        let var = s.iter().map(|v| (v[0] - mean).powi(2)).sum::<f64>() / 1000.0;
        let est = hartley_value_estimate(&s, 1, 3, 9).unwrap();
        assert!((est.u_value + 0.5 * var).abs() < 1e-12);
        assert_eq!(est.info_nats, 0.0);
    }

    #[test]
    fn errors() {
        assert!(hartley_value_estimate(&[], 1, 1, 0).is_err());
        let s = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            hartley_value_estimate(&s, 3, 1, 0),
            Err(Error::InsufficientData(_))
        ));
        assert!(hartley_value_estimate(&s, 0, 1, 0).is_err());
        assert!(hartley_value_estimate(&s, 1, 0, 0).is_err());
        let ragged = vec![vec![1.0], vec![2.0, 3.0]];
        assert!(hartley_value_estimate(&ragged, 1, 1, 0).is_err());
    }

    #[test]
    fn k_equal_n_gives_zero_error() {
        let s = vec![vec![0.0, 1.0], vec![3.0, 1.0], vec![-2.0, 5.0]];
        let est = hartley_value_estimate(&s, 3, 2, 1).unwrap();
        assert_eq!(est.u_value, 0.0);
    }

    #[test]
    fn duplicate_points_trigger_reseed() {
        // Initial picks can coincide in value; empty clusters get reseeded.
        let mut s = vec![vec![0.0]; 50];
        s.extend(vec![vec![10.0]; 50]);
        s.push(vec![20.0]);
        let est = hartley_value_estimate(&s, 3, 4, 5).unwrap();
        assert!(est.u_value.abs() < 1e-12);
        assert_eq!(est.centroids.len(), 3);
    }

    #[test]
    fn deterministic() {
        let s = gaussian_sample(2000, 11);
        let a = hartley_value_estimate(&s, 4, 3, 42).unwrap();
        let b = hartley_value_estimate(&s, 4, 3, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nondecreasing_in_k() {
        for seed in 0..3 {
            let s = gaussian_sample(3000, 100 + seed);
            let mut prev = f64::NEG_INFINITY;
            for k in 1..=8 {
                let est = hartley_value_estimate(&s, k, 4, seed).unwrap();
                assert!(est.u_value >= prev - 1e-12, "k = {k}");
                assert!(est.u_value <= 0.0);
                prev = est.u_value;
            }
        }
    }
}
