//! Gaussian-process surrogate and expected-improvement acquisition.
//!
//! The surrogate is a zero-mean GP over inputs normalized to the unit box,
//! with an isotropic RBF kernel
//!
//! ```text
//! k(a, b) = exp(−‖a − b‖² / (2ℓ²))
//! ```
//!
//! where the length scale ℓ is the median pairwise distance of the observed
//! points, refit after every observation. Observations are standardized to
//! zero mean and unit variance; a small noise term keeps the kernel matrix
//! positive definite. Proposals maximize expected improvement over a seeded
//! batch of uniform candidate points.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn rbf(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq / (2.0 * length_scale * length_scale)).exp()
}

/// Median Euclidean distance over all point pairs; 1.0 when degenerate.
pub(crate) fn median_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut dists = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            dists.push(d);
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_unstable_by(|a, b| a.total_cmp(b));
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if median > 1e-12 {
        median
    } else {
        1.0
    }
}

/// A fitted GP posterior over standardized observations.
pub(crate) struct Surrogate {
    x: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    length_scale: f64,
    noise: f64,
    /// Best observed objective on the standardized scale.
    pub best_standardized: f64,
}

impl Surrogate {
    /// Fit to observations; `None` if the kernel matrix is not positive
    /// definite even with the noise term.
    pub fn fit(x: &[Vec<f64>], y: &[f64], noise: f64) -> Option<Surrogate> {
        let n = y.len();
        if n == 0 || x.len() != n {
            return None;
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(1e-12);
        let y_std: Vec<f64> = y.iter().map(|v| (v - mean) / std).collect();

        let length_scale = median_pairwise_distance(x);
        let k = DMatrix::from_fn(n, n, |i, j| {
            let v = rbf(&x[i], &x[j], length_scale);
            if i == j {
                v + noise
            } else {
                v
            }
        });
        let chol = nalgebra::Cholesky::new(k)?;
        let alpha = chol.solve(&DVector::from_column_slice(&y_std));
        let best = y_std.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Surrogate {
            x: x.to_vec(),
            alpha,
            chol,
            length_scale,
            noise,
            best_standardized: best,
        })
    }

    /// Posterior mean and standard deviation (standardized scale) at `point`.
    pub fn predict(&self, point: &[f64]) -> (f64, f64) {
        let kv = DVector::from_fn(self.x.len(), |i, _| rbf(point, &self.x[i], self.length_scale));
        let mean = kv.dot(&self.alpha);
        let solved = self.chol.solve(&kv);
        let var = 1.0 + self.noise - kv.dot(&solved);
        (mean, var.max(0.0).sqrt())
    }
}

/// Expected improvement of a Gaussian posterior `(mean, std)` over `best`,
/// for maximization. Always non-negative; zero when the posterior is
/// (numerically) certain and not better than `best`.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let delta = mean - best;
    if std <= 1e-12 {
        return delta.max(0.0);
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z = delta / std;
    (delta * normal.cdf(z) + std * normal.pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn median_distance_basics() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        // distances 1, 3, 2 → median 2
        assert_eq!(median_pairwise_distance(&pts), 2.0);
        assert_eq!(median_pairwise_distance(&[vec![0.5]]), 1.0);
        assert_eq!(median_pairwise_distance(&[vec![0.5], vec![0.5]]), 1.0);
    }

    #[test]
    fn posterior_interpolates_observations() {
        let x = vec![vec![0.0], vec![0.5], vec![1.0]];
        let y = vec![0.0, 1.0, 0.3];
        let gp = Surrogate::fit(&x, &y, 1e-6).unwrap();
        // Standardized predictions at the training points match the data.
        let mean = y.iter().sum::<f64>() / 3.0;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
        let std = var.sqrt();
        for (xi, yi) in x.iter().zip(&y) {
            let (m, s) = gp.predict(xi);
            let recovered = m * std + mean;
            assert!((recovered - yi).abs() < 1e-3, "{recovered} vs {yi}");
            assert!(s < 0.05);
        }
        // Far from data the posterior reverts to the prior.
        let (m, s) = gp.predict(&[25.0]);
        assert!(m.abs() < 1e-6);
        assert!((s - (1.0 + 1e-6f64).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn expected_improvement_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let mean = rng.gen_range(-3.0..3.0);
            let std = rng.gen_range(0.0..2.0);
            let best = rng.gen_range(-3.0..3.0);
            let ei = expected_improvement(mean, std, best);
            assert!(ei >= 0.0);
            assert!(ei.is_finite());
        }
        // Certain improvement reduces to the improvement itself.
        assert_eq!(expected_improvement(1.0, 0.0, 0.25), 0.75);
        assert_eq!(expected_improvement(-1.0, 0.0, 0.25), 0.0);
        // More uncertainty at the same mean never reduces EI.
        let lo = expected_improvement(0.0, 0.1, 0.5);
        let hi = expected_improvement(0.0, 1.0, 0.5);
        assert!(hi >= lo);
    }
}
