//! Estimates, confidence intervals and two-sample distances.

use serde::{Deserialize, Serialize};
use libm::erfc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 97.5% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// 99.5% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub elapsed: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64], elapsed: f64) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n_paths: 0,
                elapsed,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n_paths: n,
            elapsed,
        }
    }

    pub fn ci(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.stderr, self.mean + z * self.stderr)
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Wilson score interval for k successes out of n.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sample Kolmogorov-Smirnov distance between lifetime samples censored at
/// `horizon`: values at or beyond the horizon are treated as one atom there.
pub fn ks_censored(a: &[f64], b: &[f64], horizon: f64) -> f64 {
    let prep = |v: &[f64]| {
        let mut s: Vec<f64> = v.iter().map(|&x| x.min(horizon)).collect();
        s.sort_by(|x, y| x.total_cmp(y));
        s
    };
    let a = prep(a);
    let b = prep(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { 1.0 };
    }
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        if x >= horizon {
            break;
        }
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    // the remaining mass (horizon atom) contributes only through the CDFs just below it
    let fa = a.iter().filter(|&&x| x < horizon).count() as f64 / na;
    let fb = b.iter().filter(|&&x| x < horizon).count() as f64 / nb;
    d.max((fa - fb).abs())
}

/// KS distance between censored lifetimes and a law that never dies before the horizon.
pub fn ks_to_immortal(a: &[f64], horizon: f64) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().filter(|&&x| x < horizon).count() as f64 / a.len() as f64
}

/// Asymptotic two-sample KS critical value at level 0.05.
pub fn ks_critical_95(na: usize, nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    1.358 * ((na + nb) / (na * nb)).sqrt()
}

/// Percentile bootstrap 95% interval of a statistic. `stat` draws its own
/// resample from the supplied generator.
pub fn bootstrap_95<F: FnMut(&mut ChaCha8Rng) -> f64>(reps: usize, seed: u64, mut stat: F) -> (f64, f64) {
    if reps == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..reps).map(|_| stat(&mut rng)).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    let at = |q: f64| v[((q * (reps - 1) as f64).round() as usize).min(reps - 1)];
    (at(0.025), at(0.975))
}

/// Sample of the same size drawn with replacement.
pub fn resample(v: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).collect()
}

/// Least-squares slope and intercept of y on x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
