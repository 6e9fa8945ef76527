//! Replicated Monte Carlo runs, error bars and two-sample comparisons.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

/// `c(α)` of the two-sample Kolmogorov–Smirnov test at α = 0.01.
pub const KS_C_1PCT: f64 = 1.628;

/// Number of batches used when none is requested.
pub const DEFAULT_BATCHES: usize = 32;

/// Mean and batch-means standard error of a (possibly correlated) series.
///
/// With fewer than two batches available the error is `NaN`.
pub fn batch_means(xs: &[f64], n_batches: Option<usize>) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let k = n_batches.unwrap_or(DEFAULT_BATCHES).min(n);
    if k < 2 {
        return (mean, f64::NAN);
    }
    let size = n / k;
    let batch: Vec<f64> = (0..k)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = batch.iter().sum::<f64>() / k as f64;
    let var = batch.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Mean and standard error assuming independent samples.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Summary of one replicated experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub parameters: serde_json::Value,
    pub estimate: f64,
    /// Absent for a single replicate.
    pub std_error: Option<f64>,
    pub n_effective: usize,
    pub n_failed: usize,
    pub base_seed: u64,
    pub n_replicates: usize,
    pub wall_time_s: f64,
}

/// Evaluates `task(index, rng)` for every index in `0..n`, each with its own
/// stream, and returns the results in index order. The output does not
/// depend on `workers`.
pub fn run_indexed<T, F>(n: usize, base_seed: u64, workers: usize, task: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(u64, &mut StreamRng) -> Result<T> + Sync,
{
    let body = || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| task(i, &mut stream(base_seed, i)))
            .collect::<Vec<_>>()
    };
    if workers <= 1 {
        return (0..n as u64).map(|i| task(i, &mut stream(base_seed, i))).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(body),
        Err(_) => body(),
    }
}

/// Runs a scalar task `n` times and reports the mean with its error.
pub fn run_replicated<F>(
    name: &str,
    parameters: serde_json::Value,
    n: usize,
    base_seed: u64,
    workers: usize,
    task: F,
) -> Result<ExperimentResult>
where
    F: Fn(u64, &mut StreamRng) -> Result<f64> + Sync,
{
    if n == 0 {
        return Err(Error::Usage("need at least one replicate".into()));
    }
    let start = Instant::now();
    let results = run_indexed(n, base_seed, workers, task);
    let ok: Vec<f64> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let (estimate, se) = mean_se(&ok);
    Ok(ExperimentResult {
        name: name.to_string(),
        parameters,
        estimate,
        std_error: if ok.len() > 1 { Some(se) } else { None },
        n_effective: ok.len(),
        n_failed: n - ok.len(),
        base_seed,
        n_replicates: n,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Sup-distance between a weighted and an unweighted empirical CDF.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CdfDistance {
    pub statistic: f64,
    /// Kish effective size of the weighted sample.
    pub ess_a: f64,
    pub n_b: usize,
    /// Two-sample 1% critical value using `ess_a` in place of the size of `a`.
    pub critical_1pct: f64,
}

impl CdfDistance {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical_1pct
    }
}

pub fn ks_critical(n1: f64, n2: f64) -> f64 {
    KS_C_1PCT * ((n1 + n2) / (n1 * n2)).sqrt()
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    s * s / s2
}

pub fn cdf_distance(samples_a: &[f64], weights_a: Option<&[f64]>, samples_b: &[f64]) -> Result<CdfDistance> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::Usage("cdf_distance needs nonempty samples".into()));
    }
    let unit;
    let wa = match weights_a {
        Some(w) => {
            if w.len() != samples_a.len() {
                return Err(Error::Usage("weights and samples differ in length".into()));
            }
            if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::Usage("weights must be positive and finite".into()));
            }
            w
        }
        None => {
            unit = vec![1.0; samples_a.len()];
            &unit[..]
        }
    };
    if samples_a.iter().chain(samples_b).any(|x| x.is_nan()) {
        return Err(Error::Usage("NaN sample".into()));
    }
    let total_a: f64 = wa.iter().sum();
    let mut a: Vec<(f64, f64)> = samples_a.iter().copied().zip(wa.iter().map(|w| w / total_a)).collect();
    a.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut b = samples_b.to_vec();
    b.sort_by(f64::total_cmp);
    let inv_nb = 1.0 / b.len() as f64;

    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb, mut d) = (0.0f64, 0.0f64, 0.0f64);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(&q)) => p.0.min(q),
            (Some(p), None) => p.0,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i].0 == x {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j] == x {
            fb += inv_nb;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    let ess_a = effective_sample_size(wa);
    Ok(CdfDistance {
        statistic: d.min(1.0),
        ess_a,
        n_b: b.len(),
        critical_1pct: ks_critical(ess_a, b.len() as f64),
    })
}
