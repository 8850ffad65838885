//! Simulation generators and runners: the clustered-feature scenarios, the
//! tree-distortion study, and Monte-Carlo checks of the theoretical results.

mod scenario;
mod theory;

pub use scenario::{
    evaluate_methods, gen_scenario, run_distortion_sweep, run_scenario_sweep, simplex_vertices, ErrorMetric,
    MethodSet, Scenario, SweepOptions, Truth,
};
pub use theory::{
    c_tilde, normal_cdf, ols_failure_design, recovery_window, verify_ols_failure, verify_prediction_bound,
    verify_support_recovery, wilson_interval, BoundReplicate, BoundReport, OlsRow, RecoveryReport,
};

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;

/// How the noise level is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseRule {
    /// `sigma = ||X beta*||_2 / (5 n)`.
    SignalRatio,
    Fixed(f64),
}

/// Generative parameters of one simulation setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub n: usize,
    pub p: usize,
    /// Number of true groups.
    pub k: usize,
    /// Fraction of groups with a zero coefficient.
    pub s: f64,
    /// Standard deviation of latent vectors around their cluster centre.
    pub tau: f64,
    pub noise: NoiseRule,
    pub seed: u64,
    pub replicates: usize,
}

impl ExperimentSpec {
    /// `(n, p, s) = (500, 100, 0)`.
    pub fn low_dim(k: usize) -> Self {
        Self {
            n: 500,
            p: 100,
            k,
            s: 0.0,
            tau: 0.1,
            noise: NoiseRule::SignalRatio,
            seed: 1,
            replicates: 100,
        }
    }

    /// `(n, p, s) = (100, 200, 0.2)`.
    pub fn high_dim(k: usize) -> Self {
        Self {
            n: 100,
            p: 200,
            s: 0.2,
            ..Self::low_dim(k)
        }
    }

    pub fn with_k(&self, k: usize) -> Self {
        Self { k, ..self.clone() }
    }

    /// Number of zero group coefficients, `k * s`.
    pub fn zero_groups(&self) -> usize {
        (self.k as f64 * self.s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 || self.p == 0 || self.k == 0 {
            return bad("n, p and k must be positive".into());
        }
        if self.p % self.k != 0 {
            return bad(format!("p = {} is not divisible by k = {}", self.p, self.k));
        }
        if !(0.0..=1.0).contains(&self.s) {
            return bad(format!("s = {} outside [0, 1]", self.s));
        }
        let ks = self.k as f64 * self.s;
        if (ks - ks.round()).abs() > 1e-9 {
            return bad(format!("k * s = {} is not an integer", ks));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive".into());
        }
        if let NoiseRule::Fixed(s) = self.noise {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("noise level must be nonnegative".into());
            }
        }
        if self.replicates == 0 {
            return bad("need at least one replicate".into());
        }
        Ok(())
    }
}

/// Independent random streams of one replicate.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Latent = 1,
    Coefficients = 2,
    Design = 3,
    Noise = 4,
}

/// Generator for `(seed, replicate, stream)`. Streams are separate so that,
/// for example, changing the latent spread leaves the design and noise of a
/// replicate untouched.
pub(crate) fn stream_rng(seed: u64, replicate: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(replicate);
    rng
}

/// Mean and standard error (`sd / sqrt(m)`) of a sample.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// One row of a results table: a setting value (`k` or `tau`), a method and
/// the replicate mean and standard error of its best-over-grid error.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub setting: f64,
    pub method: String,
    pub mean_err: f64,
    pub se: f64,
}

/// Writes rows as CSV with header `<setting>,method,mean_err,se`.
pub fn write_table<W: Write>(rows: &[TableRow], setting: &str, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{},method,mean_err,se", setting)?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.setting, r.method, r.mean_err, r.se)?;
    }
    Ok(())
}
