//! Deterministic numeric primitives: stable softmax, percentile, Beta
//! sampling, seeded RNG streams and Student-t confidence intervals.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Tolerance used when checking that a distribution sums to one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Softmax output: nonnegative entries summing to one, at least two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_distribution(&values, "probability vector")?;
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_distribution(values: &[f64], what: &str) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::invalid(format!(
            "{what} needs at least 2 entries, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::invalid(format!(
            "{what} has an entry outside [0, inf): {v}"
        )));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::invalid(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.len() < 2 {
        return Err(Error::invalid("softmax needs at least 2 logits"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("softmax input contains a non-finite logit"));
    }
    Ok(ProbVector(softmax_unchecked(logits)))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Percentile with linear interpolation between closest ranks on `(N - 1)`
/// spacing. `l` is in percent.
pub fn percentile(values: &[f64], l: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty sequence"));
    }
    if !(0.0..=100.0).contains(&l) {
        return Err(Error::invalid(format!("percentile {l} outside [0, 100]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("percentile input contains a non-finite value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_of_sorted(&sorted, l))
}

fn percentile_of_sorted(sorted: &[f64], l: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = l / 100.0 * (n - 1) as f64;
    let lower = rank.floor() as usize;
    if lower >= n - 1 {
        return sorted[n - 1];
    }
    let frac = rank - lower as f64;
    sorted[lower] + frac * (sorted[lower + 1] - sorted[lower])
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Streams with the same seed but different ids are independent ChaCha
/// streams, so components of one run never share draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn beta(&mut self, alpha: f64) -> Result<f64> {
        sample_beta(alpha, self)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// `ln X` for `X ~ Gamma(shape, 1)`.
///
/// For `shape < 1` the draw is boosted: `X = G * U^(1/shape)` with
/// `G ~ Gamma(shape + 1, 1)`, kept in log space so tiny shapes do not
/// underflow to zero.
fn ln_gamma_draw(shape: f64, rng: &mut RngStream) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape >= 1 is a valid gamma shape");
        return g.sample(&mut rng.rng).ln();
    }
    let g = Gamma::new(shape + 1.0, 1.0).expect("shape + 1 is a valid gamma shape");
    let boosted: f64 = g.sample(&mut rng.rng);
    // (0, 1] so the log is finite
    let u = 1.0 - rng.uniform();
    boosted.ln() + u.ln() / shape
}

/// Draw `lambda ~ Beta(alpha, alpha)` as a ratio of two gamma variates.
pub fn sample_beta(alpha: f64, rng: &mut RngStream) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("beta alpha must be > 0, got {alpha}")));
    }
    let ln_x = ln_gamma_draw(alpha, rng);
    let ln_y = ln_gamma_draw(alpha, rng);
    // x / (x + y) = 1 / (1 + exp(ln_y - ln_x))
    let lambda = 1.0 / (1.0 + (ln_y - ln_x).exp());
    Ok(lambda.clamp(0.0, 1.0))
}

/// Arithmetic mean and Student-t confidence half-width at `level`.
pub fn mean_ci(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("confidence interval of an empty sequence"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Ok((mean, 0.0));
    }
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::invalid(format!("student-t: {e}")))?;
    let t = dist.inverse_cdf((1.0 + level) / 2.0);
    Ok((mean, t * sd / (n as f64).sqrt()))
}
