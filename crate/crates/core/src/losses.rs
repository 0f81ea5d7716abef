//! Categorical cross-entropy, mean absolute error and the Lq loss, with
//! gradients with respect to the logits. All losses accept soft targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax, ProbVector};
use crate::smoothing::LabelDistribution;

/// Floor applied to probabilities before a logarithm or power.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LossSpec {
    Cce,
    Mae,
    /// `(1 - (sum_k y_k p_k)^q) / q` with `q` in `(0, 1]`.
    Lq { q: f64 },
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        if let LossSpec::Lq { q } = *self {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::config(
                    "loss.q",
                    format!("q = {q} is outside (0, 1], the valid range of the Lq loss"),
                ));
            }
        }
        Ok(())
    }

    pub fn loss(&self, y: &LabelDistribution, p: &ProbVector) -> Result<f64> {
        match *self {
            LossSpec::Cce => cce(y, p),
            LossSpec::Mae => mae(y, p),
            LossSpec::Lq { q } => lq_loss(y, p, q),
        }
    }
}

fn check_lengths(y: &LabelDistribution, p: &[f64]) -> Result<()> {
    if y.num_classes() != p.len() {
        return Err(Error::invalid(format!(
            "target has {} classes but prediction has {}",
            y.num_classes(),
            p.len()
        )));
    }
    Ok(())
}

pub fn cce(y: &LabelDistribution, p: &ProbVector) -> Result<f64> {
    check_lengths(y, p.values())?;
    Ok(cce_raw(y.values(), p.values()))
}

fn cce_raw(y: &[f64], p: &[f64]) -> f64 {
    -y.iter()
        .zip(p)
        .filter(|(yk, _)| **yk != 0.0)
        .map(|(yk, pk)| yk * pk.max(PROB_FLOOR).ln())
        .sum::<f64>()
}

pub fn mae(y: &LabelDistribution, p: &ProbVector) -> Result<f64> {
    check_lengths(y, p.values())?;
    Ok(mae_raw(y.values(), p.values()))
}

fn mae_raw(y: &[f64], p: &[f64]) -> f64 {
    y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum()
}

fn target_dot(y: &[f64], p: &[f64]) -> f64 {
    y.iter().zip(p).map(|(a, b)| a * b).sum::<f64>().max(PROB_FLOOR)
}

pub fn lq_loss(y: &LabelDistribution, p: &ProbVector, q: f64) -> Result<f64> {
    LossSpec::Lq { q }.validate().map_err(|_| {
        Error::invalid(format!("Lq exponent q = {q} outside (0, 1]"))
    })?;
    check_lengths(y, p.values())?;
    Ok(lq_raw(y.values(), p.values(), q))
}

fn lq_raw(y: &[f64], p: &[f64], q: f64) -> f64 {
    let dot = target_dot(y, p);
    if q == 1.0 {
        return 1.0 - dot;
    }
    // 1 - dot^q = -expm1(q ln dot), exact for small q
    -(q * dot.ln()).exp_m1() / q
}

/// Gradient of the loss with respect to the logits `z`, where `p = softmax(z)`.
pub fn loss_gradient_wrt_logits(
    spec: &LossSpec,
    y: &LabelDistribution,
    logits: &[f64],
) -> Result<Vec<f64>> {
    spec.validate()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let p = softmax(logits)?;
    check_lengths(y, p.values())?;
    Ok(gradient_from_probs(spec, y.values(), p.values()))
}

/// Loss value and logit gradient from already-computed probabilities.
pub(crate) fn loss_and_gradient(spec: &LossSpec, y: &[f64], p: &[f64]) -> (f64, Vec<f64>) {
    let loss = match *spec {
        LossSpec::Cce => cce_raw(y, p),
        LossSpec::Mae => mae_raw(y, p),
        LossSpec::Lq { q } => lq_raw(y, p, q),
    };
    (loss, gradient_from_probs(spec, y, p))
}

#[cfg(test)]
pub(crate) fn loss_from_logits(spec: &LossSpec, y: &[f64], logits: &[f64]) -> f64 {
    let p = crate::numerics::softmax_unchecked(logits);
    match *spec {
        LossSpec::Cce => cce_raw(y, &p),
        LossSpec::Mae => mae_raw(y, &p),
        LossSpec::Lq { q } => lq_raw(y, &p, q),
    }
}

fn gradient_from_probs(spec: &LossSpec, y: &[f64], p: &[f64]) -> Vec<f64> {
    match *spec {
        // dL/dz = p * sum(y) - y
        LossSpec::Cce => {
            let mass: f64 = y.iter().sum();
            p.iter().zip(y).map(|(pk, yk)| pk * mass - yk).collect()
        }
        // dL/dz_j = d^(q-1) p_j (d - y_j), d = y.p
        LossSpec::Lq { q } => {
            let dot = target_dot(y, p);
            let scale = dot.powf(q - 1.0);
            p.iter()
                .zip(y)
                .map(|(pk, yk)| scale * pk * (dot - yk))
                .collect()
        }
        // g = dL/dp = sign(p - y); dL/dz_j = p_j (g_j - g.p)
        LossSpec::Mae => {
            let g: Vec<f64> = p
                .iter()
                .zip(y)
                .map(|(pk, yk)| {
                    let d = pk - yk;
                    if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            let gp: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
            p.iter().zip(&g).map(|(pk, gk)| pk * (gk - gp)).collect()
        }
    }
}

/// Per-example losses for a batch, in input order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub per_example: Vec<f64>,
    pub example_ids: Vec<u64>,
}

impl LossReport {
    pub fn new(per_example: Vec<f64>, example_ids: Vec<u64>) -> Result<Self> {
        if per_example.len() != example_ids.len() {
            return Err(Error::invalid(format!(
                "{} losses but {} example ids",
                per_example.len(),
                example_ids.len()
            )));
        }
        if let Some(v) = per_example.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("loss value {v} is not a finite nonnegative number")));
        }
        Ok(Self {
            per_example,
            example_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.per_example.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_example.is_empty()
    }
}

pub fn batch_losses(
    spec: &LossSpec,
    targets: &[LabelDistribution],
    predictions: &[ProbVector],
    ids: &[u64],
) -> Result<LossReport> {
    if targets.len() != predictions.len() || targets.len() != ids.len() {
        return Err(Error::invalid(format!(
            "batch length mismatch: {} targets, {} predictions, {} ids",
            targets.len(),
            predictions.len(),
            ids.len()
        )));
    }
    spec.validate().map_err(|e| Error::invalid(e.to_string()))?;
    let losses = targets
        .iter()
        .zip(predictions)
        .map(|(y, p)| spec.loss(y, p))
        .collect::<Result<Vec<_>>>()?;
    LossReport::new(losses, ids.to_vec())
}
