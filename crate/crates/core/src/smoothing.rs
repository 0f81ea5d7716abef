//! Label distributions and label smoothing, including the two-group
//! noise-aware variant where low-noise classes get `eps - delta` and
//! high-noise classes get `eps + delta`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_distribution, SUM_TOLERANCE};

/// Target distribution over `K` classes. One-hot targets are the special case
/// with a single active entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_distribution(&values, "label distribution")?;
        Ok(Self(values))
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("a label distribution needs K >= 2"));
        }
        if class >= num_classes {
            return Err(Error::invalid(format!(
                "class {class} out of range for K = {num_classes}"
            )));
        }
        let mut v = vec![0.0; num_classes];
        v[class] = 1.0;
        Ok(Self(v))
    }

    pub fn uniform(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("a label distribution needs K >= 2"));
        }
        Ok(Self(vec![1.0 / num_classes as f64; num_classes]))
    }

    /// Convex combination `w * self + (1 - w) * other`. Callers guarantee
    /// equal lengths and `w` in `[0, 1]`.
    pub(crate) fn blend(&self, other: &Self, w: f64) -> Self {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| w * a + (1.0 - w) * b)
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn is_one_hot(&self) -> bool {
        self.0.iter().filter(|v| **v == 1.0).count() == 1
    }

    /// Index of the single active entry, if one-hot.
    pub fn hard_class(&self) -> Option<usize> {
        if self.is_one_hot() {
            self.0.iter().position(|v| *v == 1.0)
        } else {
            None
        }
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|v| **v > 0.0).count()
    }

    pub fn sums_to_one(&self) -> bool {
        (self.0.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE
    }
}

impl TryFrom<Vec<f64>> for LabelDistribution {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<LabelDistribution> for Vec<f64> {
    fn from(d: LabelDistribution) -> Self {
        d.0
    }
}

impl AsRef<[f64]> for LabelDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseGroup {
    Low,
    High,
}

/// `y'(k) = (1 - eps) * [k == t] + eps / K`.
pub fn smooth_uniform(target: usize, num_classes: usize, epsilon: f64) -> Result<LabelDistribution> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1)")));
    }
    let mut dist = LabelDistribution::one_hot(target, num_classes)?;
    if epsilon == 0.0 {
        return Ok(dist);
    }
    let spread = epsilon / num_classes as f64;
    for (k, v) in dist.0.iter_mut().enumerate() {
        *v = if k == target { (1.0 - epsilon) + spread } else { spread };
    }
    Ok(dist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingPolicy {
    pub epsilon: f64,
    #[serde(default)]
    pub delta_epsilon: f64,
    /// Absent means every class uses `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<BTreeMap<usize, NoiseGroup>>,
}

impl SmoothingPolicy {
    pub fn uniform(epsilon: f64) -> Self {
        Self {
            epsilon,
            delta_epsilon: 0.0,
            groups: None,
        }
    }

    pub fn two_group(epsilon: f64, delta_epsilon: f64, groups: BTreeMap<usize, NoiseGroup>) -> Self {
        Self {
            epsilon,
            delta_epsilon,
            groups: Some(groups),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::config(
                "smoothing.epsilon",
                format!("{} is outside [0, 1)", self.epsilon),
            ));
        }
        if !(self.delta_epsilon >= 0.0) {
            return Err(Error::config(
                "smoothing.delta_epsilon",
                format!("{} is negative", self.delta_epsilon),
            ));
        }
        if self.epsilon - self.delta_epsilon < 0.0 {
            return Err(Error::config(
                "smoothing.delta_epsilon",
                "epsilon - delta_epsilon must be >= 0",
            ));
        }
        if self.epsilon + self.delta_epsilon >= 1.0 {
            return Err(Error::config(
                "smoothing.delta_epsilon",
                "epsilon + delta_epsilon must be < 1",
            ));
        }
        Ok(())
    }

    /// The smoothing strength applied to targets of class `class`.
    pub fn effective_epsilon(&self, class: usize) -> Result<f64> {
        match &self.groups {
            None => Ok(self.epsilon),
            Some(groups) => match groups.get(&class) {
                Some(NoiseGroup::Low) => Ok(self.epsilon - self.delta_epsilon),
                Some(NoiseGroup::High) => Ok(self.epsilon + self.delta_epsilon),
                None => Err(Error::config(
                    "smoothing.groups",
                    format!("class {class} has no noise group"),
                )),
            },
        }
    }
}

pub fn smooth_with_policy(
    target: usize,
    num_classes: usize,
    policy: &SmoothingPolicy,
) -> Result<LabelDistribution> {
    policy.validate()?;
    smooth_uniform(target, num_classes, policy.effective_epsilon(target)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::cce;
    use crate::numerics::softmax;
    use proptest::prelude::*;

    #[test]
    fn uniform_examples() {
        let y = smooth_uniform(1, 4, 0.1).unwrap();
        assert_eq!(y.values(), &[0.025, 0.925, 0.025, 0.025]);

        let y = smooth_uniform(2, 5, 0.0).unwrap();
        assert_eq!(y, LabelDistribution::one_hot(2, 5).unwrap());

        let y = smooth_uniform(0, 20, 0.15).unwrap();
        assert!((y.values()[0] - 0.8575).abs() < 1e-12);
        assert!(y.values()[1..].iter().all(|v| (v - 0.0075).abs() < 1e-12));

        assert!(smooth_uniform(4, 4, 0.1).is_err());
        assert!(smooth_uniform(0, 4, 1.0).is_err());
    }

    fn groups(k: usize, low: &[usize]) -> BTreeMap<usize, NoiseGroup> {
        (0..k)
            .map(|c| (c, if low.contains(&c) { NoiseGroup::Low } else { NoiseGroup::High }))
            .collect()
    }

    #[test]
    fn two_group_policy() {
        let policy = SmoothingPolicy::two_group(0.15, 0.05, groups(4, &[0, 1]));
        let y = smooth_with_policy(1, 4, &policy).unwrap();
        let expected = smooth_uniform(1, 4, 0.10).unwrap();
        for (a, b) in y.values().iter().zip(expected.values()) {
            assert!((a - b).abs() < 1e-15);
        }

        let policy = SmoothingPolicy::two_group(0.15, 0.05, groups(20, &[]));
        let y = smooth_with_policy(3, 20, &policy).unwrap();
        assert!((y.values()[3] - 0.81).abs() < 1e-12);
        assert!(y.values().iter().enumerate().filter(|(k, _)| *k != 3).all(|(_, v)| (v - 0.01).abs() < 1e-12));
    }

    #[test]
    fn zero_delta_matches_uniform_bitwise() {
        let policy = SmoothingPolicy::two_group(0.15, 0.0, groups(6, &[1, 4]));
        for t in 0..6 {
            let a = smooth_with_policy(t, 6, &policy).unwrap();
            let b = smooth_uniform(t, 6, 0.15).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn missing_group_is_config_error() {
        let mut g = groups(4, &[0]);
        g.remove(&2);
        let policy = SmoothingPolicy::two_group(0.15, 0.05, g);
        assert!(matches!(smooth_with_policy(2, 4, &policy), Err(Error::Config { .. })));
        assert!(smooth_with_policy(1, 4, &policy).is_ok());
    }

    #[test]
    fn invalid_policies_rejected() {
        assert!(SmoothingPolicy::uniform(1.0).validate().is_err());
        assert!(SmoothingPolicy::two_group(0.1, 0.2, BTreeMap::new()).validate().is_err());
        assert!(SmoothingPolicy::two_group(0.6, 0.4, BTreeMap::new()).validate().is_err());
    }

    proptest! {
        #[test]
        fn smoothed_shape(k in 2usize..30, t_raw in 0usize..30, eps in 0.0f64..0.99) {
            let t = t_raw % k;
            let y = smooth_uniform(t, k, eps).unwrap();
            prop_assert!(y.sums_to_one());
            let min = y.values().iter().copied().fold(f64::INFINITY, f64::min);
            let max = y.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((min - eps / k as f64).abs() < 1e-12);
            prop_assert!((max - (1.0 - eps * (1.0 - 1.0 / k as f64))).abs() < 1e-12);
            prop_assert_eq!(crate::numerics::argmax(y.values()), t);
        }

        #[test]
        fn cce_is_linear_in_smoothing(
            logits in proptest::collection::vec(-4.0f64..4.0, 5),
            t in 0usize..5,
            eps in 0.0f64..0.9,
        ) {
            let p = softmax(&logits).unwrap();
            let smoothed = cce(&smooth_uniform(t, 5, eps).unwrap(), &p).unwrap();
            let hard = cce(&LabelDistribution::one_hot(t, 5).unwrap(), &p).unwrap();
            let flat = cce(&LabelDistribution::uniform(5).unwrap(), &p).unwrap();
            prop_assert!((smoothed - ((1.0 - eps) * hard + eps * flat)).abs() < 1e-9);
        }
    }
}
