//! Weak and strong vector-space augmentations and the transformation ball
//! `B(x)` around them.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{DacError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPolicy {
    pub sigma_weak: f64,
    pub sigma_strong: f64,
    pub dropout_prob: f64,
    pub scale_jitter: f64,
    /// L1 radius of the ball around each augmented view.
    pub radius_r: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            sigma_weak: 0.05,
            sigma_strong: 0.15,
            dropout_prob: 0.1,
            scale_jitter: 0.1,
            radius_r: 0.5,
        }
    }
}

impl AugmentPolicy {
    /// No noise, no dropout, no jitter: every view is the input itself.
    pub fn identity(radius_r: f64) -> Self {
        AugmentPolicy {
            sigma_weak: 0.0,
            sigma_strong: 0.0,
            dropout_prob: 0.0,
            scale_jitter: 0.0,
            radius_r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_weak >= 0.0 && self.sigma_weak <= self.sigma_strong) {
            return Err(DacError::invalid("need 0 <= sigma_weak <= sigma_strong"));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(DacError::invalid("dropout_prob must lie in [0, 1]"));
        }
        if !(self.scale_jitter >= 0.0) {
            return Err(DacError::invalid("scale_jitter must be >= 0"));
        }
        if !(self.radius_r > 0.0) {
            return Err(DacError::invalid("radius_r must be > 0"));
        }
        Ok(())
    }
}

pub fn weak_aug<R: Rng + ?Sized>(x: &[f64], policy: &AugmentPolicy, rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let e: f64 = rng.sample(StandardNormal);
            v + policy.sigma_weak * e
        })
        .collect()
}

/// Gaussian noise, then independent coordinate dropout, then one shared
/// multiplicative factor drawn from `[1 - jitter, 1 + jitter]`.
pub fn strong_aug<R: Rng + ?Sized>(x: &[f64], policy: &AugmentPolicy, rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = x
        .iter()
        .map(|&v| {
            let e: f64 = rng.sample(StandardNormal);
            let keep = rng.random::<f64>() >= policy.dropout_prob;
            if keep {
                v + policy.sigma_strong * e
            } else {
                0.0
            }
        })
        .collect();
    let u: f64 = rng.random();
    let factor = 1.0 + policy.scale_jitter * (2.0 * u - 1.0);
    out.iter_mut().for_each(|v| *v *= factor);
    out
}

/// A point drawn uniformly from the open L1 ball of radius `r` around the origin.
pub fn l1_ball_offset<R: Rng + ?Sized>(dim: usize, r: f64, rng: &mut R) -> Vec<f64> {
    // Exponential spacings normalized to the simplex give a uniform direction
    // on the L1 sphere; the U^(1/d) radius makes the fill uniform.
    let e: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    let u: f64 = rng.random();
    let radius = r * u.powf(1.0 / dim as f64);
    e.into_iter()
        .map(|ei| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            if total > 0.0 {
                sign * radius * ei / total
            } else {
                0.0
            }
        })
        .collect()
}

/// Draws `count` points `A(x) + delta` with `A` chosen uniformly from the weak
/// and strong augmentations and `||delta||_1 < radius_r`.
pub fn sample_ball<R: Rng + ?Sized>(x: &[f64], policy: &AugmentPolicy, rng: &mut R, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut view = if rng.random::<bool>() {
                weak_aug(x, policy, rng)
            } else {
                strong_aug(x, policy, rng)
            };
            let delta = l1_ball_offset(x.len(), policy.radius_r, rng);
            crate::linalg::axpy(1.0, &delta, &mut view);
            view
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::l1_distance;
    use crate::rng::{stream, Stream};

    #[test]
    fn zero_sigma_weak_is_identity() {
        let p = AugmentPolicy {
            sigma_weak: 0.0,
            ..AugmentPolicy::default()
        };
        let mut rng = stream(0, Stream::Augment);
        let x = [0.3, -1.2, 4.0];
        assert_eq!(weak_aug(&x, &p, &mut rng), x.to_vec());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let p = AugmentPolicy::default();
        let x = [0.3, -1.2];
        let a = strong_aug(&x, &p, &mut stream(9, Stream::Augment));
        let b = strong_aug(&x, &p, &mut stream(9, Stream::Augment));
        assert_eq!(a, b);
    }

    #[test]
    fn strong_all_knobs_zero_is_identity() {
        let p = AugmentPolicy::identity(0.5);
        let mut rng = stream(1, Stream::Augment);
        let x = [0.3, -1.2, 4.0];
        for _ in 0..20 {
            assert_eq!(strong_aug(&x, &p, &mut rng), x.to_vec());
        }
    }

    #[test]
    fn full_dropout_gives_zero_vector() {
        let p = AugmentPolicy {
            dropout_prob: 1.0,
            ..AugmentPolicy::default()
        };
        let mut rng = stream(2, Stream::Augment);
        assert_eq!(strong_aug(&[1.0, 2.0, 3.0], &p, &mut rng), vec![0.0; 3]);
    }

    #[test]
    fn weak_noise_has_configured_stddev_and_zero_mean() {
        let p = AugmentPolicy::default();
        let mut rng = stream(3, Stream::Augment);
        let n = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let d = weak_aug(&[1.5], &p, &mut rng)[0] - 1.5;
            s1 += d;
            s2 += d * d;
        }
        let mean = s1 / n as f64;
        let sd = (s2 / n as f64 - mean * mean).sqrt();
        assert!((sd - p.sigma_weak).abs() / p.sigma_weak < 0.02, "sd = {}", sd);
        let se = p.sigma_weak / (n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean = {}", mean);
    }

    #[test]
    fn strong_noise_without_dropout_or_jitter_has_configured_stddev() {
        let p = AugmentPolicy {
            dropout_prob: 0.0,
            scale_jitter: 0.0,
            ..AugmentPolicy::default()
        };
        let mut rng = stream(4, Stream::Augment);
        let n = 100_000;
        let mut s2 = 0.0;
        for _ in 0..n {
            let d = strong_aug(&[0.0], &p, &mut rng)[0];
            s2 += d * d;
        }
        let sd = (s2 / n as f64).sqrt();
        assert!((sd - p.sigma_strong).abs() / p.sigma_strong < 0.02, "sd = {}", sd);
    }

    #[test]
    fn strong_dropout_rate_matches_probability() {
        let p = AugmentPolicy {
            sigma_strong: 0.15,
            dropout_prob: 0.3,
            scale_jitter: 0.0,
            ..AugmentPolicy::default()
        };
        let mut rng = stream(5, Stream::Augment);
        let n = 100_000;
        let dropped = (0..n).filter(|_| strong_aug(&[10.0], &p, &mut rng)[0] == 0.0).count();
        let rate = dropped as f64 / n as f64;
        let se = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((rate - 0.3).abs() < 4.0 * se, "rate = {}", rate);
    }

    #[test]
    fn ball_samples_respect_radius() {
        let p = AugmentPolicy::identity(0.25);
        let mut rng = stream(6, Stream::Augment);
        let x = [1.0, -2.0, 0.5];
        let pts = sample_ball(&x, &p, &mut rng, 100);
        assert_eq!(pts.len(), 100);
        for q in &pts {
            assert_eq!(q.len(), 3);
            assert!(l1_distance(q, &x) < 0.25);
        }
    }

    #[test]
    fn tiny_radius_collapses_onto_input() {
        let p = AugmentPolicy::identity(1e-300);
        let mut rng = stream(7, Stream::Augment);
        for q in sample_ball(&[0.75, 3.0], &p, &mut rng, 10) {
            assert_eq!(q, vec![0.75, 3.0]);
        }
    }

    #[test]
    fn policy_validation() {
        assert!(AugmentPolicy::default().validate().is_ok());
        let bad = AugmentPolicy {
            sigma_weak: 0.5,
            sigma_strong: 0.1,
            ..AugmentPolicy::default()
        };
        assert!(bad.validate().is_err());
        assert!(AugmentPolicy::identity(0.0).validate().is_err());
    }
}
