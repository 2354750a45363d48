//! The rotated two-moons task shared by the acceptance suite, the examples
//! and the browser demo, with the hyperparameters calibrated for it.

use crate::augment::AugmentPolicy;
use crate::data::{gen_two_moons, Dataset};
use crate::error::Result;
use crate::model::SourceTrainConfig;
use crate::trainer::AdaptConfig;

/// Offset between the source and target generator seeds.
pub const TARGET_SEED_OFFSET: u64 = 1000;

#[derive(Debug, Clone)]
pub struct MoonsTask {
    pub source: Dataset,
    pub target: Dataset,
}

/// Unrotated source moons and a target drawn with a different seed and
/// rotated by `rotation_deg`.
pub fn rotated_moons(n: usize, noise: f64, rotation_deg: f64, seed: u64) -> Result<MoonsTask> {
    let source = gen_two_moons(n, noise, 0.0, seed)?;
    let target = gen_two_moons(n, noise, rotation_deg, seed + TARGET_SEED_OFFSET)?.with_domain("target");
    Ok(MoonsTask { source, target })
}

/// Lighter label smoothing than the default: with two classes a smoothing
/// of 0.1 caps source confidence near 0.95, right at the division threshold.
pub fn source_config() -> SourceTrainConfig {
    SourceTrainConfig {
        label_smoothing: 0.05,
        ..SourceTrainConfig::default()
    }
}

/// Adaptation settings for the moons task. Coordinate dropout is off: with
/// two input coordinates it moves a point onto an axis, far outside its moon.
pub fn adapt_config(seed: u64) -> AdaptConfig {
    AdaptConfig {
        seed,
        lr0: 0.02,
        k: 10,
        tau: 0.1,
        beta: 2.0,
        policy: AugmentPolicy {
            dropout_prob: 0.0,
            sigma_strong: 0.1,
            ..AugmentPolicy::default()
        },
        ..AdaptConfig::default()
    }
}
