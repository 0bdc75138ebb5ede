//! Visual preliminary prediction: likelihood scoring and the three-way
//! Static / Pushable / Override gate.
//!
//! The likelihood grows with the robot's capability and shrinks with
//! obstacle volume, shape irregularity, and the displacement/normal angle.
//! Obstacles whose features could not be characterized are conservatively
//! reported Static and never scored.

use serde::{Deserialize, Serialize};

use crate::features::{ObstacleFeatures, SHAPE_FLOOR};

/// Reference force for the capability score: the empirical push-force limit
/// beyond which the platform cannot move an obstacle.
pub const REFERENCE_FORCE: f64 = 20.0;
/// Reference volume making the likelihood dimensionless.
pub const REFERENCE_VOLUME: f64 = 1.0;

/// Physical capability profile of the robot platform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotCapability {
    /// Body length, width, height in meters.
    pub body_dims: [f64; 3],
    /// Maximum hoof elevation in meters.
    pub max_hoof_elevation: f64,
    /// Step length in meters.
    pub step_length: f64,
    /// Inter-foot distance in meters.
    pub interfoot_distance: f64,
    /// Maximum force the arm can apply, in Newtons.
    pub max_push_force: f64,
    /// Dimensionless scalar used by the likelihood. Defaults to
    /// `max_push_force / REFERENCE_FORCE * REFERENCE_VOLUME`; override to
    /// recalibrate the gate for a different obstacle scale.
    pub capability_score: f64,
}

impl RobotCapability {
    /// Profile with the capability score derived from the push force.
    pub fn with_push_force(max_push_force: f64) -> Self {
        Self {
            max_push_force,
            capability_score: max_push_force / REFERENCE_FORCE * REFERENCE_VOLUME,
            ..Self::default()
        }
    }
}

impl Default for RobotCapability {
    fn default() -> Self {
        // Quadruped-with-arm desk profile; the score normalizes a 1 m^3
        // unit-shape obstacle at the force limit to likelihood 1.
        Self {
            body_dims: [0.70, 0.31, 0.40],
            max_hoof_elevation: 0.35,
            step_length: 0.40,
            interfoot_distance: 0.31,
            max_push_force: 20.0,
            capability_score: 1.0,
        }
    }
}

/// Three-way visual gate outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VppClass {
    /// Too large to be pushed.
    Static,
    /// Likely to be pushed; forwarded to affordance estimation.
    Pushable,
    /// Too small to be avoided; drive over it.
    Override,
}

/// Likelihood score and class for one obstacle. `g` is absent when the
/// obstacle could not be scored (degenerate features).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VppVerdict {
    pub g: Option<f64>,
    pub class: VppClass,
}

/// Likelihood g = score / (V * max(shape, floor)) * (1 - theta/pi).
///
/// Returns `None` for obstacles that cannot be scored: zero volume,
/// missing theta, or flagged features; the caller reports those Static.
pub fn likelihood(features: &ObstacleFeatures, capability: &RobotCapability) -> Option<f64> {
    if features.flags.any() || features.volume <= 0.0 {
        return None;
    }
    let theta = features.theta?;
    let shape = features.shape.max(SHAPE_FLOOR);
    Some(
        capability.capability_score / (features.volume * shape)
            * (1.0 - theta / std::f64::consts::PI),
    )
}

/// Eq-style gate: Static for g <= t_low, Override for g >= t_high,
/// Pushable strictly between.
pub fn classify(g: f64, t_low: f64, t_high: f64) -> VppClass {
    assert!(t_low < t_high, "thresholds must satisfy t_low < t_high");
    if g <= t_low {
        VppClass::Static
    } else if g >= t_high {
        VppClass::Override
    } else {
        VppClass::Pushable
    }
}

/// Score and classify one obstacle; unscorable obstacles come back Static.
pub fn assess(
    features: &ObstacleFeatures,
    capability: &RobotCapability,
    t_low: f64,
    t_high: f64,
) -> VppVerdict {
    match likelihood(features, capability) {
        Some(g) => VppVerdict {
            g: Some(g),
            class: classify(g, t_low, t_high),
        },
        None => VppVerdict {
            g: None,
            class: VppClass::Static,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureFlags;
    use crate::pointcloud::Point3;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn features(volume: f64, shape: f64, theta: f64) -> ObstacleFeatures {
        ObstacleFeatures {
            centroid: Point3::new(2.0, 0.0, 0.2),
            box_dims: [volume.cbrt(); 3],
            volume,
            shape,
            mean_normal: Some([0.0, 0.0, 1.0]),
            theta: Some(theta),
            surface_count: 10,
            flags: FeatureFlags::default(),
        }
    }

    fn capability(score: f64) -> RobotCapability {
        RobotCapability {
            capability_score: score,
            ..RobotCapability::default()
        }
    }

    #[test]
    fn unit_case_scores_one() {
        let g = likelihood(&features(1.0, 1.0, 0.0), &capability(1.0)).unwrap();
        assert_relative_eq!(g, 1.0);
    }

    #[test]
    fn theta_pi_zeroes_the_score() {
        let g = likelihood(&features(0.3, 2.0, std::f64::consts::PI), &capability(5.0)).unwrap();
        assert_relative_eq!(g, 0.0);
    }

    #[test]
    fn hand_evaluated_formula() {
        let g = likelihood(
            &features(0.5, 2.0, std::f64::consts::FRAC_PI_2),
            &capability(2.0),
        )
        .unwrap();
        assert_relative_eq!(g, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_volume_and_flags_are_unscored_static() {
        let zero_vol = features(0.0, 1.0, 0.0);
        assert!(likelihood(&zero_vol, &capability(1.0)).is_none());
        let verdict = assess(&zero_vol, &capability(1.0), 0.3, 0.8);
        assert_eq!(verdict.class, VppClass::Static);
        assert!(verdict.g.is_none());

        let mut flagged = features(1.0, 1.0, 0.0);
        flagged.flags.empty_patch = true;
        assert_eq!(
            assess(&flagged, &capability(1.0), 0.3, 0.8).class,
            VppClass::Static
        );
    }

    #[test]
    fn boundaries_match_gate_structure() {
        assert_eq!(classify(0.3, 0.3, 0.8), VppClass::Static);
        assert_eq!(classify(0.5, 0.3, 0.8), VppClass::Pushable);
        assert_eq!(classify(0.8, 0.3, 0.8), VppClass::Override);
        assert_eq!(classify(0.0, 0.3, 0.8), VppClass::Static);
        assert_eq!(classify(100.0, 0.3, 0.8), VppClass::Override);
    }

    fn class_rank(c: VppClass) -> i32 {
        match c {
            VppClass::Static => 0,
            VppClass::Pushable => 1,
            VppClass::Override => 2,
        }
    }

    #[test]
    fn likelihood_monotonicities() {
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        for _ in 0..500 {
            let v = rng.gen_range(0.01..2.0);
            let e = rng.gen_range(SHAPE_FLOOR..2.0);
            let t = rng.gen_range(0.0..std::f64::consts::PI - 0.01);
            let s = rng.gen_range(0.1..3.0);
            let g = likelihood(&features(v, e, t), &capability(s)).unwrap();
            let dg_v = likelihood(&features(v * 1.1, e, t), &capability(s)).unwrap();
            let dg_e = likelihood(&features(v, e * 1.1, t), &capability(s)).unwrap();
            let dg_t = likelihood(&features(v, e, t + 0.01), &capability(s)).unwrap();
            let dg_s = likelihood(&features(v, e, t), &capability(s * 1.1)).unwrap();
            assert!(dg_v < g && dg_e < g && dg_t < g && dg_s > g);

            // Growing volume can only move the class toward Static.
            let c1 = class_rank(classify(g, 0.3, 0.8));
            let c2 = class_rank(classify(dg_v, 0.3, 0.8));
            assert!(c2 <= c1);
        }
    }
}
