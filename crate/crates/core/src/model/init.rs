use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::pose::{poses_to_realization, Pose};
use super::{ProblemInstance, Realization};
use crate::error::{Error, Result};

/// Draws an initial realization: each robot's translation lies uniformly on
/// the sphere (circle in 2D) of radius `ρ (l − 1) b` around its true
/// translation, and its yaw is uniform in `[0, 2π)`. Measured tilt is used for
/// pitch and roll.
pub fn sample_initialization(inst: &ProblemInstance, rho: f64, seed: u64) -> Result<Realization> {
    let truth = inst.truth().ok_or(Error::MissingGroundTruth)?;
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidScenario(format!(
            "rho must be non-negative, got {rho}"
        )));
    }
    let radius = inst.scale().init_radius(rho);
    let d = inst.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses: Vec<Pose> = truth
        .poses
        .iter()
        .zip(inst.priors())
        .map(|(pose, prior)| {
            let dir = loop {
                let g = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
                let norm = g.norm();
                if norm > 1e-12 {
                    break g / norm;
                }
            };
            let yaw = rng.random_range(0.0..2.0 * PI);
            Pose {
                yaw,
                pitch: prior.pitch,
                roll: prior.roll,
                t: &pose.t + dir * radius,
            }
        })
        .collect();
    Ok(poses_to_realization(&poses, inst.offsets(), None))
}
