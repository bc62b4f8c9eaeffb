//! Pose recovery from realizations and accuracy metrics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{rotation, MeasurementGraph, Pose, ProblemInstance, Realization, SensorIndex};
use crate::numerics::{eig_sym, SymMatrix};

/// RMSE above which a trial counts as failed, in meters.
pub const FAILURE_THRESHOLD: f64 = 0.6;

/// Smallest admissible `ν̄x² + ν̄y²` when solving for yaw.
const MIN_HORIZONTAL_BASELINE: f64 = 1e-9;

/// Estimated pose of one robot. Pitch and roll are the measured priors.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub t: DVector<f64>,
    pub rotation: DMatrix<f64>,
}

impl PoseEstimate {
    pub fn to_pose(&self) -> Pose {
        Pose {
            yaw: self.yaw,
            pitch: self.pitch,
            roll: self.roll,
            t: self.t.clone(),
        }
    }
}

/// Recovers every robot's yaw and translation from its two sensor positions.
pub fn recover_poses(p: &Realization, inst: &ProblemInstance) -> Result<Vec<PoseEstimate>> {
    let d = inst.d();
    if p.d() != d || p.n_robots() != inst.n() {
        return Err(Error::Dimension(format!(
            "realization is {}x{} for an instance with d = {d}, n = {}",
            p.d(),
            2 * p.n_robots(),
            inst.n()
        )));
    }
    (0..inst.n())
        .map(|i| {
            let offs = &inst.offsets()[i];
            let (pitch, roll) = if d == 3 {
                (inst.priors()[i].pitch, inst.priors()[i].roll)
            } else {
                (0.0, 0.0)
            };
            let tilt = rotation(d, 0.0, pitch, roll);
            let nb = &tilt * offs.baseline();
            let den = nb[0] * nb[0] + nb[1] * nb[1];
            if den <= MIN_HORIZONTAL_BASELINE {
                return Err(Error::DegenerateOffsets {
                    robot: i,
                    norm_sq: den,
                });
            }
            let delta = p.sensor(SensorIndex::new(i, 0)) - p.sensor(SensorIndex::new(i, 1));
            let sin = (nb[0] * delta[1] - nb[1] * delta[0]) / den;
            let cos = (nb[0] * delta[0] + nb[1] * delta[1]) / den;
            let yaw = sin.atan2(cos);
            let r = rotation(d, yaw, pitch, roll);
            let t = (0..2)
                .map(|u| p.sensor(SensorIndex::new(i, u)) - &r * offs.side(u))
                .fold(DVector::zeros(d), |acc, x| acc + x)
                * 0.5;
            Ok(PoseEstimate {
                yaw,
                pitch,
                roll,
                t,
                rotation: r,
            })
        })
        .collect()
}

/// Which robot pairs enter the relative RMSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairSet {
    /// Each robot against its measurement neighbors.
    #[default]
    Neighbors,
    /// Each robot against every other robot.
    AllPairs,
}

/// Body-frame relative translation RMSE. For each robot, the RMSE of
/// `R̂ᵢᵀ(t̂ⱼ − t̂ᵢ) − Rᵢᵀ(tⱼ − tᵢ)` over its partners; the result is the mean
/// over robots.
pub fn rmse_body(
    estimates: &[PoseEstimate],
    truth: &[Pose],
    graph: &MeasurementGraph,
    pairs: PairSet,
) -> Result<f64> {
    let n = estimates.len();
    if truth.len() != n || graph.n() != n {
        return Err(Error::Dimension(
            "estimate, truth and graph sizes differ".into(),
        ));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let true_rot: Vec<DMatrix<f64>> = truth.iter().map(Pose::rotation).collect();
    let mut total = 0.0;
    for i in 0..n {
        let partners: Vec<usize> = match pairs {
            PairSet::Neighbors => graph.neighbors(i).iter().map(|&(j, _)| j).collect(),
            PairSet::AllPairs => (0..n).filter(|&j| j != i).collect(),
        };
        if partners.is_empty() {
            return Err(Error::EmptyNeighborhood { robot: i });
        }
        let ri_hat_t = estimates[i].rotation.transpose();
        let ri_t = true_rot[i].transpose();
        let sq: f64 = partners
            .iter()
            .map(|&j| {
                let est = &ri_hat_t * (&estimates[j].t - &estimates[i].t);
                let tru = &ri_t * (&truth[j].t - &truth[i].t);
                (est - tru).norm_squared()
            })
            .sum();
        total += (sq / partners.len() as f64).sqrt();
    }
    Ok(total / n as f64)
}

/// Absolute RMSE of the robots' sensor midpoints, with no alignment.
pub fn rmse_a(p: &Realization, truth: &Realization) -> Result<f64> {
    if p.matrix().shape() != truth.matrix().shape() {
        return Err(Error::Dimension("realizations differ in shape".into()));
    }
    let n = p.n_robots();
    if n == 0 {
        return Ok(0.0);
    }
    let sq: f64 = (0..n)
        .map(|i| {
            let mid =
                |q: &Realization| (q.matrix().column(2 * i) + q.matrix().column(2 * i + 1)) * 0.5;
            (mid(p) - mid(truth)).norm_squared()
        })
        .sum();
    Ok((sq / n as f64).sqrt())
}

/// Fraction of values strictly above `threshold`. Empty input gives 0.
pub fn failure_rate(rmse: &[f64], threshold: f64) -> f64 {
    if rmse.is_empty() {
        return 0.0;
    }
    rmse.iter().filter(|&&x| x > threshold).count() as f64 / rmse.len() as f64
}

/// Summary of accuracy over a set of trials.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub rmse: f64,
    pub rmse_a: f64,
    pub fr: f64,
}

/// Rank-d factor of a Gram-like matrix from its `d` leading eigenpairs.
/// Negative retained eigenvalues are clamped to zero.
pub fn rankd_project(x: &SymMatrix, d: usize) -> Realization {
    let m = x.order();
    let (vals, vecs) = eig_sym(x);
    let mut p = DMatrix::zeros(d, m);
    for k in 0..d.min(m) {
        let s = vals[k].max(0.0).sqrt();
        for c in 0..m {
            p[(k, c)] = s * vecs[(c, k)];
        }
    }
    Realization::new(p).expect("finite eigen factors")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        generate_scenario, poses_to_realization, BodyOffset, Lattice, ScenarioSpec, Shape,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn small_instance(d3: bool) -> ProblemInstance {
        let lattice = if d3 {
            Lattice::Cubic {
                nx: 2,
                ny: 2,
                nz: 2,
            }
        } else {
            Lattice::Square { nx: 3, ny: 2 }
        };
        generate_scenario(&ScenarioSpec::new(Shape::Custom(lattice))).unwrap()
    }

    fn realization_from_diff(diff: [f64; 3]) -> Realization {
        let m = DMatrix::from_column_slice(3, 2, &[diff[0], diff[1], diff[2], 0.0, 0.0, 0.0]);
        Realization::new(m).unwrap()
    }

    fn single_robot_3d() -> ProblemInstance {
        let inst = small_instance(true);
        let g = MeasurementGraph::new(1, vec![]).unwrap();
        ProblemInstance::new(
            3,
            g,
            vec![BodyOffset::standard(3)],
            vec![Default::default()],
            crate::model::AnchorSet::empty(1),
            None,
            inst.scale(),
        )
        .unwrap()
    }

    #[test]
    fn yaw_from_sensor_difference() {
        let inst = single_robot_3d();
        let est = recover_poses(&realization_from_diff([0.0, 0.7, 0.0]), &inst).unwrap();
        assert!(est[0].yaw.abs() < 1e-15);
        let est = recover_poses(&realization_from_diff([-0.7, 0.0, 0.0]), &inst).unwrap();
        assert!((est[0].yaw - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn round_trip_random_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d3 in [false, true] {
            let inst = small_instance(d3);
            let d = inst.d();
            let truth = inst.truth().unwrap();
            for _ in 0..20 {
                let poses: Vec<Pose> = truth
                    .poses
                    .iter()
                    .zip(inst.priors())
                    .map(|(p, pr)| Pose {
                        yaw: rng.random_range(-PI..PI),
                        pitch: pr.pitch,
                        roll: pr.roll,
                        t: DVector::from_fn(d, |_, _| rng.random_range(-20.0..20.0)) + &p.t,
                    })
                    .collect();
                let p = poses_to_realization(&poses, inst.offsets(), None);
                let est = recover_poses(&p, &inst).unwrap();
                for (e, t) in est.iter().zip(&poses) {
                    let dyaw = (e.yaw - t.yaw + PI).rem_euclid(2.0 * PI) - PI;
                    assert!(dyaw.abs() < 1e-9);
                    assert!((&e.t - &t.t).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn degenerate_offsets_are_rejected() {
        let inst = single_robot_3d();
        let mut offs = BodyOffset::standard(3);
        offs.nu0[1] = 0.0;
        offs.nu0[2] = 0.35;
        offs.nu1[1] = 0.0;
        offs.nu1[2] = -0.35;
        let bad = ProblemInstance::new(
            3,
            inst.graph().clone(),
            vec![offs],
            inst.priors().to_vec(),
            inst.anchors().clone(),
            None,
            inst.scale(),
        )
        .unwrap();
        assert!(matches!(
            recover_poses(&realization_from_diff([0.0, 0.0, 0.7]), &bad),
            Err(Error::DegenerateOffsets { robot: 0, .. })
        ));
    }

    #[test]
    fn rmse_zero_for_truth_and_gauge() {
        let inst = small_instance(true);
        let truth = inst.truth().unwrap();
        let est = recover_poses(&truth.realization, &inst).unwrap();
        let r = rmse_body(&est, &truth.poses, inst.graph(), PairSet::Neighbors).unwrap();
        assert!(r < 1e-12);

        let g = rotation(3, 0.9, 0.0, 0.0);
        let shift = DVector::from_vec(vec![5.0, -2.0, 1.0]);
        let moved = Realization::new(DMatrix::from_fn(3, 2 * inst.n(), |r, c| {
            (&g * truth.realization.matrix().column(c))[r] + shift[r]
        }))
        .unwrap();
        let est = recover_poses(&moved, &inst).unwrap();
        let r = rmse_body(&est, &truth.poses, inst.graph(), PairSet::AllPairs).unwrap();
        assert!(r < 1e-9);
    }

    #[test]
    fn injected_error_along_body_x() {
        let d = 2;
        let truth = vec![
            Pose::planar(0.4, DVector::from_vec(vec![0.0, 0.0])),
            Pose::planar(1.3, DVector::from_vec(vec![3.0, 1.0])),
        ];
        let mut est: Vec<PoseEstimate> = truth
            .iter()
            .map(|p| PoseEstimate {
                yaw: p.yaw,
                pitch: 0.0,
                roll: 0.0,
                t: p.t.clone(),
                rotation: rotation(d, p.yaw, 0.0, 0.0),
            })
            .collect();
        // Move robot 1 by 0.3 m along robot 0's body x-axis.
        est[1].t += truth[0].rotation().column(0) * 0.3;
        let m = |a, b| crate::model::DistanceMeasurement {
            a,
            b,
            q_tilde: 1.0,
            sigma_q: 1.0,
            d_tilde: 1.0,
        };
        let s = SensorIndex::new;
        let edge = crate::model::Edge {
            i: 0,
            j: 1,
            meas: [
                m(s(0, 0), s(1, 0)),
                m(s(0, 0), s(1, 1)),
                m(s(0, 1), s(1, 0)),
                m(s(0, 1), s(1, 1)),
            ],
        };
        let g = MeasurementGraph::new(2, vec![edge]).unwrap();
        let r = rmse_body(&est, &truth, &g, PairSet::Neighbors).unwrap();
        assert!((r - 0.3).abs() < 1e-12);
    }

    #[test]
    fn isolated_robot_has_no_neighbors() {
        let t = vec![Pose::planar(0.0, DVector::zeros(2)); 2];
        let est: Vec<_> = t
            .iter()
            .map(|p| PoseEstimate {
                yaw: 0.0,
                pitch: 0.0,
                roll: 0.0,
                t: p.t.clone(),
                rotation: DMatrix::identity(2, 2),
            })
            .collect();
        let g = MeasurementGraph::new(2, vec![]).unwrap();
        assert!(matches!(
            rmse_body(&est, &t, &g, PairSet::Neighbors),
            Err(Error::EmptyNeighborhood { robot: 0 })
        ));
    }

    #[test]
    fn failure_rate_examples() {
        assert_eq!(failure_rate(&[0.2, 0.3], FAILURE_THRESHOLD), 0.0);
        assert_eq!(failure_rate(&[0.2, 0.9], FAILURE_THRESHOLD), 0.5);
        let v: Vec<f64> = (0..100).map(|k| if k < 7 { 1.0 } else { 0.1 }).collect();
        assert!((failure_rate(&v, FAILURE_THRESHOLD) - 0.07).abs() < 1e-15);
        assert_eq!(failure_rate(&[0.6], FAILURE_THRESHOLD), 0.0);
    }

    #[test]
    fn rankd_recovers_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = DMatrix::from_fn(3, 10, |_, _| rng.random_range(-5.0..5.0));
        let x = SymMatrix::gram(&p);
        let q = rankd_project(&x, 3);
        assert!((q.matrix().transpose() * q.matrix() - x.as_matrix()).norm() <= 1e-8);
    }

    #[test]
    fn rankd_drops_extra_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = DMatrix::from_fn(2, 8, |_, _| rng.random_range(-5.0..5.0));
        let w = DVector::from_fn(8, |_, _| rng.random_range(-0.3..0.3));
        let x = SymMatrix::new(p.transpose() * &p + &w * w.transpose()).unwrap();
        let (vals, _) = eig_sym(&x);
        let q = rankd_project(&x, 2);
        let err = (q.matrix().transpose() * q.matrix() - x.as_matrix()).norm();
        let dropped: f64 = vals[2..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((err - dropped).abs() < 1e-9);
    }

    #[test]
    fn rmse_a_measures_midpoints() {
        let inst = small_instance(false);
        let truth = &inst.truth().unwrap().realization;
        let mut moved = truth.clone();
        moved.matrix_mut().row_mut(0).add_scalar_mut(0.25);
        assert!((rmse_a(&moved, truth).unwrap() - 0.25).abs() < 1e-12);
    }
}
