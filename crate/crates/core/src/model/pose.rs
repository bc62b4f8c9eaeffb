use nalgebra::{DMatrix, DVector, Vector3};

use super::{AttitudePrior, BodyOffset, Realization, SensorIndex};

/// Robot pose. `pitch` and `roll` are ignored in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub t: DVector<f64>,
}

impl Pose {
    pub fn planar(yaw: f64, t: DVector<f64>) -> Self {
        Self {
            yaw,
            pitch: 0.0,
            roll: 0.0,
            t,
        }
    }

    pub fn d(&self) -> usize {
        self.t.len()
    }

    pub fn rotation(&self) -> DMatrix<f64> {
        rotation(self.d(), self.yaw, self.pitch, self.roll)
    }
}

/// `R = Rz(yaw) · Ry(pitch) · Rx(roll)` in 3D, a plain planar rotation in 2D.
pub fn rotation(d: usize, yaw: f64, pitch: f64, roll: f64) -> DMatrix<f64> {
    let (sy, cy) = yaw.sin_cos();
    if d == 2 {
        return DMatrix::from_row_slice(2, 2, &[cy, -sy, sy, cy]);
    }
    assert_eq!(d, 3, "rotation is defined for d = 2 or 3");
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let rz = DMatrix::from_row_slice(3, 3, &[cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0]);
    let ry = DMatrix::from_row_slice(3, 3, &[cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp]);
    let rx = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr]);
    rz * ry * rx
}

/// Bottom row of `Ry(pitch) · Rx(roll)`, which is also the bottom row of the
/// full rotation since yaw leaves z untouched.
pub fn tilt_row(pitch: f64, roll: f64) -> DVector<f64> {
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    DVector::from_column_slice(Vector3::new(-sp, cp * sr, cp * cr).as_slice())
}

/// Places every sensor at `R_i ν_i^u + t_i`. In 3D the pose's own pitch and
/// roll are used; `priors` override them when given.
pub fn poses_to_realization(
    poses: &[Pose],
    offsets: &[BodyOffset],
    priors: Option<&[AttitudePrior]>,
) -> Realization {
    let n = poses.len();
    let d = poses.first().map_or(2, Pose::d);
    let mut p = Realization::zeros(d, n);
    for (i, pose) in poses.iter().enumerate() {
        let (pitch, roll) = match priors {
            Some(pr) => (pr[i].pitch, pr[i].roll),
            None => (pose.pitch, pose.roll),
        };
        let r = rotation(d, pose.yaw, pitch, roll);
        for u in 0..2 {
            let x = &r * offsets[i].side(u) + &pose.t;
            p.set_sensor(SensorIndex::new(i, u), &x);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_pose_places_offset() {
        let pose = Pose::planar(0.0, DVector::zeros(3));
        let p = poses_to_realization(&[pose], &[BodyOffset::standard(3)], None);
        assert_eq!(
            p.sensor(SensorIndex::new(0, 0)).as_slice(),
            &[0.0, 0.35, 0.0]
        );
    }

    #[test]
    fn quarter_turn() {
        let pose = Pose::planar(FRAC_PI_2, DVector::zeros(3));
        let p = poses_to_realization(&[pose], &[BodyOffset::standard(3)], None);
        let s = p.sensor(SensorIndex::new(0, 0));
        assert!((s[0] + 0.35).abs() < 1e-15 && s[1].abs() < 1e-15 && s[2].abs() < 1e-15);
    }

    #[test]
    fn rotation_is_orthonormal() {
        let r = rotation(3, 1.1, 0.07, -0.05);
        assert!((r.transpose() * &r - DMatrix::identity(3, 3)).norm() < 1e-14);
        assert!((r.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tilt_row_matches_rotation() {
        let r = rotation(3, 2.3, 0.08, -0.04);
        let z = tilt_row(0.08, -0.04);
        for k in 0..3 {
            assert!((r[(2, k)] - z[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn pitch_turns_about_y() {
        // A pure pitch keeps the y axis fixed and tips x toward −z.
        let r = rotation(3, 0.0, 0.1, 0.0);
        assert!((r[(1, 1)] - 1.0).abs() < 1e-15);
        assert!((r[(2, 0)] + 0.1f64.sin()).abs() < 1e-15);
    }
}
