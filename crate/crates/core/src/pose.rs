//! Probe poses and the six standard probe movements.
//!
//! Probe-local frame: X is lateral (image width), Y is the plane normal
//! (elevation) and Z is depth (image height, into the volume).

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Fan, rock and rotate turn about local X, Y, Z; slide, sweep and press
/// translate along local X, Y, Z. Declaration order is the tie-break order
/// used throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MovementType {
    Fan,
    Rock,
    Rotate,
    Slide,
    Sweep,
    Press,
}

impl MovementType {
    pub const ALL: [MovementType; 6] = [
        MovementType::Fan,
        MovementType::Rock,
        MovementType::Rotate,
        MovementType::Slide,
        MovementType::Sweep,
        MovementType::Press,
    ];

    pub fn is_rotation(self) -> bool {
        matches!(self, MovementType::Fan | MovementType::Rock | MovementType::Rotate)
    }

    /// Local axis index (0 = X, 1 = Y, 2 = Z).
    pub fn axis(self) -> usize {
        match self {
            MovementType::Fan | MovementType::Slide => 0,
            MovementType::Rock | MovementType::Sweep => 1,
            MovementType::Rotate | MovementType::Press => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MovementType::Fan => "fan",
            MovementType::Rock => "rock",
            MovementType::Rotate => "rotate",
            MovementType::Slide => "slide",
            MovementType::Sweep => "sweep",
            MovementType::Press => "press",
        }
    }

    fn unit_axis(self) -> Unit<Vector3<f64>> {
        match self.axis() {
            0 => Vector3::x_axis(),
            1 => Vector3::y_axis(),
            _ => Vector3::z_axis(),
        }
    }
}

impl fmt::Display for MovementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Rigid probe pose: `position` is the top-center of the image plane,
/// `orientation` maps probe-local axes to world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbePose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for ProbePose {
    fn default() -> Self {
        Self::identity()
    }
}

impl ProbePose {
    pub fn identity() -> Self {
        ProbePose {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        ProbePose { position, orientation }
    }

    /// Pose from a position and an intrinsic X-Y-Z Euler triple in degrees.
    pub fn from_euler_deg(position: [f64; 3], euler_deg: [f64; 3]) -> Self {
        let [a, b, c] = euler_deg.map(f64::to_radians);
        ProbePose::new(Vector3::from(position), euler_xyz(a, b, c))
    }

    pub fn local_axis(&self, axis: usize) -> Vector3<f64> {
        let unit = match axis {
            0 => Vector3::x(),
            1 => Vector3::y(),
            _ => Vector3::z(),
        };
        self.orientation * unit
    }

    /// Applies one movement: rotations are intrinsic about the current local
    /// axis, translations move along it.
    pub fn apply(&self, m: MovementType, amount: f64) -> ProbePose {
        if m.is_rotation() {
            let step = UnitQuaternion::from_axis_angle(&m.unit_axis(), amount);
            ProbePose::new(self.position, renormalize(self.orientation * step))
        } else {
            ProbePose::new(self.position + self.local_axis(m.axis()) * amount, self.orientation)
        }
    }

    /// Translation from `self` to `other` in `self`'s local frame.
    pub fn local_translation_to(&self, other: &ProbePose) -> Vector3<f64> {
        self.orientation.inverse_transform_vector(&(other.position - self.position))
    }

    /// Rotation taking `self`'s frame to `other`'s, expressed in `self`'s frame.
    pub fn relative_rotation_to(&self, other: &ProbePose) -> UnitQuaternion<f64> {
        self.orientation.inverse() * other.orientation
    }

    /// Geodesic angle between the two orientations, in radians.
    pub fn angle_to(&self, other: &ProbePose) -> f64 {
        geodesic_angle(&self.orientation, &other.orientation)
    }

    pub fn approx_eq(&self, other: &ProbePose, pos_tol: f64, rot_tol: f64) -> bool {
        (self.position - other.position).norm() <= pos_tol && self.angle_to(other) <= rot_tol
    }
}

/// Free function form of [`ProbePose::apply`].
pub fn apply_movement(pose: &ProbePose, m: MovementType, amount: f64) -> ProbePose {
    pose.apply(m, amount)
}

/// Geodesic distance between two orientations in `[0, π]`; insensitive to
/// quaternion sign and accurate near zero.
pub fn geodesic_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    if a == b {
        return 0.0;
    }
    let d = a.inverse() * b;
    let q = d.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// `Rx(a) * Ry(b) * Rz(c)`.
pub fn euler_xyz(a: f64, b: f64, c: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), a)
        * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), b)
        * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), c)
}

/// Intrinsic X-Y-Z decomposition: returns `(a, b, c)` with `q = Rx(a)·Ry(b)·Rz(c)`,
/// `b ∈ [-π/2, π/2]`.
pub fn to_euler_xyz(q: &UnitQuaternion<f64>) -> [f64; 3] {
    let m = q.to_rotation_matrix();
    let m = m.matrix();
    let sb = m[(0, 2)].clamp(-1.0, 1.0);
    let b = sb.asin();
    if sb.abs() < 1.0 - 1e-12 {
        let a = (-m[(1, 2)]).atan2(m[(2, 2)]);
        let c = (-m[(0, 1)]).atan2(m[(0, 0)]);
        [a, b, c]
    } else {
        // Gimbal lock: only a ± c is determined; put everything into a.
        let a = m[(1, 0)].atan2(m[(1, 1)]);
        [a, b.signum() * FRAC_PI_2, 0.0]
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    /// `[w, x, y, z]`
    orientation: [f64; 4],
}

impl Serialize for ProbePose {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let q = self.orientation.quaternion();
        PoseRepr {
            position: [self.position.x, self.position.y, self.position.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ProbePose {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = PoseRepr::deserialize(deserializer)?;
        let [w, x, y, z] = r.orientation;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(serde::de::Error::custom("orientation quaternion has zero norm"));
        }
        if r.position.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("non-finite position"));
        }
        // Already-unit quaternions pass through bit-exactly so poses round-trip.
        let orientation = if (norm - 1.0).abs() <= 1e-9 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Ok(ProbePose::new(Vector3::from(r.position), orientation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn arb_pose() -> impl Strategy<Value = ProbePose> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            prop::array::uniform3(-PI..PI),
        )
            .prop_map(|(p, e)| ProbePose::new(Vector3::from(p), euler_xyz(e[0], e[1], e[2])))
    }

    #[test]
    fn press_from_identity_moves_along_world_z() {
        let p = ProbePose::identity().apply(MovementType::Press, 0.1);
        assert_eq!(p.position, Vector3::new(0.0, 0.0, 0.1));
        assert_eq!(p.orientation, UnitQuaternion::identity());
    }

    #[test]
    fn euler_round_trip() {
        for &(a, b, c) in &[(0.1, 0.2, 0.3), (-2.0, 1.2, 3.0), (0.0, -0.5, 0.0)] {
            let q = euler_xyz(a, b, c);
            let [x, y, z] = to_euler_xyz(&q);
            assert!((x - a).abs() < 1e-12 && (y - b).abs() < 1e-12 && (z - c).abs() < 1e-12);
        }
    }

    #[test]
    fn gimbal_decomposition_recomposes() {
        let q = euler_xyz(0.3, FRAC_PI_2, 0.2);
        let [a, b, c] = to_euler_xyz(&q);
        assert!(euler_xyz(a, b, c).angle_to(&q) < 1e-7);
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let p = ProbePose::from_euler_deg([0.5, 0.52, 0.1], [10.0, -20.0, 45.0]);
        let json = serde_json::to_string(&p).unwrap();
        let back: ProbePose = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn four_quarter_rotations_return(pose in arb_pose(), m in 0usize..3) {
            let m = MovementType::ALL[m];
            let mut p = pose;
            for _ in 0..4 {
                p = p.apply(m, FRAC_PI_2);
            }
            prop_assert!(p.approx_eq(&pose, 1e-9, 1e-9));
        }

        #[test]
        fn movement_inverse(pose in arb_pose(), m in 0usize..6, a in -2.0f64..2.0) {
            let m = MovementType::ALL[m];
            let back = pose.apply(m, a).apply(m, -a);
            prop_assert!((back.position - pose.position).norm() < 1e-9);
            prop_assert!(back.angle_to(&pose) < 1e-9);
        }

        #[test]
        fn rotation_keeps_unit_norm(pose in arb_pose(), a in -PI..PI) {
            let p = pose.apply(MovementType::Rock, a);
            prop_assert!((p.orientation.quaternion().norm() - 1.0).abs() < 1e-12);
        }
    }
}
