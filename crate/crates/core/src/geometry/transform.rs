use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::Rng;

use super::Point;

/// A proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Rotation by `angle` radians about the vertical (z) axis.
    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(
            Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            Vector3::zeros(),
        )
    }

    /// Uniformly random axis, angle in `[-pi, pi)`, translation in `[-1, 1)^3`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let axis = loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break Unit::new_normalize(v);
            }
        };
        let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let rotation = Rotation3::from_axis_angle(&axis, angle).into_inner();
        let translation = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        Self::new(rotation, translation)
    }

    pub fn apply(&self, p: &Point) -> Point {
        let v = self.rotation * Vector3::new(p[0], p[1], p[2]) + self.translation;
        [v.x, v.y, v.z]
    }

    pub fn apply_all(&self, points: &[Point]) -> Vec<Point> {
        points.iter().map(|p| self.apply(p)).collect()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -(rt * self.translation))
    }

    /// Largest deviation of `R Rᵀ` from identity and of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.rotation * self.rotation.transpose() - Matrix3::identity()).abs().max();
        e.max((self.rotation.determinant() - 1.0).abs())
    }

    /// Max-abs distance from the identity motion.
    pub fn distance_from_identity(&self) -> f64 {
        (self.rotation - Matrix3::identity())
            .abs()
            .max()
            .max(self.translation.abs().max())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    #[test]
    fn random_is_proper() {
        let mut rng = seeds::rng(11);
        for _ in 0..20 {
            let t = RigidTransform::random(&mut rng);
            assert!(t.orthonormality_error() < 1e-9);
            assert!(t.inverse().compose(&t).distance_from_identity() < 1e-12);
        }
    }

    #[test]
    fn about_z_keeps_height() {
        let t = RigidTransform::about_z(0.7);
        let p = t.apply(&[1.0, 2.0, 3.0]);
        assert_eq!(p[2], 3.0);
        assert!(((p[0] * p[0] + p[1] * p[1]) - 5.0).abs() < 1e-12);
    }
}
