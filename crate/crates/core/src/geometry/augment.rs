use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{PointCloud, RigidTransform};
use crate::seeds;

/// Training-time augmentation: a random rotation about the gravity (z) axis
/// followed by isotropic Gaussian jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub jitter_sigma: f64,
    /// Maximum absolute z-rotation in radians.
    pub rotation_range: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            jitter_sigma: 0.01,
            rotation_range: std::f64::consts::PI,
        }
    }
}

impl AugmentConfig {
    pub const NONE: AugmentConfig = AugmentConfig {
        jitter_sigma: 0.0,
        rotation_range: 0.0,
    };
}

pub fn augment(cloud: &PointCloud, config: &AugmentConfig, seed: u64) -> PointCloud {
    let mut rng = seeds::rng(seed);
    let mut points = cloud.points().to_vec();
    if config.rotation_range > 0.0 {
        let angle = rng.gen_range(-config.rotation_range..=config.rotation_range);
        points = RigidTransform::about_z(angle).apply_all(&points);
    }
    if config.jitter_sigma > 0.0 {
        let noise = Normal::new(0.0, config.jitter_sigma).expect("positive sigma");
        for p in &mut points {
            for c in p.iter_mut() {
                *c += noise.sample(&mut rng);
            }
        }
    }
    cloud.with_points(points)
}
