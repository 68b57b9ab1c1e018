//! Point-cloud value types and the geometric distances used for splitting
//! and for sample-level attention weights.

mod augment;
mod chamfer;
mod cloud;
mod icp;
mod transform;

pub use augment::{augment, AugmentConfig};
pub use chamfer::chamfer_distance;
pub use cloud::{normalize, resample, Point, PointCloud};
pub use icp::{icp_score, icp_score_default, mean_squared_residual, IcpResult, ICP_MAX_ITERS, ICP_TOL};
pub use transform::RigidTransform;

#[inline]
pub(crate) fn sq_dist(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}
