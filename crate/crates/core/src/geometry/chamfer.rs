use super::{sq_dist, PointCloud};
use crate::Result;

/// Sum of squared nearest-neighbor distances in both directions.
///
/// No averaging: the value grows with the point count, which is fine for the
/// relative comparisons it feeds (split scores, inverse-distance weights).
pub fn chamfer_distance(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    // PointCloud::new already rejects empty clouds.
    Ok(one_sided(x, y) + one_sided(y, x))
}

fn one_sided(from: &PointCloud, to: &PointCloud) -> f64 {
    let mut total = 0.0;
    for p in from.points() {
        let mut best = f64::INFINITY;
        for q in to.points() {
            let d = sq_dist(p, q);
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    total
}
