//! Point-to-point ICP with SVD (Kabsch) rigid fits.
//!
//! Plain ICP only finds the nearest local minimum, so the search is started
//! from several poses: no motion, centroid alignment, and the four proper
//! sign assignments of the principal-axis frames of both clouds. The best
//! final residual wins; ties keep the earlier start.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{sq_dist, Point, PointCloud, RigidTransform};
use crate::{Error, Result};

pub const ICP_MAX_ITERS: usize = 30;
pub const ICP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Bidirectional mean squared nearest-neighbor distance after alignment.
    pub residual: f64,
    /// Motion taking X onto Y.
    pub transform: RigidTransform,
    pub iterations: usize,
    /// Set when a rank-deficient correspondence forced an identity rotation.
    pub degenerate: bool,
}

pub fn icp_score_default(x: &PointCloud, y: &PointCloud) -> Result<IcpResult> {
    icp_score(x, y, ICP_MAX_ITERS, ICP_TOL)
}

pub fn icp_score(x: &PointCloud, y: &PointCloud, max_iters: usize, tol: f64) -> Result<IcpResult> {
    check_registrable(x, "X")?;
    check_registrable(y, "Y")?;
    let xs = x.points();
    let ys = y.points();

    let mut best = IcpResult {
        residual: mean_squared_residual(xs, ys),
        transform: RigidTransform::identity(),
        iterations: 0,
        degenerate: false,
    };
    for start in starting_poses(xs, ys) {
        let fit = refine(xs, ys, start, max_iters, tol);
        let moved = fit.transform.apply_all(xs);
        let residual = mean_squared_residual(&moved, ys);
        if residual < best.residual {
            best = IcpResult { residual, ..fit };
        }
    }
    Ok(best)
}

/// Chamfer sum divided by the total point count.
pub fn mean_squared_residual(xs: &[Point], ys: &[Point]) -> f64 {
    let forward: f64 = xs.iter().map(|p| nearest(p, ys).1).sum();
    let backward: f64 = ys.iter().map(|p| nearest(p, xs).1).sum();
    (forward + backward) / (xs.len() + ys.len()) as f64
}

fn check_registrable(c: &PointCloud, name: &str) -> Result<()> {
    if c.len() < 3 {
        return Err(Error::Domain(format!("ICP needs >= 3 points, {name} has {}", c.len())));
    }
    let (vals, _) = principal_axes(c.points());
    if vals[1] <= 1e-12 * vals[0].max(1e-300) {
        return Err(Error::Domain(format!("ICP input {name} is collinear")));
    }
    Ok(())
}

fn refine(
    xs: &[Point],
    ys: &[Point],
    start: RigidTransform,
    max_iters: usize,
    tol: f64,
) -> IcpResult {
    let mut current = start;
    let mut prev = f64::INFINITY;
    let mut degenerate = false;
    let mut iterations = 0;
    let mut matched = Vec::with_capacity(xs.len());
    while iterations < max_iters {
        let moved = current.apply_all(xs);
        matched.clear();
        let mut mse = 0.0;
        for p in &moved {
            let (j, d) = nearest(p, ys);
            matched.push(ys[j]);
            mse += d;
        }
        mse /= moved.len() as f64;
        if prev - mse < tol {
            break;
        }
        prev = mse;
        let (step, rank_deficient) = kabsch(&moved, &matched);
        degenerate |= rank_deficient;
        current = step.compose(&current);
        iterations += 1;
    }
    IcpResult {
        residual: prev,
        transform: current,
        iterations,
        degenerate,
    }
}

fn nearest(p: &Point, set: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, q) in set.iter().enumerate() {
        let d = sq_dist(p, q);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn centroid(points: &[Point]) -> Vector3<f64> {
    let mut c = Vector3::zeros();
    for p in points {
        c += Vector3::new(p[0], p[1], p[2]);
    }
    c / points.len() as f64
}

/// Least-squares rotation + translation taking `src[i]` onto `dst[i]`.
/// Returns `true` alongside when the cross-covariance has rank < 2, in
/// which case only the centroids are aligned.
fn kabsch(src: &[Point], dst: &[Point]) -> (RigidTransform, bool) {
    let cs = centroid(src);
    let cd = centroid(dst);
    let mut h = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst) {
        let a = Vector3::new(p[0], p[1], p[2]) - cs;
        let b = Vector3::new(q[0], q[1], q[2]) - cd;
        h += a * b.transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-12 * smax.max(1e-300)).count();
    if rank < 2 {
        return (RigidTransform::new(Matrix3::identity(), cd - cs), true);
    }
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(sv.imin(), sv.imin())] = -1.0;
    }
    let r = v * fix * u.transpose();
    (RigidTransform::new(r, cd - r * cs), false)
}

/// Eigenvalues (descending) and a right-handed matrix of matching eigenvectors.
fn principal_axes(points: &[Point]) -> (Vector3<f64>, Matrix3<f64>) {
    let c = centroid(points);
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = Vector3::new(p[0], p[1], p[2]) - c;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = Vector3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let mut frame = Matrix3::from_columns(&[
        eig.eigenvectors.column(order[0]).into_owned(),
        eig.eigenvectors.column(order[1]).into_owned(),
        eig.eigenvectors.column(order[2]).into_owned(),
    ]);
    if frame.determinant() < 0.0 {
        frame.set_column(2, &(-frame.column(2)));
    }
    (vals, frame)
}

fn starting_poses(xs: &[Point], ys: &[Point]) -> Vec<RigidTransform> {
    let cx = centroid(xs);
    let cy = centroid(ys);
    let (_, fx) = principal_axes(xs);
    let (_, fy) = principal_axes(ys);
    let mut poses = vec![RigidTransform::new(Matrix3::identity(), cy - cx)];
    for signs in [[1.0, 1.0, 1.0], [-1.0, -1.0, 1.0], [-1.0, 1.0, -1.0], [1.0, -1.0, -1.0]] {
        let s = Matrix3::from_diagonal(&Vector3::from(signs));
        let r = fy * s * fx.transpose();
        poses.push(RigidTransform::new(r, cy - r * cx));
    }
    poses
}
