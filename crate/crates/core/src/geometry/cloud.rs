use rand::Rng;

use crate::{seeds, Error, Result};

pub type Point = [f64; 3];

/// One 3D object: an unordered set of points plus its class label and,
/// once split, the sub-domain it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    pub label: usize,
    pub source_tag: Option<usize>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, label: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("point cloud has no points".into()));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::Domain(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self {
            points,
            label,
            source_tag: None,
        })
    }

    pub fn with_source_tag(mut self, tag: Option<usize>) -> Self {
        self.source_tag = tag;
        self
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        let mut c = [0.0; 3];
        for p in &self.points {
            c[0] += p[0];
            c[1] += p[1];
            c[2] += p[2];
        }
        let n = self.points.len() as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    pub fn max_norm(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Same label and tag, points replaced. The caller guarantees the new
    /// points are non-empty and finite.
    pub(crate) fn with_points(&self, points: Vec<Point>) -> Self {
        debug_assert!(!points.is_empty());
        Self {
            points,
            label: self.label,
            source_tag: self.source_tag,
        }
    }
}

/// Centers the cloud at the origin and scales it to unit max norm. A cloud
/// whose points all coincide is only centered.
pub fn normalize(cloud: &PointCloud) -> PointCloud {
    let c = cloud.centroid();
    let centered: Vec<Point> = cloud
        .points()
        .iter()
        .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
        .collect();
    let scale = centered
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0, f64::max);
    if scale <= f64::EPSILON {
        log::debug!("normalize: all points coincide, skipping scale step");
        return cloud.with_points(centered);
    }
    let points = centered
        .into_iter()
        .map(|p| [p[0] / scale, p[1] / scale, p[2] / scale])
        .collect();
    cloud.with_points(points)
}

/// Draws exactly `n` points: a seeded subset without replacement when the
/// cloud is larger, every point plus seeded repeats when it is smaller.
pub fn resample(cloud: &PointCloud, n: usize, seed: u64) -> PointCloud {
    let m = cloud.len();
    if m == n || n == 0 {
        return cloud.clone();
    }
    let mut rng = seeds::rng(seed);
    let points = if m > n {
        rand::seq::index::sample(&mut rng, m, n)
            .into_iter()
            .map(|i| cloud.points()[i])
            .collect()
    } else {
        let mut pts = cloud.points().to_vec();
        while pts.len() < n {
            pts.push(cloud.points()[rng.gen_range(0..m)]);
        }
        pts
    };
    cloud.with_points(points)
}
