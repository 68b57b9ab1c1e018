use rayon::prelude::*;

use super::divergence::js_distance;
use crate::geometry::{chamfer_distance, PointCloud};
use crate::{Error, Result};

/// Per-pair attention weights between two sub-domain halves of a batch.
/// `geo` and `sem` are mean-1 normalized; `raw_*` keep the distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SdaWeights {
    pub geo: Vec<Vec<f64>>,
    pub sem: Vec<Vec<f64>>,
    pub raw_geo: Vec<Vec<f64>>,
    pub raw_sem: Vec<Vec<f64>>,
    pub eps: f64,
}

impl SdaWeights {
    /// All-ones weights, equivalent to no attention.
    pub fn uniform(ns: usize, nt: usize) -> Self {
        Self {
            geo: vec![vec![1.0; nt]; ns],
            sem: vec![vec![1.0; nt]; ns],
            raw_geo: vec![vec![0.0; nt]; ns],
            raw_sem: vec![vec![0.0; nt]; ns],
            eps: 0.0,
        }
    }
}

fn mean_one(m: &[Vec<f64>], eps: f64) -> Vec<Vec<f64>> {
    let inv: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|d| 1.0 / (d + eps)).collect()).collect();
    let count = inv.iter().map(Vec::len).sum::<usize>() as f64;
    let mean = inv.iter().flatten().sum::<f64>() / count;
    inv.into_iter()
        .map(|r| r.into_iter().map(|w| w / mean).collect())
        .collect()
}

/// `ω_geo[i][j] = 1 / (chamfer(x_i, y_j) + eps)` and
/// `ω_sem[i][j] = 1 / (js(p_i, p_j) + eps)`, each rescaled to mean one.
pub fn sda_weights(
    clouds_s: &[&PointCloud],
    clouds_t: &[&PointCloud],
    probs_s: &[Vec<f64>],
    probs_t: &[Vec<f64>],
    eps: f64,
    kl_eps: f64,
) -> Result<SdaWeights> {
    if clouds_s.is_empty() || clouds_t.is_empty() {
        return Err(Error::Domain("attention weights need non-empty halves".into()));
    }
    if clouds_s.len() != probs_s.len() || clouds_t.len() != probs_t.len() {
        return Err(Error::Contract("clouds and probability rows are not aligned".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("distance clamp must be positive, got {eps}")));
    }
    let raw_geo = clouds_s
        .par_iter()
        .map(|x| clouds_t.iter().map(|y| chamfer_distance(x, y)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    let raw_sem = probs_s
        .iter()
        .map(|p| probs_t.iter().map(|r| js_distance(p, r, kl_eps)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(SdaWeights {
        geo: mean_one(&raw_geo, eps),
        sem: mean_one(&raw_sem, eps),
        raw_geo,
        raw_sem,
        eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(offset: f64) -> PointCloud {
        PointCloud::new(
            vec![[offset, 0.0, 0.0], [offset + 1.0, 0.5, 0.0], [offset, 1.0, 0.25]],
            0,
        )
        .unwrap()
    }

    #[test]
    fn identical_pair_is_clamped() {
        let a = cloud(0.0);
        let b = cloud(3.0);
        let p = vec![vec![0.5, 0.5]];
        let w = sda_weights(&[&a], &[&a, &b], &p, &[p[0].clone(), p[0].clone()], 1e-3, 1e-6).unwrap();
        assert_eq!(w.raw_geo[0][0], 0.0);
        let inv = [1.0 / 1e-3, 1.0 / (w.raw_geo[0][1] + 1e-3)];
        let mean = 0.5 * (inv[0] + inv[1]);
        assert!((w.geo[0][0] - inv[0] / mean).abs() < 1e-12);
        assert!(w.geo[0][0] > w.geo[0][1]);
        assert!(w.sem.iter().flatten().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn outlier_gets_minimum_weight() {
        let s = [cloud(0.0), cloud(0.2)];
        let t = [cloud(0.1), cloud(9.0)];
        let ps = vec![vec![0.9, 0.1], vec![0.8, 0.2]];
        let pt = vec![vec![0.85, 0.15], vec![0.1, 0.9]];
        let w = sda_weights(&[&s[0], &s[1]], &[&t[0], &t[1]], &ps, &pt, 1e-3, 1e-6).unwrap();
        let mean: f64 = w.geo.iter().flatten().sum::<f64>() / 4.0;
        assert!((mean - 1.0).abs() < 1e-12);
        let min_geo = w.geo.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_geo == w.geo[0][1] || min_geo == w.geo[1][1]);
        assert!(w.sem[0][1] < w.sem[0][0]);
    }
}
