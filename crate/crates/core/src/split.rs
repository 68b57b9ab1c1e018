//! Class-wise sub-domain splitting: random, geometric (anchor distance),
//! prediction entropy, and feature clustering.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::alignment::check_simplex;
use crate::dataset::Dataset;
use crate::geometry::{chamfer_distance, icp_score_default, PointCloud};
use crate::net::{forward, ModelParams};
use crate::seeds;
use crate::{Error, Result};

/// Forward passes during splitting run in chunks of this many clouds.
const CHUNK: usize = 64;
const KMEANS_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMethod {
    Random,
    Geometric,
    Entropy,
    Feature,
}

impl SplitMethod {
    pub fn name(self) -> &'static str {
        match self {
            SplitMethod::Random => "random",
            SplitMethod::Geometric => "geometric",
            SplitMethod::Entropy => "entropy",
            SplitMethod::Feature => "feature",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(self, SplitMethod::Entropy | SplitMethod::Feature)
    }
}

impl fmt::Display for SplitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SplitMethod::Random),
            "geometric" => Ok(SplitMethod::Geometric),
            "entropy" => Ok(SplitMethod::Entropy),
            "feature" => Ok(SplitMethod::Feature),
            other => Err(Error::Config(format!("unknown split method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Icp,
    Cd,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Icp => "icp",
            Metric::Cd => "cd",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "icp" => Ok(Metric::Icp),
            "cd" => Ok(Metric::Cd),
            other => Err(Error::Config(format!("unknown split metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    /// Sub-domain of every sample, in dataset order.
    pub assignment: Vec<usize>,
    pub k: usize,
    pub method: SplitMethod,
    /// Set for geometric splits only.
    pub metric: Option<Metric>,
    /// `cell_counts[s][c]`: samples of class `c` in sub-domain `s`.
    pub cell_counts: Vec<Vec<usize>>,
    /// Anchor sample per class, for geometric splits.
    pub anchors: Vec<Option<usize>>,
    /// Per-sample ranking score for score-ranked methods.
    pub scores: Option<Vec<f64>>,
}

impl SplitResult {
    fn build(
        assignment: Vec<usize>,
        labels: &[usize],
        num_classes: usize,
        k: usize,
        method: SplitMethod,
    ) -> SplitResult {
        let mut cell_counts = vec![vec![0; num_classes]; k];
        for (&s, &y) in assignment.iter().zip(labels) {
            cell_counts[s][y] += 1;
        }
        SplitResult {
            assignment,
            k,
            method,
            metric: None,
            cell_counts,
            anchors: vec![None; num_classes],
            scores: None,
        }
    }

    /// Every sample assigned to a sub-domain below `k`, and every
    /// (sub-domain, class) cell non-empty for classes that have samples.
    pub fn validate(&self, labels: &[usize], num_classes: usize) -> Result<()> {
        if self.assignment.len() != labels.len() {
            return Err(Error::Split(format!(
                "{} assignments for {} samples",
                self.assignment.len(),
                labels.len()
            )));
        }
        let mut counts = vec![vec![0usize; num_classes]; self.k];
        for (i, (&s, &y)) in self.assignment.iter().zip(labels).enumerate() {
            if s >= self.k {
                return Err(Error::Split(format!("sample {i} assigned to sub-domain {s} with k={}", self.k)));
            }
            counts[s][y] += 1;
        }
        if counts != self.cell_counts {
            return Err(Error::Split("cell counts do not match the assignment".into()));
        }
        for c in 0..num_classes {
            let present = labels.contains(&c);
            if let Some(s) = (0..self.k).find(|&s| present && counts[s][c] == 0) {
                return Err(Error::Split(format!("sub-domain {s} has no samples of class {c}")));
            }
        }
        if self.method == SplitMethod::Random {
            for c in 0..num_classes {
                let sizes: Vec<usize> = counts.iter().map(|row| row[c]).collect();
                let (lo, hi) = (sizes.iter().min().unwrap_or(&0), sizes.iter().max().unwrap_or(&0));
                if hi - lo > 1 {
                    return Err(Error::Split(format!("class {c} cells are unbalanced: {sizes:?}")));
                }
            }
        }
        Ok(())
    }

    /// One-line description for split files and logs.
    pub fn describe(&self) -> String {
        let mut s = format!("method={} k={}", self.method, self.k);
        if let Some(m) = self.metric {
            s.push_str(&format!(" metric={m}"));
        }
        s
    }
}

/// A classifier the model-based splitters can query.
pub trait SplitModel {
    fn is_trained(&self) -> bool;
    fn predict_proba(&self, clouds: &[&PointCloud]) -> Result<Vec<Vec<f64>>>;
    /// Pre-classifier features, one row per cloud.
    fn features(&self, clouds: &[&PointCloud]) -> Result<Vec<Vec<f64>>>;
}

impl SplitModel for ModelParams {
    fn is_trained(&self) -> bool {
        self.trained
    }

    fn predict_proba(&self, clouds: &[&PointCloud]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(clouds.len());
        for chunk in clouds.chunks(CHUNK) {
            out.extend(forward(self, chunk)?.probs());
        }
        Ok(out)
    }

    fn features(&self, clouds: &[&PointCloud]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(clouds.len());
        for chunk in clouds.chunks(CHUNK) {
            out.extend(forward(self, chunk)?.fh());
        }
        Ok(out)
    }
}

fn check_k(dataset: &Dataset, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Split("k must be at least 1".into()));
    }
    for (c, &m) in dataset.class_counts().iter().enumerate() {
        if m < k {
            return Err(Error::Split(format!(
                "class {} ({}) has {m} samples, fewer than k={k}",
                c, dataset.class_names[c]
            )));
        }
    }
    Ok(())
}

/// Cuts an ordered list into `k` contiguous cells whose sizes differ by at most one.
fn quantile_cells(order: &[usize], k: usize, assignment: &mut [usize]) {
    let m = order.len();
    for (rank, &i) in order.iter().enumerate() {
        assignment[i] = rank * k / m;
    }
}

/// Orders `members` by ascending score, ties by ascending sample index.
fn rank_by(members: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut order = members.to_vec();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

pub fn split_random(dataset: &Dataset, k: usize, seed: u64) -> Result<SplitResult> {
    check_k(dataset, k)?;
    let mut assignment = vec![0; dataset.len()];
    for c in 0..dataset.num_classes() {
        let mut members = dataset.class_indices(c);
        members.shuffle(&mut seeds::rng(seeds::child(seed, c as u64)));
        quantile_cells(&members, k, &mut assignment);
    }
    Ok(SplitResult::build(assignment, &dataset.labels(), dataset.num_classes(), k, SplitMethod::Random))
}

fn geometric_score(anchor: &PointCloud, cloud: &PointCloud, metric: Metric, index: usize) -> Result<f64> {
    match metric {
        Metric::Cd => chamfer_distance(anchor, cloud),
        Metric::Icp => match icp_score_default(anchor, cloud) {
            Ok(r) if !r.degenerate && r.residual.is_finite() => Ok(r.residual),
            Ok(_) | Err(_) => {
                log::warn!("ICP failed on sample {index}; scoring it by Chamfer distance");
                chamfer_distance(anchor, cloud)
            }
        },
    }
}

/// Scores each sample against a seeded per-class anchor and cuts the ranking
/// into `k` equal-size cells.
pub fn split_geometric(dataset: &Dataset, k: usize, metric: Metric, seed: u64) -> Result<SplitResult> {
    check_k(dataset, k)?;
    let n = dataset.len();
    let mut assignment = vec![0; n];
    let mut scores = vec![0.0; n];
    let mut anchors = vec![None; dataset.num_classes()];
    for (c, anchor_slot) in anchors.iter_mut().enumerate() {
        let members = dataset.class_indices(c);
        if members.is_empty() {
            continue;
        }
        let anchor = members[seeds::rng(seeds::child(seed, c as u64)).gen_range(0..members.len())];
        *anchor_slot = Some(anchor);
        let anchor_cloud = &dataset.clouds[anchor];
        let class_scores = members
            .par_iter()
            .map(|&i| geometric_score(anchor_cloud, &dataset.clouds[i], metric, i))
            .collect::<Result<Vec<f64>>>()?;
        for (&i, s) in members.iter().zip(class_scores) {
            scores[i] = s;
        }
        quantile_cells(&rank_by(&members, &scores), k, &mut assignment);
    }
    let mut out = SplitResult::build(assignment, &dataset.labels(), dataset.num_classes(), k, SplitMethod::Geometric);
    out.metric = Some(metric);
    out.anchors = anchors;
    out.scores = Some(scores);
    Ok(out)
}

/// Natural-log entropy with `0 ln 0 = 0`.
pub fn prediction_entropy(probs: &[f64]) -> Result<f64> {
    check_simplex(probs)?;
    Ok(-probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>())
}

fn require_trained(model: &dyn SplitModel, method: SplitMethod) -> Result<()> {
    if model.is_trained() {
        Ok(())
    } else {
        Err(Error::Config(format!("{method} splitting needs a trained model")))
    }
}

/// Ranks each class by prediction entropy and cuts into `k` equal-size cells.
pub fn split_entropy(dataset: &Dataset, model: &dyn SplitModel, k: usize) -> Result<SplitResult> {
    require_trained(model, SplitMethod::Entropy)?;
    check_k(dataset, k)?;
    let refs: Vec<&PointCloud> = dataset.clouds.iter().collect();
    let probs = model.predict_proba(&refs)?;
    if probs.len() != dataset.len() {
        return Err(Error::Contract("model returned the wrong number of rows".into()));
    }
    let scores = probs.iter().map(|p| prediction_entropy(p)).collect::<Result<Vec<f64>>>()?;
    let mut assignment = vec![0; dataset.len()];
    for c in 0..dataset.num_classes() {
        quantile_cells(&rank_by(&dataset.class_indices(c), &scores), k, &mut assignment);
    }
    let mut out = SplitResult::build(assignment, &dataset.labels(), dataset.num_classes(), k, SplitMethod::Entropy);
    out.scores = Some(scores);
    Ok(out)
}

/// Projects rows onto their top-`dims` principal components. Component
/// signs are fixed so the largest-magnitude loading is positive.
pub fn pca_project(rows: &[Vec<f64>], dims: usize) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        return vec![vec![0.0; dims]; n];
    }
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = vec![vec![0.0; dims]; n];
    for (slot, &col) in order.iter().take(dims).enumerate() {
        let mut v = eig.eigenvectors.column(col).into_owned();
        let lead = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            v = -v;
        }
        let proj = &centered * v;
        for i in 0..n {
            out[i][slot] = proj[i];
        }
    }
    out
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means with k-means++ seeding. Returns a label per row, with
/// clusters renumbered by first appearance and none left empty.
pub fn kmeans(rows: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = rows.len();
    if k <= 1 || n == 0 {
        return vec![0; n];
    }
    let mut rng = seeds::rng(seed);
    let mut centers = vec![rows[rng.gen_range(0..n)].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = rows
            .iter()
            .map(|r| centers.iter().map(|c| sq(r, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(rows[pick].clone());
    }

    let nearest = |r: &[f64], centers: &[Vec<f64>]| -> usize {
        let mut best = 0;
        for (j, c) in centers.iter().enumerate() {
            if sq(r, c) < sq(r, &centers[best]) {
                best = j;
            }
        }
        best
    };
    let mut labels: Vec<usize> = rows.iter().map(|r| nearest(r, &centers)).collect();
    for _ in 0..KMEANS_ITERS {
        for (j, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = rows.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(r, _)| r).collect();
            if !members.is_empty() {
                for (t, v) in center.iter_mut().enumerate() {
                    *v = members.iter().map(|r| r[t]).sum::<f64>() / members.len() as f64;
                }
            }
        }
        let next: Vec<usize> = rows.iter().map(|r| nearest(r, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }

    repair_empty(rows, &centers, &mut labels, k);
    let mut remap = vec![usize::MAX; k];
    let mut next_id = 0;
    for l in labels.iter_mut() {
        if remap[*l] == usize::MAX {
            remap[*l] = next_id;
            next_id += 1;
        }
        *l = remap[*l];
    }
    labels
}

/// Moves the sample nearest each empty cluster's center into it, taking only
/// from clusters that keep at least one member.
fn repair_empty(rows: &[Vec<f64>], centers: &[Vec<f64>], labels: &mut [usize], k: usize) {
    for j in 0..k {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        if sizes[j] > 0 {
            continue;
        }
        let donor = (0..rows.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .min_by(|&a, &b| sq(&rows[a], &centers[j]).total_cmp(&sq(&rows[b], &centers[j])).then(a.cmp(&b)));
        if let Some(i) = donor {
            log::warn!("k-means left cluster {j} empty; moving sample {i} into it");
            labels[i] = j;
        }
    }
}

/// Per class: pre-classifier features, PCA to two components, then k-means.
pub fn split_feature_cluster(dataset: &Dataset, model: &dyn SplitModel, k: usize, seed: u64) -> Result<SplitResult> {
    require_trained(model, SplitMethod::Feature)?;
    check_k(dataset, k)?;
    let refs: Vec<&PointCloud> = dataset.clouds.iter().collect();
    let features = model.features(&refs)?;
    if features.len() != dataset.len() {
        return Err(Error::Contract("model returned the wrong number of rows".into()));
    }
    let mut assignment = vec![0; dataset.len()];
    for c in 0..dataset.num_classes() {
        let members = dataset.class_indices(c);
        let rows: Vec<Vec<f64>> = members.iter().map(|&i| features[i].clone()).collect();
        let labels = kmeans(&pca_project(&rows, 2), k, seeds::child(seed, c as u64));
        for (&i, l) in members.iter().zip(labels) {
            assignment[i] = l;
        }
    }
    Ok(SplitResult::build(assignment, &dataset.labels(), dataset.num_classes(), k, SplitMethod::Feature))
}

/// Dispatches to the chosen method. Model-based methods need `model`.
pub fn split_dataset(
    dataset: &Dataset,
    method: SplitMethod,
    k: usize,
    metric: Metric,
    seed: u64,
    model: Option<&dyn SplitModel>,
) -> Result<SplitResult> {
    let need = || model.ok_or_else(|| Error::Config(format!("{method} splitting needs a checkpoint")));
    let out = match method {
        SplitMethod::Random => split_random(dataset, k, seed)?,
        SplitMethod::Geometric => split_geometric(dataset, k, metric, seed)?,
        SplitMethod::Entropy => split_entropy(dataset, need()?, k)?,
        SplitMethod::Feature => split_feature_cluster(dataset, need()?, k, seed)?,
    };
    for (s, row) in out.cell_counts.iter().enumerate() {
        log::info!("sub-domain {s}: class counts {row:?}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(per_class: usize, classes: usize) -> Dataset {
        let mut clouds = Vec::new();
        for c in 0..classes {
            for i in 0..per_class {
                let s = 1.0 + i as f64 * 0.1;
                let pts = vec![[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s + c as f64], [-s, 0.5, 0.2]];
                clouds.push(PointCloud::new(pts, c).unwrap());
            }
        }
        let names = (0..classes).map(|c| format!("c{c}")).collect();
        Dataset::new("t", names, clouds).unwrap()
    }

    struct Scripted {
        probs: Vec<Vec<f64>>,
        trained: bool,
    }

    impl SplitModel for Scripted {
        fn is_trained(&self) -> bool {
            self.trained
        }
        fn predict_proba(&self, _: &[&PointCloud]) -> Result<Vec<Vec<f64>>> {
            Ok(self.probs.clone())
        }
        fn features(&self, _: &[&PointCloud]) -> Result<Vec<Vec<f64>>> {
            Ok(self.probs.clone())
        }
    }

    #[test]
    fn random_split_is_balanced() {
        let ds = dataset(10, 3);
        let r = split_random(&ds, 2, 5).unwrap();
        r.validate(&ds.labels(), 3).unwrap();
        assert!(r.cell_counts.iter().all(|row| row.iter().all(|&n| n == 5)));
        assert_eq!(r, split_random(&ds, 2, 5).unwrap());
        assert!(split_random(&ds, 11, 5).is_err());
    }

    #[test]
    fn entropy_known_values() {
        assert_eq!(prediction_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((prediction_entropy(&[0.1; 10]).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!((prediction_entropy(&[0.5, 0.25, 0.25]).unwrap() - 1.5 * 2f64.ln()).abs() < 1e-12);
        assert!(prediction_entropy(&[0.5, 0.6]).is_err());
    }

    #[test]
    fn confident_samples_land_low() {
        let ds = dataset(6, 1);
        let probs = (0..6)
            .map(|i| if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.5, 0.5] })
            .collect();
        let model = Scripted { probs, trained: true };
        let r = split_entropy(&ds, &model, 2).unwrap();
        assert_eq!(r.assignment, vec![0, 1, 0, 1, 0, 1]);
        let untrained = Scripted {
            probs: vec![],
            trained: false,
        };
        assert!(matches!(split_entropy(&ds, &untrained, 2), Err(Error::Config(_))));
    }

    #[test]
    fn identical_clouds_cut_by_index() {
        let pts = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.3, -0.2, 0.5]];
        let clouds = (0..6).map(|_| PointCloud::new(pts.clone(), 0).unwrap()).collect();
        let ds = Dataset::new("same", vec!["a".into()], clouds).unwrap();
        for metric in [Metric::Cd, Metric::Icp] {
            let r = split_geometric(&ds, 2, metric, 1).unwrap();
            assert!(r.scores.as_ref().unwrap().iter().all(|s| s.abs() < 1e-12));
            assert_eq!(r.assignment, vec![0, 0, 0, 1, 1, 1]);
        }
    }

    #[test]
    fn kmeans_blobs_and_degenerate() {
        let mut rows = Vec::new();
        for i in 0..10 {
            let j = i as f64 * 0.01;
            rows.push(vec![j, -j]);
            rows.push(vec![10.0 + j, 10.0]);
        }
        let labels = kmeans(&rows, 2, 3);
        for (i, l) in labels.iter().enumerate() {
            assert_eq!(*l, i % 2);
        }
        assert_eq!(kmeans(&rows, 1, 3), vec![0; 20]);
        let same = vec![vec![1.0, 1.0]; 4];
        let labels = kmeans(&same, 3, 0);
        let mut used = labels.clone();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used, vec![0, 1, 2]);
    }

    #[test]
    fn pca_keeps_dominant_axis() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 0.01 * (i % 2) as f64, 0.0]).collect();
        let p = pca_project(&rows, 2);
        assert!(p.windows(2).all(|w| w[1][0] > w[0][0]));
    }
}
