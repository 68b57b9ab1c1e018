//! Datasets in memory and on disk, per-class counts, and sub-domain batch
//! sampling.
//!
//! On-disk layout:
//! - point cloud: `SUGDG-PC v1` header, then one `x y z` line per point;
//! - manifest: `SUGDG-MANIFEST v1` header, then a JSON document
//!   `{"class_names": [...], "samples": [{"path", "label", "subdomain"?}]}`
//!   with paths relative to the manifest's directory;
//! - split: `SUGDG-SPLIT v1` header, then `sample_index subdomain_index` lines
//!   (lines starting with `#` carry metadata and are ignored on read).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize, Point, PointCloud};
use crate::{seeds, Error, Result};

pub const POINT_CLOUD_HEADER: &str = "SUGDG-PC v1";
pub const MANIFEST_HEADER: &str = "SUGDG-MANIFEST v1";
pub const SPLIT_HEADER: &str = "SUGDG-SPLIT v1";

/// An indexed, labeled collection of point clouds. A cloud's `source_tag`
/// holds its sub-domain once the dataset has been split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub class_names: Vec<String>,
    pub clouds: Vec<PointCloud>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, class_names: Vec<String>, clouds: Vec<PointCloud>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Config("dataset has no classes".into()));
        }
        if let Some((i, c)) = clouds.iter().enumerate().find(|(_, c)| c.label >= class_names.len()) {
            return Err(Error::Domain(format!(
                "sample {i}: label {} out of range for {} classes",
                c.label,
                class_names.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            class_names,
            clouds,
        })
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.clouds.iter().map(|c| c.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(self)
    }

    /// Sample indices of class `c`, ascending.
    pub fn class_indices(&self, c: usize) -> Vec<usize> {
        self.clouds
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == c)
            .map(|(i, _)| i)
            .collect()
    }

    /// The sub-domain of every sample, if every sample carries one.
    pub fn subdomains(&self) -> Option<Vec<usize>> {
        self.clouds.iter().map(|c| c.source_tag).collect()
    }

    /// Copy of the dataset with `assignment[i]` as the sub-domain of sample `i`.
    pub fn with_assignment(&self, assignment: &[usize]) -> Result<Dataset> {
        if assignment.len() != self.len() {
            return Err(Error::Contract(format!(
                "assignment covers {} samples, dataset has {}",
                assignment.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        for (c, &s) in out.clouds.iter_mut().zip(assignment) {
            c.source_tag = Some(s);
        }
        Ok(out)
    }
}

/// Exact per-class histogram; classes with no samples count zero.
pub fn class_counts(dataset: &Dataset) -> Vec<usize> {
    let mut counts = vec![0; dataset.num_classes()];
    for c in &dataset.clouds {
        counts[c.label] += 1;
    }
    counts
}

/// Checks that sub-domain ids form `0..k` and every sub-domain holds every
/// class that is present in the dataset.
pub fn check_subdomains(labels: &[usize], assignment: &[usize], num_classes: usize) -> Result<usize> {
    if labels.len() != assignment.len() {
        return Err(Error::Contract("labels and assignment differ in length".into()));
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut cells = vec![vec![0usize; num_classes]; k];
    for (&y, &s) in labels.iter().zip(assignment) {
        cells[s][y] += 1;
    }
    let mut present = vec![false; num_classes];
    for &y in labels {
        present[y] = true;
    }
    for (s, row) in cells.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            if present[c] && n == 0 {
                return Err(Error::Split(format!("sub-domain {s} has no samples of class {c}")));
            }
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subdomain: Option<usize>,
}

/// The manifest document as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub class_names: Vec<String>,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Manifest> {
        let body = strip_header(text, MANIFEST_HEADER).ok_or_else(|| {
            Error::load(origin, format!("missing '{MANIFEST_HEADER}' header"))
        })?;
        let manifest: Manifest =
            serde_json::from_str(body).map_err(|e| Error::load(origin, format!("malformed manifest: {e}")))?;
        let c = manifest.class_names.len();
        if c == 0 {
            return Err(Error::load(origin, "manifest lists no classes"));
        }
        for (i, s) in manifest.samples.iter().enumerate() {
            if s.label >= c {
                return Err(Error::load(
                    origin,
                    format!("sample {i} ({}): label {} out of range for {c} classes", s.path, s.label),
                ));
            }
        }
        let tagged = manifest.samples.iter().filter(|s| s.subdomain.is_some()).count();
        if tagged != 0 && tagged != manifest.samples.len() {
            return Err(Error::load(origin, "either all samples or none carry a subdomain"));
        }
        if tagged > 0 {
            let labels: Vec<usize> = manifest.samples.iter().map(|s| s.label).collect();
            let assignment: Vec<usize> = manifest.samples.iter().filter_map(|s| s.subdomain).collect();
            check_subdomains(&labels, &assignment, c).map_err(|e| Error::load(origin, e.to_string()))?;
        }
        Ok(manifest)
    }

    pub fn render(&self) -> String {
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        format!("{MANIFEST_HEADER}\n{body}\n")
    }
}

fn strip_header<'a>(text: &'a str, header: &str) -> Option<&'a str> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    (first.trim_end() == header).then_some(rest)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut text = String::with_capacity(cloud.len() * 64);
    text.push_str(POINT_CLOUD_HEADER);
    text.push('\n');
    for p in cloud.points() {
        // `Display` for f64 is the shortest round-tripping decimal, never exponent form.
        writeln!(text, "{} {} {}", p[0], p[1], p[2]).expect("string write");
    }
    write_text(path, &text)
}

pub fn read_point_cloud(path: &Path, label: usize) -> Result<PointCloud> {
    let text = read_text(path)?;
    let body = strip_header(&text, POINT_CLOUD_HEADER)
        .ok_or_else(|| Error::load(path, format!("missing '{POINT_CLOUD_HEADER}' header")))?;
    let mut points: Vec<Point> = Vec::new();
    for (ln, line) in body.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::load(path, format!("line {}: {e}", ln + 2)))?;
        if vals.len() != 3 {
            return Err(Error::load(path, format!("line {}: expected 3 coordinates", ln + 2)));
        }
        points.push([vals[0], vals[1], vals[2]]);
    }
    PointCloud::new(points, label).map_err(|e| Error::load(path, e.to_string()))
}

fn is_normalized(cloud: &PointCloud) -> bool {
    let c = cloud.centroid();
    c.iter().all(|v| v.abs() <= 1e-12) && (cloud.max_norm() - 1.0).abs() <= 1e-12
}

/// Loads a manifest and every cloud it references, normalizing clouds that
/// are not already normalized.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let manifest = Manifest::parse(&read_text(path)?, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut clouds = Vec::with_capacity(manifest.samples.len());
    for (i, s) in manifest.samples.iter().enumerate() {
        let cloud = read_point_cloud(&base.join(&s.path), s.label).map_err(|e| {
            Error::load(path, format!("sample {i} ({}): {e}", s.path))
        })?;
        let cloud = if is_normalized(&cloud) { cloud } else { normalize(&cloud) };
        clouds.push(cloud.with_source_tag(s.subdomain));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, manifest.class_names, clouds)
}

/// Writes `dir/<name>.manifest` plus one cloud file per sample under
/// `dir/<name>/`. Returns the manifest path.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    let cloud_dir = dir.join(&dataset.name);
    let mut samples = Vec::with_capacity(dataset.len());
    for (i, cloud) in dataset.clouds.iter().enumerate() {
        let rel = format!("{}/{:05}.pc", dataset.name, i);
        write_point_cloud(&cloud_dir.join(format!("{i:05}.pc")), cloud)?;
        samples.push(ManifestEntry {
            path: rel,
            label: cloud.label,
            subdomain: cloud.source_tag,
        });
    }
    let manifest = Manifest {
        class_names: dataset.class_names.clone(),
        samples,
    };
    let path = dir.join(format!("{}.manifest", dataset.name));
    write_text(&path, &manifest.render())?;
    Ok(path)
}

/// Writes a split file: header, a `#` metadata line, then one
/// `sample_index subdomain_index` line per sample.
pub fn write_split(path: &Path, assignment: &[usize], meta: &str) -> Result<()> {
    let mut text = format!("{SPLIT_HEADER}\n");
    if !meta.is_empty() {
        writeln!(text, "# {meta}").expect("string write");
    }
    for (i, s) in assignment.iter().enumerate() {
        writeln!(text, "{i} {s}").expect("string write");
    }
    write_text(path, &text)
}

/// Reads a split file into a dense assignment vector; every sample index in
/// `0..n` must appear exactly once.
pub fn read_split(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let body = strip_header(&text, SPLIT_HEADER)
        .ok_or_else(|| Error::load(path, format!("missing '{SPLIT_HEADER}' header")))?;
    let mut pairs = Vec::new();
    for (ln, line) in body.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<usize>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(i)), Some(Ok(s)), None) => pairs.push((i, s)),
            _ => return Err(Error::load(path, format!("line {}: expected 'sample subdomain'", ln + 2))),
        }
    }
    let mut assignment = vec![usize::MAX; pairs.len()];
    for (i, s) in pairs {
        match assignment.get_mut(i) {
            Some(slot) if *slot == usize::MAX => *slot = s,
            Some(_) => return Err(Error::load(path, format!("sample {i} assigned twice"))),
            None => return Err(Error::load(path, format!("sample index {i} out of range"))),
        }
    }
    Ok(assignment)
}

/// One training batch: `per_domain` samples from each sub-domain in turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub subdomains: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Positions within the batch that belong to sub-domain `s`.
    pub fn positions_of(&self, s: usize) -> Vec<usize> {
        self.subdomains
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == s)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Shuffled, restartable index source for one sub-domain.
#[derive(Debug)]
struct Loader {
    members: Vec<usize>,
    order: Vec<usize>,
    pos: usize,
    rng: rand_chacha::ChaCha8Rng,
    domain: usize,
}

impl Loader {
    fn new(members: Vec<usize>, seed: u64, domain: usize) -> Self {
        let mut rng = seeds::rng(seed);
        let mut order = members.clone();
        order.shuffle(&mut rng);
        Self {
            members,
            order,
            pos: 0,
            rng,
            domain,
        }
    }

    /// Next `size` indices. When the pass runs out, the unvisited tail goes
    /// to the front of a fresh shuffle so nothing repeats before everything
    /// has been seen once.
    fn take(&mut self, size: usize) -> Vec<usize> {
        if self.pos + size > self.order.len() {
            let carry: Vec<usize> = self.order[self.pos..].to_vec();
            let mut rest: Vec<usize> = self.members.iter().copied().filter(|i| !carry.contains(i)).collect();
            rest.shuffle(&mut self.rng);
            log::debug!(
                "sub-domain {} loader restarted, carrying {} unvisited samples",
                self.domain,
                carry.len()
            );
            self.order = carry;
            self.order.extend(rest);
            self.pos = 0;
        }
        let out = self.order[self.pos..self.pos + size].to_vec();
        self.pos += size;
        out
    }
}

/// Epoch of sub-domain-balanced batches.
///
/// Each batch draws `batch_size / k` samples from every sub-domain. The epoch
/// lasts as many batches as the largest sub-domain fills completely; smaller
/// sub-domain loaders restart with a fresh shuffle, and the incomplete tail of
/// the largest one is dropped.
#[derive(Debug)]
pub struct Batches {
    loaders: Vec<Loader>,
    labels: Vec<usize>,
    per_domain: usize,
    remaining: usize,
}

impl Iterator for Batches {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let mut batch = Batch {
            indices: Vec::new(),
            labels: Vec::new(),
            subdomains: Vec::new(),
        };
        for loader in &mut self.loaders {
            for i in loader.take(self.per_domain) {
                batch.indices.push(i);
                batch.labels.push(self.labels[i]);
                batch.subdomains.push(loader.domain);
            }
        }
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for Batches {}

pub fn make_batches(
    labels: &[usize],
    assignment: &[usize],
    k: usize,
    batch_size: usize,
    epoch_seed: u64,
) -> Result<Batches> {
    if k < 2 {
        return Err(Error::Config(format!("sub-domain batching needs k >= 2, got {k}")));
    }
    if batch_size == 0 || batch_size % k != 0 {
        return Err(Error::Config(format!("batch size {batch_size} is not a positive multiple of k = {k}")));
    }
    if labels.len() != assignment.len() {
        return Err(Error::Contract("labels and assignment differ in length".into()));
    }
    let per_domain = batch_size / k;
    let mut members = vec![Vec::new(); k];
    for (i, &s) in assignment.iter().enumerate() {
        if s >= k {
            return Err(Error::Config(format!("sample {i} has sub-domain {s} >= k = {k}")));
        }
        members[s].push(i);
    }
    for (s, m) in members.iter().enumerate() {
        if m.len() < per_domain {
            return Err(Error::Config(format!(
                "sub-domain {s} has {} samples, fewer than the {per_domain} a batch needs",
                m.len()
            )));
        }
    }
    let longest = members.iter().map(Vec::len).max().unwrap_or(0);
    let remaining = longest / per_domain;
    if longest % per_domain != 0 {
        log::debug!("dropping partial tail of {} samples", longest % per_domain);
    }
    let loaders = members
        .into_iter()
        .enumerate()
        .map(|(s, m)| Loader::new(m, seeds::child(epoch_seed, s as u64), s))
        .collect();
    Ok(Batches {
        loaders,
        labels: labels.to_vec(),
        per_domain,
        remaining,
    })
}

/// Plain shuffled minibatches over `0..n`; the last batch may be short.
pub fn plain_batches(n: usize, batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds::rng(epoch_seed));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
