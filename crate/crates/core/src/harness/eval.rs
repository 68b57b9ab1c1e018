use crate::dataset::Dataset;
use crate::geometry::PointCloud;
use crate::net::{forward, Checkpoint};
use crate::{Error, Result};

const CHUNK: usize = 64;

/// Accuracy of one checkpoint on one target, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetResult {
    pub name: String,
    pub accuracy: f64,
    /// Per-class accuracy; `None` for classes absent from the target.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl TargetResult {
    /// Unweighted mean of the per-class accuracies of present classes.
    pub fn class_avg(&self) -> f64 {
        let present: Vec<f64> = self.per_class.iter().flatten().copied().collect();
        present.iter().sum::<f64>() / present.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub arm: String,
    pub seed: u64,
    pub config_hash: String,
    pub targets: Vec<TargetResult>,
    /// Mean of the per-target accuracies.
    pub avg: f64,
}

impl EvalReport {
    pub fn new(arm: impl Into<String>, seed: u64, config_hash: impl Into<String>, targets: Vec<TargetResult>) -> Self {
        let avg = targets.iter().map(|t| t.accuracy).sum::<f64>() / targets.len().max(1) as f64;
        Self {
            arm: arm.into(),
            seed,
            config_hash: config_hash.into(),
            targets,
            avg,
        }
    }
}

/// Argmax predictions for every cloud. Consecutive clouds with equal point
/// counts share a forward pass.
pub fn predict(checkpoint: &Checkpoint, clouds: &[PointCloud]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(clouds.len());
    let mut start = 0;
    while start < clouds.len() {
        let n = clouds[start].len();
        let mut end = start + 1;
        while end < clouds.len() && end - start < CHUNK && clouds[end].len() == n {
            end += 1;
        }
        let refs: Vec<&PointCloud> = clouds[start..end].iter().collect();
        out.extend(forward(&checkpoint.params, &refs)?.predictions());
        start = end;
    }
    Ok(out)
}

/// Zero-shot accuracy on each target. Parameters are only read.
pub fn evaluate(checkpoint: &Checkpoint, targets: &[Dataset]) -> Result<Vec<TargetResult>> {
    let c = checkpoint.params.shape().num_classes();
    targets
        .iter()
        .map(|target| {
            if target.class_names != checkpoint.class_names {
                return Err(Error::Eval(format!(
                    "target '{}' classes {:?} differ from the model's {:?}",
                    target.name, target.class_names, checkpoint.class_names
                )));
            }
            let predictions = predict(checkpoint, &target.clouds)?;
            let mut confusion = vec![vec![0usize; c]; c];
            for (cloud, &p) in target.clouds.iter().zip(&predictions) {
                confusion[cloud.label][p] += 1;
            }
            let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
            let per_class = confusion
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let total: usize = row.iter().sum();
                    (total > 0).then(|| 100.0 * row[i] as f64 / total as f64)
                })
                .collect();
            Ok(TargetResult {
                name: target.name.clone(),
                accuracy: 100.0 * correct as f64 / target.len().max(1) as f64,
                per_class,
                confusion,
            })
        })
        .collect()
}
