use rayon::prelude::*;

use super::TrainConfig;
use crate::alignment::{class_weights, classification_loss, prepare_terms, total_loss, Halves, LossBreakdown};
use crate::dataset::{check_subdomains, make_batches, plain_batches, Dataset};
use crate::geometry::{augment, resample, AugmentConfig, PointCloud};
use crate::net::{forward, AdamState, Checkpoint, ModelParams};
use crate::seeds::{self, Stream};
use crate::split::{split_dataset, SplitModel, SplitResult};
use crate::{Error, Result};

/// Column header of the training log.
pub const LOG_HEADER: &str = "step,L_cls,L_ALI_geo,L_ALI_sem,L_total";

/// One optimizer step of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    /// 1 for classification-only training, 2 for aligned training.
    pub phase: u8,
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
    pub split: Option<SplitResult>,
    /// Sub-domain assignment used in step 2.
    pub assignment: Option<Vec<usize>>,
    pub step1_epochs: usize,
    /// Step-2 epochs actually run; below the cap when the plateau rule fired.
    pub step2_epochs: usize,
    /// Set when step 2 hit a numeric failure; the checkpoint then holds the
    /// last parameters that trained without error.
    pub aborted: Option<String>,
}

impl TrainOutcome {
    pub fn total_epochs(&self) -> usize {
        self.step1_epochs + self.step2_epochs
    }

    pub fn log_csv(&self) -> String {
        log_csv(&self.log)
    }
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in rows {
        let l = &r.loss;
        out.push_str(&format!("{},{},{},{},{}\n", r.step, l.cls, l.ali_geo, l.ali_sem, l.total));
    }
    out
}

/// Mean of the last `window` values against the mean of the `window` before.
pub fn plateaued(history: &[f64], window: usize, threshold: f64) -> bool {
    let n = history.len();
    if threshold <= 0.0 || window == 0 || n < 2 * window {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let current = mean(&history[n - window..]);
    let previous = mean(&history[n - 2 * window..n - window]);
    (current - previous).abs() < threshold * previous.abs().max(1e-12)
}

/// Brings every cloud to the configured point count.
fn conform(dataset: &Dataset, points: usize, seed: u64) -> Vec<PointCloud> {
    dataset
        .clouds
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if c.len() == points {
                c.clone()
            } else {
                resample(c, points, seeds::child(seed, i as u64))
            }
        })
        .collect()
}

fn augmented(clouds: &[PointCloud], indices: &[usize], config: &AugmentConfig, epoch_seed: u64) -> Vec<PointCloud> {
    indices
        .par_iter()
        .map(|&i| augment(&clouds[i], config, seeds::child(epoch_seed, i as u64)))
        .collect()
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    clouds: Vec<PointCloud>,
    labels: Vec<usize>,
    alpha: Vec<f64>,
    params: ModelParams,
    adam: AdamState,
    log: Vec<LogRow>,
    shuffle_seed: u64,
    augment_seed: u64,
}

impl Trainer<'_> {
    fn step1_epoch(&mut self, epoch: usize) -> Result<f64> {
        let aug = self.config.augment();
        let batches = plain_batches(self.clouds.len(), self.config.batch_size, seeds::child(self.shuffle_seed, epoch as u64));
        let mut sum = 0.0;
        for idx in &batches {
            let batch = augmented(&self.clouds, idx, &aug, seeds::child(self.augment_seed, epoch as u64));
            let refs: Vec<&PointCloud> = batch.iter().collect();
            let labels: Vec<usize> = idx.iter().map(|&i| self.labels[i]).collect();
            let trace = forward(&self.params, &refs)?;
            let (cls, grad) = classification_loss(&self.params, &trace, &labels, &self.alpha)?;
            self.adam.update(self.params.values_mut(), &grad)?;
            sum += cls;
            self.log.push(LogRow {
                step: self.log.len() + 1,
                phase: 1,
                epoch,
                loss: LossBreakdown {
                    cls,
                    ali_geo: 0.0,
                    ali_sem: 0.0,
                    ali: 0.0,
                    total: cls,
                    lambda: self.config.lambda,
                },
            });
        }
        Ok(sum / batches.len().max(1) as f64)
    }

    /// Returns the epoch's mean breakdown.
    fn step2_epoch(&mut self, epoch: usize, assignment: &[usize], k: usize) -> Result<LossBreakdown> {
        let c = self.config;
        let aug = c.augment();
        let batches = make_batches(&self.labels, assignment, k, c.batch_size, seeds::child(self.shuffle_seed, epoch as u64))?;
        let mut mean = LossBreakdown {
            cls: 0.0,
            ali_geo: 0.0,
            ali_sem: 0.0,
            ali: 0.0,
            total: 0.0,
            lambda: c.lambda,
        };
        let count = batches.len().max(1) as f64;
        for batch in batches {
            let clouds = augmented(&self.clouds, &batch.indices, &aug, seeds::child(self.augment_seed, epoch as u64));
            let refs: Vec<&PointCloud> = clouds.iter().collect();
            let trace = forward(&self.params, &refs)?;
            let pairs = Halves::all_pairs(&batch.subdomains);
            let terms = prepare_terms(
                &trace,
                &refs,
                &batch.labels,
                pairs,
                c.soft_scale,
                &c.bandwidth_multipliers,
                c.sda_eps(),
                c.kl_eps,
            )?;
            let (loss, grad) = total_loss(&self.params, &trace, &batch.labels, &self.alpha, &terms, c.lambda, c.soft_scale)?;
            self.adam.update(self.params.values_mut(), &grad)?;
            mean.cls += loss.cls / count;
            mean.ali_geo += loss.ali_geo / count;
            mean.ali_sem += loss.ali_sem / count;
            mean.ali += loss.ali / count;
            mean.total += loss.total / count;
            self.log.push(LogRow {
                step: self.log.len() + 1,
                phase: 2,
                epoch,
                loss,
            });
        }
        Ok(mean)
    }
}

/// Step 1 trains on the class-weighted cross-entropy with plain shuffled
/// batches. Step 2 splits the source into sub-domains (unless `split` is
/// given) and trains on the combined objective with sub-domain batches until
/// the alignment loss plateaus or the epoch cap is reached.
pub fn train_two_step(config: &TrainConfig, source: &Dataset, split: Option<&[usize]>) -> Result<TrainOutcome> {
    config.validate()?;
    if source.is_empty() {
        return Err(Error::Config("source dataset is empty".into()));
    }
    let master = config.seed;
    let clouds = conform(source, config.points, seeds::derive(master, Stream::Generation));
    let labels = source.labels();
    let alpha = class_weights(&source.class_counts(), config.q)?.alpha;
    let params = ModelParams::init(config.net_shape(source.num_classes()), seeds::derive(master, Stream::Init))?;
    let adam = AdamState::new(params.len(), config.adam());
    let mut t = Trainer {
        config,
        clouds,
        labels,
        alpha,
        params,
        adam,
        log: Vec::new(),
        shuffle_seed: seeds::derive(master, Stream::Shuffle),
        augment_seed: seeds::derive(master, Stream::Augment),
    };

    for epoch in 0..config.step1_epochs {
        let cls = t.step1_epoch(epoch)?;
        log::info!("step 1 epoch {}/{}: L_cls {cls:.5}", epoch + 1, config.step1_epochs);
    }
    t.params.trained = true;

    let mut outcome_split = None;
    let mut assignment = None;
    let mut step2 = 0;
    let mut aborted = None;
    if config.step2_epochs > 0 {
        let assign = match split {
            Some(a) => a.to_vec(),
            None => {
                let dataset = Dataset::new(source.name.clone(), source.class_names.clone(), t.clouds.clone())?;
                let model: &dyn SplitModel = &t.params;
                let result = split_dataset(
                    &dataset,
                    config.split_method,
                    config.k,
                    config.split_metric,
                    seeds::derive(master, Stream::Split),
                    Some(model),
                )?;
                let a = result.assignment.clone();
                outcome_split = Some(result);
                a
            }
        };
        let k = check_subdomains(&t.labels, &assign, source.num_classes())?;
        if k != config.k {
            return Err(Error::Split(format!("split has {k} sub-domains, config asks for {}", config.k)));
        }
        let mut history = Vec::new();
        for e in 0..config.step2_epochs {
            let epoch = config.step1_epochs + e;
            let checkpoint = (t.params.clone(), t.adam.clone(), t.log.len());
            match t.step2_epoch(epoch, &assign, k) {
                Ok(mean) => {
                    step2 += 1;
                    log::info!(
                        "step 2 epoch {}/{}: L_cls {:.5} L_ALI {:.5} L_total {:.5}",
                        e + 1,
                        config.step2_epochs,
                        mean.cls,
                        mean.ali,
                        mean.total
                    );
                    history.push(mean.ali);
                    if plateaued(&history, config.plateau_window, config.plateau_threshold) {
                        log::info!("alignment loss plateaued after {step2} step-2 epochs");
                        break;
                    }
                }
                Err(Error::Numeric(msg)) => {
                    log::error!("step 2 aborted in epoch {}: {msg}", e + 1);
                    t.params = checkpoint.0;
                    t.adam = checkpoint.1;
                    t.log.truncate(checkpoint.2);
                    aborted = Some(msg);
                    break;
                }
                Err(other) => return Err(other),
            }
        }
        assignment = Some(assign);
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params: t.params,
            class_names: source.class_names.clone(),
            adam: Some(t.adam),
        },
        log: t.log,
        split: outcome_split,
        assignment,
        step1_epochs: config.step1_epochs,
        step2_epochs: step2,
        aborted,
    })
}
