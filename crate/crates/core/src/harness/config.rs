use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::alignment::{BANDWIDTH_MULTIPLIERS, KL_EPS, SDA_EPS, SOFT_SCALE};
use crate::geometry::AugmentConfig;
use crate::net::{AdamConfig, NetShape};
use crate::split::{Metric, SplitMethod};
use crate::{Error, Result};

pub const CONFIG_HEADER: &str = "SUGDG-CONFIG v1";

/// Every scalar a training run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Class-weight exponent.
    pub q: f64,
    /// Weight of the alignment loss.
    pub lambda: f64,
    /// Number of sub-domains.
    pub k: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub step1_epochs: usize,
    pub step2_epochs: usize,
    pub split_method: SplitMethod,
    pub split_metric: Metric,
    /// Master seed for initialization, splitting, shuffling and augmentation.
    pub seed: u64,
    pub bandwidth_multipliers: Vec<f64>,
    /// Whether cross-domain pairs are weighted by inverse distance.
    pub sda: bool,
    pub sda_eps: f64,
    pub kl_eps: f64,
    pub soft_scale: f64,
    /// Points per cloud; clouds with a different count are resampled.
    pub points: usize,
    pub plateau_window: usize,
    /// Relative change of the windowed alignment loss below which step 2
    /// stops; 0 disables early stopping.
    pub plateau_threshold: f64,
    pub augment_jitter: f64,
    pub augment_rotation: f64,
    pub embed_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            q: 0.2,
            lambda: 0.5,
            k: 2,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 5e-5,
            step1_epochs: 30,
            step2_epochs: 50,
            split_method: SplitMethod::Random,
            split_metric: Metric::Cd,
            seed: 0,
            bandwidth_multipliers: BANDWIDTH_MULTIPLIERS.to_vec(),
            sda: true,
            sda_eps: SDA_EPS,
            kl_eps: KL_EPS,
            soft_scale: SOFT_SCALE,
            points: 128,
            plateau_window: 5,
            plateau_threshold: 0.01,
            augment_jitter: 0.01,
            augment_rotation: std::f64::consts::PI,
            embed_widths: vec![32, 64, 128],
            head_widths: vec![64, 32],
        }
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse '{s}'"))))
        .collect()
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let raw = self.0.remove(key).ok_or_else(|| Error::Config(format!("missing key '{key}'")))?;
        raw.parse::<T>()
            .map_err(|_| Error::Config(format!("{key}: cannot parse '{raw}'")))
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        let raw = self.0.remove(key).ok_or_else(|| Error::Config(format!("missing key '{key}'")))?;
        parse_list(key, &raw)
    }
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some(CONFIG_HEADER) {
            return Err(Error::Config(format!("config must start with '{CONFIG_HEADER}'")));
        }
        let mut map = BTreeMap::new();
        for (n, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 2)))?;
            if map.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key '{}'", key.trim())));
            }
        }
        let mut f = Fields(map);
        let config = TrainConfig {
            q: f.take("q")?,
            lambda: f.take("lambda")?,
            k: f.take("k")?,
            batch_size: f.take("batch_size")?,
            lr: f.take("lr")?,
            weight_decay: f.take("weight_decay")?,
            step1_epochs: f.take("step1_epochs")?,
            step2_epochs: f.take("step2_epochs")?,
            split_method: f.take("split_method")?,
            split_metric: f.take("split_metric")?,
            seed: f.take("seed")?,
            bandwidth_multipliers: f.take_list("bandwidth_multipliers")?,
            sda: f.take("sda")?,
            sda_eps: f.take("sda_eps")?,
            kl_eps: f.take("kl_eps")?,
            soft_scale: f.take("soft_scale")?,
            points: f.take("points")?,
            plateau_window: f.take("plateau_window")?,
            plateau_threshold: f.take("plateau_threshold")?,
            augment_jitter: f.take("augment_jitter")?,
            augment_rotation: f.take("augment_rotation")?,
            embed_widths: f.take_list("embed_widths")?,
            head_widths: f.take_list("head_widths")?,
        };
        if let Some(key) = f.0.keys().next() {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn render(&self) -> String {
        let rows: Vec<(&str, String)> = vec![
            ("q", self.q.to_string()),
            ("lambda", self.lambda.to_string()),
            ("k", self.k.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("step1_epochs", self.step1_epochs.to_string()),
            ("step2_epochs", self.step2_epochs.to_string()),
            ("split_method", self.split_method.to_string()),
            ("split_metric", self.split_metric.to_string()),
            ("seed", self.seed.to_string()),
            ("bandwidth_multipliers", join(&self.bandwidth_multipliers)),
            ("sda", self.sda.to_string()),
            ("sda_eps", self.sda_eps.to_string()),
            ("kl_eps", self.kl_eps.to_string()),
            ("soft_scale", self.soft_scale.to_string()),
            ("points", self.points.to_string()),
            ("plateau_window", self.plateau_window.to_string()),
            ("plateau_threshold", self.plateau_threshold.to_string()),
            ("augment_jitter", self.augment_jitter.to_string()),
            ("augment_rotation", self.augment_rotation.to_string()),
            ("embed_widths", join(&self.embed_widths)),
            ("head_widths", join(&self.head_widths)),
        ];
        let mut out = format!("{CONFIG_HEADER}\n");
        for (k, v) in rows {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.q) {
            return bad("q must be finite and >= 0");
        }
        if !finite_nonneg(self.lambda) {
            return bad("lambda must be finite and >= 0");
        }
        if self.k < 1 || (self.step2_epochs > 0 && self.k < 2) {
            return bad("k must be >= 2 when step 2 runs");
        }
        if self.batch_size == 0 || self.batch_size % self.k != 0 {
            return bad("batch_size must be a positive multiple of k");
        }
        if self.step2_epochs > 0 && self.batch_size / self.k < 2 {
            return bad("batch_size / k must be at least 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !finite_nonneg(self.weight_decay) {
            return bad("lr must be positive and weight_decay >= 0");
        }
        if self.bandwidth_multipliers.is_empty() || self.bandwidth_multipliers.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return bad("bandwidth_multipliers must be positive");
        }
        if !(self.sda_eps > 0.0) || !finite_nonneg(self.kl_eps) || !finite_nonneg(self.soft_scale) {
            return bad("sda_eps must be positive, kl_eps and soft_scale >= 0");
        }
        if self.points < 3 {
            return bad("points must be >= 3");
        }
        if self.plateau_window == 0 || !finite_nonneg(self.plateau_threshold) {
            return bad("plateau_window must be >= 1 and plateau_threshold >= 0");
        }
        if !finite_nonneg(self.augment_jitter) || !finite_nonneg(self.augment_rotation) {
            return bad("augmentation magnitudes must be >= 0");
        }
        if self.embed_widths.is_empty() || self.head_widths.is_empty() || self.embed_widths.iter().chain(&self.head_widths).any(|&w| w == 0) {
            return bad("layer widths must be non-empty and positive");
        }
        Ok(())
    }

    /// Short content hash of the rendered config with the seed zeroed, so
    /// every seed of one sweep carries the same hash.
    pub fn hash(&self) -> String {
        let unseeded = TrainConfig { seed: 0, ..self.clone() };
        hex::encode(&Sha256::digest(unseeded.render().as_bytes())[..8])
    }

    pub fn net_shape(&self, num_classes: usize) -> NetShape {
        let mut embed = vec![3];
        embed.extend(&self.embed_widths);
        let mut head = vec![*self.embed_widths.last().expect("validated")];
        head.extend(&self.head_widths);
        head.push(num_classes);
        NetShape { embed, head }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            jitter_sigma: self.augment_jitter,
            rotation_range: self.augment_rotation,
        }
    }

    pub fn sda_eps(&self) -> Option<f64> {
        self.sda.then_some(self.sda_eps)
    }
}
