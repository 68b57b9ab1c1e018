use crate::net::ForwardTrace;
use crate::{Error, Result};

/// Probabilities below this are clamped before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Per-class loss weights `alpha_i ∝ m_i^-q`, normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub alpha: Vec<f64>,
    pub q: f64,
}

/// Classes with no samples get weight 0 and are left out of the normalization.
pub fn class_weights(counts: &[usize], q: f64) -> Result<ClassWeights> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::Domain(format!("class-weight exponent q must be finite and >= 0, got {q}")));
    }
    let raw: Vec<f64> = counts
        .iter()
        .map(|&m| if m == 0 { 0.0 } else { (m as f64).powf(-q) })
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return Err(Error::Domain("every class is empty".into()));
    }
    for (c, _) in counts.iter().enumerate().filter(|(_, &m)| m == 0) {
        log::warn!("class {c} has no training samples; its loss weight is 0");
    }
    Ok(ClassWeights {
        alpha: raw.into_iter().map(|w| w / total).collect(),
        q,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeOutput {
    pub loss: f64,
    /// `d loss / d logits`, one row per sample.
    pub d_logits: Vec<Vec<f64>>,
    /// Samples whose true-class probability hit the log clamp.
    pub clamped: usize,
}

/// Batch mean of `alpha[y] * -ln p(y)`.
pub fn weighted_ce(trace: &ForwardTrace, labels: &[usize], alpha: &[f64]) -> Result<CeOutput> {
    if labels.len() != trace.len() {
        return Err(Error::Contract(format!("{} labels for {} samples", labels.len(), trace.len())));
    }
    let b = trace.len() as f64;
    let mut loss = 0.0;
    let mut clamped = 0;
    let mut d_logits = Vec::with_capacity(trace.len());
    for (s, &y) in trace.samples.iter().zip(labels) {
        let c = s.probs.len();
        if y >= c || alpha.len() != c {
            return Err(Error::Contract(format!("label {y} or weight vector does not fit {c} classes")));
        }
        let p = s.probs[y];
        let w = alpha[y] / b;
        if p < LOG_CLAMP {
            clamped += 1;
            loss += w * -LOG_CLAMP.ln();
            d_logits.push(vec![0.0; c]);
            continue;
        }
        loss += w * -p.ln();
        let mut row: Vec<f64> = s.probs.iter().map(|&pk| w * pk).collect();
        row[y] -= w;
        d_logits.push(row);
    }
    if clamped > 0 {
        log::warn!("{clamped} samples hit the log-probability clamp");
    }
    Ok(CeOutput {
        loss,
        d_logits,
        clamped,
    })
}
