use rayon::prelude::*;

use super::{relu, softmax, ModelParams};
use crate::geometry::PointCloud;
use crate::{Error, Result};

/// Everything the backward pass needs for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    /// Input coordinates, `n × 3` row-major.
    pub input: Vec<f64>,
    /// Post-ReLU output of every embedding layer, `n × width` row-major.
    pub embed: Vec<Vec<f64>>,
    /// Winning point per pooled channel (lowest index on ties).
    pub argmax: Vec<usize>,
    /// Pooled last-embedding-layer features: the `f_l` tap.
    pub pooled: Vec<f64>,
    /// Post-ReLU output of every classifier hidden layer; the last is `f_h`.
    pub hidden: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl SampleTrace {
    pub fn fl(&self) -> &[f64] {
        &self.pooled
    }

    pub fn fh(&self) -> &[f64] {
        self.hidden.last().expect("at least one hidden layer")
    }

    pub fn points(&self) -> usize {
        self.input.len() / 3
    }
}

/// Forward pass over a batch; rows are independent of each other.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub samples: Vec<SampleTrace>,
    /// Parameter count of the model that produced the trace.
    pub(crate) param_count: usize,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn fl(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.fl().to_vec()).collect()
    }

    pub fn fh(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.fh().to_vec()).collect()
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.probs.clone()).collect()
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| {
                // First maximum wins, matching argmax conventions elsewhere.
                let mut best = 0;
                for (c, &p) in s.probs.iter().enumerate() {
                    if p > s.probs[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

pub fn forward(params: &ModelParams, clouds: &[&PointCloud]) -> Result<ForwardTrace> {
    if let Some(first) = clouds.first() {
        if let Some(bad) = clouds.iter().position(|c| c.len() != first.len()) {
            return Err(Error::Contract(format!(
                "batch mixes point counts: sample 0 has {}, sample {bad} has {}",
                first.len(),
                clouds[bad].len()
            )));
        }
    }
    let samples = clouds
        .par_iter()
        .map(|c| forward_one(params, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(ForwardTrace {
        samples,
        param_count: params.len(),
    })
}

/// `out[p] = relu(in[p] · W + b)` for every row `p`.
fn dense_rows(input: &[f64], rows: usize, weights: &[f64], bias: &[f64], fan_in: usize, apply_relu: bool) -> Vec<f64> {
    let fan_out = bias.len();
    let mut out = Vec::with_capacity(rows * fan_out);
    for p in 0..rows {
        let x = &input[p * fan_in..(p + 1) * fan_in];
        let start = out.len();
        out.extend_from_slice(bias);
        let acc = &mut out[start..];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let w = &weights[i * fan_out..(i + 1) * fan_out];
            for (a, &wv) in acc.iter_mut().zip(w) {
                *a += xi * wv;
            }
        }
        if apply_relu {
            for a in acc.iter_mut() {
                *a = relu(*a);
            }
        }
    }
    out
}

fn check_finite(values: &[f64], what: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(what()))
    }
}

fn forward_one(params: &ModelParams, cloud: &PointCloud) -> Result<SampleTrace> {
    let shape = params.shape();
    let n = cloud.len();
    let input: Vec<f64> = cloud.points().iter().flat_map(|p| p.iter().copied()).collect();

    let mut embed = Vec::with_capacity(shape.embed_layers());
    for l in 0..shape.embed_layers() {
        let layer = params.layer(l);
        let x = if l == 0 { &input } else { &embed[l - 1] };
        let out = dense_rows(x, n, layer.weights, layer.bias, layer.fan_in, true);
        check_finite(&out, || format!("embedding layer {}", l + 1))?;
        embed.push(out);
    }

    let last: &Vec<f64> = embed.last().expect("at least one embedding layer");
    let width = shape.fl_dim();
    let mut pooled = last[..width].to_vec();
    let mut argmax = vec![0usize; width];
    for p in 1..n {
        let row = &last[p * width..(p + 1) * width];
        for c in 0..width {
            if row[c] > pooled[c] {
                pooled[c] = row[c];
                argmax[c] = p;
            }
        }
    }

    let heads = shape.head_layers();
    let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(heads - 1);
    let mut logits = Vec::new();
    for h in 0..heads {
        let layer = params.layer(shape.embed_layers() + h);
        let x = if h == 0 { &pooled } else { &hidden[h - 1] };
        let is_output = h + 1 == heads;
        let out = dense_rows(x, 1, layer.weights, layer.bias, layer.fan_in, !is_output);
        check_finite(&out, || format!("classifier layer {}", h + 1))?;
        if is_output {
            logits = out;
        } else {
            hidden.push(out);
        }
    }
    let probs = softmax(&logits);
    Ok(SampleTrace {
        input,
        embed,
        argmax,
        pooled,
        hidden,
        logits,
        probs,
    })
}
