use rayon::prelude::*;

use super::{ForwardTrace, ModelParams, SampleTrace};
use crate::{Error, Result};

/// Gradients of a scalar loss with respect to the trace's outputs, one row
/// per sample. Absent entries count as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Upstream {
    pub logits: Option<Vec<Vec<f64>>>,
    pub fl: Option<Vec<Vec<f64>>>,
    pub fh: Option<Vec<Vec<f64>>>,
}

impl Upstream {
    pub fn logits(d: Vec<Vec<f64>>) -> Self {
        Self {
            logits: Some(d),
            ..Self::default()
        }
    }

    /// Element-wise sum of two upstream gradients.
    pub fn add(self, other: Upstream) -> Upstream {
        fn merge(a: Option<Vec<Vec<f64>>>, b: Option<Vec<Vec<f64>>>) -> Option<Vec<Vec<f64>>> {
            match (a, b) {
                (Some(mut a), Some(b)) => {
                    for (ra, rb) in a.iter_mut().zip(&b) {
                        for (x, y) in ra.iter_mut().zip(rb) {
                            *x += y;
                        }
                    }
                    Some(a)
                }
                (a, None) => a,
                (None, b) => b,
            }
        }
        Upstream {
            logits: merge(self.logits, other.logits),
            fl: merge(self.fl, other.fl),
            fh: merge(self.fh, other.fh),
        }
    }
}

/// Gradient of the loss with respect to every parameter, given upstream
/// gradients on the logits and on both feature taps.
pub fn backward(params: &ModelParams, trace: &ForwardTrace, upstream: &Upstream) -> Result<Vec<f64>> {
    if trace.param_count != params.len() {
        return Err(Error::Contract("trace was produced by a different model".into()));
    }
    let shape = params.shape();
    let b = trace.len();
    let check = |rows: &Option<Vec<Vec<f64>>>, width: usize, what: &str| -> Result<()> {
        if let Some(rows) = rows {
            if rows.len() != b || rows.iter().any(|r| r.len() != width) {
                return Err(Error::Contract(format!("upstream {what} gradient has the wrong shape")));
            }
        }
        Ok(())
    };
    check(&upstream.logits, shape.num_classes(), "logit")?;
    check(&upstream.fl, shape.fl_dim(), "f_l")?;
    check(&upstream.fh, shape.fh_dim(), "f_h")?;
    if let Some(s) = trace.samples.first() {
        if s.embed.len() != shape.embed_layers() || s.hidden.len() + 1 != shape.head_layers() {
            return Err(Error::Contract("trace layer count does not match parameters".into()));
        }
    }

    fn row(rows: &Option<Vec<Vec<f64>>>, i: usize) -> Option<&[f64]> {
        rows.as_ref().map(|r| r[i].as_slice())
    }
    let per_sample: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|i| {
            backward_one(
                params,
                &trace.samples[i],
                row(&upstream.logits, i),
                row(&upstream.fl, i),
                row(&upstream.fh, i),
            )
        })
        .collect();
    let mut grad = vec![0.0; params.len()];
    for g in per_sample {
        for (a, v) in grad.iter_mut().zip(g) {
            *a += v;
        }
    }
    Ok(grad)
}

fn backward_one(
    params: &ModelParams,
    s: &SampleTrace,
    d_logits: Option<&[f64]>,
    d_fl: Option<&[f64]>,
    d_fh: Option<&[f64]>,
) -> Vec<f64> {
    let shape = params.shape();
    let embeds = shape.embed_layers();
    let heads = shape.head_layers();
    let mut grad = vec![0.0; params.len()];

    // Classifier, output layer first.
    let mut delta: Vec<f64> = d_logits.map_or_else(|| vec![0.0; shape.num_classes()], <[f64]>::to_vec);
    for h in (0..heads).rev() {
        let l = embeds + h;
        let layer = params.layer(l);
        let input: &[f64] = if h == 0 { &s.pooled } else { &s.hidden[h - 1] };
        let off = params.offset(l);
        let (gw, rest) = grad[off..].split_at_mut(layer.fan_in * layer.fan_out);
        let gb = &mut rest[..layer.fan_out];
        for (o, d) in delta.iter().enumerate() {
            gb[o] += d;
        }
        let mut d_in = vec![0.0; layer.fan_in];
        for i in 0..layer.fan_in {
            let w = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
            let gwi = &mut gw[i * layer.fan_out..(i + 1) * layer.fan_out];
            let xi = input[i];
            let mut acc = 0.0;
            for o in 0..layer.fan_out {
                gwi[o] += xi * delta[o];
                acc += w[o] * delta[o];
            }
            d_in[i] = acc;
        }
        if h > 0 {
            if h == heads - 1 {
                if let Some(extra) = d_fh {
                    for (d, e) in d_in.iter_mut().zip(extra) {
                        *d += e;
                    }
                }
            }
            for (d, &a) in d_in.iter_mut().zip(input) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
        } else if let Some(extra) = d_fl {
            for (d, e) in d_in.iter_mut().zip(extra) {
                *d += e;
            }
        }
        delta = d_in;
    }

    // Max-pool routes each channel's gradient to its winning point; only
    // those rows carry gradient through the embedding stack.
    let n = s.points();
    let width = shape.fl_dim();
    let mut active: Vec<usize> = s.argmax.clone();
    active.sort_unstable();
    active.dedup();
    let mut slot = vec![usize::MAX; n];
    for (k, &p) in active.iter().enumerate() {
        slot[p] = k;
    }
    let last = &s.embed[embeds - 1];
    let mut rows = vec![vec![0.0; width]; active.len()];
    for (c, &p) in s.argmax.iter().enumerate() {
        if last[p * width + c] > 0.0 {
            rows[slot[p]][c] += delta[c];
        }
    }

    for l in (0..embeds).rev() {
        let layer = params.layer(l);
        let input: &[f64] = if l == 0 { &s.input } else { &s.embed[l - 1] };
        let off = params.offset(l);
        let (gw, rest) = grad[off..].split_at_mut(layer.fan_in * layer.fan_out);
        let gb = &mut rest[..layer.fan_out];
        let mut next_rows = Vec::with_capacity(if l > 0 { active.len() } else { 0 });
        for (k, &p) in active.iter().enumerate() {
            let d = &rows[k];
            if d.iter().all(|&v| v == 0.0) {
                if l > 0 {
                    next_rows.push(vec![0.0; layer.fan_in]);
                }
                continue;
            }
            for (o, v) in d.iter().enumerate() {
                gb[o] += v;
            }
            let x = &input[p * layer.fan_in..(p + 1) * layer.fan_in];
            let mut d_in = vec![0.0; layer.fan_in];
            for i in 0..layer.fan_in {
                let w = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
                let gwi = &mut gw[i * layer.fan_out..(i + 1) * layer.fan_out];
                let xi = x[i];
                let mut acc = 0.0;
                for o in 0..layer.fan_out {
                    gwi[o] += xi * d[o];
                    acc += w[o] * d[o];
                }
                d_in[i] = if l > 0 && xi <= 0.0 { 0.0 } else { acc };
            }
            if l > 0 {
                next_rows.push(d_in);
            }
        }
        rows = next_rows;
    }
    grad
}
