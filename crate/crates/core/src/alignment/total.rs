use super::class_weights::weighted_ce;
use super::mmd::{median_heuristic, mmd2, soft_mmd_features, KernelSpec};
use super::sda::{sda_weights, SdaWeights};
use crate::geometry::PointCloud;
use crate::net::{backward, ForwardTrace, ModelParams, Upstream};
use crate::{Error, Result};

/// Norms below this are clamped before normalizing `f_h`.
const NORM_CLAMP: f64 = 1e-12;

/// Batch positions of two sub-domains whose features are aligned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Halves {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl Halves {
    /// Every unordered pair of sub-domains present in `subdomains`, in
    /// lexicographic order.
    pub fn all_pairs(subdomains: &[usize]) -> Vec<Halves> {
        let k = subdomains.iter().max().map_or(0, |m| m + 1);
        let members: Vec<Vec<usize>> = (0..k)
            .map(|s| (0..subdomains.len()).filter(|&i| subdomains[i] == s).collect())
            .collect();
        let mut out = Vec::new();
        for s in 0..k {
            for t in s + 1..k {
                if !members[s].is_empty() && !members[t].is_empty() {
                    out.push(Halves {
                        source: members[s].clone(),
                        target: members[t].clone(),
                    });
                }
            }
        }
        out
    }
}

/// Kernels for the two granularities, held fixed for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentKernels {
    pub geo: KernelSpec,
    pub sem: KernelSpec,
}

/// Everything the alignment loss of one sub-domain pair treats as constant.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub halves: Halves,
    pub kernels: AlignmentKernels,
    pub sda: Option<SdaWeights>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub cls: f64,
    pub ali_geo: f64,
    pub ali_sem: f64,
    pub ali: f64,
    pub total: f64,
    pub lambda: f64,
}

fn pick(rows: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

fn unit_rows(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_CLAMP))
        .collect();
    let unit = rows
        .iter()
        .zip(&norms)
        .map(|(r, n)| r.iter().map(|v| v / n).collect())
        .collect();
    (unit, norms)
}

/// Pulls a gradient on `x / ‖x‖` back to `x`. A clamped norm is a constant.
fn unit_backward(x: &[f64], norm: f64, g: &[f64]) -> Vec<f64> {
    if norm <= NORM_CLAMP {
        return g.iter().map(|v| v / norm).collect();
    }
    let dot: f64 = x.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / norm;
    x.iter().zip(g).map(|(a, b)| (b - a / norm * dot) / norm).collect()
}

fn validate_halves(h: &Halves, n: usize) -> Result<()> {
    if h.source.len() < 2 || h.target.len() < 2 {
        return Err(Error::Domain("each sub-domain needs at least 2 samples in the batch".into()));
    }
    if h.source.iter().chain(&h.target).any(|&i| i >= n) {
        return Err(Error::Contract("sub-domain position outside the batch".into()));
    }
    Ok(())
}

/// Median-heuristic kernels on the current `f_l` rows and on the
/// label-augmented, unit-normalized `f_h` rows of one pair.
pub fn resolve_kernels(
    trace: &ForwardTrace,
    labels: &[usize],
    halves: &Halves,
    soft_scale: f64,
    multipliers: &[f64],
) -> Result<AlignmentKernels> {
    validate_halves(halves, trace.len())?;
    let c = trace.samples.first().map_or(0, |s| s.probs.len());
    let fl = trace.fl();
    let (fh, _) = unit_rows(&trace.fh());
    let soft = soft_mmd_features(&fh, labels, c, soft_scale);
    Ok(AlignmentKernels {
        geo: median_heuristic(&pick(&fl, &halves.source), &pick(&fl, &halves.target), multipliers)?,
        sem: median_heuristic(&pick(&soft, &halves.source), &pick(&soft, &halves.target), multipliers)?,
    })
}

/// Resolves kernels and, when `sda_eps` is given, attention weights for
/// every pair, using the current forward pass.
pub fn prepare_terms(
    trace: &ForwardTrace,
    clouds: &[&PointCloud],
    labels: &[usize],
    pairs: Vec<Halves>,
    soft_scale: f64,
    multipliers: &[f64],
    sda_eps: Option<f64>,
    kl_eps: f64,
) -> Result<Vec<LossTerms>> {
    if clouds.len() != trace.len() {
        return Err(Error::Contract(format!("{} clouds for {} trace rows", clouds.len(), trace.len())));
    }
    let probs = trace.probs();
    pairs
        .into_iter()
        .map(|halves| {
            let kernels = resolve_kernels(trace, labels, &halves, soft_scale, multipliers)?;
            let sda = match sda_eps {
                Some(eps) => {
                    let cs: Vec<&PointCloud> = halves.source.iter().map(|&i| clouds[i]).collect();
                    let ct: Vec<&PointCloud> = halves.target.iter().map(|&i| clouds[i]).collect();
                    Some(sda_weights(&cs, &ct, &pick(&probs, &halves.source), &pick(&probs, &halves.target), eps, kl_eps)?)
                }
                None => None,
            };
            Ok(LossTerms { halves, kernels, sda })
        })
        .collect()
}

/// Class-weighted cross-entropy and its parameter gradient.
pub fn classification_loss(params: &ModelParams, trace: &ForwardTrace, labels: &[usize], alpha: &[f64]) -> Result<(f64, Vec<f64>)> {
    let ce = weighted_ce(trace, labels, alpha)?;
    let grad = backward(params, trace, &Upstream::logits(ce.d_logits))?;
    Ok((ce.loss, grad))
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{what} is {v}")))
    }
}

/// `L = L_cls + λ·L_ALI`, where `L_ALI` averages, over sub-domain pairs,
/// the MMD on `f_l` plus the Soft-MMD on unit-normalized `f_h`. Returns the
/// breakdown and the parameter gradient of `L`.
pub fn total_loss(
    params: &ModelParams,
    trace: &ForwardTrace,
    labels: &[usize],
    alpha: &[f64],
    terms: &[LossTerms],
    lambda: f64,
    soft_scale: f64,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let ce = weighted_ce(trace, labels, alpha)?;
    let cls = finite(ce.loss, "L_cls")?;
    let b = trace.len();
    let c = trace.samples.first().map_or(0, |s| s.probs.len());
    let fl = trace.fl();
    let fh_raw = trace.fh();
    let (fh, norms) = unit_rows(&fh_raw);
    let soft = soft_mmd_features(&fh, labels, c, soft_scale);
    let fh_dim = params.shape().fh_dim();

    let mut d_fl = vec![vec![0.0; fl.first().map_or(0, Vec::len)]; b];
    let mut d_soft = vec![vec![0.0; fh_dim]; b];
    let (mut geo, mut sem) = (0.0, 0.0);
    let share = if terms.is_empty() { 0.0 } else { 1.0 / terms.len() as f64 };
    for t in terms {
        validate_halves(&t.halves, b)?;
        let (s, g) = (&t.halves.source, &t.halves.target);
        let wg = t.sda.as_ref().map(|w| w.geo.as_slice());
        let ws = t.sda.as_ref().map(|w| w.sem.as_slice());
        let mg = mmd2(&pick(&fl, s), &pick(&fl, g), &t.kernels.geo, wg)?;
        let ms = mmd2(&pick(&soft, s), &pick(&soft, g), &t.kernels.sem, ws)?;
        geo += share * mg.value;
        sem += share * ms.value;
        let scale = lambda * share;
        for (rows, grads) in [(s, &mg.grad_a), (g, &mg.grad_b)] {
            for (&i, gr) in rows.iter().zip(grads) {
                for (d, v) in d_fl[i].iter_mut().zip(gr) {
                    *d += scale * v;
                }
            }
        }
        for (rows, grads) in [(s, &ms.grad_a), (g, &ms.grad_b)] {
            for (&i, gr) in rows.iter().zip(grads) {
                for (d, v) in d_soft[i].iter_mut().zip(&gr[..fh_dim]) {
                    *d += scale * v;
                }
            }
        }
    }
    let ali_geo = finite(geo, "L_ALI_geo")?;
    let ali_sem = finite(sem, "L_ALI_sem")?;
    let ali = ali_geo + ali_sem;
    let total = finite(cls + lambda * ali, "L_total")?;

    let mut upstream = Upstream::logits(ce.d_logits);
    if lambda > 0.0 && !terms.is_empty() {
        let d_fh = (0..b).map(|i| unit_backward(&fh_raw[i], norms[i], &d_soft[i])).collect();
        upstream = upstream.add(Upstream {
            logits: None,
            fl: Some(d_fl),
            fh: Some(d_fh),
        });
    }
    let grad = backward(params, trace, &upstream)?;
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("gradient of L_total is not finite".into()));
    }
    Ok((
        LossBreakdown {
            cls,
            ali_geo,
            ali_sem,
            ali,
            total,
            lambda,
        },
        grad,
    ))
}
