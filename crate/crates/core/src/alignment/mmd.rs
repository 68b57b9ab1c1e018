use crate::{Error, Result};

/// Equal-weight mixture of RBF kernels `exp(-d² / (2σ²))`, stored as σ².
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub sigma_sq: Vec<f64>,
}

impl KernelSpec {
    pub fn new(sigma_sq: Vec<f64>) -> Result<Self> {
        if sigma_sq.is_empty() || sigma_sq.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Domain("kernel bandwidths must be positive and finite".into()));
        }
        Ok(Self { sigma_sq })
    }

    pub fn single(sigma: f64) -> Result<Self> {
        Self::new(vec![sigma * sigma])
    }

    /// Kernel value at squared distance `d2`.
    pub fn eval(&self, d2: f64) -> f64 {
        let j = self.sigma_sq.len() as f64;
        self.sigma_sq.iter().map(|s| (-d2 / (2.0 * s)).exp()).sum::<f64>() / j
    }

    /// Kernel value and its derivative with respect to `d2`.
    fn eval_with_slope(&self, d2: f64) -> (f64, f64) {
        let j = self.sigma_sq.len() as f64;
        let mut k = 0.0;
        let mut slope = 0.0;
        for s in &self.sigma_sq {
            let e = (-d2 / (2.0 * s)).exp();
            k += e;
            slope -= e / (2.0 * s);
        }
        (k / j, slope / j)
    }
}

/// σ² list = median pairwise squared distance of `a ∪ b` times each multiplier.
/// Falls back to a median of 1 when every row coincides.
pub fn median_heuristic(a: &[Vec<f64>], b: &[Vec<f64>], multipliers: &[f64]) -> Result<KernelSpec> {
    let rows: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let mut d2 = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d2.push(sq_dist(rows[i], rows[j]));
        }
    }
    d2.sort_by(f64::total_cmp);
    let median = match d2.len() {
        0 => 0.0,
        n if n % 2 == 1 => d2[n / 2],
        n => 0.5 * (d2[n / 2 - 1] + d2[n / 2]),
    };
    let base = if median > 1e-12 { median } else { 1.0 };
    KernelSpec::new(multipliers.iter().map(|m| m * base).collect())
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmdOutput {
    pub value: f64,
    /// Mean of `k(a, a')` over all ordered pairs, diagonal included.
    pub mean_aa: f64,
    /// Weighted mean of `k(a, b)`.
    pub mean_ab: f64,
    pub mean_bb: f64,
    pub grad_a: Vec<Vec<f64>>,
    pub grad_b: Vec<Vec<f64>>,
}

/// Biased (V-statistic) squared MMD: `mean k(a,a') − 2·mean ω k(a,b) + mean k(b,b')`.
///
/// With `pair_weights` (an `n_a × n_b` matrix), every cross term is scaled by
/// its weight after the matrix is rescaled to mean one. Weights are constants:
/// no gradient flows into them.
pub fn mmd2(a: &[Vec<f64>], b: &[Vec<f64>], kernel: &KernelSpec, pair_weights: Option<&[Vec<f64>]>) -> Result<MmdOutput> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain(format!(
            "MMD needs at least 2 samples per side, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    mmd2_relaxed(a, b, kernel, pair_weights)
}

/// [`mmd2`] without the two-samples-per-side requirement (single points allowed).
pub fn mmd2_relaxed(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    kernel: &KernelSpec,
    pair_weights: Option<&[Vec<f64>]>,
) -> Result<MmdOutput> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("MMD on an empty sample set".into()));
    }
    let d = a[0].len();
    if a.iter().chain(b).any(|r| r.len() != d) {
        return Err(Error::Domain("feature rows differ in dimension".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let weights = match pair_weights {
        Some(w) => {
            if w.len() != na || w.iter().any(|r| r.len() != nb) {
                return Err(Error::Contract(format!("pair weights must be {na} × {nb}")));
            }
            let total: f64 = w.iter().flatten().sum();
            if !(total > 0.0) || w.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Domain("pair weights must be non-negative with a positive sum".into()));
            }
            let scale = (na * nb) as f64 / total;
            Some(w.iter().map(|r| r.iter().map(|v| v * scale).collect::<Vec<f64>>()).collect::<Vec<_>>())
        }
        None => None,
    };

    let mut grad_a = vec![vec![0.0; d]; na];
    let mut grad_b = vec![vec![0.0; d]; nb];

    let within = |x: &[Vec<f64>], grad: &mut [Vec<f64>]| -> f64 {
        let n = x.len();
        let coef = 2.0 / (n * n) as f64;
        let mut sum = n as f64; // diagonal, k(x, x) = 1
        for i in 0..n {
            for j in i + 1..n {
                let (k, slope) = kernel.eval_with_slope(sq_dist(&x[i], &x[j]));
                sum += 2.0 * k;
                // d/dx_i of sum_{p,q} k(x_p, x_q) = 2 Σ_q slope · 2(x_i − x_q)
                for t in 0..d {
                    let g = coef * slope * 2.0 * (x[i][t] - x[j][t]);
                    grad[i][t] += g;
                    grad[j][t] -= g;
                }
            }
        }
        sum / (n * n) as f64
    };
    let mean_aa = within(a, &mut grad_a);
    let mean_bb = within(b, &mut grad_b);

    let cross_coef = -2.0 / (na * nb) as f64;
    let mut cross = 0.0;
    for i in 0..na {
        for j in 0..nb {
            let w = weights.as_ref().map_or(1.0, |w| w[i][j]);
            let (k, slope) = kernel.eval_with_slope(sq_dist(&a[i], &b[j]));
            cross += w * k;
            for t in 0..d {
                let g = cross_coef * w * slope * 2.0 * (a[i][t] - b[j][t]);
                grad_a[i][t] += g;
                grad_b[j][t] -= g;
            }
        }
    }
    let mean_ab = cross / (na * nb) as f64;
    Ok(MmdOutput {
        value: mean_aa - 2.0 * mean_ab + mean_bb,
        mean_aa,
        mean_ab,
        mean_bb,
        grad_a,
        grad_b,
    })
}

/// Appends `scale · onehot(label)` to every feature row.
pub fn soft_mmd_features(features: &[Vec<f64>], labels: &[usize], num_classes: usize, scale: f64) -> Vec<Vec<f64>> {
    features
        .iter()
        .zip(labels)
        .map(|(f, &y)| {
            let mut row = f.clone();
            row.extend((0..num_classes).map(|c| if c == y { scale } else { 0.0 }));
            row
        })
        .collect()
}

/// Drops the appended label block, keeping the first `dim` columns.
pub fn strip_soft_block(features: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    features.iter().map(|f| f[..dim].to_vec()).collect()
}
