use crate::{Error, Result};

/// Checks non-negativity and that the entries sum to one within `1e-6`.
pub fn check_simplex(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Domain("empty probability vector".into()));
    }
    if let Some(i) = p.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("probability entry {i} is {}", p[i])));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!("probabilities sum to {sum}")));
    }
    Ok(())
}

/// `sum_c x(c) ln(x(c) / y(c))` on vectors with strictly positive entries.
pub fn kl_divergence(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&a, &b)| a * (a / b).ln()).sum()
}

fn smooth(p: &[f64], eps: f64) -> Vec<f64> {
    let z = 1.0 + eps * p.len() as f64;
    p.iter().map(|v| (v + eps) / z).collect()
}

/// Symmetrized KL: `½ KL(X‖Y) + ½ KL(Y‖X)` after adding `eps` to every
/// entry and renormalizing.
pub fn js_distance(x: &[f64], y: &[f64], eps: f64) -> Result<f64> {
    check_simplex(x)?;
    check_simplex(y)?;
    if x.len() != y.len() {
        return Err(Error::Domain(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    let xs = smooth(x, eps);
    let ys = smooth(y, eps);
    Ok(0.5 * kl_divergence(&xs, &ys) + 0.5 * kl_divergence(&ys, &xs))
}
