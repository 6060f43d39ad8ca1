//! Soft dynamic time warping with squared-Euclidean point cost.
//!
//! Forward recursion `R(i,j) = d(x_i, y_j) + softmin_γ(R(i-1,j), R(i,j-1), R(i-1,j-1))`
//! and the matching backward recursion over alignment responsibilities
//! (the `E` matrix), which yields the gradient w.r.t. `x`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

/// `-γ log Σ exp(-v/γ)`, shifted by the minimum for stability.
fn softmin(a: f64, b: f64, c: f64, gamma: f64) -> f64 {
    let m = a.min(b).min(c);
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    let s = (-(a - m) / gamma).exp() + (-(b - m) / gamma).exp() + (-(c - m) / gamma).exp();
    m - gamma * s.ln()
}

/// Loss value and `dLoss/dX`.
pub fn softdtw(x: &[[f64; 2]], y: &[[f64; 2]], gamma: f64) -> Result<(f64, Vec<[f64; 2]>)> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "softdtw gamma must be > 0, got {gamma}"
        )));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("softdtw needs non-empty sequences"));
    }
    let (n, m) = (x.len(), y.len());
    let w = m + 2;
    // (n+2) x (m+2), 1-based interior
    let mut d = vec![0.0; (n + 2) * w];
    for i in 1..=n {
        for j in 1..=m {
            d[i * w + j] = sq_dist(&x[i - 1], &y[j - 1]);
        }
    }
    let mut r = vec![f64::INFINITY; (n + 2) * w];
    r[0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let s = softmin(
                r[(i - 1) * w + j],
                r[i * w + j - 1],
                r[(i - 1) * w + j - 1],
                gamma,
            );
            r[i * w + j] = d[i * w + j] + s;
        }
    }
    let loss = r[n * w + m];
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("softdtw produced {loss}")));
    }

    for i in 1..=n + 1 {
        r[i * w + m + 1] = f64::NEG_INFINITY;
    }
    for j in 1..=m + 1 {
        r[(n + 1) * w + j] = f64::NEG_INFINITY;
    }
    r[(n + 1) * w + m + 1] = loss;
    let mut e = vec![0.0; (n + 2) * w];
    e[(n + 1) * w + m + 1] = 1.0;
    for i in (1..=n).rev() {
        for j in (1..=m).rev() {
            let rij = r[i * w + j];
            let a = ((r[(i + 1) * w + j] - rij - d[(i + 1) * w + j]) / gamma).exp();
            let b = ((r[i * w + j + 1] - rij - d[i * w + j + 1]) / gamma).exp();
            let c = ((r[(i + 1) * w + j + 1] - rij - d[(i + 1) * w + j + 1]) / gamma).exp();
            e[i * w + j] =
                e[(i + 1) * w + j] * a + e[i * w + j + 1] * b + e[(i + 1) * w + j + 1] * c;
        }
    }
    let mut grad = vec![[0.0; 2]; n];
    for i in 1..=n {
        for j in 1..=m {
            let eij = e[i * w + j];
            if eij == 0.0 {
                continue;
            }
            grad[i - 1][0] += eij * 2.0 * (x[i - 1][0] - y[j - 1][0]);
            grad[i - 1][1] += eij * 2.0 * (x[i - 1][1] - y[j - 1][1]);
        }
    }
    Ok((loss, grad))
}

/// SoftDTW between a `[L, 2]` prediction tensor and a fixed target, as a
/// differentiable scalar on the tape.
pub fn softdtw_loss(pred: &Tensor, target: &[[f64; 2]], gamma: f64) -> Result<Tensor> {
    let s = pred.shape();
    if s.len() != 2 || s[1] != 2 {
        return Err(Error::Shape(format!(
            "softdtw prediction must be [L, 2], got {s:?}"
        )));
    }
    let x: Vec<[f64; 2]> = pred.data().chunks(2).map(|c| [c[0], c[1]]).collect();
    let (loss, grad) = softdtw(&x, target, gamma)?;
    Tensor::external_scalar(pred, loss, grad.into_iter().flatten().collect())
}
