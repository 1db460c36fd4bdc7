use serde::{Deserialize, Serialize};

use super::GraphError;

/// One coordinate of a gradient comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

/// Backprop vs central-difference comparison over every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub entries: Vec<GradEntry>,
}

impl GradReport {
    pub fn merge(reports: impl IntoIterator<Item = GradReport>) -> GradReport {
        let mut out = GradReport {
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            entries: Vec::new(),
        };
        for r in reports {
            out.max_abs_error = out.max_abs_error.max(r.max_abs_error);
            out.max_rel_error = out.max_rel_error.max(r.max_rel_error);
            out.entries.extend(r.entries);
        }
        out
    }
}

/// Compares the gradient returned by `f` at `point` against central
/// differences `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.
///
/// `f` returns the value and its backprop gradient. The relative error of a
/// coordinate is `|analytic - numeric| / max(|analytic|, |numeric|, floor)`
/// with `floor = 1e-6 * max(1, |f(point)|)`, which keeps coordinates whose
/// true derivative is zero from reporting pure round-off as relative error.
pub fn finite_diff_check<F, E>(f: F, point: &[f64], eps: f64) -> Result<GradReport, E>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>), E>,
    E: From<GraphError>,
{
    if !(eps > 0.0) {
        return Err(GraphError::InvalidParameter {
            kind: "finite-diff",
            message: format!("eps must be positive, got {eps}"),
        }
        .into());
    }
    let (f0, analytic) = f(point)?;
    if !f0.is_finite() {
        return Err(GraphError::NumericOverflow { kind: "finite-diff" }.into());
    }
    if analytic.len() != point.len() {
        return Err(GraphError::LengthMismatch {
            shape: vec![point.len()],
            len: analytic.len(),
        }
        .into());
    }
    let floor = 1e-6 * f0.abs().max(1.0);
    let mut probe = point.to_vec();
    let mut entries = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let x = probe[i];
        probe[i] = x + eps;
        let (plus, _) = f(&probe)?;
        probe[i] = x - eps;
        let (minus, _) = f(&probe)?;
        probe[i] = x;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(GraphError::NumericOverflow { kind: "finite-diff" }.into());
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let abs_error = (a - numeric).abs();
        let rel_error = abs_error / a.abs().max(numeric.abs()).max(floor);
        entries.push(GradEntry {
            index: i,
            analytic: a,
            numeric,
            abs_error,
            rel_error,
        });
    }
    Ok(GradReport {
        max_abs_error: entries.iter().map(|e| e.abs_error).fold(0.0, f64::max),
        max_rel_error: entries.iter().map(|e| e.rel_error).fold(0.0, f64::max),
        entries,
    })
}
