use serde::{Deserialize, Serialize};

use super::{CounterfactualConfig, ExplainError, Objective, ObjectiveValue, API_VERSION};
use crate::regressor::RegressorModel;
use crate::synth::{AttributeVector, RawAttributes, ATTRIBUTE_NAMES};

/// Steps shorter than this end backtracking; the iterate is then stationary
/// to working precision.
const MIN_STEP: f64 = 1e-12;
/// Consecutive objective increases (without backtracking) treated as divergence.
const DIVERGENCE_RUN: usize = 10;
/// Ridge of the image metric, relative to its trace.
const METRIC_RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualReport {
    pub api_version: u32,
    pub seed: u64,
    pub initial_attrs: AttributeVector,
    pub final_attrs: AttributeVector,
    /// `final_attrs - initial_attrs`, componentwise.
    pub deltas: RawAttributes,
    pub initial_prediction: f64,
    pub target: f64,
    pub achieved_prediction: f64,
    /// `|achieved_prediction - target|`.
    pub target_gap: f64,
    /// Objective value at the start and after every accepted step.
    pub objective_trajectory: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub config: CounterfactualConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
}

fn project(values: [f64; 4]) -> AttributeVector {
    AttributeVector::clamped(values)
}

/// Solves `(m + ridge I) x = b` by Cholesky; `m` is symmetric positive
/// semidefinite and the ridge keeps directions the image ignores bounded.
fn solve_metric(m: &[[f64; 4]; 4], b: &[f64; 4]) -> [f64; 4] {
    let trace: f64 = (0..4).map(|i| m[i][i]).sum();
    let ridge = METRIC_RIDGE * trace.max(f64::MIN_POSITIVE);
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let mut s = m[i][j] + if i == j { ridge } else { 0.0 };
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = if i == j { s.max(ridge).sqrt() } else { s / l[j][j] };
        }
    }
    let mut y = [0.0; 4];
    for i in 0..4 {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        x[i] = (y[i] - (i + 1..4).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

/// The gradient mapped through the inverse image metric and rescaled to the
/// gradient's Euclidean length.
fn metric_direction(objective: &Objective, x: &AttributeVector, grad: &[f64; 4]) -> Result<[f64; 4], ExplainError> {
    let d = solve_metric(&objective.image_metric(x)?, grad);
    let (gn, dn) = (norm(grad), norm(&d));
    if !(dn > 0.0) || !dn.is_finite() {
        return Ok([0.0; 4]);
    }
    Ok(d.map(|v| v * gn / dn))
}

fn norm(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Halves `step` along `-direction` until the objective does not increase.
/// `None` once the step underflows or the projected step no longer moves.
fn line_search(
    objective: &Objective,
    x: &AttributeVector,
    current: &ObjectiveValue,
    direction: &[f64; 4],
    mut step: f64,
) -> Result<Option<(AttributeVector, ObjectiveValue, f64)>, ExplainError> {
    loop {
        let candidate = step_from(x, direction, step);
        if candidate == *x {
            return Ok(None);
        }
        let next = objective.evaluate(&candidate)?;
        if next.value <= current.value {
            return Ok(Some((candidate, next, step)));
        }
        step *= 0.5;
        if step < MIN_STEP {
            return Ok(None);
        }
    }
}

fn step_from(x: &AttributeVector, grad: &[f64; 4], step: f64) -> AttributeVector {
    let a = x.as_array();
    project(std::array::from_fn(|i| a[i] - step * grad[i]))
}

/// Projected gradient descent on the objective, starting at `attrs`.
///
/// After each step the iterate is clamped into `[0, 1]^4`. With backtracking
/// the step is halved until the objective does not increase, and regrows by
/// a factor of two (up to the configured size) after each accepted step.
/// The search stops when the objective changes by less than the tolerance,
/// when the projected step vanishes, or after `max_iters` accepted steps.
///
/// The distance term is a cone at `A' = A`, where its gradient says nothing
/// about its slope. Size changes every pixel, so it is the steepest
/// direction of that cone, yet it often dominates the prediction gradient.
/// Plain descent then finds no decrease along `-g` and stops at the start
/// even though cheaper directions (porosity touches few pixels) descend.
/// So whenever a step along `-g` fails or gains less than the tolerance,
/// the search first retries along `-M^-1 g` with `M = J^T J / N` from the
/// render Jacobian. To first order
/// that direction changes the objective by `t (sqrt(q) - q)` with
/// `q = g^T M^-1 g`, which is a decrease exactly when the start is not a
/// minimum of the linearized problem.
pub fn counterfactual(
    model: &RegressorModel,
    seed: u64,
    attrs: &AttributeVector,
    target: f64,
    cfg: &CounterfactualConfig,
) -> Result<CounterfactualReport, ExplainError> {
    let objective = Objective::new(model, seed, attrs, target, cfg)?;
    let initial_prediction = model.predict(objective.base_image())?;

    let mut x = *attrs;
    let mut current = objective.evaluate(&x)?;
    let mut trajectory = vec![current.value];
    let mut step = cfg.step_size;
    let mut converged = false;
    let mut diagnostics = None;
    let mut increases = 0;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let (candidate, next, used) = if cfg.backtracking {
            let plain = line_search(&objective, &x, &current, &current.gradient, step)?;
            let stalled = plain.as_ref().is_none_or(|s| current.value - s.1.value < cfg.tolerance);
            let retry = if stalled {
                let direction = metric_direction(&objective, &x, &current.gradient)?;
                line_search(&objective, &x, &current, &direction, cfg.step_size)?
                    .filter(|s| current.value - s.1.value >= cfg.tolerance)
            } else {
                None
            };
            match retry.or(plain) {
                Some(found) => found,
                None => {
                    converged = true;
                    break;
                }
            }
        } else {
            let candidate = step_from(&x, &current.gradient, step);
            if candidate == x {
                converged = true;
                break;
            }
            let next = objective.evaluate(&candidate)?;
            if next.value > current.value {
                increases += 1;
            } else {
                increases = 0;
            }
            (candidate, next, step)
        };

        let change = (current.value - next.value).abs();
        x = candidate;
        current = next;
        trajectory.push(current.value);
        iterations += 1;

        if !cfg.backtracking && increases >= DIVERGENCE_RUN {
            diagnostics = Some(format!(
                "objective increased for {DIVERGENCE_RUN} consecutive steps (last value {:.6e}); reduce the step size",
                current.value
            ));
            break;
        }
        if change < cfg.tolerance {
            converged = true;
            break;
        }
        if cfg.backtracking {
            step = (used * 2.0).min(cfg.step_size);
        }
    }

    let a = attrs.as_array();
    let b = x.as_array();
    Ok(CounterfactualReport {
        api_version: API_VERSION,
        seed,
        initial_attrs: *attrs,
        final_attrs: x,
        deltas: RawAttributes {
            size: b[0] - a[0],
            porosity: b[1] - a[1],
            dispersity: b[2] - a[2],
            facetness: b[3] - a[3],
        },
        initial_prediction,
        target,
        achieved_prediction: current.prediction,
        target_gap: (current.prediction - target).abs(),
        objective_trajectory: trajectory,
        iterations,
        converged,
        config: *cfg,
        diagnostics,
    })
}

/// The report's deltas as `(name, delta)` pairs in attribute order.
pub fn attribute_deltas(report: &CounterfactualReport) -> Vec<(&'static str, f64)> {
    let d = report.deltas;
    ATTRIBUTE_NAMES
        .iter()
        .copied()
        .zip([d.size, d.porosity, d.dispersity, d.facetness])
        .collect()
}
