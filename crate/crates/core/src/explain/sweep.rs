use serde::{Deserialize, Serialize};

use super::{ExplainError, API_VERSION};
use crate::regressor::RegressorModel;
use crate::synth::{render_edit, AttributeVector, ATTRIBUTE_NAMES};

/// Predictions while one attribute varies and the others stay fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub api_version: u32,
    pub seed: u64,
    pub attr_index: usize,
    pub attr_name: String,
    pub grid: Vec<f64>,
    pub predictions: Vec<f64>,
    pub fixed_attrs: AttributeVector,
}

/// `count` evenly spaced values from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    stop
                } else {
                    start + (stop - start) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

pub fn forward_sweep(
    model: &RegressorModel,
    seed: u64,
    attrs: &AttributeVector,
    attr_index: usize,
    grid: &[f64],
) -> Result<SweepResult, ExplainError> {
    if attr_index >= 4 {
        return Err(ExplainError::Index(attr_index));
    }
    if grid.is_empty() {
        return Err(ExplainError::Grid("grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(ExplainError::Grid(format!("value {bad} is outside [0, 1]")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExplainError::Grid("values must be strictly increasing".into()));
    }
    let predictions = grid
        .iter()
        .map(|&v| {
            let a = attrs.with(attr_index, v)?;
            Ok(model.predict(&render_edit(seed, &a, model.resolution())?)?)
        })
        .collect::<Result<Vec<f64>, ExplainError>>()?;
    Ok(SweepResult {
        api_version: API_VERSION,
        seed,
        attr_index,
        attr_name: ATTRIBUTE_NAMES[attr_index].to_string(),
        grid: grid.to_vec(),
        predictions,
        fixed_attrs: *attrs,
    })
}
