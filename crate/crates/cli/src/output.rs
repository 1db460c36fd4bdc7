//! JSON payloads shared by the subcommands and the service.

use serde::{Deserialize, Serialize};

use knoblab::explain::API_VERSION;
use knoblab::regressor::EpochMetrics;
use knoblab::AttributeVector;

/// Serializes a payload exactly as both interfaces emit it.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("payloads serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub api_version: u32,
    pub seed: u64,
    pub attrs: AttributeVector,
    pub stress: f64,
}

impl Prediction {
    pub fn new(seed: u64, attrs: AttributeVector, stress: f64) -> Self {
        Self {
            api_version: API_VERSION,
            seed,
            attrs,
            stress,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub api_version: u32,
    pub samples: usize,
    pub resolution: usize,
    pub label_range: (f64, f64),
    pub history: Vec<EpochMetrics>,
    pub val_rmse: f64,
    pub val_mae: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub api_version: u32,
    pub cases_per_primitive: usize,
    pub objective_cases: usize,
    pub primitive_max_rel_error: f64,
    pub objective_max_rel_error: f64,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}
