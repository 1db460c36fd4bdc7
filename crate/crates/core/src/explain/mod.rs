//! Concept-level explanations of the regressor: forward sweeps over one
//! attribute, counterfactual attribute search toward a target prediction and
//! the reconstruction prediction-shift audit.

mod audit;
mod counterfactual;
mod objective;
mod sweep;

use serde::{Deserialize, Serialize};

pub use audit::{audit_prediction_shift, HistogramBin, ShiftStats};
pub use counterfactual::{attribute_deltas, counterfactual, CounterfactualReport};
pub use objective::{Objective, ObjectiveValue, DISTANCE_SMOOTHING};
pub use sweep::{forward_sweep, linear_grid, SweepResult};

use crate::autodiff::GraphError;
use crate::regressor::ModelError;
use crate::synth::{NormOrder, SynthError};

/// Version stamped into every JSON artifact this module produces.
pub const API_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("attribute index {0} is out of range 0..4")]
    Index(usize),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("non-finite {term} term in the objective")]
    NonFinite { term: &'static str },
    #[error("manifest has no samples")]
    EmptyManifest,
    #[error("sample references unknown lot {0}")]
    UnknownLot(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Settings of the counterfactual search. The attribute box is `[0, 1]^4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualConfig {
    /// Weight of the prediction term.
    pub lambda: f64,
    pub norm_order: NormOrder,
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop when the objective changes by less than this between iterations.
    pub tolerance: f64,
    /// Halve the step until the objective does not increase.
    pub backtracking: bool,
}

impl Default for CounterfactualConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            norm_order: NormOrder::L2,
            step_size: 0.05,
            max_iters: 300,
            tolerance: 1e-7,
            backtracking: true,
        }
    }
}

impl CounterfactualConfig {
    pub fn validate(&self) -> Result<(), ExplainError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ExplainError::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(ExplainError::Config(format!("step size must be > 0, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(ExplainError::Config("max_iters must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(ExplainError::Config(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_check;
    use crate::regressor::RegressorModel;
    use crate::synth::{render_edit, AttributeVector, RawAttributes};
    use crate::world::{DatasetConfig, DatasetManifest};

    fn model() -> RegressorModel {
        RegressorModel::init(32, 3).unwrap()
    }

    fn base() -> AttributeVector {
        AttributeVector::new(0.4, 0.6, 0.3, 0.5).unwrap()
    }

    #[test]
    fn objective_vanishes_at_start_with_current_target() {
        let m = model();
        let p = m.predict(&render_edit(11, &base(), 32).unwrap()).unwrap();
        let obj = Objective::new(&m, 11, &base(), p, &CounterfactualConfig::default()).unwrap();
        let v = obj.evaluate(&base()).unwrap();
        assert!(v.value.abs() < 1e-12, "{}", v.value);
        assert_eq!(v.distance_term, 0.0);
    }

    #[test]
    fn zero_lambda_is_pure_distance_minimized_at_base() {
        let m = model();
        let cfg = CounterfactualConfig { lambda: 0.0, ..Default::default() };
        let obj = Objective::new(&m, 11, &base(), 500.0, &cfg).unwrap();
        assert_eq!(obj.evaluate(&base()).unwrap().value, 0.0);
        let moved = obj.evaluate(&base().with(0, 0.5).unwrap()).unwrap();
        assert!(moved.value > 0.0);
        assert_eq!(moved.prediction_term, 0.0);
        let r = counterfactual(&m, 11, &base(), 500.0, &cfg).unwrap();
        assert!(r.final_attrs.linf_distance(&base()) < 1e-9);
    }

    #[test]
    fn objective_gradient_matches_central_differences() {
        let m = model();
        for (order, target) in [(NormOrder::L2, 150.0), (NormOrder::L1, 120.0)] {
            let cfg = CounterfactualConfig { lambda: 3.0, norm_order: order, ..Default::default() };
            let obj = Objective::new(&m, 5, &base(), target, &cfg).unwrap();
            let point = [0.45, 0.55, 0.35, 0.6];
            let report = finite_diff_check(
                |x: &[f64]| -> Result<(f64, Vec<f64>), ExplainError> {
                    let v = obj.evaluate(&AttributeVector::from_slice(x)?)?;
                    Ok((v.value, v.gradient.to_vec()))
                },
                &point,
                1e-5,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-3, "{order:?}: {report:?}");
        }
    }

    #[test]
    fn nonfinite_target_rejected() {
        let m = model();
        let r = Objective::new(&m, 1, &base(), f64::NAN, &CounterfactualConfig::default());
        assert!(matches!(r, Err(ExplainError::Config(_))));
    }

    #[test]
    fn config_validation() {
        let bad = [
            CounterfactualConfig { lambda: -1.0, ..Default::default() },
            CounterfactualConfig { max_iters: 0, ..Default::default() },
            CounterfactualConfig { tolerance: 0.0, ..Default::default() },
            CounterfactualConfig { step_size: f64::NAN, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(CounterfactualConfig::default().validate().is_ok());
    }

    #[test]
    fn identity_counterfactual_stays_put() {
        let m = model();
        let p = m.predict(&render_edit(8, &base(), 32).unwrap()).unwrap();
        let r = counterfactual(&m, 8, &base(), p, &CounterfactualConfig::default()).unwrap();
        assert!(r.final_attrs.linf_distance(&base()) < 0.01);
        assert!(r.converged);
    }

    #[test]
    fn report_invariants() {
        let m = model();
        let p = m.predict(&render_edit(9, &base(), 32).unwrap()).unwrap();
        let cfg = CounterfactualConfig { lambda: 50.0, max_iters: 40, ..Default::default() };
        let r = counterfactual(&m, 9, &base(), p + 30.0, &cfg).unwrap();
        let (a, b) = (r.initial_attrs.as_array(), r.final_attrs.as_array());
        let d = attribute_deltas(&r);
        for i in 0..4 {
            assert_eq!(d[i].1, b[i] - a[i]);
            assert!((0.0..=1.0).contains(&b[i]));
        }
        for w in r.objective_trajectory.windows(2) {
            assert!(w[1] <= w[0] + cfg.tolerance, "{w:?}");
        }
        assert_eq!(r.objective_trajectory.len(), r.iterations + 1);
        assert_eq!(r.target_gap, (r.achieved_prediction - r.target).abs());
        assert_eq!(r, counterfactual(&m, 9, &base(), p + 30.0, &cfg).unwrap());
    }

    #[test]
    fn runaway_steps_report_divergence() {
        let m = model();
        let cfg = CounterfactualConfig {
            lambda: 1e6,
            step_size: 1e3,
            backtracking: false,
            max_iters: 100,
            ..Default::default()
        };
        let r = counterfactual(&m, 4, &base(), 400.0, &cfg).unwrap();
        assert!(r.final_attrs.as_array().iter().all(|v| (0.0..=1.0).contains(v)));
        if !r.converged {
            assert!(r.diagnostics.is_some() || r.iterations == cfg.max_iters);
        }
    }

    #[test]
    fn deltas_are_componentwise_differences() {
        let m = model();
        let mut r = counterfactual(&m, 2, &base(), 0.0, &CounterfactualConfig { max_iters: 1, ..Default::default() }).unwrap();
        r.initial_attrs = AttributeVector::uniform(0.5).unwrap();
        r.final_attrs = AttributeVector::new(0.3, 0.6, 0.6, 0.55).unwrap();
        r.deltas = RawAttributes { size: -0.2, porosity: 0.1, dispersity: 0.1, facetness: 0.05 };
        let names: Vec<_> = attribute_deltas(&r).iter().map(|p| p.0).collect();
        assert_eq!(names, ["size", "porosity", "dispersity", "facetness"]);
        let d: Vec<_> = attribute_deltas(&r).iter().map(|p| p.1).collect();
        assert_eq!(d, [-0.2, 0.1, 0.1, 0.05]);
        r.deltas = RawAttributes { size: 0.0, porosity: 0.0, dispersity: 0.0, facetness: 0.0 };
        assert!(attribute_deltas(&r).iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn single_point_sweep_matches_baseline() {
        let m = model();
        let a = base();
        let baseline = m.predict(&render_edit(21, &a, 32).unwrap()).unwrap();
        for j in 0..4 {
            let s = forward_sweep(&m, 21, &a, j, &[a.as_array()[j]]).unwrap();
            assert_eq!(s.predictions, [baseline]);
            assert_eq!(s.fixed_attrs, a);
        }
    }

    #[test]
    fn sweep_rejects_bad_input() {
        let m = model();
        assert!(matches!(forward_sweep(&m, 1, &base(), 4, &[0.5]), Err(ExplainError::Index(4))));
        assert!(matches!(forward_sweep(&m, 1, &base(), 0, &[]), Err(ExplainError::Grid(_))));
        assert!(matches!(forward_sweep(&m, 1, &base(), 0, &[0.5, 0.2]), Err(ExplainError::Grid(_))));
        assert!(matches!(forward_sweep(&m, 1, &base(), 0, &[0.5, 1.2]), Err(ExplainError::Grid(_))));
    }

    #[test]
    fn sweep_changes_only_the_chosen_attribute() {
        let m = model();
        let grid = linear_grid(0.1, 0.9, 5);
        let s = forward_sweep(&m, 3, &base(), 2, &grid).unwrap();
        for (g, p) in grid.iter().zip(&s.predictions) {
            let a = base().with(2, *g).unwrap();
            assert_eq!(*p, m.predict(&render_edit(3, &a, 32).unwrap()).unwrap());
        }
        assert_eq!(s.attr_name, "dispersity");
    }

    fn tiny_manifest(jitter: f64) -> DatasetManifest {
        DatasetManifest::generate(4, &DatasetConfig { tiles_per_lot: 5, jitter, ..Default::default() }).unwrap()
    }

    #[test]
    fn audit_without_jitter_is_exactly_zero() {
        let s = audit_prediction_shift(&model(), &tiny_manifest(0.0)).unwrap();
        assert_eq!(s.samples, 20);
        assert_eq!(s.mean_abs_shift, 0.0);
        assert_eq!(s.max_abs_shift, 0.0);
        assert_eq!(s.histogram.iter().map(|b| b.count).sum::<usize>(), 20);
    }

    #[test]
    fn audit_is_order_invariant() {
        let m = model();
        let mut manifest = tiny_manifest(0.03);
        let a = audit_prediction_shift(&m, &manifest).unwrap();
        manifest.samples.reverse();
        let b = audit_prediction_shift(&m, &manifest).unwrap();
        assert_eq!(a, b);
        assert!(a.mean_abs_shift > 0.0);
        assert_eq!(a.histogram.len(), 10);
    }

    #[test]
    fn audit_rejects_empty_manifest() {
        let mut manifest = tiny_manifest(0.0);
        manifest.samples.clear();
        assert!(matches!(audit_prediction_shift(&model(), &manifest), Err(ExplainError::EmptyManifest)));
    }
}
