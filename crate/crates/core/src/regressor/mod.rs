//! The peak-stress regressor: a small CNN on the autodiff engine.

mod model;
mod train;

pub use model::{default_architecture, LayerSpec, ParamNodes, RegressorModel, DEFAULT_LABEL_RANGE, SUPPORTED_RESOLUTIONS};
pub use train::{
    evaluate, evaluate_with, render_samples, train, EpochMetrics, EvalMetrics, LotError, TrainConfig, TrainOutcome,
};

use crate::autodiff::GraphError;
use crate::synth::SynthError;
use crate::world::Split;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unsupported resolution {0}; expected one of 32, 64, 128")]
    UnsupportedResolution(usize),
    #[error("image is {got:?} but the model expects {expected}x{expected}")]
    ResolutionMismatch { expected: usize, got: (usize, usize) },
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
    #[error("label normalization requires max > min, got ({0}, {1})")]
    Normalization(f64, f64),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("split {0:?} is empty")]
    EmptySplit(Split),
    #[error("training diverged in epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_good: Box<RegressorModel>,
    },
    #[error("training diverged in epoch {epoch}: {source}")]
    DivergedWith {
        epoch: usize,
        #[source]
        source: GraphError,
        last_good: Box<RegressorModel>,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl ModelError {
    /// Model from the last completed epoch, when training diverged.
    pub fn last_good(&self) -> Option<&RegressorModel> {
        match self {
            ModelError::Diverged { last_good, .. } | ModelError::DivergedWith { last_good, .. } => Some(last_good),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{oracle_stress, DatasetConfig, DatasetManifest};

    fn tiny_world(tiles: usize, noise_sd: f64) -> DatasetManifest {
        DatasetManifest::generate(
            4,
            &DatasetConfig {
                tiles_per_lot: tiles,
                jitter: 0.02,
                noise_sd,
                master_seed: 21,
            },
        )
        .unwrap()
    }

    #[test]
    fn oracle_stub_rmse_matches_noise() {
        // Statistics oracle: predicting the noiseless law leaves only label
        // noise, so RMSE estimates noise_sd.
        let m = DatasetManifest::generate(
            30,
            &DatasetConfig {
                tiles_per_lot: 200,
                ..Default::default()
            },
        )
        .unwrap();
        let metrics = evaluate_with(&m, Split::Train, |s| Ok(oracle_stress(&s.attrs))).unwrap();
        assert!((metrics.rmse - 1.0).abs() < 0.15, "{}", metrics.rmse);
        assert!(metrics.rmse >= metrics.mae);
    }

    #[test]
    fn exact_predictions_give_zero_metrics() {
        let m = tiny_world(5, 1.0);
        let metrics = evaluate_with(&m, Split::Train, |s| Ok(s.label)).unwrap();
        assert_eq!((metrics.rmse, metrics.mae), (0.0, 0.0));
        assert!(metrics.per_lot.iter().all(|l| l.mean_error == 0.0));
    }

    #[test]
    fn empty_split_is_an_error() {
        let mut m = tiny_world(5, 1.0);
        m.samples.retain(|s| s.split == Split::Train);
        assert!(matches!(
            evaluate_with(&m, Split::Val, |s| Ok(s.label)),
            Err(ModelError::EmptySplit(Split::Val))
        ));
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let m = tiny_world(12, 0.5);
        let model = RegressorModel::init(32, 4).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            ..Default::default()
        };
        let a = train(&model, &m, &cfg).unwrap();
        let b = train(&model, &m, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history.len(), 3);
        assert!(a.history[1].train_rmse < a.history[0].train_rmse, "{:?}", a.history);
    }
}
