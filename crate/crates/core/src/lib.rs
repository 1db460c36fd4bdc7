//! Concept-level counterfactual attribution for image regressors.
//!
//! A differentiable procedural micrograph renderer maps four actionable
//! material attributes to a grayscale tile; a small CNN predicts peak stress
//! from the tile. Because both stages are differentiable, the attributes that
//! move a prediction toward a target can be found by gradient descent.

pub mod autodiff;
pub mod rng;

pub use autodiff::{Graph, GraphError, NodeId, Primitive, Tensor};
pub mod synth;

pub use synth::{image_distance, render_edit, AttributeVector, ImageTensor, NormOrder, ParticleLayout};
pub mod persist;
pub mod world;

pub use world::{oracle_stress, DatasetManifest, LotSpec};
pub mod regressor;

pub use regressor::{RegressorModel, TrainConfig};
pub mod explain;

pub use explain::{counterfactual, forward_sweep, CounterfactualConfig, CounterfactualReport, SweepResult};
