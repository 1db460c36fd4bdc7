use super::{CounterfactualConfig, ExplainError};
use crate::autodiff::{Graph, NodeId, Tensor};
use crate::regressor::RegressorModel;
use crate::synth::{render, render_with_jacobian, AttributeVector, ImageTensor, NormOrder, ParticleLayout, DEFAULT_PARTICLE_COUNT};

/// Smoothing of the image-distance norm so its gradient exists at zero.
pub const DISTANCE_SMOOTHING: f64 = 1e-6;

/// One evaluation of the counterfactual objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub gradient: [f64; 4],
    /// `lambda * (normalized prediction - normalized target)^2`.
    pub prediction_term: f64,
    /// Smoothed mean-per-pixel distance to the original tile.
    pub distance_term: f64,
    /// Prediction for the candidate, in stress units.
    pub prediction: f64,
}

/// `J(A') = lambda * (R(G(I; A')) - p')^2 + ||G(I; A) - G(I; A')||_p`
/// for a fixed tile, base attributes and target, with `R` in normalized
/// units and the distance taken per pixel.
///
/// The norm is smoothed: order 2 uses `sqrt(mean(d^2) + e^2) - e` and order 1
/// uses `mean(sqrt(d^2 + e^2)) - e` with `e = 1e-6`, which are zero at
/// `A' = A` and differentiable everywhere.
pub struct Objective<'a> {
    model: &'a RegressorModel,
    layout: ParticleLayout,
    base_image: ImageTensor,
    target_normalized: f64,
    lambda: f64,
    order: NormOrder,
}

impl<'a> Objective<'a> {
    pub fn new(
        model: &'a RegressorModel,
        seed: u64,
        base: &AttributeVector,
        target: f64,
        cfg: &CounterfactualConfig,
    ) -> Result<Self, ExplainError> {
        cfg.validate()?;
        if !target.is_finite() {
            return Err(ExplainError::Config(format!("target stress must be finite, got {target}")));
        }
        let layout = ParticleLayout::from_seed(seed, DEFAULT_PARTICLE_COUNT);
        let base_image = render(&layout, base, model.resolution())?;
        Ok(Self {
            model,
            layout,
            base_image,
            target_normalized: model.normalize(target),
            lambda: cfg.lambda,
            order: cfg.norm_order,
        })
    }

    pub fn base_image(&self) -> &ImageTensor {
        &self.base_image
    }

    fn distance_node(&self, g: &mut Graph, image: NodeId) -> Result<NodeId, ExplainError> {
        let base = g.constant(self.base_image.to_tensor());
        let diff = g.sub(image, base)?;
        let sq = g.mul(diff, diff)?;
        let e = DISTANCE_SMOOTHING;
        let node = match self.order {
            NormOrder::L2 => {
                let m = g.mean(sq)?;
                let s = g.add_scalar(m, e * e)?;
                let r = g.powf(s, 0.5)?;
                g.add_scalar(r, -e)?
            }
            NormOrder::L1 => {
                let s = g.add_scalar(sq, e * e)?;
                let r = g.powf(s, 0.5)?;
                let m = g.mean(r)?;
                g.add_scalar(m, -e)?
            }
        };
        Ok(node)
    }

    /// `J^T J / N` for the render Jacobian `J` at `at`: the metric that
    /// measures an attribute step by the mean squared pixel change it causes.
    pub fn image_metric(&self, at: &AttributeVector) -> Result<[[f64; 4]; 4], ExplainError> {
        let (image, jacobian) = render_with_jacobian(&self.layout, at, self.model.resolution())?;
        let n = image.data().len() as f64;
        let mut metric = [[0.0; 4]; 4];
        for row in jacobian.chunks(4) {
            for i in 0..4 {
                for j in 0..4 {
                    metric[i][j] += row[i] * row[j] / n;
                }
            }
        }
        Ok(metric)
    }

    /// Value and gradient at `candidate` by backprop through renderer and network.
    pub fn evaluate(&self, candidate: &AttributeVector) -> Result<ObjectiveValue, ExplainError> {
        let res = self.model.resolution();
        let (image, jacobian) = render_with_jacobian(&self.layout, candidate, res)?;
        let mut g = Graph::new();
        let attrs = g.param(Tensor::vector(candidate.as_array().to_vec()));
        let img = g.linearized(attrs, image.to_tensor(), jacobian)?;
        let params = self.model.bind(&mut g, false);
        let y = self.model.forward(&mut g, img, &params)?;
        let mse = g.mse(y, Tensor::scalar(self.target_normalized))?;
        let pred_term = g.scale(mse, self.lambda)?;
        let dist_term = self.distance_node(&mut g, img)?;
        let total = g.add(pred_term, dist_term)?;

        let (p, d) = (g.value(pred_term).item(), g.value(dist_term).item());
        if !p.is_finite() {
            return Err(ExplainError::NonFinite { term: "prediction" });
        }
        if !d.is_finite() {
            return Err(ExplainError::NonFinite { term: "distance" });
        }
        let grads = g.backward(total)?;
        let gv = grads.get(attrs).expect("attribute leaf").data();
        let gradient = [gv[0], gv[1], gv[2], gv[3]];
        if gradient.iter().any(|v| !v.is_finite()) {
            return Err(ExplainError::NonFinite { term: "gradient" });
        }
        Ok(ObjectiveValue {
            value: g.value(total).item(),
            gradient,
            prediction_term: p,
            distance_term: d,
            prediction: self.model.denormalize(g.value(y).item()),
        })
    }
}
