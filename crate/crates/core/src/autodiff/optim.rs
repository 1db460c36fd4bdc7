use serde::{Deserialize, Serialize};

use super::{GraphError, Tensor};

/// Optimizer selection with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }
}

/// Gradient-descent state over a list of named parameter tensors.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Result<Self, GraphError> {
        let ok = match kind {
            OptimizerKind::Sgd { lr } => lr > 0.0,
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        };
        if !ok {
            return Err(GraphError::InvalidParameter {
                kind: "optimizer",
                message: format!("invalid hyperparameters {kind:?}"),
            });
        }
        Ok(Self {
            kind,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Replaces the step size; used for learning-rate schedules.
    pub fn set_lr(&mut self, lr: f64) {
        match &mut self.kind {
            OptimizerKind::Sgd { lr: l } | OptimizerKind::Adam { lr: l, .. } => *l = lr,
        }
    }

    /// Applies one update in place. `names` label the parameters in errors.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], names: &[&str]) -> Result<(), GraphError> {
        if params.len() != grads.len() {
            return Err(GraphError::LengthMismatch {
                shape: vec![params.len()],
                len: grads.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(GraphError::ShapeMismatch {
                    kind: "optimizer",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if let Some(bad) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(GraphError::NonFiniteGradient {
                    parameter: names.get(i).map_or_else(|| format!("#{i}"), |n| n.to_string()),
                    index: bad,
                });
            }
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (v, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *v -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                if self.first.is_empty() {
                    self.first = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
                    self.second = self.first.clone();
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first.iter_mut().zip(self.second.iter_mut()))
                {
                    for (((x, &d), mi), vi) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * d;
                        *vi = beta2 * *vi + (1.0 - beta2) * d * d;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *x -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
