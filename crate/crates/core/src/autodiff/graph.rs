use std::collections::BTreeMap;

use super::kernels::{self, ConvGeometry};
use super::{GraphError, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

/// The differentiable primitives. Shape rules:
///
/// - `Add`, `Sub`, `Mul`: equal shapes, or either operand a one-element tensor (broadcast).
/// - `Scale`, `AddScalar`, `PowScalar`, `Exp`, `Tanh`, `Sigmoid`, `Relu`, `Silu`, `SmoothClamp`: elementwise.
/// - `Dense`: `x [n]`, `w [m, n]`, `b [m]` to `[m]`.
/// - `Conv2d`: `x [c, h, w]`, `w [o, c, k, k]`, `b [o]` to `[o, h', w']`; cross-correlation
///   with explicit zero padding, `h' = (h + 2 pad - k) / stride + 1`.
/// - `GlobalAvgPool`: `[c, h, w]` to `[c]`.
/// - `Sum`, `Mean`, `Mse`, `PNorm`: any shape to `[1]`. `Mse` requires the target to share the input shape.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Scale(f64),
    AddScalar(f64),
    PowScalar(f64),
    Exp,
    Tanh,
    Sigmoid,
    Relu,
    /// `x * sigmoid(x)`: a smooth stand-in for `Relu` where gradients must be
    /// well defined everywhere.
    Silu,
    Dense,
    Conv2d { stride: usize, pad: usize },
    GlobalAvgPool,
    Sum,
    Mean,
    Mse { target: Tensor },
    PNorm { order: f64 },
    /// `c + h * tanh((x - c) / h)` with `c` the midpoint and `h` the half-width of `[lo, hi]`:
    /// unit slope at the midpoint, saturating smoothly at both bounds.
    SmoothClamp { lo: f64, hi: f64 },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Scale(_) => "scale",
            Primitive::AddScalar(_) => "add-scalar",
            Primitive::PowScalar(_) => "scalar-pow",
            Primitive::Exp => "exp",
            Primitive::Tanh => "tanh",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Relu => "relu",
            Primitive::Silu => "silu",
            Primitive::Dense => "dense",
            Primitive::Conv2d { .. } => "conv2d",
            Primitive::GlobalAvgPool => "global-average-pool",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::Mse { .. } => "mse",
            Primitive::PNorm { .. } => "p-norm",
            Primitive::SmoothClamp { .. } => "smooth-clamp",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Primitive::Add | Primitive::Sub | Primitive::Mul => 2,
            Primitive::Dense | Primitive::Conv2d { .. } => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Prim(Primitive, Vec<NodeId>),
    /// Externally computed map with a dense Jacobian stored `[out, in]`.
    Linearized { input: NodeId, jacobian: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Eagerly evaluated computation graph recorded on a tape for reverse-mode
/// differentiation. Node ids are issued in creation order, which is a valid
/// topological order, so the graph is acyclic by construction.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every leaf that requires them.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_leaf: BTreeMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.by_leaf.get(&id)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.by_leaf.remove(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &Tensor)> {
        self.by_leaf.iter()
    }
}

fn shape_err(kind: &'static str, left: &Tensor, right: &Tensor) -> GraphError {
    GraphError::ShapeMismatch {
        kind,
        left: left.shape().to_vec(),
        right: right.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn binary_elementwise(
    kind: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor, GraphError> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(a.shape().to_vec(), data)
    } else if b.is_scalar() {
        let y = b.item();
        Ok(a.map(|x| f(x, y)))
    } else if a.is_scalar() {
        let x = a.item();
        Ok(b.map(|y| f(x, y)))
    } else {
        Err(shape_err(kind, a, b))
    }
}

/// Accumulates `grad` into a slot of shape `target_shape`, summing when the
/// operand was a broadcast scalar.
fn accumulate_broadcast(slot: &mut Tensor, grad: Tensor) {
    if slot.len() == grad.len() {
        slot.add_assign(&grad);
    } else {
        slot.data_mut()[0] += grad.data().iter().sum::<f64>();
    }
}

fn conv_geometry(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<ConvGeometry, GraphError> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != ws[3] {
        return Err(shape_err("conv2d", x, w));
    }
    if stride == 0 {
        return Err(GraphError::InvalidParameter {
            kind: "conv2d",
            message: "stride must be positive".into(),
        });
    }
    let k = ws[2];
    if xs[1] + 2 * pad < k || xs[2] + 2 * pad < k || pad >= k {
        return Err(shape_err("conv2d", x, w));
    }
    Ok(ConvGeometry {
        in_channels: xs[0],
        out_channels: ws[0],
        height: xs[1],
        width: xs[2],
        kernel: k,
        stride,
        pad,
    })
}

fn forward(prim: &Primitive, inputs: &[&Tensor]) -> Result<Tensor, GraphError> {
    let kind = prim.name();
    let out = match prim {
        Primitive::Add => binary_elementwise(kind, inputs[0], inputs[1], |a, b| a + b)?,
        Primitive::Sub => binary_elementwise(kind, inputs[0], inputs[1], |a, b| a - b)?,
        Primitive::Mul => binary_elementwise(kind, inputs[0], inputs[1], |a, b| a * b)?,
        Primitive::Scale(c) => inputs[0].map(|v| c * v),
        Primitive::AddScalar(c) => inputs[0].map(|v| v + c),
        Primitive::PowScalar(p) => inputs[0].map(|v| v.powf(*p)),
        Primitive::Exp => inputs[0].map(f64::exp),
        Primitive::Tanh => inputs[0].map(f64::tanh),
        Primitive::Sigmoid => inputs[0].map(sigmoid),
        Primitive::Relu => inputs[0].map(|v| v.max(0.0)),
        Primitive::Silu => inputs[0].map(|v| v * sigmoid(v)),
        Primitive::SmoothClamp { lo, hi } => {
            if !(hi > lo) {
                return Err(GraphError::InvalidParameter {
                    kind,
                    message: format!("empty interval [{lo}, {hi}]"),
                });
            }
            let (c, h) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
            inputs[0].map(|v| c + h * ((v - c) / h).tanh())
        }
        Primitive::Dense => {
            let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
            if x.shape().len() != 1 || w.shape().len() != 2 || w.shape()[1] != x.len() {
                return Err(shape_err(kind, x, w));
            }
            if b.shape() != [w.shape()[0]] {
                return Err(shape_err(kind, w, b));
            }
            Tensor::vector(kernels::dense_forward(x.data(), w.data(), b.data()))
        }
        Primitive::Conv2d { stride, pad } => {
            let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
            let g = conv_geometry(x, w, *stride, *pad)?;
            if b.shape() != [g.out_channels] {
                return Err(shape_err(kind, w, b));
            }
            let data = kernels::conv2d_forward(&g, x.data(), w.data(), b.data());
            Tensor::new(vec![g.out_channels, g.out_height(), g.out_width()], data)?
        }
        Primitive::GlobalAvgPool => {
            let x = inputs[0];
            let s = x.shape();
            if s.len() != 3 {
                return Err(GraphError::InvalidParameter {
                    kind,
                    message: format!("expected [c, h, w], got {s:?}"),
                });
            }
            let plane = s[1] * s[2];
            Tensor::vector(
                x.data()
                    .chunks(plane)
                    .map(|c| c.iter().sum::<f64>() / plane as f64)
                    .collect(),
            )
        }
        Primitive::Sum => Tensor::scalar(inputs[0].data().iter().sum()),
        Primitive::Mean => {
            let x = inputs[0];
            Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
        }
        Primitive::Mse { target } => {
            let x = inputs[0];
            if x.shape() != target.shape() {
                return Err(shape_err(kind, x, target));
            }
            let sq: f64 = x.data().iter().zip(target.data()).map(|(a, t)| (a - t) * (a - t)).sum();
            Tensor::scalar(sq / x.len() as f64)
        }
        Primitive::PNorm { order } => {
            if !(*order >= 1.0) || !order.is_finite() {
                return Err(GraphError::InvalidParameter {
                    kind,
                    message: format!("order must be >= 1, got {order}"),
                });
            }
            let s: f64 = inputs[0].data().iter().map(|v| v.abs().powf(*order)).sum();
            Tensor::scalar(s.powf(1.0 / order))
        }
    };
    if !out.all_finite() {
        return Err(GraphError::NumericOverflow { kind });
    }
    Ok(out)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Applies `prim` to `inputs`, evaluating the result immediately.
    pub fn apply(&mut self, prim: Primitive, inputs: &[NodeId]) -> Result<NodeId, GraphError> {
        if inputs.len() != prim.arity() {
            return Err(GraphError::Arity {
                kind: prim.name(),
                expected: prim.arity(),
                got: inputs.len(),
            });
        }
        let values: Vec<&Tensor> = inputs.iter().map(|id| &self.nodes[id.0].value).collect();
        let out = forward(&prim, &values)?;
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        Ok(self.push(out, Op::Prim(prim, inputs.to_vec()), requires_grad))
    }

    /// Records an externally evaluated function of `input` by its value and its
    /// Jacobian, stored row-major as `[value.len(), input.len()]`.
    pub fn linearized(&mut self, input: NodeId, value: Tensor, jacobian: Vec<f64>) -> Result<NodeId, GraphError> {
        let n_in = self.nodes[input.0].value.len();
        if jacobian.len() != value.len() * n_in {
            return Err(GraphError::LengthMismatch {
                shape: vec![value.len(), n_in],
                len: jacobian.len(),
            });
        }
        if !value.all_finite() || jacobian.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::NumericOverflow { kind: "linearized" });
        }
        let requires_grad = self.nodes[input.0].requires_grad;
        Ok(self.push(value, Op::Linearized { input, jacobian }, requires_grad))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId, GraphError> {
        self.apply(Primitive::Scale(c), &[a])
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId, GraphError> {
        self.apply(Primitive::AddScalar(c), &[a])
    }

    pub fn powf(&mut self, a: NodeId, p: f64) -> Result<NodeId, GraphError> {
        self.apply(Primitive::PowScalar(p), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        self.apply(Primitive::Relu, &[a])
    }

    pub fn silu(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        self.apply(Primitive::Silu, &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        self.apply(Primitive::Mean, &[a])
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.apply(Primitive::Dense, &[x, w, b])
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize) -> Result<NodeId, GraphError> {
        self.apply(Primitive::Conv2d { stride, pad }, &[x, w, b])
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.apply(Primitive::GlobalAvgPool, &[x])
    }

    pub fn mse(&mut self, x: NodeId, target: Tensor) -> Result<NodeId, GraphError> {
        self.apply(Primitive::Mse { target }, &[x])
    }

    /// Reverse-mode gradients of the scalar `root` with respect to every leaf
    /// created with [`Graph::param`]. Gradient slots start at zero on every
    /// call, so repeated calls return identical results.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, GraphError> {
        let root_value = &self.nodes[root.0].value;
        if !root_value.is_scalar() {
            return Err(GraphError::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut slots: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        slots[root.0] = Some(Tensor::full(root_value.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let grad = match (&node.op, slots[idx].as_ref()) {
                (Op::Leaf, _) | (_, None) => continue,
                (_, Some(_)) => slots[idx].take().expect("checked"),
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Linearized { input, jacobian } => {
                    let n_in = self.nodes[input.0].value.len();
                    let slot = slots[input.0].get_or_insert_with(|| Tensor::zeros(self.nodes[input.0].value.shape()));
                    let acc = slot.data_mut();
                    for (row, &g) in jacobian.chunks(n_in).zip(grad.data()) {
                        if g != 0.0 {
                            for (a, j) in acc.iter_mut().zip(row) {
                                *a += g * j;
                            }
                        }
                    }
                }
                Op::Prim(prim, inputs) => {
                    self.backward_primitive(prim, inputs, &node.value, &grad, &mut slots);
                }
            }
            // Keep leaf gradients; interior slots are consumed above.
        }

        let mut by_leaf = BTreeMap::new();
        for (idx, slot) in slots.into_iter().enumerate() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                by_leaf.insert(
                    NodeId(idx),
                    slot.unwrap_or_else(|| Tensor::zeros(node.value.shape())),
                );
            }
        }
        Ok(Gradients { by_leaf })
    }

    fn backward_primitive(
        &self,
        prim: &Primitive,
        inputs: &[NodeId],
        out: &Tensor,
        grad: &Tensor,
        slots: &mut [Option<Tensor>],
    ) {
        let input_value = |i: usize| &self.nodes[inputs[i].0].value;
        let wants = |i: usize| self.nodes[inputs[i].0].requires_grad;
        let emit = |slots: &mut [Option<Tensor>], i: usize, g: Tensor| {
            let id = inputs[i];
            let shape = self.nodes[id.0].value.shape();
            let slot = slots[id.0].get_or_insert_with(|| Tensor::zeros(shape));
            accumulate_broadcast(slot, g);
        };
        let g = grad.data();

        match prim {
            Primitive::Add | Primitive::Sub | Primitive::Mul => {
                let (a, b) = (input_value(0), input_value(1));
                let out_len = out.len();
                let at = |t: &Tensor, i: usize| if t.len() == out_len { t.data()[i] } else { t.data()[0] };
                let (ga, gb): (Vec<f64>, Vec<f64>) = match prim {
                    Primitive::Add => (g.to_vec(), g.to_vec()),
                    Primitive::Sub => (g.to_vec(), g.iter().map(|v| -v).collect()),
                    _ => (
                        (0..out_len).map(|i| g[i] * at(b, i)).collect(),
                        (0..out_len).map(|i| g[i] * at(a, i)).collect(),
                    ),
                };
                if wants(0) {
                    emit(slots, 0, Tensor::new(out.shape().to_vec(), ga).expect("shape"));
                }
                if wants(1) {
                    emit(slots, 1, Tensor::new(out.shape().to_vec(), gb).expect("shape"));
                }
            }
            Primitive::Scale(c) => emit(slots, 0, grad.map(|v| c * v)),
            Primitive::AddScalar(_) => emit(slots, 0, grad.clone()),
            Primitive::PowScalar(p) => {
                let x = input_value(0);
                let data = x.data().iter().zip(g).map(|(&xv, &gv)| gv * p * xv.powf(p - 1.0)).collect();
                emit(slots, 0, Tensor::new(x.shape().to_vec(), data).expect("shape"));
            }
            Primitive::Exp | Primitive::Tanh | Primitive::Sigmoid | Primitive::SmoothClamp { .. } => {
                let local: Box<dyn Fn(f64) -> f64> = match prim {
                    Primitive::Exp => Box::new(|y| y),
                    Primitive::Tanh => Box::new(|y| 1.0 - y * y),
                    Primitive::Sigmoid => Box::new(|y| y * (1.0 - y)),
                    Primitive::SmoothClamp { lo, hi } => {
                        let (c, h) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
                        Box::new(move |y| {
                            let t = (y - c) / h;
                            1.0 - t * t
                        })
                    }
                    _ => unreachable!(),
                };
                let data = out.data().iter().zip(g).map(|(&y, &gv)| gv * local(y)).collect();
                emit(slots, 0, Tensor::new(out.shape().to_vec(), data).expect("shape"));
            }
            Primitive::Relu => {
                let x = input_value(0);
                let data = x.data().iter().zip(g).map(|(&xv, &gv)| if xv > 0.0 { gv } else { 0.0 }).collect();
                emit(slots, 0, Tensor::new(x.shape().to_vec(), data).expect("shape"));
            }
            Primitive::Silu => {
                let x = input_value(0);
                let data = x
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&xv, &gv)| {
                        let s = sigmoid(xv);
                        gv * s * (1.0 + xv * (1.0 - s))
                    })
                    .collect();
                emit(slots, 0, Tensor::new(x.shape().to_vec(), data).expect("shape"));
            }
            Primitive::Dense => {
                let (x, w) = (input_value(0), input_value(1));
                let n_in = x.len();
                if wants(0) {
                    let mut gx = vec![0.0; n_in];
                    for (row, &gv) in w.data().chunks(n_in).zip(g) {
                        for (a, wv) in gx.iter_mut().zip(row) {
                            *a += gv * wv;
                        }
                    }
                    emit(slots, 0, Tensor::vector(gx));
                }
                if wants(1) {
                    let mut gw = Vec::with_capacity(w.len());
                    for &gv in g {
                        gw.extend(x.data().iter().map(|xv| gv * xv));
                    }
                    emit(slots, 1, Tensor::new(w.shape().to_vec(), gw).expect("shape"));
                }
                if wants(2) {
                    emit(slots, 2, grad.clone());
                }
            }
            Primitive::Conv2d { stride, pad } => {
                let (x, w) = (input_value(0), input_value(1));
                let geom = conv_geometry(x, w, *stride, *pad).expect("validated in forward");
                let mut gx = wants(0).then(|| vec![0.0; x.len()]);
                let mut gw = wants(1).then(|| vec![0.0; w.len()]);
                let mut gb = wants(2).then(|| vec![0.0; geom.out_channels]);
                kernels::conv2d_backward(
                    &geom,
                    x.data(),
                    w.data(),
                    g,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                if let Some(d) = gx {
                    emit(slots, 0, Tensor::new(x.shape().to_vec(), d).expect("shape"));
                }
                if let Some(d) = gw {
                    emit(slots, 1, Tensor::new(w.shape().to_vec(), d).expect("shape"));
                }
                if let Some(d) = gb {
                    emit(slots, 2, Tensor::vector(d));
                }
            }
            Primitive::GlobalAvgPool => {
                let x = input_value(0);
                let plane = x.shape()[1] * x.shape()[2];
                let mut d = Vec::with_capacity(x.len());
                for &gv in g {
                    d.extend(std::iter::repeat(gv / plane as f64).take(plane));
                }
                emit(slots, 0, Tensor::new(x.shape().to_vec(), d).expect("shape"));
            }
            Primitive::Sum => {
                let x = input_value(0);
                emit(slots, 0, Tensor::full(x.shape(), g[0]));
            }
            Primitive::Mean => {
                let x = input_value(0);
                emit(slots, 0, Tensor::full(x.shape(), g[0] / x.len() as f64));
            }
            Primitive::Mse { target } => {
                let x = input_value(0);
                let scale = 2.0 * g[0] / x.len() as f64;
                let d = x.data().iter().zip(target.data()).map(|(a, t)| scale * (a - t)).collect();
                emit(slots, 0, Tensor::new(x.shape().to_vec(), d).expect("shape"));
            }
            Primitive::PNorm { order } => {
                let x = input_value(0);
                let norm = out.item();
                let d = if norm == 0.0 {
                    vec![0.0; x.len()]
                } else {
                    let denom = norm.powf(order - 1.0);
                    x.data()
                        .iter()
                        .map(|&v| {
                            if v == 0.0 {
                                0.0
                            } else {
                                g[0] * v.signum() * v.abs().powf(order - 1.0) / denom
                            }
                        })
                        .collect()
                };
                emit(slots, 0, Tensor::new(x.shape().to_vec(), d).expect("shape"));
            }
        }
    }
}
