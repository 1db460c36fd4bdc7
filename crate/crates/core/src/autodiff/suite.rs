//! Randomized finite-difference checks over every primitive kind.

use super::{finite_diff_check, GradReport, Graph, GraphError, Primitive, Tensor};
use crate::rng;

/// Number of primitive kinds covered by [`sample_case`].
pub const PRIMITIVE_KINDS: usize = 17;

/// Checks `sum(w * prim(inputs))` for random weights `w` drawn from
/// `weight_key`, so every Jacobian entry reaches the probed gradient.
pub fn check_primitive(prim: &Primitive, inputs: &[Tensor], weight_key: u64, eps: f64) -> Result<GradReport, GraphError> {
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|t| t.shape().to_vec()).collect();
    let point: Vec<f64> = inputs.iter().flat_map(|t| t.data().iter().copied()).collect();
    let f = |x: &[f64]| -> Result<(f64, Vec<f64>), GraphError> {
        let mut g = Graph::new();
        let mut ids = Vec::with_capacity(shapes.len());
        let mut at = 0;
        for s in &shapes {
            let n: usize = s.iter().product();
            ids.push(g.param(Tensor::new(s.clone(), x[at..at + n].to_vec())?));
            at += n;
        }
        let y = g.apply(prim.clone(), &ids)?;
        let shape = g.value(y).shape().to_vec();
        let n: usize = shape.iter().product();
        let w = g.constant(Tensor::new(
            shape,
            (0..n as u64).map(|i| rng::draw_normal(weight_key, 2 * i)).collect(),
        )?);
        let weighted = g.mul(y, w)?;
        let root = g.apply(Primitive::Sum, &[weighted])?;
        let grads = g.backward(root)?;
        let flat = ids
            .iter()
            .flat_map(|id| grads.get(*id).map(|t| t.data().to_vec()).unwrap_or_default())
            .collect();
        Ok((g.value(root).item(), flat))
    };
    finite_diff_check(f, &point, eps)
}

/// A random instance of primitive kind `kind % PRIMITIVE_KINDS`. Inputs stay
/// at least 0.05 away from zero, where relu and the 1-norm have kinks.
pub fn sample_case(kind: usize, key: u64) -> (Primitive, Vec<Tensor>) {
    let mut slot = 0u64;
    let mut next = |lo: f64, hi: f64| {
        slot += 1;
        rng::draw_range(key, slot, lo, hi)
    };
    let n = 1 + next(0.0, 6.0) as usize;
    let order = next(1.0, 4.0);
    let power = next(-2.0, 3.0);
    let mut draw = |len: usize, lo: f64, hi: f64| -> Vec<f64> {
        (0..len)
            .map(|_| {
                let v = next(lo, hi);
                if v.abs() < 0.05 {
                    v + 0.1
                } else {
                    v
                }
            })
            .collect()
    };
    let v = Tensor::vector;
    match kind % PRIMITIVE_KINDS {
        0 => (Primitive::Add, vec![v(draw(n, -2.0, 2.0)), v(draw(n, -2.0, 2.0))]),
        1 => (Primitive::Sub, vec![v(draw(n, -2.0, 2.0)), v(draw(1, -2.0, 2.0))]),
        2 => (Primitive::Mul, vec![v(draw(n, -2.0, 2.0)), v(draw(n, -2.0, 2.0))]),
        3 => (Primitive::PowScalar(power), vec![v(draw(n, 0.2, 2.0))]),
        4 => (Primitive::Exp, vec![v(draw(n, -3.0, 3.0))]),
        5 => (Primitive::Tanh, vec![v(draw(n, -3.0, 3.0))]),
        6 => (Primitive::Sigmoid, vec![v(draw(n, -4.0, 4.0))]),
        7 => (Primitive::Relu, vec![v(draw(n, -2.0, 2.0))]),
        8 => {
            let m = 1 + n % 4;
            let w = Tensor::new(vec![m, n], draw(m * n, -1.0, 1.0)).expect("shape");
            (Primitive::Dense, vec![v(draw(n, -1.0, 1.0)), w, v(draw(m, -1.0, 1.0))])
        }
        9 => {
            let (c, o, h, stride) = (1 + n % 2, 1 + n % 3, 3 + n, 1 + n % 2);
            let x = Tensor::new(vec![c, h, h], draw(c * h * h, -1.0, 1.0)).expect("shape");
            let w = Tensor::new(vec![o, c, 3, 3], draw(o * c * 9, -1.0, 1.0)).expect("shape");
            (Primitive::Conv2d { stride, pad: 1 }, vec![x, w, v(draw(o, -1.0, 1.0))])
        }
        10 => {
            let x = Tensor::new(vec![2, n, 3], draw(6 * n, -1.0, 1.0)).expect("shape");
            (Primitive::GlobalAvgPool, vec![x])
        }
        11 => (Primitive::Sum, vec![v(draw(n, -2.0, 2.0))]),
        12 => (Primitive::Mean, vec![v(draw(n, -2.0, 2.0))]),
        13 => {
            let target = v(draw(n, -1.0, 1.0));
            (Primitive::Mse { target }, vec![v(draw(n, -1.0, 1.0))])
        }
        14 => (Primitive::PNorm { order }, vec![v(draw(n, -2.0, 2.0))]),
        15 => (Primitive::SmoothClamp { lo: -0.5, hi: 1.0 }, vec![v(draw(n, -2.0, 2.0))]),
        _ => (Primitive::Silu, vec![v(draw(n, -4.0, 4.0))]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_is_covered_and_passes() {
        let mut names = std::collections::BTreeSet::new();
        for kind in 0..PRIMITIVE_KINDS {
            for k in 0..5 {
                let (prim, inputs) = sample_case(kind, rng::derive_key(9, &[kind as u64, k]));
                names.insert(prim.name());
                let r = check_primitive(&prim, &inputs, k, 1e-5).unwrap();
                assert!(r.max_rel_error < 1e-4, "{}: {:e}", prim.name(), r.max_rel_error);
            }
        }
        assert_eq!(names.len(), PRIMITIVE_KINDS);
    }
}
