//! Differentiable procedural micrograph synthesis.
//!
//! A tile is identified by its layout seed; the four attributes control how
//! the seed's particles are drawn. Re-rendering a seed under new attributes
//! is the attribute edit `G(I; A')`.

mod attrs;
mod jet;
mod layout;
mod render;

use serde::{Deserialize, Serialize};

pub use attrs::{AttributeVector, RawAttributes, ATTRIBUTE_NAMES};
pub use jet::{Jet, Real};
pub use layout::{ParticleLayout, PORES_PER_PARTICLE};
pub use render::{
    base_radius, effective_radii, render, render_edit, render_with_jacobian, DEFAULT_PARTICLE_COUNT,
    MIN_RESOLUTION, REFERENCE_RESOLUTION,
};

use crate::autodiff::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("attribute {name} = {value} is outside [0, 1]")]
    AttributeRange { name: &'static str, value: f64 },
    #[error("expected 4 attributes, got {0}")]
    AttributeCount(usize),
    #[error("attribute index {0} is out of range 0..4")]
    AttributeIndex(usize),
    #[error("resolution {0} is below the minimum of 16")]
    Resolution(usize),
    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
}

/// Grayscale intensity field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, SynthError> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(SynthError::ShapeMismatch((height, width), (data.len(), 1)));
        }
        Ok(Self { height, width, data })
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::from_raw(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// As a `[1, height, width]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.height, self.width], self.data.clone()).expect("consistent shape")
    }
}

/// Order `p` of the image distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum NormOrder {
    L1,
    #[default]
    L2,
}

impl NormOrder {
    pub fn as_f64(self) -> f64 {
        match self {
            NormOrder::L1 => 1.0,
            NormOrder::L2 => 2.0,
        }
    }
}

impl TryFrom<u8> for NormOrder {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(NormOrder::L1),
            2 => Ok(NormOrder::L2),
            other => Err(format!("norm order must be 1 or 2, got {other}")),
        }
    }
}

impl From<NormOrder> for u8 {
    fn from(o: NormOrder) -> u8 {
        match o {
            NormOrder::L1 => 1,
            NormOrder::L2 => 2,
        }
    }
}

/// Mean-per-pixel p-norm `(sum |a - b|^p / pixels)^(1/p)`.
pub fn image_distance(a: &ImageTensor, b: &ImageTensor, order: NormOrder) -> Result<f64, SynthError> {
    if a.shape() != b.shape() {
        return Err(SynthError::ShapeMismatch(a.shape(), b.shape()));
    }
    let n = a.data.len() as f64;
    let pairs = a.data.iter().zip(&b.data);
    Ok(match order {
        NormOrder::L1 => pairs.map(|(x, y)| (x - y).abs()).sum::<f64>() / n,
        NormOrder::L2 => (pairs.map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_basics() {
        let a = ImageTensor::filled(4, 4, 0.0);
        let b = ImageTensor::filled(4, 4, 1.0);
        assert_eq!(image_distance(&a, &a, NormOrder::L2).unwrap(), 0.0);
        assert_eq!(image_distance(&a, &b, NormOrder::L2).unwrap(), 1.0);
        assert_eq!(image_distance(&a, &b, NormOrder::L1).unwrap(), 1.0);
        let c = ImageTensor::filled(4, 5, 0.0);
        assert!(image_distance(&a, &c, NormOrder::L1).is_err());
    }

    #[test]
    fn norm_order_serializes_as_integer() {
        assert_eq!(serde_json::to_string(&NormOrder::L1).unwrap(), "1");
        assert_eq!(serde_json::from_str::<NormOrder>("2").unwrap(), NormOrder::L2);
        assert!(serde_json::from_str::<NormOrder>("3").is_err());
    }
}
