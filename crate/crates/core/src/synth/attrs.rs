use serde::{Deserialize, Serialize};

use super::SynthError;

/// Attribute names in their fixed order.
pub const ATTRIBUTE_NAMES: [&str; 4] = ["size", "porosity", "dispersity", "facetness"];

/// The four actionable material attributes, each in `[0, 1]`.
///
/// Serialized as an object keyed by attribute name; deserialization
/// validates the range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAttributes", into = "RawAttributes")]
pub struct AttributeVector([f64; 4]);

/// Four named values in attribute order, without range checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawAttributes {
    pub size: f64,
    pub porosity: f64,
    pub dispersity: f64,
    pub facetness: f64,
}

impl TryFrom<RawAttributes> for AttributeVector {
    type Error = SynthError;

    fn try_from(r: RawAttributes) -> Result<Self, SynthError> {
        AttributeVector::new(r.size, r.porosity, r.dispersity, r.facetness)
    }
}

impl From<AttributeVector> for RawAttributes {
    fn from(a: AttributeVector) -> Self {
        let [size, porosity, dispersity, facetness] = a.0;
        RawAttributes {
            size,
            porosity,
            dispersity,
            facetness,
        }
    }
}

impl AttributeVector {
    pub fn new(size: f64, porosity: f64, dispersity: f64, facetness: f64) -> Result<Self, SynthError> {
        Self::from_array([size, porosity, dispersity, facetness])
    }

    pub fn from_array(values: [f64; 4]) -> Result<Self, SynthError> {
        for (name, &v) in ATTRIBUTE_NAMES.iter().zip(&values) {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError::AttributeRange { name, value: v });
            }
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, SynthError> {
        let arr: [f64; 4] = values.try_into().map_err(|_| SynthError::AttributeCount(values.len()))?;
        Self::from_array(arr)
    }

    /// Clamps each component into `[0, 1]`; NaN maps to 0.
    pub fn clamped(values: [f64; 4]) -> Self {
        Self(values.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
    }

    pub fn uniform(value: f64) -> Result<Self, SynthError> {
        Self::from_array([value; 4])
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.0.get(index).copied()
    }

    pub fn with(&self, index: usize, value: f64) -> Result<Self, SynthError> {
        if index >= 4 {
            return Err(SynthError::AttributeIndex(index));
        }
        let mut v = self.0;
        v[index] = value;
        Self::from_array(v)
    }

    pub fn size(&self) -> f64 {
        self.0[0]
    }

    pub fn porosity(&self) -> f64 {
        self.0[1]
    }

    pub fn dispersity(&self) -> f64 {
        self.0[2]
    }

    pub fn facetness(&self) -> f64 {
        self.0[3]
    }

    /// Largest componentwise absolute difference.
    pub fn linf_distance(&self, other: &AttributeVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_is_enforced_with_name() {
        let err = AttributeVector::new(0.5, 1.2, 0.5, 0.5).unwrap_err();
        assert!(err.to_string().contains("porosity"));
        assert!(AttributeVector::new(0.5, 0.5, f64::NAN, 0.5).is_err());
        assert!(AttributeVector::new(0.0, 1.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn json_uses_named_fields_and_validates() {
        let a = AttributeVector::new(0.1, 0.2, 0.3, 0.4).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"size":0.1,"porosity":0.2,"dispersity":0.3,"facetness":0.4}"#);
        assert_eq!(serde_json::from_str::<AttributeVector>(&s).unwrap(), a);
        let bad = r#"{"size":0.1,"porosity":-0.2,"dispersity":0.3,"facetness":0.4}"#;
        assert!(serde_json::from_str::<AttributeVector>(bad).is_err());
    }

    #[test]
    fn slice_length_checked() {
        assert!(matches!(AttributeVector::from_slice(&[0.1; 3]), Err(SynthError::AttributeCount(3))));
    }
}
