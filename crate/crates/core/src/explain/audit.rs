use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::regressor::RegressorModel;
use crate::synth::render_edit;
use crate::world::DatasetManifest;

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Distribution of `|prediction(sample) - prediction(reconstruction)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftStats {
    pub samples: usize,
    pub mean_abs_shift: f64,
    pub max_abs_shift: f64,
    /// Equal-width bins over `[0, max_abs_shift]`; the last bin is closed.
    pub histogram: Vec<HistogramBin>,
}

/// Compares each sample's prediction with the prediction for its tile
/// re-rendered at the lot's nominal attributes.
///
/// Shifts are sorted before aggregation so the statistics do not depend on
/// sample order.
pub fn audit_prediction_shift(model: &RegressorModel, manifest: &DatasetManifest) -> Result<ShiftStats, ExplainError> {
    use rayon::prelude::*;

    if manifest.samples.is_empty() {
        return Err(ExplainError::EmptyManifest);
    }
    let res = model.resolution();
    let mut shifts = manifest
        .samples
        .par_iter()
        .map(|s| {
            let lot = manifest.lot(&s.lot_id).ok_or_else(|| ExplainError::UnknownLot(s.lot_id.clone()))?;
            let original = model.predict(&render_edit(s.seed, &s.attrs, res)?)?;
            let reconstructed = model.predict(&render_edit(s.seed, &lot.attrs, res)?)?;
            Ok((original - reconstructed).abs())
        })
        .collect::<Result<Vec<f64>, ExplainError>>()?;
    shifts.sort_by(f64::total_cmp);

    let n = shifts.len();
    let max = *shifts.last().expect("non-empty");
    let width = max / HISTOGRAM_BINS as f64;
    let mut histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            lo: width * i as f64,
            hi: if i + 1 == HISTOGRAM_BINS { max } else { width * (i + 1) as f64 },
            count: 0,
        })
        .collect();
    for &s in &shifts {
        let bin = if width > 0.0 {
            ((s / width) as usize).min(HISTOGRAM_BINS - 1)
        } else {
            0
        };
        histogram[bin].count += 1;
    }
    Ok(ShiftStats {
        samples: n,
        mean_abs_shift: shifts.iter().sum::<f64>() / n as f64,
        max_abs_shift: max,
        histogram,
    })
}
