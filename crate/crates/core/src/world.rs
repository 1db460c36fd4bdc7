//! The synthetic labeled world: lots, a ground-truth stress law and the
//! tiled dataset manifest.

use serde::{Deserialize, Serialize};

use crate::rng;
use crate::synth::AttributeVector;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_LOT_COUNT: usize = 30;
pub const DEFAULT_TILES_PER_LOT: usize = 200;
pub const DEFAULT_JITTER: f64 = 0.02;
pub const DEFAULT_NOISE_SD: f64 = 1.0;
pub const MAX_JITTER: f64 = 0.05;
/// Fraction of samples assigned to validation.
pub const VALIDATION_FRACTION: f64 = 0.1;

const LOT_ATTR_LO: f64 = 0.1;
const LOT_ATTR_HI: f64 = 0.9;
const HALTON_BASES: [u64; 4] = [2, 3, 5, 7];
const SPLIT_SALT: u64 = 0x5EED_5A17_0000_0001;

// Draw slots within a sample's stream.
const SAMPLE_JITTER_SLOT: u64 = 0;
const SAMPLE_NOISE_SLOT: u64 = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("at least 2 lots are required, got {0}")]
    TooFewLots(usize),
    #[error("tiles per lot must be positive")]
    NoTiles,
    #[error("jitter {0} is outside [0, 0.05]")]
    Jitter(f64),
    #[error("noise standard deviation {0} must be finite and nonnegative")]
    Noise(f64),
    #[error("duplicate lot id {0}")]
    DuplicateLot(String),
    #[error("sample references unknown lot {0}")]
    UnknownLot(String),
}

/// Ground-truth peak stress, in stress units:
/// `100 + 40 (1 - size) + 25 porosity + 15 dispersity + 10 facetness`.
pub fn oracle_stress(attrs: &AttributeVector) -> f64 {
    100.0 + 40.0 * (1.0 - attrs.size())
        + 25.0 * attrs.porosity()
        + 15.0 * attrs.dispersity()
        + 10.0 * attrs.facetness()
}

/// Partial derivatives of [`oracle_stress`], in attribute order.
pub const ORACLE_GRADIENT: [f64; 4] = [-40.0, 25.0, 15.0, 10.0];

/// Spreadsheet-style lot code: 0 is `A`, 25 is `Z`, 26 is `AA`.
pub fn lot_id(index: usize) -> String {
    let mut n = index + 1;
    let mut chars = Vec::new();
    while n > 0 {
        let rem = (n - 1) % 26;
        chars.push(b'A' + rem as u8);
        n = (n - 1) / 26;
    }
    chars.reverse();
    String::from_utf8(chars).expect("ascii")
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotSpec {
    pub id: String,
    pub attrs: AttributeVector,
    pub true_stress: f64,
    pub tiles: usize,
}

/// `count` lots with attributes from a randomly shifted Halton sequence
/// (bases 2, 3, 5, 7) mapped into `[0.1, 0.9]^4`.
pub fn make_lots(count: usize, master_seed: u64) -> Result<Vec<LotSpec>, WorldError> {
    if count < 2 {
        return Err(WorldError::TooFewLots(count));
    }
    let key = rng::derive_key(master_seed, &[0x10_75]);
    let shift: [f64; 4] = std::array::from_fn(|d| rng::draw_unit(key, d as u64));
    Ok((0..count)
        .map(|i| {
            let values: [f64; 4] = std::array::from_fn(|d| {
                let u = (radical_inverse(i as u64 + 1, HALTON_BASES[d]) + shift[d]).fract();
                LOT_ATTR_LO + (LOT_ATTR_HI - LOT_ATTR_LO) * u
            });
            let attrs = AttributeVector::from_array(values).expect("inside [0.1, 0.9]");
            LotSpec {
                id: lot_id(i),
                attrs,
                true_stress: oracle_stress(&attrs),
                tiles: 0,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub seed: u64,
    pub lot_id: String,
    pub attrs: AttributeVector,
    pub label: f64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub tiles_per_lot: usize,
    pub jitter: f64,
    pub noise_sd: f64,
    pub lots: Vec<LotSpec>,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub tiles_per_lot: usize,
    pub jitter: f64,
    pub noise_sd: f64,
    pub master_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            tiles_per_lot: DEFAULT_TILES_PER_LOT,
            jitter: DEFAULT_JITTER,
            noise_sd: DEFAULT_NOISE_SD,
            master_seed: 7,
        }
    }
}

/// Expands lots into tiles. Each sample's seed, jitter and noise come from
/// its own counter stream, samples are sorted by seed, and the 10% with the
/// smallest split hash form the validation set.
pub fn synth_dataset(lots: &[LotSpec], cfg: &DatasetConfig) -> Result<DatasetManifest, WorldError> {
    if lots.len() < 2 {
        return Err(WorldError::TooFewLots(lots.len()));
    }
    if cfg.tiles_per_lot == 0 {
        return Err(WorldError::NoTiles);
    }
    if !(0.0..=MAX_JITTER).contains(&cfg.jitter) {
        return Err(WorldError::Jitter(cfg.jitter));
    }
    if !(cfg.noise_sd >= 0.0 && cfg.noise_sd.is_finite()) {
        return Err(WorldError::Noise(cfg.noise_sd));
    }
    let mut ids = std::collections::BTreeSet::new();
    for lot in lots {
        if !ids.insert(lot.id.as_str()) {
            return Err(WorldError::DuplicateLot(lot.id.clone()));
        }
    }

    let sample_key = rng::derive_key(cfg.master_seed, &[0x5A_3B1E]);
    let mut samples = Vec::with_capacity(lots.len() * cfg.tiles_per_lot);
    for (li, lot) in lots.iter().enumerate() {
        for t in 0..cfg.tiles_per_lot {
            let seed = rng::draw_u64(sample_key, (li * cfg.tiles_per_lot + t) as u64);
            let base = lot.attrs.as_array();
            let jittered: [f64; 4] = std::array::from_fn(|d| {
                let u = rng::draw_range(seed, SAMPLE_JITTER_SLOT + d as u64, -1.0, 1.0);
                base[d] + cfg.jitter * u
            });
            let attrs = AttributeVector::clamped(jittered);
            let label = oracle_stress(&attrs) + cfg.noise_sd * rng::draw_normal(seed, SAMPLE_NOISE_SLOT);
            samples.push(SampleRecord {
                seed,
                lot_id: lot.id.clone(),
                attrs,
                label,
                split: Split::Train,
            });
        }
    }
    samples.sort_by_key(|s| s.seed);
    let n_val = (samples.len() as f64 * VALIDATION_FRACTION).round() as usize;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by_key(|&i| (rng::mix64(samples[i].seed ^ SPLIT_SALT), i));
    for &i in &order[..n_val] {
        samples[i].split = Split::Val;
    }

    let lots = lots
        .iter()
        .map(|l| LotSpec {
            tiles: cfg.tiles_per_lot,
            ..l.clone()
        })
        .collect();
    Ok(DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        master_seed: cfg.master_seed,
        tiles_per_lot: cfg.tiles_per_lot,
        jitter: cfg.jitter,
        noise_sd: cfg.noise_sd,
        lots,
        samples,
    })
}

impl DatasetManifest {
    /// The full default world: `lots` lots generated and tiled with `cfg`.
    pub fn generate(lot_count: usize, cfg: &DatasetConfig) -> Result<Self, WorldError> {
        synth_dataset(&make_lots(lot_count, cfg.master_seed)?, cfg)
    }

    pub fn lot(&self, id: &str) -> Option<&LotSpec> {
        self.lots.iter().find(|l| l.id == id)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// `(min, max)` of all labels.
    pub fn label_range(&self) -> Option<(f64, f64)> {
        let mut it = self.samples.iter().map(|s| s.label);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    /// Checks referential integrity: unique lot ids and known sample lots.
    pub fn validate(&self) -> Result<(), WorldError> {
        let mut ids = std::collections::BTreeSet::new();
        for lot in &self.lots {
            if !ids.insert(lot.id.as_str()) {
                return Err(WorldError::DuplicateLot(lot.id.clone()));
            }
        }
        for s in &self.samples {
            if !ids.contains(s.lot_id.as_str()) {
                return Err(WorldError::UnknownLot(s.lot_id.clone()));
            }
        }
        Ok(())
    }
}
