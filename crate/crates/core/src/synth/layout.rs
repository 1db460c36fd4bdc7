use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::rng;

// Key path of the jitter permutation, separate from the per-particle draws.
const JITTER_STREAM: u64 = 0x7177;

/// Pin-holes per particle.
pub const PORES_PER_PARTICLE: usize = 3;

// Per-particle draw slots; a particle consumes indices
// `particle * DRAWS_PER_PARTICLE + slot`.
const DRAWS_PER_PARTICLE: u64 = 16;
const SLOT_X: u64 = 0;
const SLOT_Y: u64 = 1;
const SLOT_ROTATION: u64 = 3;
const SLOT_PORES: u64 = 4;

/// Centers are stratified: particle `i` sits in grid cell `i` of a
/// `ceil(sqrt(n))`-column grid, uniformly within the middle `CELL_SPREAD`
/// of the cell. Keeps particles mostly apart so their shapes stay visible.
const CELL_SPREAD: f64 = 0.6;
/// Pore offsets lie within this fraction of the particle radius.
const PORE_REACH: f64 = 0.55;

/// Attribute-independent geometry of one tile, fully determined by its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleLayout {
    pub seed: u64,
    /// Centers in the unit square.
    pub centers: Vec<(f64, f64)>,
    /// Radius jitter draws in `[-0.5, 0.5]`: a seeded permutation of `n`
    /// evenly spaced values, so they average exactly zero in every tile.
    pub jitters: Vec<f64>,
    /// Rotations in `[0, pi/2)`; the superellipse has four-fold symmetry.
    pub rotations: Vec<f64>,
    /// Pore offsets in the particle frame, in units of the particle radius.
    pub pores: Vec<[(f64, f64); PORES_PER_PARTICLE]>,
}

impl ParticleLayout {
    /// Draws a layout from SplitMix64 keyed by `seed`; particle `i` uses draw
    /// indices `16 i .. 16 i + 10`.
    pub fn from_seed(seed: u64, particle_count: usize) -> Self {
        assert!(particle_count >= 1, "particle count must be positive");
        let cols = (particle_count as f64).sqrt().ceil() as usize;
        let rows = particle_count.div_ceil(cols);
        let lo = 0.5 - CELL_SPREAD / 2.0;
        let order = rng::permutation(rng::derive_key(seed, &[JITTER_STREAM]), particle_count);
        let mut out = ParticleLayout {
            seed,
            centers: Vec::with_capacity(particle_count),
            jitters: Vec::with_capacity(particle_count),
            rotations: Vec::with_capacity(particle_count),
            pores: Vec::with_capacity(particle_count),
        };
        for i in 0..particle_count as u64 {
            let base = i * DRAWS_PER_PARTICLE;
            let d = |slot: u64| rng::draw_unit(seed, base + slot);
            let (cx, cy) = (i as usize % cols, i as usize / cols);
            out.centers.push((
                (cx as f64 + lo + CELL_SPREAD * d(SLOT_X)) / cols as f64,
                (cy as f64 + lo + CELL_SPREAD * d(SLOT_Y)) / rows as f64,
            ));
            out.jitters.push((order[i as usize] as f64 + 0.5) / particle_count as f64 - 0.5);
            out.rotations.push(FRAC_PI_2 * d(SLOT_ROTATION));
            let mut pores = [(0.0, 0.0); PORES_PER_PARTICLE];
            for (k, pore) in pores.iter_mut().enumerate() {
                let slot = SLOT_PORES + 2 * k as u64;
                // sqrt for uniform density over the disc
                let radius = PORE_REACH * d(slot).sqrt();
                let angle = std::f64::consts::TAU * d(slot + 1);
                *pore = (radius * angle.cos(), radius * angle.sin());
            }
            out.pores.push(pores);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}
