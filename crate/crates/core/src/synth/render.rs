use super::jet::{Jet, Real};
use super::{AttributeVector, ImageTensor, ParticleLayout, SynthError, PORES_PER_PARTICLE};

/// Reference tile edge; radii are specified in pixels at this resolution.
pub const REFERENCE_RESOLUTION: usize = 64;
pub const MIN_RESOLUTION: usize = 16;
/// Particles per tile, independent of resolution.
pub const DEFAULT_PARTICLE_COUNT: usize = 12;

/// Sigmoid softness of kernel boundaries, in pixels.
pub const SOFTNESS: f64 = 1.5;
/// Base radius is `RADIUS_OFFSET + RADIUS_PER_SIZE * size` reference pixels.
pub const RADIUS_OFFSET: f64 = 3.0;
pub const RADIUS_PER_SIZE: f64 = 5.0;
/// Superellipse exponent is `EXPONENT_ROUND + EXPONENT_PER_FACET * facetness`.
pub const EXPONENT_ROUND: f64 = 2.0;
pub const EXPONENT_PER_FACET: f64 = 6.0;
/// Pore depth is `PORE_DEPTH_PER_POROSITY * porosity`.
pub const PORE_DEPTH_PER_POROSITY: f64 = 0.8;
/// Pore radius as a fraction of the host particle radius.
pub const PORE_RADIUS_FRACTION: f64 = 0.18;
/// Slope of the saturating tone map around the half-coverage level.
pub const TONE_GAIN: f64 = 3.0;

// Keeps the pore distance differentiable when a pixel center hits a pore center.
const DISTANCE_FLOOR_SQ: f64 = 1e-12;

/// Base particle radius in pixels at `resolution`.
pub fn base_radius(size: f64, resolution: usize) -> f64 {
    (RADIUS_OFFSET + RADIUS_PER_SIZE * size) * resolution as f64 / REFERENCE_RESOLUTION as f64
}

/// Effective per-particle radii `r_base(size) (1 + dispersity * jitter)`.
pub fn effective_radii(layout: &ParticleLayout, attrs: &AttributeVector, resolution: usize) -> Vec<f64> {
    let r = base_radius(attrs.size(), resolution);
    layout.jitters.iter().map(|&eta| r * (1.0 + attrs.dispersity() * eta)).collect()
}

#[inline]
fn ln<S: Real>(x: S) -> S {
    (x - 1.0).ln_1p()
}

/// `ln Gamma(z)` for `z >= 1`: shifted by 6 then Stirling's series, accurate
/// to about 1e-11.
fn ln_gamma<S: Real>(z: S) -> S {
    let mut prod = z;
    for i in 1..6 {
        prod = prod * (z + i as f64);
    }
    let w = z + 6.0;
    let inv = w.recip();
    let inv2 = inv * inv;
    let series = inv * (inv2 * (inv2 * (inv2 * (-1.0 / 1680.0) + 1.0 / 1260.0) + -1.0 / 360.0) + 1.0 / 12.0);
    (w - 0.5) * ln(w) - w + 0.5 * (2.0 * std::f64::consts::PI).ln() + series - ln(prod)
}

/// `sqrt(area / pi)` of the unit superellipse `|u|^n + |v|^n <= 1`, whose
/// area is `4 Gamma(1 + 1/n)^2 / Gamma(1 + 2/n)`. Scaling the kernel distance
/// by this keeps particle area independent of the exponent, so facetness
/// changes shape and not size.
pub(crate) fn area_scale<S: Real>(exponent: S) -> S {
    let inv = exponent.recip();
    let ln_area = ln_gamma(inv + 1.0) * 2.0 - ln_gamma(inv * 2.0 + 1.0) + 4f64.ln();
    ((ln_area - std::f64::consts::PI.ln()) * 0.5).exp()
}

#[inline]
fn sigmoid<S: Real>(x: S) -> S {
    ((-x).exp() + 1.0).recip()
}

/// Renders intensities as `Real` values.
///
/// Each particle contributes `sigmoid((r_i - rho) / tau)`, where `rho` is the
/// superellipse radius `(|u|^n + |v|^n)^(1/n)` of the pixel offset in the
/// particle frame, scaled so the kernel area is `pi r_i^2` for every `n`.
/// Each pore subtracts `depth * sigmoid((r_p - dist) / tau)` times its host's
/// kernel value, so holes only remove material. Ungated, the soft pore tails
/// darken the rim just outside small particles, the same pixels a size edit
/// brightens, and distance-penalized edits then trade porosity against size.
/// The summed field `F` is tone-mapped to `0.5 + 0.5 tanh(gain (F - 0.5))`.
fn render_generic<S: Real>(layout: &ParticleLayout, attrs: [S; 4], resolution: usize) -> Vec<S> {
    let [size, porosity, dispersity, facetness] = attrs;
    let scale = resolution as f64 / REFERENCE_RESOLUTION as f64;
    let r_base = (size * RADIUS_PER_SIZE + RADIUS_OFFSET) * scale;
    let exponent = facetness * EXPONENT_PER_FACET + EXPONENT_ROUND;
    let inv_exponent = exponent.recip();
    let shape_scale = area_scale(exponent);
    let depth = porosity * PORE_DEPTH_PER_POROSITY;
    let inv_tau = 1.0 / SOFTNESS;

    struct Particle<S> {
        cx: f64,
        cy: f64,
        cos: f64,
        sin: f64,
        radius: S,
        pores: [(S, S); PORES_PER_PARTICLE],
        pore_radius: S,
    }

    let particles: Vec<Particle<S>> = (0..layout.len())
        .map(|i| {
            let (ux, uy) = layout.centers[i];
            let (cx, cy) = (ux * resolution as f64, uy * resolution as f64);
            let (sin, cos) = layout.rotations[i].sin_cos();
            let radius = r_base * (dispersity * layout.jitters[i] + 1.0);
            let pores = layout.pores[i].map(|(ox, oy)| {
                // particle frame to image frame
                let wx = cos * ox - sin * oy;
                let wy = sin * ox + cos * oy;
                (radius * wx + cx, radius * wy + cy)
            });
            Particle {
                cx,
                cy,
                cos,
                sin,
                radius,
                pores,
                pore_radius: radius * PORE_RADIUS_FRACTION,
            }
        })
        .collect();

    let mut out = Vec::with_capacity(resolution * resolution);
    for py in 0..resolution {
        let y = py as f64 + 0.5;
        for px in 0..resolution {
            let x = px as f64 + 0.5;
            let mut field = S::constant(0.0);
            for p in &particles {
                let (dx, dy) = (x - p.cx, y - p.cy);
                let u = (p.cos * dx + p.sin * dy).abs();
                let v = (-p.sin * dx + p.cos * dy).abs();
                let (hi, lo) = if u >= v { (u, v) } else { (v, u) };
                // rho = hi * (1 + (lo/hi)^n)^(1/n); the ratio is attribute-free
                let rho = if lo > 0.0 {
                    let log_ratio = (lo / hi).ln();
                    ((exponent * log_ratio).exp().ln_1p() * inv_exponent).exp() * hi
                } else {
                    S::constant(hi)
                } * shape_scale;
                let coverage = sigmoid((p.radius - rho) * inv_tau);
                field = field + coverage;

                let mut holes = S::constant(0.0);
                for &(qx, qy) in &p.pores {
                    let (ex, ey) = (-qx + x, -qy + y);
                    let dist = (ex * ex + ey * ey + DISTANCE_FLOOR_SQ).sqrt();
                    holes = holes + sigmoid((p.pore_radius - dist) * inv_tau);
                }
                field = field - depth * holes * coverage;
            }
            out.push(((field - 0.5) * TONE_GAIN).tanh() * 0.5 + 0.5);
        }
    }
    out
}

fn check_resolution(resolution: usize) -> Result<(), SynthError> {
    if resolution < MIN_RESOLUTION {
        return Err(SynthError::Resolution(resolution));
    }
    Ok(())
}

/// Renders `layout` under `attrs` at `resolution x resolution` pixels.
pub fn render(layout: &ParticleLayout, attrs: &AttributeVector, resolution: usize) -> Result<ImageTensor, SynthError> {
    check_resolution(resolution)?;
    let values = render_generic::<f64>(layout, attrs.as_array(), resolution);
    Ok(ImageTensor::from_raw(resolution, resolution, values))
}

/// Renders and also returns the Jacobian of every pixel with respect to the
/// four attributes, row-major `[pixel, attribute]`.
pub fn render_with_jacobian(
    layout: &ParticleLayout,
    attrs: &AttributeVector,
    resolution: usize,
) -> Result<(ImageTensor, Vec<f64>), SynthError> {
    check_resolution(resolution)?;
    let a = attrs.as_array();
    let jets = [0, 1, 2, 3].map(|i| Jet::variable(a[i], i));
    let values = render_generic::<Jet>(layout, jets, resolution);
    let mut jac = Vec::with_capacity(values.len() * 4);
    for j in &values {
        jac.extend_from_slice(&j.d);
    }
    let image = ImageTensor::from_raw(resolution, resolution, values.iter().map(|j| j.v).collect());
    Ok((image, jac))
}

/// `G(I; A)`: the tile identified by `seed` re-rendered under `attrs`.
pub fn render_edit(seed: u64, attrs: &AttributeVector, resolution: usize) -> Result<ImageTensor, SynthError> {
    render(&ParticleLayout::from_seed(seed, DEFAULT_PARTICLE_COUNT), attrs, resolution)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(v: [f64; 4]) -> AttributeVector {
        AttributeVector::from_array(v).unwrap()
    }

    #[test]
    fn area_scale_matches_gamma_closed_form() {
        // sqrt(A(n) / pi) from tabulated Gamma values
        for (n, want) in [(2.0, 1.0), (4.0, 1.0864348112133082), (8.0, 1.1161608358498367)] {
            assert!((area_scale(n) - want).abs() < 1e-10, "n = {n}");
        }
        let j = area_scale(Jet::variable(5.0, 3));
        let fd = (area_scale(5.0 + 1e-6) - area_scale(5.0 - 1e-6)) / 2e-6;
        assert!((j.d[3] - fd).abs() < 1e-8);
    }

    #[test]
    fn intensities_stay_in_unit_interval() {
        for seed in 0..5 {
            for a in [[0.0; 4], [1.0; 4], [0.3, 0.9, 0.1, 0.6]] {
                let img = render_edit(seed, &attrs(a), 32).unwrap();
                assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn zero_porosity_ignores_pore_positions() {
        let layout = ParticleLayout::from_seed(7, DEFAULT_PARTICLE_COUNT);
        let mut shuffled = layout.clone();
        shuffled.pores.reverse();
        for pores in &mut shuffled.pores {
            pores.swap(0, 2);
            pores[1] = (-pores[1].1, pores[1].0);
        }
        let a = attrs([0.5, 0.0, 0.4, 0.3]);
        assert_eq!(render(&layout, &a, 32).unwrap(), render(&shuffled, &a, 32).unwrap());
    }

    #[test]
    fn zero_dispersity_equalizes_radii() {
        let layout = ParticleLayout::from_seed(3, DEFAULT_PARTICLE_COUNT);
        let a = attrs([0.4, 0.5, 0.0, 0.5]);
        let radii = effective_radii(&layout, &a, 64);
        assert!(radii.iter().all(|&r| r == base_radius(0.4, 64)));
    }

    #[test]
    fn jacobian_path_matches_plain_values() {
        let layout = ParticleLayout::from_seed(11, DEFAULT_PARTICLE_COUNT);
        let a = attrs([0.35, 0.6, 0.25, 0.8]);
        let plain = render(&layout, &a, 24).unwrap();
        let (img, jac) = render_with_jacobian(&layout, &a, 24).unwrap();
        assert_eq!(jac.len(), 24 * 24 * 4);
        for (p, q) in plain.data().iter().zip(img.data()) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let layout = ParticleLayout::from_seed(17, DEFAULT_PARTICLE_COUNT);
        let base = [0.45, 0.55, 0.35, 0.65];
        let (_, jac) = render_with_jacobian(&layout, &attrs(base), 20).unwrap();
        let eps = 1e-5;
        for k in 0..4 {
            let mut hi = base;
            let mut lo = base;
            hi[k] += eps;
            lo[k] -= eps;
            let ih = render(&layout, &attrs(hi), 20).unwrap();
            let il = render(&layout, &attrs(lo), 20).unwrap();
            for (p, (a, b)) in ih.data().iter().zip(il.data()).enumerate() {
                let fd = (a - b) / (2.0 * eps);
                let an = jac[p * 4 + k];
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "attr {k} pixel {p}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn rejects_small_resolution_and_bad_attrs() {
        assert!(matches!(render_edit(1, &attrs([0.5; 4]), 8), Err(SynthError::Resolution(8))));
        assert!(AttributeVector::new(0.5, 0.5, 0.5, 1.01).is_err());
    }
}
