use knoblab::autodiff::finite_diff_check;
use knoblab::synth::{render, render_with_jacobian, DEFAULT_PARTICLE_COUNT};
use knoblab::{image_distance, render_edit, AttributeVector, ImageTensor, NormOrder, ParticleLayout};
use proptest::prelude::*;

const THRESHOLD: f64 = 0.5;

/// Connected components (4-neighbour) of pixels above the threshold, as
/// (pixel count, centroid x, centroid y).
fn components(img: &ImageTensor) -> Vec<(usize, f64, f64)> {
    let (h, w) = img.shape();
    let data = img.data();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for start in 0..h * w {
        if seen[start] || data[start] <= THRESHOLD {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
        while let Some(p) = stack.pop() {
            let (y, x) = (p / w, p % w);
            n += 1;
            sx += x as f64;
            sy += y as f64;
            let mut push = |q: usize| {
                if !seen[q] && data[q] > THRESHOLD {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if x > 0 {
                push(p - 1);
            }
            if x + 1 < w {
                push(p + 1);
            }
            if y > 0 {
                push(p - w);
            }
            if y + 1 < h {
                push(p + w);
            }
        }
        out.push((n, sx / n as f64, sy / n as f64));
    }
    out
}

fn mean_area(img: &ImageTensor) -> f64 {
    let c = components(img);
    c.iter().map(|c| c.0 as f64).sum::<f64>() / c.len().max(1) as f64
}

fn attrs(s: f64, p: f64, d: f64, f: f64) -> AttributeVector {
    AttributeVector::new(s, p, d, f).unwrap()
}

#[test]
fn size_grows_thresholded_particle_area() {
    for seed in 0..10u64 {
        let small = mean_area(&render_edit(seed, &attrs(0.2, 0.5, 0.5, 0.5), 64).unwrap());
        let large = mean_area(&render_edit(seed, &attrs(0.9, 0.5, 0.5, 0.5), 64).unwrap());
        assert!(large / small > 2.0, "seed {seed}: {large} / {small}");
    }
}

/// Particles in the centroid oracles. With the full dozen on a 64x64 tile
/// neighbours touch, and an edit that joins or separates two blobs changes
/// the component count, which leaves drift undefined; four particles (one
/// per quadrant) stay separate.
const SPARSE_PARTICLES: usize = 4;

fn render_sparse(seed: u64, a: &AttributeVector) -> ImageTensor {
    render(&ParticleLayout::from_seed(seed, SPARSE_PARTICLES), a, 64).unwrap()
}

#[test]
fn facetness_edit_keeps_particle_centroids() {
    for seed in 100..110u64 {
        let round = render_sparse(seed, &attrs(0.3, 0.0, 0.5, 0.0));
        let faceted = render_sparse(seed, &attrs(0.3, 0.0, 0.5, 1.0));
        let drift = centroid_drift(&round, &faceted);
        assert!(matches!(drift, Some(d) if d < 1.0), "seed {seed}: {drift:?}");
    }
}

#[test]
fn porosity_darkens_every_tile() {
    for seed in 0..20u64 {
        let base = attrs(0.5, 0.0, 0.4, 0.6);
        let before = render_edit(seed, &base, 64).unwrap().mean();
        let after = render_edit(seed, &base.with(1, 1.0).unwrap(), 64).unwrap().mean();
        assert!(after < before, "seed {seed}: {after} >= {before}");
    }
}

#[test]
fn edit_equals_render_of_seeded_layout() {
    let a = attrs(0.3, 0.7, 0.2, 0.9);
    let layout = ParticleLayout::from_seed(42, DEFAULT_PARTICLE_COUNT);
    assert_eq!(render_edit(42, &a, 64).unwrap(), render(&layout, &a, 64).unwrap());
    let (img, _) = render_with_jacobian(&layout, &a, 64).unwrap();
    assert_eq!(img, render(&layout, &a, 64).unwrap());
}

/// Matches components between two renders; returns the largest centroid drift.
fn centroid_drift(a: &ImageTensor, b: &ImageTensor) -> Option<f64> {
    let (ca, cb) = (components(a), components(b));
    if ca.len() != cb.len() {
        return None;
    }
    Some(ca.iter().fold(0.0, |worst: f64, &(_, x, y)| {
        let d = cb
            .iter()
            .map(|&(_, u, v)| ((u - x).powi(2) + (v - y).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        worst.max(d)
    }))
}

#[test]
fn single_attribute_edits_keep_particles_in_place() {
    let base = attrs(0.25, 0.0, 0.2, 0.3);
    let edits = [(0, 0.35), (1, 0.3), (2, 0.6), (3, 1.0)];
    for seed in 200..206u64 {
        let before = render_sparse(seed, &base);
        for (j, v) in edits {
            let after = render_sparse(seed, &base.with(j, v).unwrap());
            let drift = centroid_drift(&before, &after);
            assert!(matches!(drift, Some(d) if d < 1.0), "seed {seed}, attribute {j}: {drift:?}");
        }
    }
}

#[test]
fn distance_unit_cases() {
    let zeros = ImageTensor::filled(8, 8, 0.0);
    let ones = ImageTensor::filled(8, 8, 1.0);
    assert_eq!(image_distance(&zeros, &ones, NormOrder::L2).unwrap(), 1.0);
    assert_eq!(image_distance(&zeros, &ones, NormOrder::L1).unwrap(), 1.0);
    assert_eq!(image_distance(&ones, &ones, NormOrder::L2).unwrap(), 0.0);
    assert!(image_distance(&zeros, &ImageTensor::filled(4, 8, 0.0), NormOrder::L1).is_err());
}

fn attr_strategy() -> impl Strategy<Value = AttributeVector> {
    prop::array::uniform4(0.0..=1.0f64).prop_map(|a| AttributeVector::from_array(a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn intensities_stay_in_unit_range(seed in any::<u64>(), a in attr_strategy()) {
        let img = render_edit(seed, &a, 32).unwrap();
        prop_assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rendering_is_bit_deterministic(seed in any::<u64>(), a in attr_strategy()) {
        let x = render_edit(seed, &a, 32).unwrap();
        let y = render_edit(seed, &a, 32).unwrap();
        prop_assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn smooth_functional_of_render_is_differentiable(
        seed in any::<u64>(),
        a in prop::array::uniform4(0.05..0.95f64),
    ) {
        let layout = ParticleLayout::from_seed(seed, DEFAULT_PARTICLE_COUNT);
        // mean squared intensity, differentiated through the render Jacobian
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>), knoblab::GraphError> {
            let (img, jac) = render_with_jacobian(&layout, &AttributeVector::from_slice(x).unwrap(), 32).unwrap();
            let n = img.data().len() as f64;
            let value = img.data().iter().map(|v| v * v).sum::<f64>() / n;
            let mut grad = vec![0.0; 4];
            for (p, v) in img.data().iter().enumerate() {
                for (k, g) in grad.iter_mut().enumerate() {
                    *g += 2.0 * v * jac[p * 4 + k] / n;
                }
            }
            Ok((value, grad))
        };
        let report = finite_diff_check(f, &a, 1e-5).unwrap();
        prop_assert!(report.max_rel_error < 1e-3, "{:e}", report.max_rel_error);
    }

    #[test]
    fn distance_matches_direct_summation(
        pair in (1usize..6, 1usize..6).prop_flat_map(|(h, w)| (
            Just((h, w)),
            prop::collection::vec(0.0..1.0f64, h * w),
            prop::collection::vec(0.0..1.0f64, h * w),
        )),
    ) {
        let ((h, w), a, b) = pair;
        let n = (h * w) as f64;
        let ia = ImageTensor::new(h, w, a.clone()).unwrap();
        let ib = ImageTensor::new(h, w, b.clone()).unwrap();
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        for i in 0..a.len() {
            l1 += (a[i] - b[i]).abs();
            l2 += (a[i] - b[i]) * (a[i] - b[i]);
        }
        let (l1, l2) = (l1 / n, (l2 / n).sqrt());
        let d1 = image_distance(&ia, &ib, NormOrder::L1).unwrap();
        let d2 = image_distance(&ia, &ib, NormOrder::L2).unwrap();
        prop_assert!(d1 >= 0.0);
        prop_assert!((d1 - l1).abs() < 1e-12 && (d2 - l2).abs() < 1e-12);
        prop_assert_eq!(d2, image_distance(&ib, &ia, NormOrder::L2).unwrap());
        prop_assert_eq!(d1 == 0.0, a == b);
    }
}

