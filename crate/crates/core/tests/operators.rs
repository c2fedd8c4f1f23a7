use std::sync::Arc;

use orthofem::fespace::{FeFunction, FeSpace};
use orthofem::interp::*;
use orthofem::mesh::{build_quad, build_tri, TrianglePattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_zero_trace(space: &Arc<FeSpace>, rng: &mut ChaCha8Rng) -> FeFunction {
    let coeffs = (0..space.num_dofs())
        .map(|i| if space.mesh().is_boundary(i) { 0.0 } else { rng.gen_range(-1.0..1.0) })
        .collect();
    FeFunction::new(space.clone(), coeffs).unwrap()
}

fn margins_over_random_inputs(fine: &Arc<FeSpace>, target: Arc<FeSpace>, seed: u64) -> (usize, StabilityMargins) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = AveragedInterpolant::new(target).unwrap();
    let mut worst = StabilityMargins { excess: f64::NEG_INFINITY, ratio: 0.0 };
    let mut violations = 0;
    for _ in 0..50 {
        let w = random_zero_trace(fine, &mut rng);
        let m = stability_margins(&w, &pi.apply(&w).unwrap()).unwrap();
        if m.excess > 1e-12 {
            violations += 1;
        }
        worst.excess = worst.excess.max(m.excess);
        worst.ratio = worst.ratio.max(m.ratio);
    }
    (violations, worst)
}

fn central_hat(space: &Arc<FeSpace>) -> FeFunction {
    let mut w = FeFunction::zeros(space.clone());
    let n = space.mesh().n();
    w.coeffs_mut()[space.mesh().lattice_node([n / 2, n / 2])] = 1.0;
    w
}

#[test]
fn q_averaged_stability() {
    let fine = FeSpace::new(build_quad(16).unwrap());
    let (violations, worst) = margins_over_random_inputs(&fine, FeSpace::new(build_quad(8).unwrap()), 11);
    assert_eq!(violations, 0, "{worst:?}");
    assert!(worst.ratio <= 0.5 + 1e-12, "{worst:?}");
}

#[test]
fn p_averaged_stability() {
    for pattern in [TrianglePattern::Boxslash, TrianglePattern::AlternatingKuhn] {
        let tri = |n| FeSpace::new(build_tri(n, pattern).unwrap());
        let (_, worst) = margins_over_random_inputs(&tri(16), tri(8), 12);
        assert!(worst.ratio <= 1.0 + 1e-12, "{pattern:?} {worst:?}");
    }
}

#[test]
fn constant_one_fails_for_concentrated_inputs() {
    // a fine hat inside one averaging box: the patch mean dilutes the slope
    let quad = |n| FeSpace::new(build_quad(n).unwrap());
    let w = central_hat(&quad(16));
    let m = stability_margins(&w, &AveragedInterpolant::new(quad(8)).unwrap().apply(&w).unwrap()).unwrap();
    assert!((m.excess - 1.0 / 9.0).abs() < 1e-12, "{m:?}");
    assert!((m.ratio - 0.125).abs() < 1e-12);

    let tri = |n| FeSpace::new(build_tri(n, TrianglePattern::Boxslash).unwrap());
    let w = central_hat(&tri(16));
    let m = stability_margins(&w, &AveragedInterpolant::new(tri(8)).unwrap().apply(&w).unwrap()).unwrap();
    assert!((m.excess - 10.0 / 13.0).abs() < 1e-12, "{m:?}");
    assert!((m.ratio - 0.25).abs() < 1e-12);
}

#[test]
fn stability_check_rejects_unnested_input() {
    let fine = FeSpace::new(build_tri(16, TrianglePattern::Boxslash).unwrap());
    let target = FeSpace::new(build_tri(8, TrianglePattern::AlternatingKuhn).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = random_zero_trace(&fine, &mut rng);
    let pw = AveragedInterpolant::new(target).unwrap().apply(&w).unwrap();
    assert!(stability_margins(&w, &pw).is_err());
}

#[test]
fn projection_locality_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let kuhn = |n| FeSpace::new(build_tri(n, TrianglePattern::AlternatingKuhn).unwrap());
    let quad = |n| FeSpace::new(build_quad(n).unwrap());
    let cases = [
        (DualKind::Simplicial, kuhn(16), kuhn(8), SIMPLICIAL_TABLE[0]),
        (DualKind::Cubic, quad(16), quad(8), CUBIC_TABLE[0]),
    ];
    for (kind, fine, target, bound) in cases {
        let proj = build_dual_table(kind, target.mesh()).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let w = random_zero_trace(&fine, &mut rng);
            let pw = proj.apply(&w, &target).unwrap();
            worst = worst.max(locality_constant(&pw, &w, 5, 4).unwrap());
        }
        assert!(worst > 0.0 && worst <= bound, "{kind:?}: {worst}");
    }
}

#[test]
fn locality_for_a_concentrated_input() {
    // mass concentrated at a node pushes the ratio toward ‖h²Λ*‖∞
    let target = FeSpace::new(build_quad(8).unwrap());
    let proj = build_dual_table(DualKind::Cubic, target.mesh()).unwrap();
    let v = [0.5, 0.5];
    let r = 1.0 / 64.0;
    let w = Analytic(move |x: [f64; 2]| if (x[0] - v[0]).abs() < r && (x[1] - v[1]).abs() < r { 1.0 } else { 0.0 });
    let pw = proj.apply(&w, &target).unwrap();
    let c = locality_constant(&pw, &w, 5, 16).unwrap();
    assert!(c > 0.5 * CUBIC_TABLE[0] && c <= 1.01 * CUBIC_TABLE[0], "{c}");
}
