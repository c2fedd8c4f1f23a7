use orthofem::fespace::{interpolate_nodal, FeSpace};
use orthofem::mesh::{build_quad, build_tri, StructuredMesh, TrianglePattern};
use orthofem::nfunc::{GrowthLaw, PowerNFunction};
use orthofem::solver::{assemble_stiffness, assemble_weighted_stiffness};
use proptest::prelude::*;

const PATTERNS: [TrianglePattern; 4] =
    [TrianglePattern::Boxslash, TrianglePattern::AlternatingKuhn, TrianglePattern::UnionJack, TrianglePattern::Cross];

fn any_mesh() -> impl Strategy<Value = StructuredMesh> {
    (2usize..9, 0usize..5).prop_map(|(n, k)| if k == 4 { build_quad(n).unwrap() } else { build_tri(n, PATTERNS[k]).unwrap() })
}

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.5), Just(2.0), Just(3.0), 1.1f64..4.0]
}

proptest! {
    #[test]
    fn flux_and_v_are_odd(p in exponent(), t in -1e3f64..1e3) {
        let law = GrowthLaw::orthotropic(p, p).unwrap();
        prop_assert_eq!(law.flux_a(0, -t), -law.flux_a(0, t));
        prop_assert_eq!(law.natural_v(0, -t), -law.natural_v(0, t));
    }

    #[test]
    fn phi_is_midpoint_convex(p in exponent(), delta in 0.0f64..1.0, a in 0.0f64..50.0, b in 0.0f64..50.0) {
        let phi = PowerNFunction::new(p, delta).unwrap();
        let mid = phi.value(0.5 * (a + b)).unwrap();
        let avg = 0.5 * (phi.value(a).unwrap() + phi.value(b).unwrap());
        prop_assert!(mid <= avg * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn equivalence_ratio_is_bounded(p in prop_oneof![Just(1.5), Just(2.0), Just(3.0)], s in -1e2f64..1e2, t in -1e2f64..1e2) {
        prop_assume!((s - t).abs() > 1e-6 * (s.abs() + t.abs()).max(1e-3));
        let law = GrowthLaw::orthotropic(p, p).unwrap();
        let dv = law.natural_v(0, s) - law.natural_v(0, t);
        let r = (law.flux_a(0, s) - law.flux_a(0, t)) * (s - t) / (dv * dv);
        // the brute-force grid bounds, widened slightly for off-grid pairs
        let (lo, hi) = if p == 2.0 { (1.0, 1.0) } else { (0.8, 1.1) };
        prop_assert!(r >= lo * (1.0 - 1e-9) && r <= hi * (1.0 + 1e-9), "p={} r={}", p, r);
    }

    #[test]
    fn cells_tile_the_square(mesh in any_mesh()) {
        let total: f64 = (0..mesh.num_cells()).map(|c| mesh.cell_area(c)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for c in 0..mesh.num_cells() {
            prop_assert!(mesh.cell_area(c) > 0.0);
        }
    }

    #[test]
    fn basis_is_a_partition_of_unity(mesh in any_mesh(), xi in 0.0f64..1.0, eta in 0.0f64..1.0) {
        let space = FeSpace::new(mesh);
        let xi = if space.mesh().is_quad() { [xi, eta] } else { [xi * (1.0 - eta), eta] };
        let one = interpolate_nodal(&space, |_| 1.0).unwrap();
        for c in 0..space.mesh().num_cells() {
            let s: f64 = space.shape_values(xi)[..space.local_dofs()].iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-14);
            prop_assert!((one.value_in_cell(c, xi) - 1.0).abs() < 1e-14);
            let g = one.grad_in_cell(c, xi);
            prop_assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
        }
    }

    #[test]
    fn assembled_matrices_are_symmetric(mesh in any_mesh(), p1 in exponent(), p2 in exponent(), seed in any::<u64>()) {
        let space = FeSpace::new(mesh);
        prop_assert!(assemble_stiffness(&space).check_symmetric(1e-13).is_ok());
        let law = GrowthLaw::orthotropic(p1, p2).unwrap();
        let u = interpolate_nodal(&space, |x| ((seed % 97) as f64 * x[0] + 3.0 * x[1] * x[1]).sin()).unwrap();
        let kb = assemble_weighted_stiffness(&space, &u, &law, 1e-10).unwrap();
        prop_assert!(kb.check_symmetric(1e-13).is_ok());
        for r in 0..kb.dim() {
            prop_assert!(kb.get(r, r) > 0.0);
        }
    }
}
