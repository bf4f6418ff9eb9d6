mod common;

use anisoap::analysis::fit_order;
use anisoap::assembly::{DofMap, Space};
use anisoap::fem::shape_eval;
use anisoap::fields::{split_with_direction, VectorField};
use anisoap::grid::{classify_boundary, Grid, Rect, TOL_BN};
use anisoap::CaseName;
use common::*;
use proptest::prelude::*;

#[test]
fn matrix_rule_is_exact_to_degree_five() {
    assert!(quadrature_defect() < 1e-14, "{}", quadrature_defect());
}

#[test]
fn shape_functions_partition_unity() {
    assert!(partition_defect() < 1e-14);
}

#[test]
fn assembly_matches_dense_oracle_on_small_grids() {
    for n in [4, 8] {
        let d = assembly_oracle_defect(n, unit());
        assert!(d < 1e-13, "n = {n}: {d:e}");
    }
    let d = assembly_oracle_defect(4, Rect::new(-0.5, 1.5, 0.25, 1.0));
    assert!(d < 1e-13, "stretched: {d:e}");
}

#[test]
fn parallel_plus_perpendicular_is_laplacian() {
    for b in [VectorField::aligned(), VectorField::constant(1.0, 2.0), VectorField::oscillating(2.0, 5).unwrap()] {
        let d = projection_defect(8, b);
        assert!(d < 1e-12, "{b:?}: {d:e}");
    }
}

#[test]
fn micro_macro_matrix_is_symmetric() {
    assert_eq!(mm_symmetry_defect(8, CaseName::ConstB, 1e-6), 0.0);
    assert_eq!(mm_symmetry_defect(8, CaseName::OscB, 1e-3), 0.0);
    assert_eq!(mm_symmetry_defect(8, CaseName::ConstBVarEps, 1e-20), 0.0);
}

#[test]
fn oscillating_field_is_divergence_free() {
    for (alpha, m) in [(0.5, 1), (2.0, 5), (3.0, 10)] {
        let d = divergence_defect(alpha, m);
        assert!(d < 1e-12, "alpha {alpha} m {m}: {d:e}");
    }
}

#[test]
fn closed_form_forcing_matches_differentiated_flux() {
    for eps in [10.0, 1.0, 1e-4, 1e-10, 1e-15] {
        assert!(forcing_defect(eps) < 1e-7);
    }
}

#[test]
fn micro_gradient_bounded_and_macro_gradient_linear_in_eps() {
    let (spread, slope) = theorem_bounds(40, &[1.0, 1e-4, 1e-8, 1e-12, 1e-15], &[1e-1, 1e-2, 1e-3]);
    assert!(spread < 3.0, "spread {spread}");
    assert!((slope - 1.0).abs() < 0.1, "slope {slope}");
}

proptest! {
    #[test]
    fn partition_of_unity_anywhere(xi in -1.0f64..1.0, eta in -1.0f64..1.0) {
        let s: f64 = (0..9).map(|a| shape_eval(a, xi, eta).0).sum();
        prop_assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn split_is_orthogonal_and_complete(angle in 0.0f64..6.3, gx in -10.0f64..10.0, gy in -10.0f64..10.0) {
        let b = [angle.cos(), angle.sin()];
        let (par, perp) = split_with_direction(b, [gx, gy]);
        prop_assert!((par[0] + perp[0] - gx).abs() < 1e-12);
        prop_assert!((par[1] + perp[1] - gy).abs() < 1e-12);
        prop_assert!((perp[0] * b[0] + perp[1] * b[1]).abs() < 1e-12);
    }

    #[test]
    fn projection_identity_any_direction(angle in 0.0f64..6.3) {
        let b = VectorField::constant(angle.cos(), angle.sin());
        prop_assert!(projection_defect(4, b) < 1e-12);
    }

    #[test]
    fn node_numbering_round_trips(n in 1usize..20, k in 0usize..10_000) {
        let g = Grid::unit_square(2 * n).unwrap();
        let node = k % g.num_nodes();
        let (i, j) = g.node_ij(node);
        prop_assert_eq!(g.node_index(i, j), node);
    }

    #[test]
    fn dof_restrict_expand_round_trips(n in 1usize..8, angle in 0.0f64..6.3) {
        let g = Grid::unit_square(2 * n).unwrap();
        let bc = classify_boundary(&g, &VectorField::constant(angle.cos(), angle.sin()), TOL_BN);
        for space in [Space::V, Space::L] {
            let map = DofMap::new(&g, &bc, space);
            let x: Vec<f64> = (0..map.len()).map(|i| i as f64 + 0.5).collect();
            prop_assert_eq!(map.restrict(&map.expand(&x)), x);
        }
    }

    #[test]
    fn fit_recovers_power_law(c in 0.1f64..10.0, p in 1.0f64..4.0) {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025, 0.0125].iter().map(|&h: &f64| (h, c * h.powf(p))).collect();
        let fit = fit_order(&pts).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-9);
    }
}
