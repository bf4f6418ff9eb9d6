//! Independent oracles shared by the property and acceptance suites.
#![allow(dead_code)]

use anisoap::assembly::{assemble_form, DofMap, FormKind, Space};
use anisoap::fem::{gauss_rule, shape_eval};
use anisoap::fields::{AnisotropySpec, EpsilonField, VectorField};
use anisoap::grid::{classify_boundary, Grid, Rect, TOL_BN};
use anisoap::schemes::build_system;
use anisoap::{build_case, CaseName, CaseParams, SchemeKind};
use num_dual::Dual64;

/// 5-point Gauss-Legendre nodes and weights on [-1, 1].
pub const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// 3-point Gauss-Legendre nodes and weights on [-1, 1].
pub const GL3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Largest error of the matrix rule on monomials `xi^i eta^j`, `i, j <= 5`.
pub fn quadrature_defect() -> f64 {
    let rule = gauss_rule();
    let exact_1d = |k: i32| if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
    let mut worst = 0.0f64;
    for i in 0..=5 {
        for j in 0..=5 {
            let got = rule.integrate(|x, y| x.powi(i) * y.powi(j));
            worst = worst.max((got - exact_1d(i) * exact_1d(j)).abs());
        }
    }
    worst
}

/// Largest deviation of `sum phi_a` from 1 and of `sum grad phi_a` from 0
/// over a lattice of reference points.
pub fn partition_defect() -> f64 {
    let mut worst = 0.0f64;
    for s in 0..=20 {
        for t in 0..=20 {
            let (xi, eta) = (-1.0 + 0.1 * s as f64, -1.0 + 0.1 * t as f64);
            let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for a in 0..9 {
                let (p, dx, dy) = shape_eval(a, xi, eta);
                v += p;
                gx += dx;
                gy += dy;
            }
            worst = worst.max((v - 1.0).abs()).max(gx.abs()).max(gy.abs());
        }
    }
    worst
}

fn lagrange(nodes: [f64; 3], i: usize, x: f64) -> (f64, f64) {
    let (j, k) = ((i + 1) % 3, (i + 2) % 3);
    let den = (nodes[i] - nodes[j]) * (nodes[i] - nodes[k]);
    let v = (x - nodes[j]) * (x - nodes[k]) / den;
    let d = (2.0 * x - nodes[j] - nodes[k]) / den;
    (v, d)
}

/// Dense matrix of `kind` over every grid node, built from physical-space
/// Lagrange products with the given 1D rule per direction.
pub fn dense_nodal(grid: &Grid, spec: &AnisotropySpec, kind: FormKind, rule: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let nn = grid.num_nodes();
    let mut k = vec![vec![0.0; nn]; nn];
    for ey in 0..grid.elements_y() {
        for ex in 0..grid.elements_x() {
            let xs = [grid.x(2 * ex), grid.x(2 * ex + 1), grid.x(2 * ex + 2)];
            let ys = [grid.y(2 * ey), grid.y(2 * ey + 1), grid.y(2 * ey + 2)];
            let (jx, jy) = ((xs[2] - xs[0]) / 2.0, (ys[2] - ys[0]) / 2.0);
            for &(sx, wx) in rule {
                for &(sy, wy) in rule {
                    let (x, y) = (xs[1] + jx * sx, ys[1] + jy * sy);
                    let w = wx * wy * jx * jy;
                    let mut val = [0.0; 9];
                    let mut grad = [[0.0; 2]; 9];
                    let mut node = [0usize; 9];
                    for lj in 0..3 {
                        for li in 0..3 {
                            let (vx, dx) = lagrange(xs, li, x);
                            let (vy, dy) = lagrange(ys, lj, y);
                            let a = 3 * lj + li;
                            val[a] = vx * vy;
                            grad[a] = [dx * vy, vx * dy];
                            node[a] = grid.node_index(2 * ex + li, 2 * ey + lj);
                        }
                    }
                    let b = spec.b.direction(x, y);
                    let coef = match kind {
                        FormKind::ParEpsWeighted => spec.a_par * spec.eps.value(x),
                        FormKind::ParInvEps => spec.a_par / spec.eps.value(x),
                        _ => spec.a_par,
                    };
                    for a in 0..9 {
                        for c in 0..9 {
                            let (ga, gc) = (grad[a], grad[c]);
                            let sa = b[0] * ga[0] + b[1] * ga[1];
                            let sc = b[0] * gc[0] + b[1] * gc[1];
                            let e = match kind {
                                FormKind::Mass => val[a] * val[c],
                                FormKind::Laplace => ga[0] * gc[0] + ga[1] * gc[1],
                                FormKind::Par | FormKind::ParEpsWeighted | FormKind::ParInvEps => coef * sa * sc,
                                FormKind::Perp => {
                                    let pa = [ga[0] - sa * b[0], ga[1] - sa * b[1]];
                                    let pc = [gc[0] - sc * b[0], gc[1] - sc * b[1]];
                                    let ap = spec.a_perp;
                                    let apc = [ap[0][0] * pc[0] + ap[0][1] * pc[1], ap[1][0] * pc[0] + ap[1][1] * pc[1]];
                                    pa[0] * apc[0] + pa[1] * apc[1]
                                }
                            };
                            k[node[a]][node[c]] += w * e;
                        }
                    }
                }
            }
        }
    }
    k
}

/// Max entry-wise gap between `assemble_form` and the dense oracle restricted
/// to `rows x cols`, relative to the largest oracle entry.
pub fn assembly_defect(grid: &Grid, spec: &AnisotropySpec, kind: FormKind, rows: Space, cols: Space, rule: &[(f64, f64)]) -> f64 {
    let bc = classify_boundary(grid, &spec.b, TOL_BN);
    let (rm, cm) = (DofMap::new(grid, &bc, rows), DofMap::new(grid, &bc, cols));
    let got = assemble_form(grid, spec, &gauss_rule(), &rm, &cm, kind).to_dense();
    let full = dense_nodal(grid, spec, kind, rule);
    let mut scale = 0.0f64;
    let mut gap = 0.0f64;
    for (i, row) in got.iter().enumerate() {
        for (j, &g) in row.iter().enumerate() {
            let want = full[rm.node(i)][cm.node(j)];
            scale = scale.max(want.abs());
            gap = gap.max((g - want).abs());
        }
    }
    gap / scale
}

/// Worst assembly gap over every form, for constant oblique, aligned and
/// oscillating directions on an `n x n` (node intervals) grid of `rect`.
pub fn assembly_oracle_defect(n: usize, rect: Rect) -> f64 {
    let grid = Grid::new(n, n, rect).unwrap();
    let eps = EpsilonField::tanh_profile(1e-3, 50.0, 0.25).unwrap();
    let mut worst = 0.0f64;
    let kinds = [
        FormKind::Mass,
        FormKind::Laplace,
        FormKind::Par,
        FormKind::Perp,
    ];
    for b in [VectorField::constant(0.6, 0.8), VectorField::aligned()] {
        let spec = AnisotropySpec::new(b, EpsilonField::Constant(1e-2))
            .with_coefficients(2.0, [[1.5, 0.25], [0.25, 0.5]])
            .unwrap();
        for kind in kinds {
            for (r, c) in [(Space::V, Space::V), (Space::V, Space::L), (Space::L, Space::L)] {
                worst = worst.max(assembly_defect(&grid, &spec, kind, r, c, &GL5));
            }
        }
    }
    // non-polynomial coefficients: same 3-point rule, independent code path
    let spec = AnisotropySpec::new(VectorField::oscillating(2.0, 3).unwrap(), eps);
    for kind in [FormKind::Par, FormKind::Perp, FormKind::ParEpsWeighted, FormKind::ParInvEps] {
        worst = worst.max(assembly_defect(&grid, &spec, kind, Space::V, Space::L, &GL3));
    }
    worst
}

/// `max |K_par + K_perp - K_laplace| / max |K_laplace|` on the full node set.
pub fn projection_defect(n: usize, b: VectorField) -> f64 {
    let grid = Grid::unit_square(n).unwrap();
    let spec = AnisotropySpec::new(b, EpsilonField::Constant(1.0));
    let bc = classify_boundary(&grid, &spec.b, TOL_BN);
    let map = DofMap::new(&grid, &bc, Space::V);
    let rule = gauss_rule();
    let par = assemble_form(&grid, &spec, &rule, &map, &map, FormKind::Par);
    let perp = assemble_form(&grid, &spec, &rule, &map, &map, FormKind::Perp);
    let lap = assemble_form(&grid, &spec, &rule, &map, &map, FormKind::Laplace);
    let sum = par.add_scaled(&perp, 1.0).add_scaled(&lap, -1.0);
    let peak = lap.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    sum.values().iter().fold(0.0f64, |m, v| m.max(v.abs())) / peak
}

/// Relative symmetry defect of the assembled micro-macro matrix.
pub fn mm_symmetry_defect(n: usize, case: CaseName, eps: f64) -> f64 {
    let grid = Grid::unit_square(n).unwrap();
    let params = CaseParams { eps, eps_min: eps, m: 3, ..CaseParams::default() };
    let tc = build_case(case, &params).unwrap();
    let scheme = if case.has_variable_eps() { SchemeKind::MMVarEps } else { SchemeKind::MM };
    let (sys, _, _) = build_system(&grid, &tc, scheme).unwrap();
    sys.matrix.symmetry_defect() / sys.matrix.norm_1()
}

/// Largest `|div B|` of the oscillating field over a lattice, by forward-mode
/// differentiation of the field itself.
pub fn divergence_defect(alpha: f64, m: u32) -> f64 {
    let b = VectorField::oscillating(alpha, m).unwrap();
    let mut worst = 0.0f64;
    for s in 0..=16 {
        for t in 0..=16 {
            let (x, y) = (s as f64 / 16.0, t as f64 / 16.0);
            let bx = b.raw(Dual64::from_re(x).derivative(), Dual64::from_re(y));
            let by = b.raw(Dual64::from_re(x), Dual64::from_re(y).derivative());
            worst = worst.max((bx[0].eps + by[1].eps).abs());
        }
    }
    worst
}

/// Largest relative gap between the closed-form forcing of the aligned case
/// and the forcing differentiated from the flux.
pub fn forcing_defect(eps: f64) -> f64 {
    let tc = build_case(CaseName::ConstB, &CaseParams { eps, ..CaseParams::default() }).unwrap();
    let mut worst = 0.0f64;
    for s in 0..=10 {
        for t in 0..=10 {
            let (x, y) = (0.05 + 0.09 * s as f64, 0.05 + 0.09 * t as f64);
            let closed = tc.closed_form_forcing(x, y).expect("aligned constant case has a closed form");
            let generic = tc.forcing_generic(x, y);
            worst = worst.max((closed - generic).abs() / closed.abs().max(1.0));
        }
    }
    worst
}

pub fn unit() -> Rect {
    Rect::new(0.0, 1.0, 0.0, 1.0)
}


/// Spread `max / min` of `||grad_par q_h||` over `eps_q`, and the log-log
/// slope of `||grad_par u_h||` against `eps_u`.
pub fn theorem_bounds(n: usize, eps_q: &[f64], eps_u: &[f64]) -> (f64, f64) {
    let q = anisoap::analysis::parallel_gradient_study(n, eps_q).unwrap();
    let (lo, hi) = q.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), g| (lo.min(g.q), hi.max(g.q)));
    let u = anisoap::analysis::parallel_gradient_study(n, eps_u).unwrap();
    let xs: Vec<f64> = u.iter().map(|g| g.eps).collect();
    let ys: Vec<f64> = u.iter().map(|g| g.u).collect();
    (hi / lo, anisoap::analysis::loglog_slope(&xs, &ys))
}
