//! End-to-end solvers: assemble, factorize, solve, and map the block solution
//! back to nodal fields. Also the error norms against the manufactured
//! solutions.

use std::time::Instant;

use num_dual::Dual64;
use rayon::prelude::*;

use crate::assembly::{
    assemble_load, assemble_scheme_matrix, AssemblyInput, DofMap, SchemeKind, Space, SparseSystem, Unknown,
};
use crate::cases::TestCase;
use crate::error::{ConfigError, Error};
use crate::fem::{error_quad_rule, gauss_rule, ElementMap, QuadRule, ShapeTable};
use crate::fields::{EpsilonField, VectorField};
use crate::grid::{classify_boundary, Grid, TOL_BN};
use crate::linalg::{
    factorize, factorize_quasi_definite, rcond_estimate, solve_refined, Backend, Factorization, LinearSolution,
    SymmetricForm,
};

/// Knobs of a single solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Also run the 1-norm condition estimator.
    pub condition: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { condition: true }
    }
}

/// Discrete fields of one solve, as values on every grid node (constrained
/// nodes hold 0), with cost and conditioning data.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub scheme: SchemeKind,
    pub grid: Grid,
    pub u: Vec<f64>,
    pub q: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub l: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
    pub rows: usize,
    pub nnz: usize,
    pub assembly_ms: f64,
    pub factor_ms: f64,
    pub solve_ms: f64,
    /// `||K x - rhs||_1 / ||rhs||_1` after refinement.
    pub residual: f64,
    pub refinements: usize,
    pub backend: Backend,
    pub rcond: Option<f64>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Assembles the linear system of `scheme` for `case` without solving it.
pub fn build_system(grid: &Grid, case: &TestCase, scheme: SchemeKind) -> Result<(SparseSystem, DofMap, DofMap), ConfigError> {
    check_scheme(case, scheme)?;
    let bc = classify_boundary(grid, &case.spec.b, TOL_BN);
    let v_map = DofMap::new(grid, &bc, Space::V);
    let l_map = DofMap::new(grid, &bc, Space::L);
    if v_map.is_empty() {
        return Err(ConfigError::InvalidGrid("no free degrees of freedom".into()));
    }
    let rule = gauss_rule();
    let load = assemble_load(grid, |x, y| case.forcing(x, y), &rule, &v_map);
    let input = AssemblyInput {
        grid,
        spec: &case.spec,
        rule: &rule,
        v_map: &v_map,
        l_map: &l_map,
        load: &load,
    };
    let system = assemble_scheme_matrix(scheme, &input)?;
    Ok((system, v_map, l_map))
}

fn check_scheme(case: &TestCase, scheme: SchemeKind) -> Result<(), ConfigError> {
    let eps = case.spec.eps.constant_value();
    match scheme {
        SchemeKind::Limit if eps != Some(0.0) => Err(ConfigError::Scheme("the limit scheme needs eps = 0".into())),
        SchemeKind::MM | SchemeKind::DB if eps.is_none() => Err(ConfigError::Scheme(format!(
            "{scheme} needs constant eps; use mm_var_eps for a variable profile"
        ))),
        SchemeKind::P if case.spec.eps.min_value() <= 0.0 => {
            Err(ConfigError::Scheme("the P scheme needs eps > 0".into()))
        }
        _ => Ok(()),
    }
}

/// Solves `case` on `grid` with `scheme`.
pub fn solve(grid: &Grid, case: &TestCase, scheme: SchemeKind, opts: &SolverOptions) -> Result<SolveResult, Error> {
    let t0 = Instant::now();
    let (system, v_map, l_map) = build_system(grid, case, scheme)?;
    let assembly_ms = ms(t0);

    let eps = case.spec.eps.constant_value();
    let (f, sol, factor_ms, solve_ms) = factor_and_solve(&system, eps)?;

    let rcond = if opts.condition {
        Some(rcond_estimate(&system.matrix, &f)?)
    } else {
        None
    };

    let field = |unknown: Unknown| -> Option<Vec<f64>> {
        let block = system.block(unknown)?;
        let part = &sol.x[block.offset..block.offset + block.len];
        Some(match block.space {
            Space::V => v_map.expand(part),
            Space::L => l_map.expand(part),
        })
    };

    let (u, q, p, lambda, l, mu) = match scheme {
        SchemeKind::DB => {
            let p = field(Unknown::P).expect("DB layout");
            let q = field(Unknown::Q).expect("DB layout");
            let u = p.iter().zip(&q).map(|(p, q)| p + q).collect();
            (u, Some(q), Some(p), field(Unknown::Lambda), field(Unknown::L), field(Unknown::Mu))
        }
        _ => (field(Unknown::U).expect("u block"), field(Unknown::Q), None, None, None, None),
    };

    Ok(SolveResult {
        scheme,
        grid: grid.clone(),
        u,
        q,
        p,
        lambda,
        l,
        mu,
        rows: system.rows(),
        nnz: system.nnz(),
        assembly_ms,
        factor_ms,
        solve_ms,
        residual: sol.residual,
        refinements: sol.refinements,
        backend: f.backend(),
        rcond,
    })
}

/// Regularization added to the multiplier blocks of systems whose
/// multiplier diagonal vanishes (limit and duality-based schemes).
pub const QD_DELTA: f64 = 1e-10;

/// Increasing regularizations tried in turn for those systems; too small a
/// shift can break the factorization, too large a one stalls refinement.
pub const QD_DELTA_LADDER: [f64; 4] = [QD_DELTA, 1e-9, 1e-8, 1e-7];

/// Residual a quasi-definite solve must reach before the LU fallback is
/// skipped.
pub const QD_ACCEPT_RESIDUAL: f64 = 1e-10;

/// Scaling and pivot signs that make the system of `system.scheme`
/// symmetric quasi-definite, or `None` when the scheme is solved by LU.
///
/// The duality-based rows of `p` and `lambda` are scaled by `sqrt(eps)` and
/// their unknowns by `1/sqrt(eps)`, which symmetrizes the `eps`-weighted
/// coupling between `p` and `q`.
pub fn symmetric_form(system: &SparseSystem, eps: Option<f64>) -> Option<SymmetricForm> {
    let n = system.rows();
    let mut form = match system.scheme {
        SchemeKind::P => return None,
        SchemeKind::MM | SchemeKind::MMVarEps => SymmetricForm::unscaled(vec![1; n], 0.0),
        SchemeKind::Limit => SymmetricForm::unscaled(vec![1; n], QD_DELTA),
        SchemeKind::DB => match eps {
            Some(e) if e > 0.0 && e.is_finite() => SymmetricForm::unscaled(vec![1; n], QD_DELTA),
            _ => return None,
        },
    };
    for b in &system.blocks {
        let range = b.offset..b.offset + b.len;
        let negative = match system.scheme {
            SchemeKind::DB => matches!(b.unknown, Unknown::Lambda | Unknown::L),
            _ => b.unknown == Unknown::Q,
        };
        if negative {
            form.signs[range.clone()].fill(-1);
        }
        if system.scheme == SchemeKind::DB && matches!(b.unknown, Unknown::P | Unknown::Lambda) {
            let e = eps.expect("checked above");
            form.left[range.clone()].fill(e.sqrt());
            form.right[range].fill(1.0 / e.sqrt());
        }
    }
    Some(form)
}

/// Factorizes and solves `system`, preferring the quasi-definite LDLᵀ
/// (over [`QD_DELTA_LADDER`] when the system needs a shift) and falling back
/// to LU when every attempt fails or keeps its refined residual above
/// [`QD_ACCEPT_RESIDUAL`]. Returns the factors, the solution and the factor
/// and solve times in milliseconds.
pub fn factor_and_solve(
    system: &SparseSystem,
    eps: Option<f64>,
) -> Result<(Factorization, LinearSolution, f64, f64), Error> {
    if let Some(mut form) = symmetric_form(system, eps) {
        let deltas: &[f64] = if form.delta > 0.0 { &QD_DELTA_LADDER } else { &[0.0] };
        for &delta in deltas {
            form.delta = delta;
            let t = Instant::now();
            let Ok(f) = factorize_quasi_definite(&system.matrix, &form) else {
                continue;
            };
            let factor_ms = ms(t);
            let t2 = Instant::now();
            if let Ok(sol) = solve_refined(&system.matrix, &f, &system.rhs) {
                if sol.residual <= QD_ACCEPT_RESIDUAL {
                    return Ok((f, sol, factor_ms, ms(t2)));
                }
            }
        }
    }
    let t = Instant::now();
    let f = factorize(&system.matrix)?;
    let factor_ms = ms(t);
    let t2 = Instant::now();
    let sol = solve_refined(&system.matrix, &f, &system.rhs)?;
    Ok((f, sol, factor_ms, ms(t2)))
}

pub fn solve_p(grid: &Grid, case: &TestCase) -> Result<SolveResult, Error> {
    solve(grid, case, SchemeKind::P, &SolverOptions::default())
}

/// Micro-macro solve; picks the variable-eps or limit variant from the case.
pub fn solve_mm(grid: &Grid, case: &TestCase) -> Result<SolveResult, Error> {
    let scheme = match case.spec.eps.constant_value() {
        None => SchemeKind::MMVarEps,
        Some(e) if e == 0.0 => SchemeKind::Limit,
        Some(_) => SchemeKind::MM,
    };
    solve(grid, case, scheme, &SolverOptions::default())
}

pub fn solve_db(grid: &Grid, case: &TestCase) -> Result<SolveResult, Error> {
    solve(grid, case, SchemeKind::DB, &SolverOptions::default())
}

/// Macro part `u_h - eps q_h`, nodewise. Only meaningful for micro-macro
/// results; returns `None` when no `q_h` is present.
pub fn reconstruct_micro(result: &SolveResult, eps: &EpsilonField) -> Option<Vec<f64>> {
    if result.scheme == SchemeKind::DB {
        return None;
    }
    let q = result.q.as_ref()?;
    let g = &result.grid;
    Some(
        (0..g.num_nodes())
            .map(|n| {
                let (x, _) = g.node_coords(n);
                result.u[n] - eps.value(x) * q[n]
            })
            .collect(),
    )
}

/// Values of `f` at every grid node.
pub fn interpolate(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..grid.num_nodes())
        .map(|n| {
            let (x, y) = grid.node_coords(n);
            f(x, y)
        })
        .collect()
}

/// Sums `integrand(x, y, value, grad)` of a nodal Q2 field over the domain.
/// Per-element sums are added in element order, so the result does not depend
/// on the thread count.
fn integrate_field<F>(grid: &Grid, nodal: &[f64], rule: &QuadRule, integrand: F) -> Vec<f64>
where
    F: Fn(f64, f64, f64, [f64; 2]) -> Vec<f64> + Sync,
{
    assert_eq!(nodal.len(), grid.num_nodes(), "field does not live on this grid");
    let table = ShapeTable::new(rule);
    let parts: Vec<Vec<f64>> = (0..grid.num_elements())
        .into_par_iter()
        .map(|e| {
            let (ex, ey) = grid.element_ij(e);
            let map = ElementMap::new(grid, ex, ey);
            let nodes = grid.element_nodes(ex, ey);
            let (ihx, ihy) = (1.0 / map.half_width.0, 1.0 / map.half_width.1);
            let mut acc: Vec<f64> = Vec::new();
            for (q, (&(xi, eta), &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let (x, y) = map.to_physical(xi, eta);
                let mut v = 0.0;
                let mut g = [0.0; 2];
                for (a, &n) in nodes.iter().enumerate() {
                    v += nodal[n] * table.values[q][a];
                    g[0] += nodal[n] * table.d_xi[q][a] * ihx;
                    g[1] += nodal[n] * table.d_eta[q][a] * ihy;
                }
                let vals = integrand(x, y, v, g);
                if acc.is_empty() {
                    acc = vec![0.0; vals.len()];
                }
                for (s, t) in acc.iter_mut().zip(vals) {
                    *s += w * map.det() * t;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; parts.first().map_or(0, |p| p.len())];
    for p in parts {
        for (s, t) in total.iter_mut().zip(p) {
            *s += t;
        }
    }
    total
}

/// L2 norm of the parallel derivative `b . grad v` of a nodal field.
pub fn parallel_gradient_norm(grid: &Grid, b: &VectorField, nodal: &[f64], rule: &QuadRule) -> f64 {
    integrate_field(grid, nodal, rule, |x, y, _, g| {
        let d = b.direction(x, y);
        let s = d[0] * g[0] + d[1] * g[1];
        vec![s * s]
    })[0]
    .sqrt()
}

/// `(||v||_L2, ||v||_H1)` of a nodal field.
pub fn field_norms(grid: &Grid, nodal: &[f64], rule: &QuadRule) -> (f64, f64) {
    let s = integrate_field(grid, nodal, rule, |_, _, v, g| vec![v * v, g[0] * g[0] + g[1] * g[1]]);
    (s[0].sqrt(), (s[0] + s[1]).sqrt())
}

/// Absolute and relative error norms of `v_h` against `(exact, grad exact)`.
pub fn error_norms<F>(grid: &Grid, nodal: &[f64], rule: &QuadRule, exact: F) -> FieldErrors
where
    F: Fn(f64, f64) -> (f64, [f64; 2]) + Sync,
{
    let s = integrate_field(grid, nodal, rule, |x, y, v, g| {
        let (e, ge) = exact(x, y);
        let (d, d0, d1) = (v - e, g[0] - ge[0], g[1] - ge[1]);
        vec![d * d, d0 * d0 + d1 * d1, v * v, g[0] * g[0] + g[1] * g[1]]
    });
    let l2_abs = s[0].sqrt();
    let h1_abs = (s[0] + s[1]).sqrt();
    let l2_norm = s[2].sqrt();
    let h1_norm = (s[2] + s[3]).sqrt();
    FieldErrors {
        l2_abs,
        h1_abs,
        l2_rel: l2_abs / l2_norm,
        h1_rel: h1_abs / h1_norm,
    }
}

/// Error norms of one field. Relative errors are normalised by the norm of
/// the computed field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldErrors {
    pub l2_abs: f64,
    pub h1_abs: f64,
    pub l2_rel: f64,
    pub h1_rel: f64,
}

/// Errors of `u_h` and, where a reference exists, of `q_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub u: FieldErrors,
    pub q: Option<FieldErrors>,
}

/// Error norms of a solve against the manufactured solution, with the tensor
/// Gauss rule `rule` on every element. The `H1` error is the full norm
/// `(||e||^2 + ||grad e||^2)^(1/2)`.
///
/// `q_h` is compared with the micro variable the micro-macro schemes
/// approximate (see [`TestCase::q_reference`]); the duality-based `q` and
/// variable-eps runs get no `q` errors.
pub fn errors_against_exact(result: &SolveResult, case: &TestCase, rule: &QuadRule) -> ErrorReport {
    let g = &result.grid;
    let u = error_norms(g, &result.u, rule, |x, y| {
        (case.u_exact(x, y), case.grad_u_exact(x, y))
    });
    let q = match (&result.q, result.scheme) {
        (Some(q), SchemeKind::MM | SchemeKind::MMVarEps | SchemeKind::Limit) if case.spec.eps.is_constant() => {
            Some(error_norms(g, q, rule, |x, y| {
                case.q_reference_with_grad(x, y).expect("constant eps has a q reference")
            }))
        }
        _ => None,
    };
    ErrorReport { u, q }
}

/// [`errors_against_exact`] with the default error rule (4x4 Gauss).
pub fn default_errors(result: &SolveResult, case: &TestCase) -> ErrorReport {
    errors_against_exact(result, case, &error_quad_rule(4).expect("order 4 is supported"))
}

/// Exact gradient of `u_exact` through dual numbers, used as a cross-check of
/// the analytic gradients in tests and diagnostics.
pub fn grad_u_dual(case: &TestCase, x: f64, y: f64) -> [f64; 2] {
    let dx = case.u_exact(Dual64::from_re(x).derivative(), Dual64::from_re(y));
    let dy = case.u_exact(Dual64::from_re(x), Dual64::from_re(y).derivative());
    [dx.eps, dy.eps]
}
