//! Q2 reference element: biquadratic Lagrange basis on `[-1, 1]^2` and
//! tensor-product Gauss-Legendre rules.

use crate::error::ConfigError;
use crate::grid::Grid;

/// Tensor-product quadrature rule on `[-1, 1]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub points: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Applies the rule to `f` over the reference square.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&(xi, eta), w)| w * f(xi, eta))
            .sum()
    }

    fn tensor(nodes: &[f64], weights: &[f64]) -> Self {
        let mut points = Vec::with_capacity(nodes.len() * nodes.len());
        let mut w2 = Vec::with_capacity(nodes.len() * nodes.len());
        for (&eta, &wj) in nodes.iter().zip(weights) {
            for (&xi, &wi) in nodes.iter().zip(weights) {
                points.push((xi, eta));
                w2.push(wi * wj);
            }
        }
        QuadRule {
            points,
            weights: w2,
        }
    }
}

/// 1D Gauss-Legendre nodes and weights with `n` points, `n` in 3..=5.
pub fn gauss_legendre_1d(n: usize) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
    match n {
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            Ok((vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0]))
        }
        4 => {
            let s = 2.0 * (6.0f64 / 5.0).sqrt();
            let inner = ((3.0 - s) / 7.0).sqrt();
            let outer = ((3.0 + s) / 7.0).sqrt();
            let w_in = (18.0 + 30.0f64.sqrt()) / 36.0;
            let w_out = (18.0 - 30.0f64.sqrt()) / 36.0;
            Ok((
                vec![-outer, -inner, inner, outer],
                vec![w_out, w_in, w_in, w_out],
            ))
        }
        5 => {
            let s = 2.0 * (10.0f64 / 7.0).sqrt();
            let inner = (5.0 - s).sqrt() / 3.0;
            let outer = (5.0 + s).sqrt() / 3.0;
            let w_in = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
            let w_out = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
            Ok((
                vec![-outer, -inner, 0.0, inner, outer],
                vec![w_out, w_in, 128.0 / 225.0, w_in, w_out],
            ))
        }
        other => Err(ConfigError::QuadOrder(other)),
    }
}

/// The 3x3 Gauss rule used for every matrix and load entry; exact for
/// polynomials of degree 5 in each variable.
pub fn gauss_rule() -> QuadRule {
    let (n, w) = gauss_legendre_1d(3).expect("3-point rule");
    QuadRule::tensor(&n, &w)
}

/// Tensor Gauss rule with `order` points per direction, used for error norms.
pub fn error_quad_rule(order: usize) -> Result<QuadRule, ConfigError> {
    let (n, w) = gauss_legendre_1d(order)?;
    Ok(QuadRule::tensor(&n, &w))
}

/// 1D quadratic Lagrange basis on nodes {-1, 0, 1}: values and derivatives.
#[inline]
pub fn lagrange_1d(t: f64) -> ([f64; 3], [f64; 3]) {
    (
        [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)],
        [t - 0.5, -2.0 * t, t + 0.5],
    )
}

/// Value and reference gradient of local basis function `local` (0..9,
/// `local = 3 * lj + li`) at `(xi, eta)`.
///
/// Panics on an out-of-range index.
pub fn shape_eval(local: usize, xi: f64, eta: f64) -> (f64, f64, f64) {
    assert!(local < 9, "Q2 local index {local} out of range");
    let (li, lj) = (local % 3, local / 3);
    let (vx, dx) = lagrange_1d(xi);
    let (vy, dy) = lagrange_1d(eta);
    (vx[li] * vy[lj], dx[li] * vy[lj], vx[li] * dy[lj])
}

/// Basis values and reference gradients at all points of a rule.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    pub values: Vec<[f64; 9]>,
    pub d_xi: Vec<[f64; 9]>,
    pub d_eta: Vec<[f64; 9]>,
}

impl ShapeTable {
    pub fn new(rule: &QuadRule) -> Self {
        let n = rule.len();
        let mut table = ShapeTable {
            values: vec![[0.0; 9]; n],
            d_xi: vec![[0.0; 9]; n],
            d_eta: vec![[0.0; 9]; n],
        };
        for (q, &(xi, eta)) in rule.points.iter().enumerate() {
            for a in 0..9 {
                let (v, gx, gy) = shape_eval(a, xi, eta);
                table.values[q][a] = v;
                table.d_xi[q][a] = gx;
                table.d_eta[q][a] = gy;
            }
        }
        table
    }
}

/// Affine map of the reference square onto one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMap {
    pub center: (f64, f64),
    pub half_width: (f64, f64),
}

impl ElementMap {
    pub fn new(grid: &Grid, ex: usize, ey: usize) -> Self {
        ElementMap {
            center: grid.element_center(ex, ey),
            half_width: (grid.hx(), grid.hy()),
        }
    }

    #[inline]
    pub fn to_physical(&self, xi: f64, eta: f64) -> (f64, f64) {
        (
            self.center.0 + self.half_width.0 * xi,
            self.center.1 + self.half_width.1 * eta,
        )
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.half_width.0 * self.half_width.1
    }

    pub fn jacobian(&self) -> [[f64; 2]; 2] {
        [[self.half_width.0, 0.0], [0.0, self.half_width.1]]
    }

    pub fn inverse_jacobian(&self) -> [[f64; 2]; 2] {
        [[1.0 / self.half_width.0, 0.0], [0.0, 1.0 / self.half_width.1]]
    }
}

/// Physical point, Jacobian determinant and inverse Jacobian at `(xi, eta)`
/// of element `(ex, ey)`.
pub fn map_to_element(
    grid: &Grid,
    ex: usize,
    ey: usize,
    xi: f64,
    eta: f64,
) -> (f64, f64, f64, [[f64; 2]; 2]) {
    let map = ElementMap::new(grid, ex, ey);
    let (x, y) = map.to_physical(xi, eta);
    (x, y, map.det(), map.inverse_jacobian())
}
