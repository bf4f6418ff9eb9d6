//! Anisotropy fields: the unit direction `b`, the intensity `eps(x)`, and the
//! parallel/perpendicular splitting of gradients.
//!
//! Evaluators are generic over [`Real`] so the same closed forms can be
//! pushed through forward-mode dual numbers when a derivative of a derived
//! quantity is needed.

use std::f64::consts::PI;

use num_dual::DualNum;

use crate::error::ConfigError;

/// Scalar type accepted by the field evaluators: `f64` or a dual number over it.
pub trait Real: DualNum<Primitive = f64> + Copy {}

impl<T: DualNum<Primitive = f64> + Copy> Real for T {}

#[inline]
pub(crate) fn cst<D: Real>(v: f64) -> D {
    D::from(v)
}

/// Direction field `b = B / |B|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VectorField {
    /// Uniform direction, stored normalised.
    Constant { bx: f64, by: f64 },
    /// `B = (alpha (2y - 1) cos(m pi x) + pi, m pi alpha (y^2 - y) sin(m pi x))`.
    Oscillating { alpha: f64, m: u32 },
}

impl VectorField {
    /// Uniform direction `(bx, by) / |(bx, by)|`.
    pub fn constant(bx: f64, by: f64) -> Self {
        let n = bx.hypot(by);
        assert!(n > 0.0, "constant direction must be non-zero");
        VectorField::Constant {
            bx: bx / n,
            by: by / n,
        }
    }

    /// `b = (1, 0)`.
    pub fn aligned() -> Self {
        VectorField::Constant { bx: 1.0, by: 0.0 }
    }

    /// Divergence-free field lines of `sin(pi y + alpha (y^2 - y) cos(m pi x))`.
    ///
    /// `B_x >= pi - alpha`, so `alpha` must stay below `pi` for `B` to be
    /// non-vanishing on the unit square.
    pub fn oscillating(alpha: f64, m: u32) -> Result<Self, ConfigError> {
        if !alpha.is_finite() || alpha.abs() >= PI {
            return Err(ConfigError::InvalidField(format!(
                "|alpha| = {} must be below pi so that B never vanishes",
                alpha.abs()
            )));
        }
        if m == 0 {
            return Err(ConfigError::InvalidField("m must be a positive integer".into()));
        }
        Ok(VectorField::Oscillating { alpha, m })
    }

    /// Unnormalised field `B`.
    pub fn raw<D: Real>(&self, x: D, y: D) -> [D; 2] {
        match *self {
            VectorField::Constant { bx, by } => [cst(bx), cst(by)],
            VectorField::Oscillating { alpha, m } => {
                let k = m as f64 * PI;
                let (s, c) = (x * k).sin_cos();
                [
                    (y * 2.0 - 1.0) * c * alpha + PI,
                    (y * y - y) * s * (k * alpha),
                ]
            }
        }
    }

    /// Unit direction `b`.
    pub fn eval<D: Real>(&self, x: D, y: D) -> [D; 2] {
        match *self {
            VectorField::Constant { bx, by } => [cst(bx), cst(by)],
            VectorField::Oscillating { .. } => {
                let [b1, b2] = self.raw(x, y);
                let n = (b1 * b1 + b2 * b2).sqrt();
                [b1 / n, b2 / n]
            }
        }
    }

    #[inline]
    pub fn direction(&self, x: f64, y: f64) -> [f64; 2] {
        self.eval(x, y)
    }

    /// Jacobian of `B`: `[[dB1/dx, dB1/dy], [dB2/dx, dB2/dy]]`.
    pub fn raw_jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        match *self {
            VectorField::Constant { .. } => [[0.0; 2]; 2],
            VectorField::Oscillating { alpha, m } => {
                let k = m as f64 * PI;
                let (s, c) = (k * x).sin_cos();
                [
                    [-alpha * (2.0 * y - 1.0) * k * s, 2.0 * alpha * c],
                    [k * k * alpha * (y * y - y) * c, k * alpha * (2.0 * y - 1.0) * s],
                ]
            }
        }
    }

    /// Analytic divergence of `B`.
    pub fn raw_divergence(&self, x: f64, y: f64) -> f64 {
        let j = self.raw_jacobian(x, y);
        j[0][0] + j[1][1]
    }

    /// Jacobian of `b = B/|B|` by the chain rule `db = (I - b b^T) dB / |B|`.
    pub fn jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let [b1, b2] = self.raw(x, y);
        let n = b1.hypot(b2);
        let b = [b1 / n, b2 / n];
        let jb = self.raw_jacobian(x, y);
        let mut out = [[0.0; 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let proj: f64 = (0..2)
                    .map(|k| {
                        let p = if r == k { 1.0 } else { 0.0 } - b[r] * b[k];
                        p * jb[k][c]
                    })
                    .sum();
                *v = proj / n;
            }
        }
        out
    }

    /// Analytic divergence of the unit field `b`.
    pub fn divergence(&self, x: f64, y: f64) -> f64 {
        let j = self.jacobian(x, y);
        j[0][0] + j[1][1]
    }
}

/// Anisotropy intensity `eps(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonField {
    Constant(f64),
    /// `eps = (1 + tanh(a (x0 - x)) + eps_min (1 - tanh(a (x0 - x)))) / 2`.
    Tanh { eps_min: f64, a: f64, x0: f64 },
}

impl EpsilonField {
    /// Constant intensity. Zero selects the limit model.
    pub fn constant(eps: f64) -> Result<Self, ConfigError> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(ConfigError::InvalidField(format!(
                "eps = {eps} must be finite and non-negative"
            )));
        }
        Ok(EpsilonField::Constant(eps))
    }

    pub fn tanh_profile(eps_min: f64, a: f64, x0: f64) -> Result<Self, ConfigError> {
        if !(eps_min > 0.0 && eps_min <= 1.0) {
            return Err(ConfigError::InvalidField(format!(
                "eps_min = {eps_min} must lie in (0, 1]"
            )));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(ConfigError::InvalidField(format!("steepness a = {a} must be positive")));
        }
        if !x0.is_finite() {
            return Err(ConfigError::InvalidField("interface x0 must be finite".into()));
        }
        Ok(EpsilonField::Tanh { eps_min, a, x0 })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, EpsilonField::Constant(_))
    }

    /// The constant value, if any.
    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            EpsilonField::Constant(e) => Some(e),
            EpsilonField::Tanh { .. } => None,
        }
    }

    /// Smallest value the profile approaches on its far side.
    pub fn min_value(&self) -> f64 {
        match *self {
            EpsilonField::Constant(e) => e,
            EpsilonField::Tanh { eps_min, .. } => eps_min,
        }
    }

    /// `eps(x)`. The profile uses `1 + tanh z = 2 E / (E + 1)` and
    /// `1 - tanh z = 2 / (E + 1)`, `E = exp(2z)`, so it reduces to
    /// `(E + eps_min) / (E + 1)` and reaches `eps_min` without rounding
    /// against 1, however small `eps_min` is.
    pub fn eval<D: Real>(&self, x: D) -> D {
        match *self {
            EpsilonField::Constant(e) => cst(e),
            EpsilonField::Tanh { eps_min, a, x0 } => {
                let z = (-x + x0) * a;
                if z.re() <= 0.0 {
                    let e = (z * 2.0).exp();
                    (e + eps_min) / (e + 1.0)
                } else {
                    let f = (z * -2.0).exp();
                    (f * eps_min + 1.0) / (f + 1.0)
                }
            }
        }
    }

    /// `d eps / dx` (the profile does not depend on y).
    pub fn derivative<D: Real>(&self, x: D) -> D {
        match *self {
            EpsilonField::Constant(_) => cst(0.0),
            EpsilonField::Tanh { eps_min, a, x0 } => {
                let z = (-x + x0) * a;
                let e = if z.re() <= 0.0 {
                    (z * 2.0).exp()
                } else {
                    (z * -2.0).exp()
                };
                let d = e + 1.0;
                e / (d * d) * (-2.0 * a * (1.0 - eps_min))
            }
        }
    }

    /// `eps'(x) / eps(x)`, formed without dividing two tiny numbers.
    pub fn log_derivative<D: Real>(&self, x: D) -> D {
        match *self {
            EpsilonField::Constant(_) => cst(0.0),
            EpsilonField::Tanh { eps_min, a, x0 } => {
                let z = (-x + x0) * a;
                let k = -2.0 * a * (1.0 - eps_min);
                if z.re() <= 0.0 {
                    let e = (z * 2.0).exp();
                    e * k / ((e + 1.0) * (e + eps_min))
                } else {
                    let f = (z * -2.0).exp();
                    f * k / ((f + 1.0) * (f * eps_min + 1.0))
                }
            }
        }
    }

    /// Direct transcription of the tanh profile; accurate only while
    /// `eps_min` is well above machine precision.
    pub fn naive_eval(&self, x: f64) -> f64 {
        match *self {
            EpsilonField::Constant(e) => e,
            EpsilonField::Tanh { eps_min, a, x0 } => {
                let t = (a * (x0 - x)).tanh();
                0.5 * (1.0 + t + eps_min * (1.0 - t))
            }
        }
    }

    /// Plain `f64` evaluation, cross-checked in debug builds against the
    /// direct tanh formula whenever both are accurate.
    pub fn value(&self, x: f64) -> f64 {
        let v: f64 = self.eval(x);
        #[cfg(debug_assertions)]
        if let EpsilonField::Tanh { eps_min, .. } = *self {
            if eps_min >= 1e-8 {
                let naive = self.naive_eval(x);
                debug_assert!((v - naive).abs() <= 1e-15 + 1e-12 * naive.abs());
            }
        }
        v
    }
}

/// Diffusion coefficients: `A = (A_par / eps) b b^T + (I - b b^T) A_perp (I - b b^T)`.
///
/// `A_par` and `A_perp` are taken constant; every experiment here uses
/// `A_par = 1`, `A_perp = I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropySpec {
    pub b: VectorField,
    pub eps: EpsilonField,
    pub a_par: f64,
    pub a_perp: [[f64; 2]; 2],
}

impl AnisotropySpec {
    pub fn new(b: VectorField, eps: EpsilonField) -> Self {
        AnisotropySpec {
            b,
            eps,
            a_par: 1.0,
            a_perp: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    /// Replaces the default coefficients, checking the ellipticity bounds.
    pub fn with_coefficients(mut self, a_par: f64, a_perp: [[f64; 2]; 2]) -> Result<Self, ConfigError> {
        if !(a_par > 0.0 && a_par.is_finite()) {
            return Err(ConfigError::InvalidField(format!("A_par = {a_par} must be positive")));
        }
        let [[a, b], [c, d]] = a_perp;
        if (b - c).abs() > 1e-14 * (a.abs() + d.abs()) {
            return Err(ConfigError::InvalidField("A_perp must be symmetric".into()));
        }
        if !(a > 0.0 && a * d - b * c > 0.0) {
            return Err(ConfigError::InvalidField("A_perp must be positive definite".into()));
        }
        self.a_par = a_par;
        self.a_perp = a_perp;
        Ok(self)
    }

    pub fn is_isotropic_default(&self) -> bool {
        self.a_par == 1.0 && self.a_perp == [[1.0, 0.0], [0.0, 1.0]]
    }
}

/// Splits `grad` into `((b . grad) b, grad - (b . grad) b)` at `(x, y)`.
pub fn split_gradient(spec: &AnisotropySpec, x: f64, y: f64, grad: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    split_with_direction(spec.b.direction(x, y), grad)
}

#[inline]
pub fn split_with_direction(b: [f64; 2], grad: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    let s = b[0] * grad[0] + b[1] * grad[1];
    let par = [s * b[0], s * b[1]];
    ([par[0], par[1]], [grad[0] - par[0], grad[1] - par[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_dual::Dual64;

    #[test]
    fn aligned_field() {
        let b = VectorField::aligned();
        assert_eq!(b.direction(0.3, 0.7), [1.0, 0.0]);
        assert_eq!(b.divergence(0.3, 0.7), 0.0);
    }

    #[test]
    fn oscillating_field_center_value() {
        let f = VectorField::oscillating(2.0, 1).unwrap();
        let [b1, b2] = f.raw(0.5, 0.5);
        assert!((b1 - PI).abs() < 1e-15);
        assert!((b2 + PI / 2.0).abs() < 1e-15);
        let b = f.direction(0.5, 0.5);
        let s5 = 5f64.sqrt();
        assert!((b[0] - 2.0 / s5).abs() < 1e-15 && (b[1] + 1.0 / s5).abs() < 1e-15);
    }

    #[test]
    fn zero_alpha_is_aligned() {
        let f = VectorField::oscillating(0.0, 7).unwrap();
        for &(x, y) in &[(0.1, 0.2), (0.77, 0.5), (1.0, 0.0)] {
            assert_eq!(f.direction(x, y), [1.0, 0.0]);
        }
    }

    #[test]
    fn alpha_at_or_above_pi_rejected() {
        assert!(VectorField::oscillating(PI, 1).is_err());
        assert!(VectorField::oscillating(4.0, 1).is_err());
        assert!(VectorField::oscillating(1.0, 0).is_err());
    }

    #[test]
    fn jacobian_matches_dual_derivatives() {
        let f = VectorField::oscillating(2.0, 3).unwrap();
        for &(x, y) in &[(0.13, 0.71), (0.5, 0.25), (0.91, 0.02)] {
            let jx = f.eval(Dual64::from_re(x).derivative(), Dual64::from_re(y));
            let jy = f.eval(Dual64::from_re(x), Dual64::from_re(y).derivative());
            let j = f.jacobian(x, y);
            for r in 0..2 {
                assert!((j[r][0] - jx[r].eps).abs() < 1e-12);
                assert!((j[r][1] - jy[r].eps).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tanh_limits() {
        let e = EpsilonField::tanh_profile(1e-3, 50.0, 0.25).unwrap();
        assert!((e.value(-100.0) - 1.0).abs() < 1e-15);
        assert!((e.value(100.0) - 1e-3).abs() < 1e-18);
        assert!((e.value(0.25) - 0.5 * (1.0 + 1e-3)).abs() < 1e-15);
    }

    #[test]
    fn tanh_reaches_tiny_eps_min() {
        let e = EpsilonField::tanh_profile(1e-20, 50.0, 0.25).unwrap();
        let v = e.value(0.75);
        let ratio = v / 1e-20;
        assert!(ratio > 1.0 && ratio < 1.1, "ratio {ratio}");
        // high-precision reference values of the profile
        for (x, reference) in [
            (0.6, 6.3052167601469854101e-16),
            (0.75, 1.0192874984796391778e-20),
            (0.9, 1.0000000059000905416e-20),
        ] {
            assert!((e.value(x) / reference - 1.0).abs() < 1e-12, "x = {x}");
        }
        let e = EpsilonField::tanh_profile(1e-300, 50.0, 0.25).unwrap();
        assert_eq!(e.value(10.0), 1e-300);
    }

    #[test]
    fn tanh_derivatives_match_duals() {
        for eps_min in [1.0, 1e-4, 1e-20] {
            let e = EpsilonField::tanh_profile(eps_min, 50.0, 0.25).unwrap();
            for x in [0.0, 0.2, 0.25, 0.3, 0.6, 0.71, 1.0] {
                let d = e.eval(Dual64::from_re(x).derivative());
                let der = e.derivative(x);
                assert!((d.eps - der).abs() <= 1e-12 * der.abs().max(1e-300));
                let ld = e.log_derivative(x);
                assert!((ld - d.eps / d.re).abs() <= 1e-12 * ld.abs().max(1e-300), "x = {x}");
            }
        }
    }

    #[test]
    fn invalid_epsilon() {
        assert!(EpsilonField::tanh_profile(0.0, 50.0, 0.25).is_err());
        assert!(EpsilonField::tanh_profile(-1.0, 50.0, 0.25).is_err());
        assert!(EpsilonField::constant(-1e-3).is_err());
        assert!(EpsilonField::constant(10.0).is_ok());
    }

    #[test]
    fn split_examples() {
        let spec = AnisotropySpec::new(VectorField::aligned(), EpsilonField::Constant(1.0));
        assert_eq!(split_gradient(&spec, 0.2, 0.3, [3.0, 4.0]), ([3.0, 0.0], [0.0, 4.0]));
        let s5 = 5f64.sqrt();
        let (par, perp) = split_with_direction([2.0 / s5, -1.0 / s5], [1.0, 1.0]);
        assert!((par[0] - 0.4).abs() < 1e-15 && (par[1] + 0.2).abs() < 1e-15);
        assert!((perp[0] - 0.6).abs() < 1e-15 && (perp[1] - 1.2).abs() < 1e-15);
        let (par, perp) = split_with_direction([0.6, 0.8], [1.5, 2.0]);
        assert!(perp[0].abs() < 1e-15 && perp[1].abs() < 1e-15);
        assert_eq!(par, [1.5, 2.0]);
    }

    #[test]
    fn coefficient_validation() {
        let spec = AnisotropySpec::new(VectorField::aligned(), EpsilonField::Constant(1.0));
        assert!(spec.is_isotropic_default());
        assert!(spec.with_coefficients(2.0, [[1.0, 0.5], [0.5, 1.0]]).is_ok());
        assert!(spec.with_coefficients(0.0, [[1.0, 0.0], [0.0, 1.0]]).is_err());
        assert!(spec.with_coefficients(1.0, [[1.0, 0.5], [0.4, 1.0]]).is_err());
        assert!(spec.with_coefficients(1.0, [[1.0, 2.0], [2.0, 1.0]]).is_err());
    }
}
