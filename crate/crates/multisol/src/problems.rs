//! Built-in problem definitions.
//!
//! Every problem is brought to the canonical form
//! `eps2 * laplace(u) + f(x, u) = 0` before assembly, with the potential
//! `V(x, u) = int_0^u f(x, v) dv` and the energy
//! `J(u) = int (eps2/2 |grad u|^2 - V) dx`. The mappings from the usual
//! display of each equation:
//!
//! * sine-Gordon `laplace(u) + lambda sin(u) = 0`: `eps2 = 1`,
//!   `f = lambda sin(u)`, `V = lambda (1 - cos u)`.
//! * cubic `laplace(u) + u^3 = 0`: `eps2 = 1`, `f = u^3`, `V = u^4/4`.
//! * Ginzburg-Landau `delta laplace(u) - u + u^3 = 0`: `eps2 = delta`,
//!   `f = u^3 - u`, `V = u^4/4 - u^2/2`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::galerkin::BoundaryKind;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("scale parameter must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("unknown problem name `{0}` (expected sine-gordon, henon, or ginzburg-landau)")]
    UnknownProblem(String),
}

type FieldFn = Arc<dyn Fn((f64, f64), f64) -> f64 + Send + Sync>;

/// A semilinear problem: nonlinearity, derivatives, potential and boundary
/// condition. Callbacks receive the physical point `(x, y)` for
/// extensibility; the built-ins depend on `u` only.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    /// Scale parameter of the family (`lambda`, `delta`, or 1).
    pub scale: f64,
    /// Factor multiplying the stiffness block (`eps^2`).
    pub stiffness_scale: f64,
    pub bc: BoundaryKind,
    f: FieldFn,
    f_u: Option<FieldFn>,
    f_uu: Option<FieldFn>,
    v: Option<FieldFn>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("scale", &self.scale)
            .field("stiffness_scale", &self.stiffness_scale)
            .field("bc", &self.bc)
            .finish()
    }
}

impl ProblemSpec {
    /// Assemble a problem from closures. Derivative and potential callbacks
    /// are optional; operations that need a missing one report a capability
    /// error.
    pub fn from_parts(
        name: impl Into<String>,
        scale: f64,
        stiffness_scale: f64,
        bc: BoundaryKind,
        f: impl Fn((f64, f64), f64) -> f64 + Send + Sync + 'static,
        f_u: Option<FieldFn>,
        f_uu: Option<FieldFn>,
        v: Option<FieldFn>,
    ) -> Self {
        Self {
            name: name.into(),
            scale,
            stiffness_scale,
            bc,
            f: Arc::new(f),
            f_u,
            f_uu,
            v,
        }
    }

    pub fn f(&self, x: (f64, f64), u: f64) -> f64 {
        (self.f)(x, u)
    }

    pub fn f_u(&self, x: (f64, f64), u: f64) -> Option<f64> {
        self.f_u.as_ref().map(|g| g(x, u))
    }

    pub fn f_uu(&self, x: (f64, f64), u: f64) -> Option<f64> {
        self.f_uu.as_ref().map(|g| g(x, u))
    }

    pub fn potential(&self, x: (f64, f64), u: f64) -> Option<f64> {
        self.v.as_ref().map(|g| g(x, u))
    }

    pub fn has_f_u(&self) -> bool {
        self.f_u.is_some()
    }

    pub fn has_potential(&self) -> bool {
        self.v.is_some()
    }
}

/// Sine-Gordon nonlinearity `laplace(u) + lambda sin(u) = 0`.
pub fn sine_gordon(lambda: f64, bc: BoundaryKind) -> Result<ProblemSpec, ProblemError> {
    if !(lambda > 0.0) {
        return Err(ProblemError::NonPositiveScale(lambda));
    }
    Ok(ProblemSpec::from_parts(
        "sine-gordon",
        lambda,
        1.0,
        bc,
        move |_, u| lambda * u.sin(),
        Some(Arc::new(move |_, u: f64| lambda * u.cos())),
        Some(Arc::new(move |_, u: f64| -lambda * u.sin())),
        Some(Arc::new(move |_, u: f64| lambda * (1.0 - u.cos()))),
    ))
}

/// Cubic nonlinearity `laplace(u) + u^3 = 0` with Dirichlet boundary.
pub fn henon_cubic() -> ProblemSpec {
    ProblemSpec::from_parts(
        "henon",
        1.0,
        1.0,
        BoundaryKind::Dirichlet,
        |_, u| u * u * u,
        Some(Arc::new(|_, u: f64| 3.0 * u * u)),
        Some(Arc::new(|_, u: f64| 6.0 * u)),
        Some(Arc::new(|_, u: f64| 0.25 * u.powi(4))),
    )
}

/// Singularly perturbed Ginzburg-Landau problem
/// `delta laplace(u) - u + u^3 = 0` with Dirichlet boundary, `0 < delta`.
pub fn ginzburg_landau(delta: f64) -> Result<ProblemSpec, ProblemError> {
    if !(delta > 0.0) {
        return Err(ProblemError::NonPositiveScale(delta));
    }
    Ok(ProblemSpec::from_parts(
        "ginzburg-landau",
        delta,
        delta,
        BoundaryKind::Dirichlet,
        |_, u| u * u * u - u,
        Some(Arc::new(|_, u: f64| 3.0 * u * u - 1.0)),
        Some(Arc::new(|_, u: f64| 6.0 * u)),
        Some(Arc::new(|_, u: f64| 0.25 * u.powi(4) - 0.5 * u * u)),
    ))
}

/// Look up a built-in by name as used in run configurations.
pub fn by_name(
    name: &str,
    scale: f64,
    bc: BoundaryKind,
) -> Result<ProblemSpec, ProblemError> {
    match name {
        "sine-gordon" => sine_gordon(scale, bc),
        "henon" => Ok(henon_cubic()),
        "ginzburg-landau" => ginzburg_landau(scale),
        other => Err(ProblemError::UnknownProblem(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::gauss_rule;
    use std::f64::consts::PI;

    const ORIGIN: (f64, f64) = (0.0, 0.0);

    /// V(u) recomputed as the integral of f from 0 to u.
    fn potential_by_quadrature(p: &ProblemSpec, u: f64) -> f64 {
        let rule = gauss_rule(40).unwrap();
        // map [-1,1] -> [0,u]
        0.5 * u * rule.integrate(|t| p.f(ORIGIN, 0.5 * u * (t + 1.0)))
    }

    #[test]
    fn sine_gordon_values() {
        let p = sine_gordon(30.0, BoundaryKind::Dirichlet).unwrap();
        assert_eq!(p.potential(ORIGIN, 0.0).unwrap(), 0.0);
        assert!((p.potential(ORIGIN, PI).unwrap() - 60.0).abs() < 1e-12);
        assert!((p.f_u(ORIGIN, 0.0).unwrap() - 30.0).abs() < 1e-12);
        assert!(p.f(ORIGIN, 0.0) == 0.0);
        assert!(sine_gordon(0.0, BoundaryKind::Dirichlet).is_err());
    }

    #[test]
    fn henon_values() {
        let p = henon_cubic();
        for u in [-2.0, -0.3, 0.7, 1.9] {
            assert_eq!(p.f(ORIGIN, -u), -p.f(ORIGIN, u));
        }
        assert_eq!(p.potential(ORIGIN, 2.0).unwrap(), 4.0);
        assert_eq!(p.f(ORIGIN, 0.0), 0.0);
    }

    #[test]
    fn ginzburg_landau_values() {
        let p = ginzburg_landau(0.2).unwrap();
        for u in [0.0, 1.0, -1.0] {
            assert!(p.f(ORIGIN, u).abs() < 1e-15);
        }
        assert_eq!(p.stiffness_scale, 0.2);
        assert!(ginzburg_landau(-1.0).is_err());
        assert!(ginzburg_landau(0.0).is_err());
    }

    #[test]
    fn potential_is_integral_of_f() {
        let probs = [
            sine_gordon(20.0, BoundaryKind::Neumann).unwrap(),
            henon_cubic(),
            ginzburg_landau(0.2).unwrap(),
        ];
        for p in &probs {
            for u in [-3.0, -1.2, -0.1, 0.0, 0.4, 1.7, 2.9] {
                let v = p.potential(ORIGIN, u).unwrap();
                let q = potential_by_quadrature(p, u);
                assert!(
                    (v - q).abs() < 1e-10 * v.abs().max(1.0),
                    "{}: V({u}) = {v} vs quadrature {q}",
                    p.name
                );
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let probs = [
            sine_gordon(30.0, BoundaryKind::Dirichlet).unwrap(),
            henon_cubic(),
            ginzburg_landau(0.2).unwrap(),
        ];
        let h = 1e-6;
        for p in &probs {
            for u in [-2.1, -0.5, 0.0, 0.3, 1.0, 2.4] {
                let fd = (p.f(ORIGIN, u + h) - p.f(ORIGIN, u - h)) / (2.0 * h);
                assert!((p.f_u(ORIGIN, u).unwrap() - fd).abs() < 1e-8 * fd.abs().max(1.0) + 1e-8);
                let fd2 = (p.f_u(ORIGIN, u + h).unwrap() - p.f_u(ORIGIN, u - h).unwrap())
                    / (2.0 * h);
                assert!((p.f_uu(ORIGIN, u).unwrap() - fd2).abs() < 1e-7 * fd2.abs().max(1.0) + 1e-7);
            }
        }
    }
}
