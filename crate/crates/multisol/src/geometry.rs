//! Elliptical domains and the coefficient functions of the mapped operator.
//!
//! The ellipse `x^2/a^2 + y^2/b^2 <= 1` is pulled back to the reference disk
//! by `x = a r cos(theta)`, `y = b r sin(theta)`. `theta` is the parametric
//! angle of this map, not the geometric polar angle of the image point; all
//! assembly and curvature formulas use the parametric angle.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("semi-axes must be positive, got a = {a}, b = {b}")]
    InvalidAxes { a: f64, b: f64 },
    #[error("radial coordinate must lie in [0, 1], got {0}")]
    RadiusOutOfRange(f64),
}

/// Elliptical domain with semi-axis `a` along x and `b` along y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseDomain {
    a: f64,
    b: f64,
}

impl EllipseDomain {
    pub fn new(a: f64, b: f64) -> Result<Self, GeometryError> {
        if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(GeometryError::InvalidAxes { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn unit_disk() -> Self {
        Self { a: 1.0, b: 1.0 }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn is_disk(&self) -> bool {
        self.a == self.b
    }

    /// Coefficients `(w1, w2, w3)` of the mapped Laplacian at parametric
    /// angle `theta`:
    ///
    /// `w1 = cos^2/a^2 + sin^2/b^2`, `w2 = cos^2/b^2 + sin^2/a^2`,
    /// `w3 = sin(2 theta) (1/a^2 - 1/b^2)`.
    pub fn omega_coeffs(&self, theta: f64) -> (f64, f64, f64) {
        let (s, c) = theta.sin_cos();
        let ia2 = 1.0 / (self.a * self.a);
        let ib2 = 1.0 / (self.b * self.b);
        let w1 = c * c * ia2 + s * s * ib2;
        let w2 = c * c * ib2 + s * s * ia2;
        let w3 = (2.0 * theta).sin() * (ia2 - ib2);
        (w1, w2, w3)
    }

    /// Even/odd Fourier split of the omega coefficients:
    /// `w1 = p + q cos(2 theta)`, `w2 = p - q cos(2 theta)`,
    /// `w3 = 2 q sin(2 theta)`.
    pub fn omega_fourier(&self) -> (f64, f64) {
        let ia2 = 1.0 / (self.a * self.a);
        let ib2 = 1.0 / (self.b * self.b);
        (0.5 * (ia2 + ib2), 0.5 * (ia2 - ib2))
    }

    /// Map reference polar coordinates to Cartesian; `r = 1` lands on the
    /// boundary.
    pub fn map_to_cartesian(&self, r: f64, theta: f64) -> Result<(f64, f64), GeometryError> {
        if !(0.0..=1.0).contains(&r) {
            return Err(GeometryError::RadiusOutOfRange(r));
        }
        let (s, c) = theta.sin_cos();
        Ok((self.a * r * c, self.b * r * s))
    }

    /// Curvature of the boundary curve `(a cos, b sin)` at parametric angle
    /// `theta`: `kappa = a b / (a^2 sin^2 + b^2 cos^2)^{3/2}`, always
    /// positive.
    pub fn boundary_curvature(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let d = self.a * self.a * s * s + self.b * self.b * c * c;
        self.a * self.b / d.powf(1.5)
    }
}
