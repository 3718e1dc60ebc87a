//! Divergence-free transport fields driving the gradient noise.

use crate::mesh::Point;

/// Closed-form vector field `x -> X(x)` evaluated at quadrature points.
pub trait VectorField: Send + Sync {
    fn eval(&self, x: Point) -> Point;

    /// Radius of a disc centred at the origin outside of which the field vanishes.
    fn support_radius(&self) -> Option<f64> {
        None
    }

    fn name(&self) -> String;
}

/// `X(x) = φ(|x|) [x2, -x1]` with the smooth cutoff
/// `φ(r) = exp(-s / (R^2 - r^2))` for `r < R` and `φ = 0` beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationalCutoffField {
    pub radius: f64,
    pub sharpness: f64,
}

impl Default for RotationalCutoffField {
    fn default() -> Self {
        RotationalCutoffField {
            radius: 0.8,
            sharpness: 0.001,
        }
    }
}

impl RotationalCutoffField {
    pub fn cutoff(&self, r: f64) -> f64 {
        let gap = self.radius * self.radius - r * r;
        if gap <= 0.0 {
            0.0
        } else {
            (-self.sharpness / gap).exp()
        }
    }
}

impl VectorField for RotationalCutoffField {
    fn eval(&self, x: Point) -> Point {
        let phi = self.cutoff((x[0] * x[0] + x[1] * x[1]).sqrt());
        [phi * x[1], -phi * x[0]]
    }

    fn support_radius(&self) -> Option<f64> {
        Some(self.radius)
    }

    fn name(&self) -> String {
        format!(
            "rotational-cutoff(R={}, s={})",
            self.radius, self.sharpness
        )
    }
}

/// `X ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl VectorField for ZeroField {
    fn eval(&self, _x: Point) -> Point {
        [0.0, 0.0]
    }

    fn support_radius(&self) -> Option<f64> {
        Some(0.0)
    }

    fn name(&self) -> String {
        "zero".into()
    }
}
