//! Kinematic vehicle model in control-affine form.
//!
//! Each vehicle carries the state `[x, y, psi, v]` and is driven by the
//! input `[a, beta]` (longitudinal acceleration and slip angle):
//!
//! ```text
//!     x'   = v cos(psi) - v sin(psi) * beta
//!     y'   = v sin(psi) + v cos(psi) * beta
//!     psi' = v / l_r * beta
//!     v'   = a
//! ```
//!
//! i.e. `x' = f(x) + g(x) u` with the drift `f` and the 4x2 control matrix `g`
//! below. The platoon state is the ordered collection of these per-vehicle
//! states.

use nalgebra::{Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Longitudinal position of the centre of gravity (m).
    pub x: f64,
    /// Lateral position of the centre of gravity (m).
    pub y: f64,
    /// Heading (rad).
    pub psi: f64,
    /// Speed (m/s), never negative.
    pub v: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, psi: f64, v: f64) -> Self {
        Self { x, y, psi, v }
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.psi, self.v)
    }

    pub fn from_vector(s: &Vector4<f64>) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.psi.is_finite()
            && self.v.is_finite()
            && self.v >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Acceleration (m/s^2).
    pub a: f64,
    /// Slip angle (rad).
    pub beta: f64,
}

impl ControlInput {
    pub fn new(a: f64, beta: f64) -> Self {
        Self { a, beta }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.a, self.beta)
    }

    pub fn within(&self, a_max: f64, beta_max: f64) -> bool {
        self.a.abs() <= a_max && self.beta.abs() <= beta_max
    }
}

/// Body dimensions shared by every vehicle in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleGeometry {
    /// c.g. to rear axle (m).
    pub l_r: f64,
    /// c.g. to front axle (m). Tabulated for completeness; the kinematic
    /// model only uses `l_r`.
    pub l_f: f64,
    /// c.g. to front bumper (m).
    pub l_fc: f64,
    /// c.g. to rear bumper (m).
    pub l_rc: f64,
    /// Body width (m).
    pub width: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self {
            l_r: 1.74,
            l_f: 1.11,
            l_fc: 2.15,
            l_rc: 2.77,
            width: 1.86,
        }
    }
}

impl VehicleGeometry {
    /// Bumper-to-bumper length `l_fc + l_rc`.
    pub fn length(&self) -> f64 {
        self.l_fc + self.l_rc
    }

    pub fn is_valid(&self) -> bool {
        [self.l_r, self.l_f, self.l_fc, self.l_rc, self.width]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Straight road with lanes numbered from the bottom (lane 0) upwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneGeometry {
    pub lane_width: f64,
    pub lane_count: usize,
}

impl Default for LaneGeometry {
    fn default() -> Self {
        Self {
            lane_width: 3.6,
            lane_count: 3,
        }
    }
}

impl LaneGeometry {
    pub fn lane_center(&self, lane: usize) -> f64 {
        self.lane_width / 2.0 + lane as f64 * self.lane_width
    }

    /// Lane whose centre is nearest to `y`; ties go to the lower index.
    pub fn lane_of(&self, y: f64) -> usize {
        let raw = (y - self.lane_width / 2.0) / self.lane_width;
        // round half down so that exact midpoints resolve to the lower lane
        let lower = raw.floor();
        let idx = if raw - lower > 0.5 { lower + 1.0 } else { lower };
        idx.clamp(0.0, (self.lane_count.max(1) - 1) as f64) as usize
    }
}

/// Drift vector `f(x) = [v cos psi, v sin psi, 0, 0]`.
pub fn drift(state: &VehicleState) -> Vector4<f64> {
    let (s, c) = state.psi.sin_cos();
    Vector4::new(state.v * c, state.v * s, 0.0, 0.0)
}

/// Control matrix `g(x)`; column 0 multiplies `a`, column 1 multiplies `beta`.
pub fn control_matrix(state: &VehicleState, geom: &VehicleGeometry) -> Matrix4x2<f64> {
    let (s, c) = state.psi.sin_cos();
    let v = state.v;
    Matrix4x2::new(
        0.0, -v * s, //
        0.0, v * c, //
        0.0, v / geom.l_r, //
        1.0, 0.0,
    )
}

/// Jacobian of the drift with respect to `[x, y, psi, v]`.
pub fn drift_jacobian(state: &VehicleState) -> Matrix4<f64> {
    let (s, c) = state.psi.sin_cos();
    let v = state.v;
    Matrix4::new(
        0.0, 0.0, -v * s, c, //
        0.0, 0.0, v * c, s, //
        0.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 0.0,
    )
}

/// Jacobian of the slip-angle column of `g` with respect to `[x, y, psi, v]`.
/// The acceleration column is constant.
pub fn slip_column_jacobian(state: &VehicleState, geom: &VehicleGeometry) -> Matrix4<f64> {
    let (s, c) = state.psi.sin_cos();
    let v = state.v;
    Matrix4::new(
        0.0, 0.0, -v * c, -s, //
        0.0, 0.0, -v * s, c, //
        0.0, 0.0, 0.0, 1.0 / geom.l_r, //
        0.0, 0.0, 0.0, 0.0,
    )
}

/// State derivative `f(x) + g(x) u`.
pub fn derivative(
    state: &VehicleState,
    input: &ControlInput,
    geom: &VehicleGeometry,
) -> Vector4<f64> {
    drift(state) + control_matrix(state, geom) * input.as_vector()
}

/// One forward-Euler step of length `dt`. Speed is clamped at zero.
pub fn step(
    state: &VehicleState,
    input: &ControlInput,
    dt: f64,
    geom: &VehicleGeometry,
) -> VehicleState {
    debug_assert!(dt > 0.0);
    let next = state.as_vector() + derivative(state, input, geom) * dt;
    let mut out = VehicleState::from_vector(&next);
    if out.v < 0.0 {
        out.v = 0.0;
    }
    out
}
