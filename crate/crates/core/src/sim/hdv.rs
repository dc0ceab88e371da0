//! Open-loop scripted human-driven vehicles.

use serde::{Deserialize, Serialize};

use crate::vehicle::{LaneGeometry, VehicleState};

/// From `start` on, accelerate at `accel` until `target` (if any) is reached,
/// then hold that speed. Speed never drops below zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSegment {
    pub start: f64,
    pub accel: f64,
    pub target: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneManeuver {
    pub start: f64,
    pub target_lane: usize,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdvScript {
    pub x0: f64,
    pub lane: usize,
    pub v0: f64,
    /// Time-ordered; the speed is constant before the first segment.
    pub segments: Vec<SpeedSegment>,
    pub lane_change: Option<LaneManeuver>,
}

impl HdvScript {
    pub fn cruising(x0: f64, lane: usize, v0: f64) -> Self {
        Self {
            x0,
            lane,
            v0,
            segments: Vec::new(),
            lane_change: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        let ordered = self
            .segments
            .windows(2)
            .all(|w| w[0].start < w[1].start);
        let finite = self.segments.iter().all(|s| {
            s.start.is_finite()
                && s.start >= 0.0
                && s.accel.is_finite()
                && s.target.is_none_or(|v| v.is_finite() && v >= 0.0)
        });
        let lc_ok = self
            .lane_change
            .is_none_or(|m| m.start >= 0.0 && m.duration > 0.0);
        ordered && finite && lc_ok && self.v0 >= 0.0 && self.x0.is_finite()
    }

    /// Speed, travelled distance and current acceleration at `t`.
    fn longitudinal(&self, t: f64) -> (f64, f64, f64) {
        let mut v = self.v0;
        let mut x = 0.0;
        let mut now = 0.0;
        let mut accel_now = 0.0;
        let mut boundaries: Vec<(f64, f64, Option<f64>)> = vec![(0.0, 0.0, None)];
        boundaries.extend(self.segments.iter().map(|s| (s.start, s.accel, s.target)));
        for (k, &(start, accel, target)) in boundaries.iter().enumerate() {
            if start > t {
                break;
            }
            // cruise from `now` to the segment start with the previous state
            let end = boundaries
                .get(k + 1)
                .map_or(t, |next| next.0.min(t));
            let from = start.max(now);
            let (nv, dx, a) = advance(v, accel, target, end - from);
            x += dx;
            v = nv;
            now = end;
            accel_now = a;
        }
        (v, x, accel_now)
    }

    /// Speed and lateral position at `t`.
    pub fn speed_and_lateral(&self, t: f64, lanes: &LaneGeometry) -> (f64, f64) {
        let s = self.state(t, lanes);
        (s.v, s.y)
    }

    /// Full state at `t`; the heading follows the lateral velocity.
    pub fn state(&self, t: f64, lanes: &LaneGeometry) -> VehicleState {
        let t = t.max(0.0);
        let (v, dx, _) = self.longitudinal(t);
        let y0 = lanes.lane_center(self.lane);
        let (y, y_dot) = match self.lane_change {
            Some(m) => {
                let y1 = lanes.lane_center(m.target_lane);
                let u = ((t - m.start) / m.duration).clamp(0.0, 1.0);
                let inside = t > m.start && t < m.start + m.duration;
                let y_dot = if inside {
                    (y1 - y0) * quintic_rate(u) / m.duration
                } else {
                    0.0
                };
                (y0 + (y1 - y0) * quintic(u), y_dot)
            }
            None => (y0, 0.0),
        };
        let psi = if v > 0.0 { y_dot.atan2(v) } else { 0.0 };
        VehicleState::new(self.x0 + dx, y, psi, v)
    }

    /// Scripted acceleration at `t`.
    pub fn accel(&self, t: f64) -> f64 {
        self.longitudinal(t.max(0.0)).2
    }
}

/// Speed and lateral position of an HDV at `t`.
pub fn hdv_speed(script: &HdvScript, t: f64, lanes: &LaneGeometry) -> (f64, f64) {
    script.speed_and_lateral(t, lanes)
}

/// Integrate one constant-acceleration piece of length `dt`, stopping at
/// the target speed or at standstill. Returns `(v, distance, accel at end)`.
fn advance(v: f64, accel: f64, target: Option<f64>, dt: f64) -> (f64, f64, f64) {
    if dt <= 0.0 || accel == 0.0 {
        return (v, v * dt.max(0.0), if dt > 0.0 { 0.0 } else { accel });
    }
    // speed at which the acceleration stops
    let limit = match target {
        Some(tv) if (tv - v) * accel > 0.0 => Some(tv),
        Some(_) => Some(v),
        None if accel < 0.0 => Some(0.0),
        None => None,
    };
    let t_hit = limit.map(|l| (l - v) / accel).unwrap_or(f64::INFINITY);
    if t_hit >= dt {
        let nv = v + accel * dt;
        (nv, v * dt + 0.5 * accel * dt * dt, accel)
    } else {
        let l = limit.expect("finite hit time implies a limit");
        let dx = v * t_hit + 0.5 * accel * t_hit * t_hit + l * (dt - t_hit);
        (l, dx, 0.0)
    }
}

fn quintic(u: f64) -> f64 {
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

fn quintic_rate(u: f64) -> f64 {
    30.0 * u * u * (1.0 - u) * (1.0 - u)
}
