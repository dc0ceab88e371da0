//! Footprint overlap and time-to-collision.

use crate::vehicle::{VehicleGeometry, VehicleState};

/// Corners of the oriented rectangle spanning `[-l_rc, l_fc]` along the
/// heading and `+-width/2` across it.
pub fn footprint(state: &VehicleState, geom: &VehicleGeometry) -> [(f64, f64); 4] {
    let (s, c) = state.psi.sin_cos();
    let hw = geom.width / 2.0;
    let local = [
        (geom.l_fc, hw),
        (-geom.l_rc, hw),
        (-geom.l_rc, -hw),
        (geom.l_fc, -hw),
    ];
    local.map(|(lx, ly)| (state.x + lx * c - ly * s, state.y + lx * s + ly * c))
}

fn project(corners: &[(f64, f64); 4], axis: (f64, f64)) -> (f64, f64) {
    corners
        .iter()
        .map(|p| p.0 * axis.0 + p.1 * axis.1)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(d), hi.max(d))
        })
}

/// Separating-axis test on the two footprints. Touching edges do not count.
pub fn footprints_overlap(a: &VehicleState, b: &VehicleState, geom: &VehicleGeometry) -> bool {
    let ca = footprint(a, geom);
    let cb = footprint(b, geom);
    let axes = [a.psi, b.psi]
        .into_iter()
        .flat_map(|psi| {
            let (s, c) = psi.sin_cos();
            [(c, s), (-s, c)]
        });
    for axis in axes {
        let (a_lo, a_hi) = project(&ca, axis);
        let (b_lo, b_hi) = project(&cb, axis);
        if a_hi <= b_lo || b_hi <= a_lo {
            return false;
        }
    }
    true
}

/// All colliding pairs `(i, j)` with `i < j`.
pub fn detect_collision(snapshot: &[VehicleState], geom: &VehicleGeometry) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..snapshot.len() {
        for j in i + 1..snapshot.len() {
            if footprints_overlap(&snapshot[i], &snapshot[j], geom) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Time to collision of `ego` with the vehicle `front` ahead of it: bumper
/// gap over closing speed, infinite when not closing.
pub fn ttc(ego: &VehicleState, front: &VehicleState, geom: &VehicleGeometry) -> f64 {
    let closing = ego.v - front.v;
    if closing <= 0.0 {
        return f64::INFINITY;
    }
    let gap = (front.x - ego.x - geom.length()).max(0.0);
    gap / closing
}
