//! Sensing: only the nearest vehicles in the current lane and the target
//! lane are visible to a CAV.

use crate::certificates::{NeighborObservation, NeighborSlot, Neighborhood};
use crate::vehicle::{LaneGeometry, VehicleState};

/// Nearest vehicle ahead of (`ahead = true`) or behind `ego` whose nearest
/// lane centre is `lane`. Ties in distance go to the lower id.
fn nearest(
    ego_id: usize,
    snapshot: &[VehicleState],
    lane: usize,
    lanes: &LaneGeometry,
    ahead: bool,
) -> Option<usize> {
    let ego = &snapshot[ego_id];
    snapshot
        .iter()
        .enumerate()
        .filter(|&(id, s)| {
            id != ego_id
                && lanes.lane_of(s.y) == lane
                && if ahead { s.x > ego.x } else { s.x < ego.x }
        })
        .min_by(|a, b| {
            let da = (a.1.x - ego.x).abs();
            let db = (b.1.x - ego.x).abs();
            da.total_cmp(&db).then(a.0.cmp(&b.0))
        })
        .map(|(id, _)| id)
}

/// Vehicle ids of the three neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NeighborIds {
    pub fc: Option<usize>,
    pub ft: Option<usize>,
    pub bt: Option<usize>,
}

pub fn neighbor_ids(
    ego_id: usize,
    snapshot: &[VehicleState],
    current_lane: usize,
    target_lane: usize,
    lanes: &LaneGeometry,
) -> NeighborIds {
    NeighborIds {
        fc: nearest(ego_id, snapshot, current_lane, lanes, true),
        ft: nearest(ego_id, snapshot, target_lane, lanes, true),
        bt: nearest(ego_id, snapshot, target_lane, lanes, false),
    }
}

/// Neighbourhood of `ego_id`. `ego_index` tags the observations with the
/// ego's platoon position.
pub fn perceive(
    ego_id: usize,
    ego_index: usize,
    snapshot: &[VehicleState],
    current_lane: usize,
    target_lane: usize,
    lanes: &LaneGeometry,
) -> Neighborhood {
    let ids = neighbor_ids(ego_id, snapshot, current_lane, target_lane, lanes);
    let obs = |id: Option<usize>, slot| {
        id.map(|id| NeighborObservation::from_state(id, ego_index, slot, &snapshot[id]))
    };
    Neighborhood {
        fc: obs(ids.fc, NeighborSlot::FrontCurrent),
        ft: obs(ids.ft, NeighborSlot::FrontTarget),
        bt: obs(ids.bt, NeighborSlot::BackTarget),
    }
}
