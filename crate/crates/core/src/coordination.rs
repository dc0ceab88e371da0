//! Higher-level platoon coordination: the per-CAV finite state machine, the
//! V2V signal set, split/join headway scheduling and renumbering after a
//! lane change.
//!
//! Transition table (guards are evaluated on the previous tick's snapshot
//! and committed for all CAVs at once):
//!
//! | from              | guard                                        | to                |
//! |-------------------|----------------------------------------------|-------------------|
//! | CarFollowing      | `c != 0 && e`                                | LaneChange        |
//! | CarFollowing      | `ps` (predecessor started a lane change)     | Split             |
//! | LaneChange        | `p == 1`                                     | CarFollowing      |
//! | LaneChange        | `!e && p < 1`                                | BackToInitialLane |
//! | BackToInitialLane | `p == 0 && c != 0 && e` held for the debounce| LaneChange        |
//! | BackToInitialLane | `p == 0 && c == 0`                           | CarFollowing      |
//! | Split             | `pj` or predecessor `p == 1`, or `ps` cleared| Join              |
//! | Join              | headway at minimum and gap settled           | CarFollowing      |
//!
//! Every other combination keeps the current state.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::certificates::{
    barrier_front_value, barrier_rear_value, spacing_gap, CbfParams, Neighborhood,
    NeighborObservation, NeighborSlot, Side,
};
use crate::vehicle::{LaneGeometry, VehicleGeometry, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsmState {
    CarFollowing,
    LaneChange,
    #[serde(rename = "back_to_lane")]
    BackToInitialLane,
    Split,
    Join,
}

impl FsmState {
    pub const ALL: [FsmState; 5] = [
        FsmState::CarFollowing,
        FsmState::LaneChange,
        FsmState::BackToInitialLane,
        FsmState::Split,
        FsmState::Join,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FsmState::CarFollowing => "car_following",
            FsmState::LaneChange => "lane_change",
            FsmState::BackToInitialLane => "back_to_lane",
            FsmState::Split => "split",
            FsmState::Join => "join",
        }
    }
}

impl fmt::Display for FsmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FsmState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FsmState::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown FSM state `{s}`"))
    }
}

/// Lateral progress `p` of a lane change: 0, 0.5 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LaneProgress {
    Origin,
    Crossing,
    Target,
}

impl LaneProgress {
    pub fn value(self) -> f64 {
        match self {
            LaneProgress::Origin => 0.0,
            LaneProgress::Crossing => 0.5,
            LaneProgress::Target => 1.0,
        }
    }
}

/// FSM signals of one CAV, shared over V2V.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSet {
    /// Safe lane-change condition.
    pub e: bool,
    /// Prepare to split.
    pub ps: bool,
    /// Prepare to join.
    pub pj: bool,
    /// Lane-change command: 1 left, -1 right, 0 none.
    pub c: i8,
    pub p: LaneProgress,
}

impl Default for SignalSet {
    fn default() -> Self {
        Self {
            e: true,
            ps: false,
            pj: false,
            c: 0,
            p: LaneProgress::Origin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadwayMode {
    Split,
    Join,
    Hold,
}

pub const TAU_MIN: f64 = 0.6;
pub const TAU_MAX: f64 = 1.4;
pub const TAU_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadwayProfile {
    /// Time the profile was started (s).
    pub t0: f64,
    pub mode: HeadwayMode,
}

impl HeadwayProfile {
    pub fn hold() -> Self {
        Self {
            t0: 0.0,
            mode: HeadwayMode::Hold,
        }
    }

    pub fn split(t0: f64) -> Self {
        Self {
            t0,
            mode: HeadwayMode::Split,
        }
    }

    pub fn join(t0: f64) -> Self {
        Self {
            t0,
            mode: HeadwayMode::Join,
        }
    }
}

/// Desired time headway at `t_now`.
pub fn headway(profile: &HeadwayProfile, t_now: f64) -> f64 {
    let elapsed = (t_now - profile.t0).max(0.0);
    match profile.mode {
        HeadwayMode::Split => (TAU_MIN + TAU_RATE * elapsed).min(TAU_MAX),
        HeadwayMode::Join => (TAU_MAX - TAU_RATE * elapsed).max(TAU_MIN),
        HeadwayMode::Hold => TAU_MIN,
    }
}

/// Safe lane-change flag `e`: every lane-change barrier that has a
/// neighbour is non-negative.
pub fn lane_change_safe(ego: &VehicleState, neighborhood: &Neighborhood, cbf: &CbfParams) -> bool {
    let front_ok = |n: &Option<NeighborObservation>| {
        n.as_ref()
            .is_none_or(|o| barrier_front_value(ego, o, cbf) >= 0.0)
    };
    let rear_ok = neighborhood
        .bt
        .as_ref()
        .is_none_or(|o| barrier_rear_value(ego, o, cbf) >= 0.0);
    front_ok(&neighborhood.fc) && front_ok(&neighborhood.ft) && rear_ok
}

/// Lateral progress of a vehicle moving from the lane centred at
/// `origin_y` to the one centred at `target_y`.
pub fn lane_progress(
    y: f64,
    psi: f64,
    origin_y: f64,
    target_y: f64,
    params: &CoordinationParams,
    lane_width: f64,
) -> LaneProgress {
    let band = params.progress_band * lane_width;
    if (y - target_y).abs() < band && psi.abs() < params.settle_heading {
        LaneProgress::Target
    } else if (y - origin_y).abs() < band {
        LaneProgress::Origin
    } else {
        LaneProgress::Crossing
    }
}

/// Everything the transition guard looks at besides the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionInput {
    pub signals: SignalSet,
    /// Signals of the platoon predecessor, if any.
    pub predecessor: Option<SignalSet>,
    /// `e` has held for the retry debounce.
    pub retry_ready: bool,
    /// Join headway reached its minimum and the gap error is settled.
    pub join_settled: bool,
}

impl TransitionInput {
    pub fn from_signals(signals: SignalSet) -> Self {
        Self {
            signals,
            predecessor: None,
            retry_ready: false,
            join_settled: false,
        }
    }
}

pub fn transition(current: FsmState, input: &TransitionInput) -> FsmState {
    let s = &input.signals;
    match current {
        FsmState::CarFollowing => {
            if s.c != 0 && s.e {
                FsmState::LaneChange
            } else if s.ps {
                FsmState::Split
            } else {
                FsmState::CarFollowing
            }
        }
        FsmState::LaneChange => {
            if s.p == LaneProgress::Target {
                FsmState::CarFollowing
            } else if !s.e {
                FsmState::BackToInitialLane
            } else {
                FsmState::LaneChange
            }
        }
        FsmState::BackToInitialLane => match (s.p, s.c != 0) {
            (LaneProgress::Origin, true) if s.e && input.retry_ready => FsmState::LaneChange,
            (LaneProgress::Origin, false) => FsmState::CarFollowing,
            _ => FsmState::BackToInitialLane,
        },
        FsmState::Split => {
            let predecessor_done = input
                .predecessor
                .is_some_and(|p| p.p == LaneProgress::Target);
            if s.pj || predecessor_done || !s.ps {
                FsmState::Join
            } else {
                FsmState::Split
            }
        }
        FsmState::Join => {
            if input.join_settled {
                FsmState::CarFollowing
            } else {
                FsmState::Join
            }
        }
    }
}

/// Result of removing a lane changer from the platoon order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Renumbering {
    pub order: Vec<usize>,
    /// `(follower, new_leader)`: the follower of the departed CAV now keeps
    /// distance to the vehicle that was two places ahead of it.
    pub rebound: Option<(usize, usize)>,
    pub warning: Option<String>,
}

pub fn renumber(platoon: &[usize], departed: usize) -> Renumbering {
    let Some(pos) = platoon.iter().position(|&id| id == departed) else {
        return Renumbering {
            order: platoon.to_vec(),
            rebound: None,
            warning: Some(format!("vehicle {departed} is not a platoon member")),
        };
    };
    let mut order = platoon.to_vec();
    order.remove(pos);
    let rebound = match (pos.checked_sub(1), order.get(pos)) {
        (Some(ahead), Some(&follower)) => Some((follower, order[ahead])),
        _ => None,
    };
    Renumbering {
        order,
        rebound,
        warning: None,
    }
}

/// Tunable thresholds of the coordination layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinationParams {
    /// Half-width of the "in lane" band as a fraction of the lane width.
    pub progress_band: f64,
    /// Heading below which a vehicle counts as settled in the target lane (rad).
    pub settle_heading: f64,
    /// Consecutive safe ticks required before a lane-change retry.
    pub retry_debounce_ticks: u32,
    /// Relative gap error below which a join counts as settled.
    pub join_tolerance: f64,
    /// Whether the lane changer also widens its own headway while changing lanes.
    pub lane_changer_splits: bool,
}

impl Default for CoordinationParams {
    fn default() -> Self {
        Self {
            progress_band: 0.25,
            settle_heading: 0.05,
            retry_debounce_ticks: 10,
            join_tolerance: 0.05,
            lane_changer_splits: false,
        }
    }
}

/// How the coordinator cooperates; derived from the controller variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoordinationMode {
    /// Split/join scheduling and platoon leader bindings.
    pub cooperative: bool,
    /// Whether `e` is computed from the lane-change barriers (otherwise it
    /// is always set).
    pub barrier_aware: bool,
}

/// Coordination state of one CAV.
#[derive(Debug, Clone, PartialEq)]
pub struct CavCoordination {
    pub id: usize,
    pub fsm: FsmState,
    pub signals: SignalSet,
    /// Lane the CAV drives in when not changing lanes.
    pub home_lane: usize,
    /// Lane it is commanded to move to (`home_lane` when `c == 0`).
    pub target_lane: usize,
    pub headway: HeadwayProfile,
    pub safe_streak: u32,
    /// Left the platoon after completing its lane change.
    pub departed: bool,
}

impl CavCoordination {
    pub fn side(&self) -> Side {
        if self.target_lane < self.home_lane {
            Side::Right
        } else {
            Side::Left
        }
    }
}

/// Per-CAV guidance handed to the lower-level controller each tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guidance {
    pub fsm: FsmState,
    pub platoon_index: usize,
    pub tau: f64,
    pub y_d: f64,
    pub side: Side,
    /// Vehicle id used as the spacing reference of the longitudinal CLF.
    pub leader: Option<usize>,
    /// Vehicle id of the split/join barrier partner.
    pub peer: Option<usize>,
}

/// Record of one FSM transition, for logs and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEvent {
    pub t: f64,
    pub id: usize,
    pub from: FsmState,
    pub to: FsmState,
}

/// Platoon-wide coordinator. CAV ids index into the world's vehicle list.
#[derive(Debug, Clone)]
pub struct Coordinator {
    pub params: CoordinationParams,
    pub mode: CoordinationMode,
    /// Platoon order, head first.
    pub order: Vec<usize>,
    pub cavs: BTreeMap<usize, CavCoordination>,
    pub warnings: Vec<String>,
}

/// Inputs of one coordination tick, all taken from the same snapshot.
pub struct TickView<'a> {
    pub t: f64,
    pub states: &'a [VehicleState],
    pub neighborhoods: &'a BTreeMap<usize, Neighborhood>,
    pub cbf: &'a CbfParams,
    pub geom: &'a VehicleGeometry,
    pub lanes: &'a LaneGeometry,
    /// Desired standstill gap, used for the join-settled test.
    pub s_0: f64,
}

impl Coordinator {
    /// `platoon` is the head-first list of CAV ids; `commands` maps CAV ids
    /// to their lane-change command.
    pub fn new(
        platoon: Vec<usize>,
        home_lanes: &BTreeMap<usize, usize>,
        commands: &BTreeMap<usize, i8>,
        lanes: &LaneGeometry,
        params: CoordinationParams,
        mode: CoordinationMode,
    ) -> Self {
        let cavs = platoon
            .iter()
            .map(|&id| {
                let home = home_lanes.get(&id).copied().unwrap_or(0);
                let c = commands.get(&id).copied().unwrap_or(0);
                let target = shift_lane(home, c, lanes);
                (
                    id,
                    CavCoordination {
                        id,
                        fsm: FsmState::CarFollowing,
                        signals: SignalSet {
                            c,
                            ..SignalSet::default()
                        },
                        home_lane: home,
                        target_lane: target,
                        headway: HeadwayProfile::hold(),
                        safe_streak: 0,
                        departed: false,
                    },
                )
            })
            .collect();
        Self {
            params,
            mode,
            order: platoon,
            cavs,
            warnings: Vec::new(),
        }
    }

    pub fn state_of(&self, id: usize) -> Option<FsmState> {
        self.cavs.get(&id).map(|c| c.fsm)
    }

    fn predecessor(&self, id: usize) -> Option<usize> {
        let pos = self.order.iter().position(|&x| x == id)?;
        pos.checked_sub(1).map(|p| self.order[p])
    }

    fn follower(&self, id: usize) -> Option<usize> {
        let pos = self.order.iter().position(|&x| x == id)?;
        self.order.get(pos + 1).copied()
    }

    /// Advance every CAV by one tick. All guards read the state as it was
    /// at the start of the call; the new states are committed together.
    pub fn update(&mut self, view: &TickView<'_>) -> Vec<TransitionEvent> {
        let lane_w = view.lanes.lane_width;

        // 1. refresh own signals e and p from the snapshot
        let mut signals: BTreeMap<usize, SignalSet> = BTreeMap::new();
        let mut streaks: BTreeMap<usize, u32> = BTreeMap::new();
        for (&id, cav) in &self.cavs {
            let ego = &view.states[id];
            let mut s = cav.signals;
            s.e = if self.mode.barrier_aware {
                view.neighborhoods
                    .get(&id)
                    .is_none_or(|n| lane_change_safe(ego, n, view.cbf))
            } else {
                true
            };
            if s.c != 0 {
                let computed = lane_progress(
                    ego.y,
                    ego.psi,
                    view.lanes.lane_center(cav.home_lane),
                    view.lanes.lane_center(cav.target_lane),
                    &self.params,
                    lane_w,
                );
                // progress only moves forward while changing lanes
                s.p = if cav.fsm == FsmState::LaneChange {
                    computed.max(cav.signals.p)
                } else {
                    computed
                };
            }
            streaks.insert(id, if s.e { cav.safe_streak + 1 } else { 0 });
            signals.insert(id, s);
        }

        // 2. V2V: split/join requests from the predecessor
        if self.mode.cooperative {
            for &id in &self.order {
                let Some(pred) = self.predecessor(id) else {
                    let s = signals.get_mut(&id).expect("every CAV has signals");
                    s.ps = false;
                    s.pj = false;
                    continue;
                };
                let pred_cav = &self.cavs[&pred];
                let pred_sig = signals[&pred];
                let changing = matches!(
                    pred_cav.fsm,
                    FsmState::LaneChange | FsmState::BackToInitialLane
                ) || (pred_sig.c != 0 && pred_sig.e && pred_cav.fsm == FsmState::CarFollowing);
                let s = signals.get_mut(&id).expect("every CAV has signals");
                s.ps = changing;
                s.pj = pred_sig.p == LaneProgress::Target && pred_sig.c != 0;
            }
        }

        // 3. transitions
        let mut next: BTreeMap<usize, FsmState> = BTreeMap::new();
        for (&id, cav) in &self.cavs {
            let predecessor = if self.mode.cooperative {
                self.predecessor(id).map(|p| signals[&p])
            } else {
                None
            };
            let input = TransitionInput {
                signals: signals[&id],
                predecessor,
                retry_ready: streaks[&id] >= self.params.retry_debounce_ticks,
                join_settled: cav.fsm == FsmState::Join && self.join_settled(id, view),
            };
            let mut to = transition(cav.fsm, &input);
            if !self.mode.cooperative && matches!(to, FsmState::Split | FsmState::Join) {
                to = FsmState::CarFollowing;
            }
            next.insert(id, to);
        }

        // 4. commit
        let mut events = Vec::new();
        let mut departed = Vec::new();
        for (&id, &to) in &next {
            let cav = self.cavs.get_mut(&id).expect("known CAV");
            let from = cav.fsm;
            cav.signals = signals[&id];
            cav.safe_streak = streaks[&id];
            if from == to {
                continue;
            }
            events.push(TransitionEvent {
                t: view.t,
                id,
                from,
                to,
            });
            cav.fsm = to;
            match to {
                FsmState::Split => cav.headway = HeadwayProfile::split(view.t),
                FsmState::Join => cav.headway = HeadwayProfile::join(view.t),
                FsmState::LaneChange if self.params.lane_changer_splits && self.mode.cooperative => {
                    if from == FsmState::CarFollowing {
                        cav.headway = HeadwayProfile::split(view.t);
                    }
                }
                FsmState::CarFollowing => {
                    if from == FsmState::LaneChange {
                        departed.push(id);
                    }
                    if from == FsmState::BackToInitialLane {
                        cav.target_lane = cav.home_lane;
                    }
                    cav.headway = HeadwayProfile::hold();
                }
                _ => {}
            }
            if from == FsmState::BackToInitialLane && to == FsmState::LaneChange {
                cav.signals.p = LaneProgress::Origin;
            }
        }

        for id in departed {
            let renum = renumber(&self.order, id);
            if let Some(w) = renum.warning {
                self.warnings.push(w);
            } else {
                self.order = renum.order;
            }
            let cav = self.cavs.get_mut(&id).expect("known CAV");
            cav.departed = true;
            cav.home_lane = cav.target_lane;
            cav.signals.c = 0;
            cav.signals.p = LaneProgress::Origin;
            cav.headway = HeadwayProfile::hold();
        }
        events
    }

    fn join_settled(&self, id: usize, view: &TickView<'_>) -> bool {
        let cav = &self.cavs[&id];
        if headway(&cav.headway, view.t) > TAU_MIN {
            return false;
        }
        let Some(leader) = self.predecessor(id) else {
            return true;
        };
        let ego = &view.states[id];
        let lead = NeighborObservation::from_state(
            leader,
            0,
            NeighborSlot::PlatoonPeer,
            &view.states[leader],
        );
        let gap = spacing_gap(ego, &lead, view.geom);
        let desired = view.s_0 + ego.v * TAU_MIN;
        (gap - desired).abs() <= self.params.join_tolerance * desired
    }

    /// Controller guidance for every CAV at time `t`.
    pub fn guidance(
        &self,
        t: f64,
        lanes: &LaneGeometry,
        hoods: &BTreeMap<usize, Neighborhood>,
    ) -> BTreeMap<usize, Guidance> {
        let mut out = BTreeMap::new();
        for (&id, cav) in &self.cavs {
            let platoon_index = self
                .order
                .iter()
                .position(|&x| x == id)
                .map_or(0, |p| p + 1);
            let lane = match cav.fsm {
                FsmState::LaneChange => cav.target_lane,
                _ => cav.home_lane,
            };
            let hood = hoods.get(&id);
            let perceived_fc = hood.and_then(|h| h.fc).map(|o| o.vehicle_id);
            let perceived_ft = hood.and_then(|h| h.ft).map(|o| o.vehicle_id);
            let (leader, peer) = if self.mode.cooperative && !cav.departed {
                let pred = self.predecessor(id);
                match cav.fsm {
                    FsmState::Split | FsmState::Join => (pred, pred),
                    // the lane changer keeps its gap to whoever it is merging behind
                    FsmState::LaneChange => (perceived_ft, None),
                    FsmState::BackToInitialLane => (None, None),
                    _ => (pred.or(perceived_fc), None),
                }
            } else {
                (perceived_fc, None)
            };
            out.insert(
                id,
                Guidance {
                    fsm: cav.fsm,
                    platoon_index,
                    tau: headway(&cav.headway, t),
                    y_d: lanes.lane_center(lane),
                    side: cav.side(),
                    leader,
                    peer,
                },
            );
        }
        out
    }

    pub fn follower_of(&self, id: usize) -> Option<usize> {
        self.follower(id)
    }
}

fn shift_lane(home: usize, c: i8, lanes: &LaneGeometry) -> usize {
    let target = home as i64 + c as i64;
    target.clamp(0, lanes.lane_count.saturating_sub(1) as i64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sig(e: bool, c: i8, p: LaneProgress) -> SignalSet {
        SignalSet {
            e,
            ps: false,
            pj: false,
            c,
            p,
        }
    }

    #[test]
    fn headway_profiles() {
        let split = HeadwayProfile::split(0.0);
        assert_relative_eq!(headway(&split, 0.0), 0.6);
        assert_relative_eq!(headway(&split, 2.0), 1.0);
        assert_relative_eq!(headway(&split, 5.0), 1.4);
        let join = HeadwayProfile::join(3.0);
        assert_relative_eq!(headway(&join, 3.0), 1.4);
        assert_relative_eq!(headway(&join, 7.0), 0.6, epsilon = 1e-12);
        assert_eq!(headway(&HeadwayProfile::hold(), 123.0), 0.6);
    }

    #[test]
    fn transition_examples() {
        let input = TransitionInput::from_signals(sig(true, 1, LaneProgress::Origin));
        assert_eq!(transition(FsmState::CarFollowing, &input), FsmState::LaneChange);

        let input = TransitionInput::from_signals(sig(false, 1, LaneProgress::Crossing));
        assert_eq!(transition(FsmState::LaneChange, &input), FsmState::BackToInitialLane);

        let mut input = TransitionInput::from_signals(SignalSet {
            ps: true,
            ..SignalSet::default()
        });
        input.predecessor = Some(sig(true, 1, LaneProgress::Target));
        assert_eq!(transition(FsmState::Split, &input), FsmState::Join);
    }

    #[test]
    fn lane_change_completion_and_retry() {
        let done = TransitionInput::from_signals(sig(true, 1, LaneProgress::Target));
        assert_eq!(transition(FsmState::LaneChange, &done), FsmState::CarFollowing);

        let mut back = TransitionInput::from_signals(sig(true, 1, LaneProgress::Origin));
        assert_eq!(
            transition(FsmState::BackToInitialLane, &back),
            FsmState::BackToInitialLane
        );
        back.retry_ready = true;
        assert_eq!(transition(FsmState::BackToInitialLane, &back), FsmState::LaneChange);

        let crossing = TransitionInput {
            retry_ready: true,
            ..TransitionInput::from_signals(sig(true, 1, LaneProgress::Crossing))
        };
        assert_eq!(
            transition(FsmState::BackToInitialLane, &crossing),
            FsmState::BackToInitialLane
        );
    }

    #[test]
    fn follower_splits_on_request() {
        let input = TransitionInput::from_signals(SignalSet {
            ps: true,
            ..SignalSet::default()
        });
        assert_eq!(transition(FsmState::CarFollowing, &input), FsmState::Split);
        let stay = TransitionInput::from_signals(SignalSet {
            ps: true,
            ..SignalSet::default()
        });
        assert_eq!(transition(FsmState::Split, &stay), FsmState::Split);
    }

    #[test]
    fn renumber_examples() {
        let r = renumber(&[1, 2, 3], 2);
        assert_eq!(r.order, vec![1, 3]);
        assert_eq!(r.rebound, Some((3, 1)));
        assert!(r.warning.is_none());

        let r = renumber(&[1, 2, 3], 3);
        assert_eq!(r.order, vec![1, 2]);
        assert_eq!(r.rebound, None);

        let r = renumber(&[1, 2, 3], 9);
        assert_eq!(r.order, vec![1, 2, 3]);
        assert!(r.warning.is_some());
    }

    #[test]
    fn progress_bands() {
        let p = CoordinationParams::default();
        assert_eq!(lane_progress(1.8, 0.0, 1.8, 5.4, &p, 3.6), LaneProgress::Origin);
        assert_eq!(lane_progress(3.0, 0.0, 1.8, 5.4, &p, 3.6), LaneProgress::Crossing);
        assert_eq!(lane_progress(5.3, 0.01, 1.8, 5.4, &p, 3.6), LaneProgress::Target);
        // in the target band but still turning
        assert_eq!(lane_progress(5.3, 0.1, 1.8, 5.4, &p, 3.6), LaneProgress::Crossing);
    }

    #[test]
    fn safe_flag() {
        let cbf = CbfParams::default();
        let ego = VehicleState::new(50.0, 1.8, 0.0, 27.5);
        assert!(lane_change_safe(&ego, &Neighborhood::default(), &cbf));

        let near = Neighborhood {
            ft: Some(NeighborObservation::from_state(
                7,
                2,
                NeighborSlot::FrontTarget,
                &VehicleState::new(70.0, 5.4, 0.0, 27.5),
            )),
            ..Neighborhood::default()
        };
        assert!(!lane_change_safe(&ego, &near, &cbf));

        let far = Neighborhood {
            fc: Some(NeighborObservation::from_state(
                1,
                2,
                NeighborSlot::FrontCurrent,
                &VehicleState::new(100.0, 1.8, 0.0, 27.5),
            )),
            ft: Some(NeighborObservation::from_state(
                7,
                2,
                NeighborSlot::FrontTarget,
                &VehicleState::new(100.0, 5.4, 0.0, 27.5),
            )),
            bt: Some(NeighborObservation::from_state(
                8,
                2,
                NeighborSlot::BackTarget,
                &VehicleState::new(0.0, 5.4, 0.0, 27.5),
            )),
        };
        assert!(lane_change_safe(&ego, &far, &cbf));
    }
}
