//! World stepping: scenario presets, the tick loop and its logs.

pub mod collision;
pub mod hdv;
pub mod perception;

use std::collections::BTreeMap;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificates::{CbfParams, ClfParams, NeighborObservation, NeighborSlot, Neighborhood};
use crate::controller::{decide, ControllerConfig, ControllerParams, Situation, Variant};
use crate::coordination::{
    CoordinationMode, CoordinationParams, Coordinator, FsmState, TickView, TransitionEvent,
};
use crate::qp::QpError;
use crate::vehicle::{step, ControlInput, LaneGeometry, VehicleGeometry, VehicleState};

pub use collision::{detect_collision, footprints_overlap, ttc};
pub use hdv::{hdv_speed, HdvScript, LaneManeuver, SpeedSegment};
pub use perception::{neighbor_ids, perceive, NeighborIds};

pub const SCENARIOS: [&str; 4] = ["cutin", "fdec", "bacc", "ffdec"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown scenario `{0}` (expected one of cutin, fdec, bacc, ffdec)")]
    UnknownScenario(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("controller failure at t={t}: {source}")]
    Qp { t: f64, source: QpError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavSpec {
    pub name: String,
    pub x: f64,
    pub lane: usize,
    pub v: f64,
    /// Lane-change command: 1 left, -1 right, 0 none.
    pub command: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdvSpec {
    pub name: String,
    pub script: HdvScript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Simulated time (s).
    pub duration: f64,
    pub dt: f64,
    /// Reserved; the simulation has no random element.
    pub seed: u64,
    pub variant: Variant,
    pub qp: ControllerParams,
    pub clf: ClfParams,
    pub cbf: CbfParams,
    pub geometry: VehicleGeometry,
    pub lanes: LaneGeometry,
    pub coordination: CoordinationParams,
    /// Platoon members, head first.
    pub cavs: Vec<CavSpec>,
    pub hdvs: Vec<HdvSpec>,
}

impl ScenarioConfig {
    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            variant: self.variant,
            qp: self.qp,
            clf: self.clf,
            cbf: self.cbf,
            geom: self.geometry,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn vehicle_names(&self) -> Vec<String> {
        self.cavs
            .iter()
            .map(|c| c.name.clone())
            .chain(self.hdvs.iter().map(|h| h.name.clone()))
            .collect()
    }

    /// Name of the first CAV with a lane-change command.
    pub fn lane_changer(&self) -> Option<&str> {
        self.cavs
            .iter()
            .find(|c| c.command != 0)
            .map(|c| c.name.as_str())
    }

    pub fn tick_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= self.duration) {
            return bad(format!("dt must be in (0, duration], got {}", self.dt));
        }
        if !self.qp.is_valid() {
            return bad("controller weights and bounds must be positive".into());
        }
        if !self.cbf.is_valid() {
            return bad("barrier parameters out of range".into());
        }
        if !self.geometry.is_valid() {
            return bad("vehicle geometry must be positive".into());
        }
        if self.lanes.lane_count == 0 || !(self.lanes.lane_width > 0.0) {
            return bad("road needs at least one lane of positive width".into());
        }
        if self.cavs.is_empty() {
            return bad("at least one CAV is required".into());
        }
        for c in &self.cavs {
            if c.lane >= self.lanes.lane_count {
                return bad(format!("{} starts in lane {} which does not exist", c.name, c.lane));
            }
            if !(-1..=1).contains(&c.command) {
                return bad(format!("{} has lane-change command {}", c.name, c.command));
            }
            if !(c.x.is_finite() && c.v.is_finite() && c.v >= 0.0) {
                return bad(format!("{} has an invalid initial state", c.name));
            }
        }
        for h in &self.hdvs {
            let lane_ok = h.script.lane < self.lanes.lane_count
                && h
                    .script
                    .lane_change
                    .is_none_or(|m| m.target_lane < self.lanes.lane_count);
            if !h.script.is_valid() || !lane_ok {
                return bad(format!("script of {} is invalid", h.name));
            }
        }
        let mut names = self.vehicle_names();
        names.sort();
        names.dedup();
        if names.len() != self.cavs.len() + self.hdvs.len() {
            return bad("vehicle names must be unique".into());
        }
        Ok(())
    }
}

fn platoon(xs: [f64; 3], v: f64) -> Vec<CavSpec> {
    xs.iter()
        .enumerate()
        .map(|(k, &x)| CavSpec {
            name: format!("CAV{}", k + 1),
            x,
            lane: 0,
            v,
            command: if k == 1 { 1 } else { 0 },
        })
        .collect()
}

fn segment(start: f64, accel: f64, target: Option<f64>) -> SpeedSegment {
    SpeedSegment {
        start,
        accel,
        target,
    }
}

/// Exact configuration of a named scenario.
pub fn scenario_preset(name: &str) -> Result<ScenarioConfig, SimError> {
    let base = ScenarioConfig {
        name: name.to_string(),
        duration: 20.0,
        dt: 0.05,
        seed: 0,
        variant: Variant::ClfCbfQp,
        qp: ControllerParams::default(),
        clf: ClfParams::default(),
        cbf: CbfParams::default(),
        geometry: VehicleGeometry::default(),
        lanes: LaneGeometry::default(),
        coordination: CoordinationParams::default(),
        cavs: platoon([100.0, 50.0, 0.0], 27.5),
        hdvs: Vec::new(),
    };
    let weights = |h_beta, alpha_psi, p_y, p_psi| ControllerParams {
        h: [[1.0, 0.0], [0.0, h_beta]],
        alpha_l: 1.7,
        alpha_y: 0.6,
        alpha_psi,
        p_l: 15.0,
        p_y,
        p_psi,
        ..ControllerParams::default()
    };
    // Fixed cruise speed, CLF scaling (alpha1, alpha2).
    let cruise = |v_d, alpha1, alpha2| ClfParams {
        v_d,
        alpha1,
        alpha2,
        match_leader_speed: false,
        ..ClfParams::default()
    };
    let config = match name {
        "cutin" => ScenarioConfig {
            qp: weights(300.0, 18.0, 0.05, 400.0),
            clf: cruise(25.0, 0.01, 0.01),
            cbf: CbfParams {
                eps_x: 0.0,
                ..CbfParams::default()
            },
            hdvs: vec![HdvSpec {
                name: "LCV".into(),
                script: HdvScript {
                    lane_change: Some(LaneManeuver {
                        start: 0.5,
                        target_lane: 1,
                        duration: 3.0,
                    }),
                    ..HdvScript::cruising(45.0, 2, 27.0)
                },
            }],
            ..base
        },
        "fdec" => ScenarioConfig {
            qp: weights(300.0, 20.0, 0.02, 400.0),
            clf: cruise(36.0, 1.0, 0.003),
            hdvs: vec![HdvSpec {
                name: "FTV".into(),
                script: HdvScript {
                    segments: vec![segment(1.8, -9.0, None), segment(3.0, 3.0, Some(31.0))],
                    ..HdvScript::cruising(75.0, 1, 30.0)
                },
            }],
            ..base
        },
        "bacc" => ScenarioConfig {
            qp: weights(300.0, 18.0, 0.02, 900.0),
            clf: cruise(25.0, 0.03, 0.003),
            cbf: CbfParams {
                eps_x: 0.0,
                ..CbfParams::default()
            },
            hdvs: vec![HdvSpec {
                name: "BTV".into(),
                script: HdvScript {
                    segments: vec![segment(1.8, 9.0, None), segment(3.0, -3.0, Some(22.0))],
                    ..HdvScript::cruising(0.0, 1, 30.0)
                },
            }],
            ..base
        },
        "ffdec" => ScenarioConfig {
            qp: ControllerParams {
                h: [[1e-3, 0.0], [0.0, 1750.0]],
                alpha_y: 0.5,
                a_max: 6.67,
                ..weights(1.0, 24.0, 0.001, 1000.0)
            },
            clf: ClfParams {
                v_d: 25.0,
                alpha1: 0.13,
                alpha2: 5e-5,
                ..ClfParams::default()
            },
            cbf: CbfParams {
                eps_x: 0.1,
                a_max: 6.67,
                gamma_fc: 0.5,
                gamma_ft: 2.0,
                gamma_bt: 0.4,
                ..CbfParams::default()
            },
            cavs: platoon([60.0, 30.0, 0.0], 20.0),
            hdvs: vec![
                HdvSpec {
                    name: "FTV".into(),
                    script: HdvScript {
                        segments: vec![segment(1.0, -6.0, None), segment(3.8, 3.0, Some(28.0))],
                        ..HdvScript::cruising(70.0, 1, 20.0)
                    },
                },
                HdvSpec {
                    name: "FCV".into(),
                    script: HdvScript {
                        segments: vec![segment(1.0, -1.0, Some(15.0))],
                        ..HdvScript::cruising(90.0, 0, 20.0)
                    },
                },
            ],
            ..base
        },
        other => return Err(SimError::UnknownScenario(other.to_string())),
    };
    Ok(config)
}

/// One row of the trajectory log: one vehicle at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
    pub a: f64,
    pub beta: f64,
    /// `None` for HDVs.
    pub fsm_state: Option<FsmState>,
    /// Front barrier in the current lane, or against the platoon partner
    /// while splitting or joining.
    pub h_fc: Option<f64>,
    pub h_ft: Option<f64>,
    pub h_bt: Option<f64>,
    pub delta_l: Option<f64>,
    pub delta_y: Option<f64>,
    pub delta_psi: Option<f64>,
    pub feasible: bool,
    pub collision: bool,
}

impl LogRow {
    pub fn state(&self) -> VehicleState {
        VehicleState::new(self.x, self.y, self.psi, self.v)
    }

    pub fn barrier_min(&self) -> Option<f64> {
        [self.h_fc, self.h_ft, self.h_bt]
            .into_iter()
            .flatten()
            .reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub vehicles: Vec<String>,
    /// Tick-major: all vehicles of tick 0, then tick 1, ...
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows_for<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a LogRow> + 'a {
        self.rows.iter().filter(move |r| r.id == id)
    }

    pub fn last_for(&self, id: &str) -> Option<&LogRow> {
        self.rows.iter().rev().find(|r| r.id == id)
    }

    /// FSM states visited by `id`, consecutive repeats removed.
    pub fn fsm_path(&self, id: &str) -> Vec<FsmState> {
        let mut out: Vec<FsmState> = Vec::new();
        for s in self.rows_for(id).filter_map(|r| r.fsm_state) {
            if out.last() != Some(&s) {
                out.push(s);
            }
        }
        out
    }

    pub fn first_infeasible(&self) -> Option<f64> {
        self.rows.iter().find(|r| !r.feasible).map(|r| r.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub occurred: bool,
    pub first_time: Option<f64>,
    pub pair: Option<(String, String)>,
    /// Every pair that collided at some tick, in order of first contact.
    pub pairs: Vec<(String, String)>,
    /// Smallest time to collision over all same-lane followers (s).
    pub min_ttc: f64,
}

impl CollisionReport {
    pub fn involves(&self, a: &str, b: &str) -> bool {
        self.pairs
            .iter()
            .any(|(p, q)| (p == a && q == b) || (p == b && q == a))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub report: CollisionReport,
    pub transitions: Vec<TransitionEvent>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    /// Transitions of one vehicle, by name.
    pub fn transitions_of(&self, name: &str) -> Vec<TransitionEvent> {
        match self.log.vehicles.iter().position(|v| v == name) {
            Some(id) => self
                .transitions
                .iter()
                .filter(|e| e.id == id)
                .copied()
                .collect(),
            None => Vec::new(),
        }
    }
}

enum Agent {
    Cav,
    Hdv(HdvScript),
}

fn observation(id: usize, ego_index: usize, states: &[VehicleState]) -> NeighborObservation {
    NeighborObservation::from_state(id, ego_index, NeighborSlot::PlatoonPeer, &states[id])
}

/// Run the scenario to completion.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput, SimError> {
    config.validate()?;
    let lanes = &config.lanes;
    let geom = &config.geometry;
    let controller = config.controller();
    let names = config.vehicle_names();
    let n_cav = config.cavs.len();

    let mut agents: Vec<Agent> = Vec::new();
    let mut states: Vec<VehicleState> = Vec::new();
    for c in &config.cavs {
        agents.push(Agent::Cav);
        states.push(VehicleState::new(c.x, lanes.lane_center(c.lane), 0.0, c.v));
    }
    for h in &config.hdvs {
        states.push(h.script.state(0.0, lanes));
        agents.push(Agent::Hdv(h.script.clone()));
    }

    let home: BTreeMap<usize, usize> = config.cavs.iter().enumerate().map(|(i, c)| (i, c.lane)).collect();
    let commands: BTreeMap<usize, i8> = config
        .cavs
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.command))
        .collect();
    let mut coordinator = Coordinator::new(
        (0..n_cav).collect(),
        &home,
        &commands,
        lanes,
        config.coordination,
        CoordinationMode {
            cooperative: config.variant.cooperative(),
            barrier_aware: config.variant.uses_barriers(),
        },
    );

    let ticks = config.tick_count();
    let mut log = TrajectoryLog {
        dt: config.dt,
        vehicles: names.clone(),
        rows: Vec::with_capacity(ticks * states.len()),
    };
    let mut transitions = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut first_time = None;
    let mut min_ttc = f64::INFINITY;

    let perceive_all = |coord: &Coordinator, snapshot: &[VehicleState]| {
        let mut hoods = BTreeMap::new();
        for (&id, cav) in &coord.cavs {
            let index = coord.order.iter().position(|&x| x == id).map_or(0, |p| p + 1);
            let hood = perceive(id, index, snapshot, cav.home_lane, cav.target_lane, lanes);
            hoods.insert(id, hood);
        }
        hoods
    };

    for k in 0..ticks {
        let t = k as f64 * config.dt;
        let snapshot = states.clone();

        let hoods = perceive_all(&coordinator, &snapshot);
        let view = TickView {
            t,
            states: &snapshot,
            neighborhoods: &hoods,
            cbf: &config.cbf,
            geom,
            lanes,
            s_0: config.clf.s_0,
        };
        let events = coordinator.update(&view);
        for e in &events {
            debug!("t={:.2} {}: {} -> {}", t, names[e.id], e.from, e.to);
        }
        transitions.extend(events);

        // lanes may have changed with the transitions
        let hoods = perceive_all(&coordinator, &snapshot);
        let guidance = coordinator.guidance(t, lanes, &hoods);

        let collisions = detect_collision(&snapshot, geom);
        for &pair in &collisions {
            if first_time.is_none() {
                first_time = Some(t);
            }
            if !pairs.contains(&pair) {
                pairs.push(pair);
            }
        }
        let in_collision = |id: usize| collisions.iter().any(|&(a, b)| a == id || b == id);

        for id in 0..snapshot.len() {
            let own_lane = lanes.lane_of(snapshot[id].y);
            if let Some(front) = neighbor_ids(id, &snapshot, own_lane, own_lane, lanes).fc {
                min_ttc = min_ttc.min(ttc(&snapshot[id], &snapshot[front], geom));
            }
        }

        let mut inputs = Vec::with_capacity(snapshot.len());
        for (id, agent) in agents.iter().enumerate() {
            let s = snapshot[id];
            let row = match agent {
                Agent::Cav => {
                    let g = &guidance[&id];
                    let hood: Neighborhood = hoods[&id];
                    let situation = Situation {
                        ego: s,
                        fsm: g.fsm,
                        neighborhood: hood,
                        leader: g.leader.map(|l| observation(l, g.platoon_index, &snapshot)),
                        peer: g.peer.map(|p| observation(p, g.platoon_index, &snapshot)),
                        tau: g.tau,
                        y_d: g.y_d,
                        side: g.side,
                    };
                    let d = decide(&situation, &controller).map_err(|source| SimError::Qp { t, source })?;
                    if !d.feasible {
                        debug!("t={:.2} {}: QP infeasible, braking", t, names[id]);
                    }
                    inputs.push(d.input);
                    let (delta_l, delta_y, delta_psi) = if d.feasible {
                        (Some(d.slacks[0]), Some(d.slacks[1]), Some(d.slacks[2]))
                    } else {
                        (None, None, None)
                    };
                    LogRow {
                        t,
                        id: names[id].clone(),
                        x: s.x,
                        y: s.y,
                        psi: s.psi,
                        v: s.v,
                        a: d.input.a,
                        beta: d.input.beta,
                        fsm_state: Some(g.fsm),
                        h_fc: d.barriers.fc.or(d.barriers.peer),
                        h_ft: d.barriers.ft,
                        h_bt: d.barriers.bt,
                        delta_l,
                        delta_y,
                        delta_psi,
                        feasible: d.feasible,
                        collision: in_collision(id),
                    }
                }
                Agent::Hdv(script) => {
                    let a = script.accel(t);
                    inputs.push(ControlInput::new(a, 0.0));
                    LogRow {
                        t,
                        id: names[id].clone(),
                        x: s.x,
                        y: s.y,
                        psi: s.psi,
                        v: s.v,
                        a,
                        beta: 0.0,
                        fsm_state: None,
                        h_fc: None,
                        h_ft: None,
                        h_bt: None,
                        delta_l: None,
                        delta_y: None,
                        delta_psi: None,
                        feasible: true,
                        collision: in_collision(id),
                    }
                }
            };
            log.rows.push(row);
        }

        let t_next = (k + 1) as f64 * config.dt;
        for (id, agent) in agents.iter().enumerate() {
            states[id] = match agent {
                Agent::Cav => step(&snapshot[id], &inputs[id], config.dt, geom),
                Agent::Hdv(script) => script.state(t_next, lanes),
            };
        }
    }

    for w in &coordinator.warnings {
        warn!("{w}");
    }
    let named = |(a, b): (usize, usize)| (names[a].clone(), names[b].clone());
    let report = CollisionReport {
        occurred: first_time.is_some(),
        first_time,
        pair: pairs.first().copied().map(named),
        pairs: pairs.into_iter().map(named).collect(),
        min_ttc,
    };
    Ok(RunOutput {
        log,
        report,
        transitions,
        warnings: coordinator.warnings.clone(),
    })
}
