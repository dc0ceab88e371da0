//! Control Lyapunov and control barrier functions for one CAV.
//!
//! Every certificate is evaluated against the ego state and (for barriers)
//! one observed neighbour, and is linearised in the ego input `[a, beta]`:
//!
//! ```text
//!     CLF:  L_f V + dV/dt + L_g V u <= -alpha V + delta
//!     CBF:  dh/dt + L_f h + L_g h u >= -gamma h
//! ```
//!
//! Neighbours are modelled as constant-velocity over one controller tick, so
//! their motion enters through the explicit time derivative (`partial_t`).
//! Longitudinal barriers use the neighbour's measured position; the
//! `(1 + eps_x) v` term is a headway with an implicit one-second time
//! constant.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordination::FsmState;
use crate::vehicle::{control_matrix, drift, VehicleGeometry, VehicleState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("no {0:?} neighbour observed")]
    MissingNeighbor(NeighborSlot),
}

/// Relative position of an observed vehicle with respect to the ego CAV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NeighborSlot {
    /// Front vehicle in the current lane.
    FrontCurrent,
    /// Front vehicle in the target lane.
    FrontTarget,
    /// Back vehicle in the target lane.
    BackTarget,
    /// Platoon member the ego keeps distance to during split/join.
    PlatoonPeer,
}

/// Lateral direction of a lane change. `Left` moves towards larger `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn from_command(c: i8) -> Option<Side> {
        match c {
            1 => Some(Side::Left),
            -1 => Some(Side::Right),
            _ => None,
        }
    }
}

/// A sensed (or V2V-shared) vehicle. `ego_index` and `slot` form the index
/// pair `(i, j)` of the observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborObservation {
    pub vehicle_id: usize,
    pub ego_index: usize,
    pub slot: NeighborSlot,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

impl NeighborObservation {
    pub fn from_state(
        vehicle_id: usize,
        ego_index: usize,
        slot: NeighborSlot,
        s: &VehicleState,
    ) -> Self {
        Self {
            vehicle_id,
            ego_index,
            slot,
            x: s.x,
            y: s.y,
            psi: s.psi,
            v: s.v,
        }
    }

    pub fn with_slot(mut self, slot: NeighborSlot) -> Self {
        self.slot = slot;
        self
    }

    pub fn lateral_speed(&self) -> f64 {
        self.v * self.psi.sin()
    }
}

/// The disturbance seen by one CAV: nearest front vehicle in its lane and the
/// nearest front/back vehicles in its target lane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Neighborhood {
    pub fc: Option<NeighborObservation>,
    pub ft: Option<NeighborObservation>,
    pub bt: Option<NeighborObservation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClfParams {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Desired speed (m/s).
    pub v_d: f64,
    /// Desired lateral position (m).
    pub y_d: f64,
    /// Standstill spacing gap (m).
    pub s_0: f64,
    /// Track the leader's speed instead of `v_d` whenever a leader exists.
    #[serde(default = "default_true")]
    pub match_leader_speed: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ClfParams {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            v_d: 27.5,
            y_d: 1.8,
            s_0: 2.0,
            match_leader_speed: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbfParams {
    /// Longitudinal safety factor in `[0, 1]`.
    pub eps_x: f64,
    /// Lateral safety margin (m).
    pub eps_y: f64,
    /// Braking capability assumed in the stopping-distance term (m/s^2).
    pub a_max: f64,
    pub gamma_fc: f64,
    pub gamma_ft: f64,
    pub gamma_bt: f64,
}

impl Default for CbfParams {
    fn default() -> Self {
        Self {
            eps_x: 0.2,
            eps_y: 0.5,
            a_max: 9.0,
            gamma_fc: 1.0,
            gamma_ft: 1.0,
            gamma_bt: 1.0,
        }
    }
}

impl CbfParams {
    pub fn gamma(&self, slot: NeighborSlot) -> f64 {
        match slot {
            NeighborSlot::FrontCurrent | NeighborSlot::PlatoonPeer => self.gamma_fc,
            NeighborSlot::FrontTarget => self.gamma_ft,
            NeighborSlot::BackTarget => self.gamma_bt,
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.eps_x)
            && self.eps_y > 0.0
            && self.a_max > 0.0
            && self.gamma_fc > 0.0
            && self.gamma_ft > 0.0
            && self.gamma_bt > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    LessEq,
    GreaterEq,
}

/// Which certificate produced a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowLabel {
    ClfLongitudinal,
    ClfLateral,
    ClfHeading,
    Barrier(NeighborSlot),
    InputBound,
}

/// Linear constraint on the ego input:
/// `coeff_a * a + coeff_beta * beta  (sense)  rhs + coeff_slack * delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub coeff_a: f64,
    pub coeff_beta: f64,
    pub coeff_slack: f64,
    pub rhs: f64,
    pub sense: Sense,
    pub label: RowLabel,
}

impl ConstraintRow {
    /// Signed satisfaction margin at `(a, beta, delta)`: non-negative iff the
    /// row holds.
    pub fn margin(&self, a: f64, beta: f64, delta: f64) -> f64 {
        let lhs = self.coeff_a * a + self.coeff_beta * beta;
        let bound = self.rhs + self.coeff_slack * delta;
        match self.sense {
            Sense::LessEq => bound - lhs,
            Sense::GreaterEq => lhs - bound,
        }
    }
}

/// A certificate value together with its linearisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub value: f64,
    /// Gradient of the certificate with respect to the ego state `[x, y, psi, v]`.
    pub grad: Vector4<f64>,
    /// `L_f` of the certificate.
    pub lie_f: f64,
    /// Explicit time derivative from the neighbour's motion.
    pub partial_t: f64,
    pub row: ConstraintRow,
}

fn clf_certificate(
    value: f64,
    grad: Vector4<f64>,
    partial_t: f64,
    ego: &VehicleState,
    geom: &VehicleGeometry,
    rate: f64,
    label: RowLabel,
) -> Certificate {
    let lie_f = grad.dot(&drift(ego));
    let lg = grad.transpose() * control_matrix(ego, geom);
    Certificate {
        value,
        grad,
        lie_f,
        partial_t,
        row: ConstraintRow {
            coeff_a: lg[0],
            coeff_beta: lg[1],
            coeff_slack: 1.0,
            rhs: -rate * value - lie_f - partial_t,
            sense: Sense::LessEq,
            label,
        },
    }
}

fn cbf_certificate(
    value: f64,
    grad: Vector4<f64>,
    partial_t: f64,
    ego: &VehicleState,
    geom: &VehicleGeometry,
    gamma: f64,
    slot: NeighborSlot,
) -> Certificate {
    let lie_f = grad.dot(&drift(ego));
    let lg = grad.transpose() * control_matrix(ego, geom);
    Certificate {
        value,
        grad,
        lie_f,
        partial_t,
        row: ConstraintRow {
            coeff_a: lg[0],
            coeff_beta: lg[1],
            coeff_slack: 0.0,
            rhs: -gamma * value - lie_f - partial_t,
            sense: Sense::GreaterEq,
            label: RowLabel::Barrier(slot),
        },
    }
}

/// Spacing gap `s = x_leader - x - L` to a leader.
pub fn spacing_gap(ego: &VehicleState, leader: &NeighborObservation, geom: &VehicleGeometry) -> f64 {
    leader.x - ego.x - geom.length()
}

/// Longitudinal CLF value `alpha1 (v - v_d)^2 + alpha2 (s - s_d)^2`,
/// `s_d = s_0 + v tau`.
pub fn clf_longitudinal_value(
    ego: &VehicleState,
    leader: &NeighborObservation,
    tau: f64,
    params: &ClfParams,
    geom: &VehicleGeometry,
) -> f64 {
    let ev = ego.v - params.v_d;
    let es = spacing_gap(ego, leader, geom) - (params.s_0 + ego.v * tau);
    params.alpha1 * ev * ev + params.alpha2 * es * es
}

pub fn clf_longitudinal(
    ego: &VehicleState,
    leader: Option<&NeighborObservation>,
    tau: f64,
    params: &ClfParams,
    geom: &VehicleGeometry,
    rate: f64,
) -> Result<Certificate, CertificateError> {
    let leader = leader.ok_or(CertificateError::MissingNeighbor(NeighborSlot::PlatoonPeer))?;
    let ev = ego.v - params.v_d;
    let es = spacing_gap(ego, leader, geom) - (params.s_0 + ego.v * tau);
    let value = params.alpha1 * ev * ev + params.alpha2 * es * es;
    let grad = Vector4::new(
        -2.0 * params.alpha2 * es,
        0.0,
        0.0,
        2.0 * params.alpha1 * ev - 2.0 * params.alpha2 * es * tau,
    );
    let partial_t = 2.0 * params.alpha2 * es * leader.v;
    Ok(clf_certificate(
        value,
        grad,
        partial_t,
        ego,
        geom,
        rate,
        RowLabel::ClfLongitudinal,
    ))
}

/// Pure speed tracking `alpha1 (v - v_d)^2`, used when no leader exists.
pub fn clf_speed(
    ego: &VehicleState,
    params: &ClfParams,
    geom: &VehicleGeometry,
    rate: f64,
) -> Certificate {
    let ev = ego.v - params.v_d;
    let value = params.alpha1 * ev * ev;
    let grad = Vector4::new(0.0, 0.0, 0.0, 2.0 * params.alpha1 * ev);
    clf_certificate(value, grad, 0.0, ego, geom, rate, RowLabel::ClfLongitudinal)
}

pub fn clf_lateral_value(ego: &VehicleState, params: &ClfParams) -> f64 {
    let e = ego.y - params.y_d;
    e * e
}

pub fn clf_lateral(
    ego: &VehicleState,
    params: &ClfParams,
    geom: &VehicleGeometry,
    rate: f64,
) -> Certificate {
    let e = ego.y - params.y_d;
    let grad = Vector4::new(0.0, 2.0 * e, 0.0, 0.0);
    clf_certificate(e * e, grad, 0.0, ego, geom, rate, RowLabel::ClfLateral)
}

pub fn clf_heading_value(ego: &VehicleState) -> f64 {
    ego.psi * ego.psi
}

pub fn clf_heading(ego: &VehicleState, geom: &VehicleGeometry, rate: f64) -> Certificate {
    let grad = Vector4::new(0.0, 0.0, 2.0 * ego.psi, 0.0);
    clf_certificate(
        ego.psi * ego.psi,
        grad,
        0.0,
        ego,
        geom,
        rate,
        RowLabel::ClfHeading,
    )
}

/// Stopping-distance penalty `(v_fast - v_slow)^2 / (2 a_max)` applied only
/// while the follower is at least as fast as the vehicle it follows.
fn closing_penalty(follower_v: f64, leader_v: f64, a_max: f64) -> f64 {
    if follower_v >= leader_v {
        let dv = leader_v - follower_v;
        dv * dv / (2.0 * a_max)
    } else {
        0.0
    }
}

/// Barrier keeping the ego behind `front`.
pub fn barrier_front_value(
    ego: &VehicleState,
    front: &NeighborObservation,
    params: &CbfParams,
) -> f64 {
    (front.x - ego.x)
        - (1.0 + params.eps_x) * ego.v
        - closing_penalty(ego.v, front.v, params.a_max)
}

pub fn barrier_front(
    ego: &VehicleState,
    front: Option<&NeighborObservation>,
    params: &CbfParams,
    geom: &VehicleGeometry,
) -> Result<Certificate, CertificateError> {
    let front = front.ok_or(CertificateError::MissingNeighbor(NeighborSlot::FrontCurrent))?;
    Ok(front_certificate(ego, front, params, geom))
}

fn front_certificate(
    ego: &VehicleState,
    front: &NeighborObservation,
    params: &CbfParams,
    geom: &VehicleGeometry,
) -> Certificate {
    let dv_term = if ego.v >= front.v {
        (front.v - ego.v) / params.a_max
    } else {
        0.0
    };
    let grad = Vector4::new(-1.0, 0.0, 0.0, -(1.0 + params.eps_x) + dv_term);
    cbf_certificate(
        barrier_front_value(ego, front, params),
        grad,
        front.v,
        ego,
        geom,
        params.gamma(front.slot),
        front.slot,
    )
}

/// Barrier keeping `rear` behind the ego.
pub fn barrier_rear_value(
    ego: &VehicleState,
    rear: &NeighborObservation,
    params: &CbfParams,
) -> f64 {
    (ego.x - rear.x)
        - (1.0 + params.eps_x) * rear.v
        - closing_penalty(rear.v, ego.v, params.a_max)
}

pub fn barrier_rear(
    ego: &VehicleState,
    rear: Option<&NeighborObservation>,
    params: &CbfParams,
    geom: &VehicleGeometry,
) -> Result<Certificate, CertificateError> {
    let rear = rear.ok_or(CertificateError::MissingNeighbor(NeighborSlot::BackTarget))?;
    Ok(rear_certificate(ego, rear, params, geom))
}

fn rear_certificate(
    ego: &VehicleState,
    rear: &NeighborObservation,
    params: &CbfParams,
    geom: &VehicleGeometry,
) -> Certificate {
    let dv_term = if rear.v >= ego.v {
        (rear.v - ego.v) / params.a_max
    } else {
        0.0
    };
    let grad = Vector4::new(1.0, 0.0, 0.0, dv_term);
    cbf_certificate(
        barrier_rear_value(ego, rear, params),
        grad,
        -rear.v,
        ego,
        geom,
        params.gamma(rear.slot),
        rear.slot,
    )
}

/// Lateral separation barrier `side * (y_n - y) - eps_y`.
pub fn barrier_lateral_value(
    ego: &VehicleState,
    other: &NeighborObservation,
    params: &CbfParams,
    side: Side,
) -> f64 {
    side.sign() * (other.y - ego.y) - params.eps_y
}

fn lateral_certificate(
    ego: &VehicleState,
    other: &NeighborObservation,
    params: &CbfParams,
    side: Side,
    geom: &VehicleGeometry,
) -> Certificate {
    let grad = Vector4::new(0.0, -side.sign(), 0.0, 0.0);
    cbf_certificate(
        barrier_lateral_value(ego, other, params, side),
        grad,
        side.sign() * other.lateral_speed(),
        ego,
        geom,
        params.gamma(other.slot),
        other.slot,
    )
}

/// Back-to-lane barrier against the front vehicle of the target lane:
/// longitudinal while it is ahead of the ego, lateral once the ego has
/// drawn level with or passed it.
pub fn barrier_overlap_front_value(
    ego: &VehicleState,
    front_target: &NeighborObservation,
    params: &CbfParams,
    side: Side,
) -> f64 {
    if front_target.x - ego.x >= 0.0 {
        barrier_front_value(ego, front_target, params)
    } else {
        barrier_lateral_value(ego, front_target, params, side)
    }
}

pub fn barrier_overlap_front(
    ego: &VehicleState,
    front_target: Option<&NeighborObservation>,
    params: &CbfParams,
    side: Side,
    geom: &VehicleGeometry,
) -> Result<Certificate, CertificateError> {
    let ft = front_target.ok_or(CertificateError::MissingNeighbor(NeighborSlot::FrontTarget))?;
    Ok(if ft.x - ego.x >= 0.0 {
        front_certificate(ego, ft, params, geom)
    } else {
        lateral_certificate(ego, ft, params, side, geom)
    })
}

/// Back-to-lane barrier against the back vehicle of the target lane.
pub fn barrier_overlap_rear_value(
    ego: &VehicleState,
    rear_target: &NeighborObservation,
    params: &CbfParams,
    side: Side,
) -> f64 {
    if ego.x - rear_target.x >= 0.0 {
        barrier_rear_value(ego, rear_target, params)
    } else {
        barrier_lateral_value(ego, rear_target, params, side)
    }
}

pub fn barrier_overlap_rear(
    ego: &VehicleState,
    rear_target: Option<&NeighborObservation>,
    params: &CbfParams,
    side: Side,
    geom: &VehicleGeometry,
) -> Result<Certificate, CertificateError> {
    let bt = rear_target.ok_or(CertificateError::MissingNeighbor(NeighborSlot::BackTarget))?;
    Ok(if ego.x - bt.x >= 0.0 {
        rear_certificate(ego, bt, params, geom)
    } else {
        lateral_certificate(ego, bt, params, side, geom)
    })
}

/// Barriers active in `state`. Absent neighbours contribute nothing.
///
/// `peer` is the platoon member the ego keeps distance to while splitting
/// (CAV `i-1`) or joining (CAV `i-2`); it is ignored in other states.
pub fn barrier_bundle(
    state: FsmState,
    ego: &VehicleState,
    neighborhood: &Neighborhood,
    peer: Option<&NeighborObservation>,
    params: &CbfParams,
    side: Side,
    geom: &VehicleGeometry,
) -> Vec<Certificate> {
    let fc = neighborhood.fc.as_ref();
    let ft = neighborhood.ft.as_ref();
    let bt = neighborhood.bt.as_ref();
    let peer = peer.map(|p| p.with_slot(NeighborSlot::PlatoonPeer));
    let rows = match state {
        FsmState::CarFollowing => vec![barrier_front(ego, fc, params, geom)],
        FsmState::LaneChange => vec![
            barrier_front(ego, fc, params, geom),
            barrier_front(ego, ft, params, geom),
            barrier_rear(ego, bt, params, geom),
        ],
        FsmState::BackToInitialLane => vec![
            barrier_front(ego, fc, params, geom),
            barrier_overlap_front(ego, ft, params, side, geom),
            barrier_overlap_rear(ego, bt, params, side, geom),
        ],
        FsmState::Split | FsmState::Join => vec![barrier_front(ego, peer.as_ref(), params, geom)],
    };
    rows.into_iter().filter_map(Result::ok).collect()
}
