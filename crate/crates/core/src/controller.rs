//! Lower-level CLF-CBF-QP controller.
//!
//! Per CAV and tick the decision vector is `[a, beta, d_l, d_y, d_psi]`:
//! the input plus one slack per CLF. The cost is
//! `1/2 u' H u + p_l d_l^2 + p_y d_y^2 + p_psi d_psi^2`, the CLF rows are
//! relaxed by their slack, the barrier rows and input bounds are hard.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certificates::{
    barrier_bundle, clf_heading, clf_lateral, clf_longitudinal, clf_speed, CbfParams,
    Certificate, ClfParams, ConstraintRow, Neighborhood, NeighborObservation, NeighborSlot,
    RowLabel, Sense, Side,
};
use crate::coordination::FsmState;
use crate::qp::{solve, QpError, QpProblem, QpRow, QpSolution};
use crate::vehicle::{ControlInput, VehicleGeometry, VehicleState};

/// Which controller drives the CAVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Full controller with platoon coordination.
    #[serde(rename = "clf-cbf-qp")]
    ClfCbfQp,
    /// Baseline without barriers: CLF rows and input bounds only.
    #[serde(rename = "clf-qp")]
    ClfQp,
    /// Barriers on, but every CAV acts alone (no split/join).
    #[serde(rename = "single-cbf")]
    SingleVehicleCbf,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::ClfCbfQp, Variant::ClfQp, Variant::SingleVehicleCbf];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::ClfCbfQp => "clf-cbf-qp",
            Variant::ClfQp => "clf-qp",
            Variant::SingleVehicleCbf => "single-cbf",
        }
    }

    pub fn uses_barriers(self) -> bool {
        !matches!(self, Variant::ClfQp)
    }

    pub fn cooperative(self) -> bool {
        !matches!(self, Variant::SingleVehicleCbf)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown controller `{s}` (expected clf-cbf-qp, clf-qp or single-cbf)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Input weight `H`, row-major, symmetric positive definite.
    pub h: [[f64; 2]; 2],
    pub p_l: f64,
    pub p_y: f64,
    pub p_psi: f64,
    /// Decay rates of the longitudinal, lateral and heading CLFs.
    pub alpha_l: f64,
    pub alpha_y: f64,
    pub alpha_psi: f64,
    /// Input bounds.
    pub a_max: f64,
    pub beta_max: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            h: [[1.0, 0.0], [0.0, 100.0]],
            p_l: 15.0,
            p_y: 0.05,
            p_psi: 400.0,
            alpha_l: 1.7,
            alpha_y: 0.6,
            alpha_psi: 18.0,
            a_max: 9.0,
            beta_max: 0.3,
        }
    }
}

impl ControllerParams {
    pub fn is_valid(&self) -> bool {
        let [[h00, h01], [h10, h11]] = self.h;
        let h_ok = h01 == h10 && h00 > 0.0 && h00 * h11 - h01 * h10 > 0.0;
        h_ok && [
            self.p_l,
            self.p_y,
            self.p_psi,
            self.alpha_l,
            self.alpha_y,
            self.alpha_psi,
            self.a_max,
            self.beta_max,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Everything the controller needs besides the tick inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub variant: Variant,
    pub qp: ControllerParams,
    pub clf: ClfParams,
    pub cbf: CbfParams,
    pub geom: VehicleGeometry,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            variant: Variant::ClfCbfQp,
            qp: ControllerParams::default(),
            clf: ClfParams::default(),
            cbf: CbfParams::default(),
            geom: VehicleGeometry::default(),
        }
    }
}

/// Per-tick inputs of one CAV's QP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Situation {
    pub ego: VehicleState,
    pub fsm: FsmState,
    pub neighborhood: Neighborhood,
    /// Spacing reference of the longitudinal CLF; speed tracking if absent.
    pub leader: Option<NeighborObservation>,
    /// Split/join barrier partner.
    pub peer: Option<NeighborObservation>,
    /// Desired time headway (s).
    pub tau: f64,
    /// Desired lateral position (m).
    pub y_d: f64,
    pub side: Side,
}

impl Situation {
    /// Lane keeping with no neighbours, for tests and examples.
    pub fn cruising(ego: VehicleState, y_d: f64) -> Self {
        Self {
            ego,
            fsm: FsmState::CarFollowing,
            neighborhood: Neighborhood::default(),
            leader: None,
            peer: None,
            tau: 0.6,
            y_d,
            side: Side::Left,
        }
    }
}

/// The assembled QP with the provenance of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub problem: QpProblem,
    /// One entry per QP row, in order.
    pub rows: Vec<ConstraintRow>,
    pub barriers: Vec<Certificate>,
}

pub const DIM: usize = 5;

fn box_rows(params: &ControllerParams) -> [ConstraintRow; 4] {
    let bound = |coeff_a, coeff_beta, rhs, sense| ConstraintRow {
        coeff_a,
        coeff_beta,
        coeff_slack: 0.0,
        rhs,
        sense,
        label: RowLabel::InputBound,
    };
    [
        bound(1.0, 0.0, params.a_max, Sense::LessEq),
        bound(1.0, 0.0, -params.a_max, Sense::GreaterEq),
        bound(0.0, 1.0, params.beta_max, Sense::LessEq),
        bound(0.0, 1.0, -params.beta_max, Sense::GreaterEq),
    ]
}

/// Slack column of a row in the decision vector.
fn slack_column(label: RowLabel) -> Option<usize> {
    match label {
        RowLabel::ClfLongitudinal => Some(2),
        RowLabel::ClfLateral => Some(3),
        RowLabel::ClfHeading => Some(4),
        _ => None,
    }
}

fn to_qp_row(row: &ConstraintRow) -> QpRow {
    let mut c = [0.0; DIM];
    c[0] = row.coeff_a;
    c[1] = row.coeff_beta;
    if let Some(k) = slack_column(row.label) {
        // lhs <= rhs + delta  <=>  lhs - delta <= rhs
        c[k] = -row.coeff_slack;
    }
    match row.sense {
        Sense::LessEq => QpRow::le(&c, row.rhs),
        Sense::GreaterEq => QpRow::ge(&c, row.rhs),
    }
}

/// Build the QP of one CAV.
pub fn assemble(situation: &Situation, config: &ControllerConfig) -> Assembly {
    let params = &config.qp;
    let geom = &config.geom;
    let v_d = match &situation.leader {
        Some(leader) if config.clf.match_leader_speed => leader.v,
        _ => config.clf.v_d,
    };
    let clf = ClfParams {
        y_d: situation.y_d,
        v_d,
        ..config.clf
    };
    let ego = &situation.ego;

    let longitudinal = clf_longitudinal(
        ego,
        situation.leader.as_ref(),
        situation.tau,
        &clf,
        geom,
        params.alpha_l,
    )
    .unwrap_or_else(|_| clf_speed(ego, &clf, geom, params.alpha_l));
    let mut rows = vec![
        longitudinal.row,
        clf_lateral(ego, &clf, geom, params.alpha_y).row,
        clf_heading(ego, geom, params.alpha_psi).row,
    ];

    let barriers = if config.variant.uses_barriers() {
        let peer = if config.variant.cooperative() {
            situation.peer.as_ref()
        } else {
            None
        };
        barrier_bundle(
            situation.fsm,
            ego,
            &situation.neighborhood,
            peer,
            &config.cbf,
            situation.side,
            geom,
        )
    } else {
        Vec::new()
    };
    rows.extend(barriers.iter().map(|b| b.row));
    rows.extend(box_rows(params));

    let [[h00, h01], [h10, h11]] = params.h;
    let mut p = DMatrix::zeros(DIM, DIM);
    p[(0, 0)] = h00;
    p[(0, 1)] = h01;
    p[(1, 0)] = h10;
    p[(1, 1)] = h11;
    p[(2, 2)] = 2.0 * params.p_l;
    p[(3, 3)] = 2.0 * params.p_y;
    p[(4, 4)] = 2.0 * params.p_psi;

    let mut problem = QpProblem::new(p, DVector::zeros(DIM));
    problem.rows = rows.iter().map(to_qp_row).collect();
    Assembly {
        problem,
        rows,
        barriers,
    }
}

/// Barrier values seen by one CAV, keyed by the neighbour slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BarrierValues {
    pub fc: Option<f64>,
    pub ft: Option<f64>,
    pub bt: Option<f64>,
    pub peer: Option<f64>,
}

impl BarrierValues {
    pub fn from_certificates(certs: &[Certificate]) -> Self {
        let mut out = Self::default();
        for c in certs {
            let slot = match c.row.label {
                RowLabel::Barrier(s) => s,
                _ => continue,
            };
            let v = Some(c.value);
            match slot {
                NeighborSlot::FrontCurrent => out.fc = v,
                NeighborSlot::FrontTarget => out.ft = v,
                NeighborSlot::BackTarget => out.bt = v,
                NeighborSlot::PlatoonPeer => out.peer = v,
            }
        }
        out
    }

    pub fn min(&self) -> Option<f64> {
        [self.fc, self.ft, self.bt, self.peer]
            .into_iter()
            .flatten()
            .reduce(f64::min)
    }
}

/// Outcome of one controller call.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub input: ControlInput,
    /// `[d_l, d_y, d_psi]`; zero when the QP was infeasible.
    pub slacks: [f64; 3],
    pub feasible: bool,
    pub barriers: BarrierValues,
    pub solution: Option<QpSolution>,
}

/// Solve the QP of one CAV. An infeasible QP falls back to full braking
/// with the steering that only stabilises the heading.
pub fn decide(situation: &Situation, config: &ControllerConfig) -> Result<Decision, QpError> {
    let assembly = assemble(situation, config);
    let barriers = BarrierValues::from_certificates(&assembly.barriers);
    let sol = solve(&assembly.problem)?;
    if sol.is_optimal() {
        let x = &sol.x;
        let p = &config.qp;
        let input = ControlInput::new(
            x[0].clamp(-p.a_max, p.a_max),
            x[1].clamp(-p.beta_max, p.beta_max),
        );
        return Ok(Decision {
            input,
            slacks: [x[2], x[3], x[4]],
            feasible: true,
            barriers,
            solution: Some(sol),
        });
    }
    let beta = heading_only_beta(&situation.ego, config)?;
    Ok(Decision {
        input: ControlInput::new(-config.qp.a_max, beta),
        slacks: [0.0; 3],
        feasible: false,
        barriers,
        solution: Some(sol),
    })
}

/// Slip angle from the heading CLF alone, over `[beta, d_psi]`.
fn heading_only_beta(ego: &VehicleState, config: &ControllerConfig) -> Result<f64, QpError> {
    let p = &config.qp;
    let row = clf_heading(ego, &config.geom, p.alpha_psi).row;
    let problem = QpProblem::new(
        DMatrix::from_diagonal(&DVector::from_column_slice(&[p.h[1][1], 2.0 * p.p_psi])),
        DVector::zeros(2),
    )
    .with_row(QpRow::le(&[row.coeff_beta, -1.0], row.rhs))
    .with_row(QpRow::le(&[1.0, 0.0], p.beta_max))
    .with_row(QpRow::ge(&[1.0, 0.0], -p.beta_max));
    let sol = solve(&problem)?;
    Ok(if sol.is_optimal() {
        sol.x[0].clamp(-p.beta_max, p.beta_max)
    } else {
        0.0
    })
}
