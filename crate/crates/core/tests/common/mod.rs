//! Independent oracles and generators shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use platoon::certificates::{
    barrier_front, barrier_front_value, barrier_overlap_front, barrier_overlap_front_value,
    barrier_overlap_rear, barrier_overlap_rear_value, barrier_rear, barrier_rear_value,
    clf_heading, clf_heading_value, clf_lateral, clf_lateral_value, clf_longitudinal,
    clf_longitudinal_value, clf_speed, CbfParams, Certificate, ClfParams, NeighborObservation,
    NeighborSlot, Side,
};
use platoon::controller::Variant;
use platoon::qp::{kkt_check, solve, QpProblem, QpRow, QpStatus};
use platoon::sim::{run, CavSpec, HdvScript, HdvSpec, RunOutput, ScenarioConfig, SpeedSegment};
use platoon::vehicle::{control_matrix, drift, VehicleGeometry, VehicleState};

// ---------------------------------------------------------------- QP oracles

/// Upper-form data `A x <= b` of a problem.
fn upper_form(p: &QpProblem) -> (Vec<DVector<f64>>, Vec<f64>) {
    p.rows.iter().map(|r| r.as_upper()).unzip()
}

/// Exact non-emptiness of `{x : A x <= b}`.
///
/// A non-empty polyhedron has a minimal face `{A_S x = b_S}` with `A_S` of
/// full row rank `rank(A)`, so it suffices to try every such row subset and
/// test one point of the face against all rows.
pub fn feasible_by_enumeration(p: &QpProblem) -> bool {
    let n = p.dim();
    let (a, b) = upper_form(p);
    let m = a.len();
    let tol = 1e-9;
    let nonzero: Vec<usize> = (0..m).filter(|&i| a[i].amax() > 0.0).collect();
    for i in 0..m {
        if a[i].amax() == 0.0 && b[i] < -tol {
            return false;
        }
    }
    if nonzero.is_empty() {
        return true;
    }
    let full = DMatrix::from_fn(nonzero.len(), n, |i, j| a[nonzero[i]][j]);
    let rank = full.rank(1e-12);
    let check = |x: &DVector<f64>| (0..m).all(|i| a[i].dot(x) <= b[i] + tol);
    let mut found = false;
    for_each_subset(nonzero.len(), rank, &mut |sub| {
        if found {
            return;
        }
        let rows: Vec<usize> = sub.iter().map(|&k| nonzero[k]).collect();
        let a_s = DMatrix::from_fn(rows.len(), n, |i, j| a[rows[i]][j]);
        if a_s.rank(1e-12) < rank {
            return;
        }
        let b_s = DVector::from_iterator(rows.len(), rows.iter().map(|&r| b[r]));
        // least-norm point of the face
        let gram = &a_s * a_s.transpose();
        let Some(y) = gram.lu().solve(&b_s) else { return };
        let x = a_s.transpose() * y;
        if check(&x) {
            found = true;
        }
    });
    found
}

fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Optimal value of a feasible strictly convex QP by accelerated projected
/// gradient on its dual `min_{l >= 0} 1/2 l'Ml + r'l` with
/// `M = A P^-1 A'`, `r = A P^-1 q + b`. Returns the primal optimum
/// `-(1/2 q'P^-1 q) - min`.
pub fn projected_gradient_value(p: &QpProblem) -> f64 {
    let (a_rows, b) = upper_form(p);
    let m = a_rows.len();
    let pinv = p.p.clone().try_inverse().expect("P invertible");
    let base = -0.5 * p.q.dot(&(&pinv * &p.q));
    if m == 0 {
        return base;
    }
    let a = DMatrix::from_fn(m, p.dim(), |i, j| a_rows[i][j]);
    let mm_mat = &a * &pinv * a.transpose();
    let r_vec = &a * &pinv * &p.q + DVector::from_column_slice(&b);
    let lip = mm_mat.symmetric_eigenvalues().amax().max(1e-12);
    let step = 1.0 / lip;
    let mm: Vec<f64> = (0..m * m).map(|k| mm_mat[(k / m, k % m)]).collect();
    let r: Vec<f64> = r_vec.iter().copied().collect();

    let grad = |l: &[f64], g: &mut [f64]| {
        for i in 0..m {
            let mut s = r[i];
            for j in 0..m {
                s += mm[i * m + j] * l[j];
            }
            g[i] = s;
        }
    };
    let dual = |l: &[f64]| {
        let mut f = 0.0;
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..m {
                s += mm[i * m + j] * l[j];
            }
            f += l[i] * (0.5 * s + r[i]);
        }
        f
    };

    let mut l = vec![0.0; m];
    let mut y = l.clone();
    let mut next = l.clone();
    let mut g = l.clone();
    let mut t = 1.0_f64;
    let mut f_l = dual(&l);
    for _ in 0..1_000_000 {
        grad(&y, &mut g);
        for i in 0..m {
            next[i] = (y[i] - step * g[i]).max(0.0);
        }
        let f_next = dual(&next);
        if f_next > f_l && t > 1.0 {
            // adaptive restart
            y.copy_from_slice(&l);
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let w = (t - 1.0) / t_next;
        for i in 0..m {
            y[i] = next[i] + w * (next[i] - l[i]);
        }
        t = t_next;
        l.copy_from_slice(&next);
        f_l = f_next;
        // projected-gradient residual at l
        grad(&l, &mut g);
        let res = (0..m)
            .map(|i| (l[i] - (l[i] - g[i]).max(0.0)).abs())
            .fold(0.0, f64::max);
        let scale = l.iter().chain(r.iter()).fold(1.0_f64, |acc, v| acc.max(v.abs()));
        if res < 1e-11 * scale {
            break;
        }
    }
    base - f_l
}

/// Strictly convex problem with `P = M'M + I`, entries of `M`, `q`, rows and
/// right-hand sides uniform in `[-5, 5]`.
pub fn random_qp(rng: &mut ChaCha8Rng, max_dim: usize, max_rows: usize) -> QpProblem {
    let n = rng.gen_range(1..=max_dim);
    let m = rng.gen_range(0..=max_rows);
    let mut u = || rng.gen_range(-5.0..5.0);
    let mat = DMatrix::from_fn(n, n, |_, _| u());
    let mut p = mat.transpose() * &mat + DMatrix::identity(n, n);
    p = (&p + p.transpose()) * 0.5;
    let q = DVector::from_fn(n, |_, _| u());
    let mut problem = QpProblem::new(p, q);
    for _ in 0..m {
        let c: Vec<f64> = (0..n).map(|_| u()).collect();
        let rhs = u();
        let row = if u() > 0.0 {
            QpRow::le(&c, rhs)
        } else {
            QpRow::ge(&c, rhs)
        };
        problem = problem.with_row(row);
    }
    problem
}

#[derive(Debug, Default)]
pub struct QpOracleReport {
    pub optimal: usize,
    pub infeasible: usize,
    pub worst_objective_gap: f64,
    pub worst_stationarity: f64,
    pub kkt_failures: usize,
    pub status_disagreements: usize,
}

/// Objective/KKT comparison against the projected-gradient oracle.
pub fn qp_objective_suite(seed: u64, count: usize) -> QpOracleReport {
    let mut rng = seeded(seed);
    let mut rep = QpOracleReport::default();
    for _ in 0..count {
        let problem = random_qp(&mut rng, 6, 8);
        let sol = solve(&problem).expect("valid problem");
        let feasible = feasible_by_enumeration(&problem);
        match sol.status {
            QpStatus::Optimal => {
                rep.optimal += 1;
                if !feasible {
                    rep.status_disagreements += 1;
                }
                let k = kkt_check(&problem, &sol);
                if !k.passed() {
                    rep.kkt_failures += 1;
                }
                rep.worst_stationarity = rep.worst_stationarity.max(k.stationarity);
                let oracle = projected_gradient_value(&problem);
                // objectives reach 1e5 on these instances; compare relative
                // to max(1, |f|)
                let gap = (oracle - sol.objective).abs() / sol.objective.abs().max(1.0);
                rep.worst_objective_gap = rep.worst_objective_gap.max(gap);
            }
            QpStatus::Infeasible => {
                rep.infeasible += 1;
                if feasible {
                    rep.status_disagreements += 1;
                }
            }
        }
    }
    rep
}

/// Infeasibility agreement with vertex enumeration on `dim <= 3`.
pub fn qp_infeasibility_suite(seed: u64, count: usize) -> (usize, usize, usize) {
    let mut rng = seeded(seed);
    let (mut agree, mut infeasible) = (0, 0);
    for _ in 0..count {
        let problem = random_qp(&mut rng, 3, 8);
        let sol = solve(&problem).expect("valid problem");
        let oracle = feasible_by_enumeration(&problem);
        if oracle == sol.is_optimal() {
            agree += 1;
        }
        if !oracle {
            infeasible += 1;
        }
    }
    (agree, infeasible, count)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

// ------------------------------------------------------ certificate oracles

/// Relative error with a unit floor on the denominator.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// A certificate under test: the analytic linearisation and the raw value as
/// a function of ego state and neighbour.
pub struct CertCase {
    pub name: &'static str,
    pub analytic: Box<dyn Fn(&VehicleState, &NeighborObservation) -> Certificate>,
    pub value: Box<dyn Fn(&VehicleState, &NeighborObservation) -> f64>,
    /// Which branch a sample falls in, for coverage accounting.
    pub branch: Box<dyn Fn(&VehicleState, &NeighborObservation) -> usize>,
    pub branches: usize,
}

pub fn certificate_cases() -> Vec<CertCase> {
    let geom = VehicleGeometry::default();
    let clf = ClfParams {
        alpha1: 0.7,
        alpha2: 0.3,
        ..ClfParams::default()
    };
    let cbf = CbfParams {
        eps_x: 0.2,
        a_max: 7.0,
        ..CbfParams::default()
    };
    let tau = 0.9;
    let rate = 1.3;
    let speed_branch = |e: &VehicleState, n: &NeighborObservation| (e.v >= n.v) as usize;
    vec![
        CertCase {
            name: "clf_longitudinal",
            analytic: Box::new(move |e, n| clf_longitudinal(e, Some(n), tau, &clf, &geom, rate).unwrap()),
            value: Box::new(move |e, n| clf_longitudinal_value(e, n, tau, &clf, &geom)),
            branch: Box::new(|_, _| 0),
            branches: 1,
        },
        CertCase {
            name: "clf_speed",
            analytic: Box::new(move |e, _| clf_speed(e, &clf, &geom, rate)),
            value: Box::new(move |e, _| clf.alpha1 * (e.v - clf.v_d).powi(2)),
            branch: Box::new(|_, _| 0),
            branches: 1,
        },
        CertCase {
            name: "clf_lateral",
            analytic: Box::new(move |e, _| clf_lateral(e, &clf, &geom, rate)),
            value: Box::new(move |e, _| clf_lateral_value(e, &clf)),
            branch: Box::new(|_, _| 0),
            branches: 1,
        },
        CertCase {
            name: "clf_heading",
            analytic: Box::new(move |e, _| clf_heading(e, &geom, rate)),
            value: Box::new(|e, _| clf_heading_value(e)),
            branch: Box::new(|_, _| 0),
            branches: 1,
        },
        CertCase {
            name: "barrier_front",
            analytic: Box::new(move |e, n| barrier_front(e, Some(n), &cbf, &geom).unwrap()),
            value: Box::new(move |e, n| barrier_front_value(e, n, &cbf)),
            branch: Box::new(speed_branch),
            branches: 2,
        },
        CertCase {
            name: "barrier_rear",
            analytic: Box::new(move |e, n| barrier_rear(e, Some(n), &cbf, &geom).unwrap()),
            value: Box::new(move |e, n| barrier_rear_value(e, n, &cbf)),
            branch: Box::new(|e, n| (n.v >= e.v) as usize),
            branches: 2,
        },
        CertCase {
            name: "barrier_overlap_front",
            analytic: Box::new(move |e, n| barrier_overlap_front(e, Some(n), &cbf, Side::Left, &geom).unwrap()),
            value: Box::new(move |e, n| barrier_overlap_front_value(e, n, &cbf, Side::Left)),
            branch: Box::new(|e, n| (n.x - e.x >= 0.0) as usize),
            branches: 2,
        },
        CertCase {
            name: "barrier_overlap_rear",
            analytic: Box::new(move |e, n| barrier_overlap_rear(e, Some(n), &cbf, Side::Right, &geom).unwrap()),
            value: Box::new(move |e, n| barrier_overlap_rear_value(e, n, &cbf, Side::Right)),
            branch: Box::new(|e, n| (e.x - n.x >= 0.0) as usize),
            branches: 2,
        },
    ]
}

/// Random ego/neighbour pair. The neighbour sits at least 0.5 m away from
/// the ego longitudinally so the finite-difference stencil never straddles
/// the position switch of the overlap barriers.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (VehicleState, NeighborObservation) {
    let ego = VehicleState::new(
        rng.gen_range(-50.0..50.0),
        rng.gen_range(0.0..10.8),
        rng.gen_range(-0.3..0.3),
        rng.gen_range(1.0..40.0),
    );
    let mut dx: f64 = rng.gen_range(-60.0..60.0);
    if dx.abs() < 0.5 {
        dx = 0.5_f64.copysign(dx);
    }
    let mut nv: f64 = rng.gen_range(1.0..40.0);
    if (nv - ego.v).abs() < 1e-3 {
        nv += 0.01;
    }
    let n = NeighborObservation::from_state(
        7,
        2,
        NeighborSlot::FrontTarget,
        &VehicleState::new(ego.x + dx, rng.gen_range(0.0..10.8), rng.gen_range(-0.2..0.2), nv),
    );
    (ego, n)
}

#[derive(Debug, Default, Clone)]
pub struct DerivativeReport {
    pub name: &'static str,
    pub worst: f64,
    pub branch_hits: Vec<usize>,
}

fn shifted(s: &VehicleState, d: &nalgebra::Vector4<f64>, h: f64) -> VehicleState {
    VehicleState::from_vector(&(s.as_vector() + d * h))
}

/// Central differences of each certificate along both input channels, the
/// drift and the neighbour's constant-velocity motion.
pub fn derivative_suite(seed: u64, samples: usize) -> Vec<DerivativeReport> {
    let geom = VehicleGeometry::default();
    let h = 1e-5;
    let mut out = Vec::new();
    for case in certificate_cases() {
        let mut rng = seeded(seed);
        let mut rep = DerivativeReport {
            name: case.name,
            worst: 0.0,
            branch_hits: vec![0; case.branches],
        };
        let mut n_done = 0;
        while n_done < samples {
            let (ego, n) = random_pair(&mut rng);
            // keep the speed switch of the closing penalty off the stencil
            if (ego.v - n.v).abs() < 1e-3 {
                continue;
            }
            n_done += 1;
            rep.branch_hits[(case.branch)(&ego, &n)] += 1;
            let c = (case.analytic)(&ego, &n);
            let f = |s: &VehicleState, nb: &NeighborObservation| (case.value)(s, nb);
            let g = control_matrix(&ego, &geom);
            let dir_fd = |d: nalgebra::Vector4<f64>| {
                (f(&shifted(&ego, &d, h), &n) - f(&shifted(&ego, &d, -h), &n)) / (2.0 * h)
            };
            let fd_a = dir_fd(g.column(0).into_owned());
            let fd_b = dir_fd(g.column(1).into_owned());
            let fd_f = dir_fd(drift(&ego));
            // neighbours advance along x at v and along y at v sin(psi)
            let along = |dt: f64| {
                let mut m = n;
                m.x += n.v * dt;
                m.y += n.lateral_speed() * dt;
                m
            };
            let fd_t = (f(&ego, &along(h)) - f(&ego, &along(-h))) / (2.0 * h);
            let lg_a = c.row.coeff_a;
            let lg_b = c.row.coeff_beta;
            // value consistency too
            let worst = [
                rel_err(lg_a, fd_a),
                rel_err(lg_b, fd_b),
                rel_err(c.lie_f, fd_f),
                rel_err(c.partial_t, fd_t),
                rel_err(c.value, f(&ego, &n)),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            rep.worst = rep.worst.max(worst);
        }
        out.push(rep);
    }
    out
}

// ------------------------------------------------------------ ACC harness

/// One CAV following one scripted lead vehicle with a braking pulse.
pub struct AccCase {
    pub gap: f64,
    pub v_ego: f64,
    pub v_lead: f64,
    pub pulse_start: f64,
    pub pulse_accel: f64,
    pub pulse_len: f64,
}

pub fn acc_config(case: &AccCase) -> ScenarioConfig {
    let mut c = platoon::sim::scenario_preset("cutin").unwrap();
    c.name = "acc".into();
    c.duration = 15.0;
    c.variant = Variant::ClfCbfQp;
    c.cavs = vec![CavSpec {
        name: "CAV1".into(),
        x: 0.0,
        lane: 0,
        v: case.v_ego,
        command: 0,
    }];
    let recover = (case.v_lead).max(0.0);
    c.hdvs = vec![HdvSpec {
        name: "LEAD".into(),
        script: HdvScript {
            segments: vec![
                SpeedSegment {
                    start: case.pulse_start,
                    accel: case.pulse_accel,
                    target: None,
                },
                SpeedSegment {
                    start: case.pulse_start + case.pulse_len,
                    accel: 2.0,
                    target: Some(recover),
                },
            ],
            ..HdvScript::cruising(case.gap, 0, case.v_lead)
        },
    }];
    c
}

/// `max_brake` bounds the magnitude of the lead vehicle's braking pulse.
pub fn random_acc_case(rng: &mut ChaCha8Rng, max_brake: f64) -> AccCase {
    AccCase {
        gap: rng.gen_range(10.0..80.0),
        v_ego: rng.gen_range(15.0..35.0),
        v_lead: rng.gen_range(15.0..35.0),
        pulse_start: rng.gen_range(0.5..5.0),
        pulse_accel: -rng.gen::<f64>() * max_brake,
        pulse_len: rng.gen_range(0.2..3.0),
    }
}

#[derive(Debug, Default)]
pub struct InvarianceReport {
    pub runs: usize,
    pub fully_feasible: usize,
    pub min_h: f64,
    pub collisions: usize,
}

/// Randomised ACC runs that start inside the safe set.
pub fn forward_invariance_suite(seed: u64, runs: usize, max_brake: f64) -> InvarianceReport {
    let mut rng = seeded(seed);
    let mut rep = InvarianceReport {
        min_h: f64::INFINITY,
        ..Default::default()
    };
    while rep.runs < runs {
        let case = random_acc_case(&mut rng, max_brake);
        let config = acc_config(&case);
        let ego = VehicleState::new(0.0, 1.8, 0.0, case.v_ego);
        let lead = NeighborObservation::from_state(
            1,
            1,
            NeighborSlot::FrontCurrent,
            &VehicleState::new(case.gap, 1.8, 0.0, case.v_lead),
        );
        if barrier_front_value(&ego, &lead, &config.cbf) < 0.0 {
            continue;
        }
        rep.runs += 1;
        let out = run(&config).expect("run");
        if out.log.first_infeasible().is_some() {
            continue;
        }
        rep.fully_feasible += 1;
        if out.report.occurred {
            rep.collisions += 1;
        }
        for r in out.log.rows_for("CAV1") {
            if let Some(h) = r.h_fc {
                rep.min_h = rep.min_h.min(h);
            }
        }
    }
    rep
}


/// Two-CAV platoon with no HDVs, 0.6 s apart; the head changes lanes.
pub fn two_cav_split() -> ScenarioConfig {
    let mut c = platoon::sim::scenario_preset("cutin").unwrap();
    let gap = 0.6 * 25.0 + c.geometry.length();
    c.hdvs.clear();
    c.cavs = vec![
        CavSpec { name: "CAV1".into(), x: 100.0, lane: 0, v: 25.0, command: 1 },
        CavSpec { name: "CAV2".into(), x: 100.0 - gap, lane: 0, v: 25.0, command: 0 },
    ];
    c
}

/// Largest realised time gap of the splitting CAV within `window` seconds
/// of entering Split, or `None` if it never splits.
pub fn best_split_gap(out: &RunOutput, lead: &str, follower: &str, window: f64, length: f64) -> Option<f64> {
    let start = out
        .transitions_of(follower)
        .iter()
        .find(|e| e.to == platoon::coordination::FsmState::Split)?
        .t;
    Some(
        out.log
            .rows_for(follower)
            .zip(out.log.rows_for(lead))
            .filter(|(b, _)| b.t >= start && b.t <= start + window)
            .map(|(b, a)| (a.x - b.x - length) / b.v)
            .fold(f64::NEG_INFINITY, f64::max),
    )
}
