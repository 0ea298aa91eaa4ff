//! Independent reference implementations shared by the oracle and acceptance
//! test targets. Nothing here calls the library code under test except to
//! obtain the value being checked.

#![allow(dead_code)]

use cat_mppi::cat::{cat_weights, score_batch, survival, CatConfig, CatState};
use cat_mppi::costs::CostWeights;
use cat_mppi::geometry::{capsule_capsule_clearance, segment_segment_distance, Capsule, Pose};
use cat_mppi::mppi::{compute_weights, score_rollouts, RolloutBatch};
use cat_mppi::robot::se3::{se3_exp, se3_log};
use cat_mppi::robot::{JointSpec, RobotModel};
use nalgebra::{Matrix3, Translation3, Unit, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Outcome of one oracle suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: max error {:.3e} over {} cases (tolerance {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.max_error,
            self.cases,
            self.tolerance
        )
    }
}

fn random_point(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Segment pairs mixing generic, parallel, collinear, crossing and point cases.
fn random_segment_pair(rng: &mut ChaCha8Rng, i: usize) -> [Vector3<f64>; 4] {
    let a0 = random_point(rng, 1.0);
    let a1 = random_point(rng, 1.0);
    match i % 6 {
        0 => {
            let offset = random_point(rng, 0.5);
            let s = rng.random_range(-1.5..1.5);
            [a0, a1, a0 + offset, a0 + offset + (a1 - a0) * s]
        }
        1 => [a0, a0, random_point(rng, 1.0), random_point(rng, 1.0)],
        2 => {
            let s = rng.random_range(-1.0..2.0);
            let e = rng.random_range(-1.0..2.0);
            [a0, a1, a0 + (a1 - a0) * s, a0 + (a1 - a0) * e]
        }
        3 => {
            // Second segment passes through a point of the first.
            let p = a0 + (a1 - a0) * rng.random_range(0.0..1.0);
            let d = random_point(rng, 1.0);
            [a0, a1, p - d * rng.random_range(0.0..1.0), p + d * rng.random_range(0.0..1.0)]
        }
        4 => {
            let b0 = random_point(rng, 1.0);
            [a0, a1, b0, b0]
        }
        _ => [a0, a1, random_point(rng, 1.0), random_point(rng, 1.0)],
    }
}

/// Minimizes a convex function on `[0, 1]` by ternary search.
fn ternary_min(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..90 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi)).min(f(0.0)).min(f(1.0))
}

/// Segment distance from a parameter grid, refined by nested ternary search.
/// `|a(u) - b(v)|` is jointly convex, so its partial minimum over `v` is
/// convex in `u` and the nested search converges to the global minimum.
pub fn segment_distance_oracle(a0: &Vector3<f64>, a1: &Vector3<f64>, b0: &Vector3<f64>, b1: &Vector3<f64>) -> f64 {
    let at = |u: f64, v: f64| ((a0 + (a1 - a0) * u) - (b0 + (b1 - b0) * v)).norm();
    let mut best = f64::INFINITY;
    let n = 40;
    for i in 0..=n {
        for j in 0..=n {
            best = best.min(at(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    best.min(ternary_min(|u| ternary_min(|v| at(u, v))))
}

pub fn segment_suite(cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_error: f64 = 0.0;
    for i in 0..cases {
        let [a0, a1, b0, b1] = random_segment_pair(&mut rng, i);
        let got = segment_segment_distance(&a0, &a1, &b0, &b1).distance;
        max_error = max_error.max((got - segment_distance_oracle(&a0, &a1, &b0, &b1)).abs());
    }
    SuiteReport {
        name: "segment-segment distance vs grid oracle",
        cases,
        max_error,
        tolerance: 1e-9,
    }
}

/// Rotation matrix from an axis-angle vector by Rodrigues' formula.
fn rodrigues(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    if theta == 0.0 {
        return Matrix3::identity();
    }
    let k = w / theta;
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * theta.sin() + kx * kx * (1.0 - theta.cos())
}

/// Capsule clearance by Monte-Carlo search over axis parameters: a random
/// global sample followed by two shrinking random windows around the best
/// sample. Points are posed with explicit rotation matrices.
pub fn capsule_clearance_oracle(
    rng: &mut ChaCha8Rng,
    (a0, a1, ra): (Vector3<f64>, Vector3<f64>, f64),
    (ra_mat, ta): (Matrix3<f64>, Vector3<f64>),
    (b0, b1, rb): (Vector3<f64>, Vector3<f64>, f64),
    (rb_mat, tb): (Matrix3<f64>, Vector3<f64>),
) -> f64 {
    let (wa0, wa1) = (ra_mat * a0 + ta, ra_mat * a1 + ta);
    let (wb0, wb1) = (rb_mat * b0 + tb, rb_mat * b1 + tb);
    let at = |u: f64, v: f64| ((wa0 + (wa1 - wa0) * u) - (wb0 + (wb1 - wb0) * v)).norm();
    let (mut bu, mut bv, mut best) = (0.0, 0.0, f64::INFINITY);
    let consider = |u: f64, v: f64, bu: &mut f64, bv: &mut f64, best: &mut f64| {
        let d = at(u, v);
        if d < *best {
            (*bu, *bv, *best) = (u, v, d);
        }
    };
    for u in [0.0, 1.0] {
        for v in [0.0, 1.0] {
            consider(u, v, &mut bu, &mut bv, &mut best);
        }
    }
    for _ in 0..40_000 {
        let (u, v) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        consider(u, v, &mut bu, &mut bv, &mut best);
    }
    for window in [2e-2, 4e-4] {
        let (cu, cv) = (bu, bv);
        for _ in 0..20_000 {
            let u = (cu + rng.random_range(-window..window)).clamp(0.0, 1.0);
            let v = (cv + rng.random_range(-window..window)).clamp(0.0, 1.0);
            consider(u, v, &mut bu, &mut bv, &mut best);
        }
    }
    ra + rb - best
}

pub fn capsule_suite(cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut oracle_rng = ChaCha8Rng::seed_from_u64(203);
    let mut max_error: f64 = 0.0;
    for _ in 0..cases {
        let ca = (random_point(&mut rng, 0.4), random_point(&mut rng, 0.4), rng.random_range(0.02..0.2));
        let cb = (random_point(&mut rng, 0.4), random_point(&mut rng, 0.4), rng.random_range(0.02..0.2));
        let (wa, wb) = (random_point(&mut rng, PI), random_point(&mut rng, PI));
        let (ta, tb) = (random_point(&mut rng, 0.3), random_point(&mut rng, 0.3));
        let pose = |w: &Vector3<f64>, t: &Vector3<f64>| {
            Pose::from_parts(Translation3::from(*t), UnitQuaternion::from_scaled_axis(*w))
        };
        let got = capsule_capsule_clearance(
            &Capsule::new(ca.0, ca.1, ca.2).unwrap(),
            &pose(&wa, &ta),
            &Capsule::new(cb.0, cb.1, cb.2).unwrap(),
            &pose(&wb, &tb),
        )
        .value;
        let expected = capsule_clearance_oracle(&mut oracle_rng, ca, (rodrigues(&wa), ta), cb, (rodrigues(&wb), tb));
        max_error = max_error.max((got - expected).abs());
    }
    SuiteReport {
        name: "capsule-capsule clearance vs Monte-Carlo oracle",
        cases,
        max_error,
        tolerance: 1e-3,
    }
}

fn revolute_z(x_offset: f64, mass: f64, com_x: f64, inertia: Matrix3<f64>) -> JointSpec {
    JointSpec {
        name: "joint".into(),
        origin: Pose::translation(x_offset, 0.0, 0.0),
        axis: Unit::new_normalize(Vector3::z()),
        position_limits: (-10.0, 10.0),
        velocity_limit: 10.0,
        acceleration_limit: 50.0,
        torque_limit: 100.0,
        mass,
        com: Vector3::new(com_x, 0.0, 0.0),
        inertia,
    }
}

/// Two-link planar arm in the vertical xy-plane (gravity along -y).
fn two_link(l1: f64, masses: (f64, f64), coms: (f64, f64), inertias: (Matrix3<f64>, Matrix3<f64>)) -> RobotModel {
    RobotModel {
        name: "two-link".into(),
        base: Pose::identity(),
        joints: vec![
            revolute_z(0.0, masses.0, coms.0, inertias.0),
            revolute_z(l1, masses.1, coms.1, inertias.1),
        ],
        capsules: vec![],
        ee_offset: Pose::identity(),
        gravity: Vector3::new(0.0, -9.81, 0.0),
    }
}

/// Euler-Lagrange equations of the two-link planar arm, derived by hand:
/// `tau = M(q) a + C(q, v) v + g(q)`. Only `I_zz` of each link matters.
pub fn two_link_lagrangian(
    q: [f64; 2],
    v: [f64; 2],
    a: [f64; 2],
    (m1, m2): (f64, f64),
    (l1, lc1, lc2): (f64, f64, f64),
    (i1, i2): (f64, f64),
    g: f64,
) -> [f64; 2] {
    let c2 = q[1].cos();
    let s2 = q[1].sin();
    let m11 = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2);
    let m12 = i2 + m2 * (lc2 * lc2 + l1 * lc2 * c2);
    let m22 = i2 + m2 * lc2 * lc2;
    let h = m2 * l1 * lc2 * s2;
    let g1 = (m1 * lc1 + m2 * l1) * g * q[0].cos() + m2 * lc2 * g * (q[0] + q[1]).cos();
    let g2 = m2 * lc2 * g * (q[0] + q[1]).cos();
    [
        m11 * a[0] + m12 * a[1] - h * (2.0 * v[0] * v[1] + v[1] * v[1]) + g1,
        m12 * a[0] + m22 * a[1] + h * v[0] * v[0] + g2,
    ]
}

fn random_inertia(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| rng.random_range(-0.1..0.1));
    a * a.transpose() + Matrix3::identity() * 0.01
}

pub fn rnea_suite(cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut max_error: f64 = 0.0;
    for _ in 0..cases {
        let masses = (rng.random_range(0.5..4.0), rng.random_range(0.5..4.0));
        let l1 = rng.random_range(0.2..0.9);
        let coms = (rng.random_range(0.0..l1), rng.random_range(0.0..0.8));
        let inertias = (random_inertia(&mut rng), random_inertia(&mut rng));
        let model = two_link(l1, masses, coms, inertias);
        let q = [rng.random_range(-PI..PI), rng.random_range(-PI..PI)];
        let v = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let a = [rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0)];
        let tau = model.rnea(&q, &v, &a).unwrap();
        let expected = two_link_lagrangian(
            q,
            v,
            a,
            masses,
            (l1, coms.0, coms.1),
            (inertias.0[(2, 2)], inertias.1[(2, 2)]),
            9.81,
        );
        for i in 0..2 {
            max_error = max_error.max((tau[i] - expected[i]).abs());
        }
    }
    SuiteReport {
        name: "RNEA vs two-link Lagrangian",
        cases,
        max_error,
        tolerance: 1e-6,
    }
}

/// Round trips `log(exp(xi)) = xi` and `exp(log(T)) = T` for rotation angles
/// below pi, where the logarithm is single-valued.
pub fn se3_suite(cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut max_error: f64 = 0.0;
    for i in 0..cases {
        let axis = Unit::new_normalize(random_point(&mut rng, 1.0));
        let angle = match i % 4 {
            0 => rng.random_range(0.0..1e-6),
            1 => rng.random_range(PI - 1e-3..PI - 1e-6),
            _ => rng.random_range(0.0..PI - 1e-6),
        };
        let omega = axis.into_inner() * angle;
        let rho = random_point(&mut rng, 2.0);
        let xi = Vector6::new(rho.x, rho.y, rho.z, omega.x, omega.y, omega.z);
        let pose = se3_exp(&xi);
        max_error = max_error.max((se3_log(&pose) - xi).amax());
        let back = se3_exp(&se3_log(&pose));
        let dt = (back.translation.vector - pose.translation.vector).amax();
        let dr = (back.rotation.to_rotation_matrix().into_inner() - pose.rotation.to_rotation_matrix().into_inner()).amax();
        max_error = max_error.max(dt).max(dr);
    }
    SuiteReport {
        name: "se3 log/exp round trip",
        cases,
        max_error,
        tolerance: 1e-8,
    }
}

/// Normalization, shift invariance, and agreement with a direct
/// `exp(-S / beta) / sum` evaluation on cost batches of moderate spread.
pub fn weights_suite(cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut max_error: f64 = 0.0;
    for _ in 0..cases {
        let k = rng.random_range(1..300);
        let beta = rng.random_range(0.1..10.0);
        let costs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..20.0)).collect();
        let w = compute_weights(&costs, beta).unwrap();
        max_error = max_error.max((w.iter().sum::<f64>() - 1.0).abs());

        let shift = rng.random_range(-10.0..10.0);
        let shifted: Vec<f64> = costs.iter().map(|c| c + shift).collect();
        let ws = compute_weights(&shifted, beta).unwrap();
        for (a, b) in w.iter().zip(&ws) {
            max_error = max_error.max((a - b).abs());
        }

        let raw: Vec<f64> = costs.iter().map(|c| (-c / beta).exp()).collect();
        let total: f64 = raw.iter().sum();
        if total > 1e-200 {
            for (a, r) in w.iter().zip(&raw) {
                max_error = max_error.max((a - r / total).abs());
            }
        }
    }
    SuiteReport {
        name: "soft-min weight normalization and shift invariance",
        cases,
        max_error,
        tolerance: 1e-12,
    }
}

/// Survival factors stay in `[0, 1]`, never increase, and equal the direct
/// product of `1 - delta`. The error is the largest violation of any of these.
pub fn survival_suite(cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut max_error: f64 = 0.0;
    for i in 0..cases {
        let len = rng.random_range(1..80);
        let hazards: Vec<f64> = (0..len)
            .map(|_| match i % 3 {
                0 => rng.random_range(0.0..=1.0),
                1 => {
                    if rng.random_bool(0.8) {
                        0.0
                    } else {
                        rng.random_range(0.0..0.3)
                    }
                }
                _ => *[0.0, 1.0, 0.5].get(rng.random_range(0..3)).unwrap(),
            })
            .collect();
        let s = survival(&hazards);
        let mut prev: f64 = 1.0;
        for (t, value) in s.iter().enumerate() {
            let outside = (value - 1.0).max(0.0) + (-value).max(0.0);
            let increase = (value - prev).max(0.0);
            let direct: f64 = hazards[..=t].iter().map(|d| 1.0 - d).product();
            max_error = max_error.max(outside).max(increase).max((value - direct).abs());
            prev = *value;
        }
    }
    SuiteReport {
        name: "survival monotonicity and bounds",
        cases,
        max_error,
        tolerance: 0.0,
    }
}

/// With `p_max = 0` the CaT weights equal vanilla soft-min weights computed
/// from task costs alone.
pub fn cat_reduction_suite(batches: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let config = CatConfig {
        p_max: 0.0,
        ..Default::default()
    };
    let mut state = CatState::new(&config);
    let mut weights = CostWeights::new(2);
    weights.discount = 0.98;
    let mut task_only = weights.clone();
    task_only.collision_weight = 0.0;
    let (k, horizon) = (128, 20);
    let mut max_error: f64 = 0.0;
    for _ in 0..batches {
        let mut batch = RolloutBatch::new(k, horizon, 2);
        for c in batch.task_costs.iter_mut() {
            *c = rng.random_range(0.0..3.0);
        }
        for v in batch.violations.iter_mut() {
            *v = if rng.random_bool(0.3) { rng.random_range(0.0..0.1) } else { 0.0 };
        }
        score_batch(&mut batch, &mut state, &config, &weights).unwrap();
        let cat = cat_weights(&batch.costs, 0.5).unwrap();
        let vanilla = compute_weights(&score_rollouts(&batch.task_costs, horizon, &task_only), 0.5).unwrap();
        for (a, b) in cat.iter().zip(&vanilla) {
            max_error = max_error.max((a - b).abs());
        }
    }
    SuiteReport {
        name: "CaT weights with p_max = 0 equal vanilla task-only weights",
        cases: batches,
        max_error,
        tolerance: 1e-9,
    }
}
