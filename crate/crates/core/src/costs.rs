//! Stage and terminal costs: SE(3) goal reaching, state and control
//! regularization, and the hinge collision penalty.

use nalgebra::{DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::Pose;
use crate::robot::se3::se3_log;
use crate::robot::{RobotModel, State};
use crate::scene::{min_clearances, CollisionPairSet, SceneSnapshot};

/// Reference for the control regularization term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControlReference {
    /// Penalize the control itself; the MPPI control is a joint acceleration.
    #[default]
    Zero,
    /// Penalize deviation from the gravity compensation torque (torque control).
    GravityTorque,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostWeights {
    /// 6x6 weight on the `[translation, rotation]` goal twist.
    pub ee: Matrix6<f64>,
    /// Diagonal of the position block of `Q_x`.
    pub state_q: DVector<f64>,
    /// Diagonal of the velocity block of `Q_x`.
    pub state_v: DVector<f64>,
    /// Diagonal of `Q_u`.
    pub control: DVector<f64>,
    /// Multiplier on the hinge collision penalty in the vanilla stage cost.
    pub collision_weight: f64,
    /// Discount `gamma`; stage `t` is weighted by `gamma^t`.
    pub discount: f64,
    /// Optional explicit per-stage discounts (length `T + 1`, terminal last)
    /// replacing `gamma^t`.
    pub stage_discounts: Option<Vec<f64>>,
    pub control_reference: ControlReference,
}

impl CostWeights {
    /// Defaults for an `n`-joint robot: translation 10, rotation 1, light
    /// velocity damping, small control effort, `gamma = 0.99`.
    pub fn new(n: usize) -> Self {
        CostWeights {
            ee: Matrix6::from_diagonal(&Vector6::new(10.0, 10.0, 10.0, 1.0, 1.0, 1.0)),
            state_q: DVector::from_element(n, 0.0),
            state_v: DVector::from_element(n, 0.1),
            control: DVector::from_element(n, 1e-3),
            collision_weight: 1.0,
            discount: 0.99,
            stage_discounts: None,
            control_reference: ControlReference::Zero,
        }
    }

    pub fn with_ee_weights(mut self, translation: f64, rotation: f64) -> Self {
        self.ee = Matrix6::from_diagonal(&Vector6::new(
            translation,
            translation,
            translation,
            rotation,
            rotation,
            rotation,
        ));
        self
    }

    pub fn dof(&self) -> usize {
        self.control.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("state position weights", n, self.state_q.len())?;
        check_len("state velocity weights", n, self.state_v.len())?;
        check_len("control weights", n, self.control.len())?;
        let diag_ok = |d: &DVector<f64>| d.iter().all(|w| *w >= 0.0 && w.is_finite());
        if !diag_ok(&self.state_q) || !diag_ok(&self.state_v) || !diag_ok(&self.control) {
            return Err(Error::InvalidConfig("diagonal weights must be non-negative".into()));
        }
        let sym = (self.ee - self.ee.transpose()).amax() <= 1e-12;
        let psd = self.ee.symmetric_eigenvalues().min() >= -1e-12;
        if !(sym && psd) {
            return Err(Error::InvalidConfig(
                "end-effector weight must be symmetric positive semidefinite".into(),
            ));
        }
        if !(self.collision_weight >= 0.0) {
            return Err(Error::InvalidConfig("collision weight must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::InvalidConfig(format!(
                "discount must lie in [0, 1], got {}",
                self.discount
            )));
        }
        if let Some(d) = &self.stage_discounts {
            if d.iter().any(|g| !(0.0..=1.0).contains(g)) {
                return Err(Error::InvalidConfig("stage discounts must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Discount applied to stage `t` (stage `T` is the terminal stage).
    pub fn discount_at(&self, t: usize) -> f64 {
        match &self.stage_discounts {
            Some(d) if t < d.len() => d[t],
            _ => self.discount.powi(t as i32),
        }
    }
}

/// Decomposition of one stage cost. All parts are non-negative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCostBreakdown {
    pub ee: f64,
    pub state: f64,
    pub control: f64,
    /// Weighted collision penalty entering the vanilla total.
    pub collision: f64,
    /// Unweighted hinge sum, the constraint violation magnitude.
    pub violation: f64,
    pub total: f64,
}

impl StageCostBreakdown {
    /// Task-only part (goal + regularization).
    pub fn task(&self) -> f64 {
        self.ee + self.state + self.control
    }
}

/// `||log(goal^-1 * ee)||^2_Q` given the precomputed inverse goal pose.
#[inline]
pub fn goal_cost_from_pose(ee: &Pose, goal_inv: &Pose, weight: &Matrix6<f64>) -> f64 {
    let xi = se3_log(&(goal_inv * ee));
    xi.dot(&(weight * xi))
}

pub fn goal_cost(model: &RobotModel, q: &[f64], goal: &Pose, weights: &CostWeights) -> Result<f64> {
    let ee = model.forward_kinematics(q)?.end_effector;
    Ok(goal_cost_from_pose(&ee, &goal.inverse(), &weights.ee))
}

/// `||x - x_ref||^2_{Q_x}` with diagonal `Q_x`.
pub fn state_reg_cost(x: &State, x_ref: &State, weights: &CostWeights) -> Result<f64> {
    let n = weights.dof();
    check_len("state", n, x.dof())?;
    check_len("reference state", n, x_ref.dof())?;
    Ok(state_reg_slices(x.q.as_slice(), x.v.as_slice(), x_ref, weights))
}

#[inline]
pub(crate) fn state_reg_slices(q: &[f64], v: &[f64], x_ref: &State, weights: &CostWeights) -> f64 {
    let mut acc = 0.0;
    for i in 0..q.len() {
        let dq = q[i] - x_ref.q[i];
        let dv = v[i] - x_ref.v[i];
        acc += weights.state_q[i] * dq * dq + weights.state_v[i] * dv * dv;
    }
    acc
}

/// `||u - u_ref(q)||^2_{Q_u}` where `u_ref` is zero or the gravity torque.
pub fn control_reg_cost(model: &RobotModel, q: &[f64], u: &[f64], weights: &CostWeights) -> Result<f64> {
    let n = weights.dof();
    check_len("control", n, u.len())?;
    check_len("joint positions", n, q.len())?;
    Ok(match weights.control_reference {
        ControlReference::Zero => control_reg_zero(u, weights),
        ControlReference::GravityTorque => {
            let g = model.gravity_torque(q)?;
            u.iter()
                .zip(g.iter())
                .zip(weights.control.iter())
                .map(|((ui, gi), w)| w * (ui - gi) * (ui - gi))
                .sum()
        }
    })
}

#[inline]
pub(crate) fn control_reg_zero(u: &[f64], weights: &CostWeights) -> f64 {
    u.iter().zip(weights.control.iter()).map(|(ui, w)| w * ui * ui).sum()
}

/// Hinge penalty `sum_r max(d_r + d_th, 0)` on signed clearances (positive =
/// overlap).
#[inline]
pub fn collision_cost(clearances: &[f64], margin: f64) -> f64 {
    clearances.iter().map(|d| (d + margin).max(0.0)).sum()
}

/// Full running cost at `(x, u)`.
#[allow(clippy::too_many_arguments)]
pub fn stage_cost(
    model: &RobotModel,
    x: &State,
    u: &[f64],
    snapshot: &SceneSnapshot,
    goal: &Pose,
    x_ref: &State,
    weights: &CostWeights,
    pairs: &CollisionPairSet,
) -> Result<StageCostBreakdown> {
    let mut b = terminal_cost(model, x, snapshot, goal, x_ref, weights, pairs)?;
    b.control = control_reg_cost(model, x.q.as_slice(), u, weights)?;
    b.total += b.control;
    Ok(b)
}

/// Terminal cost: the running cost without the control term.
pub fn terminal_cost(
    model: &RobotModel,
    x: &State,
    snapshot: &SceneSnapshot,
    goal: &Pose,
    x_ref: &State,
    weights: &CostWeights,
    pairs: &CollisionPairSet,
) -> Result<StageCostBreakdown> {
    let ee = goal_cost(model, x.q.as_slice(), goal, weights)?;
    let state = state_reg_cost(x, x_ref, weights)?;
    let clearances = min_clearances(model, x.q.as_slice(), snapshot, pairs)?;
    let violation = collision_cost(&clearances, pairs.margin());
    let collision = weights.collision_weight * violation;
    Ok(StageCostBreakdown {
        ee,
        state,
        control: 0.0,
        collision,
        violation,
        total: ee + state + collision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Translation3, UnitQuaternion, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::geometry::Capsule;
    use crate::scene::{CollisionPair, ObstacleTrack, Primitive, Scene};

    fn planar() -> RobotModel {
        crate::robot::parse_robot_description(include_str!("../data/robots/planar3.toml"), "planar3").unwrap()
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-s..s))
    }

    #[test]
    fn goal_cost_zero_at_goal() {
        let model = planar();
        let q = [0.3, -0.2, 0.9];
        let goal = model.forward_kinematics(&q).unwrap().end_effector;
        let w = CostWeights::new(3);
        assert!(goal_cost(&model, &q, &goal, &w).unwrap().abs() < 1e-24);
    }

    #[test]
    fn pure_translation_error_identity_weight() {
        let model = planar();
        let q = [0.3, -0.2, 0.9];
        let ee = model.forward_kinematics(&q).unwrap().end_effector;
        let goal = Pose::from_parts(Translation3::new(0.1, 0.0, 0.0), UnitQuaternion::identity()) * ee;
        let mut w = CostWeights::new(3);
        w.ee = Matrix6::identity();
        // The error is expressed in the goal frame; its norm is still 0.1.
        assert_relative_eq!(goal_cost(&model, &q, &goal, &w).unwrap(), 0.01, epsilon = 1e-12);
    }

    #[test]
    fn goal_cost_matches_composition() {
        let model = planar();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut w = CostWeights::new(3);
        let a = nalgebra::Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        w.ee = a * a.transpose();
        for _ in 0..100 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let goal = Pose::from_parts(
                Translation3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.2),
                UnitQuaternion::from_scaled_axis(Vector3::new(0.1, 0.4, rng.random_range(-1.0..1.0))),
            );
            let ee = model.forward_kinematics(&q).unwrap().end_effector;
            let xi = se3_log(&(goal.inverse() * ee));
            let expected = (xi.transpose() * w.ee * xi)[0];
            assert_relative_eq!(goal_cost(&model, &q, &goal, &w).unwrap(), expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn state_regularization() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut w = CostWeights::new(3);
        w.state_q = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        w.state_v = DVector::from_vec(vec![0.5, 0.0, 4.0]);
        let x0 = State::new(rand_vec(&mut rng, 3, 1.0), rand_vec(&mut rng, 3, 1.0)).unwrap();
        assert_eq!(state_reg_cost(&x0, &x0, &w).unwrap(), 0.0);
        let dq = rand_vec(&mut rng, 3, 1.0);
        let dv = rand_vec(&mut rng, 3, 1.0);
        let x1 = State::new(&x0.q + &dq, &x0.v + &dv).unwrap();
        let x2 = State::new(&x0.q + &dq * 2.0, &x0.v + &dv * 2.0).unwrap();
        let c1 = state_reg_cost(&x1, &x0, &w).unwrap();
        let c2 = state_reg_cost(&x2, &x0, &w).unwrap();
        assert_relative_eq!(c2, 4.0 * c1, epsilon = 1e-12);
        // Direct quadratic form with the stacked diagonal.
        let q_x = nalgebra::DMatrix::from_diagonal(&DVector::from_iterator(6, w.state_q.iter().chain(w.state_v.iter()).copied()));
        let e = x1.stacked() - x0.stacked();
        assert_relative_eq!(c1, (e.transpose() * q_x * e)[0], epsilon = 1e-12);
        let short = State::at_rest(DVector::zeros(2));
        assert!(state_reg_cost(&short, &x0, &w).is_err());
    }

    #[test]
    fn control_regularization_modes() {
        let model = planar();
        let mut w = CostWeights::new(3);
        w.control = DVector::from_vec(vec![1.0, 0.5, 2.0]);
        let q = [0.2, 0.4, -0.3];
        assert_eq!(control_reg_cost(&model, &q, &[0.0; 3], &w).unwrap(), 0.0);
        let u = [1.0, -2.0, 0.5];
        let c = control_reg_cost(&model, &q, &u, &w).unwrap();
        assert_relative_eq!(c, 1.0 + 2.0 + 0.5, epsilon = 1e-12);
        let u2: Vec<f64> = u.iter().map(|x| 3.0 * x).collect();
        assert_relative_eq!(control_reg_cost(&model, &q, &u2, &w).unwrap(), 9.0 * c, epsilon = 1e-12);

        w.control_reference = ControlReference::GravityTorque;
        let g = model.gravity_torque(&q).unwrap();
        assert!(control_reg_cost(&model, &q, g.as_slice(), &w).unwrap() < 1e-24);
        let expected: f64 = (0..3).map(|i| w.control[i] * (u[i] - g[i]).powi(2)).sum();
        assert_relative_eq!(control_reg_cost(&model, &q, &u, &w).unwrap(), expected, epsilon = 1e-12);
        assert!(control_reg_cost(&model, &q, &[0.0; 2], &w).is_err());
    }

    #[test]
    fn collision_cost_substitutions() {
        assert_eq!(collision_cost(&[-0.1, -0.5], 0.02), 0.0);
        assert_relative_eq!(collision_cost(&[0.0], 0.02), 0.02);
        assert_relative_eq!(collision_cost(&[-0.01, 0.05], 0.02), 0.08, epsilon = 1e-15);
    }

    #[test]
    fn collision_cost_kink_slopes() {
        let margin = 0.02;
        let h = 1e-7;
        let at = |d: f64| collision_cost(&[d, -1.0], margin);
        let left = (at(-margin - h) - at(-margin - 2.0 * h)) / h;
        let right = (at(-margin + 2.0 * h) - at(-margin + h)) / h;
        assert!(left.abs() < 1e-9);
        assert!((right - 1.0).abs() < 1e-6);
    }

    #[test]
    fn discount_schedule() {
        let mut w = CostWeights::new(2);
        w.discount = 0.5;
        assert_eq!(w.discount_at(0), 1.0);
        assert_eq!(w.discount_at(3), 0.125);
        w.stage_discounts = Some(vec![1.0, 0.9]);
        assert_eq!(w.discount_at(1), 0.9);
        assert_eq!(w.discount_at(3), 0.125);
        w.discount = 1.5;
        assert!(w.validate(2).is_err());
    }

    fn scene_with_pairs(model: &RobotModel) -> (Scene, CollisionPairSet) {
        let scene = Scene::new(vec![ObstacleTrack::fixed(
            "ball",
            Primitive::Capsule(Capsule::sphere(Vector3::new(0.6, 0.25, 0.0), 0.1).unwrap()),
            Pose::identity(),
            false,
        )]);
        let pairs = CollisionPairSet::new(
            (0..model.capsules.len()).map(|r| CollisionPair { robot: r, env: 0 }).collect(),
            0.02,
            model.capsules.len(),
            1,
        )
        .unwrap();
        (scene, pairs)
    }

    #[test]
    fn stage_cost_composes_terms() {
        let model = planar();
        let (scene, pairs) = scene_with_pairs(&model);
        let snap = scene.snapshot_at(0.0);
        let mut w = CostWeights::new(3);
        w.collision_weight = 3.0;
        w.state_q = DVector::from_element(3, 0.2);
        let x = State::new(DVector::from_vec(vec![0.5, 0.1, -0.4]), DVector::from_vec(vec![0.1, 0.2, 0.3])).unwrap();
        let x_ref = State::at_rest(DVector::zeros(3));
        let goal = Pose::translation(0.5, 0.5, 0.0);
        let u = [1.0, 0.0, -1.0];
        let b = stage_cost(&model, &x, &u, &snap, &goal, &x_ref, &w, &pairs).unwrap();
        let t = terminal_cost(&model, &x, &snap, &goal, &x_ref, &w, &pairs).unwrap();
        assert_relative_eq!(b.ee, goal_cost(&model, x.q.as_slice(), &goal, &w).unwrap());
        assert_relative_eq!(b.state, state_reg_cost(&x, &x_ref, &w).unwrap());
        assert_relative_eq!(b.control, control_reg_cost(&model, x.q.as_slice(), &u, &w).unwrap());
        let d = min_clearances(&model, x.q.as_slice(), &snap, &pairs).unwrap();
        assert_relative_eq!(b.violation, collision_cost(&d, 0.02));
        assert!(b.violation > 0.0);
        assert_relative_eq!(b.collision, 3.0 * b.violation);
        assert_relative_eq!(b.total, b.ee + b.state + b.control + b.collision, epsilon = 1e-12);
        assert_relative_eq!(t.total, b.total - b.control, epsilon = 1e-12);
        assert_eq!(t.control, 0.0);
    }

    #[test]
    fn terminal_cost_ignores_control() {
        let model = planar();
        let (scene, pairs) = scene_with_pairs(&model);
        let snap = scene.snapshot_at(0.0);
        let w = CostWeights::new(3);
        let x = State::at_rest(DVector::from_vec(vec![0.1, 0.2, 0.3]));
        let goal = Pose::translation(0.5, 0.5, 0.0);
        let a = stage_cost(&model, &x, &[0.0; 3], &snap, &goal, &x, &w, &pairs).unwrap();
        let b = stage_cost(&model, &x, &[5.0; 3], &snap, &goal, &x, &w, &pairs).unwrap();
        let ta = terminal_cost(&model, &x, &snap, &goal, &x, &w, &pairs).unwrap();
        assert!(b.total > a.total);
        assert_eq!(ta.total, a.total);
    }

    proptest::proptest! {
        #[test]
        fn collision_cost_nonnegative_and_monotone(
            d in proptest::collection::vec(-0.5f64..0.5, 1..10),
            idx in 0usize..10,
            bump in 0.0f64..0.3,
        ) {
            let c = collision_cost(&d, 0.02);
            proptest::prop_assert!(c >= 0.0);
            let mut e = d.clone();
            let i = idx % e.len();
            e[i] += bump;
            proptest::prop_assert!(collision_cost(&e, 0.02) >= c);
        }
    }
}
