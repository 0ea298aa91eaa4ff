//! Serial-chain kinematics and inverse dynamics.
//!
//! Frame convention: frame `0` is the robot base; frame `i` (for `i >= 1`) is
//! the link frame after revolute joint `i - 1`, obtained as
//! `frame[i] = frame[i-1] * joint.origin * Rot(joint.axis, q[i-1])`. Capsules
//! and inertial parameters of a link are expressed in that link's frame.

mod description;
pub mod se3;

use nalgebra::{DVector, Matrix3, Point3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::geometry::{Capsule, Pose};

pub use description::{load_robot_description, parse_robot_description};

#[derive(Clone, Debug)]
pub struct JointSpec {
    pub name: String,
    /// Fixed transform from the parent link frame to the joint frame.
    pub origin: Pose,
    pub axis: Unit<Vector3<f64>>,
    pub position_limits: (f64, f64),
    pub velocity_limit: f64,
    pub acceleration_limit: f64,
    pub torque_limit: f64,
    /// Link mass in kg.
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass, in the link frame.
    pub inertia: Matrix3<f64>,
}

#[derive(Clone, Debug)]
pub struct LinkCapsule {
    pub name: String,
    /// Index of the attachment frame (0 = base).
    pub link: usize,
    pub capsule: Capsule,
}

#[derive(Clone, Debug)]
pub struct RobotModel {
    pub name: String,
    pub base: Pose,
    pub joints: Vec<JointSpec>,
    pub capsules: Vec<LinkCapsule>,
    /// End-effector frame relative to the last link frame.
    pub ee_offset: Pose,
    pub gravity: Vector3<f64>,
}

/// Joint-space state `(q, v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl State {
    pub fn new(q: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        check_len("state velocity", q.len(), v.len())?;
        Ok(State { q, v })
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let v = DVector::zeros(q.len());
        State { q, v }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    /// Stacked `[q; v]`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.dof();
        DVector::from_fn(2 * n, |i, _| if i < n { self.q[i] } else { self.v[i - n] })
    }
}

/// Forward kinematics result.
#[derive(Clone, Debug)]
pub struct Kinematics {
    /// World poses of the base and every link frame (`dof + 1` entries).
    pub frames: Vec<Pose>,
    pub end_effector: Pose,
}

impl RobotModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn capsule_index(&self, name: &str) -> Option<usize> {
        self.capsules.iter().position(|c| c.name == name)
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Kinematics> {
        check_len("joint positions", self.dof(), q.len())?;
        let mut frames = vec![Pose::identity(); self.dof() + 1];
        self.link_frames_into(q, &mut frames);
        let end_effector = self.end_effector_pose(&frames);
        Ok(Kinematics {
            frames,
            end_effector,
        })
    }

    /// Writes the base and link frames into `frames` (length `dof + 1`).
    /// Dimensions are the caller's responsibility on this hot path.
    #[inline]
    pub fn link_frames_into(&self, q: &[f64], frames: &mut [Pose]) {
        debug_assert_eq!(q.len(), self.dof());
        debug_assert_eq!(frames.len(), self.dof() + 1);
        frames[0] = self.base;
        for (i, joint) in self.joints.iter().enumerate() {
            let rot = UnitQuaternion::from_axis_angle(&joint.axis, q[i]);
            frames[i + 1] = frames[i] * joint.origin * rot;
        }
    }

    #[inline]
    pub fn end_effector_pose(&self, frames: &[Pose]) -> Pose {
        frames[self.dof()] * self.ee_offset
    }

    /// World-frame copies of every robot capsule for the given link frames.
    #[inline]
    pub fn world_capsules_into(&self, frames: &[Pose], out: &mut [Capsule]) {
        for (dst, lc) in out.iter_mut().zip(&self.capsules) {
            *dst = lc.capsule.transformed(&frames[lc.link]);
        }
    }

    /// Recursive Newton-Euler inverse dynamics, gravity included.
    pub fn rnea(&self, q: &[f64], v: &[f64], a: &[f64]) -> Result<DVector<f64>> {
        let n = self.dof();
        check_len("joint positions", n, q.len())?;
        check_len("joint velocities", n, v.len())?;
        check_len("joint accelerations", n, a.len())?;

        let mut frames = vec![Pose::identity(); n + 1];
        self.link_frames_into(q, &mut frames);

        // Forward pass in world coordinates. Joint i sits at the origin of
        // frame i + 1, which is rigidly attached to link i - 1 (or the base).
        let mut axis = vec![Vector3::zeros(); n];
        let mut origin = vec![Vector3::zeros(); n];
        let mut com = vec![Vector3::zeros(); n];
        let mut omega = vec![Vector3::zeros(); n];
        let mut omega_dot = vec![Vector3::zeros(); n];
        let mut acc_com = vec![Vector3::zeros(); n];

        let mut prev_origin = self.base.translation.vector;
        let mut prev_omega = Vector3::zeros();
        let mut prev_omega_dot = Vector3::zeros();
        // Gravity enters as a fictitious upward base acceleration.
        let mut prev_acc = -self.gravity;

        for i in 0..n {
            let frame = &frames[i + 1];
            let z = frame.rotation * self.joints[i].axis.into_inner();
            let p = frame.translation.vector;
            let r = p - prev_origin;
            let acc_origin = prev_acc
                + prev_omega_dot.cross(&r)
                + prev_omega.cross(&prev_omega.cross(&r));
            let w = prev_omega + z * v[i];
            let w_dot = prev_omega_dot + z * a[i] + prev_omega.cross(&(z * v[i]));
            let c = frame.transform_point(&Point3::from(self.joints[i].com)).coords;
            let rc = c - p;
            acc_com[i] = acc_origin + w_dot.cross(&rc) + w.cross(&w.cross(&rc));

            axis[i] = z;
            origin[i] = p;
            com[i] = c;
            omega[i] = w;
            omega_dot[i] = w_dot;

            prev_origin = p;
            prev_omega = w;
            prev_omega_dot = w_dot;
            prev_acc = acc_origin;
        }

        // Backward pass: force and moment (about the joint origin) transmitted
        // from link i - 1 to link i.
        let mut tau = DVector::zeros(n);
        let mut f_child = Vector3::zeros();
        let mut n_child = Vector3::zeros();
        for i in (0..n).rev() {
            let joint = &self.joints[i];
            let rot = frames[i + 1].rotation.to_rotation_matrix();
            let inertia = rot.matrix() * joint.inertia * rot.matrix().transpose();
            let force = acc_com[i] * joint.mass;
            let moment = inertia * omega_dot[i] + omega[i].cross(&(inertia * omega[i]));
            let mut f = force + f_child;
            let mut m = moment + (com[i] - origin[i]).cross(&force) + n_child;
            if i + 1 < n {
                m += (origin[i + 1] - origin[i]).cross(&f_child);
            }
            tau[i] = axis[i].dot(&m);
            std::mem::swap(&mut f, &mut f_child);
            std::mem::swap(&mut m, &mut n_child);
        }
        Ok(tau)
    }

    /// Gravity compensation torque `rnea(q, 0, 0)`.
    pub fn gravity_torque(&self, q: &[f64]) -> Result<DVector<f64>> {
        let zeros = vec![0.0; self.dof()];
        self.rnea(q, &zeros, &zeros)
    }

    pub fn acceleration_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.acceleration_limit).collect()
    }
}
