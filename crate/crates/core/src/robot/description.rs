//! Robot description files (TOML).
//!
//! ```toml
//! name = "planar-3dof"
//! gravity = [0.0, -9.81, 0.0]        # optional, default [0, 0, -9.81]
//! base = { xyz = [0, 0, 0], rpy = [0, 0, 0] }               # optional
//! end_effector = { xyz = [0.2, 0, 0], rpy = [0, 0, 0] }     # optional
//!
//! [[joints]]
//! name = "shoulder"
//! xyz = [0.0, 0.0, 0.0]          # origin relative to the parent link frame
//! rpy = [0.0, 0.0, 0.0]          # fixed-axis roll, pitch, yaw
//! axis = [0.0, 0.0, 1.0]         # unit vector
//! position_limits = [-3.14, 3.14]
//! velocity_limit = 2.0
//! acceleration_limit = 10.0
//! torque_limit = 50.0
//! mass = 1.0
//! com = [0.2, 0.0, 0.0]
//! inertia = [ixx, ixy, ixz, iyy, iyz, izz]   # about the COM, link frame
//!
//! [[capsules]]
//! name = "upper_arm"
//! link = 1                       # 0 = base frame, i = after joint i
//! p0 = [0.0, 0.0, 0.0]
//! p1 = [0.4, 0.0, 0.0]
//! radius = 0.05
//! ```

use std::path::Path;

use nalgebra::{Matrix3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::Deserialize;

use super::{JointSpec, LinkCapsule, RobotModel};
use crate::error::{Error, Result};
use crate::geometry::{Capsule, Pose};

const AXIS_NORM_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-12;

#[derive(Debug, Deserialize, Default, Clone, Copy)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawPose {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl RawPose {
    pub(crate) fn to_pose(self) -> Pose {
        Pose::from_parts(
            Translation3::new(self.xyz[0], self.xyz[1], self.xyz[2]),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobot {
    name: String,
    gravity: Option<[f64; 3]>,
    base: Option<RawPose>,
    end_effector: Option<RawPose>,
    joints: Vec<RawJoint>,
    #[serde(default)]
    capsules: Vec<RawCapsule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJoint {
    name: String,
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
    axis: [f64; 3],
    position_limits: [f64; 2],
    velocity_limit: f64,
    acceleration_limit: f64,
    torque_limit: f64,
    mass: f64,
    #[serde(default)]
    com: [f64; 3],
    #[serde(default)]
    inertia: [f64; 6],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCapsule {
    name: String,
    link: usize,
    p0: [f64; 3],
    p1: [f64; 3],
    radius: f64,
}

pub fn load_robot_description(path: impl AsRef<Path>) -> Result<RobotModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_robot_description(&text, path)
}

/// Parses and validates a robot description. `origin` is only used in
/// diagnostics.
pub fn parse_robot_description(text: &str, origin: impl AsRef<Path>) -> Result<RobotModel> {
    let raw: RawRobot = toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.as_ref().to_path_buf(),
        message: e.to_string(),
    })?;
    build(raw)
}

fn finite(field: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::model(field, "non-finite value"))
    }
}

fn build(raw: RawRobot) -> Result<RobotModel> {
    if raw.joints.is_empty() {
        return Err(Error::model("joints", "at least one joint is required"));
    }
    let mut joints = Vec::with_capacity(raw.joints.len());
    for (i, j) in raw.joints.into_iter().enumerate() {
        let field = |f: &str| format!("joints[{i}].{f}");
        finite(&field("xyz"), &j.xyz)?;
        finite(&field("rpy"), &j.rpy)?;
        finite(&field("com"), &j.com)?;
        finite(&field("inertia"), &j.inertia)?;

        let axis = Vector3::from(j.axis);
        let norm = axis.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::model(field("axis"), "zero-norm axis"));
        }
        if (norm - 1.0).abs() > AXIS_NORM_TOL {
            return Err(Error::model(
                field("axis"),
                format!("axis must have unit norm, got {norm}"),
            ));
        }
        let [lo, hi] = j.position_limits;
        if !(lo < hi) {
            return Err(Error::model(
                field("position_limits"),
                format!("lower limit {lo} must be below upper limit {hi}"),
            ));
        }
        for (name, value) in [
            ("velocity_limit", j.velocity_limit),
            ("acceleration_limit", j.acceleration_limit),
            ("torque_limit", j.torque_limit),
        ] {
            if !(value > 0.0) {
                return Err(Error::model(field(name), format!("must be positive, got {value}")));
            }
        }
        if !(j.mass >= 0.0) {
            return Err(Error::model(field("mass"), format!("must be non-negative, got {}", j.mass)));
        }
        let [ixx, ixy, ixz, iyy, iyz, izz] = j.inertia;
        let inertia = Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz);
        let min_eig = inertia.symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL {
            return Err(Error::model(
                field("inertia"),
                format!("inertia is not positive semidefinite (eigenvalue {min_eig})"),
            ));
        }
        joints.push(JointSpec {
            name: j.name,
            origin: RawPose { xyz: j.xyz, rpy: j.rpy }.to_pose(),
            axis: Unit::new_unchecked(axis),
            position_limits: (lo, hi),
            velocity_limit: j.velocity_limit,
            acceleration_limit: j.acceleration_limit,
            torque_limit: j.torque_limit,
            mass: j.mass,
            com: Vector3::from(j.com),
            inertia,
        });
    }

    let n = joints.len();
    let mut capsules = Vec::with_capacity(raw.capsules.len());
    for (i, c) in raw.capsules.into_iter().enumerate() {
        let field = |f: &str| format!("capsules[{i}].{f}");
        if c.link > n {
            return Err(Error::model(
                field("link"),
                format!("attachment frame {} out of range (robot has {n} links)", c.link),
            ));
        }
        if capsules.iter().any(|other: &LinkCapsule| other.name == c.name) {
            return Err(Error::model(field("name"), format!("duplicate capsule name {:?}", c.name)));
        }
        let capsule = Capsule::new(Vector3::from(c.p0), Vector3::from(c.p1), c.radius)
            .map_err(|e| Error::model(field("radius"), e.to_string()))?;
        capsules.push(LinkCapsule {
            name: c.name,
            link: c.link,
            capsule,
        });
    }

    let gravity = Vector3::from(raw.gravity.unwrap_or([0.0, 0.0, -9.81]));
    finite("gravity", gravity.as_slice())?;
    Ok(RobotModel {
        name: raw.name,
        base: raw.base.unwrap_or_default().to_pose(),
        joints,
        capsules,
        ee_offset: raw.end_effector.unwrap_or_default().to_pose(),
        gravity,
    })
}
