//! Scenario files (TOML): robot, start and goal, controller and cost
//! settings, the obstacle world and the collision pairs.
//!
//! ```toml
//! name = "single-post"
//! robot = "panda7"                  # bundled robot or a path relative to this file
//! start_q = [0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785]
//! goal = { xyz = [0.45, 0.25, 0.3], rpy = [3.14159, 0.0, 0.0] }
//!
//! [controller]                      # every key optional
//! rollouts = 256
//! horizon = 32
//! noise_std = 6.0                   # scalar or one entry per joint
//!
//! [costs]
//! collision_weight = 20.0
//!
//! [[obstacles]]
//! name = "post"
//! shape = { capsule = { p0 = [0, 0, 0], p1 = [0, 0, 0.6], radius = 0.04 } }
//! pose = { xyz = [0.5, 0.0, 0.0] }
//! # or keyframes = [{ t = 0.0, xyz = [...] }, { t = 2.0, xyz = [...] }]
//!
//! [[pairs]]
//! robot = ["link5_forearm", "hand"] # "*" expands to every robot capsule
//! env = ["post"]                    # "*" expands to every obstacle
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::cat::CatConfig;
use crate::costs::{ControlReference, CostWeights};
use crate::error::{Error, Result};
use crate::geometry::{Capsule, Cuboid, Pose};
use crate::mppi::{GaussianPolicy, MppiConfig, ShiftFill, Task};
use crate::robot::{load_robot_description, parse_robot_description, RobotModel, State};
use crate::scene::{CollisionPair, CollisionPairSet, ObstacleTrack, Primitive, Scene};

const PANDA7: &str = include_str!("../data/robots/panda7.toml");
const PLANAR3: &str = include_str!("../data/robots/planar3.toml");

const SCENARIOS: [(&str, &str); 6] = [
    ("scenario1.toml", include_str!("../data/scenarios/scenario1.toml")),
    ("scenario2.toml", include_str!("../data/scenarios/scenario2.toml")),
    ("scenario3.toml", include_str!("../data/scenarios/scenario3.toml")),
    ("scenario4.toml", include_str!("../data/scenarios/scenario4.toml")),
    ("scenario5.toml", include_str!("../data/scenarios/scenario5.toml")),
    ("scenario6.toml", include_str!("../data/scenarios/scenario6.toml")),
];

/// Names of the robot descriptions compiled into the crate.
pub const BUILTIN_ROBOTS: [&str; 2] = ["panda7", "planar3"];

pub fn builtin_robot(name: &str) -> Option<RobotModel> {
    let text = match name {
        "panda7" => PANDA7,
        "planar3" => PLANAR3,
        _ => return None,
    };
    Some(parse_robot_description(text, format!("{name}.toml")).expect("bundled robot is valid"))
}

/// Scalar broadcast to every joint, or one value per joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerJoint {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PerJoint {
    fn expand(&self, n: usize, field: &str) -> Result<Vec<f64>> {
        match self {
            PerJoint::Scalar(x) => Ok(vec![*x; n]),
            PerJoint::Vector(v) if v.len() == n => Ok(v.clone()),
            PerJoint::Vector(v) => Err(Error::scenario(
                field,
                format!("expected a scalar or {n} values, got {}", v.len()),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl PoseSpec {
    pub fn to_pose(self) -> Pose {
        Pose::from_parts(
            Translation3::new(self.xyz[0], self.xyz[1], self.xyz[2]),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeSpec {
    pub t: f64,
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Capsule { p0: [f64; 3], p1: [f64; 3], radius: f64 },
    Sphere { center: [f64; 3], radius: f64 },
    Cuboid { half_extents: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub name: String,
    pub shape: ShapeSpec,
    pub pose: Option<PoseSpec>,
    pub keyframes: Option<Vec<KeyframeSpec>>,
    /// Fixtures are excluded from the obstacle-distance metric.
    #[serde(default)]
    pub fixture: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub robot: Vec<String>,
    pub env: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSpec {
    pub rollouts: usize,
    pub horizon: usize,
    pub dt: f64,
    pub temperature: f64,
    pub step_size: f64,
    pub noise_std: PerJoint,
    pub shift_fill: ShiftFill,
    pub parallel: bool,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        let m = MppiConfig::default();
        ControllerSpec {
            rollouts: m.rollouts,
            horizon: m.horizon,
            dt: m.dt,
            temperature: m.temperature,
            step_size: m.step_size,
            noise_std: PerJoint::Scalar(5.0),
            shift_fill: m.shift_fill,
            parallel: m.parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSpec {
    pub ee_translation: f64,
    pub ee_rotation: f64,
    pub state_q: PerJoint,
    pub state_v: PerJoint,
    pub control: PerJoint,
    pub collision_weight: f64,
    pub discount: f64,
    pub stage_discounts: Option<Vec<f64>>,
    pub control_reference: ControlReference,
}

impl Default for CostSpec {
    fn default() -> Self {
        let w = CostWeights::new(1);
        CostSpec {
            ee_translation: w.ee[(0, 0)],
            ee_rotation: w.ee[(3, 3)],
            state_q: PerJoint::Scalar(w.state_q[0]),
            state_v: PerJoint::Scalar(w.state_v[0]),
            control: PerJoint::Scalar(w.control[0]),
            collision_weight: w.collision_weight,
            discount: w.discount,
            stage_discounts: None,
            control_reference: w.control_reference,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowLevelSpec {
    pub kp: PerJoint,
    pub kd: PerJoint,
}

impl Default for LowLevelSpec {
    fn default() -> Self {
        LowLevelSpec {
            kp: PerJoint::Scalar(100.0),
            kd: PerJoint::Scalar(20.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetySpec {
    /// Clearance threshold `d_th` in meters.
    pub margin: f64,
}

impl Default for SafetySpec {
    fn default() -> Self {
        SafetySpec { margin: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Simulated seconds before timeout.
    pub max_duration: f64,
    /// Final end-effector translation error counted as success, in meters.
    pub success_distance: f64,
    /// The episode ends early once the error drops below this, in meters.
    pub settle_distance: f64,
    /// Standard deviation of Gaussian noise added to the plant state after
    /// every step (position and velocity alike).
    pub state_noise_std: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_duration: 30.0,
            success_distance: 0.05,
            settle_distance: 0.01,
            state_noise_std: 0.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_duration >= 0.0 && self.max_duration.is_finite()) {
            return Err(Error::scenario("episode.max_duration", "must be finite and non-negative"));
        }
        if !(self.success_distance > 0.0) {
            return Err(Error::scenario("episode.success_distance", "must be positive"));
        }
        if !(self.settle_distance >= 0.0) {
            return Err(Error::scenario("episode.settle_distance", "must be non-negative"));
        }
        if !(self.state_noise_std >= 0.0) {
            return Err(Error::scenario("episode.state_noise_std", "must be non-negative"));
        }
        Ok(())
    }
}

/// The scenario document as written on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub robot: String,
    pub start_q: Vec<f64>,
    pub goal: PoseSpec,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default)]
    pub costs: CostSpec,
    #[serde(default)]
    pub cat: CatConfig,
    #[serde(default)]
    pub low_level: LowLevelSpec,
    #[serde(default)]
    pub safety: SafetySpec,
    #[serde(default)]
    pub episode: EpisodeConfig,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub pairs: Vec<PairSpec>,
}

/// A validated, ready-to-run scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub robot: RobotModel,
    /// Initial state, at rest. Also the state regularization reference.
    pub start: State,
    pub goal: Pose,
    pub mppi: MppiConfig,
    pub noise_std: Vec<f64>,
    pub weights: CostWeights,
    pub cat: CatConfig,
    /// `n x 2n` feedback gain `[diag(kp) | diag(kd)]`.
    pub gain: DMatrix<f64>,
    pub scene: Scene,
    pub pairs: CollisionPairSet,
    pub episode: EpisodeConfig,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn policy(&self) -> Result<GaussianPolicy> {
        GaussianPolicy::zero_mean(self.mppi.horizon, &self.noise_std)
    }

    pub fn task(&self) -> Task {
        Task {
            goal: self.goal,
            reference: self.start.clone(),
            pairs: self.pairs.clone(),
        }
    }

    /// Number of control cycles in a full-length episode.
    pub fn max_cycles(&self) -> usize {
        (self.episode.max_duration / self.mppi.dt + 1e-9).floor() as usize
    }

    /// Builds a scenario from a parsed document. `base_dir` resolves robot
    /// paths that are not bundled names.
    pub fn from_file(file: ScenarioFile, base_dir: Option<&Path>) -> Result<Self> {
        let robot = match builtin_robot(&file.robot) {
            Some(model) => model,
            None => {
                let path = match base_dir {
                    Some(dir) => dir.join(&file.robot),
                    None => PathBuf::from(&file.robot),
                };
                load_robot_description(path)?
            }
        };
        let n = robot.dof();
        if file.start_q.len() != n {
            return Err(Error::scenario(
                "start_q",
                format!("expected {n} joint positions, got {}", file.start_q.len()),
            ));
        }
        for (i, (q, j)) in file.start_q.iter().zip(&robot.joints).enumerate() {
            if !(*q >= j.position_limits.0 && *q <= j.position_limits.1) {
                return Err(Error::scenario(
                    format!("start_q[{i}]"),
                    format!("{q} outside joint limits {:?}", j.position_limits),
                ));
            }
        }
        let start = State::at_rest(DVector::from_column_slice(&file.start_q));

        let c = &file.controller;
        let mppi = MppiConfig {
            rollouts: c.rollouts,
            horizon: c.horizon,
            dt: c.dt,
            temperature: c.temperature,
            step_size: c.step_size,
            seed: 0,
            shift_fill: c.shift_fill,
            parallel: c.parallel,
        };
        mppi.validate()?;
        let noise_std = c.noise_std.expand(n, "controller.noise_std")?;
        if noise_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::scenario("controller.noise_std", "must be non-negative"));
        }

        let cs = &file.costs;
        let weights = CostWeights {
            state_q: DVector::from_vec(cs.state_q.expand(n, "costs.state_q")?),
            state_v: DVector::from_vec(cs.state_v.expand(n, "costs.state_v")?),
            control: DVector::from_vec(cs.control.expand(n, "costs.control")?),
            collision_weight: cs.collision_weight,
            discount: cs.discount,
            stage_discounts: cs.stage_discounts.clone(),
            control_reference: cs.control_reference,
            ..CostWeights::new(n).with_ee_weights(cs.ee_translation, cs.ee_rotation)
        };
        weights.validate(n)?;
        file.cat.validate()?;

        let kp = file.low_level.kp.expand(n, "low_level.kp")?;
        let kd = file.low_level.kd.expand(n, "low_level.kd")?;
        let mut gain = DMatrix::zeros(n, 2 * n);
        for i in 0..n {
            gain[(i, i)] = kp[i];
            gain[(i, n + i)] = kd[i];
        }

        let mut tracks = Vec::with_capacity(file.obstacles.len());
        for (i, o) in file.obstacles.iter().enumerate() {
            if tracks.iter().any(|t: &ObstacleTrack| t.name == o.name) {
                return Err(Error::scenario(
                    format!("obstacles[{i}].name"),
                    format!("duplicate obstacle name {:?}", o.name),
                ));
            }
            tracks.push(build_obstacle(i, o)?);
        }
        let scene = Scene::new(tracks);
        let pairs = build_pairs(&file.pairs, &robot, &scene, file.safety.margin)?;
        file.episode.validate()?;

        Ok(Scenario {
            robot,
            start,
            goal: file.goal.to_pose(),
            mppi,
            noise_std,
            weights,
            cat: file.cat,
            gain,
            scene,
            pairs,
            episode: file.episode.clone(),
            file,
        })
    }
}

fn build_obstacle(i: usize, o: &ObstacleSpec) -> Result<ObstacleTrack> {
    let field = |f: &str| format!("obstacles[{i}].{f}");
    let v = |a: [f64; 3]| Vector3::from(a);
    let primitive = match &o.shape {
        ShapeSpec::Capsule { p0, p1, radius } => Primitive::Capsule(
            Capsule::new(v(*p0), v(*p1), *radius).map_err(|e| Error::scenario(field("shape"), e.to_string()))?,
        ),
        ShapeSpec::Sphere { center, radius } => Primitive::Capsule(
            Capsule::sphere(v(*center), *radius).map_err(|e| Error::scenario(field("shape"), e.to_string()))?,
        ),
        ShapeSpec::Cuboid { half_extents } => Primitive::Cuboid(
            Cuboid::new(v(*half_extents)).map_err(|e| Error::scenario(field("shape"), e.to_string()))?,
        ),
    };
    let keyframes = match (&o.pose, &o.keyframes) {
        (Some(pose), None) => vec![(0.0, pose.to_pose())],
        (None, Some(frames)) => frames
            .iter()
            .map(|k| (k.t, PoseSpec { xyz: k.xyz, rpy: k.rpy }.to_pose()))
            .collect(),
        (None, None) => vec![(0.0, Pose::identity())],
        (Some(_), Some(_)) => {
            return Err(Error::scenario(field("pose"), "give either pose or keyframes, not both"));
        }
    };
    ObstacleTrack::new(o.name.clone(), primitive, keyframes, o.fixture)
}

fn build_pairs(specs: &[PairSpec], robot: &RobotModel, scene: &Scene, margin: f64) -> Result<CollisionPairSet> {
    let mut pairs = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let robot_idx = expand_names(&spec.robot, robot.capsules.len(), |n| robot.capsule_index(n))
            .map_err(|name| Error::scenario(format!("pairs[{i}].robot"), format!("unknown robot capsule {name:?}")))?;
        let env_idx = expand_names(&spec.env, scene.len(), |n| scene.index_of(n))
            .map_err(|name| Error::scenario(format!("pairs[{i}].env"), format!("unknown obstacle {name:?}")))?;
        for r in &robot_idx {
            for e in &env_idx {
                let pair = CollisionPair { robot: *r, env: *e };
                if !pairs.contains(&pair) {
                    pairs.push(pair);
                }
            }
        }
    }
    CollisionPairSet::new(pairs, margin, robot.capsules.len(), scene.len())
}

fn expand_names(
    names: &[String],
    count: usize,
    lookup: impl Fn(&str) -> Option<usize>,
) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for name in names {
        if name == "*" {
            out.extend(0..count);
        } else {
            out.push(lookup(name).ok_or_else(|| name.clone())?);
        }
    }
    Ok(out)
}

pub fn parse_scenario(text: &str, origin: impl AsRef<Path>) -> Result<Scenario> {
    let origin = origin.as_ref();
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    Scenario::from_file(file, origin.parent())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text, path)
}

/// One of the six bundled benchmark scenarios (`1..=6`).
pub fn builtin_scenario(id: usize) -> Result<Scenario> {
    let (name, text) = id
        .checked_sub(1)
        .and_then(|i| SCENARIOS.get(i))
        .ok_or_else(|| Error::InvalidConfig(format!("no bundled scenario {id} (expected 1 to 6)")))?;
    parse_scenario(text, name)
}

/// Bundled scenario number or a path to a scenario file.
pub fn resolve_scenario(spec: &str) -> Result<Scenario> {
    match spec.parse::<usize>() {
        Ok(id) => builtin_scenario(id),
        Err(_) => load_scenario(spec),
    }
}

/// Source text of a bundled scenario.
pub fn builtin_scenario_source(id: usize) -> Option<&'static str> {
    id.checked_sub(1).and_then(|i| SCENARIOS.get(i)).map(|(_, text)| *text)
}
