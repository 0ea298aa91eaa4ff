//! Collision world: static fixtures, scripted obstacle tracks, the collision
//! pair registry and batched clearance queries.

use nalgebra::{Translation3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{
    capsule_box_clearance, capsule_box_value, capsule_capsule_clearance, capsule_capsule_value,
    Capsule, Cuboid, Pose,
};
use crate::robot::RobotModel;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Capsule(Capsule),
    Cuboid(Cuboid),
}

/// Environment primitive moved along piecewise-linear keyframes.
#[derive(Clone, Debug)]
pub struct ObstacleTrack {
    pub name: String,
    pub primitive: Primitive,
    /// `(time in seconds, pose)`, strictly increasing in time.
    pub keyframes: Vec<(f64, Pose)>,
    /// Fixtures (table, mounting plates) take part in collision checks but are
    /// excluded from the obstacle-distance metric.
    pub fixture: bool,
}

impl ObstacleTrack {
    pub fn new(
        name: impl Into<String>,
        primitive: Primitive,
        keyframes: Vec<(f64, Pose)>,
        fixture: bool,
    ) -> Result<Self> {
        let name = name.into();
        if keyframes.is_empty() {
            return Err(Error::scenario(
                format!("obstacle {name:?}"),
                "at least one keyframe is required",
            ));
        }
        for w in keyframes.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::scenario(
                    format!("obstacle {name:?}"),
                    format!("keyframe times must be strictly increasing ({} then {})", w[0].0, w[1].0),
                ));
            }
        }
        if !keyframes[0].0.is_finite() || !keyframes[keyframes.len() - 1].0.is_finite() {
            return Err(Error::scenario(format!("obstacle {name:?}"), "non-finite keyframe time"));
        }
        Ok(ObstacleTrack {
            name,
            primitive,
            keyframes,
            fixture,
        })
    }

    pub fn fixed(name: impl Into<String>, primitive: Primitive, pose: Pose, fixture: bool) -> Self {
        ObstacleTrack {
            name: name.into(),
            primitive,
            keyframes: vec![(0.0, pose)],
            fixture,
        }
    }

    /// Pose at time `t`, clamped to the first/last keyframe outside the
    /// scripted interval. Translation is interpolated linearly and rotation
    /// along the shortest arc.
    pub fn pose_at(&self, t: f64) -> Pose {
        let frames = &self.keyframes;
        let (t_first, first) = frames[0];
        if t <= t_first {
            return first;
        }
        let (t_last, last) = frames[frames.len() - 1];
        if t >= t_last {
            return last;
        }
        let idx = frames.partition_point(|(tk, _)| *tk <= t);
        let (t0, p0) = frames[idx - 1];
        let (t1, p1) = frames[idx];
        let s = (t - t0) / (t1 - t0);
        let translation = p0.translation.vector.lerp(&p1.translation.vector, s);
        let rotation = p0
            .rotation
            .try_slerp(&p1.rotation, s, 1e-12)
            .unwrap_or(p0.rotation);
        Pose::from_parts(Translation3::from(translation), rotation)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Scene {
    pub obstacles: Vec<ObstacleTrack>,
}

impl Scene {
    pub fn new(obstacles: Vec<ObstacleTrack>) -> Self {
        Scene { obstacles }
    }

    pub fn len(&self) -> usize {
        self.obstacles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.obstacles.iter().position(|o| o.name == name)
    }

    /// Frozen world at time `t`; rollouts of one control cycle all collide
    /// against the same snapshot.
    pub fn snapshot_at(&self, t: f64) -> SceneSnapshot {
        let poses: Vec<Pose> = self.obstacles.iter().map(|o| o.pose_at(t)).collect();
        let shapes: Vec<WorldShape> = self
            .obstacles
            .iter()
            .zip(&poses)
            .map(|(o, pose)| WorldShape::new(&o.primitive, pose))
            .collect();
        let bounds = shapes.iter().map(WorldShape::bounding_sphere).collect();
        SceneSnapshot {
            time: t,
            poses,
            shapes,
            bounds,
        }
    }
}

/// Environment primitive resolved into world coordinates.
#[derive(Clone, Copy, Debug)]
pub enum WorldShape {
    Capsule(Capsule),
    Cuboid {
        cuboid: Cuboid,
        pose: Pose,
        pose_inv: Pose,
    },
}

impl WorldShape {
    fn new(primitive: &Primitive, pose: &Pose) -> Self {
        match primitive {
            Primitive::Capsule(c) => WorldShape::Capsule(c.transformed(pose)),
            Primitive::Cuboid(b) => WorldShape::Cuboid {
                cuboid: *b,
                pose: *pose,
                pose_inv: pose.inverse(),
            },
        }
    }

    /// Center and radius of a sphere enclosing the shape.
    pub fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        match self {
            WorldShape::Capsule(c) => capsule_bounding_sphere(c),
            WorldShape::Cuboid { cuboid, pose, .. } => {
                (pose.translation.vector, cuboid.half_extents.norm())
            }
        }
    }

    /// Signed clearance (positive = overlap) against a world-frame capsule.
    #[inline]
    pub fn clearance_to(&self, capsule: &Capsule) -> f64 {
        match self {
            WorldShape::Capsule(c) => capsule_capsule_value(capsule, c),
            WorldShape::Cuboid {
                cuboid, pose_inv, ..
            } => capsule_box_value(capsule, cuboid, pose_inv),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SceneSnapshot {
    pub time: f64,
    /// One pose per environment primitive, in scene order.
    pub poses: Vec<Pose>,
    pub shapes: Vec<WorldShape>,
    /// Enclosing sphere of each shape, for broad-phase rejection.
    pub bounds: Vec<(Vector3<f64>, f64)>,
}

impl SceneSnapshot {
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CollisionPair {
    /// Index into `RobotModel::capsules`.
    pub robot: usize,
    /// Index into `Scene::obstacles`.
    pub env: usize,
}

#[derive(Clone, Debug)]
pub struct CollisionPairSet {
    pairs: Vec<CollisionPair>,
    /// Safety margin `d_th` in meters.
    margin: f64,
}

impl CollisionPairSet {
    pub fn new(
        pairs: Vec<CollisionPair>,
        margin: f64,
        robot_capsules: usize,
        env_primitives: usize,
    ) -> Result<Self> {
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::scenario("safety.margin", format!("must be positive, got {margin}")));
        }
        for (i, p) in pairs.iter().enumerate() {
            if p.robot >= robot_capsules {
                return Err(Error::scenario(
                    format!("pairs[{i}]"),
                    format!("robot capsule index {} out of range", p.robot),
                ));
            }
            if p.env >= env_primitives {
                return Err(Error::scenario(
                    format!("pairs[{i}]"),
                    format!("environment primitive index {} out of range", p.env),
                ));
            }
            if pairs[..i].contains(p) {
                return Err(Error::scenario(
                    format!("pairs[{i}]"),
                    format!("duplicate pair ({}, {})", p.robot, p.env),
                ));
            }
        }
        Ok(CollisionPairSet { pairs, margin })
    }

    pub fn empty(margin: f64) -> Self {
        CollisionPairSet {
            pairs: Vec::new(),
            margin,
        }
    }

    pub fn pairs(&self) -> &[CollisionPair] {
        &self.pairs
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Clearance of every pair given world-frame robot capsules.
    #[inline]
    pub fn clearances_into(&self, robot: &[Capsule], snapshot: &SceneSnapshot, out: &mut [f64]) {
        for (dst, pair) in out.iter_mut().zip(&self.pairs) {
            *dst = snapshot.shapes[pair.env].clearance_to(&robot[pair.robot]);
        }
    }

    /// Writes `max(d, -floor)` for every pair clearance `d`. Pairs whose
    /// bounding spheres are at least `floor` apart skip the exact query, so the
    /// result equals `clearances_into` clamped from below at `-floor`.
    #[inline]
    pub fn clearances_floored_into(
        &self,
        robot: &[Capsule],
        snapshot: &SceneSnapshot,
        floor: f64,
        out: &mut [f64],
    ) {
        // Pairs are usually grouped by robot capsule; reuse its bound.
        let mut cached = usize::MAX;
        let (mut ca, mut ra) = (Vector3::zeros(), 0.0);
        for (dst, pair) in out.iter_mut().zip(&self.pairs) {
            let capsule = &robot[pair.robot];
            if pair.robot != cached {
                (ca, ra) = capsule_bounding_sphere(capsule);
                cached = pair.robot;
            }
            let (cb, rb) = &snapshot.bounds[pair.env];
            let reach = floor + ra + rb;
            *dst = if (ca - cb).norm_squared() >= reach * reach {
                -floor
            } else {
                snapshot.shapes[pair.env].clearance_to(capsule).max(-floor)
            };
        }
    }
}

#[inline]
fn capsule_bounding_sphere(c: &Capsule) -> (Vector3<f64>, f64) {
    (0.5 * (c.p0 + c.p1), 0.5 * (c.p1 - c.p0).norm() + c.radius)
}

/// Per-pair signed clearance (positive = overlap) at configuration `q`.
pub fn min_clearances(
    model: &RobotModel,
    q: &[f64],
    snapshot: &SceneSnapshot,
    pairs: &CollisionPairSet,
) -> Result<Vec<f64>> {
    let kin = model.forward_kinematics(q)?;
    let mut robot: Vec<Capsule> = model.capsules.iter().map(|c| c.capsule).collect();
    model.world_capsules_into(&kin.frames, &mut robot);
    let mut out = vec![0.0; pairs.len()];
    pairs.clearances_into(&robot, snapshot, &mut out);
    Ok(out)
}

/// Per-pair clearance through the posed-primitive kernels, without the
/// world-frame caching of [`min_clearances`].
pub fn pair_clearance(
    model: &RobotModel,
    frames: &[Pose],
    scene: &Scene,
    t: f64,
    pair: CollisionPair,
) -> f64 {
    let lc = &model.capsules[pair.robot];
    let robot_pose = frames[lc.link];
    let track = &scene.obstacles[pair.env];
    let env_pose = track.pose_at(t);
    match &track.primitive {
        Primitive::Capsule(c) => capsule_capsule_clearance(&lc.capsule, &robot_pose, c, &env_pose).value,
        Primitive::Cuboid(b) => capsule_box_clearance(&lc.capsule, &robot_pose, b, &env_pose).value,
    }
}
