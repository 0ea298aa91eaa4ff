//! Convex collision primitives and analytic narrow-phase distance kernels.
//!
//! Signed clearances follow the controller convention: negative values mean
//! the primitives are apart, positive values mean they overlap. Use
//! [`SignedClearance::separation`] for the report convention (positive =
//! clear).
//!
//! Every function here is pure and allocation free; rollout workers call them
//! concurrently on shared inputs.

use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rigid transform (element of SE(3)).
pub type Pose = Isometry3<f64>;

/// Squared lengths below this are treated as zero-length segments.
const DEGENERATE_SQ: f64 = 1e-24;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub p0: Vector3<f64>,
    pub p1: Vector3<f64>,
    pub radius: f64,
}

impl Capsule {
    pub fn new(p0: Vector3<f64>, p1: Vector3<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "capsule radius must be positive and finite, got {radius}"
            )));
        }
        if !(p0.iter().chain(p1.iter()).all(|c| c.is_finite())) {
            return Err(Error::InvalidConfig(
                "capsule endpoints must be finite".to_string(),
            ));
        }
        Ok(Capsule { p0, p1, radius })
    }

    pub fn sphere(center: Vector3<f64>, radius: f64) -> Result<Self> {
        Capsule::new(center, center, radius)
    }

    pub fn length(&self) -> f64 {
        (self.p1 - self.p0).norm()
    }

    /// Capsule with endpoints mapped through `pose`.
    pub fn transformed(&self, pose: &Pose) -> Capsule {
        Capsule {
            p0: pose.transform_point(&Point3::from(self.p0)).coords,
            p1: pose.transform_point(&Point3::from(self.p1)).coords,
            radius: self.radius,
        }
    }
}

/// Axis-aligned box in its own frame, centered on the frame origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub half_extents: Vector3<f64>,
}

impl Cuboid {
    pub fn new(half_extents: Vector3<f64>) -> Result<Self> {
        if !half_extents.iter().all(|h| *h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "box half-extents must be positive, got {:?}",
                half_extents.as_slice()
            )));
        }
        Ok(Cuboid { half_extents })
    }
}

/// Pair clearance with witness points on each primitive surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedClearance {
    /// Positive = penetration depth, negative = separation distance.
    pub value: f64,
    pub witness_a: Vector3<f64>,
    pub witness_b: Vector3<f64>,
}

impl SignedClearance {
    /// Report convention: positive when the primitives are apart.
    pub fn separation(&self) -> f64 {
        -self.value
    }

    pub fn is_overlapping(&self) -> bool {
        self.value > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentDistance {
    pub distance: f64,
    /// Parameter on the first segment, in `[0, 1]`.
    pub u: f64,
    /// Parameter on the second segment, in `[0, 1]`.
    pub v: f64,
}

/// Closest points between segments `a0 + u (a1 - a0)` and `b0 + v (b1 - b0)`.
///
/// Zero-length segments are handled as points. For parallel segments the
/// first parameter is clamped first and the second recomputed from it, which
/// makes the returned pair deterministic among the infinitely many minimizers.
pub fn segment_segment_distance(
    a0: &Vector3<f64>,
    a1: &Vector3<f64>,
    b0: &Vector3<f64>,
    b1: &Vector3<f64>,
) -> SegmentDistance {
    let (u, v) = closest_segment_params(a0, a1, b0, b1);
    let pa = a0 + (a1 - a0) * u;
    let pb = b0 + (b1 - b0) * v;
    SegmentDistance {
        distance: (pa - pb).norm(),
        u,
        v,
    }
}

#[inline]
fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

#[inline]
fn closest_segment_params(
    a0: &Vector3<f64>,
    a1: &Vector3<f64>,
    b0: &Vector3<f64>,
    b1: &Vector3<f64>,
) -> (f64, f64) {
    let d1 = a1 - a0;
    let d2 = b1 - b0;
    let r = a0 - b0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);

    if a <= DEGENERATE_SQ && e <= DEGENERATE_SQ {
        return (0.0, 0.0);
    }
    if a <= DEGENERATE_SQ {
        return (0.0, clamp01(f / e));
    }
    let c = d1.dot(&r);
    if e <= DEGENERATE_SQ {
        return (clamp01(-c / a), 0.0);
    }

    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    // Relative test: sin^2 of the angle between the axes.
    let mut u = if denom > 1e-14 * a * e {
        clamp01((b * f - c * e) / denom)
    } else {
        0.0
    };
    let mut v = (b * u + f) / e;
    if v < 0.0 {
        v = 0.0;
        u = clamp01(-c / a);
    } else if v > 1.0 {
        v = 1.0;
        u = clamp01((b - c) / a);
    }
    (u, v)
}

/// Any unit vector orthogonal to `axis` (or +x when `axis` is zero).
fn orthogonal_unit(axis: &Vector3<f64>) -> Vector3<f64> {
    let n = axis.norm();
    if n <= 1e-12 {
        return Vector3::x();
    }
    let a = axis / n;
    let helper = if a.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    a.cross(&helper).normalize()
}

/// Capsule-capsule clearance with both capsules already in a common frame.
pub fn capsule_capsule_world(a: &Capsule, b: &Capsule) -> SignedClearance {
    let (u, v) = closest_segment_params(&a.p0, &a.p1, &b.p0, &b.p1);
    let ca = a.p0 + (a.p1 - a.p0) * u;
    let cb = b.p0 + (b.p1 - b.p0) * v;
    let diff = cb - ca;
    let dist = diff.norm();
    let normal = if dist > 1e-12 {
        diff / dist
    } else {
        // Coincident axes: any direction orthogonal to the first axis.
        orthogonal_unit(&(a.p1 - a.p0))
    };
    SignedClearance {
        value: a.radius + b.radius - dist,
        witness_a: ca + normal * a.radius,
        witness_b: cb - normal * b.radius,
    }
}

/// Value-only variant of [`capsule_capsule_world`] for the rollout hot path.
#[inline]
pub fn capsule_capsule_value(a: &Capsule, b: &Capsule) -> f64 {
    let (u, v) = closest_segment_params(&a.p0, &a.p1, &b.p0, &b.p1);
    let ca = a.p0 + (a.p1 - a.p0) * u;
    let cb = b.p0 + (b.p1 - b.p0) * v;
    a.radius + b.radius - (cb - ca).norm()
}

/// Signed clearance between two posed capsules. Symmetric in its arguments.
pub fn capsule_capsule_clearance(
    a: &Capsule,
    pose_a: &Pose,
    b: &Capsule,
    pose_b: &Pose,
) -> SignedClearance {
    capsule_capsule_world(&a.transformed(pose_a), &b.transformed(pose_b))
}

/// Exact minimum of the squared distance from `p(u) = start + u * dir`,
/// `u ∈ [0, 1]`, to the box `[-h, h]`. Returns `(squared distance, u)`.
///
/// The squared distance is convex and piecewise quadratic in `u`, with
/// breakpoints where a coordinate crosses a slab boundary; each piece is
/// minimized in closed form.
fn segment_box_sq_distance(
    start: &Vector3<f64>,
    dir: &Vector3<f64>,
    h: &Vector3<f64>,
) -> (f64, f64) {
    let mut knots = [0.0f64; 8];
    let mut n_knots = 0;
    knots[n_knots] = 0.0;
    n_knots += 1;
    for i in 0..3 {
        if dir[i] != 0.0 {
            for bound in [-h[i], h[i]] {
                let u = (bound - start[i]) / dir[i];
                if u > 0.0 && u < 1.0 {
                    knots[n_knots] = u;
                    n_knots += 1;
                }
            }
        }
    }
    knots[n_knots] = 1.0;
    n_knots += 1;
    let knots = &mut knots[..n_knots];
    knots.sort_by(|a, b| a.total_cmp(b));

    let sq_at = |u: f64| -> f64 {
        let p = start + dir * u;
        (0..3)
            .map(|i| {
                let excess = (p[i].abs() - h[i]).max(0.0);
                excess * excess
            })
            .sum()
    };

    let mut best = (sq_at(0.0), 0.0);
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let pm = start + dir * mid;
        // Quadratic A u^2 + B u (+ const) over the active outside slabs.
        let mut qa = 0.0;
        let mut qb = 0.0;
        for i in 0..3 {
            let offset = if pm[i] > h[i] {
                start[i] - h[i]
            } else if pm[i] < -h[i] {
                start[i] + h[i]
            } else {
                continue;
            };
            qa += dir[i] * dir[i];
            qb += 2.0 * dir[i] * offset;
        }
        let candidate = if qa > 0.0 {
            (-qb / (2.0 * qa)).clamp(lo, hi)
        } else {
            lo
        };
        for u in [candidate, hi] {
            let sq = sq_at(u);
            if sq < best.0 {
                best = (sq, u);
            }
        }
    }
    best
}

/// Depth of a point inside the box (distance to the nearest face), negative
/// outside along at least one axis.
fn interior_depth(p: &Vector3<f64>, h: &Vector3<f64>) -> (f64, usize) {
    let mut depth = f64::INFINITY;
    let mut axis = 0;
    for i in 0..3 {
        let d = h[i] - p[i].abs();
        if d < depth {
            depth = d;
            axis = i;
        }
    }
    (depth, axis)
}

/// Parameter interval of the segment lying inside the box, if any.
fn clip_segment_to_box(
    start: &Vector3<f64>,
    dir: &Vector3<f64>,
    h: &Vector3<f64>,
) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for i in 0..3 {
        if dir[i].abs() < 1e-15 {
            if start[i].abs() > h[i] {
                return None;
            }
        } else {
            let mut ta = (-h[i] - start[i]) / dir[i];
            let mut tb = (h[i] - start[i]) / dir[i];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((t0, t1))
}

/// Signed clearance between a posed capsule and a posed box.
///
/// Exact whenever the capsule axis does not touch the box, which covers the
/// disjoint regime and shallow overlaps. When the axis enters the box the
/// penetration depth is approximated by the deepest of the segment endpoints
/// and the midpoint of the inside chord, plus the radius.
pub fn capsule_box_clearance(
    capsule: &Capsule,
    capsule_pose: &Pose,
    cuboid: &Cuboid,
    box_pose: &Pose,
) -> SignedClearance {
    capsule_box_world(&capsule.transformed(capsule_pose), cuboid, box_pose)
}

/// [`capsule_box_clearance`] with the capsule already in world coordinates.
pub fn capsule_box_world(capsule: &Capsule, cuboid: &Cuboid, box_pose: &Pose) -> SignedClearance {
    let h = &cuboid.half_extents;
    let start = box_pose
        .inverse_transform_point(&Point3::from(capsule.p0))
        .coords;
    let end = box_pose
        .inverse_transform_point(&Point3::from(capsule.p1))
        .coords;
    let dir = end - start;
    let (sq, u) = segment_box_sq_distance(&start, &dir, h);
    let to_world = |p: Vector3<f64>| box_pose.transform_point(&Point3::from(p)).coords;

    let dist = sq.sqrt();
    if dist > 1e-12 {
        let p = start + dir * u;
        let q = Vector3::new(
            p.x.clamp(-h.x, h.x),
            p.y.clamp(-h.y, h.y),
            p.z.clamp(-h.z, h.z),
        );
        let n = (p - q) / dist;
        return SignedClearance {
            value: capsule.radius - dist,
            witness_a: to_world(p - n * capsule.radius),
            witness_b: to_world(q),
        };
    }

    let mut candidates = [(start, 0.0), (end, 1.0), (start, 0.0)];
    if let Some((t0, t1)) = clip_segment_to_box(&start, &dir, h) {
        let t = 0.5 * (t0 + t1);
        candidates[2] = (start + dir * t, t);
    }
    let mut deepest = (f64::NEG_INFINITY, 0, start, 0.0);
    for (p, t) in candidates {
        let (depth, axis) = interior_depth(&p, h);
        if depth > deepest.0 {
            deepest = (depth, axis, p, t);
        }
    }
    let (depth, axis, p, t) = deepest;
    let depth = depth.max(0.0);
    let sign = if p[axis] >= 0.0 { 1.0 } else { -1.0 };
    let mut outward = Vector3::zeros();
    outward[axis] = sign;
    let mut face = p;
    face[axis] = sign * h[axis];

    // Push the capsule witness off the axis in a direction that stays on the
    // lateral surface for interior axis points.
    let mut w = -outward;
    if t > 0.0 && t < 1.0 && dir.norm_squared() > DEGENERATE_SQ {
        let d = dir.normalize();
        let lateral = w - d * w.dot(&d);
        w = if lateral.norm() > 1e-9 {
            lateral.normalize()
        } else {
            orthogonal_unit(&d)
        };
    }
    SignedClearance {
        value: capsule.radius + depth,
        witness_a: to_world(p + w * capsule.radius),
        witness_b: to_world(face),
    }
}

/// Value-only capsule-box clearance for the rollout hot path. The capsule is
/// given in world coordinates and the box through the inverse of its pose.
#[inline]
pub fn capsule_box_value(capsule: &Capsule, cuboid: &Cuboid, box_pose_inv: &Pose) -> f64 {
    let h = &cuboid.half_extents;
    let start = box_pose_inv.transform_point(&Point3::from(capsule.p0)).coords;
    let end = box_pose_inv.transform_point(&Point3::from(capsule.p1)).coords;
    let dir = end - start;
    let (sq, _) = segment_box_sq_distance(&start, &dir, h);
    let dist = sq.sqrt();
    if dist > 1e-12 {
        return capsule.radius - dist;
    }
    let mut depth = interior_depth(&start, h).0.max(interior_depth(&end, h).0);
    if let Some((t0, t1)) = clip_segment_to_box(&start, &dir, h) {
        depth = depth.max(interior_depth(&(start + dir * (0.5 * (t0 + t1))), h).0);
    }
    capsule.radius + depth.max(0.0)
}
