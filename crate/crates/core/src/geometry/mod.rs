//! Environments and the exact ground-truth collision oracle.
//!
//! Robot links are capsules around their FK segments. Obstacles are spheres
//! and oriented boxes. A configuration is in collision when any capsule
//! touches an obstacle, a link of another robot, or a non-adjacent link of its
//! own chain. Touching surfaces count as collision.

mod distance;
mod generate;

use std::fmt;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::kinematics::{self, RobotChainSpec, Segment};
use crate::rng::substream;
use crate::{Error, Result};

pub use distance::{
    point_box_distance_local, point_segment_distance, segment_box_distance,
    segment_segment_distance, TERNARY_TOLERANCE,
};
pub use generate::{generate_environment, random_unit_quaternion, Placement};

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn cube(half_width: f64) -> Self {
        Self {
            min: [-half_width; 3],
            max: [half_width; 3],
        }
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }
}

impl Default for Aabb {
    fn default() -> Self {
        Self::cube(1.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Obstacle {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        /// Unit quaternion `[w, x, y, z]`.
        orientation: [f64; 4],
    },
}

impl Obstacle {
    pub fn center(&self) -> [f64; 3] {
        match self {
            Obstacle::Sphere { center, .. } | Obstacle::Box { center, .. } => *center,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Obstacle::Sphere { center, radius } => {
                if !finite(center) || !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidSpec(format!("bad sphere radius {radius}")));
                }
            }
            Obstacle::Box {
                center,
                half_extents,
                orientation,
            } => {
                if !finite(center) || !half_extents.iter().all(|h| *h > 0.0 && h.is_finite()) {
                    return Err(Error::InvalidSpec(format!(
                        "bad box half extents {half_extents:?}"
                    )));
                }
                let norm = orientation.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidSpec(format!(
                        "box orientation {orientation:?} is not a unit quaternion"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ground-truth label: `-1` free, `+1` collision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CollisionLabel {
    Free,
    Collision,
}

impl CollisionLabel {
    pub fn value(self) -> i8 {
        match self {
            CollisionLabel::Free => -1,
            CollisionLabel::Collision => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }

    pub fn from_value(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(CollisionLabel::Free),
            1 => Ok(CollisionLabel::Collision),
            other => Err(Error::Format(format!("label {other} is not -1 or +1"))),
        }
    }

    /// Decision rule shared by both models: scores at or above zero are collisions.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            CollisionLabel::Collision
        } else {
            CollisionLabel::Free
        }
    }

    pub fn is_collision(self) -> bool {
        self == CollisionLabel::Collision
    }
}

impl fmt::Display for CollisionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub seed: u64,
    pub workspace_bounds: Aabb,
    pub robots: Vec<RobotChainSpec>,
    pub obstacles: Vec<Obstacle>,
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        if self.robots.is_empty() {
            return Err(Error::InvalidSpec("environment needs at least one robot".into()));
        }
        self.robots.iter().try_for_each(RobotChainSpec::validate)?;
        for obstacle in &self.obstacles {
            obstacle.validate()?;
            if !self.workspace_bounds.contains(&obstacle.center()) {
                return Err(Error::InvalidSpec(format!(
                    "obstacle center {:?} outside workspace bounds",
                    obstacle.center()
                )));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        kinematics::total_dof(&self.robots)
    }

    pub fn feature_dim(&self) -> usize {
        kinematics::feature_dim(&self.robots)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Environment = serde_json::from_str(text)?;
        env.validate()?;
        Ok(env)
    }

    /// Short content hash used to tie datasets and models to their environment.
    pub fn reference(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("environment serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(&digest[..8])
    }
}

/// Distance between a segment and an obstacle surface, clamped at zero.
pub fn segment_primitive_distance(segment: &Segment, obstacle: &Obstacle) -> f64 {
    PreparedObstacle::new(obstacle).distance(segment)
}

#[derive(Clone, Debug)]
enum PreparedObstacle {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    Box {
        center: Vector3<f64>,
        world_to_box: Matrix3<f64>,
        half_extents: Vector3<f64>,
        bound: f64,
    },
}

impl PreparedObstacle {
    fn new(obstacle: &Obstacle) -> Self {
        match obstacle {
            Obstacle::Sphere { center, radius } => PreparedObstacle::Sphere {
                center: Vector3::from(*center),
                radius: *radius,
            },
            Obstacle::Box {
                center,
                half_extents,
                orientation,
            } => {
                let [w, x, y, z] = *orientation;
                let rotation = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
                let half_extents = Vector3::from(*half_extents);
                PreparedObstacle::Box {
                    center: Vector3::from(*center),
                    world_to_box: rotation.to_rotation_matrix().matrix().transpose(),
                    bound: half_extents.norm(),
                    half_extents,
                }
            }
        }
    }

    fn distance(&self, segment: &Segment) -> f64 {
        match self {
            PreparedObstacle::Sphere { center, radius } => {
                (point_segment_distance(center, &segment.start, &segment.end) - radius).max(0.0)
            }
            PreparedObstacle::Box {
                center,
                world_to_box,
                half_extents,
                ..
            } => segment_box_distance(segment, center, world_to_box, half_extents),
        }
    }

    fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        match self {
            PreparedObstacle::Sphere { center, radius } => (*center, *radius),
            PreparedObstacle::Box { center, bound, .. } => (*center, *bound),
        }
    }
}

/// Collision oracle with per-environment precomputation.
#[derive(Clone, Debug)]
pub struct CollisionChecker {
    robots: Vec<RobotChainSpec>,
    radii: Vec<f64>,
    obstacles: Vec<PreparedObstacle>,
    /// Link index pairs that are tested against each other.
    link_pairs: Vec<(usize, usize)>,
    dof: usize,
}

impl CollisionChecker {
    pub fn new(env: &Environment) -> Result<Self> {
        env.validate()?;
        let mut radii = Vec::new();
        let mut chain_of = Vec::new();
        for (r, robot) in env.robots.iter().enumerate() {
            for link in &robot.links {
                radii.push(link.capsule_radius);
                chain_of.push(r);
            }
        }
        let n = radii.len();
        let mut link_pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = chain_of[i] == chain_of[j] && j == i + 1;
                if !adjacent {
                    link_pairs.push((i, j));
                }
            }
        }
        Ok(Self {
            robots: env.robots.clone(),
            radii,
            obstacles: env.obstacles.iter().map(PreparedObstacle::new).collect(),
            link_pairs,
            dof: env.dof(),
        })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    fn segments(&self, q: &[f64]) -> Result<Vec<Segment>> {
        if q.len() != self.dof {
            return Err(Error::DimensionMismatch {
                context: "collision check",
                expected: self.dof,
                got: q.len(),
            });
        }
        let mut out = Vec::with_capacity(self.dof);
        let mut offset = 0;
        for robot in &self.robots {
            kinematics::chain_segments(robot, &q[offset..offset + robot.dof()], &mut out);
            offset += robot.dof();
        }
        Ok(out)
    }

    pub fn check(&self, q: &[f64]) -> Result<CollisionLabel> {
        let segments = self.segments(q)?;
        let hit = self.any_contact(&segments);
        Ok(if hit {
            CollisionLabel::Collision
        } else {
            CollisionLabel::Free
        })
    }

    fn any_contact(&self, segments: &[Segment]) -> bool {
        for (segment, &radius) in segments.iter().zip(&self.radii) {
            let mid = segment.midpoint();
            let half = 0.5 * segment.length();
            for obstacle in &self.obstacles {
                let (c, bound) = obstacle.bounding_sphere();
                if (mid - c).norm() - half - bound > radius {
                    continue;
                }
                if obstacle.distance(segment) <= radius {
                    return true;
                }
            }
        }
        for &(i, j) in &self.link_pairs {
            let (a, b) = (&segments[i], &segments[j]);
            let reach = 0.5 * (a.length() + b.length());
            let limit = self.radii[i] + self.radii[j];
            if (a.midpoint() - b.midpoint()).norm() - reach > limit {
                continue;
            }
            if segment_segment_distance(a, b) <= limit {
                return true;
            }
        }
        false
    }

    /// Smallest surface gap over every tested pair; non-positive means collision.
    pub fn clearance(&self, q: &[f64]) -> Result<f64> {
        let segments = self.segments(q)?;
        let mut gap = f64::INFINITY;
        for (segment, &radius) in segments.iter().zip(&self.radii) {
            for obstacle in &self.obstacles {
                gap = gap.min(obstacle.distance(segment) - radius);
            }
        }
        for &(i, j) in &self.link_pairs {
            let d = segment_segment_distance(&segments[i], &segments[j]);
            gap = gap.min(d - self.radii[i] - self.radii[j]);
        }
        Ok(gap)
    }

    /// Link pairs tested for contact (indices into the flattened link list).
    pub fn link_pairs(&self) -> &[(usize, usize)] {
        &self.link_pairs
    }
}

pub fn check_collision(env: &Environment, q: &[f64]) -> Result<CollisionLabel> {
    CollisionChecker::new(env)?.check(q)
}

/// Fraction of `n` uniformly drawn configurations that are in collision.
pub fn measure_collision_density(env: &Environment, n: usize, seed: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("density needs at least one sample".into()));
    }
    let checker = CollisionChecker::new(env)?;
    let hits: usize = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, "density", i as u64);
            let q = kinematics::sample_uniform(&env.robots, &mut rng);
            usize::from(checker.check(&q).map(CollisionLabel::is_collision).unwrap_or(false))
        })
        .sum();
    Ok(hits as f64 / n as f64)
}
