//! Serial revolute chains and the forward-kinematics feature map.
//!
//! A chain starts at its base pose. Each link first rotates about its joint
//! axis (expressed in the current frame) by the joint angle, then translates by
//! its offset. The segment between consecutive joint positions is the link's
//! capsule axis and its midpoint is the link's control point.

use std::f64::consts::PI;

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const UNIT_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_JOINT_LIMITS: [f64; 2] = [-PI, PI];

fn is_default_limits(limits: &[f64; 2]) -> bool {
    *limits == DEFAULT_JOINT_LIMITS
}

fn default_limits() -> [f64; 2] {
    DEFAULT_JOINT_LIMITS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    /// Unit rotation axis in the parent frame.
    pub joint_axis: [f64; 3],
    /// Translation from this joint to the next, in the link's own frame (m).
    pub link_offset: [f64; 3],
    pub capsule_radius: f64,
    #[serde(default = "default_limits", skip_serializing_if = "is_default_limits")]
    pub joint_limits: [f64; 2],
}

impl LinkSpec {
    pub fn new(joint_axis: [f64; 3], link_offset: [f64; 3], capsule_radius: f64) -> Self {
        Self {
            joint_axis,
            link_offset,
            capsule_radius,
            joint_limits: DEFAULT_JOINT_LIMITS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let axis = Vector3::from(self.joint_axis);
        if !axis.iter().all(|v| v.is_finite()) || (axis.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidSpec(format!(
                "joint axis {:?} is not unit length",
                self.joint_axis
            )));
        }
        if !self.link_offset.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidSpec("link offset must be finite".into()));
        }
        if !(self.capsule_radius > 0.0 && self.capsule_radius.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "capsule radius {} must be positive",
                self.capsule_radius
            )));
        }
        let [lo, hi] = self.joint_limits;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidSpec(format!(
                "joint limits [{lo}, {hi}] are not an interval"
            )));
        }
        Ok(())
    }

    pub fn offset_length(&self) -> f64 {
        Vector3::from(self.link_offset).norm()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotChainSpec {
    pub base_position: [f64; 3],
    /// Unit quaternion stored as `[w, x, y, z]`.
    pub base_orientation: [f64; 4],
    pub links: Vec<LinkSpec>,
}

impl RobotChainSpec {
    /// Seven-joint arm with alternating z/y axes, 0.2 m links and 0.05 m capsules.
    pub fn desk_arm(base_position: [f64; 3]) -> Self {
        let z = [0.0, 0.0, 1.0];
        let y = [0.0, 1.0, 0.0];
        let links = [z, y, z, y, z, y, z]
            .into_iter()
            .map(|axis| LinkSpec::new(axis, [0.0, 0.0, 0.2], 0.05))
            .collect();
        Self {
            base_position,
            base_orientation: [1.0, 0.0, 0.0, 0.0],
            links,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.links.is_empty() {
            return Err(Error::InvalidSpec("robot chain needs at least one link".into()));
        }
        if !self.base_position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidSpec("base position must be finite".into()));
        }
        let q = Vector3::new(
            self.base_orientation[1],
            self.base_orientation[2],
            self.base_orientation[3],
        );
        let norm = (self.base_orientation[0].powi(2) + q.norm_squared()).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidSpec(format!(
                "base orientation {:?} is not a unit quaternion",
                self.base_orientation
            )));
        }
        self.links.iter().try_for_each(LinkSpec::validate)
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    /// Sum of link offset lengths; every point of the chain lies within this of the base.
    pub fn reach(&self) -> f64 {
        self.links.iter().map(LinkSpec::offset_length).sum()
    }

    fn base_rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.base_orientation;
        UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z))
    }
}

/// One link's capsule axis in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: Vector3<f64>,
    pub end: Vector3<f64>,
}

impl Segment {
    pub fn new(start: Vector3<f64>, end: Vector3<f64>) -> Self {
        Self { start, end }
    }

    pub fn midpoint(&self) -> Vector3<f64> {
        (self.start + self.end) * 0.5
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }
}

/// World-space geometry of a single chain at one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPointSet {
    pub segments: Vec<Segment>,
}

impl ControlPointSet {
    pub fn control_points(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.segments.iter().map(Segment::midpoint)
    }

    /// Joint positions from the base to the chain tip (`links + 1` entries).
    pub fn joint_positions(&self) -> Vec<Vector3<f64>> {
        let mut joints: Vec<_> = self.segments.iter().map(|s| s.start).collect();
        if let Some(last) = self.segments.last() {
            joints.push(last.end);
        }
        joints
    }
}

/// A point in configuration space, checked against the robots it drives.
#[derive(Clone, Debug, PartialEq)]
pub struct JointConfiguration {
    angles: Vec<f64>,
}

impl JointConfiguration {
    pub fn new(angles: Vec<f64>, robots: &[RobotChainSpec]) -> Result<Self> {
        let expected = total_dof(robots);
        if angles.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "joint configuration",
                expected,
                got: angles.len(),
            });
        }
        let limits = robots.iter().flat_map(|r| r.links.iter().map(|l| l.joint_limits));
        for (i, (angle, [lo, hi])) in angles.iter().zip(limits).enumerate() {
            if !(lo..=hi).contains(angle) {
                return Err(Error::InvalidInput(format!(
                    "joint {i} angle {angle} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { angles })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.angles
    }
}

pub fn total_dof(robots: &[RobotChainSpec]) -> usize {
    robots.iter().map(RobotChainSpec::dof).sum()
}

/// Dimension of the FK feature vector: three coordinates per link.
pub fn feature_dim(robots: &[RobotChainSpec]) -> usize {
    3 * total_dof(robots)
}

/// Forward kinematics of one chain.
pub fn forward_kinematics(robot: &RobotChainSpec, q: &[f64]) -> Result<ControlPointSet> {
    robot.validate()?;
    if q.len() != robot.dof() {
        return Err(Error::DimensionMismatch {
            context: "forward kinematics",
            expected: robot.dof(),
            got: q.len(),
        });
    }
    let mut segments = Vec::with_capacity(robot.dof());
    chain_segments(robot, q, &mut segments);
    Ok(ControlPointSet { segments })
}

/// Unchecked kernel shared by the feature map and the collision checker.
pub(crate) fn chain_segments(robot: &RobotChainSpec, q: &[f64], out: &mut Vec<Segment>) {
    let mut rotation = robot.base_rotation();
    let mut position = Vector3::from(robot.base_position);
    for (link, &angle) in robot.links.iter().zip(q) {
        let axis = Unit::new_unchecked(Vector3::from(link.joint_axis));
        rotation *= UnitQuaternion::from_axis_angle(&axis, angle);
        let next = position + rotation * Vector3::from(link.link_offset);
        out.push(Segment::new(position, next));
        position = next;
    }
}

/// Segments of every robot in declaration order, for a configuration that
/// concatenates the robots' joint angles.
pub fn system_segments(robots: &[RobotChainSpec], q: &[f64]) -> Result<Vec<Segment>> {
    check_system(robots, q)?;
    let mut out = Vec::with_capacity(q.len());
    let mut offset = 0;
    for robot in robots {
        chain_segments(robot, &q[offset..offset + robot.dof()], &mut out);
        offset += robot.dof();
    }
    Ok(out)
}

fn check_system(robots: &[RobotChainSpec], q: &[f64]) -> Result<()> {
    if robots.is_empty() {
        return Err(Error::InvalidSpec("at least one robot is required".into()));
    }
    robots.iter().try_for_each(RobotChainSpec::validate)?;
    let expected = total_dof(robots);
    if q.len() != expected {
        return Err(Error::DimensionMismatch {
            context: "FK features",
            expected,
            got: q.len(),
        });
    }
    Ok(())
}

/// Control-point coordinates of all links, robot order then link order.
pub fn fk_features(robots: &[RobotChainSpec], q: &[f64]) -> Result<Vec<f64>> {
    check_system(robots, q)?;
    let mut out = vec![0.0; 3 * q.len()];
    fk_features_unchecked(robots, q, &mut out);
    Ok(out)
}

/// Writes features into `out` (length `3 * dof`) without validating the specs.
pub(crate) fn fk_features_unchecked(robots: &[RobotChainSpec], q: &[f64], out: &mut [f64]) {
    let mut segments = Vec::with_capacity(q.len());
    let mut offset = 0;
    for robot in robots {
        chain_segments(robot, &q[offset..offset + robot.dof()], &mut segments);
        offset += robot.dof();
    }
    for (chunk, segment) in out.chunks_exact_mut(3).zip(&segments) {
        chunk.copy_from_slice(segment.midpoint().as_slice());
    }
}

/// Draws each joint angle independently and uniformly within its limits.
pub fn sample_uniform<R: rand::Rng + ?Sized>(robots: &[RobotChainSpec], rng: &mut R) -> Vec<f64> {
    robots
        .iter()
        .flat_map(|r| r.links.iter())
        .map(|link| {
            let [lo, hi] = link.joint_limits;
            lo + (hi - lo) * rng.random::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn one_link() -> RobotChainSpec {
        RobotChainSpec {
            base_position: [0.0; 3],
            base_orientation: [1.0, 0.0, 0.0, 0.0],
            links: vec![LinkSpec::new([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], 0.1)],
        }
    }

    #[test]
    fn unit_link_midpoint() {
        let cps = forward_kinematics(&one_link(), &[0.0]).unwrap();
        let p: Vec<_> = cps.control_points().collect();
        assert_eq!(p[0], Vector3::new(0.5, 0.0, 0.0));
    }

    #[test]
    fn quarter_turn_about_z() {
        let cps = forward_kinematics(&one_link(), &[FRAC_PI_2]).unwrap();
        let p = cps.control_points().next().unwrap();
        assert!((p - Vector3::new(0.0, 0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = forward_kinematics(&one_link(), &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, got: 2, .. }));
    }

    #[test]
    fn non_unit_axis_is_invalid() {
        let mut robot = one_link();
        robot.links[0].joint_axis = [0.0, 0.0, 1.1];
        assert!(matches!(forward_kinematics(&robot, &[0.0]), Err(Error::InvalidSpec(_))));
        robot.links[0].joint_axis = [0.0, 0.0, 1.0];
        robot.links[0].capsule_radius = 0.0;
        assert!(matches!(robot.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn non_unit_base_orientation_is_invalid() {
        let mut robot = one_link();
        robot.base_orientation = [1.0, 0.1, 0.0, 0.0];
        assert!(matches!(robot.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn empty_chain_is_invalid() {
        let mut robot = one_link();
        robot.links.clear();
        assert!(robot.validate().is_err());
    }

    #[test]
    fn joint_configuration_checks_limits() {
        let robots = [one_link()];
        assert!(JointConfiguration::new(vec![0.3], &robots).is_ok());
        assert!(JointConfiguration::new(vec![4.0], &robots).is_err());
        assert!(JointConfiguration::new(vec![0.0, 0.0], &robots).is_err());
    }

    #[test]
    fn default_limits_are_not_serialized() {
        let json = serde_json::to_string(&one_link()).unwrap();
        assert!(!json.contains("joint_limits"));
        let back: RobotChainSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.links[0].joint_limits, DEFAULT_JOINT_LIMITS);
    }
}
