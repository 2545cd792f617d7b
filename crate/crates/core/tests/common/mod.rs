//! Independent reference implementations used by the integration tests and
//! the acceptance suite. Apart from the finite-difference check, which only
//! evaluates the loss, nothing here calls into the library's geometry, kernel
//! or training code.

#![allow(dead_code)]

use deepcollide_core::deepcollide::{
    l1_loss, DeepCollideModel, ModelConfig, PositionalEncodingSpec,
};
use deepcollide_core::fastron::FastronConfig;
use deepcollide_core::geometry::{CollisionLabel, Environment, Obstacle};
use deepcollide_core::kinematics::RobotChainSpec;
use deepcollide_core::rng::substream;
use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use rand::Rng;

/// Rotation matrix for `angle` about the unit `axis` (Rodrigues).
pub fn rodrigues(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
    let k = Vector3::from(axis);
    let cross = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + cross * angle.sin() + cross * cross * (1.0 - angle.cos())
}

/// Rotation matrix of a unit quaternion `[w, x, y, z]`.
pub fn quat_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// One capsule link in world coordinates.
#[derive(Clone, Debug)]
pub struct RefLink {
    pub start: Vector3<f64>,
    pub end: Vector3<f64>,
    pub radius: f64,
    pub chain: usize,
    pub index: usize,
}

pub fn reference_links(robots: &[RobotChainSpec], q: &[f64]) -> Vec<RefLink> {
    let mut out = Vec::new();
    let mut k = 0;
    for (chain, robot) in robots.iter().enumerate() {
        let mut rotation = quat_matrix(robot.base_orientation);
        let mut position = Vector3::from(robot.base_position);
        for (index, link) in robot.links.iter().enumerate() {
            rotation *= rodrigues(link.joint_axis, q[k]);
            k += 1;
            let next = position + rotation * Vector3::from(link.link_offset);
            out.push(RefLink {
                start: position,
                end: next,
                radius: link.capsule_radius,
                chain,
                index,
            });
            position = next;
        }
    }
    out
}

/// Link midpoints flattened as `x, y, z` per link.
pub fn reference_features(robots: &[RobotChainSpec], q: &[f64]) -> Vec<f64> {
    reference_links(robots, q)
        .iter()
        .flat_map(|l| {
            let m = 0.5 * (l.start + l.end);
            [m.x, m.y, m.z]
        })
        .collect()
}

pub fn point_segment(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 == 0.0 { 0.0 } else { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) };
    (p - (a + ab * t)).norm()
}

/// Distance from a point to an obstacle's surface, zero inside.
pub fn point_obstacle(p: &Vector3<f64>, obstacle: &Obstacle) -> f64 {
    match obstacle {
        Obstacle::Sphere { center, radius } => ((p - Vector3::from(*center)).norm() - radius).max(0.0),
        Obstacle::Box {
            center,
            half_extents,
            orientation,
        } => {
            let local = quat_matrix(*orientation).transpose() * (p - Vector3::from(*center));
            let outside = Vector3::new(
                (local.x.abs() - half_extents[0]).max(0.0),
                (local.y.abs() - half_extents[1]).max(0.0),
                (local.z.abs() - half_extents[2]).max(0.0),
            );
            outside.norm()
        }
    }
}

pub fn sample_points(a: &Vector3<f64>, b: &Vector3<f64>, count: usize) -> impl Iterator<Item = Vector3<f64>> {
    let (a, b) = (*a, *b);
    (0..count).map(move |i| a + (b - a) * (i as f64 / (count - 1) as f64))
}

/// Minimum over `count` evenly spaced points of the segment-to-obstacle distance.
pub fn dense_segment_obstacle(a: &Vector3<f64>, b: &Vector3<f64>, obstacle: &Obstacle, count: usize) -> f64 {
    sample_points(a, b, count)
        .map(|p| point_obstacle(&p, obstacle))
        .fold(f64::INFINITY, f64::min)
}

/// Smallest surface gap found by dense sampling along every link.
///
/// Each tested pair's distance is overestimated by at most half the
/// sampling step, so a gap below `-step` or above `step` is decisive.
pub fn dense_clearance(env: &Environment, q: &[f64], points_per_link: usize) -> f64 {
    let links = reference_links(&env.robots, q);
    let mut gap = f64::INFINITY;
    for link in &links {
        for obstacle in &env.obstacles {
            let d = dense_segment_obstacle(&link.start, &link.end, obstacle, points_per_link);
            gap = gap.min(d - link.radius);
        }
    }
    for (i, a) in links.iter().enumerate() {
        for b in &links[i + 1..] {
            if a.chain == b.chain && b.index == a.index + 1 {
                continue;
            }
            let d = sample_points(&a.start, &a.end, points_per_link)
                .map(|p| point_segment(&p, &b.start, &b.end))
                .fold(f64::INFINITY, f64::min);
            gap = gap.min(d - a.radius - b.radius);
        }
    }
    gap
}

pub fn dense_label(gap: f64) -> CollisionLabel {
    if gap <= 0.0 {
        CollisionLabel::Collision
    } else {
        CollisionLabel::Free
    }
}

/// Kernel perceptron over a Gram matrix materialised up front. The
/// hypothesis follows the same incremental column update as the lazy
/// trainer; its agreement with a from-scratch `K · α` is checked separately.
pub struct NaiveFastron {
    pub alpha: Vec<f64>,
    pub hypothesis: Vec<f64>,
    pub converged: bool,
}

pub fn naive_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 / (1.0 + 0.5 * gamma * sq).powi(2)
}

pub fn naive_fastron(features: &[Vec<f64>], labels: &[f64], config: &FastronConfig) -> NaiveFastron {
    let n = features.len();
    let gram: Vec<Vec<f64>> = features
        .iter()
        .map(|a| features.iter().map(|b| naive_kernel(a, b, config.gamma)).collect())
        .collect();
    let mut alpha = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut converged = false;
    let mut updates = 0;
    loop {
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let m = labels[i] * f[i];
            if m <= 0.0 && worst.is_none_or(|(_, w)| m < w) {
                worst = Some((i, m));
            }
        }
        let Some((i, _)) = worst else {
            converged = true;
            break;
        };
        if updates == config.max_updates {
            break;
        }
        let target = if labels[i] > 0.0 { config.beta } else { 1.0 };
        let delta = target * labels[i] - f[i];
        alpha[i] += delta;
        for (fj, row) in f.iter_mut().zip(&gram) {
            *fj += delta * row[i];
        }
        updates += 1;
    }
    if converged {
        let mut rejected = vec![false; n];
        loop {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..n {
                if alpha[i] == 0.0 || rejected[i] {
                    continue;
                }
                let v = labels[i] * (f[i] - alpha[i]);
                if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            let Some((k, _)) = best else { break };
            let g: Vec<f64> = (0..n).map(|j| f[j] - alpha[k] * gram[j][k]).collect();
            if (0..n).all(|j| labels[j] * g[j] > 0.0) {
                alpha[k] = 0.0;
                f = g;
            } else {
                rejected[k] = true;
            }
        }
    }
    NaiveFastron {
        alpha,
        hypothesis: f,
        converged,
    }
}

/// Indices of points not strictly dominated in both coordinates, by pairwise comparison.
pub fn brute_force_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .any(|p| p.0 < points[i].0 && p.1 < points[i].1)
        })
        .collect()
}

/// Adam on one scalar, written out from the recurrence.
pub fn adam_trace(grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> Vec<f64> {
    let (mut p, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
    let mut out = Vec::new();
    for (t, g) in grads.iter().enumerate() {
        let t = (t + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        p -= lr * m_hat / (v_hat.sqrt() + eps);
        out.push(p);
    }
    out
}

/// Seed-0 model with three inputs, two frequencies and eight hidden units.
pub fn tiny_model() -> DeepCollideModel {
    let encoding = PositionalEncodingSpec::new(2, 1.0).unwrap();
    DeepCollideModel::new(ModelConfig::new(encoding, 3, 8), 0).unwrap()
}

/// Batch of `rows` inputs in `[-1, 1]^3` with targets in `{-1, +1}`.
pub fn tiny_batch(rows: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut rng = substream(seed, "test/tiny-batch", 0);
    let x = Array2::from_shape_simple_fn((rows, 3), || rng.random_range(-1.0..1.0));
    let y = (0..rows).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    (x, y)
}

fn training_loss(model: &DeepCollideModel, x: &Array2<f64>, targets: &[f64]) -> f64 {
    let scores = model.forward_train(x.view()).unwrap().scores();
    l1_loss(scores.as_slice().unwrap(), targets)
}

/// Largest `|analytic - fd| / max(1, |fd|)` over every parameter, with
/// central differences of step `step` on the training-mode loss.
pub fn gradient_check(model: &DeepCollideModel, x: &Array2<f64>, targets: &[f64], step: f64) -> (f64, usize) {
    let cache = model.forward_train(x.view()).unwrap();
    let (grads, _) = model.backward(&cache, targets).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(|t| t.to_vec()).collect();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (t, tensor) in analytic.iter().enumerate() {
        for (k, &a) in tensor.iter().enumerate() {
            let original = probe.parameters_mut()[t][k];
            probe.parameters_mut()[t][k] = original + step;
            let plus = training_loss(&probe, x, targets);
            probe.parameters_mut()[t][k] = original - step;
            let minus = training_loss(&probe, x, targets);
            probe.parameters_mut()[t][k] = original;
            let fd = (plus - minus) / (2.0 * step);
            worst = worst.max((a - fd).abs() / fd.abs().max(1.0));
            count += 1;
        }
    }
    (worst, count)
}

/// Points in `[-1, 1]^dim` labeled by a noisy ball, as rows and as vectors.
pub fn ball_dataset(seed: u64, n: usize, dim: usize) -> (Array2<f64>, Vec<CollisionLabel>) {
    let mut rng = substream(seed, "test/ball", 0);
    let x = Array2::from_shape_simple_fn((n, dim), || rng.random_range(-1.0..1.0));
    let labels = x
        .rows()
        .into_iter()
        .map(|row| {
            let inside = row.dot(&row) < 0.4 * dim as f64;
            if inside != (rng.random::<f64>() < 0.1) {
                CollisionLabel::Collision
            } else {
                CollisionLabel::Free
            }
        })
        .collect();
    (x, labels)
}

pub fn rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}
