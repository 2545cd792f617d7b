use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Aabb, Environment, Obstacle};
use crate::kinematics::RobotChainSpec;
use crate::rng::substream;
use crate::{Error, Result};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
const FAR_MIN_SPACING: f64 = 1.5;
const CLOSE_MAX_SPACING: f64 = 0.8;
const SIZE_RANGE: (f64, f64) = (0.05, 0.25);

/// How robot bases are spread out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Every pair of bases at least 1.5 m apart.
    Far,
    /// Every pair of bases at most 0.8 m apart.
    Close,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Far => "far",
            Placement::Close => "close",
        })
    }
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "far" => Ok(Placement::Far),
            "close" => Ok(Placement::Close),
            other => Err(Error::InvalidInput(format!(
                "placement must be `far` or `close`, got `{other}`"
            ))),
        }
    }
}

/// Uniform random rotation (Shoemake's subgroup algorithm), as `[w, x, y, z]`.
pub fn random_unit_quaternion<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (s2, c2) = (2.0 * PI * u2).sin_cos();
    let (s3, c3) = (2.0 * PI * u3).sin_cos();
    let q = [b * c3, a * s2, a * c2, b * s3];
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    q.map(|x| x / norm)
}

fn uniform_point<R: Rng + ?Sized>(bounds: &Aabb, rng: &mut R) -> [f64; 3] {
    std::array::from_fn(|i| bounds.min[i] + (bounds.max[i] - bounds.min[i]) * rng.random::<f64>())
}

fn uniform_in<R: Rng + ?Sized>(range: (f64, f64), rng: &mut R) -> f64 {
    range.0 + (range.1 - range.0) * rng.random::<f64>()
}

/// Seeded random desk environment: `n_robots` desk arms and `n_obstacles`
/// alternating boxes and spheres (box first) inside the default workspace.
pub fn generate_environment(
    n_robots: usize,
    n_obstacles: usize,
    seed: u64,
    placement: Placement,
) -> Result<Environment> {
    if n_robots == 0 {
        return Err(Error::InvalidInput("at least one robot is required".into()));
    }
    let bounds = Aabb::default();

    let mut rng = substream(seed, "env/robots", 0);
    let mut bases: Vec<Vector3<f64>> = Vec::with_capacity(n_robots);
    for _ in 0..n_robots {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let candidate = Vector3::from(uniform_point(&bounds, &mut rng));
            let ok = bases.iter().all(|b| {
                let d = (b - candidate).norm();
                match placement {
                    Placement::Far => d >= FAR_MIN_SPACING,
                    Placement::Close => d <= CLOSE_MAX_SPACING,
                }
            });
            if ok {
                bases.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            let constraint = match placement {
                Placement::Far => format!(
                    "far placement of {n_robots} robots with minimum base spacing {FAR_MIN_SPACING} m"
                ),
                Placement::Close => format!(
                    "close placement of {n_robots} robots with maximum base spacing {CLOSE_MAX_SPACING} m"
                ),
            };
            return Err(Error::GenerationFailure {
                constraint,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        }
    }

    let obstacles = (0..n_obstacles)
        .map(|i| {
            let mut rng = substream(seed, "env/obstacles", i as u64);
            let center = uniform_point(&bounds, &mut rng);
            if i % 2 == 0 {
                let half_extents = std::array::from_fn(|_| uniform_in(SIZE_RANGE, &mut rng));
                Obstacle::Box {
                    center,
                    half_extents,
                    orientation: random_unit_quaternion(&mut rng),
                }
            } else {
                Obstacle::Sphere {
                    center,
                    radius: uniform_in(SIZE_RANGE, &mut rng),
                }
            }
        })
        .collect();

    let env = Environment {
        seed,
        workspace_bounds: bounds,
        robots: bases
            .into_iter()
            .map(|b| RobotChainSpec::desk_arm([b.x, b.y, b.z]))
            .collect(),
        obstacles,
    };
    env.validate()?;
    Ok(env)
}
