mod common;

use deepcollide_core::geometry::{
    check_collision, generate_environment, measure_collision_density, random_unit_quaternion,
    segment_primitive_distance, segment_segment_distance, Aabb, CollisionChecker, CollisionLabel,
    Environment, Obstacle, Placement,
};
use deepcollide_core::kinematics::{sample_uniform, LinkSpec, RobotChainSpec, Segment};
use deepcollide_core::rng::substream;
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::Rng;

fn point(rng: &mut impl Rng, half: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

#[test]
fn segment_box_distance_matches_dense_sampling() {
    let mut rng = substream(11, "test/box", 0);
    for _ in 0..100 {
        let obstacle = Obstacle::Box {
            center: point(&mut rng, 0.5).into(),
            half_extents: [
                rng.random_range(0.05..0.5),
                rng.random_range(0.05..0.5),
                rng.random_range(0.05..0.5),
            ],
            orientation: random_unit_quaternion(&mut rng),
        };
        let segment = Segment::new(point(&mut rng, 1.5), point(&mut rng, 1.5));
        let exact = segment_primitive_distance(&segment, &obstacle);
        let dense = common::dense_segment_obstacle(&segment.start, &segment.end, &obstacle, 10_000);
        assert!((exact - dense).abs() < 1e-4, "{exact} vs {dense}");
    }
}

#[test]
fn segment_sphere_distance_matches_dense_sampling() {
    let mut rng = substream(12, "test/sphere", 0);
    for _ in 0..100 {
        let obstacle = Obstacle::Sphere {
            center: point(&mut rng, 0.5).into(),
            radius: rng.random_range(0.05..0.3),
        };
        let segment = Segment::new(point(&mut rng, 1.5), point(&mut rng, 1.5));
        let exact = segment_primitive_distance(&segment, &obstacle);
        let dense = common::dense_segment_obstacle(&segment.start, &segment.end, &obstacle, 10_000);
        assert!((exact - dense).abs() < 1e-4, "{exact} vs {dense}");
    }
}

#[test]
fn labels_agree_with_dense_oracle_off_the_boundary() {
    let mut checked = 0;
    for env_seed in 0..20u64 {
        let robots = 1 + (env_seed % 3) as usize;
        let placement = if env_seed % 2 == 0 { Placement::Far } else { Placement::Close };
        let env = generate_environment(robots, (env_seed * 3 % 26) as usize, env_seed, placement).unwrap();
        let checker = CollisionChecker::new(&env).unwrap();
        let mut rng = substream(env_seed, "test/oracle", 0);
        for _ in 0..10 {
            let q = sample_uniform(&env.robots, &mut rng);
            let gap = common::dense_clearance(&env, &q, 1000);
            if gap.abs() <= 1e-3 {
                continue;
            }
            assert_eq!(checker.check(&q).unwrap(), common::dense_label(gap), "env {env_seed}");
            let analytic = checker.clearance(&q).unwrap();
            assert!((analytic - gap).abs() < 2e-4, "{analytic} vs {gap}");
            checked += 1;
        }
    }
    assert!(checked > 150);
}

#[test]
fn growing_a_sphere_never_clears_a_collision() {
    let mut env = generate_environment(2, 12, 5, Placement::Far).unwrap();
    let mut rng = substream(5, "test/monotone", 0);
    let configs: Vec<Vec<f64>> = (0..200).map(|_| sample_uniform(&env.robots, &mut rng)).collect();
    let before: Vec<_> = configs.iter().map(|q| check_collision(&env, q).unwrap()).collect();
    for obstacle in &mut env.obstacles {
        if let Obstacle::Sphere { radius, .. } = obstacle {
            *radius *= 1.5;
        }
    }
    for (q, old) in configs.iter().zip(before) {
        if old == CollisionLabel::Collision {
            assert_eq!(check_collision(&env, q).unwrap(), CollisionLabel::Collision);
        }
    }
}

fn single_link_env(obstacles: Vec<Obstacle>) -> Environment {
    Environment {
        seed: 0,
        workspace_bounds: Aabb::default(),
        robots: vec![RobotChainSpec {
            base_position: [0.0; 3],
            base_orientation: [1.0, 0.0, 0.0, 0.0],
            links: vec![LinkSpec::new([0.0, 0.0, 1.0], [0.3, 0.0, 0.0], 0.05)],
        }],
        obstacles,
    }
}

#[test]
fn density_extremes() {
    assert_eq!(measure_collision_density(&single_link_env(vec![]), 500, 1).unwrap(), 0.0);
    let enclosing = Obstacle::Sphere {
        center: [0.0; 3],
        radius: 1.4,
    };
    assert_eq!(measure_collision_density(&single_link_env(vec![enclosing]), 500, 1).unwrap(), 1.0);
}

#[test]
fn generation_and_labels_are_reproducible() {
    let a = generate_environment(3, 25, 42, Placement::Far).unwrap();
    let b = generate_environment(3, 25, 42, Placement::Far).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(Environment::from_json(&a.to_json().unwrap()).unwrap(), a);
    assert_eq!(
        measure_collision_density(&a, 300, 9).unwrap(),
        measure_collision_density(&b, 300, 9).unwrap()
    );
    assert_ne!(a, generate_environment(3, 25, 43, Placement::Far).unwrap());
}

proptest! {
    #[test]
    fn capsule_distance_is_symmetric(
        a in prop::array::uniform3(-2.0f64..2.0),
        b in prop::array::uniform3(-2.0f64..2.0),
        c in prop::array::uniform3(-2.0f64..2.0),
        d in prop::array::uniform3(-2.0f64..2.0),
    ) {
        let s = Segment::new(a.into(), b.into());
        let r = Segment::new(c.into(), d.into());
        let forward = segment_segment_distance(&s, &r);
        prop_assert!((forward - segment_segment_distance(&r, &s)).abs() < 1e-12);
        let dense = common::sample_points(&s.start, &s.end, 2000)
            .map(|p| common::point_segment(&p, &r.start, &r.end))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(forward <= dense + 1e-12);
        prop_assert!(dense - forward < 4.0 * 2.0 / 1999.0 + 1e-9);
    }
}
