use std::f64::consts::PI;

use deepcollide_core::dataset::{
    load, sample_dataset, save, scale_targets, split, DatasetFormat, DatasetMetadata, SplitSpec,
};
use deepcollide_core::geometry::{
    generate_environment, measure_collision_density, CollisionLabel, Placement,
};
use proptest::prelude::*;

#[test]
fn requested_row_counts_are_exact() {
    let env = generate_environment(1, 5, 2, Placement::Far).unwrap();
    assert_eq!(sample_dataset(&env, 5000, 1).unwrap().len(), 5000);
    let lone = generate_environment(1, 0, 2, Placement::Far).unwrap();
    let one = sample_dataset(&lone, 1, 7).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one.dof(), 7);
}

#[test]
fn label_mean_tracks_measured_density() {
    let env = generate_environment(2, 10, 3, Placement::Far).unwrap();
    let n = 10_000;
    let data = sample_dataset(&env, n, 1).unwrap();
    let density = measure_collision_density(&env, n, 2).unwrap();
    let p = data.collision_fraction();
    // Both are independent estimates of the same probability.
    let se = (2.0 * p * (1.0 - p) / n as f64).sqrt();
    assert!((p - density).abs() < 3.0 * se, "{p} vs {density} (se {se})");
}

#[test]
fn joint_marginals_are_centred() {
    let env = generate_environment(2, 0, 4, Placement::Far).unwrap();
    let n = 10_000;
    let data = sample_dataset(&env, n, 5).unwrap();
    let sd_of_mean = (2.0 * PI) / 12f64.sqrt() / (n as f64).sqrt();
    for column in data.configurations().columns() {
        assert!(column.iter().all(|q| (-PI..=PI).contains(q)));
        let mean = column.mean().unwrap();
        assert!(mean.abs() < 3.5 * sd_of_mean, "mean {mean}");
    }
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let env = generate_environment(2, 10, 0, Placement::Far).unwrap();
    let a = sample_dataset(&env, 300, 9).unwrap();
    let b = sample_dataset(&env, 300, 9).unwrap();
    assert_eq!(a.configurations(), b.configurations());
    assert_eq!(a.labels(), b.labels());
    assert_eq!(a.content_reference(), b.content_reference());
    assert_ne!(a.content_reference(), sample_dataset(&env, 300, 10).unwrap().content_reference());
}

#[test]
fn files_round_trip_bit_for_bit() {
    let env = generate_environment(2, 10, 0, Placement::Far).unwrap();
    let data = sample_dataset(&env, 250, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("d.csv", DatasetFormat::Csv), ("d.bin", DatasetFormat::Binary)] {
        let path = dir.path().join(name);
        save(&data, &path, format).unwrap();
        let back = load(&path, env.reference()).unwrap();
        let bits = |d: &deepcollide_core::dataset::LabeledDataset| {
            d.configurations().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(bits(&back), bits(&data), "{name}");
        assert_eq!(back.labels(), data.labels());
    }
}

#[test]
fn metadata_describes_the_sample() {
    let env = generate_environment(1, 8, 1, Placement::Far).unwrap();
    let data = sample_dataset(&env, 400, 2).unwrap();
    let meta = DatasetMetadata::describe(&data, 2);
    let recount = data.labels().iter().filter(|l| l.is_collision()).count() as f64 / 400.0;
    assert_eq!(meta.n, 400);
    assert_eq!(meta.seed, 2);
    assert_eq!(meta.density_estimate, recount);
}

#[test]
fn split_is_seeded_and_exhaustive() {
    let env = generate_environment(1, 8, 1, Placement::Far).unwrap();
    let data = sample_dataset(&env, 1000, 2).unwrap();
    let spec = SplitSpec::new(0.95, 4).unwrap();
    let (train, val) = split(&data, &spec).unwrap();
    assert_eq!((train.len(), val.len()), (950, 50));
    let (again, _) = split(&data, &spec).unwrap();
    assert_eq!(train.configurations(), again.configurations());
}

fn labels() -> impl Strategy<Value = Vec<CollisionLabel>> {
    prop::collection::vec(
        prop::bool::ANY.prop_map(|c| if c { CollisionLabel::Collision } else { CollisionLabel::Free }),
        1..50,
    )
}

proptest! {
    #[test]
    fn target_scaling_preserves_signs(labels in labels(), beta in 0.01f64..1000.0) {
        let scaled = scale_targets(&labels, beta).unwrap();
        for (t, l) in scaled.iter().zip(&labels) {
            prop_assert_eq!(t.signum(), l.as_f64());
            prop_assert_eq!(*t, if l.is_collision() { beta } else { -1.0 });
        }
        let unit = scale_targets(&labels, 1.0).unwrap();
        prop_assert_eq!(unit, labels.iter().map(|l| l.as_f64()).collect::<Vec<_>>());
    }
}
