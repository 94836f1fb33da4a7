mod common;

use proptest::prelude::*;
use tcr_core::cloud::{transform_cloud, PointCloud};
use tcr_core::geom::{Point3, Pose, Quaternion};
use tcr_core::tcr::{tcr_pair, NumeratorMode, TcrParams};

fn moved(c: &PointCloud, pose: &Pose) -> PointCloud {
    transform_cloud(c, pose)
}

/// Quarter turn about z, exact in floating point.
fn quarter_turn(c: &PointCloud, turns: u32) -> PointCloud {
    let pts = c
        .points()
        .iter()
        .map(|&p| (0..turns).fold(p, |q, _| Point3::new(-q.y, q.x, q.z)))
        .collect();
    PointCloud::new(pts).unwrap()
}

fn mode(literal: bool) -> NumeratorMode {
    if literal {
        NumeratorMode::Literal
    } else {
        NumeratorMode::HullRestricted
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn translation_with_grid_is_invariant(seed in 0u64..10_000, dx in -50i32..50, dy in -50i32..50, dz in -5i32..5, literal: bool) {
        let (s, t) = common::random_pair(seed);
        let params = TcrParams { numerator_mode: mode(literal), ..Default::default() };
        let shift = Point3::new(dx as f64 * 8.0, dy as f64 * 8.0, dz as f64 * 8.0);
        let pose = Pose::from_translation(shift);
        let base = tcr_pair(&s, &t, &params).unwrap();
        let moved_params = TcrParams { voxel_origin: shift, ..params };
        let shifted = tcr_pair(&moved(&s, &pose), &moved(&t, &pose), &moved_params).unwrap();
        prop_assert_eq!(base.counts, shifted.counts);
        prop_assert_eq!(base.source_voxels, shifted.source_voxels);
        prop_assert!((base.tcr_sym - shifted.tcr_sym).abs() < 1e-12);
    }

    #[test]
    fn quarter_turns_are_invariant(seed in 0u64..10_000, turns in 1u32..4, crop: bool, literal: bool) {
        let (s, t) = common::random_pair(seed);
        let params = TcrParams {
            numerator_mode: mode(literal),
            crop_range: crop.then_some(40.0),
            ..Default::default()
        };
        let base = tcr_pair(&s, &t, &params).unwrap();
        let turned = tcr_pair(&quarter_turn(&s, turns), &quarter_turn(&t, turns), &params).unwrap();
        prop_assert_eq!(base.counts, turned.counts);
        prop_assert_eq!(base.target_voxels, turned.target_voxels);
    }

    #[test]
    fn rigid_motion_keeps_tcr_close(seed in 0u64..10_000, yaw in -3.1f64..3.1, x in -100.0f64..100.0, y in -100.0f64..100.0) {
        // Arbitrary rigid motions move voxel boundaries, so only a loose bound holds.
        let (s, t) = common::random_pair(seed);
        let params = TcrParams::default();
        let pose = Pose::new(0.0, Point3::new(x, y, 0.0), Quaternion::from_yaw(yaw)).unwrap();
        let base = tcr_pair(&s, &t, &params).unwrap();
        let m = tcr_pair(&moved(&s, &pose), &moved(&t, &pose), &params).unwrap();
        prop_assert!(m.tcr_sym >= 0.0 && m.tcr_sym <= 1.0);
        prop_assert!((base.tcr_sym - m.tcr_sym).abs() < 0.25, "{} vs {}", base.tcr_sym, m.tcr_sym);
    }
}
