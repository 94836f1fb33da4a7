#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcr_core::cloud::PointCloud;
use tcr_core::geom::Point3;
use tcr_core::synth::{random_nested_scene, NestedSceneParams, SceneSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_box(rng: &mut ChaCha8Rng, n: usize, center: Point3, half: Point3) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            center
                + Point3::new(
                    rng.gen_range(-half.x..half.x),
                    rng.gen_range(-half.y..half.y),
                    rng.gen_range(-half.z..half.z),
                )
        })
        .collect()
}

/// Two overlapping random sessions: a shared block plus blobs only one side has.
pub fn random_pair(seed: u64) -> (PointCloud, PointCloud) {
    let mut r = rng(seed);
    let half = Point3::new(r.gen_range(20.0..60.0), r.gen_range(20.0..60.0), r.gen_range(5.0..20.0));
    let n = r.gen_range(300..3000);
    let shared = uniform_box(&mut r, n, Point3::ZERO, half);
    let mut s = shared.clone();
    let mut t: Vec<Point3> = shared.iter().map(|p| *p + Point3::new(r.gen_range(-1.0..1.0), 0.0, 0.0)).collect();
    for side in [&mut s, &mut t] {
        for _ in 0..r.gen_range(0..4) {
            let c = Point3::new(r.gen_range(-half.x..half.x), r.gen_range(-half.y..half.y), 0.0);
            let m = r.gen_range(20..400);
            side.extend(uniform_box(&mut r, m, c, Point3::new(8.0, 8.0, 8.0)));
        }
    }
    let shift = Point3::new(r.gen_range(-10.0..10.0), r.gen_range(-10.0..10.0), 0.0);
    let t = t.into_iter().map(|p| p + shift).collect();
    (PointCloud::new(s).unwrap(), PointCloud::new(t).unwrap())
}

pub fn random_cloud(seed: u64) -> PointCloud {
    let mut r = rng(seed);
    let n = r.gen_range(10..2000);
    let half = Point3::new(r.gen_range(1.0..80.0), r.gen_range(1.0..80.0), r.gen_range(1.0..30.0));
    let center = Point3::new(r.gen_range(-50.0..50.0), 0.0, 0.0);
    PointCloud::new(uniform_box(&mut r, n, center, half)).unwrap()
}

/// Small nested city whose voxelized stage maps stay under 500 points.
pub fn small_city(seed: u64) -> SceneSpec {
    let p = NestedSceneParams { half_extent: 40.0, lots_per_side: 2, density: 0.3, max_height: 15.0, ..Default::default() };
    random_nested_scene(seed, &p)
}

/// Street route through a default-sized nested city (lot boundaries at
/// multiples of 40 m).
pub fn city_route() -> Vec<[f64; 2]> {
    vec![[-80.0, -80.0], [80.0, -80.0], [80.0, 0.0], [-80.0, 0.0], [-80.0, 80.0], [80.0, 80.0]]
}

pub fn shifted(route: &[[f64; 2]], dx: f64, dy: f64) -> Vec<[f64; 2]> {
    route.iter().map(|p| [p[0] + dx, p[1] + dy]).collect()
}
