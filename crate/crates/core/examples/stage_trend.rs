//! Place-recognition AUC of the BEV descriptor against the final stage of a
//! random nested city, next to the TCR of each stage pair.
//!
//! cargo run --release --example stage_trend -- [seed]

use tcr_core::bench::{run_bench, BenchParams, BevParams, DescriptorMethod};
use tcr_core::synth::{build_map, random_nested_scene, LidarSpec, NestedSceneParams, SyntheticSequence, TrajectorySpec};
use tcr_core::tcr::{tcr_pair, TcrParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let params = NestedSceneParams::default();
    let scene = random_nested_scene(seed, &params);
    let route = vec![[-80.0, -80.0], [80.0, -80.0], [80.0, 0.0], [-80.0, 0.0], [-80.0, 80.0], [80.0, 80.0]];
    let db_poses = TrajectorySpec::new(route.clone(), 0.5).poses()?.poses().to_vec();
    let shifted = route.iter().map(|p| [p[0] + 1.5, p[1] + 1.5]).collect();
    let q_poses = TrajectorySpec::new(shifted, 0.5).poses()?.poses().to_vec();
    let last = params.stages;
    let query = SyntheticSequence::new(scene.clone(), last, q_poses, LidarSpec::default())?;
    let target = build_map(&scene, last)?;
    for stage in (1..last).rev() {
        let db = SyntheticSequence::new(scene.clone(), stage, db_poses.clone(), LidarSpec::default())?;
        let report = run_bench(&query, &db, &BenchParams::default(), &DescriptorMethod::Bev(BevParams::default()))?;
        let tcr = tcr_pair(&build_map(&scene, stage)?, &target, &TcrParams::default())?;
        println!(
            "{stage:02}->{last:02}  tcr_sym={:.4}  auc={:.4}  recall@1={:.4}  max_f1={:.4}",
            tcr.tcr_sym,
            report.auc,
            report.recall_at_1(),
            report.max_f1
        );
    }
    Ok(())
}
