//! End-to-end pipeline checks on small fixtures.

use clutterseg::config::{ApInterpolation, PipelineConfig};
use clutterseg::eval::instance_ap;
use clutterseg::fixtures::{generate_scene, FixtureSpec};
use clutterseg::pipeline::{gt_instances_for_eval, predicted_instances_for_eval, segment_scene};

fn small_spec(seed: u64) -> FixtureSpec {
    FixtureSpec {
        seed,
        objects: 5,
        categories: 5,
        views: 4,
        width: 320,
        height: 240,
        sigma: 0.02,
        ..FixtureSpec::default()
    }
}

#[test]
fn clean_fixture_recovers_planted_objects() {
    let fx = generate_scene(&small_spec(42)).unwrap();
    let config = PipelineConfig::default();
    let (state, stats) = segment_scene(&fx.bundle, &config).unwrap();

    eprintln!(
        "points={} svs={} leaves={} merges={} groups={}",
        stats.point_count,
        stats.supervoxel_count,
        stats.leaf_count,
        stats.merges,
        stats.group_count
    );
    for inst in &state.instances {
        eprintln!(
            "instance {} confidence={} svs={} points={}",
            inst.id,
            inst.confidence,
            inst.supervoxels.len(),
            inst.points.len()
        );
    }
    assert_eq!(
        state.instances.len(),
        5,
        "expected one instance per planted object"
    );

    let preds = predicted_instances_for_eval(&state, config.eval.voxel_edge_m);
    let gts = gt_instances_for_eval(
        &fx.ground_truth.points,
        &fx.ground_truth.instances,
        config.eval.voxel_edge_m,
    );
    let report = instance_ap(&preds, &gts, ApInterpolation::Points101).unwrap();
    eprintln!(
        "ap25={:.3} ap50={:.3} map={:.3}",
        report.ap25, report.ap50, report.map
    );
    assert!(report.ap25 > 0.99, "ap25 = {}", report.ap25);
}
