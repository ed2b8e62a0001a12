//! Temporary measurement harness (deleted before release).

use clutterseg::config::{ApInterpolation, PipelineConfig};
use clutterseg::eval::{instance_ap, instance_iou_3d};
use clutterseg::fixtures::{generate_scene, FixtureSpec};
use clutterseg::pipeline::{gt_instances_for_eval, predicted_instances_for_eval, segment_scene};

#[test]
#[ignore]
fn measure_full_res_iou() {
    let spec = FixtureSpec {
        seed: 1,
        objects: 10,
        categories: 5,
        views: 8,
        sigma: 0.02,
        ..FixtureSpec::default()
    };
    let t0 = std::time::Instant::now();
    let fx = generate_scene(&spec).unwrap();
    eprintln!("generation: {:.2}s", t0.elapsed().as_secs_f64());

    let config = PipelineConfig::default();
    let t0 = std::time::Instant::now();
    let (state, stats) = segment_scene(&fx.bundle, &config).unwrap();
    eprintln!(
        "segment: {:.2}s  points={} svs={} leaves={} groups={}",
        t0.elapsed().as_secs_f64(),
        stats.point_count,
        stats.supervoxel_count,
        stats.leaf_count,
        stats.group_count
    );
    eprintln!("{}", stats.timing_log());

    let preds = predicted_instances_for_eval(&state, config.eval.voxel_edge_m);
    let gts = gt_instances_for_eval(
        &fx.ground_truth.points,
        &fx.ground_truth.instances,
        config.eval.voxel_edge_m,
    );
    // per-instance best IoU
    for p in &preds {
        let best = gts
            .iter()
            .map(|g| (instance_iou_3d(&p.voxels, &g.voxels), g.id))
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .unwrap();
        eprintln!(
            "pred {} conf={} voxels={} -> gt {} iou={:.3}",
            p.id,
            p.confidence,
            p.voxels.len(),
            best.1,
            best.0
        );
    }
    let report = instance_ap(&preds, &gts, ApInterpolation::Points101).unwrap();
    eprintln!(
        "ap25={:.3} ap50={:.3} map={:.3} per_threshold={:?}",
        report.ap25, report.ap50, report.map, report.per_threshold
    );
}
