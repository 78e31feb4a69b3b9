use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use mocap_core::correspond::match_features;
use mocap_core::detect::{detect, DetectParams};
use mocap_core::geometry::{Pose, StereoRig, Vector3};
use mocap_core::rigid::{match_geometry, register, DEFAULT_AMBIGUITY_MARGIN};
use mocap_core::sim::{
    plate_pose, render_frame, rig_frame_from_center, Frame, MarkerGeometry, NoiseSpec, RenderSettings,
    DEFAULT_EXPOSURE,
};
use mocap_core::track::{track_frame_pair, TrackParams};
use mocap_core::trial::default_rig;
use mocap_core::triangulate::{triangulate, TriangulationParams};

fn scene(distance: f64) -> (StereoRig, MarkerGeometry, Frame, Frame) {
    let rig = default_rig();
    let g = MarkerGeometry::default_plate();
    let plate = plate_pose(0.17);
    let rig_pose = rig_frame_from_center(&rig, &Pose::from_translation(Vector3::new(0.0, 0.0, -distance)));
    let noise = NoiseSpec {
        pixel_noise_sigma: 0.2,
        rng_seed: 1,
        ..NoiseSpec::default()
    };
    let frame = |cam, stream| {
        render_frame(
            &g,
            |_| plate,
            |_| rig_pose,
            cam,
            0.0,
            DEFAULT_EXPOSURE,
            &noise,
            stream,
            &RenderSettings::default(),
        )
    };
    let (l, r) = (frame(&rig.left, 0), frame(&rig.right, 1));
    (rig, g, l, r)
}

fn stages(c: &mut Criterion) {
    let (rig, g, l, r) = scene(1.34);
    let params = DetectParams::default();
    let lf = detect(&l, &params).unwrap();
    let rf = detect(&r, &params).unwrap();
    let corr = match_features(&lf, &rf).unwrap();
    let (pl, pr) = (rig.left.projection_matrix(), rig.right.projection_matrix());
    let tri = TriangulationParams::default();
    let points: Vec<_> = corr
        .pairs
        .iter()
        .map(|&(i, j)| triangulate(&lf[i].center, &rf[j].center, &pl, &pr, &tri).unwrap())
        .collect();
    let points = [points[0], points[1], points[2]];
    let labels = match_geometry(&points, &g, DEFAULT_AMBIGUITY_MARGIN).unwrap();
    let labeled = labels.map(|k| points[k]);

    c.bench_function("render_frame", |b| b.iter(|| scene(black_box(1.34))));
    c.bench_function("detect", |b| b.iter(|| detect(black_box(&l), &params).unwrap()));
    c.bench_function("match_features", |b| {
        b.iter(|| match_features(black_box(&lf), black_box(&rf)).unwrap())
    });
    c.bench_function("triangulate", |b| {
        b.iter(|| {
            triangulate(
                black_box(&lf[0].center),
                black_box(&rf[corr.pairs[0].1].center),
                &pl,
                &pr,
                &tri,
            )
            .unwrap()
        })
    });
    c.bench_function("match_geometry", |b| {
        b.iter(|| match_geometry(black_box(&points), &g, DEFAULT_AMBIGUITY_MARGIN).unwrap())
    });
    c.bench_function("register", |b| {
        b.iter(|| register(black_box(&labeled), &g).unwrap())
    });
    c.bench_function("track_frame_pair", |b| {
        b.iter(|| track_frame_pair(black_box(&l), black_box(&r), &rig, &g, &TrackParams::default()).unwrap())
    });
}

criterion_group!(benches, stages);
criterion_main!(benches);
