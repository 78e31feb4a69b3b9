//! Per-frame-pair tracking: detect, correspond, triangulate, label, register.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspond::{match_features, CorrespondError};
use crate::detect::{detect, DetectError, DetectParams};
use crate::geometry::{Point3, StereoRig};
use crate::rigid::{match_geometry, register, PoseEstimate, RigidError, DEFAULT_AMBIGUITY_MARGIN};
use crate::sim::{Frame, MarkerGeometry};
use crate::triangulate::{triangulate, TriangulationError, TriangulationParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Detection,
    Correspondence,
    Triangulation,
    Geometry,
    Registration,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("detection: {0}")]
    Detection(#[from] DetectError),
    #[error("correspondence: {0}")]
    Correspondence(#[from] CorrespondError),
    #[error("correspondence: expected exactly 3 marker pairs, found {0}")]
    WrongCount(usize),
    #[error("triangulation: {0}")]
    Triangulation(#[from] TriangulationError),
    #[error("geometry: {0}")]
    Geometry(RigidError),
    #[error("registration: {0}")]
    Registration(RigidError),
}

impl TrackError {
    pub fn stage(&self) -> Stage {
        match self {
            TrackError::Detection(_) => Stage::Detection,
            TrackError::Correspondence(_) | TrackError::WrongCount(_) => Stage::Correspondence,
            TrackError::Triangulation(_) => Stage::Triangulation,
            TrackError::Geometry(_) => Stage::Geometry,
            TrackError::Registration(_) => Stage::Registration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackParams {
    pub detect: DetectParams,
    pub triangulation: TriangulationParams,
    /// Minimum score gap between the best and second-best labeling, m².
    pub ambiguity_margin: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            detect: DetectParams::default(),
            triangulation: TriangulationParams::default(),
            ambiguity_margin: DEFAULT_AMBIGUITY_MARGIN,
        }
    }
}

/// Estimates the target pose in the rig frame from a time-aligned frame
/// pair. The estimate is stamped with the left frame's timestamp.
pub fn track_frame_pair(
    left: &Frame,
    right: &Frame,
    rig: &StereoRig,
    geometry: &MarkerGeometry,
    params: &TrackParams,
) -> Result<PoseEstimate, TrackError> {
    let lf = detect(left, &params.detect)?;
    let rf = detect(right, &params.detect)?;
    let correspondence = match_features(&lf, &rf)?;
    if correspondence.pairs.len() != 3 {
        return Err(TrackError::WrongCount(correspondence.pairs.len()));
    }

    let (pl, pr) = (rig.left.projection_matrix(), rig.right.projection_matrix());
    let mut points = [Point3::origin(); 3];
    for (slot, &(i, j)) in points.iter_mut().zip(&correspondence.pairs) {
        *slot = triangulate(&lf[i].center, &rf[j].center, &pl, &pr, &params.triangulation)?;
    }

    let labels = match_geometry(&points, geometry, params.ambiguity_margin).map_err(TrackError::Geometry)?;
    let labeled = labels.map(|k| points[k]);
    let mut estimate = register(&labeled, geometry).map_err(TrackError::Registration)?;
    estimate.timestamp = left.timestamp;
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vector3;
    use crate::geometry::{CameraModel, Pose};
    use crate::sim::{
        plate_pose, render_frame, rig_frame_from_center, NoiseSpec, RenderSettings, DEFAULT_EXPOSURE,
    };

    fn rig() -> StereoRig {
        let cam = CameraModel::from_horizontal_fov(640, 480, 100f64.to_radians(), Pose::identity()).unwrap();
        StereoRig::parallel(cam, 0.1)
    }

    fn frames(distance: f64, yaw: f64, noise: &NoiseSpec) -> (Frame, Frame, Pose) {
        let rig = rig();
        let g = MarkerGeometry::default_plate();
        let target = plate_pose(yaw);
        let rig_pose =
            rig_frame_from_center(&rig, &Pose::from_translation(Vector3::new(0.0, 0.0, -distance)));
        let render = |cam: &CameraModel, stream| {
            render_frame(
                &g,
                |_| target,
                |_| rig_pose,
                cam,
                0.0,
                DEFAULT_EXPOSURE,
                noise,
                stream,
                &RenderSettings::default(),
            )
        };
        let gt = rig_pose.inverse().compose(&target);
        (render(&rig.left, 0), render(&rig.right, 1), gt)
    }

    #[test]
    fn noise_free_static_pair_is_tracked() {
        let (l, r, gt) = frames(0.9, 0.0, &NoiseSpec::noiseless());
        let est = track_frame_pair(
            &l,
            &r,
            &rig(),
            &MarkerGeometry::default_plate(),
            &TrackParams::default(),
        )
        .unwrap();
        let err = (est.pose.translation - gt.translation).norm();
        assert!(err < 2e-3, "translation error {err}");
        assert!(est.pose.rotation.angle_to(&gt.rotation) < 0.1);
    }

    #[test]
    fn occluded_marker_gives_wrong_count() {
        let (mut l, r, _) = frames(0.9, 0.0, &NoiseSpec::noiseless());
        // mask the left image's brightest blob region entirely
        let feats = detect(&l, &DetectParams::default()).unwrap();
        let c = feats[0].center;
        let rad = feats[0].radius + 3.0;
        for y in 0..l.height() {
            for x in 0..l.width() {
                if (x as f64 - c.u).hypot(y as f64 - c.v) <= rad {
                    l.set(x, y, 0.0);
                }
            }
        }
        let err = track_frame_pair(
            &l,
            &r,
            &rig(),
            &MarkerGeometry::default_plate(),
            &TrackParams::default(),
        )
        .unwrap_err();
        assert_eq!(err, TrackError::WrongCount(2));
        assert_eq!(err.stage(), Stage::Correspondence);
    }

    #[test]
    fn spurious_blob_never_yields_a_silent_wrong_pose() {
        let g = MarkerGeometry::default_plate();
        for seed in 0..40u64 {
            let noise = NoiseSpec {
                spurious_blob_rate: 1.0,
                spurious_blob_radius_range: [2.0, 4.0],
                rng_seed: seed,
                ..NoiseSpec::default()
            };
            let (l, r, gt) = frames(1.34, 0.0, &noise);
            if let Ok(est) = track_frame_pair(&l, &r, &rig(), &g, &TrackParams::default()) {
                let err = (est.pose.translation - gt.translation).norm();
                assert!(
                    err < 0.02 || est.registration_rmse >= 1e-3,
                    "seed {seed}: silent wrong pose, error {err}, rmse {}",
                    est.registration_rmse
                );
            }
        }
    }
}
