//! Stereo retroreflector tracking: scene simulation, marker detection,
//! stereo correspondence, triangulation, rigid pose recovery and evaluation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correspond;
pub mod detect;
pub mod geometry;
pub mod metrics;
pub mod rigid;
pub mod sim;
pub mod track;
pub mod trial;
pub mod triangulate;

pub use correspond::{match_features, Correspondence};
pub use detect::{detect, DetectParams, Feature};
pub use geometry::{CameraModel, Pixel, Point3, Pose, ProjectionMatrix, StereoRig, UnitQuaternion, Vector3};
pub use metrics::{MetricReport, PoseSample};
pub use rigid::{match_geometry, register, PoseEstimate};
pub use sim::{Frame, MarkerGeometry, NoiseSpec, TrajectoryKind, TrialTrajectory};
pub use track::{track_frame_pair, TrackError, TrackParams};
pub use trial::{run_trial, TrialConfig, TrialReport};
pub use triangulate::{triangulate, TriangulationParams};
