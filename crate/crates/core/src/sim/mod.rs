//! Deterministic synthetic stereo scenes.
//!
//! The world frame is attached to the marker plate's mount: the plate sits at
//! the world origin and the rig moves around it. Ground truth for a frame is
//! the target pose expressed in the rig (left camera) frame.

mod frame;
mod render;
mod trajectory;

pub use frame::{read_pgm, write_pgm, Frame, FrameError};
pub use render::{exact_feature_centers, render_frame, NoiseSpec, RenderSettings};
pub use trajectory::{sample_trajectory, TrajectoryError, TrajectoryKind, TrialTrajectory};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, Pose, StereoRig, UnitQuaternion, Vector3};

pub const DEFAULT_MARKER_RADIUS: f64 = 0.015;
pub const DEFAULT_SCALENE_MARGIN: f64 = 0.005;
pub const DEFAULT_EXPOSURE: f64 = 500e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryDefinitionError {
    #[error("marker radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("marker points are collinear or coincident")]
    Collinear,
    #[error("edge lengths {edges:?} are not scalene by at least {margin} m")]
    NotScalene { edges: [f64; 3], margin: f64 },
}

/// Three retroreflective markers on a rigid target, in the body frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarkerGeometryRepr", into = "MarkerGeometryRepr")]
pub struct MarkerGeometry {
    points: [Point3; 3],
    marker_radius: f64,
}

#[derive(Serialize, Deserialize)]
struct MarkerGeometryRepr {
    points: [[f64; 3]; 3],
    marker_radius: f64,
    #[serde(default = "default_margin")]
    scalene_margin: f64,
}

fn default_margin() -> f64 {
    DEFAULT_SCALENE_MARGIN
}

impl TryFrom<MarkerGeometryRepr> for MarkerGeometry {
    type Error = GeometryDefinitionError;

    fn try_from(r: MarkerGeometryRepr) -> Result<Self, Self::Error> {
        let points = r.points.map(|p| Point3::new(p[0], p[1], p[2]));
        MarkerGeometry::new(points, r.marker_radius, r.scalene_margin)
    }
}

impl From<MarkerGeometry> for MarkerGeometryRepr {
    fn from(g: MarkerGeometry) -> Self {
        Self {
            points: g.points.map(|p| [p.x, p.y, p.z]),
            marker_radius: g.marker_radius,
            scalene_margin: DEFAULT_SCALENE_MARGIN,
        }
    }
}

/// Edge `k` joins points `EDGE_ENDPOINTS[k]`.
pub const EDGE_ENDPOINTS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

pub fn edge_lengths(points: &[Point3; 3]) -> [f64; 3] {
    EDGE_ENDPOINTS.map(|(a, b)| (points[a] - points[b]).norm())
}

impl MarkerGeometry {
    pub fn new(
        points: [Point3; 3],
        marker_radius: f64,
        scalene_margin: f64,
    ) -> Result<Self, GeometryDefinitionError> {
        if !(marker_radius > 0.0 && marker_radius.is_finite()) {
            return Err(GeometryDefinitionError::BadRadius(marker_radius));
        }
        let edges = edge_lengths(&points);
        let longest = edges.iter().cloned().fold(0.0, f64::max);
        let normal = (points[1] - points[0]).cross(&(points[2] - points[0]));
        if longest == 0.0 || normal.norm() <= 1e-9 * longest * longest {
            return Err(GeometryDefinitionError::Collinear);
        }
        let min_gap = (edges[0] - edges[1])
            .abs()
            .min((edges[1] - edges[2]).abs())
            .min((edges[2] - edges[0]).abs());
        if min_gap < scalene_margin {
            return Err(GeometryDefinitionError::NotScalene {
                edges,
                margin: scalene_margin,
            });
        }
        Ok(Self {
            points,
            marker_radius,
        })
    }

    /// Re-expresses `points` in the body frame convention: origin at the
    /// centroid, x toward the first endpoint of the longest edge, z along the
    /// triangle normal `(p1 - p0) × (p2 - p0)`.
    pub fn in_body_frame(
        points: [Point3; 3],
        marker_radius: f64,
        scalene_margin: f64,
    ) -> Result<Self, GeometryDefinitionError> {
        // validate first so the frame construction below is well defined
        Self::new(points, marker_radius, scalene_margin)?;
        let centroid = Point3::from((points[0].coords + points[1].coords + points[2].coords) / 3.0);
        let edges = edge_lengths(&points);
        let longest = (0..3).max_by(|&a, &b| edges[a].total_cmp(&edges[b])).unwrap();
        let first = EDGE_ENDPOINTS[longest].0;
        let z = (points[1] - points[0])
            .cross(&(points[2] - points[0]))
            .normalize();
        let toward = points[first] - centroid;
        let x = (toward - z * z.dot(&toward)).normalize();
        let y = z.cross(&x);
        let local = points.map(|p| {
            let d = p - centroid;
            Point3::new(x.dot(&d), y.dot(&d), z.dot(&d))
        });
        Self::new(local, marker_radius, scalene_margin)
    }

    /// The simulated 30 mm markers on an acrylic plate, arranged as a scalene
    /// triangle with edges of roughly 13, 14 and 15 cm.
    pub fn default_plate() -> Self {
        Self::in_body_frame(
            [
                Point3::new(-0.08, -0.05, 0.0),
                Point3::new(0.07, -0.04, 0.0),
                Point3::new(0.0, 0.07, 0.0),
            ],
            DEFAULT_MARKER_RADIUS,
            DEFAULT_SCALENE_MARGIN,
        )
        .expect("default plate geometry is valid")
    }

    pub fn points(&self) -> &[Point3; 3] {
        &self.points
    }

    pub fn marker_radius(&self) -> f64 {
        self.marker_radius
    }

    pub fn edge_lengths(&self) -> [f64; 3] {
        edge_lengths(&self.points)
    }

    pub fn centroid(&self) -> Point3 {
        Point3::from((self.points[0].coords + self.points[1].coords + self.points[2].coords) / 3.0)
    }
}

impl Default for MarkerGeometry {
    fn default() -> Self {
        Self::default_plate()
    }
}

/// Plate pose in the world frame for a given yaw deflection: body z points
/// back toward a rig looking down +z, body y is up.
pub fn plate_pose(yaw: f64) -> Pose {
    let face_rig = UnitQuaternion::from_axis_angle(&Vector3::x(), std::f64::consts::PI);
    Pose::new(Vector3::zeros(), UnitQuaternion::yaw(yaw).mul(&face_rig))
}

/// Pose of the left camera (the rig frame) in the world, given the pose of
/// the rig's mechanical center, which sits midway between the cameras.
pub fn rig_frame_from_center(rig: &StereoRig, center: &Pose) -> Pose {
    let half = (rig.right.extrinsics().translation - rig.left.extrinsics().translation) / 2.0;
    center.compose(&Pose::from_translation(-half))
}
