//! Points, rotations, rigid transforms and the ideal pinhole camera.
//!
//! Frames used throughout the crate:
//! - *rig*: the stereo rig frame, identical to the left camera frame
//!   (x right, y down, z forward);
//! - *camera*: a camera's own optical frame, same axis convention;
//! - *body*: the marker target's frame (see [`crate::sim::MarkerGeometry`]).

use nalgebra as na;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point3 = na::Point3<f64>;
pub type Vector3 = na::Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("quaternion has zero or non-finite norm")]
    DegenerateQuaternion,
}

/// Continuous image coordinates in pixels. May lie outside the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Unit quaternion with the double cover resolved to `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes and canonicalizes `(w, x, y, z)`.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(GeometryError::DegenerateQuaternion);
        }
        Ok(Self::canonical(w / norm, x / norm, y / norm, z / norm))
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        // Pick the nonnegative scalar representative. For w == 0 the first
        // nonzero vector component decides so that q and -q agree.
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        if flip {
            Self {
                w: -w + 0.0,
                x: -x + 0.0,
                y: -y + 0.0,
                z: -z + 0.0,
            }
        } else {
            Self { w, x, y, z }
        }
    }

    pub fn from_axis_angle(axis: &Vector3, angle: f64) -> Self {
        let q = na::UnitQuaternion::from_axis_angle(&na::Unit::new_normalize(*axis), angle);
        Self::from_na(&q)
    }

    pub fn from_scaled_axis(v: Vector3) -> Self {
        Self::from_na(&na::UnitQuaternion::from_scaled_axis(v))
    }

    /// Rotation by `angle` about the y axis (the vertical axis in image frames).
    pub fn yaw(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::y(), angle)
    }

    pub fn from_rotation_matrix(m: &na::Matrix3<f64>) -> Self {
        let r = na::Rotation3::from_matrix_unchecked(*m);
        Self::from_na(&na::UnitQuaternion::from_rotation_matrix(&r))
    }

    pub fn from_na(q: &na::UnitQuaternion<f64>) -> Self {
        let q = q.quaternion();
        let norm = q.norm();
        Self::canonical(q.w / norm, q.i / norm, q.j / norm, q.k / norm)
    }

    pub fn to_na(&self) -> na::UnitQuaternion<f64> {
        na::UnitQuaternion::new_unchecked(na::Quaternion::new(self.w, self.x, self.y, self.z))
    }

    pub fn to_rotation_matrix(&self) -> na::Matrix3<f64> {
        self.to_na().to_rotation_matrix().into_inner()
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn rotate(&self, v: &Vector3) -> Vector3 {
        self.to_na() * v
    }

    pub fn inverse(&self) -> Self {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * rhs` (apply `rhs` first).
    pub fn mul(&self, rhs: &Self) -> Self {
        Self::from_na(&(self.to_na() * rhs.to_na()))
    }

    /// Rotation angle of `self⁻¹ · other`, in `[0, π]`.
    pub fn angle_to(&self, other: &Self) -> f64 {
        // atan2 form keeps precision for nearly equal rotations
        let rel = self.inverse().mul(other);
        let s = (rel.x * rel.x + rel.y * rel.y + rel.z * rel.z).sqrt();
        2.0 * s.atan2(rel.w.abs())
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = GeometryError;

    fn try_from(q: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(q[0], q[1], q[2], q[3])
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

/// Rigid transform. `transform_point(p) = rotation · p + translation`, i.e. a
/// pose of frame B expressed in frame A maps B coordinates to A coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vector3,
    pub rotation: UnitQuaternion,
}

impl Pose {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(translation: Vector3, rotation: UnitQuaternion) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn from_translation(translation: Vector3) -> Self {
        Self::new(translation, UnitQuaternion::IDENTITY)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            translation: self.rotation.rotate(&other.translation) + self.translation,
            rotation: self.rotation.mul(&other.rotation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose {
            translation: -rotation.rotate(&self.translation),
            rotation,
        }
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation.rotate(&p.coords) + self.translation)
    }

    pub fn position(&self) -> Point3 {
        Point3::from(self.translation)
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn invert(a: &Pose) -> Pose {
    a.inverse()
}

pub fn transform_point(a: &Pose, p: &Point3) -> Point3 {
    a.transform_point(p)
}

/// 3×4 camera matrix mapping homogeneous rig points to homogeneous pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix(pub na::Matrix3x4<f64>);

impl ProjectionMatrix {
    pub fn matrix(&self) -> &na::Matrix3x4<f64> {
        &self.0
    }

    /// Projects a point, failing when its projective depth is not positive.
    pub fn project(&self, p: &Point3) -> Result<Pixel, GeometryError> {
        let h = self.0 * p.to_homogeneous();
        if h.z <= 0.0 {
            return Err(GeometryError::BehindCamera { depth: h.z });
        }
        Ok(Pixel::new(h.x / h.z, h.y / h.z))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0 * s)
    }
}

/// Ideal pinhole camera without distortion. `extrinsics` is the camera's pose
/// in the rig frame (camera coordinates → rig coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraModelRepr", into = "CameraModelRepr")]
pub struct CameraModel {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    extrinsics: Pose,
}

#[derive(Serialize, Deserialize)]
struct CameraModelRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    #[serde(default)]
    extrinsics: Pose,
}

impl TryFrom<CameraModelRepr> for CameraModel {
    type Error = GeometryError;

    fn try_from(r: CameraModelRepr) -> Result<Self, Self::Error> {
        CameraModel::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height, r.extrinsics)
    }
}

impl From<CameraModel> for CameraModelRepr {
    fn from(c: CameraModel) -> Self {
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            extrinsics: c.extrinsics,
        }
    }
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        extrinsics: Pose,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidCamera(format!(
                "image size must be positive, got {width}x{height}"
            )));
        }
        if !(0.0..f64::from(width)).contains(&cx) || !(0.0..f64::from(height)).contains(&cy) {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsics,
        })
    }

    /// Square-pixel camera with the principal point at the image center and
    /// `fx = (width / 2) / tan(hfov / 2)`.
    pub fn from_horizontal_fov(
        width: u32,
        height: u32,
        hfov: f64,
        extrinsics: Pose,
    ) -> Result<Self, GeometryError> {
        if !(hfov > 0.0 && hfov < std::f64::consts::PI) {
            return Err(GeometryError::InvalidCamera(format!(
                "horizontal field of view {hfov} rad out of range"
            )));
        }
        let f = f64::from(width) / 2.0 / (hfov / 2.0).tan();
        Self::new(
            f,
            f,
            f64::from(width) / 2.0,
            f64::from(height) / 2.0,
            width,
            height,
            extrinsics,
        )
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn extrinsics(&self) -> &Pose {
        &self.extrinsics
    }

    pub fn with_extrinsics(&self, extrinsics: Pose) -> Self {
        Self { extrinsics, ..*self }
    }

    pub fn principal_point(&self) -> Pixel {
        Pixel::new(self.cx, self.cy)
    }

    pub fn intrinsic_matrix(&self) -> na::Matrix3<f64> {
        na::Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Rig-frame point expressed in this camera's optical frame.
    pub fn to_camera_frame(&self, point: &Point3) -> Point3 {
        self.extrinsics.inverse().transform_point(point)
    }

    /// Pinhole projection of a rig-frame point.
    pub fn project(&self, point: &Point3) -> Result<Pixel, GeometryError> {
        self.project_camera_frame(&self.to_camera_frame(point))
    }

    pub fn project_camera_frame(&self, pc: &Point3) -> Result<Pixel, GeometryError> {
        if pc.z <= 0.0 {
            return Err(GeometryError::BehindCamera { depth: pc.z });
        }
        Ok(Pixel::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        ))
    }

    /// `P = K · [R | t]` with `[R | t]` mapping rig coordinates to camera
    /// coordinates.
    pub fn projection_matrix(&self) -> ProjectionMatrix {
        let rig_to_cam = self.extrinsics.inverse();
        let r = rig_to_cam.rotation.to_rotation_matrix();
        let mut rt = na::Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        rt.set_column(3, &rig_to_cam.translation);
        ProjectionMatrix(self.intrinsic_matrix() * rt)
    }
}

pub fn project(point: &Point3, camera: &CameraModel) -> Result<Pixel, GeometryError> {
    camera.project(point)
}

pub fn projection_matrix(camera: &CameraModel) -> ProjectionMatrix {
    camera.projection_matrix()
}

/// Left/right camera pair. The left camera defines the rig frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub left: CameraModel,
    pub right: CameraModel,
}

impl StereoRig {
    /// Two identical cameras, the right one displaced `baseline` metres along
    /// the rig x axis.
    pub fn parallel(camera: CameraModel, baseline: f64) -> Self {
        let left = camera.with_extrinsics(Pose::identity());
        let right = camera.with_extrinsics(Pose::from_translation(Vector3::new(baseline, 0.0, 0.0)));
        Self { left, right }
    }

    pub fn baseline(&self) -> f64 {
        (self.right.extrinsics().translation - self.left.extrinsics().translation).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cam(fx: f64, cx: f64, cy: f64) -> CameraModel {
        CameraModel::new(fx, fx, cx, cy, 640, 480, Pose::identity()).unwrap()
    }

    fn quat_strategy() -> impl Strategy<Value = UnitQuaternion> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("nonzero", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| UnitQuaternion::new(w, x, y, z).unwrap())
    }

    fn pose_strategy() -> impl Strategy<Value = Pose> {
        (quat_strategy(), -5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64)
            .prop_map(|(q, x, y, z)| Pose::new(Vector3::new(x, y, z), q))
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let c = cam(268.5, 320.0, 240.0);
        for z in [0.1, 1.0, 7.5] {
            let px = c.project(&Point3::new(0.0, 0.0, z)).unwrap();
            assert_eq!(px, Pixel::new(320.0, 240.0));
        }
    }

    #[test]
    fn simple_projection_value() {
        let c = cam(500.0, 320.0, 240.0);
        let px = c.project(&Point3::new(0.1, 0.0, 1.0)).unwrap();
        assert_relative_eq!(px.u, 370.0, epsilon = 1e-12);
    }

    #[test]
    fn focal_length_from_fov_matches_edge_ray() {
        let hfov = 100f64.to_radians();
        let c = CameraModel::from_horizontal_fov(640, 480, hfov, Pose::identity()).unwrap();
        assert_relative_eq!(c.fx(), 320.0 / 50f64.to_radians().tan(), epsilon = 1e-12);
        // brute force: scan ray angles and find the one landing on the image edge
        let mut best = (f64::MAX, 0.0);
        for i in 0..=200_000 {
            let angle = 40f64.to_radians() + f64::from(i) / 200_000.0 * 20f64.to_radians();
            let p = Point3::new(angle.tan(), 0.0, 1.0);
            let u = c.project(&p).unwrap().u;
            if (u - 640.0).abs() < best.0 {
                best = ((u - 640.0).abs(), angle);
            }
        }
        assert!((best.1 - hfov / 2.0).abs() < 1e-6, "edge ray at {}", best.1);
        assert!((c.fx() - 268.5).abs() < 0.1);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let c = cam(500.0, 320.0, 240.0);
        assert!(matches!(
            c.project(&Point3::new(0.0, 0.0, -1.0)),
            Err(GeometryError::BehindCamera { .. })
        ));
        assert!(c.project(&Point3::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn invalid_cameras_are_rejected() {
        assert!(CameraModel::new(0.0, 1.0, 1.0, 1.0, 10, 10, Pose::identity()).is_err());
        assert!(CameraModel::new(1.0, 1.0, 10.0, 1.0, 10, 10, Pose::identity()).is_err());
        assert!(CameraModel::new(1.0, 1.0, 1.0, 1.0, 0, 10, Pose::identity()).is_err());
    }

    #[test]
    fn unit_intrinsics_identity_extrinsics_give_canonical_matrix() {
        let c = CameraModel::new(1.0, 1.0, 0.0, 0.0, 4, 4, Pose::identity()).unwrap();
        let expected = na::Matrix3x4::new(
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        );
        assert_eq!(c.projection_matrix().0, expected);
    }

    #[test]
    fn right_camera_shifts_principal_ray_by_disparity() {
        let fx = 268.54;
        let b = 0.1;
        let rig = StereoRig::parallel(cam(fx, 320.0, 240.0), b);
        let px = rig
            .right
            .projection_matrix()
            .project(&Point3::new(0.0, 0.0, 1.0))
            .unwrap();
        assert_relative_eq!(px.u, 320.0 - fx * b, epsilon = 1e-12);
        assert_relative_eq!(px.v, 240.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_pose_algebra() {
        let id = Pose::identity();
        assert_eq!(id.inverse(), id);
        let a = Pose::from_translation(Vector3::new(1.0, 2.0, 3.0));
        let b = Pose::from_translation(Vector3::new(-0.5, 0.25, 4.0));
        assert_eq!(a.compose(&b).translation, Vector3::new(0.5, 2.25, 7.0));
    }

    #[test]
    fn quaternion_double_cover_is_canonical() {
        let q = UnitQuaternion::new(-0.5, 0.5, -0.5, 0.5).unwrap();
        assert!(q.w() >= 0.0);
        let p = UnitQuaternion::new(0.5, -0.5, 0.5, -0.5).unwrap();
        assert_eq!(p, q);
        let pure = UnitQuaternion::new(0.0, -1.0, 0.0, 0.0).unwrap();
        assert_eq!(pure, UnitQuaternion::new(0.0, 1.0, 0.0, 0.0).unwrap());
        assert!(UnitQuaternion::new(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn quaternion_serde_round_trip() {
        let q = UnitQuaternion::yaw(0.3);
        let s = serde_json::to_string(&q).unwrap();
        let back: UnitQuaternion = serde_json::from_str(&s).unwrap();
        assert_relative_eq!(back.dot(&q), 1.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn projection_matrix_agrees_with_projection(
            pose in pose_strategy(),
            px in -2.0..2.0f64, py in -2.0..2.0f64, pz in 0.2..10.0f64,
            fx in 100.0..1000.0f64, fy in 100.0..1000.0f64,
            cx in 0.0..639.0f64, cy in 0.0..479.0f64,
        ) {
            let c = CameraModel::new(fx, fy, cx, cy, 640, 480, pose).unwrap();
            // construct a point in front of the camera, then express it in the rig frame
            let pc = Point3::new(px, py, pz);
            let p = pose.transform_point(&pc);
            let a = c.project(&p).unwrap();
            let b = c.projection_matrix().project(&p).unwrap();
            prop_assert!((a.u - b.u).abs() <= 1e-12 * a.u.abs().max(1.0) * 10.0);
            prop_assert!((a.v - b.v).abs() <= 1e-12 * a.v.abs().max(1.0) * 10.0);
        }

        #[test]
        fn canonicalization_preserves_rotation(q in quat_strategy(), vx in -1.0..1.0f64, vy in -1.0..1.0f64, vz in -1.0..1.0f64) {
            let v = Vector3::new(vx, vy, vz);
            let raw = na::UnitQuaternion::new_normalize(na::Quaternion::new(-q.w(), -q.x(), -q.y(), -q.z()));
            let canon = UnitQuaternion::from_na(&raw);
            prop_assert!(canon.w() >= 0.0);
            prop_assert!((raw * v - canon.rotate(&v)).norm() < 1e-12);
            let again = UnitQuaternion::new(canon.w(), canon.x(), canon.y(), canon.z()).unwrap();
            prop_assert!((again.dot(&canon) - 1.0).abs() < 1e-12);
            prop_assert!(again.w() >= 0.0);
        }

        #[test]
        fn compose_with_inverse_is_identity(a in pose_strategy()) {
            let id = a.compose(&a.inverse());
            prop_assert!(id.translation.norm() < 1e-12);
            let q = id.rotation.to_array();
            prop_assert!((q[0] - 1.0).abs() < 1e-12 && q[1..].iter().all(|c| c.abs() < 1e-12));
        }

        #[test]
        fn compose_acts_as_function_composition(a in pose_strategy(), b in pose_strategy(),
            x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64) {
            let p = Point3::new(x, y, z);
            let lhs = a.compose(&b).transform_point(&p);
            let rhs = a.transform_point(&b.transform_point(&p));
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
