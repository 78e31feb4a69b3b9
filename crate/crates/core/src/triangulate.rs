//! Two-view triangulation by iteratively reweighted linear least squares.
//!
//! The homogeneous DLT system is solved first; each camera's two rows are
//! then divided by that camera's projective depth from the previous estimate,
//! which makes the algebraic residual approximate the reprojection error.

use nalgebra::{Matrix4, RowVector4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pixel, Point3, ProjectionMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriangulationError {
    #[error("projective depth {depth} in the {camera} camera is not positive")]
    Divergence { camera: &'static str, depth: f64 },
    #[error("triangulation system has no unique null direction")]
    IllConditioned,
    #[error("triangulated point lies at infinity")]
    AtInfinity,
    #[error("invalid triangulation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriangulationParams {
    pub max_iterations: usize,
    /// Relative change in both projective depths below which iteration stops.
    pub weight_tolerance: f64,
    /// Pixel coordinates are divided by this before building the system,
    /// pixels. Defaults to the diagonal of a 640×480 image.
    pub pixel_scale: f64,
}

impl Default for TriangulationParams {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            weight_tolerance: 1e-8,
            pixel_scale: 800.0,
        }
    }
}

impl TriangulationParams {
    pub fn validate(&self) -> Result<(), TriangulationError> {
        if self.max_iterations == 0 {
            return Err(TriangulationError::InvalidParams(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.weight_tolerance > 0.0) {
            return Err(TriangulationError::InvalidParams(format!(
                "weight_tolerance must be positive, got {}",
                self.weight_tolerance
            )));
        }
        if !(self.pixel_scale > 0.0 && self.pixel_scale.is_finite()) {
            return Err(TriangulationError::InvalidParams(format!(
                "pixel_scale must be positive, got {}",
                self.pixel_scale
            )));
        }
        Ok(())
    }
}

/// Result of [`triangulate_with_stats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulated {
    pub point: Point3,
    /// Number of linear solves performed.
    pub iterations: usize,
}

pub fn triangulate(
    left_px: &Pixel,
    right_px: &Pixel,
    p_left: &ProjectionMatrix,
    p_right: &ProjectionMatrix,
    params: &TriangulationParams,
) -> Result<Point3, TriangulationError> {
    triangulate_with_stats(left_px, right_px, p_left, p_right, params).map(|t| t.point)
}

struct View {
    rows: [RowVector4<f64>; 2],
    p3: RowVector4<f64>,
    /// Sign that turns `p3 · X` into a depth in front of the camera.
    orientation: f64,
    name: &'static str,
}

impl View {
    fn new(px: &Pixel, p: &ProjectionMatrix, scale: f64, name: &'static str) -> Self {
        let m = p.matrix();
        let p1 = m.row(0).into_owned() / scale;
        let p2 = m.row(1).into_owned() / scale;
        let p3 = m.row(2).into_owned();
        let (u, v) = (px.u / scale, px.v / scale);
        let det = m.fixed_view::<3, 3>(0, 0).determinant();
        Self {
            rows: [p3 * u - p1, p3 * v - p2],
            p3,
            orientation: if det < 0.0 { -1.0 } else { 1.0 },
            name,
        }
    }

    /// Projective depth of the affine point `x` (last coordinate 1).
    fn weight(&self, x: &Vector4<f64>) -> f64 {
        (self.p3 * x)[0]
    }
}

pub fn triangulate_with_stats(
    left_px: &Pixel,
    right_px: &Pixel,
    p_left: &ProjectionMatrix,
    p_right: &ProjectionMatrix,
    params: &TriangulationParams,
) -> Result<Triangulated, TriangulationError> {
    params.validate()?;
    let views = [
        View::new(left_px, p_left, params.pixel_scale, "left"),
        View::new(right_px, p_right, params.pixel_scale, "right"),
    ];
    let mut weights = [1.0f64; 2];
    let mut point = Vector4::zeros();
    for iteration in 1..=params.max_iterations {
        let mut a = Matrix4::zeros();
        for (k, view) in views.iter().enumerate() {
            a.set_row(2 * k, &(view.rows[0] / weights[k]));
            a.set_row(2 * k + 1, &(view.rows[1] / weights[k]));
        }
        point = null_vector(&a)?;

        let mut converged = true;
        for (k, view) in views.iter().enumerate() {
            let w = view.weight(&point);
            if !(w * view.orientation > 0.0) {
                return Err(TriangulationError::Divergence {
                    camera: view.name,
                    depth: w * view.orientation,
                });
            }
            if ((w - weights[k]) / w).abs() >= params.weight_tolerance {
                converged = false;
            }
            weights[k] = w;
        }
        if converged {
            return Ok(Triangulated {
                point: Point3::new(point[0], point[1], point[2]),
                iterations: iteration,
            });
        }
    }
    Ok(Triangulated {
        point: Point3::new(point[0], point[1], point[2]),
        iterations: params.max_iterations,
    })
}

/// Dehomogenized smallest right singular vector of `a`.
fn null_vector(a: &Matrix4<f64>) -> Result<Vector4<f64>, TriangulationError> {
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(TriangulationError::IllConditioned)?;
    let mut order = [0usize, 1, 2, 3];
    let s = &svd.singular_values;
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let (largest, second_smallest, smallest) = (s[order[0]], s[order[2]], s[order[3]]);
    if !(second_smallest - smallest > 1e-12 * largest) {
        return Err(TriangulationError::IllConditioned);
    }
    let x: Vector4<f64> = v_t.row(order[3]).transpose();
    if x[3].abs() <= 1e-15 * x.norm() {
        return Err(TriangulationError::AtInfinity);
    }
    Ok(x / x[3])
}
