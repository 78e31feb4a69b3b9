//! Marker labeling by scalene edge matching and closed-form rigid
//! registration (SVD of the cross-covariance with a reflection guard).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, Pose, UnitQuaternion};
use crate::sim::{edge_lengths, MarkerGeometry, EDGE_ENDPOINTS};

pub const DEFAULT_AMBIGUITY_MARGIN: f64 = 1e-6;

/// Triangles whose area is below this fraction of the squared longest edge
/// count as collinear.
const COLLINEARITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigidError {
    #[error("observed points are collinear or coincident")]
    Degenerate,
    #[error("labeling is ambiguous: best score {best:.3e} m² vs runner-up {second:.3e} m²")]
    Ambiguous { best: f64, second: f64 },
    #[error("best labeling does not map the observed longest edge to the model longest edge")]
    LongestEdgeMismatch,
    #[error("point configuration has rank below 2")]
    DegenerateConfiguration,
    #[error("point sets differ in size ({model} model vs {observed} observed) or have fewer than 3 points")]
    SizeMismatch { model: usize, observed: usize },
}

/// Target pose relative to the rig frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub timestamp: f64,
    /// Post-fit point residual RMSE, meters.
    pub registration_rmse: f64,
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn longest_edge(edges: &[f64; 3]) -> usize {
    (0..3).max_by(|&a, &b| edges[a].total_cmp(&edges[b])).unwrap()
}

fn unordered(pair: (usize, usize)) -> (usize, usize) {
    (pair.0.min(pair.1), pair.0.max(pair.1))
}

/// Labels observed points with model indices.
///
/// Returns `labels` such that `points[labels[k]]` is model marker `k`. All six
/// labelings are scored by the summed squared edge-length differences.
pub fn match_geometry(
    points: &[Point3; 3],
    geometry: &MarkerGeometry,
    ambiguity_margin: f64,
) -> Result<[usize; 3], RigidError> {
    let observed = edge_lengths(points);
    let longest = observed.iter().cloned().fold(0.0, f64::max);
    let area2 = (points[1] - points[0]).cross(&(points[2] - points[0])).norm();
    if !(longest > 0.0) || area2 <= COLLINEARITY_TOLERANCE * longest * longest {
        return Err(RigidError::Degenerate);
    }
    let model = geometry.edge_lengths();

    let mut scored: Vec<(f64, [usize; 3])> = PERMUTATIONS
        .iter()
        .map(|perm| {
            let score = EDGE_ENDPOINTS
                .iter()
                .zip(model.iter())
                .map(|(&(a, b), &len)| {
                    let d = (points[perm[a]] - points[perm[b]]).norm() - len;
                    d * d
                })
                .sum();
            (score, *perm)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (best, labels) = scored[0];
    let second = scored[1].0;
    if second - best < ambiguity_margin {
        return Err(RigidError::Ambiguous { best, second });
    }

    let (ma, mb) = EDGE_ENDPOINTS[longest_edge(&model)];
    if unordered((labels[ma], labels[mb])) != unordered(EDGE_ENDPOINTS[longest_edge(&observed)]) {
        return Err(RigidError::LongestEdgeMismatch);
    }
    Ok(labels)
}

/// Least-squares rigid transform taking `model` onto `observed`, with the
/// RMSE of the fitted residuals. Needs at least three corresponding points.
pub fn fit_rigid(model: &[Point3], observed: &[Point3]) -> Result<(Pose, f64), RigidError> {
    if model.len() != observed.len() || model.len() < 3 {
        return Err(RigidError::SizeMismatch {
            model: model.len(),
            observed: observed.len(),
        });
    }
    let n = model.len() as f64;
    let mean = |pts: &[Point3]| pts.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let (mc, oc) = (mean(model), mean(observed));

    let mut h = Matrix3::zeros();
    for (m, o) in model.iter().zip(observed) {
        h += (m.coords - mc) * (o.coords - oc).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(RigidError::DegenerateConfiguration),
    };
    let mut s: Vec<f64> = svd.singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    if !(s[0] > 0.0) || s[1] <= 1e-12 * s[0] {
        return Err(RigidError::DegenerateConfiguration);
    }

    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let t = oc - r * mc;

    let sq: f64 = model
        .iter()
        .zip(observed)
        .map(|(m, o)| (r * m.coords + t - o.coords).norm_squared())
        .sum();
    let pose = Pose::new(t, UnitQuaternion::from_rotation_matrix(&r));
    Ok((pose, (sq / n).sqrt()))
}

/// Registers labeled observations (model order) against the geometry.
/// The returned estimate carries timestamp 0; callers stamp it.
pub fn register(points: &[Point3; 3], geometry: &MarkerGeometry) -> Result<PoseEstimate, RigidError> {
    let (pose, rmse) = fit_rigid(geometry.points(), points)?;
    Ok(PoseEstimate {
        pose,
        timestamp: 0.0,
        registration_rmse: rmse,
    })
}
