//! Direct least-squares ellipse fit (Fitzgibbon's constraint `4ac - b² = 1`,
//! solved with the Halíř–Flusser partitioning).

use nalgebra::{Matrix3, Vector3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Orientation of the major axis, radians from +x.
    pub angle: f64,
}

/// Fits an ellipse to at least six points. Returns `None` when the best conic
/// is not a real ellipse (e.g. collinear input).
pub fn fit_ellipse(points: &[(f64, f64)]) -> Option<Ellipse> {
    if points.len() < 6 {
        return None;
    }
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x, sy + y));
    let (mx, my) = (mx / n, my / n);
    let scale = (points
        .iter()
        .map(|&(x, y)| (x - mx).powi(2) + (y - my).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(scale > 0.0) {
        return None;
    }

    let mut s1 = Matrix3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s3 = Matrix3::zeros();
    for &(x, y) in points {
        let (x, y) = ((x - mx) / scale, (y - my) / scale);
        let quad = Vector3::new(x * x, x * y, y * y);
        let lin = Vector3::new(x, y, 1.0);
        s1 += quad * quad.transpose();
        s2 += quad * lin.transpose();
        s3 += lin * lin.transpose();
    }
    let s3_inv = s3.try_inverse()?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // premultiply by the inverse of the constraint matrix [[0,0,2],[0,-1,0],[2,0,0]]
    let m = Matrix3::new(
        m[(2, 0)] / 2.0,
        m[(2, 1)] / 2.0,
        m[(2, 2)] / 2.0,
        -m[(1, 0)],
        -m[(1, 1)],
        -m[(1, 2)],
        m[(0, 0)] / 2.0,
        m[(0, 1)] / 2.0,
        m[(0, 2)] / 2.0,
    );

    let eigen = m.complex_eigenvalues();
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in eigen.iter() {
        if lambda.im.abs() > 1e-9 * lambda.re.abs().max(1.0) {
            continue;
        }
        let shifted = m - Matrix3::identity() * lambda.re;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t?;
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let a1: Vector3<f64> = v_t.row(imin).transpose();
        let cond = 4.0 * a1[0] * a1[2] - a1[1] * a1[1];
        if cond > 0.0 {
            // several candidates only arise numerically; keep the smallest eigenvalue
            if best.as_ref().is_none_or(|(l, _)| lambda.re < *l) {
                best = Some((lambda.re, a1));
            }
        }
    }
    let (_, a1) = best?;
    let a2 = t * a1;
    conic_to_ellipse([a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]]).map(|e| Ellipse {
        cx: e.cx * scale + mx,
        cy: e.cy * scale + my,
        semi_major: e.semi_major * scale,
        semi_minor: e.semi_minor * scale,
        angle: e.angle,
    })
}

/// Geometric parameters of `a x² + b xy + c y² + d x + e y + f = 0`.
pub fn conic_to_ellipse(conic: [f64; 6]) -> Option<Ellipse> {
    let [a, b, c, d, e, f] = conic;
    let det = 4.0 * a * c - b * b;
    if !(det > 0.0) {
        return None;
    }
    let cx = (b * e - 2.0 * c * d) / det;
    let cy = (b * d - 2.0 * a * e) / det;
    let f0 = f + (d * cx + e * cy) / 2.0;
    // eigenvalues of [[a, b/2], [b/2, c]]
    let mean = (a + c) / 2.0;
    let diff = (((a - c) / 2.0).powi(2) + (b / 2.0).powi(2)).sqrt();
    let (l1, l2) = (mean - diff, mean + diff);
    let r1 = -f0 / l1;
    let r2 = -f0 / l2;
    if !(r1 > 0.0 && r2 > 0.0) || !r1.is_finite() || !r2.is_finite() {
        return None;
    }
    // l1 is the smaller eigenvalue, so its axis is the major one
    let angle = if b == 0.0 && a <= c {
        0.0
    } else if b == 0.0 {
        std::f64::consts::FRAC_PI_2
    } else {
        (l1 - a).atan2(b / 2.0)
    };
    Some(Ellipse {
        cx,
        cy,
        semi_major: r1.sqrt(),
        semi_minor: r2.sqrt(),
        angle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(cx: f64, cy: f64, a: f64, b: f64, theta: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let t = k as f64 / n as f64 * std::f64::consts::TAU;
                let (x, y) = (a * t.cos(), b * t.sin());
                (
                    cx + x * theta.cos() - y * theta.sin(),
                    cy + x * theta.sin() + y * theta.cos(),
                )
            })
            .collect()
    }

    #[test]
    fn recovers_exact_ellipse() {
        let e = fit_ellipse(&sample(10.0, -4.0, 7.0, 3.0, 0.4, 40)).unwrap();
        assert_relative_eq!(e.cx, 10.0, epsilon = 1e-6);
        assert_relative_eq!(e.cy, -4.0, epsilon = 1e-6);
        assert_relative_eq!(e.semi_major, 7.0, epsilon = 1e-6);
        assert_relative_eq!(e.semi_minor, 3.0, epsilon = 1e-6);
        assert_relative_eq!(e.angle.rem_euclid(std::f64::consts::PI), 0.4, epsilon = 1e-6);
    }

    #[test]
    fn recovers_circle() {
        let e = fit_ellipse(&sample(100.0, 100.0, 10.0, 10.0, 0.0, 24)).unwrap();
        assert_relative_eq!(e.cx, 100.0, epsilon = 1e-6);
        assert_relative_eq!(e.semi_major, 10.0, epsilon = 1e-6);
        assert_relative_eq!(e.semi_minor, 10.0, epsilon = 1e-6);
    }

    #[test]
    fn collinear_points_do_not_fit() {
        let pts: Vec<_> = (0..10).map(|k| (k as f64, 2.0 * k as f64)).collect();
        assert!(fit_ellipse(&pts).is_none());
    }

    #[test]
    fn too_few_points() {
        assert!(fit_ellipse(&sample(0.0, 0.0, 2.0, 1.0, 0.0, 5)).is_none());
    }
}
