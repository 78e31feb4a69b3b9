//! Stereo feature correspondence by relative-geometry alignment.
//!
//! Each feature is described by the sorted set of pixel offsets to every other
//! feature in its own image. Because a near-parallel stereo pair sees the same
//! constellation shifted by roughly a common disparity, offset sets of
//! corresponding features nearly coincide. Candidate pairs are ranked by the
//! distance between their offset sets and accepted greedily.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::Feature;

/// Error charged per offset that has no counterpart in the other set, pixels.
pub const MISSING_OFFSET_PENALTY: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrespondError {
    #[error("cannot match an empty feature list")]
    Empty,
    #[error("ambiguous correspondence: pair ({left}, {right}) is not the cheapest option for its feature")]
    Ambiguous { left: usize, right: usize },
    #[error("ambiguous correspondence: only {accepted} of {required} pairs could be assigned")]
    Exhausted { accepted: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// `(left_index, right_index)`, ordered by left index.
    pub pairs: Vec<(usize, usize)>,
    /// Total geometry error of the accepted pairs, pixels.
    pub residual: f64,
}

type Offset = (f64, f64);

fn offset_order(a: &Offset, b: &Offset) -> std::cmp::Ordering {
    let ma = a.0.hypot(a.1);
    let mb = b.0.hypot(b.1);
    ma.total_cmp(&mb)
        .then_with(|| a.1.atan2(a.0).total_cmp(&b.1.atan2(b.0)))
}

/// For each feature, the offsets to every other feature sorted by magnitude,
/// then by angle.
pub fn relative_geometry(features: &[Feature]) -> Vec<Vec<Offset>> {
    features
        .iter()
        .enumerate()
        .map(|(i, fi)| {
            let mut offsets: Vec<Offset> = features
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, fj)| (fj.center.u - fi.center.u, fj.center.v - fi.center.v))
                .collect();
            offsets.sort_by(offset_order);
            offsets
        })
        .collect()
}

/// Distance between two sorted offset sets: summed Euclidean distance over the
/// common prefix plus a fixed penalty per unmatched offset.
pub fn geometry_error(a: &[Offset], b: &[Offset]) -> f64 {
    let common: f64 = a.iter().zip(b).map(|(p, q)| (p.0 - q.0).hypot(p.1 - q.1)).sum();
    common + MISSING_OFFSET_PENALTY * a.len().abs_diff(b.len()) as f64
}

/// Full `|left| × |right|` matrix of geometry errors.
pub fn error_matrix(left: &[Feature], right: &[Feature]) -> Vec<Vec<f64>> {
    let gl = relative_geometry(left);
    let gr = relative_geometry(right);
    gl.iter()
        .map(|a| gr.iter().map(|b| geometry_error(a, b)).collect())
        .collect()
}

/// Greedy lowest-error matching.
///
/// All `(i, j)` assignments are sorted by increasing error (ties by index)
/// and accepted whenever both indices are still free. The result is returned
/// only when it is provably the minimum-error injective assignment: every
/// accepted pair must be the cheapest option of its feature on the smaller
/// side. Otherwise the greedy choice may have displaced a better global
/// assignment and the match is reported as ambiguous.
pub fn match_features(left: &[Feature], right: &[Feature]) -> Result<Correspondence, CorrespondError> {
    if left.is_empty() || right.is_empty() {
        return Err(CorrespondError::Empty);
    }
    if left.len() == 1 && right.len() == 1 {
        return Ok(Correspondence {
            pairs: vec![(0, 0)],
            residual: 0.0,
        });
    }
    let errors = error_matrix(left, right);
    let required = left.len().min(right.len());

    let mut candidates: Vec<(f64, usize, usize)> = errors
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &e)| (e, i, j)))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut used_left = vec![false; left.len()];
    let mut used_right = vec![false; right.len()];
    let mut pairs = Vec::with_capacity(required);
    let mut residual = 0.0;
    for &(e, i, j) in &candidates {
        if pairs.len() == required {
            break;
        }
        if used_left[i] || used_right[j] {
            continue;
        }
        used_left[i] = true;
        used_right[j] = true;
        pairs.push((i, j));
        residual += e;
    }
    if pairs.len() < required {
        return Err(CorrespondError::Exhausted {
            accepted: pairs.len(),
            required,
        });
    }

    // Sum of per-feature minima on the smaller side is a lower bound on any
    // complete assignment, so meeting it certifies optimality.
    let left_is_smaller = left.len() <= right.len();
    for &(i, j) in &pairs {
        let e = errors[i][j];
        let best = if left_is_smaller {
            errors[i].iter().cloned().fold(f64::INFINITY, f64::min)
        } else {
            errors.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min)
        };
        if e > best {
            return Err(CorrespondError::Ambiguous { left: i, right: j });
        }
    }

    pairs.sort_unstable();
    Ok(Correspondence { pairs, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feats(pts: &[(f64, f64)]) -> Vec<Feature> {
        pts.iter().map(|&(u, v)| Feature::at(u, v)).collect()
    }

    /// Minimum total error over all injective assignments covering the
    /// smaller side.
    fn exhaustive_min(errors: &[Vec<f64>]) -> f64 {
        let (n, m) = (errors.len(), errors[0].len());
        fn rec(errors: &[Vec<f64>], row: usize, used: &mut Vec<bool>, transpose: bool) -> f64 {
            let rows = if transpose { errors[0].len() } else { errors.len() };
            let cols = if transpose { errors.len() } else { errors[0].len() };
            if row == rows {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..cols {
                if used[c] {
                    continue;
                }
                used[c] = true;
                let e = if transpose { errors[c][row] } else { errors[row][c] };
                best = best.min(e + rec(errors, row + 1, used, transpose));
                used[c] = false;
            }
            best
        }
        if n <= m {
            rec(errors, 0, &mut vec![false; m], false)
        } else {
            rec(errors, 0, &mut vec![false; n], true)
        }
    }

    #[test]
    fn single_feature_has_empty_offsets() {
        assert_eq!(
            relative_geometry(&feats(&[(5.0, 5.0)])),
            vec![Vec::<Offset>::new()]
        );
    }

    #[test]
    fn two_feature_offsets() {
        let g = relative_geometry(&feats(&[(0.0, 0.0), (3.0, 4.0)]));
        assert_eq!(g, vec![vec![(3.0, 4.0)], vec![(-3.0, -4.0)]]);
    }

    #[test]
    fn collinear_middle_is_symmetric() {
        let g = relative_geometry(&feats(&[(0.0, 0.0), (7.0, 0.0), (14.0, 0.0)]));
        let mut mid = g[1].clone();
        mid.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(mid, vec![(-7.0, 0.0), (7.0, 0.0)]);
    }

    #[test]
    fn identical_lists_pair_identically() {
        let f = feats(&[(10.0, 20.0), (50.0, 25.0), (30.0, 80.0), (90.0, 60.0)]);
        let c = match_features(&f, &f).unwrap();
        assert_eq!(c.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(c.residual, 0.0);
    }

    #[test]
    fn shuffled_right_with_disparity() {
        let left = feats(&[(300.0, 200.0), (340.0, 210.0), (320.0, 250.0)]);
        // right camera: shifted by a disparity of 27 px, listed in another order
        let order = [2, 0, 1];
        let right: Vec<Feature> = order
            .iter()
            .map(|&k| Feature::at(left[k].center.u - 27.0, left[k].center.v))
            .collect();
        let c = match_features(&left, &right).unwrap();
        for (l, r) in c.pairs {
            assert_eq!(order[r], l);
        }
        assert!(c.residual < 1e-9);
    }

    #[test]
    fn single_pair_is_forced() {
        let c = match_features(&feats(&[(1.0, 2.0)]), &feats(&[(9.0, 9.0)])).unwrap();
        assert_eq!(c.pairs, vec![(0, 0)]);
        assert_eq!(c.residual, 0.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(
            match_features(&[], &feats(&[(1.0, 1.0)])),
            Err(CorrespondError::Empty)
        );
    }

    #[test]
    fn unequal_sizes_use_penalty() {
        let a = [(1.0, 0.0)];
        let b = [(1.0, 0.0), (0.0, 2.0)];
        assert_eq!(geometry_error(&a, &b), MISSING_OFFSET_PENALTY);
    }

    fn feature_set(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.0..640.0f64, 0.0..480.0f64), 1..=max)
    }

    fn dyadic_set(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0..5120i32, 0..3840i32), 1..=max).prop_map(|v| {
            v.into_iter()
                .map(|(u, v)| (u as f64 / 8.0, v as f64 / 8.0))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn greedy_is_optimal_or_ambiguous(l in feature_set(6), r in feature_set(6)) {
            let (left, right) = (feats(&l), feats(&r));
            match match_features(&left, &right) {
                Ok(c) => {
                    let errors = error_matrix(&left, &right);
                    let min = if left.len() == 1 && right.len() == 1 { 0.0 } else { exhaustive_min(&errors) };
                    prop_assert!((c.residual - min).abs() <= 1e-9 * min.max(1.0));
                    prop_assert_eq!(c.pairs.len(), left.len().min(right.len()));
                }
                Err(e) => prop_assert!(matches!(e, CorrespondError::Ambiguous { .. }), "unexpected {:?}", e),
            }
        }

        #[test]
        fn pairs_are_injective(l in feature_set(8), r in feature_set(8)) {
            if let Ok(c) = match_features(&feats(&l), &feats(&r)) {
                let mut ls: Vec<_> = c.pairs.iter().map(|p| p.0).collect();
                let mut rs: Vec<_> = c.pairs.iter().map(|p| p.1).collect();
                ls.dedup();
                rs.sort_unstable();
                rs.dedup();
                prop_assert_eq!(ls.len(), c.pairs.len());
                prop_assert_eq!(rs.len(), c.pairs.len());
            }
        }

        #[test]
        fn self_match_is_identity(l in dyadic_set(8)) {
            let mut l = l;
            l.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            l.dedup();
            let f = feats(&l);
            // repeated constellations can tie between distinct features
            let g = relative_geometry(&f);
            prop_assume!((0..g.len()).all(|i| (0..g.len()).all(|j| i == j || g[i] != g[j])));
            let c = match_features(&f, &f).unwrap();
            prop_assert_eq!(c.residual, 0.0);
            for (i, j) in c.pairs {
                prop_assert_eq!(i, j);
            }
        }

        #[test]
        fn common_shift_leaves_pairing_unchanged(
            l in dyadic_set(6),
            r in dyadic_set(6),
            du in -400i32..400,
            dv in -40i32..40,
        ) {
            let (left, right) = (feats(&l), feats(&r));
            let shifted: Vec<Feature> = r
                .iter()
                .map(|&(u, v)| Feature::at(u + du as f64 / 8.0, v + dv as f64 / 8.0))
                .collect();
            prop_assert_eq!(match_features(&left, &right), match_features(&left, &shifted));
        }
    }
}
