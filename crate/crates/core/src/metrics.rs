//! Position RMSE and quaternion orientation distance between an estimate
//! sequence and ground truth, after synchronizing both to a common rate.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, UnitQuaternion, Vector3};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("sequences do not overlap in time")]
    NoOverlap,
    #[error("empty sequence")]
    Empty,
    #[error("timestamps must be strictly increasing (at index {0})")]
    NotIncreasing(usize),
    #[error("sample rate must be positive, got {0}")]
    BadRate(f64),
    #[error("pose CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("pose CSV: {0}")]
    BadRecord(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub timestamp: f64,
    pub pose: Pose,
}

impl PoseSample {
    pub fn new(timestamp: f64, pose: Pose) -> Self {
        Self { timestamp, pose }
    }
}

/// A ground-truth sample and the estimate paired with it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncedPair {
    pub ground_truth: PoseSample,
    pub estimate: PoseSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionStats {
    pub p_rmse_cm: f64,
    /// Signed mean of estimate minus ground truth per axis, cm.
    pub mean_cm: [f64; 3],
    pub std_cm: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub p_rmse: f64,
    pub mean_axis_error: [f64; 3],
    pub std_axis_error: [f64; 3],
    pub q_err_mean: f64,
    pub q_err_std: f64,
    pub n: usize,
}

fn check_sequence(seq: &[PoseSample]) -> Result<(), MetricsError> {
    if seq.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (k, w) in seq.windows(2).enumerate() {
        if !(w[1].timestamp > w[0].timestamp) {
            return Err(MetricsError::NotIncreasing(k + 1));
        }
    }
    Ok(())
}

fn nearest(seq: &[PoseSample], t: f64) -> &PoseSample {
    let i = seq.partition_point(|s| s.timestamp < t);
    match (i.checked_sub(1).map(|j| &seq[j]), seq.get(i)) {
        (Some(a), Some(b)) => {
            if t - a.timestamp <= b.timestamp - t {
                a
            } else {
                b
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => unreachable!("sequence checked nonempty"),
    }
}

/// Samples both sequences at `rate` over their common time span, taking the
/// nearest sample of each. Grid points where either sequence has no sample
/// within half a period (a dropped estimate, say) are skipped.
pub fn synchronize(
    ground_truth: &[PoseSample],
    estimates: &[PoseSample],
    rate: f64,
) -> Result<Vec<SyncedPair>, MetricsError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(MetricsError::BadRate(rate));
    }
    check_sequence(ground_truth)?;
    check_sequence(estimates)?;
    let start = ground_truth[0].timestamp.max(estimates[0].timestamp);
    let end = ground_truth[ground_truth.len() - 1]
        .timestamp
        .min(estimates[estimates.len() - 1].timestamp);
    if start > end {
        return Err(MetricsError::NoOverlap);
    }
    let period = 1.0 / rate;
    let gate = period / 2.0 + 1e-9 * period;
    let mut out: Vec<SyncedPair> = Vec::new();
    let mut k = 0u64;
    loop {
        let t = start + k as f64 * period;
        if t > end + 1e-9 * period {
            break;
        }
        k += 1;
        let g = nearest(ground_truth, t);
        let e = nearest(estimates, t);
        if (g.timestamp - t).abs() > gate || (e.timestamp - t).abs() > gate {
            continue;
        }
        if out.last().is_some_and(|p| p.estimate.timestamp == e.timestamp) {
            continue;
        }
        out.push(SyncedPair {
            ground_truth: *g,
            estimate: *e,
        });
    }
    if out.is_empty() {
        return Err(MetricsError::NoOverlap);
    }
    Ok(out)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Root of the mean summed squared per-axis position difference, in cm, with
/// per-axis signed mean and (population) standard deviation.
pub fn position_rmse(pairs: &[SyncedPair]) -> PositionStats {
    assert!(!pairs.is_empty(), "position_rmse needs at least one pair");
    // convert to cm before squaring so round numbers stay exact
    let diffs: Vec<Vector3> = pairs
        .iter()
        .map(|p| p.estimate.pose.translation * 100.0 - p.ground_truth.pose.translation * 100.0)
        .collect();
    let msq = diffs.iter().map(|d| d.norm_squared()).sum::<f64>() / diffs.len() as f64;
    let mut mean_cm = [0.0; 3];
    let mut std_cm = [0.0; 3];
    for axis in 0..3 {
        let (m, s) = mean_std(diffs.iter().map(move |d| d[axis]));
        mean_cm[axis] = m;
        std_cm[axis] = s;
    }
    PositionStats {
        p_rmse_cm: msq.sqrt(),
        mean_cm,
        std_cm,
    }
}

/// `arccos(|q1 · q2|)`, in `[0, π/2]`. Half the relative rotation angle.
pub fn quaternion_distance(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    a.dot(b).abs().min(1.0).acos()
}

/// Per-sample quaternion distances.
pub fn orientation_errors(pairs: &[SyncedPair]) -> Vec<f64> {
    pairs
        .iter()
        .map(|p| quaternion_distance(&p.ground_truth.pose.rotation, &p.estimate.pose.rotation))
        .collect()
}

/// Mean and standard deviation of the per-sample quaternion distance.
pub fn orientation_error(pairs: &[SyncedPair]) -> (f64, f64) {
    assert!(!pairs.is_empty(), "orientation_error needs at least one pair");
    let errs = orientation_errors(pairs);
    mean_std(errs.iter().cloned())
}

pub fn metric_report(pairs: &[SyncedPair]) -> MetricReport {
    let p = position_rmse(pairs);
    let (q_err_mean, q_err_std) = orientation_error(pairs);
    MetricReport {
        p_rmse: p.p_rmse_cm,
        mean_axis_error: p.mean_cm,
        std_axis_error: p.std_cm,
        q_err_mean,
        q_err_std,
        n: pairs.len(),
    }
}

pub const POSE_CSV_HEADER: [&str; 8] = ["timestamp", "tx", "ty", "tz", "qw", "qx", "qy", "qz"];

pub fn write_pose_csv<W: io::Write>(w: W, samples: &[PoseSample]) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(POSE_CSV_HEADER)?;
    for s in samples {
        let t = s.pose.translation;
        let q = s.pose.rotation.to_array();
        out.write_record(
            [s.timestamp, t.x, t.y, t.z, q[0], q[1], q[2], q[3]]
                .iter()
                .map(|v| v.to_string()),
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pose_csv<R: io::Read>(r: R) -> Result<Vec<PoseSample>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).ne(POSE_CSV_HEADER) {
        return Err(MetricsError::BadRecord(format!("unexpected header {headers:?}")));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let v: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| MetricsError::BadRecord(e.to_string()))?;
            if v.len() != 8 {
                return Err(MetricsError::BadRecord(format!(
                    "expected 8 fields, got {}",
                    v.len()
                )));
            }
            let q = UnitQuaternion::new(v[4], v[5], v[6], v[7])
                .map_err(|e| MetricsError::BadRecord(e.to_string()))?;
            Ok(PoseSample::new(
                v[0],
                Pose::new(Vector3::new(v[1], v[2], v[3]), q),
            ))
        })
        .collect()
}
