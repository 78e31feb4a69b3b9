use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, UnitQuaternion, Vector3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("invalid trajectory: {0}")]
    Invalid(String),
}

/// Motion of the rig center relative to the marker plate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// Rig held at `distance` metres while the plate is deflected by `yaw`
    /// radians about its vertical axis.
    Static { distance: f64, yaw: f64, duration: f64 },
    /// Rig at `distance` metres yawing in place at `angular_velocity` rad/s,
    /// sweeping `range` radians centred on the plate normal.
    Angular {
        distance: f64,
        angular_velocity: f64,
        range: f64,
    },
    /// Rig translating away from the plate along the rail axis.
    Linear {
        start_distance: f64,
        end_distance: f64,
        velocity: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialTrajectory {
    #[serde(flatten)]
    pub kind: TrajectoryKind,
    pub frame_rate: f64,
}

impl TrialTrajectory {
    pub fn new(kind: TrajectoryKind, frame_rate: f64) -> Result<Self, TrajectoryError> {
        let t = Self { kind, frame_rate };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let bad = |m: String| Err(TrajectoryError::Invalid(m));
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad(format!("frame rate must be positive, got {}", self.frame_rate));
        }
        match self.kind {
            TrajectoryKind::Static {
                distance,
                duration,
                yaw,
            } => {
                if !(distance > 0.0) || !(duration > 0.0) || !yaw.is_finite() {
                    return bad(format!(
                        "static trial needs positive distance and duration, got d={distance} T={duration}"
                    ));
                }
            }
            TrajectoryKind::Angular {
                distance,
                angular_velocity,
                range,
            } => {
                if !(distance > 0.0) || !(angular_velocity > 0.0) || !(range > 0.0) {
                    return bad(format!(
                        "angular trial needs positive distance, rate and range, got d={distance} w={angular_velocity} range={range}"
                    ));
                }
            }
            TrajectoryKind::Linear {
                start_distance,
                end_distance,
                velocity,
            } => {
                if !(start_distance > 0.0) || !(end_distance > 0.0) || !(velocity > 0.0) {
                    return bad(format!(
                        "linear trial needs positive distances and velocity, got {start_distance}->{end_distance} at {velocity}"
                    ));
                }
                if start_distance == end_distance {
                    return bad("linear trial start and end coincide".into());
                }
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match self.kind {
            TrajectoryKind::Static { duration, .. } => duration,
            TrajectoryKind::Angular {
                angular_velocity,
                range,
                ..
            } => range / angular_velocity,
            TrajectoryKind::Linear {
                start_distance,
                end_distance,
                velocity,
            } => (end_distance - start_distance).abs() / velocity,
        }
    }

    /// Number of frames on `[0, duration)` at the frame rate.
    pub fn frame_count(&self) -> usize {
        let n = self.duration() * self.frame_rate;
        // tolerate representation error so that 2 s at 30 Hz is 60 frames
        let rounded = n.round();
        if (n - rounded).abs() < 1e-9 {
            rounded as usize
        } else {
            n.ceil() as usize
        }
    }

    pub fn timestamp(&self, index: usize) -> f64 {
        index as f64 / self.frame_rate
    }

    /// Pose of the rig center in the world (plate) frame at time `t`.
    pub fn rig_center_at(&self, t: f64) -> Pose {
        match self.kind {
            TrajectoryKind::Static { distance, .. } => {
                Pose::from_translation(Vector3::new(0.0, 0.0, -distance))
            }
            TrajectoryKind::Angular {
                distance,
                angular_velocity,
                range,
            } => Pose::new(
                Vector3::new(0.0, 0.0, -distance),
                UnitQuaternion::yaw(-range / 2.0 + angular_velocity * t),
            ),
            TrajectoryKind::Linear {
                start_distance,
                end_distance,
                velocity,
            } => {
                let dir = (end_distance - start_distance).signum();
                Pose::from_translation(Vector3::new(0.0, 0.0, -(start_distance + dir * velocity * t)))
            }
        }
    }

    /// Plate pose in the world frame (constant over the trial).
    pub fn plate_pose(&self) -> Pose {
        match self.kind {
            TrajectoryKind::Static { yaw, .. } => super::plate_pose(yaw),
            _ => super::plate_pose(0.0),
        }
    }

    /// Nominal rig-to-plate distance, for reporting.
    pub fn nominal_distance(&self) -> f64 {
        match self.kind {
            TrajectoryKind::Static { distance, .. } | TrajectoryKind::Angular { distance, .. } => distance,
            TrajectoryKind::Linear { start_distance, .. } => start_distance,
        }
    }
}

/// Frame timestamps `k / frame_rate` on `[0, duration)` with the rig center
/// pose at each.
pub fn sample_trajectory(traj: &TrialTrajectory) -> Result<Vec<(f64, Pose)>, TrajectoryError> {
    traj.validate()?;
    Ok((0..traj.frame_count())
        .map(|k| {
            let t = traj.timestamp(k);
            (t, traj.rig_center_at(t))
        })
        .collect())
}
