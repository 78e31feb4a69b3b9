use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Frame, MarkerGeometry};
use crate::geometry::{CameraModel, GeometryError, Pixel, Pose};

/// Sensor and scene noise. All quantities nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Standard deviation of additive Gaussian intensity noise.
    pub pixel_noise_sigma: f64,
    /// Expected number of spurious glints per frame (Poisson).
    pub spurious_blob_rate: f64,
    /// Radius range of spurious glints, pixels.
    pub spurious_blob_radius_range: [f64; 2],
    pub rng_seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            pixel_noise_sigma: 0.0,
            spurious_blob_rate: 0.0,
            spurious_blob_radius_range: [1.0, 3.0],
            rng_seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn is_noiseless(&self) -> bool {
        self.pixel_noise_sigma == 0.0 && self.spurious_blob_rate == 0.0
    }

    pub fn validate(&self) -> Result<(), String> {
        let [lo, hi] = self.spurious_blob_radius_range;
        if !(self.pixel_noise_sigma >= 0.0 && self.spurious_blob_rate >= 0.0 && lo >= 0.0 && hi >= lo) {
            return Err(format!("noise parameters must be nonnegative: {self:?}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    /// Rasterizations averaged over the exposure window.
    pub sub_exposures: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self { sub_exposures: 8 }
    }
}

/// Continuous projections of the marker centers, in geometry order.
/// `target_pose` and `rig_pose` are world-frame poses.
pub fn exact_feature_centers(
    geometry: &MarkerGeometry,
    target_pose: &Pose,
    rig_pose: &Pose,
    camera: &CameraModel,
) -> Result<Vec<Pixel>, GeometryError> {
    let target_in_rig = rig_pose.inverse().compose(target_pose);
    geometry
        .points()
        .iter()
        .map(|p| camera.project(&target_in_rig.transform_point(p)))
        .collect()
}

/// Renders one camera's view of the markers over the exposure window
/// `[timestamp, timestamp + exposure]`.
///
/// Each sub-exposure draws every marker as a binary disc (pixel centre inside
/// the projected circle) of radius `fx · r / depth`; the frame is the average
/// of the sub-exposures. Noise is drawn from a ChaCha8 stream keyed by
/// `(noise.rng_seed, stream)`, so frames can be rendered in any order.
#[allow(clippy::too_many_arguments)]
pub fn render_frame(
    geometry: &MarkerGeometry,
    target_pose_at: impl Fn(f64) -> Pose,
    rig_pose_at: impl Fn(f64) -> Pose,
    camera: &CameraModel,
    timestamp: f64,
    exposure: f64,
    noise: &NoiseSpec,
    stream: u64,
    settings: &RenderSettings,
) -> Frame {
    assert!(exposure > 0.0, "exposure must be positive");
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    let n_sub = settings.sub_exposures.max(1);

    let mut data = binary_coverage(
        geometry,
        &target_pose_at,
        &rig_pose_at,
        camera,
        timestamp,
        exposure,
        n_sub,
    );

    if !noise.is_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
        rng.set_stream(stream);
        add_noise(&mut data, w, h, noise, &mut rng);
    }

    Frame::new(w, h, data, timestamp, exposure).expect("rendered intensities are clamped")
}

/// Sub-exposure times and the projected marker discs `(u, v, radius)` at each.
fn discs_over_exposure<'a>(
    geometry: &'a MarkerGeometry,
    target_pose_at: &'a impl Fn(f64) -> Pose,
    rig_pose_at: &'a impl Fn(f64) -> Pose,
    camera: &'a CameraModel,
    timestamp: f64,
    exposure: f64,
    n_sub: usize,
) -> impl Iterator<Item = Vec<(f64, f64, f64)>> + 'a {
    (0..n_sub).map(move |s| {
        let t = timestamp + (s as f64 + 0.5) / n_sub as f64 * exposure;
        let target_in_rig = rig_pose_at(t).inverse().compose(&target_pose_at(t));
        geometry
            .points()
            .iter()
            .filter_map(|p| {
                let pc = camera.to_camera_frame(&target_in_rig.transform_point(p));
                let center = camera.project_camera_frame(&pc).ok()?;
                Some((center.u, center.v, camera.fx() * geometry.marker_radius() / pc.z))
            })
            .collect()
    })
}

fn binary_coverage(
    geometry: &MarkerGeometry,
    target_pose_at: &impl Fn(f64) -> Pose,
    rig_pose_at: &impl Fn(f64) -> Pose,
    camera: &CameraModel,
    timestamp: f64,
    exposure: f64,
    n_sub: usize,
) -> Vec<f32> {
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    // integer counts keep static scenes exact regardless of n_sub
    let mut counts = vec![0u16; w * h];
    let mut last_touch = vec![u32::MAX; w * h];
    let discs = discs_over_exposure(
        geometry,
        target_pose_at,
        rig_pose_at,
        camera,
        timestamp,
        exposure,
        n_sub,
    );
    for (s, discs) in discs.enumerate() {
        for (u, v, r) in discs {
            for_each_disc_pixel(w, h, u, v, r, |idx| {
                if last_touch[idx] != s as u32 {
                    last_touch[idx] = s as u32;
                    counts[idx] += 1;
                }
            });
        }
    }
    counts.iter().map(|&c| c as f32 / n_sub as f32).collect()
}

fn add_noise(data: &mut [f32], w: usize, h: usize, noise: &NoiseSpec, rng: &mut ChaCha8Rng) {
    if noise.spurious_blob_rate > 0.0 {
        let count = Poisson::new(noise.spurious_blob_rate)
            .map(|d| d.sample(rng) as usize)
            .unwrap_or(0);
        let [lo, hi] = noise.spurious_blob_radius_range;
        for _ in 0..count {
            let u = rng.random::<f64>() * w as f64;
            let v = rng.random::<f64>() * h as f64;
            let r = lo + rng.random::<f64>() * (hi - lo);
            for_each_disc_pixel(w, h, u, v, r, |idx| data[idx] = 1.0);
        }
    }
    if noise.pixel_noise_sigma > 0.0 {
        let sigma = noise.pixel_noise_sigma as f32;
        for v in data.iter_mut() {
            let n: f32 = StandardNormal.sample(rng);
            *v = (*v + sigma * n).clamp(0.0, 1.0);
        }
    }
}

/// Visits pixels whose centres lie inside the circle.
pub(crate) fn for_each_disc_pixel(
    w: usize,
    h: usize,
    cu: f64,
    cv: f64,
    radius: f64,
    mut f: impl FnMut(usize),
) {
    if !(radius > 0.0) || !cu.is_finite() || !cv.is_finite() {
        return;
    }
    let r2 = radius * radius;
    let y0 = (cv - radius).ceil().max(0.0);
    let y1 = (cv + radius).floor().min(h as f64 - 1.0);
    if y0 > y1 {
        return;
    }
    for y in y0 as usize..=y1 as usize {
        let dy = y as f64 - cv;
        let half = (r2 - dy * dy).max(0.0).sqrt();
        let x0 = (cu - half).ceil().max(0.0);
        let x1 = (cu + half).floor().min(w as f64 - 1.0);
        if x0 > x1 {
            continue;
        }
        for x in x0 as usize..=x1 as usize {
            let dx = x as f64 - cu;
            if dx * dx + dy * dy <= r2 {
                f(y * w + x);
            }
        }
    }
}
