//! Marker detection in low-exposure frames: global threshold, outer boundary
//! extraction with nested-contour infill, and ellipse fitting.
//!
//! Edges are taken as the boundaries of connected components of the
//! thresholded image. After a hard threshold the image is binary, so these
//! boundaries coincide with what a gradient edge detector would report.

mod contour;
mod ellipse;

pub use contour::{extract_outer_contours, Contour};
pub use ellipse::{conic_to_ellipse, fit_ellipse, Ellipse};

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pixel;
use crate::sim::{write_pgm, Frame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("{count} candidate features exceed the limit of {max}")]
    TooManyFeatures { count: usize, max: usize },
    #[error("boundary with {0} points is too short for an ellipse fit")]
    TooFewPoints(usize),
    #[error("boundary does not fit a real ellipse")]
    DegenerateFit,
    #[error("invalid detection parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectParams {
    pub intensity_threshold: f64,
    /// Filled-area gate, pixels².
    pub min_area: f64,
    pub max_area: f64,
    pub max_features: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            intensity_threshold: 0.5,
            min_area: 4.0,
            max_area: 10_000.0,
            max_features: 32,
        }
    }
}

impl DetectParams {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.intensity_threshold > 0.0 && self.intensity_threshold < 1.0) {
            return Err(DetectError::InvalidParams(format!(
                "threshold {} outside (0, 1)",
                self.intensity_threshold
            )));
        }
        if !(self.min_area > 0.0 && self.min_area < self.max_area) {
            return Err(DetectError::InvalidParams(format!(
                "area gate [{}, {}] is empty",
                self.min_area, self.max_area
            )));
        }
        Ok(())
    }
}

/// A sub-pixel marker observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub center: Pixel,
    /// Mean of the fitted ellipse's semi-axes, pixels.
    pub radius: f64,
    /// Filled component area, pixels².
    pub area: f64,
}

impl Feature {
    pub fn at(u: f64, v: f64) -> Self {
        Self {
            center: Pixel::new(u, v),
            radius: 1.0,
            area: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn write_pgm<W: io::Write>(&self, w: W) -> io::Result<()> {
        let px: Vec<f32> = self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        write_pgm(w, self.width, self.height, &px)
    }
}

/// Pixel is set iff its intensity is at least `level`.
pub fn threshold(frame: &Frame, level: f64) -> BinaryImage {
    let level = level as f32;
    BinaryImage {
        width: frame.width(),
        height: frame.height(),
        data: frame.data().iter().map(|&v| v >= level).collect(),
    }
}

/// Fits an ellipse to a contour's sub-pixel edge points. Center is the
/// ellipse center, radius the mean of its semi-axes, area the filled
/// component area.
pub fn fit_feature(contour: &Contour) -> Result<Feature, DetectError> {
    let pts = &contour.edge_points;
    if pts.len() < 6 {
        return Err(DetectError::TooFewPoints(pts.len()));
    }
    let e = fit_ellipse(pts).ok_or(DetectError::DegenerateFit)?;
    Ok(Feature {
        center: Pixel::new(e.cx, e.cy),
        radius: (e.semi_major + e.semi_minor) / 2.0,
        area: contour.area as f64,
    })
}

fn sort_features(features: &mut [Feature]) {
    features.sort_by(|a, b| {
        b.area
            .total_cmp(&a.area)
            .then(a.center.v.total_cmp(&b.center.v))
            .then(a.center.u.total_cmp(&b.center.u))
    });
}

/// Full detection pipeline. Individual fit failures drop that candidate.
pub fn detect(frame: &Frame, params: &DetectParams) -> Result<Vec<Feature>, DetectError> {
    params.validate()?;
    let binary = threshold(frame, params.intensity_threshold);
    let contours = extract_outer_contours(&binary, params)?;
    let mut features: Vec<Feature> = contours.iter().filter_map(|c| fit_feature(c).ok()).collect();
    sort_features(&mut features);
    Ok(features)
}

/// Intermediate products of [`detect`] for visual inspection.
#[derive(Debug, Clone)]
pub struct DetectDebug {
    pub binary: BinaryImage,
    pub filled: BinaryImage,
    pub contours: Vec<Contour>,
    pub features: Vec<Feature>,
}

impl DetectDebug {
    pub fn contour_mask(&self) -> BinaryImage {
        let mut m = BinaryImage::new(self.binary.width, self.binary.height);
        for c in &self.contours {
            for &(x, y) in &c.points {
                m.set(x as usize, y as usize, true);
            }
        }
        m
    }

    /// Writes `<stem>_binary.pgm`, `<stem>_filled.pgm` and `<stem>_contours.pgm`.
    pub fn write_pgms(&self, dir: &Path, stem: &str) -> io::Result<()> {
        let open = |suffix: &str| {
            std::fs::File::create(dir.join(format!("{stem}_{suffix}.pgm"))).map(io::BufWriter::new)
        };
        self.binary.write_pgm(open("binary")?)?;
        self.filled.write_pgm(open("filled")?)?;
        self.contour_mask().write_pgm(open("contours")?)
    }
}

pub fn detect_debug(frame: &Frame, params: &DetectParams) -> Result<DetectDebug, DetectError> {
    params.validate()?;
    let binary = threshold(frame, params.intensity_threshold);
    let filled = contour::filled_mask(&binary, params);
    let contours = extract_outer_contours(&binary, params)?;
    let mut features: Vec<Feature> = contours.iter().filter_map(|c| fit_feature(c).ok()).collect();
    sort_features(&mut features);
    Ok(DetectDebug {
        binary,
        filled,
        contours,
        features,
    })
}
