use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame dimensions {width}x{height} do not match {len} intensities")]
    SizeMismatch { width: usize, height: usize, len: usize },
    #[error("intensity {0} outside [0, 1]")]
    Intensity(f32),
    #[error("exposure must be positive, got {0}")]
    Exposure(f64),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Grayscale raster, row-major, intensities in `[0, 1]`. Pixel `(x, y)`
/// covers the unit square centred on integer coordinates `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f32>,
    pub timestamp: f64,
    pub exposure: f64,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<f32>,
        timestamp: f64,
        exposure: f64,
    ) -> Result<Self, FrameError> {
        if data.len() != width * height {
            return Err(FrameError::SizeMismatch {
                width,
                height,
                len: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FrameError::Intensity(bad));
        }
        if !(exposure > 0.0) {
            return Err(FrameError::Exposure(exposure));
        }
        Ok(Self {
            width,
            height,
            data,
            timestamp,
            exposure,
        })
    }

    pub fn blank(width: usize, height: usize, timestamp: f64, exposure: f64) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
            timestamp,
            exposure,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Shifts content by an integer offset, filling uncovered pixels with 0.
    pub fn shifted(&self, dx: i64, dy: i64) -> Frame {
        let mut out = Frame::blank(self.width, self.height, self.timestamp, self.exposure);
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                let (sx, sy) = (x - dx, y - dy);
                if sx >= 0 && sy >= 0 && (sx as usize) < self.width && (sy as usize) < self.height {
                    out.data[(y as usize) * self.width + x as usize] =
                        self.data[(sy as usize) * self.width + sx as usize];
                }
            }
        }
        out
    }
}

/// Writes an 8-bit binary PGM (`P5`).
pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, pixels: &[f32]) -> io::Result<()> {
    write!(w, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = pixels
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)
}

impl Frame {
    pub fn write_pgm<W: Write>(&self, w: W) -> io::Result<()> {
        write_pgm(w, self.width, self.height, &self.data)
    }
}

/// Reads an 8-bit binary PGM into a frame with the given timing metadata.
pub fn read_pgm<R: BufRead>(mut r: R, timestamp: f64, exposure: f64) -> Result<Frame, FrameError> {
    let mut fields = Vec::new();
    while fields.len() < 4 {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(FrameError::Pgm("truncated header".into()));
        }
        let content = line.split('#').next().unwrap_or("");
        fields.extend(content.split_whitespace().map(str::to_owned));
    }
    if fields[0] != "P5" {
        return Err(FrameError::Pgm(format!("unsupported magic {}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| FrameError::Pgm(format!("bad header field {s:?}")))
    };
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(FrameError::Pgm(format!("unsupported maxval {maxval}")));
    }
    let mut bytes = vec![0u8; width * height];
    r.read_exact(&mut bytes)?;
    let data = bytes.iter().map(|&b| f32::from(b) / maxval as f32).collect();
    Frame::new(width, height, data, timestamp, exposure)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_is_byte_exact_for_8bit_levels() {
        let data: Vec<f32> = (0..12).map(|i| (i * 20) as f32 / 255.0).collect();
        let f = Frame::new(4, 3, data, 0.0, 1e-3).unwrap();
        let mut buf = Vec::new();
        f.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n4 3\n255\n"));
        let back = read_pgm(io::Cursor::new(&buf), 0.0, 1e-3).unwrap();
        for (a, b) in f.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_out_of_range_frames() {
        assert!(Frame::new(2, 2, vec![0.0; 3], 0.0, 1.0).is_err());
        assert!(Frame::new(1, 1, vec![1.5], 0.0, 1.0).is_err());
        assert!(Frame::new(1, 1, vec![0.5], 0.0, 0.0).is_err());
    }

    #[test]
    fn shift_moves_content() {
        let mut f = Frame::blank(5, 5, 0.0, 1.0);
        f.set(1, 1, 1.0);
        let s = f.shifted(2, 1);
        assert_eq!(s.get(3, 2), 1.0);
        assert_eq!(s.data().iter().filter(|&&v| v > 0.0).count(), 1);
    }
}
