//! Binary LiDAR scan / label file handling and the sensor model.
//!
//! Scan files are flat little-endian `f32` quadruples `(x, y, z, remission)`;
//! label files are flat little-endian `u32` where the low 16 bits carry the
//! raw semantic id. Both match the common flat-binary sequence layout so real
//! recordings can be ingested unchanged.

pub mod mapping;
pub mod synth;

use crate::error::{Error, Result};

pub use mapping::{ClassMapping, LabelArray, IGNORE};

/// One LiDAR return: cartesian coordinates in meters plus remission in [0,1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub remission: f64,
}

impl Point {
    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// A single LiDAR sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame_id: u64,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, frame_id: u64) -> Self {
        Self { points, frame_id }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Vertical beam layout and field of view of one LiDAR sensor.
///
/// `beam_elevations` are in radians, strictly descending (row 0 = top beam),
/// so the beam count equals the height of every range image this sensor
/// produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSpec {
    pub beam_elevations: Vec<f64>,
    pub horizontal_resolution: usize,
    pub fov_up: f64,
    pub fov_down: f64,
    pub max_range: f64,
}

impl SensorSpec {
    /// Evenly spaced beams from `fov_up` down to `fov_down` (degrees).
    pub fn linear(beams: usize, fov_up_deg: f64, fov_down_deg: f64, horizontal_resolution: usize, max_range: f64) -> Self {
        assert!(beams >= 2, "a sensor needs at least two beams");
        let up = fov_up_deg.to_radians();
        let down = fov_down_deg.to_radians();
        let step = (up - down) / (beams - 1) as f64;
        let beam_elevations = (0..beams).map(|i| up - step * i as f64).collect();
        Self { beam_elevations, horizontal_resolution, fov_up: up, fov_down: down, max_range }
    }

    pub fn beams(&self) -> usize {
        self.beam_elevations.len()
    }

    /// Row of the beam whose elevation is closest to `elevation`; ties go to
    /// the upper (lower-index) beam.
    pub fn nearest_beam(&self, elevation: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &e) in self.beam_elevations.iter().enumerate() {
            let d = (e - elevation).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

const POINT_STRIDE: usize = 16;

/// Decode a flat binary scan into a point cloud. Order is preserved.
pub fn parse_scan(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % POINT_STRIDE != 0 {
        return Err(Error::MalformedScan(format!(
            "byte length {} is not a multiple of {POINT_STRIDE}",
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / POINT_STRIDE);
    for (i, rec) in bytes.chunks_exact(POINT_STRIDE).enumerate() {
        let f = |o: usize| f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]) as f64;
        let p = Point { x: f(0), y: f(4), z: f(8), remission: f(12) };
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite() && p.remission.is_finite()) {
            return Err(Error::MalformedScan(format!("non-finite value in point {i}")));
        }
        points.push(p);
    }
    Ok(PointCloud::new(points, 0))
}

/// Encode a point cloud back into the flat binary layout.
///
/// Inverse of [`parse_scan`]: for every well-formed input, parsing then
/// writing reproduces the bytes exactly.
pub fn write_scan(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_STRIDE);
    for p in &cloud.points {
        out.extend_from_slice(&(p.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.y as f32).to_le_bytes());
        out.extend_from_slice(&(p.z as f32).to_le_bytes());
        out.extend_from_slice(&(p.remission as f32).to_le_bytes());
    }
    out
}

/// Decode a label file and map raw semantic ids to target class indices.
///
/// Each record is a `u32`; the low 16 bits are the semantic id (the high bits
/// carry instance data and are ignored). Ids absent from the mapping become
/// [`IGNORE`].
pub fn parse_labels(bytes: &[u8], mapping: &ClassMapping, n: usize) -> Result<LabelArray> {
    if bytes.len() != 4 * n {
        return Err(Error::LabelCountMismatch { expected: 4 * n, got: bytes.len() });
    }
    let labels = bytes
        .chunks_exact(4)
        .map(|rec| {
            let raw = u32::from_le_bytes([rec[0], rec[1], rec[2], rec[3]]);
            mapping.map_id((raw & 0xffff) as u16)
        })
        .collect();
    Ok(LabelArray { labels, num_classes: mapping.num_classes() })
}

/// Encode raw semantic ids as a label file.
pub fn write_labels(raw_ids: &[u16]) -> Vec<u8> {
    let mut out = Vec::with_capacity(raw_ids.len() * 4);
    for &id in raw_ids {
        out.extend_from_slice(&(id as u32).to_le_bytes());
    }
    out
}
