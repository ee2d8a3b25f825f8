//! Egocentric walkability masks rendered from the simulator by inverse
//! pinhole ground-plane projection, plus the gate and side-preference
//! statistics computed from them.
//!
//! Projection contract (pinhole, ground plane): focal length
//! `f = (width/2) / tan(hfov/2)`; column `c` maps to bearing
//! `atan((width/2 − (c + 0.5)) / f)` (left of image = positive, i.e.
//! counter-clockwise); row `r ≥ horizon_row` maps to forward depth
//! `z(r) = k / (r + 0.5 − horizon_row)` with
//! `k = near_distance · (height − 0.5 − horizon_row)`, so the bottom row
//! looks at `near_distance` meters and depth grows toward the horizon.
//! Ray length is `min(z / cos(bearing), max_range)`. Rows above
//! `horizon_row` never map to ground and are always non-walkable.

use crate::geometry::Pose2D;
use crate::worldsim::WorldMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("theta {0} must lie in (0, 1)")]
    InvalidTheta(f64),
    #[error("bad mask bytes: {0}")]
    BadMaskBytes(String),
}

/// Pinhole camera over the image lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Horizontal field of view, radians.
    pub hfov: f64,
    pub image_width: usize,
    pub image_height: usize,
    /// First image row that can see the ground plane.
    pub horizon_row: usize,
    /// Ray length cap, meters.
    pub max_range: f64,
    /// Ground depth seen by the bottom image row, meters.
    pub near_distance: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            hfov: 69.0_f64.to_radians(),
            image_width: 640,
            image_height: 480,
            horizon_row: 240,
            max_range: 10.0,
            near_distance: 0.25,
        }
    }
}

impl CameraModel {
    /// A proportionally scaled-down camera (same hfov and ranges) for
    /// cheaper rendering.
    pub fn scaled(width: usize, height: usize) -> Self {
        Self {
            image_width: width,
            image_height: height,
            horizon_row: height / 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.hfov > 0.0 && self.hfov < std::f64::consts::PI) {
            return Err(PerceptionError::InvalidCamera(format!("hfov {} out of (0, pi)", self.hfov)));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(PerceptionError::InvalidCamera("zero image dimension".into()));
        }
        if self.horizon_row >= self.image_height {
            return Err(PerceptionError::InvalidCamera(format!(
                "horizon_row {} must be < height {}",
                self.horizon_row, self.image_height
            )));
        }
        if !(self.max_range > 0.0 && self.near_distance > 0.0) {
            return Err(PerceptionError::InvalidCamera("ranges must be > 0".into()));
        }
        Ok(())
    }

    pub fn focal_length(&self) -> f64 {
        (self.image_width as f64 / 2.0) / (self.hfov / 2.0).tan()
    }

    /// Bearing of a pixel column center relative to the optical axis.
    pub fn column_bearing(&self, col: usize) -> f64 {
        let u = self.image_width as f64 / 2.0 - (col as f64 + 0.5);
        (u / self.focal_length()).atan()
    }

    /// Forward ground depth of a pixel row center; `None` above the
    /// horizon.
    pub fn row_depth(&self, row: usize) -> Option<f64> {
        if row < self.horizon_row {
            return None;
        }
        let k = self.near_distance * (self.image_height as f64 - 0.5 - self.horizon_row as f64);
        Some(k / (row as f64 + 0.5 - self.horizon_row as f64))
    }
}

/// Binary walkable-area mask over the image lattice; true = walkable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkabilityMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl WalkabilityMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, PerceptionError> {
        if bits.len() != width * height {
            return Err(PerceptionError::BadMaskBytes(format!(
                "expected {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    /// Walkable fraction, exactly popcount / (width × height).
    pub fn occupancy(&self) -> f64 {
        let count = self.bits.iter().filter(|b| **b).count();
        count as f64 / (self.width * self.height) as f64
    }

    pub fn walkable_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Packs to the mask wire format: width and height as little-endian
    /// u32, then row-major bits packed LSB-first, zero padding in the
    /// final byte.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.bits.len().div_ceil(8));
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        let mut byte = 0u8;
        for (i, bit) in self.bits.iter().enumerate() {
            if *bit {
                byte |= 1 << (i % 8);
            }
            if i % 8 == 7 {
                out.push(byte);
                byte = 0;
            }
        }
        if self.bits.len() % 8 != 0 {
            out.push(byte);
        }
        out
    }

    pub fn from_packed_bytes(bytes: &[u8]) -> Result<Self, PerceptionError> {
        if bytes.len() < 8 {
            return Err(PerceptionError::BadMaskBytes("shorter than 8-byte header".into()));
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let n = width * height;
        let expected = 8 + n.div_ceil(8);
        if bytes.len() != expected {
            return Err(PerceptionError::BadMaskBytes(format!(
                "expected {expected} bytes for {width}x{height}, got {}",
                bytes.len()
            )));
        }
        let bits = (0..n).map(|i| bytes[8 + i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self { width, height, bits })
    }

    /// Horizontally mirrored copy (column c ↔ column width−1−c).
    pub fn mirrored(&self) -> Self {
        let bits = (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| self.get(self.width - 1 - c, r)))
            .collect();
        Self { width: self.width, height: self.height, bits }
    }
}

/// Renders the walkability mask seen from `pose`: each at-or-below-horizon
/// pixel is back-projected to a ground point and is walkable iff that
/// point sits on a free cell and the sight line to it is obstacle-free.
pub fn render_walkability_mask(map: &WorldMap, pose: &Pose2D, camera: &CameraModel) -> WalkabilityMask {
    let mut bits = vec![false; camera.image_width * camera.image_height];
    for row in camera.horizon_row..camera.image_height {
        let z = camera.row_depth(row).expect("row is at or below the horizon");
        for col in 0..camera.image_width {
            let bearing = camera.column_bearing(col);
            let r = (z / bearing.cos()).min(camera.max_range);
            let (sin_a, cos_a) = (pose.yaw + bearing).sin_cos();
            let (px, py) = (pose.x + r * cos_a, pose.y + r * sin_a);
            bits[row * camera.image_width + col] =
                map.is_free(px, py) && map.segment_is_free(pose.x, pose.y, px, py);
        }
    }
    WalkabilityMask { width: camera.image_width, height: camera.image_height, bits }
}

/// Binary view-alignment gate: `d = 1` ⟺ walkable fraction ≤ `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub d: u8,
    pub occupancy: f64,
    pub theta: f64,
}

pub const DEFAULT_THETA: f64 = 0.1;

pub fn gate(mask: &WalkabilityMask, theta: f64) -> Result<GateDecision, PerceptionError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(PerceptionError::InvalidTheta(theta));
    }
    let occupancy = mask.occupancy();
    let d = if occupancy > theta { 0 } else { 1 };
    Ok(GateDecision { d, occupancy, theta })
}

/// Sign of (left-half walkable fraction − right-half walkable fraction).
/// Left half is columns `[0, ⌊w/2⌋)`, right half `[⌈w/2⌉, w)`; for odd
/// widths the center column belongs to neither. Both halves have equal
/// pixel counts, so the comparison reduces to exact integer counts.
pub fn side_preference(mask: &WalkabilityMask) -> i8 {
    assert!(mask.width() >= 2, "side_preference needs width >= 2");
    let half = mask.width() / 2;
    let right_start = mask.width() - half;
    let mut left = 0usize;
    let mut right = 0usize;
    for row in 0..mask.height() {
        for col in 0..half {
            left += mask.get(col, row) as usize;
        }
        for col in right_start..mask.width() {
            right += mask.get(col, row) as usize;
        }
    }
    match left.cmp(&right) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Equal => 0,
        std::cmp::Ordering::Less => -1,
    }
}
