//! Pixel-space grounding primitives: boxes, points and masks.
//!
//! All boxes use inclusive corners, so a box `(x1, y1, x2, y2)` covers
//! `(x2 - x1 + 1) * (y2 - y1 + 1)` pixels. This makes [`mask_to_box`] and
//! [`rasterize_box`] exact inverses of each other.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2}): corners out of order")]
    InvalidBox { x1: u32, y1: u32, x2: u32, y2: u32 },
    #[error("mask has no foreground pixel")]
    EmptyMask,
    #[error("mask is not binary")]
    NonBinaryMask,
    #[error("box ({x1}, {y1}, {x2}, {y2}) does not fit a {width}x{height} grid")]
    OutOfBounds {
        x1: u32,
        y1: u32,
        x2: u32,
        y2: u32,
        width: u32,
        height: u32,
    },
    #[error("invalid mask: {0}")]
    InvalidMask(String),
}

/// Axis-aligned box with inclusive integer corners, origin at the top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    x1: u32,
    y1: u32,
    x2: u32,
    y2: u32,
}

impl BoundingBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self, GeometryError> {
        if x1 > x2 || y1 > y2 {
            return Err(GeometryError::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> u32 {
        self.x1
    }
    pub fn y1(&self) -> u32 {
        self.y1
    }
    pub fn x2(&self) -> u32 {
        self.x2
    }
    pub fn y2(&self) -> u32 {
        self.y2
    }

    pub fn coords(&self) -> [u32; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> u64 {
        u64::from(self.x2 - self.x1) + 1
    }

    pub fn height(&self) -> u64 {
        u64::from(self.y2 - self.y1) + 1
    }

    pub fn area(&self) -> u64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.x1..=self.x2).contains(&p.x) && (self.y1..=self.y2).contains(&p.y)
    }

    /// Pixel count of the overlap with `other`.
    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        if x1 > x2 || y1 > y2 {
            return 0;
        }
        (u64::from(x2 - x1) + 1) * (u64::from(y2 - y1) + 1)
    }

    /// Centre pixel, rounded half away from zero.
    pub fn center(&self) -> Point {
        Point {
            x: round_half_away_ratio(u64::from(self.x1) + u64::from(self.x2), 2) as u32,
            y: round_half_away_ratio(u64::from(self.y1) + u64::from(self.y2), 2) as u32,
        }
    }
}

impl TryFrom<[u32; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from(c: [u32; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        b.coords()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl From<[u32; 2]> for Point {
    fn from(c: [u32; 2]) -> Self {
        Point { x: c[0], y: c[1] }
    }
}

impl From<Point> for [u32; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Row-major grid of non-negative intensities. Binary masks hold only 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGrid {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl MaskGrid {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidMask(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(GeometryError::InvalidMask(format!(
                "expected {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(GeometryError::InvalidMask(format!(
                "values must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Result<Self, GeometryError> {
        Self::new(width, height, vec![0.0; width as usize * height as usize])
    }

    /// Binary mask from a row-major slice of booleans.
    pub fn from_bools(width: u32, height: u32, bits: &[bool]) -> Result<Self, GeometryError> {
        let values = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::new(width, height, values)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: f64) {
        debug_assert!(value.is_finite() && value >= 0.0);
        let idx = y as usize * self.width as usize + x as usize;
        self.values[idx] = value;
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn same_shape(&self, other: &MaskGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Foreground pixel coordinates in row-major order (any value > 0).
    pub fn foreground(&self) -> impl Iterator<Item = Point> + '_ {
        let w = self.width as usize;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(move |(i, _)| Point::new((i % w) as u32, (i / w) as u32))
    }

    pub fn foreground_count(&self) -> u64 {
        self.values.iter().filter(|&&v| v > 0.0).count() as u64
    }
}

/// |a ∩ b| / |a ∪ b| over pixel counts.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

pub fn box_l1(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.coords()
        .iter()
        .zip(b.coords().iter())
        .map(|(&p, &q)| u64::from(p.abs_diff(q)))
        .sum::<u64>() as f64
}

pub fn point_l1(a: &Point, b: &Point) -> f64 {
    (u64::from(a.x.abs_diff(b.x)) + u64::from(a.y.abs_diff(b.y))) as f64
}

fn require_binary(m: &MaskGrid) -> Result<(), GeometryError> {
    if m.is_binary() {
        Ok(())
    } else {
        Err(GeometryError::NonBinaryMask)
    }
}

/// Tightest box around the foreground: leftmost, topmost, rightmost and
/// bottommost foreground pixels.
pub fn mask_to_box(m: &MaskGrid) -> Result<BoundingBox, GeometryError> {
    require_binary(m)?;
    let mut extent: Option<[u32; 4]> = None;
    for p in m.foreground() {
        let e = extent.get_or_insert([p.x, p.y, p.x, p.y]);
        e[0] = e[0].min(p.x);
        e[1] = e[1].min(p.y);
        e[2] = e[2].max(p.x);
        e[3] = e[3].max(p.y);
    }
    let [x1, y1, x2, y2] = extent.ok_or(GeometryError::EmptyMask)?;
    BoundingBox::new(x1, y1, x2, y2)
}

/// Mean foreground coordinate, rounded half away from zero.
pub fn mask_centroid(m: &MaskGrid) -> Result<Point, GeometryError> {
    require_binary(m)?;
    let (mut sx, mut sy, mut n) = (0u64, 0u64, 0u64);
    for p in m.foreground() {
        sx += u64::from(p.x);
        sy += u64::from(p.y);
        n += 1;
    }
    if n == 0 {
        return Err(GeometryError::EmptyMask);
    }
    Ok(Point::new(
        round_half_away_ratio(sx, n) as u32,
        round_half_away_ratio(sy, n) as u32,
    ))
}

/// Binary mask with ones exactly on the pixels covered by `b`.
pub fn rasterize_box(b: &BoundingBox, width: u32, height: u32) -> Result<MaskGrid, GeometryError> {
    if b.x2 >= width || b.y2 >= height {
        return Err(GeometryError::OutOfBounds {
            x1: b.x1,
            y1: b.y1,
            x2: b.x2,
            y2: b.y2,
            width,
            height,
        });
    }
    let mut m = MaskGrid::zeros(width, height)?;
    for y in b.y1..=b.y2 {
        for x in b.x1..=b.x2 {
            m.set(x, y, 1.0);
        }
    }
    Ok(m)
}

// Exact rounding of num/den for non-negative integers; ties go up, which is
// away from zero in this domain.
fn round_half_away_ratio(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}
