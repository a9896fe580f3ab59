//! Image-space model of the 88 piano keys.
//!
//! Calibration anchors ("keystones") sit on white-key boundaries: boundary 0
//! is the left edge of A0, boundary 52 the right edge of C8. Every boundary
//! line is linearly interpolated between its enclosing keystones, which
//! absorbs mild lens distortion without a full camera model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WHITE_KEY_COUNT: usize = 52;
pub const BLACK_KEY_COUNT: usize = 36;
pub const LAST_BOUNDARY: u8 = 52;
pub const LOWEST_PITCH: u8 = 21;
pub const HIGHEST_PITCH: u8 = 108;

/// Black-key width as a fraction of the local white-key width.
pub const BLACK_WIDTH_RATIO: f64 = 0.583;
/// Black-key length as a fraction of the local key height.
pub const BLACK_LENGTH_RATIO: f64 = 0.62;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("calibration incomplete: keystone for boundary {0} is missing")]
    CalibrationIncomplete(u8),
    #[error("invalid keystone: {0}")]
    InvalidKeystone(String),
    #[error("degenerate key region for pitch {0}")]
    DegenerateRegion(u8),
    #[error("no key region for pitch {0}")]
    NoRegion(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }

    fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    fn add(self, other: Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }

    fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        self.sub(other).norm()
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2).clamp(0.0, 1.0);
    p.distance(a.add(ab.scale(t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keystone {
    pub boundary_index: u8,
    pub top: Point,
    pub bottom: Point,
}

/// Convex quadrilateral for one key, corners ordered top-left, top-right,
/// bottom-right, bottom-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRegion {
    pub pitch: u8,
    pub quad: [Point; 4],
    pub width_px: f64,
    pub is_black: bool,
}

impl KeyRegion {
    fn orientation(&self) -> f64 {
        let q = &self.quad;
        let area2: f64 = (0..4)
            .map(|i| {
                let (a, b) = (q[i], q[(i + 1) % 4]);
                a.x * b.y - b.x * a.y
            })
            .sum();
        area2.signum()
    }

    /// Inside-or-on test.
    fn covers(&self, p: Point) -> bool {
        (0..4).all(|i| self.inside_edge(i, p))
    }

    fn inside_edge(&self, i: usize, p: Point) -> bool {
        self.orientation() * cross(self.quad[i], self.quad[(i + 1) % 4], p) >= 0.0
    }

    pub fn contains(&self, p: Point) -> bool {
        point_region_distance(p, self) == 0.0
    }

    pub fn centroid(&self) -> Point {
        let sum = self.quad.iter().fold(Point::default(), |acc, &c| acc.add(c));
        sum.scale(0.25)
    }

    fn is_convex(&self) -> bool {
        let s = self.orientation();
        s != 0.0
            && (0..4).all(|i| s * cross(self.quad[i], self.quad[(i + 1) % 4], self.quad[(i + 2) % 4]) > 0.0)
    }
}

/// 0 inside or on the quad, else Euclidean distance to its boundary.
pub fn point_region_distance(point: Point, region: &KeyRegion) -> f64 {
    if region.covers(point) {
        return 0.0;
    }
    (0..4)
        .map(|i| segment_distance(point, region.quad[i], region.quad[(i + 1) % 4]))
        .fold(f64::INFINITY, f64::min)
}

/// Whether `pitch` is a black key.
pub fn is_black_pitch(pitch: u8) -> bool {
    matches!(pitch % 12, 1 | 3 | 6 | 8 | 10)
}

/// Index (0..52) of the white key at `pitch`; `None` for black keys and
/// out-of-range pitches.
pub fn white_key_index(pitch: u8) -> Option<usize> {
    if !(LOWEST_PITCH..=HIGHEST_PITCH).contains(&pitch) || is_black_pitch(pitch) {
        return None;
    }
    Some((LOWEST_PITCH..pitch).filter(|&p| !is_black_pitch(p)).count())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyboardLayout {
    regions: Vec<KeyRegion>,
    pub image_size: ImageSize,
    pub keystones: Vec<Keystone>,
    boundaries: Vec<(Point, Point)>,
}

/// Calibration document: image size plus keystones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub image_size: ImageSize,
    pub keystones: Vec<Keystone>,
}

impl Calibration {
    pub fn build(&self) -> Result<KeyboardLayout, GeometryError> {
        build_layout(&self.keystones, self.image_size)
    }
}

fn validate(keystones: &[Keystone]) -> Result<(), GeometryError> {
    for k in keystones {
        if k.boundary_index > LAST_BOUNDARY {
            return Err(GeometryError::InvalidKeystone(format!(
                "boundary index {} exceeds {LAST_BOUNDARY}",
                k.boundary_index
            )));
        }
        let finite = [k.top.x, k.top.y, k.bottom.x, k.bottom.y].iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidKeystone(format!(
                "boundary {} has a non-finite coordinate",
                k.boundary_index
            )));
        }
        if k.top.y >= k.bottom.y {
            return Err(GeometryError::InvalidKeystone(format!(
                "boundary {}: top must lie above bottom",
                k.boundary_index
            )));
        }
    }
    for pair in keystones.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.boundary_index <= a.boundary_index {
            return Err(GeometryError::InvalidKeystone(format!(
                "boundary indices must be strictly increasing ({} then {})",
                a.boundary_index, b.boundary_index
            )));
        }
        if b.top.x <= a.top.x || b.bottom.x <= a.bottom.x {
            return Err(GeometryError::InvalidKeystone(format!(
                "x must increase from boundary {} to {}",
                a.boundary_index, b.boundary_index
            )));
        }
    }
    for required in [0, LAST_BOUNDARY] {
        if !keystones.iter().any(|k| k.boundary_index == required) {
            return Err(GeometryError::CalibrationIncomplete(required));
        }
    }
    Ok(())
}

/// Build the 88-key layout from keystones.
pub fn build_layout(
    keystones: &[Keystone],
    image_size: ImageSize,
) -> Result<KeyboardLayout, GeometryError> {
    validate(keystones)?;

    let boundaries: Vec<(Point, Point)> = (0..=LAST_BOUNDARY)
        .map(|b| {
            let hi = keystones
                .iter()
                .position(|k| k.boundary_index >= b)
                .expect("boundary 52 is present");
            let right = &keystones[hi];
            if right.boundary_index == b {
                return (right.top, right.bottom);
            }
            let left = &keystones[hi - 1];
            let t = f64::from(b - left.boundary_index)
                / f64::from(right.boundary_index - left.boundary_index);
            (left.top.lerp(right.top, t), left.bottom.lerp(right.bottom, t))
        })
        .collect();

    let mut regions = Vec::with_capacity(88);
    for pitch in LOWEST_PITCH..=HIGHEST_PITCH {
        let region = match white_key_index(pitch) {
            Some(w) => white_region(pitch, &boundaries, w),
            None => black_region(pitch, &boundaries),
        };
        if !region.is_convex() || !(region.width_px > 0.0) {
            return Err(GeometryError::DegenerateRegion(pitch));
        }
        regions.push(region);
    }

    Ok(KeyboardLayout {
        regions,
        image_size,
        keystones: keystones.to_vec(),
        boundaries,
    })
}

fn white_region(pitch: u8, boundaries: &[(Point, Point)], w: usize) -> KeyRegion {
    let (tl, bl) = boundaries[w];
    let (tr, br) = boundaries[w + 1];
    KeyRegion {
        pitch,
        quad: [tl, tr, br, bl],
        width_px: tl.lerp(bl, 0.5).distance(tr.lerp(br, 0.5)),
        is_black: false,
    }
}

fn black_region(pitch: u8, boundaries: &[(Point, Point)]) -> KeyRegion {
    // A black key straddles the boundary between its white neighbours.
    let b = white_key_index(pitch - 1).expect("black key has a white left neighbour") + 1;
    let (top, bottom) = boundaries[b];
    let (prev_top, prev_bottom) = boundaries[b - 1];
    let (next_top, next_bottom) = boundaries[b + 1];

    let top_dir = next_top.sub(prev_top);
    let bottom_dir = next_bottom.sub(prev_bottom);
    let top_width = top_dir.norm() / 2.0;
    let bottom_width = bottom_dir.norm() / 2.0;

    let edge = |s: f64| {
        let center = top.lerp(bottom, s);
        let dir = top_dir.lerp(bottom_dir, s);
        let width = top_width + (bottom_width - top_width) * s;
        let half = dir.scale(BLACK_WIDTH_RATIO * width / 2.0 / dir.norm());
        (center.sub(half), center.add(half), BLACK_WIDTH_RATIO * width)
    };
    let (tl, tr, _) = edge(0.0);
    let (bl, br, _) = edge(BLACK_LENGTH_RATIO);
    let (ml, mr, _) = edge(BLACK_LENGTH_RATIO / 2.0);
    KeyRegion {
        pitch,
        quad: [tl, tr, br, bl],
        width_px: ml.distance(mr),
        is_black: true,
    }
}

impl KeyboardLayout {
    pub fn regions(&self) -> &[KeyRegion] {
        &self.regions
    }

    pub fn key_region(&self, pitch: u8) -> Result<&KeyRegion, GeometryError> {
        if !(LOWEST_PITCH..=HIGHEST_PITCH).contains(&pitch) {
            return Err(GeometryError::NoRegion(pitch));
        }
        Ok(&self.regions[usize::from(pitch - LOWEST_PITCH)])
    }

    /// Top and bottom points of each of the 53 white-key boundaries.
    pub fn boundaries(&self) -> &[(Point, Point)] {
        &self.boundaries
    }

    /// Key under `point`. Black keys win where they overlap white keys;
    /// adjacent white keys own their left edge, C8 also its right edge.
    pub fn locate_key_at(&self, point: Point) -> Option<u8> {
        if let Some(r) = self
            .regions
            .iter()
            .filter(|r| r.is_black)
            .find(|r| r.contains(point))
        {
            return Some(r.pitch);
        }
        self.regions
            .iter()
            .filter(|r| !r.is_black)
            .enumerate()
            .find(|&(w, r)| self.white_owns(r, w, point))
            .map(|(_, r)| r.pitch)
    }

    /// Positive right of boundary line `b`, zero on it. Neighbouring keys
    /// share one evaluation so every point has exactly one owner.
    fn side_of_boundary(&self, b: usize, p: Point) -> f64 {
        let (top, bottom) = self.boundaries[b];
        -cross(top, bottom, p)
    }

    fn white_owns(&self, region: &KeyRegion, w: usize, p: Point) -> bool {
        let right = self.side_of_boundary(w + 1, p);
        let last = w + 1 == WHITE_KEY_COUNT;
        self.side_of_boundary(w, p) >= 0.0
            && (right < 0.0 || (last && right == 0.0))
            && region.inside_edge(0, p)
            && region.inside_edge(2, p)
    }

    /// y of the keyboard's top edge at image column `x`, extrapolating the
    /// end segments outside the calibrated span.
    pub fn top_edge_y(&self, x: f64) -> f64 {
        let tops: Vec<Point> = self.boundaries.iter().map(|b| b.0).collect();
        let seg = tops
            .windows(2)
            .position(|w| x <= w[1].x)
            .unwrap_or(tops.len() - 2);
        let (a, b) = (tops[seg], tops[seg + 1]);
        a.y + (b.y - a.y) * (x - a.x) / (b.x - a.x)
    }

    pub fn mean_white_key_height(&self) -> f64 {
        let sum: f64 = self.boundaries.iter().map(|(t, b)| t.distance(*b)).sum();
        sum / self.boundaries.len() as f64
    }

    /// Scale-aware default for the floating-hand margin.
    pub fn default_floating_margin(&self) -> f64 {
        0.5 * self.mean_white_key_height()
    }
}
