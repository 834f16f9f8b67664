//! Binary masks, contour point clouds, connected components and the
//! point-set Hausdorff distance.
//!
//! Pixel coordinates are `(x, y) = (column, row)` with the origin in the
//! top-left corner. All distances are in pixel units.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2D grid of foreground (1) and background (0) pixels, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidMask(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidMask(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidMask(format!(
                "pixel {pos} has value {}, expected 0 or 1",
                data[pos]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// All-background mask.
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    /// Builds a mask by evaluating `f(x, y)` on every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = u8::from(value);
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn same_shape(&self, other: &BinaryMask) -> Result<()> {
        check_dims((self.width, self.height), (other.width, other.height))
    }

    /// Mask of the pixels carrying component id `id` in `labeling`.
    pub fn component(&self, labeling: &ComponentLabeling, id: u32) -> BinaryMask {
        let data = labeling.labels.iter().map(|&l| u8::from(l == id)).collect();
        BinaryMask {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Foreground pixel coordinates in row-major order.
    pub fn foreground_points(&self) -> Vec<Point2> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| Point2::from_pixel(i % self.width, i / self.width))
            .collect()
    }
}

pub(crate) fn check_dims(left: (usize, usize), right: (usize, usize)) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch {
            left_w: left.0,
            left_h: left.1,
            right_w: right.0,
            right_h: right.1,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidPoint(format!("({x}, {y}) is not finite")));
        }
        Ok(Self { x, y })
    }

    pub(crate) fn from_pixel(x: usize, y: usize) -> Self {
        Self {
            x: x as f64,
            y: y as f64,
        }
    }

    /// Euclidean distance. Symmetric bit-for-bit in its arguments.
    pub fn dist(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    fn row_major_cmp(&self, other: &Point2) -> std::cmp::Ordering {
        self.y
            .total_cmp(&other.y)
            .then_with(|| self.x.total_cmp(&other.x))
    }
}

/// A deduplicated set of planar points kept in row-major `(y, x)` order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point2>,
}

impl PointCloud {
    /// Sorts into row-major order and drops exact duplicates.
    pub fn new(mut points: Vec<Point2>) -> Result<Self> {
        for p in &points {
            Point2::new(p.x, p.y)?;
        }
        points.sort_by(Point2::row_major_cmp);
        points.dedup_by(|a, b| a.x == b.x && a.y == b.y);
        Ok(Self { points })
    }

    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Self> {
        let points = coords
            .iter()
            .map(|&(x, y)| Point2::new(x, y))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest pairwise distance; 0 for fewer than two points.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, p) in self.points.iter().enumerate() {
            for q in &self.points[i + 1..] {
                best = best.max(p.dist(q));
            }
        }
        best
    }
}

/// Foreground pixels with at least one 4-neighbour that is background or
/// lies outside the image.
pub fn extract_contour(mask: &BinaryMask) -> PointCloud {
    let (w, h) = (mask.width, mask.height);
    let mut points = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let boundary = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
            if boundary {
                points.push(Point2::from_pixel(x, y));
            }
        }
    }
    // Already row-major and unique.
    PointCloud { points }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentLabeling {
    pub labels: Vec<u32>,
    pub component_count: usize,
    /// `component_areas[id - 1]` is the pixel count of component `id`.
    pub component_areas: Vec<usize>,
}

impl ComponentLabeling {
    pub fn area(&self, id: u32) -> usize {
        self.component_areas[id as usize - 1]
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> {
        1..=self.component_count as u32
    }
}

/// Connected-component labeling. Ids are assigned in row-major order of
/// each component's first pixel.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if mask.data[start] == 0 || labels[start] != 0 {
            continue;
        }
        let id = areas.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut area = 0;
        while let Some(idx) = queue.pop_front() {
            area += 1;
            let (x, y) = ((idx % w) as isize, (idx / w) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let n = ny as usize * w + nx as usize;
                if mask.data[n] == 1 && labels[n] == 0 {
                    labels[n] = id;
                    queue.push_back(n);
                }
            }
        }
        areas.push(area);
    }
    ComponentLabeling {
        labels,
        component_count: areas.len(),
        component_areas: areas,
    }
}

/// Symmetric Hausdorff distance between two non-empty point sets.
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    hausdorff_points(a.points(), b.points())
}

pub(crate) fn hausdorff_points(a: &[Point2], b: &[Point2]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud("Hausdorff distance is undefined"));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

/// `sup_{p in a} inf_{q in b} |p - q|`, with the early-break scan: once a
/// point's running minimum drops below the current maximum it cannot raise it.
fn directed_hausdorff(a: &[Point2], b: &[Point2]) -> f64 {
    let mut cmax = 0.0f64;
    for p in a {
        let mut cmin = f64::INFINITY;
        for q in b {
            let d = p.dist(q);
            if d < cmin {
                cmin = d;
                if cmin <= cmax {
                    break;
                }
            }
        }
        if cmin > cmax {
            cmax = cmin;
        }
    }
    cmax
}

/// Smallest distance between any pair of points in `a` and `b`.
pub(crate) fn min_distance(a: &[Point2], b: &[Point2]) -> f64 {
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            best = best.min(p.dist(q));
        }
    }
    best
}
