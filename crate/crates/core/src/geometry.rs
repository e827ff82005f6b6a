//! Normalized bounding boxes, layout-token quantization and the patch grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in page-fraction coordinates.
///
/// `(0,0,0,0)` is reserved as "no location": prompt words, sentinels and
/// layout tokens carry it, and it never claims an image patch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const NONE: BBox = BBox { x1: 0.0, y1: 0.0, x2: 0.0, y2: 0.0 };

    /// Checked constructor.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let ok = in_unit(self.x1)
            && in_unit(self.y1)
            && in_unit(self.x2)
            && in_unit(self.y2)
            && self.x1 <= self.x2
            && self.y1 <= self.y2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidBBox(self.to_array()))
        }
    }

    pub fn is_none(&self) -> bool {
        *self == BBox::NONE
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            if self == other {
                1.0
            } else {
                0.0
            }
        } else {
            inter / union
        }
    }
}

/// Componentwise (min x1, min y1, max x2, max y2).
///
/// "No location" boxes are not skipped; callers exclude them.
pub fn union_bbox(boxes: &[BBox]) -> Result<BBox> {
    let (first, rest) = boxes.split_first().ok_or(Error::EmptyGroup)?;
    Ok(rest.iter().fold(*first, |acc, b| BBox {
        x1: acc.x1.min(b.x1),
        y1: acc.y1.min(b.y1),
        x2: acc.x2.max(b.x2),
        y2: acc.y2.max(b.y2),
    }))
}

/// Maps coordinates to integer layout indices in `[0, granularity]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutQuantizer {
    pub granularity: u32,
}

impl Default for LayoutQuantizer {
    fn default() -> Self {
        LayoutQuantizer { granularity: 500 }
    }
}

impl LayoutQuantizer {
    pub fn new(granularity: u32) -> Result<Self> {
        if granularity == 0 {
            return Err(Error::Config("layout granularity must be >= 1".into()));
        }
        Ok(LayoutQuantizer { granularity })
    }

    /// Round-half-up of `coordinate * granularity`.
    pub fn quantize_coord(&self, c: f64) -> u32 {
        libm::floor(c * self.granularity as f64 + 0.5) as u32
    }

    pub fn quantize(&self, b: &BBox) -> Result<[u32; 4]> {
        b.validate()?;
        Ok(b.to_array().map(|c| self.quantize_coord(c)))
    }

    pub fn dequantize(&self, idx: [u32; 4]) -> Result<BBox> {
        if let Some(&bad) = idx.iter().find(|&&i| i > self.granularity) {
            return Err(Error::InvalidLayoutToken { index: bad, max: self.granularity });
        }
        let v = self.granularity as f64;
        Ok(BBox {
            x1: idx[0] as f64 / v,
            y1: idx[1] as f64 / v,
            x2: idx[2] as f64 / v,
            y2: idx[3] as f64 / v,
        })
    }
}

/// Cell coordinates on the patch grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: u32,
    pub col: u32,
}

/// Partition of an `height x width` raster into square `patch` tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub height: usize,
    pub width: usize,
    pub patch: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch: usize) -> Result<Self> {
        if patch == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidGrid(alloc::format!(
                "{height}x{width} with patch {patch}"
            )));
        }
        if height % patch != 0 || width % patch != 0 {
            return Err(Error::InvalidGrid(alloc::format!(
                "{height}x{width} is not a multiple of patch size {patch}"
            )));
        }
        Ok(PatchGrid { height, width, patch })
    }

    pub fn rows(&self) -> usize {
        self.height / self.patch
    }

    pub fn cols(&self) -> usize {
        self.width / self.patch
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_of_index(&self, index: usize) -> Cell {
        Cell { row: (index / self.cols()) as u32, col: (index % self.cols()) as u32 }
    }

    /// Center of a patch in page fractions.
    pub fn patch_center(&self, index: usize) -> (f64, f64) {
        let c = self.cell_of_index(index);
        (
            (c.col as f64 + 0.5) / self.cols() as f64,
            (c.row as f64 + 0.5) / self.rows() as f64,
        )
    }

    /// The cell containing the box center, or `None` for the no-location box.
    pub fn cell_of(&self, b: &BBox) -> Option<Cell> {
        if b.is_none() {
            return None;
        }
        let (cx, cy) = b.center();
        Some(Cell { row: axis_cell(cy, self.rows()) as u32, col: axis_cell(cx, self.cols()) as u32 })
    }

    /// Row-major patch index of the box center (the layout indicator).
    pub fn patch_index_of(&self, b: &BBox) -> Option<usize> {
        self.cell_of(b).map(|c| c.row as usize * self.cols() + c.col as usize)
    }
}

/// Half-open cells `[k/n, (k+1)/n)`, last cell closed at 1.0. The boundaries
/// are compared as `k as f64 / n as f64` so results agree with a direct scan.
fn axis_cell(v: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut k = (libm::floor(v * nf).max(0.0) as usize).min(n - 1);
    while k > 0 && v < k as f64 / nf {
        k -= 1;
    }
    while k + 1 < n && v >= (k + 1) as f64 / nf {
        k += 1;
    }
    k
}

/// Convenience wrapper over [`LayoutQuantizer::quantize`].
pub fn quantize_bbox(b: &BBox, q: &LayoutQuantizer) -> Result<[u32; 4]> {
    q.quantize(b)
}

pub fn dequantize_bbox(idx: [u32; 4], q: &LayoutQuantizer) -> Result<BBox> {
    q.dequantize(idx)
}

pub fn patch_index_of(b: &BBox, g: &PatchGrid) -> Option<usize> {
    g.patch_index_of(b)
}
