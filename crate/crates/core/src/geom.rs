//! Boxes, run-length encoded binary masks, and the overlap primitives built on them.
//!
//! Masks live on a coarse lattice ([`GridSpec`]) and are stored as row-major
//! run lengths that start with a background run. Every set operation walks the
//! foreground intervals directly, so cost scales with the number of runs and not
//! with the lattice area.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("mask grids differ: {0:?} vs {1:?}")]
    GridMismatch(GridSpec, GridSpec),
    #[error("run lengths sum to {got}, grid area is {expected}")]
    RunSumMismatch { expected: u64, got: u64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("bit vector has {got} cells, grid area is {expected}")]
    BitLengthMismatch { expected: usize, got: usize },
}

/// Axis-aligned box in pixel coordinates, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w >= 0.0
            && self.h >= 0.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        iw * ih
    }

    /// Tight box around both.
    pub fn union_box(&self, other: &BBox) -> BBox {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        BBox::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Grow (positive) or shrink (negative) every side by `d`, clamping the extent at zero.
    pub fn inflated(&self, d: f64) -> BBox {
        let w = (self.w + 2.0 * d).max(0.0);
        let h = (self.h + 2.0 * d).max(0.0);
        let (cx, cy) = self.center();
        BBox::from_center(cx, cy, w, h)
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        self.x <= px && px < self.right() && self.y <= py && py < self.bottom()
    }
}

/// Intersection over union of two boxes; 0 when the union is empty.
pub fn iou_box(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Mask lattice: `grid_w × grid_h` square cells of `cell_size` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub grid_w: u32,
    pub grid_h: u32,
    pub cell_size: f64,
}

impl GridSpec {
    pub fn new(grid_w: u32, grid_h: u32, cell_size: f64) -> Result<Self, GeomError> {
        let g = Self {
            grid_w,
            grid_h,
            cell_size,
        };
        g.validate()?;
        Ok(g)
    }

    /// Smallest grid covering an image of the given pixel size.
    pub fn covering(image_w: f64, image_h: f64, cell_size: f64) -> Result<Self, GeomError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(GeomError::InvalidGrid(format!("cell size {cell_size}")));
        }
        let gw = (image_w / cell_size).ceil();
        let gh = (image_h / cell_size).ceil();
        if !(gw >= 1.0 && gh >= 1.0 && gw <= u32::MAX as f64 && gh <= u32::MAX as f64) {
            return Err(GeomError::InvalidGrid(format!(
                "image {image_w}x{image_h} with cell {cell_size}"
            )));
        }
        Self::new(gw as u32, gh as u32, cell_size)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if self.grid_w == 0 || self.grid_h == 0 {
            return Err(GeomError::InvalidGrid(format!(
                "{}x{} cells",
                self.grid_w, self.grid_h
            )));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(GeomError::InvalidGrid(format!(
                "cell size {}",
                self.cell_size
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> u64 {
        self.grid_w as u64 * self.grid_h as u64
    }

    /// Pixel coordinates of the center of cell `(cx, cy)`.
    pub fn cell_center(&self, cx: u32, cy: u32) -> (f64, f64) {
        (
            (cx as f64 + 0.5) * self.cell_size,
            (cy as f64 + 0.5) * self.cell_size,
        )
    }
}

/// Foreground/background mask over a [`GridSpec`], run-length encoded.
///
/// `runs` alternates background and foreground lengths in row-major order and
/// always starts with a background run (possibly 0). Apart from that leading
/// run no run is zero, so equal masks have equal encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct BinaryMask {
    grid: GridSpec,
    runs: Vec<u32>,
}

/// On-disk form: `{"w":int,"h":int,"cell":float,"runs":[int,...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RleJson {
    pub w: u32,
    pub h: u32,
    pub cell: f64,
    pub runs: Vec<u32>,
}

impl TryFrom<RleJson> for BinaryMask {
    type Error = GeomError;

    fn try_from(j: RleJson) -> Result<Self, Self::Error> {
        let grid = GridSpec::new(j.w, j.h, j.cell)?;
        BinaryMask::from_runs(grid, &j.runs)
    }
}

impl From<BinaryMask> for RleJson {
    fn from(m: BinaryMask) -> Self {
        RleJson {
            w: m.grid.grid_w,
            h: m.grid.grid_h,
            cell: m.grid.cell_size,
            runs: m.runs,
        }
    }
}

impl BinaryMask {
    pub fn empty(grid: GridSpec) -> Self {
        Self {
            grid,
            runs: vec![grid.area() as u32],
        }
    }

    pub fn full(grid: GridSpec) -> Self {
        Self {
            grid,
            runs: vec![0, grid.area() as u32],
        }
    }

    /// Builds a mask from sorted, non-overlapping `[start, end)` foreground
    /// intervals of linear cell indices. Touching intervals are merged.
    pub fn from_intervals<I>(grid: GridSpec, intervals: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let area = grid.area() as u32;
        let mut runs = Vec::new();
        let mut cursor = 0u32;
        // (start, end) of the foreground run being accumulated
        let mut open: Option<(u32, u32)> = None;
        for (s, e) in intervals {
            if e <= s {
                continue;
            }
            match open {
                Some((os, oe)) if s <= oe => open = Some((os, oe.max(e))),
                Some((os, oe)) => {
                    runs.push(os - cursor);
                    runs.push(oe - os);
                    cursor = oe;
                    open = Some((s, e));
                }
                None => open = Some((s, e)),
            }
        }
        if let Some((os, oe)) = open {
            runs.push(os - cursor);
            runs.push(oe - os);
            cursor = oe;
        }
        if runs.is_empty() {
            runs.push(area);
        } else if cursor < area {
            runs.push(area - cursor);
        }
        Self { grid, runs }
    }

    /// Decodes an arbitrary run list (zero-length runs allowed) into canonical form.
    pub fn from_runs(grid: GridSpec, runs: &[u32]) -> Result<Self, GeomError> {
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        if total != grid.area() {
            return Err(GeomError::RunSumMismatch {
                expected: grid.area(),
                got: total,
            });
        }
        let mut pos = 0u32;
        let mut intervals = Vec::with_capacity(runs.len() / 2);
        for (i, &r) in runs.iter().enumerate() {
            if i % 2 == 1 && r > 0 {
                intervals.push((pos, pos + r));
            }
            pos += r;
        }
        Ok(Self::from_intervals(grid, intervals))
    }

    pub fn from_bits(grid: GridSpec, bits: &[bool]) -> Result<Self, GeomError> {
        if bits.len() as u64 != grid.area() {
            return Err(GeomError::BitLengthMismatch {
                expected: grid.area() as usize,
                got: bits.len(),
            });
        }
        let mut intervals = Vec::new();
        let mut start = None;
        for (i, &b) in bits.iter().enumerate() {
            match (b, start) {
                (true, None) => start = Some(i as u32),
                (false, Some(s)) => {
                    intervals.push((s, i as u32));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            intervals.push((s, bits.len() as u32));
        }
        Ok(Self::from_intervals(grid, intervals))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        let mut bits = vec![false; self.grid.area() as usize];
        for (s, e) in self.intervals() {
            bits[s as usize..e as usize].fill(true);
        }
        bits
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    /// Foreground `[start, end)` intervals in increasing order.
    pub fn intervals(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let mut pos = 0u32;
        self.runs.iter().enumerate().filter_map(move |(i, &r)| {
            let start = pos;
            pos += r;
            (i % 2 == 1).then_some((start, pos))
        })
    }

    pub fn count(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn get(&self, cx: u32, cy: u32) -> bool {
        let idx = cy * self.grid.grid_w + cx;
        self.intervals().any(|(s, e)| s <= idx && idx < e)
    }

    fn check_grid(&self, other: &BinaryMask) -> Result<(), GeomError> {
        if self.grid != other.grid {
            Err(GeomError::GridMismatch(self.grid, other.grid))
        } else {
            Ok(())
        }
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<u64, GeomError> {
        self.check_grid(other)?;
        Ok(merge_intervals(self, other, |a, b| a && b)
            .map(|(s, e)| (e - s) as u64)
            .sum())
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask, GeomError> {
        self.check_grid(other)?;
        Ok(Self::from_intervals(
            self.grid,
            merge_intervals(self, other, |a, b| a && b),
        ))
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask, GeomError> {
        self.check_grid(other)?;
        Ok(Self::from_intervals(
            self.grid,
            merge_intervals(self, other, |a, b| a || b),
        ))
    }
}

/// Walks the breakpoints of both masks and yields the intervals where `keep`
/// holds for the pair of memberships.
fn merge_intervals<'a>(
    a: &'a BinaryMask,
    b: &'a BinaryMask,
    keep: impl Fn(bool, bool) -> bool + 'a,
) -> impl Iterator<Item = (u32, u32)> + 'a {
    let area = a.grid.area() as u32;
    let mut ia = a.runs.iter().copied().peekable();
    let mut ib = b.runs.iter().copied().peekable();
    // remaining length of the current run and whether it is foreground
    let mut ra = ia.next().unwrap_or(area);
    let mut rb = ib.next().unwrap_or(area);
    let mut fa = false;
    let mut fb = false;
    let mut pos = 0u32;
    std::iter::from_fn(move || {
        while pos < area {
            while ra == 0 {
                ra = ia.next().unwrap_or(area - pos);
                fa = !fa;
            }
            while rb == 0 {
                rb = ib.next().unwrap_or(area - pos);
                fb = !fb;
            }
            let step = ra.min(rb);
            let start = pos;
            pos += step;
            ra -= step;
            rb -= step;
            if keep(fa, fb) {
                return Some((start, pos));
            }
        }
        None
    })
}

/// Index range `[first, last)` of cells along one axis whose centers fall in `[lo, lo + len)`.
fn axis_range(lo: f64, len: f64, cell: f64, n: u32) -> (u32, u32) {
    let hi = lo + len;
    let center = |i: u32| (i as f64 + 0.5) * cell;
    let first_at_or_above = |v: f64| -> u32 {
        let est = (v / cell - 0.5).ceil().clamp(0.0, n as f64) as u32;
        let mut i = est;
        while i > 0 && center(i - 1) >= v {
            i -= 1;
        }
        while i < n && center(i) < v {
            i += 1;
        }
        i
    };
    let a = first_at_or_above(lo);
    let b = first_at_or_above(hi);
    (a, b.max(a))
}

/// Mask whose foreground is every cell with its center inside `b`.
pub fn rasterize_box(b: &BBox, grid: &GridSpec) -> BinaryMask {
    let (x0, x1) = axis_range(b.x, b.w, grid.cell_size, grid.grid_w);
    let (y0, y1) = axis_range(b.y, b.h, grid.cell_size, grid.grid_h);
    if x0 >= x1 || y0 >= y1 {
        return BinaryMask::empty(*grid);
    }
    let gw = grid.grid_w;
    BinaryMask::from_intervals(*grid, (y0..y1).map(|cy| (cy * gw + x0, cy * gw + x1)))
}

/// IoU over foreground cells. Two empty masks score 0.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, GeomError> {
    let inter = a.intersection_count(b)?;
    let union = a.count() + b.count() - inter;
    if union == 0 {
        Ok(0.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// Elementwise product of `m` with the rasterized box `b`.
pub fn mask_restrict(m: &BinaryMask, b: &BBox) -> BinaryMask {
    let window = rasterize_box(b, m.grid());
    BinaryMask::from_intervals(*m.grid(), merge_intervals(m, &window, |a, b| a && b))
}

/// Canonical run-length encoding of a row-major bit vector.
pub fn rle_encode(grid: GridSpec, bits: &[bool]) -> Result<BinaryMask, GeomError> {
    BinaryMask::from_bits(grid, bits)
}

pub fn rle_decode(mask: &BinaryMask) -> Vec<bool> {
    mask.to_bits()
}
