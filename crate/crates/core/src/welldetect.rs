//! Well localisation: candidate masks at a reduced detection scale, geometric
//! filtering, back-projection to full resolution and row/column grid fitting.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{self, filter, BBox, BinaryMask, Connectivity, GrayImage, Region};

/// Geometric acceptance criteria for well candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WellFilterConfig {
    /// Strict lower bound on candidate area (detection-scale pixels).
    pub min_area: usize,
    /// Strict lower bound on circularity.
    pub min_circularity: f64,
    pub resize_long_side: usize,
    /// Upper bound on eccentricity; 1.0 disables the check.
    pub eccentricity_max: f64,
}

impl Default for WellFilterConfig {
    fn default() -> Self {
        Self {
            min_area: 100,
            min_circularity: 0.7,
            resize_long_side: 256,
            eccentricity_max: 1.0,
        }
    }
}

impl WellFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_area < 1 {
            return Err(Error::Config("min_area must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_circularity) || !(0.0..=1.0).contains(&self.eccentricity_max) {
            return Err(Error::Config("well thresholds must lie in [0, 1]".into()));
        }
        if self.resize_long_side < 16 {
            return Err(Error::Config("resize_long_side must be >= 16".into()));
        }
        Ok(())
    }
}

/// Declared plate layout, written `RxC` (e.g. `3x4`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
}

impl Layout {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!("invalid layout {rows}x{cols}")));
        }
        Ok(Self { rows, cols })
    }

    pub fn wells(&self) -> usize {
        self.rows * self.cols
    }

    /// Conventional layout for 6- and 12-well plates.
    pub fn for_well_count(n: usize) -> Result<Self> {
        match n {
            6 => Self::new(2, 3),
            12 => Self::new(3, 4),
            24 => Self::new(4, 6),
            _ => Err(Error::Config(format!("no standard layout for {n} wells"))),
        }
    }
}

impl TryFrom<[usize; 2]> for Layout {
    type Error = Error;
    fn try_from(a: [usize; 2]) -> Result<Self> {
        Self::new(a[0], a[1])
    }
}

impl From<Layout> for [usize; 2] {
    fn from(l: Layout) -> Self {
        [l.rows, l.cols]
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for Layout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (r, c) = s
            .to_ascii_lowercase()
            .split_once('x')
            .map(|(r, c)| (r.trim().parse::<usize>(), c.trim().parse::<usize>()))
            .ok_or_else(|| Error::Config(format!("layout must look like RxC, got {s:?}")))?;
        match (r, c) {
            (Ok(r), Ok(c)) => Self::new(r, c),
            _ => Err(Error::Config(format!("layout must look like RxC, got {s:?}"))),
        }
    }
}

/// A localized well.
#[derive(Debug, Clone, PartialEq)]
pub struct WellDetection {
    /// Region at detection scale.
    pub region: Region,
    /// Bounding box at original image resolution.
    pub bbox_full: BBox,
    pub row: Option<usize>,
    pub col: Option<usize>,
}

impl WellDetection {
    pub fn new(region: Region, scale_factor: f64, image_width: usize, image_height: usize) -> Self {
        let bbox_full = back_project(region.bbox, scale_factor, image_width, image_height);
        Self {
            region,
            bbox_full,
            row: None,
            col: None,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        self.bbox_full.center()
    }

    pub fn diameter(&self) -> f64 {
        (self.bbox_full.w + self.bbox_full.h) as f64 / 2.0
    }
}

/// Scales a detection-scale box by `scale_factor`, clamped to the image.
pub fn back_project(b: BBox, scale_factor: f64, width: usize, height: usize) -> BBox {
    let x0 = ((b.x as f64 * scale_factor).round() as usize).min(width);
    let y0 = ((b.y as f64 * scale_factor).round() as usize).min(height);
    let x1 = ((b.right() as f64 * scale_factor).round() as usize).clamp(x0, width);
    let y1 = ((b.bottom() as f64 * scale_factor).round() as usize).clamp(y0, height);
    BBox::new(x0, y0, x1 - x0, y1 - y0)
}

/// Luma of `image` resized so its longest side equals `resize_long_side`,
/// with the factor that maps detection coordinates back to full resolution.
pub fn preprocess(image: &RgbImage, resize_long_side: usize) -> Result<(GrayImage, f64)> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Dimension { width: w, height: h });
    }
    if resize_long_side < 16 {
        return Err(Error::Config("resize_long_side must be >= 16".into()));
    }
    let (nw, nh) = scaled_dims(w, h, resize_long_side);
    let scale = w.max(h) as f64 / resize_long_side as f64;
    let gray = filter::luma(image);
    Ok((filter::resize(&gray, nw, nh), scale))
}

/// Target size with the long side pinned; the short side is rounded half-up, minimum 1.
pub fn scaled_dims(w: usize, h: usize, long_side: usize) -> (usize, usize) {
    let long = w.max(h) as f64;
    let short = |v: usize| ((v as f64 * long_side as f64 / long + 0.5).floor() as usize).max(1);
    if w >= h {
        (long_side, short(h))
    } else {
        (short(w), long_side)
    }
}

/// Where candidate masks come from.
#[derive(Debug, Clone)]
pub enum CandidateSource {
    /// Otsu + opening on the detection-scale luma.
    Classical,
    /// Pre-computed masks, one per candidate, at detection scale.
    External(Vec<BinaryMask>),
}

/// Candidate well masks at detection scale.
///
/// The classical generator thresholds the blurred luma with Otsu (wells are
/// dark discs on a light background), opens the foreground with a 3×3 square
/// twice, and emits one hole-filled mask per connected component.
pub fn generate_candidates(image: &GrayImage, source: &CandidateSource) -> Result<Vec<BinaryMask>> {
    match source {
        CandidateSource::External(masks) => {
            for m in masks {
                if m.width() != image.width() || m.height() != image.height() {
                    return Err(Error::Input(format!(
                        "candidate mask is {}x{}, detection raster is {}x{}",
                        m.width(),
                        m.height(),
                        image.width(),
                        image.height()
                    )));
                }
            }
            Ok(masks.clone())
        }
        CandidateSource::Classical => {
            let blurred = filter::gaussian_blur(image, 1.0);
            let Some(split) = filter::otsu(blurred.data().iter().copied()) else {
                return Ok(Vec::new());
            };
            if split.mean_high - split.mean_low < 0.1 {
                return Ok(Vec::new());
            }
            let fg = BinaryMask::from_vec(
                image.width(),
                image.height(),
                blurred.data().iter().map(|&v| v < split.threshold).collect(),
            )?;
            let opened = filter::open(&fg, 2);
            let (labels, n) = raster::label_components(&opened, true, Connectivity::Eight);
            let mut masks = vec![BinaryMask::new(image.width(), image.height()); n as usize];
            for (i, &l) in labels.iter().enumerate() {
                if l > 0 {
                    masks[l as usize - 1].set(i % image.width(), i / image.width(), true);
                }
            }
            Ok(masks.iter().map(raster::fill_holes).collect())
        }
    }
}

/// Region geometry of each candidate mask, in input order; empty masks are skipped.
pub fn candidate_regions(masks: &[BinaryMask]) -> Result<Vec<Region>> {
    masks
        .iter()
        .enumerate()
        .filter(|(_, m)| m.count() > 0)
        .map(|(i, m)| Region::from_pixels(i as u32 + 1, m.pixels().collect()))
        .collect()
}

/// Sidecar file accompanying external candidate masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateSidecar {
    pub scale_factor: f64,
}

pub const CANDIDATE_SIDECAR: &str = "candidates.json";

/// Loads `cand_###.png` masks (sorted by name) and the `candidates.json` sidecar.
pub fn load_external_candidates(dir: impl AsRef<Path>) -> Result<(Vec<BinaryMask>, f64)> {
    let dir = dir.as_ref();
    let sidecar: CandidateSidecar = serde_json::from_str(&std::fs::read_to_string(dir.join(CANDIDATE_SIDECAR))?)?;
    if sidecar.scale_factor.is_nan() || sidecar.scale_factor <= 0.0 {
        return Err(Error::Input("sidecar scale_factor must be positive".into()));
    }
    let mut names: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("cand_") && n.ends_with(".png"))
        .collect();
    names.sort();
    let masks = names
        .iter()
        .map(|n| raster::io::load_mask(dir.join(n)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = masks.first() {
        if masks
            .iter()
            .any(|m| m.width() != first.width() || m.height() != first.height())
        {
            return Err(Error::Input("candidate masks differ in dimensions".into()));
        }
    }
    Ok((masks, sidecar.scale_factor))
}

/// Keeps regions with `area > min_area`, `circularity > min_circularity` and
/// `eccentricity <= eccentricity_max`, preserving order.
pub fn filter_wells(candidates: &[Region], cfg: &WellFilterConfig) -> Vec<Region> {
    candidates
        .iter()
        .filter(|r| {
            r.area > cfg.min_area && r.circularity > cfg.min_circularity && r.eccentricity <= cfg.eccentricity_max
        })
        .cloned()
        .collect()
}

/// Drops candidates whose full-resolution box overlaps a larger kept one with IoU > 0.5.
pub fn suppress_nested(mut wells: Vec<WellDetection>) -> Vec<WellDetection> {
    let mut order: Vec<usize> = (0..wells.len()).collect();
    order.sort_by(|&a, &b| wells[b].region.area.cmp(&wells[a].region.area).then(a.cmp(&b)));
    let mut keep = vec![false; wells.len()];
    let mut kept: Vec<BBox> = Vec::new();
    for i in order {
        let b = wells[i].bbox_full;
        if kept.iter().all(|k| box_iou(k, &b) <= 0.5) {
            keep[i] = true;
            kept.push(b);
        }
    }
    let mut i = 0;
    wells.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    wells
}

fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let ix = a.right().min(b.right()).saturating_sub(a.x.max(b.x));
    let iy = a.bottom().min(b.bottom()).saturating_sub(a.y.max(b.y));
    let inter = (ix * iy) as f64;
    let union = (a.area() + b.area()) as f64 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Wells bound to a row/column lattice. Rows run top to bottom, columns left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateGrid {
    pub rows: usize,
    pub cols: usize,
    pub row_pitch: f64,
    pub col_pitch: f64,
    /// Estimated centre line of each row (y) and column (x), full resolution.
    pub row_centers: Vec<f64>,
    pub col_centers: Vec<f64>,
    pub median_diameter: f64,
    /// Row-major `rows × cols`; `None` marks a missing well.
    pub slots: Vec<Option<WellDetection>>,
}

impl PlateGrid {
    pub fn slot(&self, row: usize, col: usize) -> Option<&WellDetection> {
        self.slots.get(row * self.cols + col).and_then(|s| s.as_ref())
    }

    pub fn layout(&self) -> Layout {
        Layout {
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Box of the slot: the detection's, or a lattice estimate for missing wells.
    pub fn slot_bbox(&self, row: usize, col: usize, width: usize, height: usize) -> BBox {
        if let Some(w) = self.slot(row, col) {
            return w.bbox_full;
        }
        let (cx, cy) = (self.col_centers[col], self.row_centers[row]);
        let r = self.median_diameter / 2.0;
        let x0 = (cx - r).round().clamp(0.0, width as f64) as usize;
        let y0 = (cy - r).round().clamp(0.0, height as f64) as usize;
        let x1 = ((cx + r).round().clamp(0.0, width as f64) as usize).max(x0);
        let y1 = ((cy + r).round().clamp(0.0, height as f64) as usize).max(y0);
        BBox::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn missing(&self) -> Vec<(usize, usize)> {
        (0..self.rows * self.cols)
            .filter(|&i| self.slots[i].is_none())
            .map(|i| (i / self.cols, i % self.cols))
            .collect()
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Sort-and-split clustering: a new cluster starts wherever consecutive sorted
/// values are more than `gap` apart. Returns the cluster index of each input
/// and the cluster means, ascending.
fn split_clusters(values: &[f64], gap: f64) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ids = vec![0usize; values.len()];
    let mut sums: Vec<(f64, usize)> = Vec::new();
    let mut prev: Option<f64> = None;
    for i in order {
        let v = values[i];
        if prev.is_none_or(|p| v - p > gap) {
            sums.push((0.0, 0));
        }
        let k = sums.len() - 1;
        sums[k].0 += v;
        sums[k].1 += 1;
        ids[i] = k;
        prev = Some(v);
    }
    (ids, sums.into_iter().map(|(s, n)| s / n as f64).collect())
}

/// Lattice index of each cluster along one axis and the centre of every slot.
fn assign_axis(
    centers: &[f64],
    slots: Option<usize>,
    pitch: f64,
    frame: Option<(f64, f64)>,
    axis: &str,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if let Some(n) = slots {
        if centers.len() > n {
            return Err(Error::LayoutConflict(format!(
                "{} {axis} clusters detected, layout declares {n}",
                centers.len()
            )));
        }
        if centers.len() == n {
            return Ok(((0..n).collect(), centers.to_vec()));
        }
    }
    let mut rel = vec![0usize];
    for w in centers.windows(2) {
        let step = ((w[1] - w[0]) / pitch).round().max(1.0) as usize;
        rel.push(rel.last().unwrap() + step);
    }
    let span = *rel.last().unwrap();
    let n = slots.unwrap_or(span + 1);
    if span + 1 > n {
        return Err(Error::LayoutConflict(format!(
            "{axis} clusters span {} pitches, layout declares {n}",
            span + 1
        )));
    }
    // choose the offset that best centres the full lattice in the frame
    let offset = match frame {
        Some((lo, hi)) => (0..=n - 1 - span)
            .min_by(|&a, &b| {
                let mid = |o: usize| centers[0] + ((n - 1) as f64 / 2.0 - o as f64) * pitch;
                let target = (lo + hi) / 2.0;
                (mid(a) - target)
                    .abs()
                    .total_cmp(&(mid(b) - target).abs())
                    .then(a.cmp(&b))
            })
            .unwrap_or(0),
        None => 0,
    };
    let idx: Vec<usize> = rel.iter().map(|r| r + offset).collect();
    let mut slot_centers: Vec<f64> = (0..n)
        .map(|k| centers[0] + (k as f64 - offset as f64) * pitch)
        .collect();
    for (c, &i) in centers.iter().zip(&idx) {
        slot_centers[i] = *c;
    }
    Ok((idx, slot_centers))
}

/// Binds wells to `(row, col)` slots.
///
/// Centroids are clustered per axis by sorting and splitting at gaps larger
/// than half the median well diameter. When an axis has fewer clusters than
/// the declared layout, clusters are placed on a lattice of uniform pitch
/// (median adjacent spacing, preferring axes where every slot is present) and
/// the remaining slots are marked missing; `frame` (normally the image bounds)
/// decides which end of the lattice the missing slots belong to.
pub fn fit_grid(mut wells: Vec<WellDetection>, layout: Option<Layout>, frame: Option<BBox>) -> Result<PlateGrid> {
    if wells.is_empty() {
        return Err(Error::Input("grid fitting needs at least one well".into()));
    }
    let mut diams: Vec<f64> = wells.iter().map(|w| w.diameter()).collect();
    let median_diameter = median(&mut diams);
    let gap = 0.5 * median_diameter;
    let xs: Vec<f64> = wells.iter().map(|w| w.center().0).collect();
    let ys: Vec<f64> = wells.iter().map(|w| w.center().1).collect();
    let (col_ids, col_c) = split_clusters(&xs, gap);
    let (row_ids, row_c) = split_clusters(&ys, gap);

    let gaps = |c: &[f64]| c.windows(2).map(|w| w[1] - w[0]).collect::<Vec<f64>>();
    let complete = |c: &[f64], n: Option<usize>| n.is_some_and(|n| n == c.len()) && c.len() >= 2;
    let (nr, nc) = (layout.map(|l| l.rows), layout.map(|l| l.cols));
    let mut reference: Vec<f64> = Vec::new();
    if complete(&row_c, nr) {
        reference.extend(gaps(&row_c));
    }
    if complete(&col_c, nc) {
        reference.extend(gaps(&col_c));
    }
    let p_ref = if !reference.is_empty() {
        median(&mut reference)
    } else {
        gaps(&row_c)
            .into_iter()
            .chain(gaps(&col_c))
            .fold(f64::INFINITY, f64::min)
    };
    let p_ref = if p_ref.is_finite() {
        p_ref
    } else {
        median_diameter * 1.15
    };
    let refine = |c: &[f64]| -> f64 {
        let mut per: Vec<f64> = gaps(c).into_iter().map(|g| g / (g / p_ref).round().max(1.0)).collect();
        if per.is_empty() {
            p_ref
        } else {
            median(&mut per)
        }
    };
    let (row_pitch, col_pitch) = (refine(&row_c), refine(&col_c));

    let fx = frame.map(|f| (f.x as f64, f.right() as f64));
    let fy = frame.map(|f| (f.y as f64, f.bottom() as f64));
    let (row_idx, row_centers) = assign_axis(&row_c, nr, row_pitch, fy, "row")?;
    let (col_idx, col_centers) = assign_axis(&col_c, nc, col_pitch, fx, "column")?;
    let (rows, cols) = (row_centers.len(), col_centers.len());

    let mut slots: Vec<Option<WellDetection>> = vec![None; rows * cols];
    for (i, w) in wells.iter_mut().enumerate() {
        let (r, c) = (row_idx[row_ids[i]], col_idx[col_ids[i]]);
        w.row = Some(r);
        w.col = Some(c);
    }
    for w in wells {
        let (r, c) = (w.row.unwrap(), w.col.unwrap());
        let slot = &mut slots[r * cols + c];
        if slot.is_some() {
            return Err(Error::LayoutConflict(format!("two wells assigned to row {r}, col {c}")));
        }
        *slot = Some(w);
    }
    Ok(PlateGrid {
        rows,
        cols,
        row_pitch,
        col_pitch,
        row_centers,
        col_centers,
        median_diameter,
        slots,
    })
}

/// Mapping from crop pixel coordinates to full-image coordinates:
/// `full = origin + crop * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTransform {
    pub origin: [f64; 2],
    /// Full-image pixels per crop pixel.
    pub scale: f64,
    pub side: usize,
}

impl CropTransform {
    pub fn to_full(&self, x: f64, y: f64) -> (f64, f64) {
        (self.origin[0] + x * self.scale, self.origin[1] + y * self.scale)
    }

    pub fn to_crop(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin[0]) / self.scale, (y - self.origin[1]) / self.scale)
    }

    /// Crop-space box mapped to a full-resolution `[x, y, w, h]`.
    pub fn box_to_full(&self, b: BBox) -> [f64; 4] {
        let (x, y) = self.to_full(b.x as f64, b.y as f64);
        [x, y, b.w as f64 * self.scale, b.h as f64 * self.scale]
    }

    /// Square crop geometry centred on `bbox`, with side `max(w, h)`.
    pub fn for_bbox(bbox: BBox, out_side: usize) -> Self {
        let side = bbox.w.max(bbox.h).max(1) as f64;
        let (cx, cy) = bbox.center();
        Self {
            origin: [(cx - side / 2.0).floor(), (cy - side / 2.0).floor()],
            scale: side / out_side as f64,
            side: out_side,
        }
    }
}

/// A resampled well image with its coordinate mapping.
#[derive(Debug, Clone)]
pub struct WellCrop {
    pub image: RgbImage,
    pub transform: CropTransform,
}

pub const CROP_FILL: [u8; 3] = [255, 255, 255];

/// Square crop centred on `bbox_full`, padded with white beyond the image
/// edges and resampled (bilinear) to `out_side × out_side`.
pub fn crop_well(image: &RgbImage, bbox_full: BBox, out_side: usize) -> WellCrop {
    let t = CropTransform::for_bbox(bbox_full, out_side);
    let img = RgbImage::from_fn(out_side as u32, out_side as u32, |x, y| {
        // sample at the centre of the covered source area
        let sx = t.origin[0] + (x as f64 + 0.5) * t.scale - 0.5;
        let sy = t.origin[1] + (y as f64 + 0.5) * t.scale - 0.5;
        Rgb(filter::sample_rgb(image, sx, sy, CROP_FILL))
    });
    WellCrop {
        image: img,
        transform: t,
    }
}
