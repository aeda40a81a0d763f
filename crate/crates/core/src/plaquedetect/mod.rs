//! Plaque instance separation from a per-well probability map.
//!
//! The cascade is: binarize → distance-transform maxima merged by DBSCAN →
//! seeded watershed → circle-guided split of irregular regions → bounding-box
//! size filter.

mod dbscan;
mod hough;
mod probmap;
mod watershed;

pub use dbscan::{dbscan, Membership};
pub use hough::{boundary, hough_circles, ideal_votes, split_irregular, Circle, SplitRegion};
pub use probmap::classical_probability_map;
pub use watershed::watershed;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{distance_transform, local_maxima, BBox, BinaryMask, DistanceField, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaqueDetectConfig {
    pub binarize_threshold: f32,
    pub peak_min_distance: usize,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub circularity_flag: f64,
    pub hough_radius_range: (usize, usize),
    pub hough_vote_frac: f64,
    pub min_bbox: usize,
    pub max_plaque_diameter: Option<usize>,
}

impl Default for PlaqueDetectConfig {
    fn default() -> Self {
        Self {
            binarize_threshold: 0.5,
            peak_min_distance: 5,
            dbscan_eps: 5.0,
            dbscan_min_pts: 1,
            circularity_flag: 0.5,
            hough_radius_range: (5, 60),
            hough_vote_frac: 0.6,
            min_bbox: 10,
            max_plaque_diameter: None,
        }
    }
}

impl PlaqueDetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::Config("binarize_threshold must lie in (0, 1)".into()));
        }
        if self.hough_radius_range.0 >= self.hough_radius_range.1 {
            return Err(Error::Config("hough radius range needs r_min < r_max".into()));
        }
        if self.hough_radius_range.0 < 2 {
            return Err(Error::Config("hough r_min must be >= 2".into()));
        }
        if self.peak_min_distance < 1 || self.dbscan_min_pts < 1 {
            return Err(Error::Config(
                "peak_min_distance and dbscan_min_pts must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// How an instance came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaqueSource {
    #[default]
    Watershed,
    HoughSplit,
    /// Added by a reviewer.
    Manual,
}

/// One separated plaque, in crop coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaqueInstance {
    pub id: u32,
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BBox,
    pub centroid: (f64, f64),
    pub area: usize,
    pub circularity: f64,
    pub source: PlaqueSource,
}

/// Final instances of one well.
#[derive(Debug, Clone, PartialEq)]
pub struct WellResult {
    pub row: usize,
    pub col: usize,
    pub instances: Vec<PlaqueInstance>,
    pub count: usize,
    pub corrected: bool,
}

impl WellResult {
    pub fn new(row: usize, col: usize, instances: Vec<PlaqueInstance>) -> Self {
        Self {
            row,
            col,
            count: instances.len(),
            instances,
            corrected: false,
        }
    }
}

/// Pixels with probability `>= threshold`.
pub fn binarize(prob: &GrayImage, threshold: f32) -> BinaryMask {
    BinaryMask::from_vec(
        prob.width(),
        prob.height(),
        prob.data().iter().map(|&v| v >= threshold).collect(),
    )
    .expect("same dimensions")
}

/// Watershed seeds: distance-transform maxima (at least one pixel deep,
/// `peak_min_distance` apart) merged by DBSCAN. Each cluster becomes one seed
/// at its centroid, snapped to the nearest foreground pixel; noise points
/// remain seeds of their own.
pub fn seed_points(mask: &BinaryMask, cfg: &PlaqueDetectConfig) -> Vec<(usize, usize)> {
    seeds_with_distance(mask, &distance_transform(mask), cfg)
}

fn seeds_with_distance(mask: &BinaryMask, dist: &DistanceField, cfg: &PlaqueDetectConfig) -> Vec<(usize, usize)> {
    let peaks = local_maxima(&dist.field(), cfg.peak_min_distance, 1.0);
    if peaks.is_empty() {
        return Vec::new();
    }
    let pts: Vec<(f64, f64)> = peaks.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    let membership = dbscan(&pts, cfg.dbscan_eps, cfg.dbscan_min_pts);
    let n_clusters = membership
        .iter()
        .filter_map(|m| match m {
            Membership::Cluster(c) => Some(*c + 1),
            Membership::Noise => None,
        })
        .max()
        .unwrap_or(0);
    let mut sums = vec![(0.0, 0.0, 0usize); n_clusters];
    let mut seeds = Vec::new();
    let mut noise = Vec::new();
    for (p, m) in peaks.iter().zip(&membership) {
        match m {
            Membership::Cluster(c) => {
                sums[*c].0 += p.0 as f64;
                sums[*c].1 += p.1 as f64;
                sums[*c].2 += 1;
            }
            Membership::Noise => noise.push(*p),
        }
    }
    for (sx, sy, n) in sums {
        let (cx, cy) = (sx / n as f64, sy / n as f64);
        if let Some(p) = nearest_foreground(mask, cx.round() as i64, cy.round() as i64) {
            seeds.push(p);
        }
    }
    seeds.extend(noise);
    seeds
}

/// Closest set pixel to `(x, y)` by Euclidean distance, ties by `(y, x)`.
fn nearest_foreground(mask: &BinaryMask, x: i64, y: i64) -> Option<(usize, usize)> {
    if mask.get_signed(x, y) {
        return Some((x as usize, y as usize));
    }
    let limit = mask.width().max(mask.height()) as i64;
    let mut best: Option<(i64, i64, i64)> = None;
    for k in 1..=limit {
        if let Some((d2, _, _)) = best {
            if k * k > d2 {
                break;
            }
        }
        for dy in -k..=k {
            for dx in -k..=k {
                if dx.abs() != k && dy.abs() != k {
                    continue;
                }
                let (px, py) = (x + dx, y + dy);
                if mask.get_signed(px, py) {
                    let cand = (dx * dx + dy * dy, py, px);
                    if best.is_none_or(|b| cand < b) {
                        best = Some(cand);
                    }
                }
            }
        }
    }
    best.map(|(_, py, px)| (px as usize, py as usize))
}

/// Drops regions whose box is narrower or shorter than `min_bbox`, or wider
/// or taller than `max_plaque_diameter` when set; survivors are numbered
/// from 1 in `(y, x)` order of their centroid.
pub fn size_filter(regions: Vec<SplitRegion>, cfg: &PlaqueDetectConfig) -> Vec<PlaqueInstance> {
    let mut kept: Vec<SplitRegion> = regions
        .into_iter()
        .filter(|r| {
            let b = r.region.bbox;
            b.w >= cfg.min_bbox && b.h >= cfg.min_bbox && cfg.max_plaque_diameter.is_none_or(|m| b.w.max(b.h) <= m)
        })
        .collect();
    kept.sort_by(|a, b| {
        a.region
            .centroid
            .1
            .total_cmp(&b.region.centroid.1)
            .then(a.region.centroid.0.total_cmp(&b.region.centroid.0))
    });
    kept.into_iter()
        .enumerate()
        .map(|(i, r)| PlaqueInstance {
            id: i as u32 + 1,
            bbox: r.region.bbox,
            centroid: r.region.centroid,
            area: r.region.area,
            circularity: r.region.circularity,
            pixels: r.region.pixels,
            source: r.source,
        })
        .collect()
}

/// Full cascade on one well's probability map.
pub fn detect_plaques(prob: &GrayImage, cfg: &PlaqueDetectConfig) -> Result<Vec<PlaqueInstance>> {
    let mask = binarize(prob, cfg.binarize_threshold);
    if mask.count() == 0 {
        return Ok(Vec::new());
    }
    let dist = distance_transform(&mask);
    let seeds = seeds_with_distance(&mask, &dist, cfg);
    let regions = watershed::watershed_with_distance(&mask, &dist, &seeds)?;
    let split = split_irregular(regions, cfg)?;
    Ok(size_filter(split, cfg))
}
