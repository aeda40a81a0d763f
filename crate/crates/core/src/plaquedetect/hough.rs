//! Circle Hough transform and the circle-guided split of irregular regions.

use super::{PlaqueDetectConfig, PlaqueSource};
use crate::error::Result;
use crate::raster::{BinaryMask, Region};

/// A detected circle in mask coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub cx: usize,
    pub cy: usize,
    pub r: usize,
    pub votes: u32,
}

/// Offsets `(dx, dy)` with `r - 1 < |(dx, dy)| <= r`.
fn ring_offsets(r: usize) -> Vec<(i64, i64)> {
    let ri = r as i64;
    let (lo, hi) = (((r - 1) * (r - 1)) as i64, (r * r) as i64);
    let mut v = Vec::new();
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            let d2 = dx * dx + dy * dy;
            if d2 > lo && d2 <= hi {
                v.push((dx, dy));
            }
        }
    }
    v
}

/// Boundary pixel count of the digital disc of radius `r` centred on a pixel:
/// the votes a perfect disc outline casts for its own centre.
pub fn ideal_votes(r: usize) -> usize {
    let ri = r as i64;
    let inside = |x: i64, y: i64| x * x + y * y <= ri * ri;
    let mut n = 0;
    for y in -ri..=ri {
        for x in -ri..=ri {
            if inside(x, y)
                && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|&(dx, dy)| !inside(x + dx, y + dy))
            {
                n += 1;
            }
        }
    }
    n
}

/// Pixels of `mask` with at least one 4-neighbour outside it (raster edge included).
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        mask.get_signed(x, y)
            && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|&(dx, dy)| !mask.get_signed(x + dx, y + dy))
    })
}

/// Circles voted for by the set pixels of `edges`.
///
/// Each edge pixel votes for every centre at ring distance `r` (`r - 1 < d <= r`)
/// for `r` in the configured radius range. A `(centre, r)` cell is a circle
/// when its votes reach `hough_vote_frac` of [`ideal_votes`]`(r)`. Circles with
/// centres closer than `r_min` are deduplicated, keeping the one with more
/// votes (ties: smaller `r`, then `y`, then `x`).
pub fn hough_circles(edges: &BinaryMask, cfg: &PlaqueDetectConfig) -> Vec<Circle> {
    let (w, h) = (edges.width(), edges.height());
    let (r_min, cfg_r_max) = cfg.hough_radius_range;
    let r_min = r_min.max(2);
    // a circle wider than the raster cannot collect its votes
    let r_max = cfg_r_max.min(w.max(h) / 2 + 1);
    if w == 0 || h == 0 || r_min > r_max {
        return Vec::new();
    }
    let edge_px: Vec<(i64, i64)> = edges.pixels().map(|(x, y)| (x as i64, y as i64)).collect();
    if edge_px.is_empty() {
        return Vec::new();
    }
    let mut found = Vec::new();
    let mut acc = vec![0u32; w * h];
    for r in r_min..=r_max {
        acc.iter_mut().for_each(|v| *v = 0);
        let ring = ring_offsets(r);
        for &(bx, by) in &edge_px {
            for &(dx, dy) in &ring {
                let (cx, cy) = (bx + dx, by + dy);
                if cx >= 0 && cy >= 0 && cx < w as i64 && cy < h as i64 {
                    acc[cy as usize * w + cx as usize] += 1;
                }
            }
        }
        let need = (cfg.hough_vote_frac * ideal_votes(r) as f64).ceil() as u32;
        for (i, &v) in acc.iter().enumerate() {
            if v >= need.max(1) {
                found.push(Circle {
                    cx: i % w,
                    cy: i / w,
                    r,
                    votes: v,
                });
            }
        }
    }
    found.sort_by(|a, b| {
        b.votes
            .cmp(&a.votes)
            .then(a.r.cmp(&b.r))
            .then((a.cy, a.cx).cmp(&(b.cy, b.cx)))
    });
    let mut kept: Vec<Circle> = Vec::new();
    let min_sep2 = (r_min * r_min) as i64;
    for c in found {
        let clash = kept.iter().any(|k| {
            let (dx, dy) = (k.cx as i64 - c.cx as i64, k.cy as i64 - c.cy as i64);
            dx * dx + dy * dy < min_sep2
        });
        if !clash {
            kept.push(c);
        }
    }
    kept
}

/// A region after the irregularity check, tagged with how it was produced.
#[derive(Debug, Clone)]
pub struct SplitRegion {
    pub region: Region,
    pub source: PlaqueSource,
}

/// Regions with circularity below `circularity_flag` are searched for circles
/// along their boundary; when two or more circles centred inside the region are
/// found, its pixels are reassigned to the nearest circle centre. Other regions
/// pass through unchanged.
pub fn split_irregular(regions: Vec<Region>, cfg: &PlaqueDetectConfig) -> Result<Vec<SplitRegion>> {
    let mut out = Vec::with_capacity(regions.len());
    for region in regions {
        if region.circularity >= cfg.circularity_flag {
            out.push(SplitRegion {
                region,
                source: PlaqueSource::Watershed,
            });
            continue;
        }
        let b = region.bbox;
        let local: Vec<(usize, usize)> = region.pixels.iter().map(|&(x, y)| (x - b.x, y - b.y)).collect();
        let mask = BinaryMask::from_pixels(b.w, b.h, &local);
        let circles: Vec<Circle> = hough_circles(&boundary(&mask), cfg)
            .into_iter()
            .filter(|c| mask.get(c.cx, c.cy))
            .collect();
        if circles.len() < 2 {
            out.push(SplitRegion {
                region,
                source: PlaqueSource::Watershed,
            });
            continue;
        }
        let mut parts: Vec<Vec<(usize, usize)>> = vec![Vec::new(); circles.len()];
        for &(x, y) in &region.pixels {
            let (lx, ly) = ((x - b.x) as i64, (y - b.y) as i64);
            let nearest = circles
                .iter()
                .enumerate()
                .min_by_key(|(i, c)| ((c.cx as i64 - lx).pow(2) + (c.cy as i64 - ly).pow(2), *i))
                .map(|(i, _)| i)
                .expect("at least two circles");
            parts[nearest].push((x, y));
        }
        for px in parts.into_iter().filter(|p| !p.is_empty()) {
            out.push(SplitRegion {
                region: Region::from_pixels(region.label, px)?,
                source: PlaqueSource::HoughSplit,
            });
        }
    }
    Ok(out)
}
