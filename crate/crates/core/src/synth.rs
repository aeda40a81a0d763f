//! Seeded synthetic plates and probability maps with exact ground truth.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plaquedetect::PlaqueSource;
use crate::raster::{BBox, GrayImage};
use crate::report::{PlaqueReport, PlateAnalysis, WellReport};
use crate::welldetect::{CropTransform, Layout};

pub const BACKGROUND: [u8; 3] = [235, 235, 235];
pub const MONOLAYER: [u8; 3] = [85, 40, 110];
pub const PLAQUE: [u8; 3] = [150, 120, 165];
pub const TRANSPARENT_WELL: [u8; 3] = [215, 210, 220];

/// A disc `(cx, cy, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Disc {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.cx).powi(2) + (y - self.cy).powi(2) <= self.r * self.r
    }

    /// Integer pixels covered, clipped to `w × h`.
    pub fn pixels(&self, w: usize, h: usize) -> Vec<(usize, usize)> {
        let x0 = (self.cx - self.r).floor().max(0.0) as usize;
        let y0 = (self.cy - self.r).floor().max(0.0) as usize;
        let x1 = ((self.cx + self.r).ceil().max(0.0) as usize).min(w.saturating_sub(1));
        let y1 = ((self.cy + self.r).ceil().max(0.0) as usize).min(h.saturating_sub(1));
        let mut v = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains(x as f64, y as f64) {
                    v.push((x, y));
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateSpec {
    pub layout: Layout,
    /// Row-major plaque count per well.
    pub plaques_per_well: Vec<usize>,
    /// Wells rendered as empty, near-background discs.
    pub transparent: Vec<(usize, usize)>,
    pub well_diameter: f64,
    pub pitch: f64,
    pub margin: f64,
    pub plaque_radius: (f64, f64),
    /// Share of plaques placed in overlapping pairs.
    pub overlap_fraction: f64,
    /// Gaussian pixel noise, 8-bit units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PlateSpec {
    fn default() -> Self {
        Self {
            layout: Layout { rows: 3, cols: 4 },
            plaques_per_well: (0..12).map(|i| 5 * i).collect(),
            transparent: Vec::new(),
            well_diameter: 360.0,
            pitch: 420.0,
            margin: 100.0,
            plaque_radius: (7.0, 10.0),
            overlap_fraction: 0.2,
            noise_sigma: 3.0,
            seed: 0,
        }
    }
}

impl PlateSpec {
    pub fn image_size(&self) -> (usize, usize) {
        let side = |n: usize| (2.0 * self.margin + self.well_diameter + (n as f64 - 1.0) * self.pitch).ceil() as usize;
        (side(self.layout.cols), side(self.layout.rows))
    }

    pub fn well_center(&self, row: usize, col: usize) -> (f64, f64) {
        let off = self.margin + self.well_diameter / 2.0;
        (off + col as f64 * self.pitch, off + row as f64 * self.pitch)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPlate {
    pub image: RgbImage,
    /// Ground truth in the analysis document schema; plaques use crop
    /// coordinates of each well's `crop` transform.
    pub truth: PlateAnalysis,
    /// Per well (row-major), the discs in full-image coordinates.
    pub discs: Vec<Vec<Disc>>,
}

/// Places `n` plaque discs centred within `0.8 · well_radius` of the origin.
///
/// `floor(n · overlap_fraction / 2)` pairs are drawn with centre separation
/// uniform in `[1.3 r, 1.7 r]`; every other placement unit keeps a 3 px gap
/// from all others.
pub fn place_plaques(
    n: usize,
    well_radius: f64,
    radius: (f64, f64),
    overlap_fraction: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Disc>> {
    const GAP: f64 = 3.0;
    const ATTEMPTS: usize = 20_000;
    let pairs = ((n as f64 * overlap_fraction / 2.0).floor() as usize).min(n / 2);
    let limit = 0.8 * well_radius;
    // (centre, bounding radius, discs)
    let mut units: Vec<(f64, f64, f64)> = Vec::new();
    let mut out = Vec::with_capacity(n);
    let mut remaining = n;
    let mut pair_left = pairs;
    while remaining > 0 {
        let paired = pair_left > 0;
        let r = if radius.1 > radius.0 {
            rng.gen_range(radius.0..radius.1)
        } else {
            radius.0
        };
        let (sep, angle) = if paired {
            (r * rng.gen_range(1.3..1.7), rng.gen_range(0.0..std::f64::consts::PI))
        } else {
            (0.0, 0.0)
        };
        let bound = r + sep / 2.0;
        let reach = limit - sep / 2.0;
        let mut placed = false;
        for _ in 0..ATTEMPTS {
            let (ux, uy) = (rng.gen_range(-reach..reach), rng.gen_range(-reach..reach));
            if ux * ux + uy * uy > reach * reach {
                continue;
            }
            if units
                .iter()
                .any(|&(x, y, b)| ((x - ux).powi(2) + (y - uy).powi(2)).sqrt() < b + bound + GAP)
            {
                continue;
            }
            units.push((ux, uy, bound));
            let (dx, dy) = (angle.cos() * sep / 2.0, angle.sin() * sep / 2.0);
            if paired {
                out.push(Disc {
                    cx: ux - dx,
                    cy: uy - dy,
                    r,
                });
                out.push(Disc {
                    cx: ux + dx,
                    cy: uy + dy,
                    r,
                });
                remaining -= 2;
                pair_left -= 1;
            } else {
                out.push(Disc { cx: ux, cy: uy, r });
                remaining -= 1;
            }
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Input(format!(
                "cannot place {n} plaques in a well of radius {well_radius}"
            )));
        }
    }
    Ok(out)
}

/// Renders a plate photograph and its ground truth.
pub fn render_plate(spec: &PlateSpec) -> Result<SyntheticPlate> {
    let layout = spec.layout;
    if spec.plaques_per_well.len() != layout.wells() {
        return Err(Error::Input(format!(
            "{} plaque counts for a {layout} plate",
            spec.plaques_per_well.len()
        )));
    }
    if spec.well_diameter >= spec.pitch {
        return Err(Error::Input("wells would overlap: diameter must be below pitch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = spec.image_size();
    let well_r = spec.well_diameter / 2.0;
    let mut img = RgbImage::from_pixel(w as u32, h as u32, Rgb(BACKGROUND));
    let mut discs_all = Vec::with_capacity(layout.wells());
    let mut wells = Vec::with_capacity(layout.wells());

    for row in 0..layout.rows {
        for col in 0..layout.cols {
            let i = row * layout.cols + col;
            let (cx, cy) = spec.well_center(row, col);
            let transparent = spec.transparent.contains(&(row, col));
            let n = if transparent { 0 } else { spec.plaques_per_well[i] };
            let local = place_plaques(n, well_r, spec.plaque_radius, spec.overlap_fraction, &mut rng)?;
            let discs: Vec<Disc> = local
                .iter()
                .map(|d| Disc {
                    cx: d.cx + cx,
                    cy: d.cy + cy,
                    r: d.r,
                })
                .collect();

            let well = Disc { cx, cy, r: well_r };
            let colour = if transparent { TRANSPARENT_WELL } else { MONOLAYER };
            let well_px = well.pixels(w, h);
            for &(x, y) in &well_px {
                img.put_pixel(x as u32, y as u32, Rgb(colour));
            }
            for d in &discs {
                for (x, y) in d.pixels(w, h) {
                    img.put_pixel(x as u32, y as u32, Rgb(PLAQUE));
                }
            }

            let bbox_full = pixel_bbox(&well_px);
            let crop = CropTransform::for_bbox(bbox_full, bbox_full.w.max(bbox_full.h));
            let mut plaques: Vec<PlaqueReport> = discs
                .iter()
                .map(|d| {
                    let (lx, ly) = crop.to_crop(d.cx, d.cy);
                    let local = Disc { cx: lx, cy: ly, r: d.r };
                    let px = local.pixels(usize::MAX / 2, usize::MAX / 2);
                    PlaqueReport {
                        id: 0,
                        bbox: pixel_bbox(&px),
                        centroid: [lx, ly],
                        area: px.len(),
                        source: PlaqueSource::Watershed,
                    }
                })
                .collect();
            plaques.sort_by(|a, b| {
                a.centroid[1]
                    .total_cmp(&b.centroid[1])
                    .then(a.centroid[0].total_cmp(&b.centroid[0]))
            });
            for (k, p) in plaques.iter_mut().enumerate() {
                p.id = k as u32 + 1;
            }
            wells.push(WellReport {
                row,
                col,
                bbox_full,
                missing: transparent,
                count: plaques.len(),
                plaques,
                crop: Some(crop),
            });
            discs_all.push(discs);
        }
    }

    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Input(e.to_string()))?;
        for p in img.pixels_mut() {
            for c in p.0.iter_mut() {
                *c = (*c as f64 + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
            }
        }
    }

    Ok(SyntheticPlate {
        image: img,
        truth: PlateAnalysis {
            plate_id: format!("synthetic-{}", spec.seed),
            layout,
            wells,
            titer: None,
        },
        discs: discs_all,
    })
}

fn pixel_bbox(px: &[(usize, usize)]) -> BBox {
    let x0 = px.iter().map(|p| p.0).min().unwrap_or(0);
    let y0 = px.iter().map(|p| p.1).min().unwrap_or(0);
    let x1 = px.iter().map(|p| p.0).max().map_or(0, |v| v + 1);
    let y1 = px.iter().map(|p| p.1).max().map_or(0, |v| v + 1);
    BBox::new(x0, y0, x1 - x0, y1 - y0)
}

/// Probability map with value `high` inside any disc and `low` elsewhere.
pub fn render_probability(width: usize, height: usize, discs: &[Disc], low: f32, high: f32) -> GrayImage {
    let mut img = GrayImage::from_fn(width, height, |_, _| low);
    for d in discs {
        for (x, y) in d.pixels(width, height) {
            img.set(x, y, high);
        }
    }
    img
}

/// Discs dropped uniformly (overlaps allowed) inside the inscribed well disc
/// of a `side × side` map until their union covers `coverage` of it.
pub fn confluent_discs(side: usize, coverage: f64, radius: (f64, f64), rng: &mut impl Rng) -> Vec<Disc> {
    let c = side as f64 / 2.0;
    let well = Disc {
        cx: c,
        cy: c,
        r: 0.45 * side as f64,
    };
    let well_px = well.pixels(side, side);
    let target = (coverage * well_px.len() as f64).ceil() as usize;
    let mut covered = vec![false; side * side];
    let mut n_cov = 0;
    let mut discs = Vec::new();
    while n_cov < target {
        let r = rng.gen_range(radius.0..radius.1);
        let reach = well.r - r;
        let (dx, dy) = (rng.gen_range(-reach..reach), rng.gen_range(-reach..reach));
        if dx * dx + dy * dy > reach * reach {
            continue;
        }
        let d = Disc {
            cx: c + dx,
            cy: c + dy,
            r,
        };
        for (x, y) in d.pixels(side, side) {
            if !covered[y * side + x] && well.contains(x as f64, y as f64) {
                covered[y * side + x] = true;
                n_cov += 1;
            }
        }
        discs.push(d);
    }
    discs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> PlateSpec {
        PlateSpec {
            layout: Layout { rows: 2, cols: 3 },
            plaques_per_well: vec![0, 3, 5, 8, 10, 2],
            well_diameter: 160.0,
            pitch: 200.0,
            margin: 40.0,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = render_plate(&small_spec(7)).unwrap();
        let b = render_plate(&small_spec(7)).unwrap();
        assert_eq!(a.image.as_raw(), b.image.as_raw());
        assert_eq!(a.truth, b.truth);
        let c = render_plate(&small_spec(8)).unwrap();
        assert_ne!(a.image.as_raw(), c.image.as_raw());
    }

    #[test]
    fn truth_counts_and_geometry() {
        let p = render_plate(&small_spec(1)).unwrap();
        let counts: Vec<usize> = p.truth.wells.iter().map(|w| w.count).collect();
        assert_eq!(counts, vec![0, 3, 5, 8, 10, 2]);
        let (w, h) = small_spec(1).image_size();
        assert_eq!((p.image.width() as usize, p.image.height() as usize), (w, h));
        for (well, discs) in p.truth.wells.iter().zip(&p.discs) {
            let (cx, cy) = well.bbox_full.center();
            for d in discs {
                assert!(((d.cx - cx).powi(2) + (d.cy - cy).powi(2)).sqrt() <= 0.8 * 80.0 + 1.0);
            }
            assert!(well.bbox_full.w.abs_diff(161) <= 1);
        }
    }

    #[test]
    fn pairs_overlap_and_singles_do_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = place_plaques(20, 180.0, (7.0, 10.0), 0.2, &mut rng).unwrap();
        assert_eq!(d.len(), 20);
        let overlapping = |a: &Disc, b: &Disc| ((a.cx - b.cx).powi(2) + (a.cy - b.cy).powi(2)).sqrt() < a.r + b.r;
        let n_overlapping = d
            .iter()
            .enumerate()
            .filter(|(i, a)| d.iter().enumerate().any(|(j, b)| *i != j && overlapping(a, b)))
            .count();
        assert_eq!(n_overlapping, 4);
    }

    #[test]
    fn confluent_reaches_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = confluent_discs(200, 0.6, (6.0, 12.0), &mut rng);
        let m = render_probability(200, 200, &d, 0.0, 1.0);
        let well = Disc {
            cx: 100.0,
            cy: 100.0,
            r: 90.0,
        };
        let px = well.pixels(200, 200);
        let on = px.iter().filter(|&&(x, y)| m.get(x, y) > 0.5).count();
        assert!(on as f64 >= 0.6 * px.len() as f64);
    }

    #[test]
    fn overcrowded_well_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(place_plaques(400, 60.0, (7.0, 10.0), 0.0, &mut rng).is_err());
    }
}
