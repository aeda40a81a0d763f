use image::RgbImage;

use crate::raster::{filter, GrayImage};

/// Fraction of the crop side used as the radius of the analysed well disc.
const WELL_DISC_RADIUS: f64 = 0.45;
/// Minimum separation of the two intensity classes before anything counts as signal.
const MIN_CONTRAST: f32 = 0.12;
const SMOOTH_SIGMA: f32 = 2.0;

/// Plaque probability map of a well crop when no model output is available.
///
/// Luma inside the inscribed well disc is split into two classes (Otsu);
/// the class with the smaller support is taken as plaques, so polarity is
/// chosen automatically. Values are rescaled so the background class mean
/// maps to 0 and the plaque class mean to 1, pixels outside the disc are
/// zeroed, and the result is smoothed with a Gaussian (σ = 2). A crop with
/// no meaningful contrast yields an all-zero map.
pub fn classical_probability_map(crop: &RgbImage) -> GrayImage {
    let gray = filter::luma(crop);
    let (w, h) = (gray.width(), gray.height());
    let radius = WELL_DISC_RADIUS * w.min(h) as f64;
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let inside = |x: usize, y: usize| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        dx * dx + dy * dy <= radius * radius
    };
    let disc_values = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| inside(x, y))
        .map(|(x, y)| gray.get(x, y));
    let Some(split) = filter::otsu(disc_values) else {
        return GrayImage::new(w, h);
    };
    let span = split.mean_high - split.mean_low;
    if span < MIN_CONTRAST {
        return GrayImage::new(w, h);
    }
    let bright_plaques = split.count_high <= split.count_low;
    let map = GrayImage::from_fn(w, h, |x, y| {
        if !inside(x, y) {
            return 0.0;
        }
        let v = gray.get(x, y);
        if bright_plaques {
            (v - split.mean_low) / span
        } else {
            (split.mean_high - v) / span
        }
    });
    filter::gaussian_blur(&map, SMOOTH_SIGMA)
}
