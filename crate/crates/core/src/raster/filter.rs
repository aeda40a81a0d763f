//! Smoothing, thresholding, morphology and resampling helpers.

use image::{imageops, ImageBuffer, Luma, RgbImage};

use super::{BinaryMask, GrayImage};

/// Rec. 601 luma of an 8-bit RGB image, scaled to `[0, 1]`.
pub fn luma(img: &RgbImage) -> GrayImage {
    GrayImage::from_fn(img.width() as usize, img.height() as usize, |x, y| {
        let p = img.get_pixel(x as u32, y as u32).0;
        (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0
    })
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f32) -> GrayImage {
    if sigma <= 0.0 || img.is_empty() {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let src = img.data();
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sx = (x as i64 + i as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * src[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sy = (y as i64 + i as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc.clamp(0.0, 1.0);
        }
    }
    GrayImage::from_vec(w, h, out).expect("blurred values in [0, 1]")
}

/// Statistics of a two-class Otsu split over values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuSplit {
    pub threshold: f32,
    pub mean_low: f32,
    pub mean_high: f32,
    /// Number of values `< threshold`.
    pub count_low: usize,
    pub count_high: usize,
}

/// Otsu's threshold on a 256-bin histogram. `None` for empty or constant input.
pub fn otsu(values: impl Iterator<Item = f32> + Clone) -> Option<OtsuSplit> {
    let mut hist = [0usize; 256];
    let mut n = 0usize;
    for v in values.clone() {
        hist[(v.clamp(0.0, 1.0) * 255.0).round() as usize] += 1;
        n += 1;
    }
    if n == 0 || hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let total: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (t, &c) in hist.iter().enumerate().take(255) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = n as f64 - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (total - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, t);
        }
    }
    // values in bins <= t are "low"
    let threshold = (best.1 as f32 + 0.5) / 255.0;
    let (mut sl, mut sh, mut cl, mut ch) = (0.0f64, 0.0f64, 0usize, 0usize);
    for v in values {
        if v < threshold {
            sl += v as f64;
            cl += 1;
        } else {
            sh += v as f64;
            ch += 1;
        }
    }
    Some(OtsuSplit {
        threshold,
        mean_low: if cl > 0 { (sl / cl as f64) as f32 } else { 0.0 },
        mean_high: if ch > 0 { (sh / ch as f64) as f32 } else { 0.0 },
        count_low: cl,
        count_high: ch,
    })
}

fn morph3(mask: &BinaryMask, erode: bool) -> BinaryMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        let mut any = false;
        let mut all = true;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                // erosion treats the outside as foreground so borders survive
                let v = if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    erode
                } else {
                    mask.get(nx as usize, ny as usize)
                };
                any |= v;
                all &= v;
            }
        }
        if erode {
            all
        } else {
            any
        }
    })
}

pub fn erode(mask: &BinaryMask) -> BinaryMask {
    morph3(mask, true)
}

pub fn dilate(mask: &BinaryMask) -> BinaryMask {
    morph3(mask, false)
}

/// Morphological opening with a 3×3 square: `iterations` erosions then as many dilations.
pub fn open(mask: &BinaryMask, iterations: usize) -> BinaryMask {
    let mut m = mask.clone();
    for _ in 0..iterations {
        m = erode(&m);
    }
    for _ in 0..iterations {
        m = dilate(&m);
    }
    m
}

/// Resamples to `width × height` with a triangle (bilinear / area) filter.
pub fn resize(img: &GrayImage, width: usize, height: usize) -> GrayImage {
    if img.width() == width && img.height() == height {
        return img.clone();
    }
    let buf: ImageBuffer<Luma<f32>, Vec<f32>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec()).expect("buffer size");
    let out = imageops::resize(&buf, width as u32, height as u32, imageops::FilterType::Triangle);
    let data = out.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    GrayImage::from_vec(width, height, data).expect("resized values in [0, 1]")
}

/// Bilinear sample of an RGB image at continuous pixel-centre coordinates;
/// samples outside the image blend toward `fill`.
pub fn sample_rgb(img: &RgbImage, x: f64, y: f64, fill: [u8; 3]) -> [u8; 3] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, y0) = (x.floor() as i64, y.floor() as i64);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let px = |xx: i64, yy: i64| -> [f64; 3] {
        let p = if xx < 0 || yy < 0 || xx >= w || yy >= h {
            fill
        } else {
            img.get_pixel(xx as u32, yy as u32).0
        };
        [p[0] as f64, p[1] as f64, p[2] as f64]
    };
    let (a, b, c, d) = (px(x0, y0), px(x0 + 1, y0), px(x0, y0 + 1), px(x0 + 1, y0 + 1));
    let mut out = [0u8; 3];
    for i in 0..3 {
        let top = a[i] * (1.0 - fx) + b[i] * fx;
        let bot = c[i] * (1.0 - fx) + d[i] * fx;
        out[i] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
    }
    out
}
