//! PNG input/output for rasters, masks and overlays.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb, RgbImage};

use super::{filter, BBox, BinaryMask, GrayImage};
use crate::error::{Error, Result};

/// A decoded raster: single-channel data becomes [`GrayImage`], anything with
/// colour becomes 8-bit RGB.
#[derive(Debug, Clone)]
pub enum LoadedImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl LoadedImage {
    pub fn into_gray(self) -> GrayImage {
        match self {
            LoadedImage::Gray(g) => g,
            LoadedImage::Rgb(rgb) => filter::luma(&rgb),
        }
    }

    pub fn into_rgb(self) -> RgbImage {
        match self {
            LoadedImage::Rgb(rgb) => rgb,
            LoadedImage::Gray(g) => RgbImage::from_fn(g.width() as u32, g.height() as u32, |x, y| {
                let v = (g.get(x as usize, y as usize) * 255.0).round() as u8;
                Rgb([v, v, v])
            }),
        }
    }
}

fn decode_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<LoadedImage> {
    let path = path.as_ref();
    let img = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| decode_err(path, e))?;
    Ok(from_dynamic(img))
}

/// Decodes an in-memory encoded image (PNG, JPEG if enabled).
pub fn decode_image(bytes: &[u8]) -> Result<LoadedImage> {
    let img = image::load_from_memory(bytes).map_err(|e| decode_err(Path::new("<memory>"), e))?;
    Ok(from_dynamic(img))
}

fn from_dynamic(img: DynamicImage) -> LoadedImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => LoadedImage::Gray(
            GrayImage::from_vec(w, h, buf.into_raw().into_iter().map(|v| v as f32 / 255.0).collect())
                .expect("8-bit values in range"),
        ),
        DynamicImage::ImageLumaA8(_) => LoadedImage::Gray(
            GrayImage::from_vec(
                w,
                h,
                img.to_luma8()
                    .into_raw()
                    .into_iter()
                    .map(|v| v as f32 / 255.0)
                    .collect(),
            )
            .expect("8-bit values in range"),
        ),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => LoadedImage::Gray(
            GrayImage::from_vec(
                w,
                h,
                img.to_luma16()
                    .into_raw()
                    .into_iter()
                    .map(|v| v as f32 / 65535.0)
                    .collect(),
            )
            .expect("16-bit values in range"),
        ),
        other => LoadedImage::Rgb(other.to_rgb8()),
    }
}

pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    Ok(load_image(path)?.into_gray())
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    Ok(load_image(path)?.into_rgb())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let g = load_gray(path)?;
    BinaryMask::from_vec(g.width(), g.height(), g.data().iter().map(|&v| v >= 0.5).collect())
}

pub fn save_gray8(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let raw = img.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer size");
    buf.save(path)?;
    Ok(())
}

pub fn save_gray16(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let raw = img.data().iter().map(|&v| (v * 65535.0).round() as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer size");
    buf.save(path)?;
    Ok(())
}

/// Writes a mask as 8-bit `{0, 255}`.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let raw = mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("buffer size");
    buf.save(path)?;
    Ok(())
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Draws rectangle outlines of the given colour onto a copy of `img`.
pub fn draw_boxes(img: &RgbImage, boxes: &[(BBox, [u8; 3])], thickness: usize) -> RgbImage {
    let mut out = img.clone();
    let (w, h) = (out.width() as usize, out.height() as usize);
    for &(b, color) in boxes {
        if b.w == 0 || b.h == 0 {
            continue;
        }
        for t in 0..thickness {
            let (x0, y0) = (b.x + t, b.y + t);
            let (x1, y1) = (b.right().saturating_sub(1 + t), b.bottom().saturating_sub(1 + t));
            if x0 > x1 || y0 > y1 {
                break;
            }
            for x in x0..=x1.min(w.saturating_sub(1)) {
                for y in [y0, y1] {
                    if y < h {
                        out.put_pixel(x as u32, y as u32, Rgb(color));
                    }
                }
            }
            for y in y0..=y1.min(h.saturating_sub(1)) {
                for x in [x0, x1] {
                    if x < w {
                        out.put_pixel(x as u32, y as u32, Rgb(color));
                    }
                }
            }
        }
    }
    out
}

pub fn save_overlay(img: &RgbImage, boxes: &[(BBox, [u8; 3])], path: impl AsRef<Path>) -> Result<()> {
    draw_boxes(img, boxes, 2).save(path)?;
    Ok(())
}
