use std::collections::BTreeMap;
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plaquedetect::{classical_probability_map, detect_plaques, PlaqueDetectConfig, PlaqueInstance};
use crate::raster::{io, BBox, BinaryMask, GrayImage};
use crate::report::{PlaqueReport, PlateAnalysis, WellReport};
use crate::titration::{plate_titer, CountablePolicy, DilutionScheme, TiterResult, WellCount};
use crate::welldetect::{
    self, candidate_regions, crop_well, filter_wells, fit_grid, generate_candidates, preprocess, suppress_nested,
    CandidateSource, CropTransform, Layout, PlateGrid, WellDetection, WellFilterConfig,
};

/// Tunables of every stage, loadable from a JSON file.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub wells: WellFilterConfig,
    pub plaques: PlaqueDetectConfig,
    pub countable: CountablePolicy,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.wells.validate()?;
        self.plaques.validate()?;
        self.countable.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("pipeline config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Where well candidates come from.
#[derive(Debug, Clone, Default)]
pub enum WellSource {
    #[default]
    Classical,
    /// Candidate masks at a detection scale `scale_factor` times smaller than the image.
    External { masks: Vec<BinaryMask>, scale_factor: f64 },
}

impl WellSource {
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let (masks, scale_factor) = welldetect::load_external_candidates(dir)?;
        Ok(Self::External { masks, scale_factor })
    }
}

/// Where per-well plaque probability maps come from.
#[derive(Debug, Clone, Default)]
pub enum ProbSource {
    /// Derived from the well crop itself.
    #[default]
    Classical,
    /// Square maps keyed by `(row, col)`, each covering the well's square crop.
    Maps(BTreeMap<(usize, usize), GrayImage>),
}

impl ProbSource {
    /// Reads every `well_r{row}_c{col}.png` in `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let mut maps = BTreeMap::new();
        for entry in std::fs::read_dir(dir.as_ref())? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(key) = parse_map_name(&name) {
                maps.insert(key, io::load_gray(dir.as_ref().join(&name))?);
            }
        }
        Ok(Self::Maps(maps))
    }
}

pub fn prob_map_name(row: usize, col: usize) -> String {
    format!("well_r{row}_c{col}.png")
}

fn parse_map_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("well_r")?.strip_suffix(".png")?;
    let (r, c) = rest.split_once("_c")?;
    Some((r.parse().ok()?, c.parse().ok()?))
}

/// Localizes wells and binds them to the plate lattice.
///
/// Fails with [`Error::NoWellsDetected`] (carrying the rejected candidates'
/// full-resolution boxes) when no candidate passes the well filter.
pub fn detect_wells(
    image: &RgbImage,
    source: &WellSource,
    layout: Option<Layout>,
    cfg: &WellFilterConfig,
) -> Result<PlateGrid> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let (regions, scale) = match source {
        WellSource::Classical => {
            let (gray, scale) = preprocess(image, cfg.resize_long_side)?;
            let masks = generate_candidates(&gray, &CandidateSource::Classical)?;
            (candidate_regions(&masks)?, scale)
        }
        WellSource::External { masks, scale_factor } => (candidate_regions(masks)?, *scale_factor),
    };
    let kept = filter_wells(&regions, cfg);
    if kept.is_empty() {
        return Err(Error::NoWellsDetected {
            candidates: regions
                .iter()
                .map(|r| welldetect::back_project(r.bbox, scale, w, h))
                .collect(),
        });
    }
    let wells: Vec<WellDetection> = kept.into_iter().map(|r| WellDetection::new(r, scale, w, h)).collect();
    fit_grid(suppress_nested(wells), layout, Some(BBox::new(0, 0, w, h)))
}

/// Automated result for one slot of the plate.
#[derive(Debug, Clone, PartialEq)]
pub struct WellOutcome {
    pub row: usize,
    pub col: usize,
    pub bbox_full: BBox,
    pub missing: bool,
    pub crop: Option<CropTransform>,
    pub instances: Vec<PlaqueInstance>,
}

impl WellOutcome {
    pub fn report(&self) -> WellReport {
        WellReport {
            row: self.row,
            col: self.col,
            bbox_full: self.bbox_full,
            missing: self.missing,
            plaques: self.instances.iter().map(PlaqueReport::from).collect(),
            count: self.instances.len(),
            crop: self.crop,
        }
    }
}

/// Plaque instances of every detected well, in row-major slot order.
/// Wells are processed in parallel; the result does not depend on thread count.
pub fn detect_all_plaques(
    image: &RgbImage,
    grid: &PlateGrid,
    prob: &ProbSource,
    cfg: &PlaqueDetectConfig,
) -> Result<Vec<WellOutcome>> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let slots: Vec<(usize, usize)> = (0..grid.rows)
        .flat_map(|r| (0..grid.cols).map(move |c| (r, c)))
        .collect();
    slots
        .par_iter()
        .map(|&(row, col)| {
            let Some(det) = grid.slot(row, col) else {
                return Ok(WellOutcome {
                    row,
                    col,
                    bbox_full: grid.slot_bbox(row, col, w, h),
                    missing: true,
                    crop: None,
                    instances: Vec::new(),
                });
            };
            let bbox = det.bbox_full;
            let (map, crop) = match prob {
                ProbSource::Classical => {
                    let c = crop_well(image, bbox, bbox.w.max(bbox.h).max(1));
                    (classical_probability_map(&c.image), c.transform)
                }
                ProbSource::Maps(maps) => {
                    let m = maps
                        .get(&(row, col))
                        .ok_or_else(|| Error::Input(format!("no probability map {}", prob_map_name(row, col))))?;
                    if m.width() != m.height() || m.width() == 0 {
                        return Err(Error::Input(format!(
                            "probability map {} is {}x{}, expected a square",
                            prob_map_name(row, col),
                            m.width(),
                            m.height()
                        )));
                    }
                    (m.clone(), CropTransform::for_bbox(bbox, m.width()))
                }
            };
            Ok(WellOutcome {
                row,
                col,
                bbox_full: bbox,
                missing: false,
                crop: Some(crop),
                instances: detect_plaques(&map, cfg)?,
            })
        })
        .collect()
}

/// Titration input from per-well reports; missing wells carry no count.
pub fn well_counts(wells: &[WellReport]) -> Vec<WellCount> {
    wells
        .iter()
        .map(|w| WellCount {
            row: w.row,
            col: w.col,
            count: (!w.missing).then_some(w.count),
            excluded: None,
        })
        .collect()
}

/// Full automated analysis of one plate image.
pub fn analyze_image(
    plate_id: &str,
    image: &RgbImage,
    layout: Layout,
    scheme: &DilutionScheme,
    wells: &WellSource,
    prob: &ProbSource,
    cfg: &PipelineConfig,
) -> Result<PlateAnalysis> {
    cfg.validate()?;
    let grid = detect_wells(image, wells, Some(layout), &cfg.wells)?;
    let outcomes = detect_all_plaques(image, &grid, prob, &cfg.plaques)?;
    let reports: Vec<WellReport> = outcomes.iter().map(WellOutcome::report).collect();
    let titer: TiterResult = plate_titer(&well_counts(&reports), scheme, &cfg.countable)?;
    Ok(PlateAnalysis {
        plate_id: plate_id.to_string(),
        layout,
        wells: reports,
        titer: Some(titer),
    })
}

/// Image with candidate boxes drawn in red, for diagnosing a failed detection.
pub fn save_diagnostic_overlay(image: &RgbImage, candidates: &[BBox], path: impl AsRef<Path>) -> Result<()> {
    let boxes: Vec<(BBox, [u8; 3])> = candidates.iter().map(|&b| (b, [220, 30, 30])).collect();
    io::save_overlay(image, &boxes, path)
}
