//! Plate analysis document shared by the pipeline output, ground-truth
//! annotations and the evaluator.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::plaquedetect::{PlaqueInstance, PlaqueSource};
use crate::raster::BBox;
use crate::titration::TiterResult;
use crate::welldetect::{CropTransform, Layout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaqueReport {
    pub id: u32,
    /// Crop coordinates when the well carries a `crop` transform, otherwise full-image.
    pub bbox: BBox,
    pub centroid: [f64; 2],
    pub area: usize,
    #[serde(default)]
    pub source: PlaqueSource,
}

impl From<&PlaqueInstance> for PlaqueReport {
    fn from(p: &PlaqueInstance) -> Self {
        Self {
            id: p.id,
            bbox: p.bbox,
            centroid: [p.centroid.0, p.centroid.1],
            area: p.area,
            source: p.source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellReport {
    pub row: usize,
    pub col: usize,
    pub bbox_full: BBox,
    pub missing: bool,
    pub plaques: Vec<PlaqueReport>,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropTransform>,
}

impl WellReport {
    /// Plaque boxes in full-image coordinates, rounded outward to whole pixels.
    pub fn plaque_boxes_full(&self) -> Vec<BBox> {
        self.plaques
            .iter()
            .map(|p| match &self.crop {
                None => p.bbox,
                Some(t) => {
                    let [x, y, w, h] = t.box_to_full(p.bbox);
                    let (x0, y0) = (x.floor().max(0.0), y.floor().max(0.0));
                    let (x1, y1) = ((x + w).ceil(), (y + h).ceil());
                    BBox::new(x0 as usize, y0 as usize, (x1 - x0) as usize, (y1 - y0) as usize)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateAnalysis {
    pub plate_id: String,
    pub layout: Layout,
    /// Row-major, one entry per slot.
    pub wells: Vec<WellReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub titer: Option<TiterResult>,
}

impl PlateAnalysis {
    pub fn well(&self, row: usize, col: usize) -> Option<&WellReport> {
        self.wells.iter().find(|w| w.row == row && w.col == col)
    }

    pub fn well_mut(&mut self, row: usize, col: usize) -> Option<&mut WellReport> {
        self.wells.iter_mut().find(|w| w.row == row && w.col == col)
    }

    /// Pretty JSON with a trailing newline; stable for identical input.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
