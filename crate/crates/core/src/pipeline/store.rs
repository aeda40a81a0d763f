use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::analyze::{analyze_image, save_diagnostic_overlay, PipelineConfig, ProbSource, WellSource};
use super::corrections::{apply_corrections, CorrectionAction, CorrectionEvent, EffectiveView, EffectiveWell};
use crate::error::{Error, Result};
use crate::raster::io;
use crate::report::PlateAnalysis;
use crate::titration::{titer_csv, SchemeSpec};
use crate::welldetect::{crop_well, CropTransform, Layout};

/// Environment variable naming the data directory.
pub const DATA_ENV: &str = "PLAQUEKIT_DATA";

const RECORD: &str = "record.json";
const ANALYSIS: &str = "analysis.json";
const CORRECTIONS: &str = "corrections.jsonl";
const IMAGE: &str = "image.png";
const DIAGNOSTIC: &str = "diagnostic.png";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlateStatus {
    Uploaded,
    Analyzing,
    Analyzed,
    Failed,
}

/// Persistent metadata of one plate. Analysis and corrections live in
/// sibling files of the same directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateRecord {
    pub plate_id: String,
    /// Bumped by every mutation.
    pub version: u64,
    pub status: PlateStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub image_ref: String,
    pub layout: Layout,
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub config: PipelineConfig,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub analyzed_at: Option<DateTime<Utc>>,
    /// Corrections with `seq` up to this value predate the current analysis
    /// and are void.
    #[serde(default)]
    pub corrections_voided_through: u64,
}

impl PlateRecord {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Everything the service returns for `GET /api/plates/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateView {
    pub record: PlateRecord,
    pub analysis: Option<PlateAnalysis>,
    pub corrections: Vec<CorrectionEvent>,
    pub effective: Option<EffectiveView>,
}

/// One well for review: effective state plus its crop geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellView {
    pub version: u64,
    pub well: EffectiveWell,
    pub bbox_full: crate::raster::BBox,
    pub crop: Option<CropTransform>,
}

/// Directory-backed plate store: `{root}/plates/{id}/…`.
///
/// Mutations of one plate run inside that plate's exclusive section; distinct
/// plates proceed independently.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("plates"))?;
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn plate_dir(&self, id: &str) -> Result<PathBuf> {
        if !valid_id(id) {
            return Err(Error::PlateNotFound(id.to_string()));
        }
        let dir = self.root.join("plates").join(id);
        if !dir.join(RECORD).is_file() {
            return Err(Error::PlateNotFound(id.to_string()));
        }
        Ok(dir)
    }

    fn plate_lock(&self, id: &str) -> Arc<Mutex<()>> {
        let mut map = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(id.to_string()).or_default().clone()
    }

    fn guard(lock: &Mutex<()>) -> MutexGuard<'_, ()> {
        lock.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Stores a new plate. The image is decoded (and so validated) and kept as PNG.
    pub fn create(
        &self,
        image_bytes: &[u8],
        layout: Layout,
        scheme: SchemeSpec,
        config: PipelineConfig,
    ) -> Result<PlateRecord> {
        scheme.to_scheme(layout)?;
        config.validate()?;
        let image = io::decode_image(image_bytes)?.into_rgb();
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.root.join("plates").join(&id);
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join(IMAGE), &io::encode_png(&image)?)?;
        let record = PlateRecord {
            plate_id: id,
            version: 1,
            status: PlateStatus::Uploaded,
            error: None,
            image_ref: IMAGE.to_string(),
            layout,
            scheme,
            config,
            created_at: Utc::now(),
            analyzed_at: None,
            corrections_voided_through: 0,
        };
        self.save_record(&record)?;
        Ok(record)
    }

    pub fn record(&self, id: &str) -> Result<PlateRecord> {
        let text = fs::read_to_string(self.plate_dir(id)?.join(RECORD))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save_record(&self, record: &PlateRecord) -> Result<()> {
        let dir = self.root.join("plates").join(&record.plate_id);
        write_atomic(&dir.join(RECORD), record.to_json()?.as_bytes())
    }

    pub fn image(&self, id: &str) -> Result<RgbImage> {
        let rec = self.record(id)?;
        io::load_rgb(self.plate_dir(id)?.join(&rec.image_ref))
    }

    pub fn analysis(&self, id: &str) -> Result<Option<PlateAnalysis>> {
        let path = self.plate_dir(id)?.join(ANALYSIS);
        if !path.is_file() {
            return Ok(None);
        }
        Ok(Some(PlateAnalysis::from_json(&fs::read_to_string(path)?)?))
    }

    /// Raw bytes of the stored analysis document.
    pub fn analysis_bytes(&self, id: &str) -> Result<Option<Vec<u8>>> {
        let path = self.plate_dir(id)?.join(ANALYSIS);
        if !path.is_file() {
            return Ok(None);
        }
        Ok(Some(fs::read(path)?))
    }

    /// The whole correction log, void events included.
    pub fn corrections(&self, id: &str) -> Result<Vec<CorrectionEvent>> {
        let path = self.plate_dir(id)?.join(CORRECTIONS);
        if !path.is_file() {
            return Ok(Vec::new());
        }
        fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect()
    }

    fn live_corrections(&self, record: &PlateRecord) -> Result<Vec<CorrectionEvent>> {
        Ok(self
            .corrections(&record.plate_id)?
            .into_iter()
            .filter(|e| e.seq > record.corrections_voided_through)
            .collect())
    }

    /// Marks the plate as being analysed; fails if an analysis is already running.
    pub fn begin_analysis(&self, id: &str) -> Result<PlateRecord> {
        let lock = self.plate_lock(id);
        let _g = Self::guard(&lock);
        let mut rec = self.record(id)?;
        if rec.status == PlateStatus::Analyzing {
            return Err(Error::State(format!("plate {id} is already being analysed")));
        }
        rec.status = PlateStatus::Analyzing;
        rec.error = None;
        rec.version += 1;
        self.save_record(&rec)?;
        Ok(rec)
    }

    /// Runs the pipeline for a plate marked by [`Store::begin_analysis`] and
    /// stores the outcome. Re-analysis replaces the previous analysis and
    /// voids all corrections made so far. On failure the record is marked
    /// failed; when no wells are found a `diagnostic.png` overlay is written.
    pub fn run_analysis(&self, id: &str, wells: &WellSource, prob: &ProbSource) -> Result<PlateRecord> {
        let dir = self.plate_dir(id)?;
        let rec = self.record(id)?;
        let outcome = (|| {
            let image = io::load_rgb(dir.join(&rec.image_ref))?;
            let scheme = rec.scheme.to_scheme(rec.layout)?;
            let result = analyze_image(id, &image, rec.layout, &scheme, wells, prob, &rec.config);
            if let Err(Error::NoWellsDetected { candidates }) = &result {
                save_diagnostic_overlay(&image, candidates, dir.join(DIAGNOSTIC))?;
            }
            result
        })();

        let lock = self.plate_lock(id);
        let _g = Self::guard(&lock);
        let mut rec = self.record(id)?;
        rec.version += 1;
        match outcome {
            Ok(analysis) => {
                write_atomic(&dir.join(ANALYSIS), analysis.to_json()?.as_bytes())?;
                rec.status = PlateStatus::Analyzed;
                rec.error = None;
                rec.analyzed_at = Some(Utc::now());
                rec.corrections_voided_through = self.corrections(id)?.last().map_or(0, |e| e.seq);
                self.save_record(&rec)?;
                Ok(rec)
            }
            Err(e) => {
                rec.status = PlateStatus::Failed;
                rec.error = Some(e.to_string());
                self.save_record(&rec)?;
                Err(e)
            }
        }
    }

    /// [`Store::begin_analysis`] followed by [`Store::run_analysis`].
    pub fn analyze(&self, id: &str, wells: &WellSource, prob: &ProbSource) -> Result<PlateRecord> {
        self.begin_analysis(id)?;
        self.run_analysis(id, wells, prob)
    }

    fn effective_for(&self, rec: &PlateRecord) -> Result<Option<EffectiveView>> {
        let Some(analysis) = self.analysis(&rec.plate_id)? else {
            return Ok(None);
        };
        let scheme = rec.scheme.to_scheme(rec.layout)?;
        Ok(Some(apply_corrections(
            &analysis,
            &self.live_corrections(rec)?,
            &scheme,
            &rec.config.countable,
        )?))
    }

    /// Effective per-well results and titer; requires an analysis.
    pub fn effective(&self, id: &str) -> Result<EffectiveView> {
        let rec = self.record(id)?;
        self.effective_for(&rec)?
            .ok_or_else(|| Error::State(format!("plate {id} has not been analysed")))
    }

    /// Appends a correction if `expected_version` is current and the event
    /// replays cleanly; returns the new record and effective view.
    pub fn correct(
        &self,
        id: &str,
        expected_version: u64,
        row: usize,
        col: usize,
        action: CorrectionAction,
        author: &str,
    ) -> Result<(PlateRecord, EffectiveView)> {
        let lock = self.plate_lock(id);
        let _g = Self::guard(&lock);
        let mut rec = self.record(id)?;
        if rec.version != expected_version {
            return Err(Error::StaleVersion {
                expected: expected_version,
                actual: rec.version,
            });
        }
        if rec.status != PlateStatus::Analyzed {
            return Err(Error::State(format!("plate {id} has no current analysis")));
        }
        let analysis = self
            .analysis(id)?
            .ok_or_else(|| Error::State(format!("plate {id} has no current analysis")))?;
        let all = self.corrections(id)?;
        let event = CorrectionEvent {
            seq: all.last().map_or(0, |e| e.seq) + 1,
            row,
            col,
            action,
            author: author.to_string(),
            at: Utc::now(),
        };
        let mut live = self.live_corrections(&rec)?;
        live.push(event.clone());
        let scheme = rec.scheme.to_scheme(rec.layout)?;
        let view = apply_corrections(&analysis, &live, &scheme, &rec.config.countable)?;

        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.plate_dir(id)?.join(CORRECTIONS))?;
        writeln!(f, "{}", serde_json::to_string(&event)?)?;
        f.sync_all()?;
        rec.version += 1;
        self.save_record(&rec)?;
        Ok((rec, view))
    }

    pub fn view(&self, id: &str) -> Result<PlateView> {
        let rec = self.record(id)?;
        Ok(PlateView {
            analysis: self.analysis(id)?,
            corrections: self.live_corrections(&rec)?,
            effective: self.effective_for(&rec)?,
            record: rec,
        })
    }

    pub fn well(&self, id: &str, row: usize, col: usize) -> Result<WellView> {
        let rec = self.record(id)?;
        let analysis = self
            .analysis(id)?
            .ok_or_else(|| Error::State(format!("plate {id} has not been analysed")))?;
        let report = analysis
            .well(row, col)
            .ok_or_else(|| Error::Input(format!("no well r{row}c{col} on a {} plate", rec.layout)))?;
        let eff = self.effective(id)?;
        let well = eff
            .wells
            .into_iter()
            .find(|w| w.row == row && w.col == col)
            .expect("effective view mirrors the analysis");
        Ok(WellView {
            version: rec.version,
            well,
            bbox_full: report.bbox_full,
            crop: report.crop,
        })
    }

    /// PNG of the well crop the plaque coordinates refer to.
    pub fn well_crop_png(&self, id: &str, row: usize, col: usize) -> Result<Vec<u8>> {
        let w = self.well(id, row, col)?;
        let image = self.image(id)?;
        let side = w.crop.map_or(w.bbox_full.w.max(w.bbox_full.h).max(1), |c| c.side);
        io::encode_png(&crop_well(&image, w.bbox_full, side).image)
    }

    pub fn export_csv(&self, id: &str) -> Result<String> {
        titer_csv(id, &self.effective(id)?.titer)
    }

    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(self.root.join("plates"))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|id| valid_id(id) && self.root.join("plates").join(id).join(RECORD).is_file())
            .collect();
        ids.sort();
        Ok(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scheme() -> SchemeSpec {
        SchemeSpec::from_json(r#"{"volume_ml": 0.1, "start_exponent": 1, "fold": 10, "replicates": 3}"#).unwrap()
    }

    fn png() -> Vec<u8> {
        io::encode_png(&RgbImage::from_pixel(8, 8, image::Rgb([10, 20, 30]))).unwrap()
    }

    #[test]
    fn create_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let rec = store
            .create(&png(), Layout::new(2, 3).unwrap(), scheme(), PipelineConfig::default())
            .unwrap();
        assert_eq!(rec.version, 1);
        assert_eq!(store.record(&rec.plate_id).unwrap(), rec);
        assert_eq!(store.list().unwrap(), vec![rec.plate_id.clone()]);
        assert_eq!(store.image(&rec.plate_id).unwrap().width(), 8);
    }

    #[test]
    fn record_bytes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let rec = store
            .create(&png(), Layout::new(2, 3).unwrap(), scheme(), PipelineConfig::default())
            .unwrap();
        let path = store.plate_dir(&rec.plate_id).unwrap().join(RECORD);
        let before = fs::read(&path).unwrap();
        let loaded = store.record(&rec.plate_id).unwrap();
        store.save_record(&loaded).unwrap();
        assert_eq!(fs::read(&path).unwrap(), before);
    }

    #[test]
    fn unknown_and_hostile_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(matches!(store.record("nope"), Err(Error::PlateNotFound(_))));
        assert!(matches!(store.record("../etc"), Err(Error::PlateNotFound(_))));
    }

    #[test]
    fn bad_upload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let l = Layout::new(2, 3).unwrap();
        assert!(store
            .create(b"not an image", l, scheme(), PipelineConfig::default())
            .is_err());
        let bad =
            SchemeSpec::from_json(r#"{"volume_ml": 0.1, "start_exponent": 1, "fold": 10, "replicates": 4}"#).unwrap();
        assert!(store.create(&png(), l, bad, PipelineConfig::default()).is_err());
    }

    #[test]
    fn correction_needs_analysis() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let rec = store
            .create(&png(), Layout::new(2, 3).unwrap(), scheme(), PipelineConfig::default())
            .unwrap();
        let err = store
            .correct(&rec.plate_id, 1, 0, 0, CorrectionAction::IncludeWell, "me")
            .unwrap_err();
        assert!(matches!(err, Error::State(_)));
        let err = store
            .correct(&rec.plate_id, 7, 0, 0, CorrectionAction::IncludeWell, "me")
            .unwrap_err();
        assert!(matches!(err, Error::StaleVersion { expected: 7, actual: 1 }));
    }

    #[test]
    fn failed_analysis_leaves_diagnostic() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let rec = store
            .create(&png(), Layout::new(2, 3).unwrap(), scheme(), PipelineConfig::default())
            .unwrap();
        let err = store
            .analyze(&rec.plate_id, &WellSource::Classical, &ProbSource::Classical)
            .unwrap_err();
        assert!(matches!(err, Error::NoWellsDetected { .. }));
        let rec = store.record(&rec.plate_id).unwrap();
        assert_eq!(rec.status, PlateStatus::Failed);
        assert!(store.plate_dir(&rec.plate_id).unwrap().join(DIAGNOSTIC).is_file());
    }
}
