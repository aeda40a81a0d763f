//! Batch subcommands. Each returns the JSON document it would print with `--json`.

use std::fs;
use std::path::{Path, PathBuf};

use plaquekit::eval::{evaluate_plate, threshold_range, PlateEvaluation};
use plaquekit::pipeline::{
    analyze_image, save_diagnostic_overlay, well_counts, PipelineConfig, ProbSource, WellSource,
};
use plaquekit::raster::{io, BBox};
use plaquekit::report::PlateAnalysis;
use plaquekit::synth::{render_plate, PlateSpec};
use plaquekit::titration::{plate_titer, titer_csv, SchemeSpec, TiterResult};
use plaquekit::welldetect::Layout;
use plaquekit::{Error, Result};

pub const ANALYSIS_FILE: &str = "analysis.json";
pub const OVERLAY_FILE: &str = "overlay.png";
pub const TITER_FILE: &str = "titer.csv";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.png";
pub const PLATE_FILE: &str = "plate.png";
pub const TRUTH_FILE: &str = "truth.json";

const WELL_COLOUR: [u8; 3] = [40, 200, 90];
const PLAQUE_COLOUR: [u8; 3] = [250, 200, 20];

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn load_scheme(path: &Path) -> Result<SchemeSpec> {
    SchemeSpec::from_json(&read_text(path)?)
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    path.map_or(Ok(PipelineConfig::default()), |p| {
        PipelineConfig::from_json(&read_text(p)?)
    })
}

pub fn load_analysis(path: &Path) -> Result<PlateAnalysis> {
    PlateAnalysis::from_json(&read_text(path)?)
}

#[derive(Debug, Clone)]
pub struct AnalyzeArgs {
    pub image: PathBuf,
    pub layout: Layout,
    pub scheme: PathBuf,
    pub prob_dir: Option<PathBuf>,
    pub masks_dir: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
}

/// Writes `analysis.json`, `titer.csv` and an overlay of wells and plaques to `out`.
/// When no wells are found, `diagnostic.png` shows the rejected candidates.
pub fn analyze(args: &AnalyzeArgs) -> Result<PlateAnalysis> {
    let cfg = load_config(args.config.as_deref())?;
    let scheme = load_scheme(&args.scheme)?.to_scheme(args.layout)?;
    let image = io::load_rgb(&args.image)?;
    let wells = match &args.masks_dir {
        Some(d) => WellSource::from_dir(d)?,
        None => WellSource::Classical,
    };
    let prob = match &args.prob_dir {
        Some(d) => ProbSource::from_dir(d)?,
        None => ProbSource::Classical,
    };
    let plate_id = args
        .image
        .file_stem()
        .map_or_else(|| "plate".to_string(), |s| s.to_string_lossy().into_owned());
    fs::create_dir_all(&args.out)?;
    let analysis = match analyze_image(&plate_id, &image, args.layout, &scheme, &wells, &prob, &cfg) {
        Err(Error::NoWellsDetected { candidates }) => {
            save_diagnostic_overlay(&image, &candidates, args.out.join(DIAGNOSTIC_FILE))?;
            return Err(Error::NoWellsDetected { candidates });
        }
        other => other?,
    };
    fs::write(args.out.join(ANALYSIS_FILE), analysis.to_json()?)?;
    if let Some(t) = &analysis.titer {
        fs::write(args.out.join(TITER_FILE), titer_csv(&plate_id, t)?)?;
    }
    let mut boxes: Vec<(BBox, [u8; 3])> = Vec::new();
    for w in &analysis.wells {
        boxes.push((w.bbox_full, WELL_COLOUR));
        boxes.extend(w.plaque_boxes_full().into_iter().map(|b| (b, PLAQUE_COLOUR)));
    }
    io::save_overlay(&image, &boxes, args.out.join(OVERLAY_FILE))?;
    Ok(analysis)
}

/// Recomputes the titer of a stored analysis under `scheme`.
pub fn titer(analysis: &Path, scheme: &Path, config: Option<&Path>) -> Result<(String, TiterResult)> {
    let a = load_analysis(analysis)?;
    let cfg = load_config(config)?;
    let scheme = load_scheme(scheme)?.to_scheme(a.layout)?;
    let t = plate_titer(&well_counts(&a.wells), &scheme, &cfg.countable)?;
    Ok((a.plate_id, t))
}

/// Parses `start:stop:step` (or a single threshold).
pub fn parse_thresholds(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|_| Error::Input(format!("bad IoU threshold {p:?} in {s:?}")))
    };
    match parts.as_slice() {
        [t] => threshold_range(num(t)?, num(t)?, 1.0),
        [a, b, c] => threshold_range(num(a)?, num(b)?, num(c)?),
        _ => Err(Error::Input(format!(
            "IoU thresholds must be T or START:STOP:STEP, got {s:?}"
        ))),
    }
}

pub fn eval(gt: &Path, pred: &Path, thresholds: &[f64]) -> Result<PlateEvaluation> {
    Ok(evaluate_plate(&load_analysis(gt)?, &load_analysis(pred)?, thresholds))
}

/// Renders a seeded synthetic plate to `out/plate.png` with its ground truth in `out/truth.json`.
pub fn render_synthetic(wells: usize, plaques_per_well: &[usize], seed: u64, out: &Path) -> Result<PlateAnalysis> {
    let layout = Layout::for_well_count(wells)?;
    let counts = match plaques_per_well {
        [n] => vec![*n; wells],
        list if list.len() == wells => list.to_vec(),
        list => {
            return Err(Error::Input(format!(
                "{} plaque counts given for {wells} wells",
                list.len()
            )))
        }
    };
    let spec = PlateSpec {
        layout,
        plaques_per_well: counts,
        seed,
        ..Default::default()
    };
    let plate = render_plate(&spec)?;
    fs::create_dir_all(out)?;
    fs::write(out.join(PLATE_FILE), io::encode_png(&plate.image)?)?;
    fs::write(out.join(TRUTH_FILE), plate.truth.to_json()?)?;
    Ok(plate.truth)
}
