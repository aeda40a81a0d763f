//! PFU/mL from per-well plaque counts and the plate's dilution scheme.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plaquedetect::WellResult;
use crate::welldetect::Layout;

/// Traversal used to lay a serial dilution over the plate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraversalOrder {
    #[default]
    RowMajor,
    ColumnMajor,
}

/// How qualifying wells combine into one plate titer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of log10 titers.
    #[default]
    LogMean,
    /// Arithmetic mean of PFU/mL.
    LinearMean,
}

/// A well position, written `r{row}c{col}` with 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WellRef {
    pub row: usize,
    pub col: usize,
}

impl WellRef {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for WellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}c{}", self.row, self.col)
    }
}

impl FromStr for WellRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("well reference {s:?} is not of the form r<row>c<col>"));
        let rest = s.strip_prefix('r').ok_or_else(bad)?;
        let (r, c) = rest.split_once('c').ok_or_else(bad)?;
        Ok(Self {
            row: r.parse().map_err(|_| bad())?,
            col: c.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for WellRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WellRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-well dilution factors and the inoculum volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutionScheme {
    pub volume_ml: f64,
    pub assignments: BTreeMap<WellRef, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate_groups: Option<Vec<Vec<WellRef>>>,
    #[serde(default)]
    pub aggregation: Aggregation,
}

impl DilutionScheme {
    pub fn new(volume_ml: f64, assignments: BTreeMap<WellRef, f64>) -> Result<Self> {
        let s = Self {
            volume_ml,
            assignments,
            replicate_groups: None,
            aggregation: Aggregation::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.volume_ml > 0.0 && self.volume_ml.is_finite()) {
            return Err(Error::Config(format!(
                "volume_ml must be positive, got {}",
                self.volume_ml
            )));
        }
        for (w, &d) in &self.assignments {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::Config(format!("dilution for {w} must lie in (0, 1], got {d}")));
            }
        }
        Ok(())
    }

    pub fn dilution(&self, row: usize, col: usize) -> Option<f64> {
        self.assignments.get(&WellRef::new(row, col)).copied()
    }
}

/// `fold^-exponent`, exact for integral folds and non-negative exponents.
fn dilution_factor(fold: f64, exponent: i32) -> f64 {
    if exponent >= 0 {
        1.0 / fold.powi(exponent)
    } else {
        fold.powi(-exponent)
    }
}

/// Serial dilution laid over `layout`: the k-th replicate group along `order`
/// gets `fold^-(start_exponent + k)`. Each group is `replicates` consecutive
/// wells of the traversal.
pub fn serial_scheme(
    start_exponent: i32,
    fold: f64,
    order: TraversalOrder,
    layout: Layout,
    replicates: usize,
    volume_ml: f64,
) -> Result<DilutionScheme> {
    if !(fold > 1.0 && fold.is_finite()) {
        return Err(Error::Domain(format!("dilution fold must exceed 1, got {fold}")));
    }
    let n = layout.wells();
    if replicates == 0 || !n.is_multiple_of(replicates) {
        return Err(Error::LayoutConflict(format!(
            "{replicates} replicates per dilution do not tile a {layout} plate"
        )));
    }
    let wells: Vec<WellRef> = match order {
        TraversalOrder::RowMajor => (0..layout.rows)
            .flat_map(|r| (0..layout.cols).map(move |c| WellRef::new(r, c)))
            .collect(),
        TraversalOrder::ColumnMajor => (0..layout.cols)
            .flat_map(|c| (0..layout.rows).map(move |r| WellRef::new(r, c)))
            .collect(),
    };
    let mut assignments = BTreeMap::new();
    let mut groups = Vec::new();
    for (k, chunk) in wells.chunks(replicates).enumerate() {
        let d = dilution_factor(fold, start_exponent + k as i32);
        for &w in chunk {
            assignments.insert(w, d);
        }
        groups.push(chunk.to_vec());
    }
    let mut scheme = DilutionScheme::new(volume_ml, assignments)?;
    if replicates > 1 {
        scheme.replicate_groups = Some(groups);
    }
    Ok(scheme)
}

/// The scheme as written by users: a serial layout plus per-well overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub volume_ml: f64,
    #[serde(default)]
    pub order: TraversalOrder,
    pub start_exponent: i32,
    pub fold: f64,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<WellRef, f64>,
    #[serde(default)]
    pub aggregation: Aggregation,
}

fn one() -> usize {
    1
}

impl SchemeSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("dilution scheme: {e}")))
    }

    pub fn to_scheme(&self, layout: Layout) -> Result<DilutionScheme> {
        let mut s = serial_scheme(
            self.start_exponent,
            self.fold,
            self.order,
            layout,
            self.replicates,
            self.volume_ml,
        )?;
        for (&w, &d) in &self.overrides {
            if w.row >= layout.rows || w.col >= layout.cols {
                return Err(Error::LayoutConflict(format!(
                    "override {w} lies outside a {layout} plate"
                )));
            }
            s.assignments.insert(w, d);
        }
        s.aggregation = self.aggregation;
        s.validate()?;
        Ok(s)
    }
}

/// `count / (d × volume_ml)`.
pub fn well_titer(count: usize, d: f64, volume_ml: f64) -> Result<f64> {
    if d.is_nan() || d <= 0.0 || volume_ml.is_nan() || volume_ml <= 0.0 {
        return Err(Error::Domain(format!(
            "dilution ({d}) and volume ({volume_ml}) must both be positive"
        )));
    }
    Ok(count as f64 / d / volume_ml)
}

/// Inclusive count window for wells that enter the plate titer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountablePolicy {
    pub min_count: usize,
    pub max_count: usize,
}

impl Default for CountablePolicy {
    fn default() -> Self {
        Self {
            min_count: 3,
            max_count: 100,
        }
    }
}

impl CountablePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.min_count > self.max_count {
            return Err(Error::Config(format!(
                "countable range {}..={} is empty",
                self.min_count, self.max_count
            )));
        }
        Ok(())
    }
}

/// Titration input for one well.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WellCount {
    pub row: usize,
    pub col: usize,
    /// `None` when the well was not detected.
    pub count: Option<usize>,
    /// Set when a reviewer excluded the well.
    pub excluded: Option<String>,
}

impl From<&WellResult> for WellCount {
    fn from(w: &WellResult) -> Self {
        Self {
            row: w.row,
            col: w.col,
            count: Some(w.count),
            excluded: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExclusionReason {
    MissingWell,
    ZeroCount,
    BelowCountableRange { min_count: usize },
    AboveCountableRange { max_count: usize },
    Reviewer { reason: String },
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingWell => f.write_str("well not detected"),
            Self::ZeroCount => f.write_str("zero count"),
            Self::BelowCountableRange { min_count } => write!(f, "count below {min_count}"),
            Self::AboveCountableRange { max_count } => write!(f, "count above {max_count}"),
            Self::Reviewer { reason } => write!(f, "excluded by reviewer: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellTiter {
    pub row: usize,
    pub col: usize,
    pub dilution: Option<f64>,
    pub count: Option<usize>,
    pub pfu_per_ml: Option<f64>,
    pub log10_pfu_per_ml: Option<f64>,
    pub included: bool,
    pub exclusion_reason: Option<ExclusionReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiterResult {
    pub per_well: Vec<WellTiter>,
    pub plate_titer_log10: Option<f64>,
    pub plate_titer_pfu_per_ml: Option<f64>,
    /// Sample SD of the included log10 titers (needs two wells).
    pub sd_log10: Option<f64>,
    pub n_included: usize,
    pub indeterminate: bool,
    pub aggregation: Aggregation,
}

/// Plate titer from the wells whose counts fall in the countable range.
///
/// Wells are reported in `(row, col)` order. A detected well without a
/// dilution assignment is a configuration error; when no well qualifies the
/// result is marked indeterminate and carries every exclusion reason.
pub fn plate_titer(wells: &[WellCount], scheme: &DilutionScheme, policy: &CountablePolicy) -> Result<TiterResult> {
    scheme.validate()?;
    policy.validate()?;
    let mut sorted: Vec<&WellCount> = wells.iter().collect();
    sorted.sort_by_key(|w| (w.row, w.col));

    let mut per_well = Vec::with_capacity(sorted.len());
    for w in sorted {
        let dilution = scheme.dilution(w.row, w.col);
        let Some(count) = w.count else {
            per_well.push(WellTiter {
                row: w.row,
                col: w.col,
                dilution,
                count: None,
                pfu_per_ml: None,
                log10_pfu_per_ml: None,
                included: false,
                exclusion_reason: Some(ExclusionReason::MissingWell),
            });
            continue;
        };
        let d = dilution.ok_or(Error::MissingDilution { row: w.row, col: w.col })?;
        let pfu = well_titer(count, d, scheme.volume_ml)?;
        let reason = if let Some(r) = &w.excluded {
            Some(ExclusionReason::Reviewer { reason: r.clone() })
        } else if count == 0 {
            Some(ExclusionReason::ZeroCount)
        } else if count < policy.min_count {
            Some(ExclusionReason::BelowCountableRange {
                min_count: policy.min_count,
            })
        } else if count > policy.max_count {
            Some(ExclusionReason::AboveCountableRange {
                max_count: policy.max_count,
            })
        } else {
            None
        };
        per_well.push(WellTiter {
            row: w.row,
            col: w.col,
            dilution: Some(d),
            count: Some(count),
            pfu_per_ml: Some(pfu),
            log10_pfu_per_ml: (count > 0).then(|| pfu.log10()),
            included: reason.is_none(),
            exclusion_reason: reason,
        });
    }

    let logs: Vec<f64> = per_well
        .iter()
        .filter(|w| w.included)
        .filter_map(|w| w.log10_pfu_per_ml)
        .collect();
    let n = logs.len();
    let (log10, linear) = if n == 0 {
        (None, None)
    } else {
        match scheme.aggregation {
            Aggregation::LogMean => {
                let m = logs.iter().sum::<f64>() / n as f64;
                (Some(m), Some(10f64.powf(m)))
            }
            Aggregation::LinearMean => {
                let m = per_well
                    .iter()
                    .filter(|w| w.included)
                    .filter_map(|w| w.pfu_per_ml)
                    .sum::<f64>()
                    / n as f64;
                (Some(m.log10()), Some(m))
            }
        }
    };
    let sd_log10 = (n >= 2).then(|| {
        let m = logs.iter().sum::<f64>() / n as f64;
        (logs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    });
    Ok(TiterResult {
        per_well,
        plate_titer_log10: log10,
        plate_titer_pfu_per_ml: linear,
        sd_log10,
        n_included: n,
        indeterminate: n == 0,
        aggregation: scheme.aggregation,
    })
}

pub const CSV_HEADER: [&str; 8] = [
    "plate_id",
    "row",
    "col",
    "dilution",
    "count",
    "included",
    "pfu_per_ml",
    "log10_pfu_per_ml",
];

/// One CSV row per well; absent values are empty fields.
pub fn titer_csv(plate_id: &str, titer: &TiterResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for t in &titer.per_well {
        w.write_record([
            plate_id.to_string(),
            t.row.to_string(),
            t.col.to_string(),
            opt(t.dilution.map(|d| d.to_string())),
            opt(t.count.map(|c| c.to_string())),
            t.included.to_string(),
            opt(t.pfu_per_ml.map(|v| v.to_string())),
            opt(t.log10_pfu_per_ml.map(|v| v.to_string())),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
