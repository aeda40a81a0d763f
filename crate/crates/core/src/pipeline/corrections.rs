use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plaquedetect::PlaqueSource;
use crate::raster::BBox;
use crate::report::{PlaqueReport, PlateAnalysis};
use crate::titration::{plate_titer, CountablePolicy, DilutionScheme, TiterResult, WellCount};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrectionAction {
    /// Box in the well's crop coordinates.
    AddPlaque {
        bbox: BBox,
    },
    RemovePlaque {
        instance_id: u32,
    },
    ExcludeWell {
        reason: String,
    },
    IncludeWell,
}

/// One reviewer edit. Events are append-only and replayed in `seq` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEvent {
    pub seq: u64,
    pub row: usize,
    pub col: usize,
    pub action: CorrectionAction,
    pub author: String,
    pub at: DateTime<Utc>,
}

/// A well after replaying corrections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveWell {
    pub row: usize,
    pub col: usize,
    pub missing: bool,
    pub automated_count: usize,
    pub count: usize,
    pub plaques: Vec<PlaqueReport>,
    pub excluded: Option<String>,
    pub corrected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveView {
    pub wells: Vec<EffectiveWell>,
    pub titer: TiterResult,
}

/// Replays `events` over the automated `analysis` without modifying it.
///
/// Added plaques get ids after the largest id ever used in their well, so
/// ids are never reused. Removing an id that is not live, or touching a
/// well outside the layout, rejects the event with its `seq`.
pub fn apply_corrections(
    analysis: &PlateAnalysis,
    events: &[CorrectionEvent],
    scheme: &DilutionScheme,
    policy: &CountablePolicy,
) -> Result<EffectiveView> {
    let mut wells: Vec<(EffectiveWell, u32)> = analysis
        .wells
        .iter()
        .map(|w| {
            let next = w.plaques.iter().map(|p| p.id).max().unwrap_or(0);
            (
                EffectiveWell {
                    row: w.row,
                    col: w.col,
                    missing: w.missing,
                    automated_count: w.count,
                    count: w.count,
                    plaques: w.plaques.clone(),
                    excluded: None,
                    corrected: false,
                },
                next,
            )
        })
        .collect();

    let mut ordered: Vec<&CorrectionEvent> = events.iter().collect();
    ordered.sort_by_key(|e| e.seq);
    for e in ordered {
        let reject = |reason: String| Error::Correction { seq: e.seq, reason };
        let (well, last_id) = wells
            .iter_mut()
            .find(|(w, _)| w.row == e.row && w.col == e.col)
            .ok_or_else(|| reject(format!("no well r{}c{} on this plate", e.row, e.col)))?;
        match &e.action {
            CorrectionAction::AddPlaque { bbox } => {
                if well.missing {
                    return Err(reject("cannot add plaques to a missing well".into()));
                }
                if bbox.w == 0 || bbox.h == 0 {
                    return Err(reject("plaque box must have positive size".into()));
                }
                *last_id += 1;
                let (cx, cy) = bbox.center();
                well.plaques.push(PlaqueReport {
                    id: *last_id,
                    bbox: *bbox,
                    centroid: [cx, cy],
                    area: bbox.area(),
                    source: PlaqueSource::Manual,
                });
            }
            CorrectionAction::RemovePlaque { instance_id } => {
                let pos = well
                    .plaques
                    .iter()
                    .position(|p| p.id == *instance_id)
                    .ok_or_else(|| reject(format!("plaque {instance_id} is not live in r{}c{}", e.row, e.col)))?;
                well.plaques.remove(pos);
            }
            CorrectionAction::ExcludeWell { reason } => well.excluded = Some(reason.clone()),
            CorrectionAction::IncludeWell => well.excluded = None,
        }
        well.count = well.plaques.len();
        well.corrected = true;
    }

    let wells: Vec<EffectiveWell> = wells.into_iter().map(|(w, _)| w).collect();
    let counts: Vec<WellCount> = wells
        .iter()
        .map(|w| WellCount {
            row: w.row,
            col: w.col,
            count: (!w.missing).then_some(w.count),
            excluded: w.excluded.clone(),
        })
        .collect();
    let titer = plate_titer(&counts, scheme, policy)?;
    Ok(EffectiveView { wells, titer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::WellReport;
    use crate::titration::{serial_scheme, TraversalOrder};
    use crate::welldetect::Layout;

    fn analysis(counts: &[usize]) -> PlateAnalysis {
        PlateAnalysis {
            plate_id: "p".into(),
            layout: Layout::new(1, counts.len()).unwrap(),
            wells: counts
                .iter()
                .enumerate()
                .map(|(c, &n)| WellReport {
                    row: 0,
                    col: c,
                    bbox_full: BBox::new(c * 100, 0, 90, 90),
                    missing: false,
                    plaques: (0..n)
                        .map(|i| PlaqueReport {
                            id: i as u32 + 1,
                            bbox: BBox::new(i, i, 10, 10),
                            centroid: [i as f64 + 5.0, i as f64 + 5.0],
                            area: 78,
                            source: PlaqueSource::Watershed,
                        })
                        .collect(),
                    count: n,
                    crop: None,
                })
                .collect(),
            titer: None,
        }
    }

    fn ev(seq: u64, col: usize, action: CorrectionAction) -> CorrectionEvent {
        CorrectionEvent {
            seq,
            row: 0,
            col,
            action,
            author: "tester".into(),
            at: DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
        }
    }

    fn scheme(n: usize) -> DilutionScheme {
        serial_scheme(3, 10.0, TraversalOrder::RowMajor, Layout::new(1, n).unwrap(), n, 0.1).unwrap()
    }

    #[test]
    fn two_additions() {
        let a = analysis(&[31]);
        let add = CorrectionAction::AddPlaque {
            bbox: BBox::new(50, 50, 12, 12),
        };
        let v = apply_corrections(
            &a,
            &[ev(1, 0, add.clone()), ev(2, 0, add)],
            &scheme(1),
            &CountablePolicy::default(),
        )
        .unwrap();
        assert_eq!(v.wells[0].count, 33);
        assert_eq!(v.wells[0].automated_count, 31);
        assert!((v.titer.per_well[0].pfu_per_ml.unwrap() - 33.0 / 1e-3 / 0.1).abs() < 1e-6);
        assert_eq!(a.wells[0].count, 31);
    }

    #[test]
    fn remove_then_readd() {
        let a = analysis(&[10]);
        let events = [
            ev(1, 0, CorrectionAction::RemovePlaque { instance_id: 4 }),
            ev(
                2,
                0,
                CorrectionAction::AddPlaque {
                    bbox: BBox::new(3, 3, 10, 10),
                },
            ),
        ];
        let v = apply_corrections(&a, &events, &scheme(1), &CountablePolicy::default()).unwrap();
        assert_eq!(v.wells[0].count, 10);
        assert_eq!(v.wells[0].plaques.last().unwrap().id, 11);
    }

    #[test]
    fn dead_instance_rejected() {
        let a = analysis(&[5]);
        let events = [
            ev(1, 0, CorrectionAction::RemovePlaque { instance_id: 2 }),
            ev(2, 0, CorrectionAction::RemovePlaque { instance_id: 2 }),
        ];
        let err = apply_corrections(&a, &events, &scheme(1), &CountablePolicy::default()).unwrap_err();
        assert!(matches!(err, Error::Correction { seq: 2, .. }));
    }

    #[test]
    fn exclude_and_include() {
        let a = analysis(&[20, 40]);
        let ex = [ev(
            1,
            1,
            CorrectionAction::ExcludeWell {
                reason: "scratched".into(),
            },
        )];
        let v = apply_corrections(&a, &ex, &scheme(2), &CountablePolicy::default()).unwrap();
        assert_eq!(v.titer.n_included, 1);
        assert_eq!(v.wells[1].count, 40);
        assert!(!v.titer.per_well[1].included);
        let back = [ex[0].clone(), ev(2, 1, CorrectionAction::IncludeWell)];
        let v = apply_corrections(&a, &back, &scheme(2), &CountablePolicy::default()).unwrap();
        assert_eq!(v.titer.n_included, 2);
    }

    #[test]
    fn event_json_shape() {
        let e = ev(
            3,
            0,
            CorrectionAction::AddPlaque {
                bbox: BBox::new(1, 2, 10, 11),
            },
        );
        let s = serde_json::to_string(&e).unwrap();
        assert!(
            s.contains(r#""action":{"type":"add_plaque","bbox":[1,2,10,11]}"#),
            "{s}"
        );
        let back: CorrectionEvent = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
    }
}
