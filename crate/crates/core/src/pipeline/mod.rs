//! End-to-end plate analysis, reviewer corrections and persistence.

mod analyze;
mod corrections;
mod store;

pub use analyze::{
    analyze_image, detect_all_plaques, detect_wells, prob_map_name, save_diagnostic_overlay, well_counts,
    PipelineConfig, ProbSource, WellOutcome, WellSource,
};
pub use corrections::{apply_corrections, CorrectionAction, CorrectionEvent, EffectiveView, EffectiveWell};
pub use store::{PlateRecord, PlateStatus, PlateView, Store, WellView, DATA_ENV};
