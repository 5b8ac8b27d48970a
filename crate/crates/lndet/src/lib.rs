//! Detection post-processing and evaluation toolkit for volumetric
//! lesion CAD pipelines.
//!
//! Everything downstream of the neural detectors: box fusion (NMS,
//! Soft-NMS, Weighted Boxes Fusion), hard-negative selection, slice
//! preprocessing, and lesion-level volumetric FROC/mAP evaluation with
//! false positives counted per volume rather than per slice.
//!
//! See the `examples/` directory for one runnable example per major
//! capability, and the `lndet` binary for the file-based CLI.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod hnem;
pub mod report;
pub mod synth;
pub mod volume;

pub use dataset::{AnnotationDataset, DetectionDataset, VolumeIndex};
pub use error::{Error, Result};
pub use evaluation::{
    average_precision, ensemble_gate, evaluate, froc, match_detections, sensitivity_at_fp,
    EvalConfig, EvalReport, FrocCurve, FrocPoint, Interpolation, LesionAnnotation, MatchResult,
};
pub use fusion::{
    fuse_volume, nms, soft_nms, wbf, Detection, FusionMethod, FusionParams, RescaleMode, ScoreMode,
};
pub use geometry::Box2D;
pub use hnem::{select_hard_negatives, MiningResult};
pub use report::{froc_dump, render_report, ReportFormat};
pub use synth::{synth_generate, DetectorProfile, ExpectedStats, SynthConfig};
pub use volume::{make_slice_windows, percentile_normalize, read_tvol, write_tvol, Volume};
