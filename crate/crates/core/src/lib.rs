//! Evaluation engine and benchmark-construction toolkit for open-set
//! object detection under a fixed super-class.
//!
//! The crate covers the full workflow around (but not including) the
//! detector itself:
//!
//! - **Data model & formats** ([`dataset`], [`formats`]): taxonomy,
//!   images, ground-truth instances; a native JSON annotation format, a
//!   COCO-style importer, and detection files in labeled or raw form.
//! - **Benchmark splits** ([`splits`], [`splitgen`], [`cooccurrence`],
//!   [`spectral`]): seeded k-way random class splits, co-occurrence
//!   graphs with spectral normalized-cut clustering, and the train/val/
//!   test image subset rules.
//! - **Open-set baseline** ([`baseline`]): relabel raw per-class scores
//!   as known or unknown via the top-1/top-2 score ratio, with
//!   temperature scaling, top-m unknown scores, hyperparameter sweeps,
//!   and optional cross-label NMS.
//! - **Metrics** ([`metrics`], [`matching`]): per-class AP_known over an
//!   IoU grid, class-agnostic AP_unk, absolute open-set error (A-OSE),
//!   wilderness impact (WI), and operating-point sweeps.
//! - **Reports** ([`report`]): aggregation across splits with
//!   mean ± population std, publication-style tables, sweep CSV export,
//!   and manifest-driven batch runs.
//!
//! Every seeded operation is deterministic, and evaluation results are
//! bit-identical regardless of thread count.

pub mod baseline;
pub mod cooccurrence;
pub mod dataset;
pub mod detections;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod matching;
pub mod metrics;
pub mod report;
pub mod spectral;
pub mod splitgen;
pub mod splits;

pub use baseline::{cross_label_nms, relabel, relabel_all, scores_from_raw, BaselineConfig};
pub use cooccurrence::{build_cooccurrence_graph, ncut_value, CoOccurrenceGraph, Partition};
pub use dataset::{
    ClassId, ClassTaxonomy, DatasetView, GroundTruthInstance, ImageId, ImageInfo, Subset,
};
pub use detections::{DetLabel, Detection, HeadKind, KnownClasses, RawPrediction, ValueKind};
pub use error::{Diagnostic, Error, Result, Severity};
pub use formats::{
    parse_detections, parse_ground_truth, parse_split_spec, serialize_detections,
    serialize_ground_truth, serialize_split_spec, DetectionsKind, GroundTruthFormat,
};
pub use geometry::{iou, BoundingBox};
pub use matching::{match_image, EvalPool, GtBox, MatchOutcome};
pub use metrics::{
    a_ose, ap_known, ap_unknown, average_precision, evaluate, operating_point,
    sweep_operating_points, wilderness_impact, EvalConfig, EvalGroundTruth, MetricsReport,
    OperatingPointStats, PRCurve, PRPoint,
};
pub use report::{
    format_ap_percent, mean_population_std, render_table, run_eval, AggregateRow, RunManifest,
    RunSummary, SplitScore, TableFormat,
};
pub use spectral::normalized_cut;
pub use splitgen::{
    clusters_to_class_sets, make_split_specs, random_k_splits, select_known_cluster,
    MakeSplitOptions, RandomSplitConfig, SplitRng, SubsetPools,
};
pub use splits::{SplitProtocol, SplitProvenance, SplitSpec};
