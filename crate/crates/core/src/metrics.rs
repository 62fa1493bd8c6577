//! Open-set detection metrics: per-class and unknown-agnostic average
//! precision, absolute open-set error, wilderness impact, and
//! operating-point sweeps.
//!
//! One greedy matching pass per (image, pool, IoU threshold) feeds
//! everything. Matching processes detections in score order, so
//! restricting to scores above a confidence threshold never changes the
//! outcome of a surviving detection; operating-point statistics are
//! therefore prefix sums over the score-ranked outcome list.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, DatasetView, GroundTruthInstance, Subset};
use crate::detections::{DetLabel, Detection};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::matching::greedy_match_pool;

/// Evaluation parameters. Defaults follow the common conventions: AP
/// averaged over IoU 0.50:0.05:0.95, open-set error and wilderness
/// impact at IoU 0.5 with a 0.05 confidence floor and a 0.8 recall
/// operating point, at most 100 detections per image and pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_grid: Vec<f64>,
    pub aose_conf_threshold: f64,
    pub wi_recall_target: f64,
    pub single_iou_for_openset: f64,
    pub max_dets_per_image: usize,
    /// Confidence grid for the operating-point sweep; empty disables it.
    pub sweep_thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_grid: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
            aose_conf_threshold: 0.05,
            wi_recall_target: 0.8,
            single_iou_for_openset: 0.5,
            max_dets_per_image: 100,
            sweep_thresholds: (0..=20).map(|i| 0.05 * i as f64).collect(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_grid.is_empty() {
            return Err(Error::Config("iou_grid must be non-empty".into()));
        }
        for w in self.iou_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config("iou_grid must be strictly increasing".into()));
            }
        }
        for &t in &self.iou_grid {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("iou threshold {t} outside (0, 1]")));
            }
        }
        if !(self.single_iou_for_openset > 0.0 && self.single_iou_for_openset <= 1.0) {
            return Err(Error::Config(
                "single_iou_for_openset outside (0, 1]".into(),
            ));
        }
        if !(self.aose_conf_threshold > 0.0 && self.aose_conf_threshold < 1.0) {
            return Err(Error::Config("aose_conf_threshold outside (0, 1)".into()));
        }
        if !(self.wi_recall_target > 0.0 && self.wi_recall_target <= 1.0) {
            return Err(Error::Config("wi_recall_target outside (0, 1]".into()));
        }
        if self.max_dets_per_image == 0 {
            return Err(Error::Config("max_dets_per_image must be >= 1".into()));
        }
        for w in self.sweep_thresholds.windows(2) {
            if w[1] < w[0] {
                return Err(Error::Config(
                    "sweep_thresholds must be sorted ascending".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Ground truth prepared for evaluation: the known/unknown class sets
/// and the instances of the evaluated subset. Instances of classes in
/// neither set are not part of the evaluation universe and are dropped.
#[derive(Debug, Clone)]
pub struct EvalGroundTruth {
    known_classes: BTreeSet<ClassId>,
    unknown_classes: BTreeSet<ClassId>,
    instances: Vec<GroundTruthInstance>,
}

impl EvalGroundTruth {
    pub fn new(
        known_classes: BTreeSet<ClassId>,
        unknown_classes: BTreeSet<ClassId>,
        instances: Vec<GroundTruthInstance>,
    ) -> Result<Self> {
        if known_classes.is_empty() {
            return Err(Error::Eval("known-class set is empty".into()));
        }
        if let Some(id) = known_classes.intersection(&unknown_classes).next() {
            return Err(Error::Eval(format!(
                "class id {id} is both known and unknown"
            )));
        }
        let instances = instances
            .into_iter()
            .filter(|inst| {
                known_classes.contains(&inst.class_id) || unknown_classes.contains(&inst.class_id)
            })
            .collect();
        Ok(EvalGroundTruth {
            known_classes,
            unknown_classes,
            instances,
        })
    }

    /// Evaluation ground truth from a split dataset's subset
    /// (conventionally [`Subset::Test`]).
    pub fn from_view(view: &DatasetView, subset: Subset) -> Result<Self> {
        let split = view
            .split()
            .ok_or_else(|| Error::Eval("dataset view has no split applied".into()))?;
        let instances = view.subset_instances(subset).into_iter().cloned().collect();
        EvalGroundTruth::new(
            split.known_classes().clone(),
            split.unknown_classes(),
            instances,
        )
    }

    pub fn known_classes(&self) -> &BTreeSet<ClassId> {
        &self.known_classes
    }

    pub fn unknown_classes(&self) -> &BTreeSet<ClassId> {
        &self.unknown_classes
    }

    pub fn instances(&self) -> &[GroundTruthInstance] {
        &self.instances
    }
}

// ---------------------------------------------------------------------------
// precision-recall curves

/// One point of a precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub recall: f64,
    pub precision: f64,
    pub score: f64,
}

/// A rank-ordered precision-recall curve over a fixed ground-truth count.
#[derive(Debug, Clone, PartialEq)]
pub struct PRCurve {
    points: Vec<PRPoint>,
    n_gt: usize,
}

impl PRCurve {
    /// Build from detections ranked by descending score; `flags[i]` is
    /// `(score, is_true_positive)`.
    pub fn from_ranked(flags: &[(f64, bool)], n_gt: usize) -> Self {
        let mut points = Vec::with_capacity(flags.len());
        if n_gt > 0 {
            let mut tp = 0u64;
            for (rank, &(score, is_tp)) in flags.iter().enumerate() {
                tp += u64::from(is_tp);
                points.push(PRPoint {
                    recall: tp as f64 / n_gt as f64,
                    precision: tp as f64 / (rank + 1) as f64,
                    score,
                });
            }
        }
        PRCurve { points, n_gt }
    }

    pub fn points(&self) -> &[PRPoint] {
        &self.points
    }

    pub fn n_gt(&self) -> usize {
        self.n_gt
    }
}

/// 101-point interpolated average precision: the precision envelope
/// (max precision at recall >= r) sampled at r = 0.00, 0.01, ..., 1.00
/// and averaged. `None` when the curve has no ground truth: AP is
/// undefined there, not zero.
pub fn average_precision(curve: &PRCurve) -> Option<f64> {
    if curve.n_gt == 0 {
        return None;
    }
    let recalls: Vec<f64> = curve.points.iter().map(|p| p.recall).collect();
    let mut envelope: Vec<f64> = curve.points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut sum = 0.0;
    let mut ptr = 0;
    for j in 0..=100u32 {
        let r = j as f64 / 100.0;
        while ptr < recalls.len() && recalls[ptr] < r {
            ptr += 1;
        }
        if ptr < envelope.len() {
            sum += envelope[ptr];
        }
    }
    Some(sum / 101.0)
}

// ---------------------------------------------------------------------------
// the evaluation index

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpenSetOutcome {
    TruePositive,
    FalsePositive,
    OpenSetError,
}

/// One known-labeled detection's fate at the open-set IoU threshold.
#[derive(Debug, Clone, Copy)]
struct OpenSetRecord {
    score: f64,
    outcome: OpenSetOutcome,
}

struct PoolEntry {
    /// (score, global detection index), capped and rank-sorted.
    det_scores: Vec<(f64, usize)>,
    iou: Vec<Vec<f64>>,
    n_gt: usize,
    /// Known pools only: per detection, max IoU against the image's
    /// unknown ground truth.
    unknown_overlap: Vec<f64>,
}

struct ClassPool {
    entries: Vec<PoolEntry>,
    n_gt: usize,
}

/// Shared evaluation state: pools, IoU matrices, and the score-ranked
/// open-set outcome list with its prefix sums.
pub struct EvalIndex {
    known_pools: BTreeMap<ClassId, ClassPool>,
    unknown_pool: ClassPool,
    n_known_gt: usize,
    iou_grid: Vec<f64>,
    /// Open-set records sorted by (score desc); parallel prefix arrays.
    ranked_scores: Vec<f64>,
    cum_tp: Vec<u64>,
    cum_fp: Vec<u64>,
    cum_aose: Vec<u64>,
}

impl EvalIndex {
    pub fn build(dets: &[Detection], gt: &EvalGroundTruth, cfg: &EvalConfig) -> Result<Self> {
        cfg.validate()?;
        for (idx, det) in dets.iter().enumerate() {
            if let DetLabel::Known(c) = det.label {
                if !gt.known_classes.contains(&c) {
                    return Err(Error::Eval(format!(
                        "detection #{idx} labels class id {c} outside the known set"
                    )));
                }
            }
        }

        // Group by image, deterministically ordered by image id.
        #[derive(Default)]
        struct ImageBucket {
            known_dets: BTreeMap<ClassId, Vec<usize>>,
            unknown_dets: Vec<usize>,
            known_gts: BTreeMap<ClassId, Vec<BoundingBox>>,
            unknown_gts: Vec<BoundingBox>,
        }
        let mut buckets: BTreeMap<&str, ImageBucket> = BTreeMap::new();
        for (idx, det) in dets.iter().enumerate() {
            let bucket = buckets.entry(det.image_id.as_str()).or_default();
            match det.label {
                DetLabel::Known(c) => bucket.known_dets.entry(c).or_default().push(idx),
                DetLabel::Unknown => bucket.unknown_dets.push(idx),
            }
        }
        for inst in &gt.instances {
            let bucket = buckets.entry(inst.image_id.as_str()).or_default();
            if gt.unknown_classes.contains(&inst.class_id) {
                bucket.unknown_gts.push(inst.bbox);
            } else {
                bucket
                    .known_gts
                    .entry(inst.class_id)
                    .or_default()
                    .push(inst.bbox);
            }
        }

        let cap = cfg.max_dets_per_image;
        let rank_and_cap = |indices: &[usize]| -> Vec<(f64, usize)> {
            let mut refs: Vec<(f64, usize)> = indices.iter().map(|&i| (dets[i].score, i)).collect();
            refs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            refs.truncate(cap);
            refs
        };
        let iou_matrix = |refs: &[(f64, usize)], gts: &[BoundingBox]| -> Vec<Vec<f64>> {
            refs.iter()
                .map(|&(_, di)| gts.iter().map(|g| dets[di].bbox.iou(g)).collect())
                .collect()
        };

        // Per-image pool construction, parallel over images with a
        // deterministic merge (buckets iterate in image-id order).
        let bucket_list: Vec<(&str, &ImageBucket)> = buckets.iter().map(|(k, v)| (*k, v)).collect();
        type BuiltImage = (Vec<(ClassId, PoolEntry)>, Option<PoolEntry>);
        let built: Vec<BuiltImage> = bucket_list
            .par_iter()
            .map(|(_, bucket)| {
                let mut known_entries = Vec::new();
                let class_ids: BTreeSet<ClassId> = bucket
                    .known_dets
                    .keys()
                    .chain(bucket.known_gts.keys())
                    .copied()
                    .collect();
                for c in class_ids {
                    let refs = bucket
                        .known_dets
                        .get(&c)
                        .map(|v| rank_and_cap(v))
                        .unwrap_or_default();
                    let gts = bucket.known_gts.get(&c).cloned().unwrap_or_default();
                    let unknown_overlap = refs
                        .iter()
                        .map(|&(_, di)| {
                            bucket
                                .unknown_gts
                                .iter()
                                .map(|g| dets[di].bbox.iou(g))
                                .fold(0.0f64, f64::max)
                        })
                        .collect();
                    known_entries.push((
                        c,
                        PoolEntry {
                            iou: iou_matrix(&refs, &gts),
                            n_gt: gts.len(),
                            det_scores: refs,
                            unknown_overlap,
                        },
                    ));
                }
                let unknown_entry =
                    if !bucket.unknown_dets.is_empty() || !bucket.unknown_gts.is_empty() {
                        let refs = rank_and_cap(&bucket.unknown_dets);
                        Some(PoolEntry {
                            iou: iou_matrix(&refs, &bucket.unknown_gts),
                            n_gt: bucket.unknown_gts.len(),
                            unknown_overlap: Vec::new(),
                            det_scores: refs,
                        })
                    } else {
                        None
                    };
                (known_entries, unknown_entry)
            })
            .collect();

        let mut known_pools: BTreeMap<ClassId, ClassPool> = BTreeMap::new();
        let mut unknown_pool = ClassPool {
            entries: Vec::new(),
            n_gt: 0,
        };
        for (known_entries, unknown_entry) in built {
            for (c, entry) in known_entries {
                let pool = known_pools.entry(c).or_insert(ClassPool {
                    entries: Vec::new(),
                    n_gt: 0,
                });
                pool.n_gt += entry.n_gt;
                pool.entries.push(entry);
            }
            if let Some(entry) = unknown_entry {
                unknown_pool.n_gt += entry.n_gt;
                unknown_pool.entries.push(entry);
            }
        }
        let n_known_gt: usize = known_pools.values().map(|p| p.n_gt).sum();

        // The single open-set matching pass behind A-OSE, WI and the
        // operating-point sweep.
        let mut records: Vec<OpenSetRecord> = Vec::new();
        for pool in known_pools.values() {
            for entry in &pool.entries {
                let matched = greedy_match_pool(
                    &entry.det_scores,
                    &entry.iou,
                    entry.n_gt,
                    cfg.single_iou_for_openset,
                );
                for (local, m) in matched.iter().enumerate() {
                    let outcome = if m.is_some() {
                        OpenSetOutcome::TruePositive
                    } else if entry.unknown_overlap[local] >= cfg.single_iou_for_openset {
                        OpenSetOutcome::OpenSetError
                    } else {
                        OpenSetOutcome::FalsePositive
                    };
                    records.push(OpenSetRecord {
                        score: entry.det_scores[local].0,
                        outcome,
                    });
                }
            }
        }
        records.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());

        let mut cum_tp = Vec::with_capacity(records.len());
        let mut cum_fp = Vec::with_capacity(records.len());
        let mut cum_aose = Vec::with_capacity(records.len());
        let (mut tp, mut fp, mut aose) = (0u64, 0u64, 0u64);
        for r in &records {
            match r.outcome {
                OpenSetOutcome::TruePositive => tp += 1,
                OpenSetOutcome::FalsePositive => fp += 1,
                OpenSetOutcome::OpenSetError => {
                    fp += 1;
                    aose += 1;
                }
            }
            cum_tp.push(tp);
            cum_fp.push(fp);
            cum_aose.push(aose);
        }

        Ok(EvalIndex {
            known_pools,
            unknown_pool,
            n_known_gt,
            iou_grid: cfg.iou_grid.clone(),
            ranked_scores: records.iter().map(|r| r.score).collect(),
            cum_tp,
            cum_fp,
            cum_aose,
        })
    }

    /// AP of one pool at one IoU threshold; `None` when the pool has no
    /// ground truth.
    fn pool_ap(pool: &ClassPool, iou_t: f64) -> Option<f64> {
        if pool.n_gt == 0 {
            return None;
        }
        let mut flags: Vec<(f64, usize, bool)> = Vec::new();
        for entry in &pool.entries {
            let matched = greedy_match_pool(&entry.det_scores, &entry.iou, entry.n_gt, iou_t);
            for (local, m) in matched.iter().enumerate() {
                let (score, det_idx) = entry.det_scores[local];
                flags.push((score, det_idx, m.is_some()));
            }
        }
        flags.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let ranked: Vec<(f64, bool)> = flags.iter().map(|&(s, _, tp)| (s, tp)).collect();
        average_precision(&PRCurve::from_ranked(&ranked, pool.n_gt))
    }

    fn pool_ap_over_grid(&self, pool: &ClassPool) -> Option<f64> {
        if pool.n_gt == 0 {
            return None;
        }
        let sum: f64 = self
            .iou_grid
            .iter()
            .map(|&t| Self::pool_ap(pool, t).expect("pool has ground truth"))
            .sum();
        Some(sum / self.iou_grid.len() as f64)
    }

    fn ap_known(&self) -> Result<(BTreeMap<ClassId, f64>, f64)> {
        if self.n_known_gt == 0 {
            return Err(Error::Eval(
                "no known-class ground truth in the evaluation set".into(),
            ));
        }
        let scored: Vec<(ClassId, &ClassPool)> = self
            .known_pools
            .iter()
            .filter(|(_, p)| p.n_gt > 0)
            .map(|(&c, p)| (c, p))
            .collect();
        let aps: Vec<(ClassId, f64)> = scored
            .par_iter()
            .map(|&(c, pool)| (c, self.pool_ap_over_grid(pool).expect("n_gt > 0")))
            .collect();
        let map = aps.iter().map(|&(_, ap)| ap).sum::<f64>() / aps.len() as f64;
        Ok((aps.into_iter().collect(), map))
    }

    fn ap_unknown(&self) -> Option<f64> {
        self.pool_ap_over_grid(&self.unknown_pool)
    }

    /// Records with score >= threshold form a prefix of the ranked list.
    fn prefix_len(&self, threshold: f64) -> usize {
        self.ranked_scores.partition_point(|&s| s >= threshold)
    }

    fn counts_at(&self, prefix: usize) -> (u64, u64, u64) {
        if prefix == 0 {
            (0, 0, 0)
        } else {
            (
                self.cum_tp[prefix - 1],
                self.cum_fp[prefix - 1],
                self.cum_aose[prefix - 1],
            )
        }
    }

    fn stats_at_prefix(&self, conf_threshold: f64, prefix: usize) -> OperatingPointStats {
        let (tp, fp, aose) = self.counts_at(prefix);
        OperatingPointStats::from_counts(conf_threshold, tp, fp, aose, self.n_known_gt)
    }

    fn aose_at(&self, threshold: f64) -> u64 {
        self.counts_at(self.prefix_len(threshold)).2
    }

    /// Operating point chosen for wilderness impact: the highest
    /// confidence threshold whose known recall meets the target,
    /// scanning every distinct detection score.
    fn wilderness_point(&self, recall_target: f64) -> Result<OperatingPointStats> {
        if self.n_known_gt == 0 {
            return Err(Error::Eval(
                "wilderness impact undefined without known ground truth".into(),
            ));
        }
        let n = self.ranked_scores.len();
        let mut i = 0;
        while i < n {
            // advance to the end of this score's tie group
            let score = self.ranked_scores[i];
            let mut j = i + 1;
            while j < n && self.ranked_scores[j] == score {
                j += 1;
            }
            let recall = self.cum_tp[j - 1] as f64 / self.n_known_gt as f64;
            if recall >= recall_target {
                return Ok(self.stats_at_prefix(score, j));
            }
            i = j;
        }
        let max_recall = if n == 0 {
            0.0
        } else {
            self.cum_tp[n - 1] as f64 / self.n_known_gt as f64
        };
        Err(Error::RecallUnreachable {
            target: recall_target,
            max_recall,
        })
    }
}

// ---------------------------------------------------------------------------
// public operations

/// Statistics of known-class detection at one confidence threshold.
///
/// `fp_known` counts every unmatched known-labeled detection, open-set
/// errors included; `aose` is the open-set subset of it. The closed-set
/// precision `P_K` excludes open-set errors from the denominator, the
/// open-set precision `P_KU` keeps them, and
/// `P_K / P_KU - 1 = aose / (tp + fp - aose)` holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPointStats {
    pub conf_threshold: f64,
    pub tp_known: u64,
    pub fp_known: u64,
    pub aose: u64,
    pub recall_known: f64,
    pub precision_closed: f64,
    pub precision_open: f64,
}

impl OperatingPointStats {
    fn from_counts(conf_threshold: f64, tp: u64, fp: u64, aose: u64, n_known_gt: usize) -> Self {
        let total = tp + fp;
        let closed = total - aose;
        OperatingPointStats {
            conf_threshold,
            tp_known: tp,
            fp_known: fp,
            aose,
            recall_known: if n_known_gt == 0 {
                0.0
            } else {
                tp as f64 / n_known_gt as f64
            },
            precision_closed: if closed == 0 {
                0.0
            } else {
                tp as f64 / closed as f64
            },
            precision_open: if total == 0 {
                0.0
            } else {
                tp as f64 / total as f64
            },
        }
    }

    /// Wilderness impact at this point: `aose / (tp + fp_closed)`, the
    /// exact counterpart of `P_K / P_KU - 1`. `None` when every
    /// detection at this threshold is an open-set error (the closed-set
    /// precision, and hence the ratio form, is undefined).
    pub fn wilderness_impact(&self) -> Option<f64> {
        let closed = self.tp_known + self.fp_known - self.aose;
        if closed == 0 {
            None
        } else {
            Some(self.aose as f64 / closed as f64)
        }
    }
}

/// Per-class AP averaged over the IoU grid, and their mean over classes
/// with ground truth.
pub fn ap_known(
    dets: &[Detection],
    gt: &EvalGroundTruth,
    cfg: &EvalConfig,
) -> Result<(BTreeMap<ClassId, f64>, f64)> {
    EvalIndex::build(dets, gt, cfg)?.ap_known()
}

/// Class-agnostic AP of unknown detection, averaged over the IoU grid.
/// `None` when the evaluation set has no unknown ground truth.
pub fn ap_unknown(
    dets: &[Detection],
    gt: &EvalGroundTruth,
    cfg: &EvalConfig,
) -> Result<Option<f64>> {
    Ok(EvalIndex::build(dets, gt, cfg)?.ap_unknown())
}

/// Absolute open-set error: confident known-labeled detections that are
/// not true positives and cover an unknown ground-truth box. Counted per
/// detection; one unknown box may absorb several.
pub fn a_ose(dets: &[Detection], gt: &EvalGroundTruth, cfg: &EvalConfig) -> Result<u64> {
    let index = EvalIndex::build(dets, gt, cfg)?;
    Ok(index.aose_at(cfg.aose_conf_threshold))
}

/// Known-detection statistics at one confidence threshold. `None` when
/// no detection reaches the threshold.
pub fn operating_point(
    dets: &[Detection],
    gt: &EvalGroundTruth,
    conf_threshold: f64,
    cfg: &EvalConfig,
) -> Result<Option<OperatingPointStats>> {
    if !(0.0..=1.0).contains(&conf_threshold) {
        return Err(Error::Config(format!(
            "confidence threshold {conf_threshold} outside [0, 1]"
        )));
    }
    let index = EvalIndex::build(dets, gt, cfg)?;
    let prefix = index.prefix_len(conf_threshold);
    if prefix == 0 {
        return Ok(None);
    }
    Ok(Some(index.stats_at_prefix(conf_threshold, prefix)))
}

/// Wilderness impact at the recall operating point of
/// `cfg.wi_recall_target`.
pub fn wilderness_impact(
    dets: &[Detection],
    gt: &EvalGroundTruth,
    cfg: &EvalConfig,
) -> Result<f64> {
    let index = EvalIndex::build(dets, gt, cfg)?;
    let stats = index.wilderness_point(cfg.wi_recall_target)?;
    stats
        .wilderness_impact()
        .ok_or_else(|| Error::Eval("wilderness impact undefined at the operating point".into()))
}

/// One stats record per threshold (ascending). Thresholds above every
/// score yield zero-count records.
pub fn sweep_operating_points(
    dets: &[Detection],
    gt: &EvalGroundTruth,
    thresholds: &[f64],
    cfg: &EvalConfig,
) -> Result<Vec<OperatingPointStats>> {
    for w in thresholds.windows(2) {
        if w[1] < w[0] {
            return Err(Error::Config("thresholds must be sorted ascending".into()));
        }
    }
    let index = EvalIndex::build(dets, gt, cfg)?;
    Ok(thresholds
        .iter()
        .map(|&t| index.stats_at_prefix(t, index.prefix_len(t)))
        .collect())
}

/// The full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ap_known_per_class: BTreeMap<ClassId, f64>,
    pub map_known: f64,
    pub ap_unknown: Option<f64>,
    pub aose: u64,
    pub wi: Option<f64>,
    /// Why `wi` is absent, when it is.
    pub wi_note: Option<String>,
    pub sweep: Vec<OperatingPointStats>,
    pub config: EvalConfig,
}

/// Compose every metric into one report. The wilderness-impact recall
/// target being unreachable is recorded in the report, not an error;
/// everything else propagates.
pub fn evaluate(
    dets: &[Detection],
    gt: &EvalGroundTruth,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    let index = EvalIndex::build(dets, gt, cfg)?;
    let (ap_known_per_class, map_known) = index.ap_known()?;
    let ap_unknown = index.ap_unknown();
    let aose = index.aose_at(cfg.aose_conf_threshold);
    let (wi, wi_note) = match index.wilderness_point(cfg.wi_recall_target) {
        Ok(stats) => match stats.wilderness_impact() {
            Some(v) => (Some(v), None),
            None => (None, Some("closed-set precision undefined".into())),
        },
        Err(Error::RecallUnreachable { target, max_recall }) => (
            None,
            Some(format!(
                "recall target {target} unreachable: max achievable recall is {max_recall}"
            )),
        ),
        Err(e) => return Err(e),
    };
    let sweep = if cfg.sweep_thresholds.is_empty() {
        Vec::new()
    } else {
        cfg.sweep_thresholds
            .iter()
            .map(|&t| index.stats_at_prefix(t, index.prefix_len(t)))
            .collect()
    };
    Ok(MetricsReport {
        ap_known_per_class,
        map_known,
        ap_unknown,
        aose,
        wi,
        wi_note,
        sweep,
        config: cfg.clone(),
    })
}
