//! The score-ratio baseline: turn raw per-class predictions into
//! known/unknown detections.
//!
//! For each box the ratio of the top-1 and top-2 class scores is compared
//! with a threshold `gamma`; a box with ratio below `gamma` is relabeled
//! unknown and scored by the sum of its top `top_m` class scores. Softmax
//! logits may be flattened with a temperature before the comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detections::{DetLabel, Detection, HeadKind, KnownClasses, RawPrediction, ValueKind};
use crate::error::{Diagnostic, Error, Result};
use crate::metrics::{evaluate, EvalConfig, EvalGroundTruth, MetricsReport};

/// Configuration of the ratio rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Ratio threshold separating known from unknown.
    pub gamma: f64,
    /// Softmax temperature; only meaningful for softmax logits.
    pub temperature: f64,
    /// How many top scores sum into the unknown detection score.
    pub top_m: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            gamma: 1.5,
            temperature: 1.0,
            top_m: 3,
        }
    }
}

impl BaselineConfig {
    pub fn new(gamma: f64, temperature: f64, top_m: usize) -> Result<Self> {
        let cfg = BaselineConfig {
            gamma,
            temperature,
            top_m,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.top_m < 1 {
            return Err(Error::Config("top_m must be >= 1".into()));
        }
        Ok(())
    }

    /// Non-fatal notes for a batch, e.g. a temperature that sigmoid heads
    /// will ignore.
    pub fn warnings_for(&self, preds: &[RawPrediction]) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.temperature != 1.0
            && preds
                .iter()
                .any(|p| p.value_kind == ValueKind::Logits && p.head_kind == HeadKind::Sigmoid)
        {
            out.push(Diagnostic::warning(format!(
                "temperature {} is a no-op for sigmoid logits",
                self.temperature
            )));
        }
        out
    }
}

/// Convert a raw prediction into a per-class probability vector.
///
/// Softmax logits are scaled by `1/temperature` before the softmax;
/// sigmoid logits pass through the logistic function (temperature is a
/// no-op); probability vectors are returned unchanged and require
/// `temperature == 1` (temperature needs logits).
pub fn scores_from_raw(pred: &RawPrediction, temperature: f64) -> Result<Vec<f64>> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Config(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    let raw = pred.scores_or_logits();
    match (pred.value_kind, pred.head_kind) {
        (ValueKind::Probabilities, _) => {
            if temperature != 1.0 {
                return Err(Error::Config(format!(
                    "temperature {temperature} requires logits, got probabilities"
                )));
            }
            Ok(raw.to_vec())
        }
        (ValueKind::Logits, HeadKind::Softmax) => {
            let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = raw
                .iter()
                .map(|&z| ((z - max) / temperature).exp())
                .collect();
            let sum: f64 = exps.iter().sum();
            Ok(exps.into_iter().map(|e| e / sum).collect())
        }
        (ValueKind::Logits, HeadKind::Sigmoid) => {
            Ok(raw.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect())
        }
    }
}

/// Apply the ratio rule to one prediction. `known` maps score-vector
/// positions to taxonomy class ids.
///
/// With sorted scores `s1 >= s2 >= ...`, the ratio is `s1/s2` (`+inf`
/// when `s2 == 0`: an infinite margin is maximal confidence, not
/// uncertainty). Ratio below `gamma` relabels the box unknown with score
/// `s1 + ... + s_top_m`; otherwise the box keeps its argmax class (ties
/// broken by lowest class id) with score `s1`.
pub fn relabel(
    pred: &RawPrediction,
    cfg: &BaselineConfig,
    known: &KnownClasses,
) -> Result<Detection> {
    cfg.validate()?;
    if pred.num_classes() < 2 {
        return Err(Error::Config(format!(
            "ratio rule needs >= 2 classes, got {}",
            pred.num_classes()
        )));
    }
    if pred.num_classes() != known.len() {
        return Err(Error::Config(format!(
            "score vector has {} entries, known-class list has {}",
            pred.num_classes(),
            known.len()
        )));
    }
    if cfg.top_m > pred.num_classes() {
        return Err(Error::Config(format!(
            "top_m = {} exceeds class count {}",
            cfg.top_m,
            pred.num_classes()
        )));
    }
    let scores = scores_from_raw(pred, cfg.temperature)?;

    // Sort positions by (score desc, position asc); known-class lists
    // are ordered by ascending taxonomy id, so the stable sort
    // implements the lowest-class-id tie-break.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let s1 = scores[order[0]];
    let s2 = scores[order[1]];
    let ratio = if s2 == 0.0 { f64::INFINITY } else { s1 / s2 };

    if ratio < cfg.gamma {
        let unknown_score: f64 = order.iter().take(cfg.top_m).map(|&i| scores[i]).sum();
        Detection::new(
            pred.image_id.clone(),
            pred.bbox,
            DetLabel::Unknown,
            unknown_score,
        )
    } else {
        let class_id = known
            .id_at(order[0])
            .expect("argmax position is within the known-class list");
        Detection::new(
            pred.image_id.clone(),
            pred.bbox,
            DetLabel::Known(class_id),
            s1,
        )
    }
}

/// Relabel every prediction, preserving input order. Errors carry the
/// index of the offending record.
pub fn relabel_all(
    preds: &[RawPrediction],
    cfg: &BaselineConfig,
    known: &KnownClasses,
) -> Result<Vec<Detection>> {
    preds
        .par_iter()
        .enumerate()
        .map(|(idx, pred)| {
            relabel(pred, cfg, known).map_err(|e| Error::Config(format!("prediction #{idx}: {e}")))
        })
        .collect()
}

/// One cell of a hyperparameter sweep.
#[derive(Debug)]
pub struct SweepCell {
    pub gamma: f64,
    pub temperature: f64,
    /// How many boxes the ratio rule relabeled unknown at this setting.
    pub unknown_count: usize,
    pub report: MetricsReport,
}

/// Evaluate the baseline over a (gamma, temperature) grid, reusing the
/// parsed inputs. Cells are emitted temperature-major, gamma-minor.
pub fn sweep_baseline(
    preds: &[RawPrediction],
    gamma_grid: &[f64],
    temperature_grid: &[f64],
    known: &KnownClasses,
    gt: &EvalGroundTruth,
    eval_cfg: &EvalConfig,
) -> Result<Vec<SweepCell>> {
    if gamma_grid.is_empty() || temperature_grid.is_empty() {
        return Err(Error::Config("sweep grids must be non-empty".into()));
    }
    let top_m = 3.min(known.len());
    let mut cells = Vec::with_capacity(gamma_grid.len() * temperature_grid.len());
    for &temperature in temperature_grid {
        for &gamma in gamma_grid {
            let cfg = BaselineConfig::new(gamma, temperature, top_m)?;
            let dets = relabel_all(preds, &cfg, known)?;
            let unknown_count = dets.iter().filter(|d| d.label.is_unknown()).count();
            let report = evaluate(&dets, gt, eval_cfg)?;
            cells.push(SweepCell {
                gamma,
                temperature,
                unknown_count,
                report,
            });
        }
    }
    Ok(cells)
}

/// Greedy non-maximum suppression across the known/unknown label
/// boundary only; same-label pairs are left alone (per-class NMS is the
/// detector's job). Higher score survives; on ties the known label wins.
/// Survivors keep their input order.
pub fn cross_label_nms(dets: &[Detection], iou_thresh: f64) -> Result<Vec<Detection>> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(Error::Config(format!(
            "iou threshold must be in (0, 1], got {iou_thresh}"
        )));
    }

    let mut suppressed = vec![false; dets.len()];
    let mut by_image: std::collections::HashMap<&str, Vec<usize>> =
        std::collections::HashMap::new();
    for (i, det) in dets.iter().enumerate() {
        by_image.entry(det.image_id.as_str()).or_default().push(i);
    }

    for indices in by_image.values() {
        // score desc, known before unknown on ties, then input order
        let mut order = indices.clone();
        order.sort_by(|&a, &b| {
            dets[b]
                .score
                .partial_cmp(&dets[a].score)
                .unwrap()
                .then_with(|| dets[a].label.is_unknown().cmp(&dets[b].label.is_unknown()))
                .then(a.cmp(&b))
        });
        for (pos, &i) in order.iter().enumerate() {
            if suppressed[i] {
                continue;
            }
            for &j in &order[pos + 1..] {
                if suppressed[j] {
                    continue;
                }
                let cross = dets[i].label.is_unknown() != dets[j].label.is_unknown();
                if cross && dets[i].bbox.iou(&dets[j].bbox) >= iou_thresh {
                    suppressed[j] = true;
                }
            }
        }
    }

    Ok(dets
        .iter()
        .enumerate()
        .filter(|(i, _)| !suppressed[*i])
        .map(|(_, d)| d.clone())
        .collect())
}
