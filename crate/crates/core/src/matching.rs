//! Greedy detection-to-ground-truth matching within evaluation pools.
//!
//! A pool is either one known class (its detections vs. its ground truth)
//! or the class-agnostic unknown pool. Detections are processed in score
//! order (ties: input index) and greedily take the unmatched ground-truth
//! box of highest IoU at or above the threshold (ties: lowest GT index).
//! This makes outcomes prefix-stable: dropping every detection below a
//! score threshold never changes the outcome of a surviving detection,
//! which is what lets operating-point sweeps reuse one matching pass.

use crate::dataset::ClassId;
use crate::detections::{DetLabel, Detection};
use crate::geometry::BoundingBox;

/// Pool selector for [`match_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPool {
    /// Detections labeled `Known(c)` vs. ground truth of class `c`.
    KnownClass(ClassId),
    /// Detections labeled `Unknown` vs. all unknown-class ground truth.
    UnknownAgnostic,
}

/// Outcome of one detection at one IoU threshold within one pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    /// Matched the pool ground-truth box with this index.
    TruePositive {
        gt: usize,
    },
    FalsePositive,
    /// A known-labeled false positive that covers an unknown ground-truth
    /// box (index given): an open-set error.
    OpenSetError {
        gt: usize,
    },
    /// The detection does not belong to the pool.
    IgnoredWrongPool,
}

impl MatchOutcome {
    pub fn is_tp(&self) -> bool {
        matches!(self, MatchOutcome::TruePositive { .. })
    }
}

/// A ground-truth box with its class, as seen by the matcher.
#[derive(Debug, Clone)]
pub struct GtBox {
    pub bbox: BoundingBox,
    pub class_id: ClassId,
    pub is_unknown: bool,
}

/// Match the detections of one image against its ground truth for one
/// pool at one IoU threshold. Returns one outcome per input detection,
/// in input order; detections outside the pool get `IgnoredWrongPool`.
pub fn match_image(
    dets: &[Detection],
    gts: &[GtBox],
    iou_threshold: f64,
    pool: EvalPool,
) -> Vec<MatchOutcome> {
    let in_pool = |d: &Detection| match pool {
        EvalPool::KnownClass(c) => d.label == DetLabel::Known(c),
        EvalPool::UnknownAgnostic => d.label == DetLabel::Unknown,
    };
    let pool_gt: Vec<usize> = gts
        .iter()
        .enumerate()
        .filter(|(_, g)| match pool {
            EvalPool::KnownClass(c) => !g.is_unknown && g.class_id == c,
            EvalPool::UnknownAgnostic => g.is_unknown,
        })
        .map(|(i, _)| i)
        .collect();
    let unknown_gt: Vec<usize> = gts
        .iter()
        .enumerate()
        .filter(|(_, g)| g.is_unknown)
        .map(|(i, _)| i)
        .collect();

    let mut order: Vec<usize> = (0..dets.len()).filter(|&i| in_pool(&dets[i])).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut outcomes = vec![MatchOutcome::IgnoredWrongPool; dets.len()];
    let mut gt_taken = vec![false; gts.len()];
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(f64, usize)> = None;
        for &gi in &pool_gt {
            if gt_taken[gi] {
                continue;
            }
            let ov = det.bbox.iou(&gts[gi].bbox);
            if ov < iou_threshold {
                continue;
            }
            if best.is_none_or(|(best_ov, _)| ov > best_ov) {
                best = Some((ov, gi));
            }
        }
        outcomes[di] = match best {
            Some((_, gi)) => {
                gt_taken[gi] = true;
                MatchOutcome::TruePositive { gt: gi }
            }
            None => {
                // A known-labeled miss that lands on an unknown object is
                // an open-set error; the unknown box is not consumed.
                let hit = match pool {
                    EvalPool::KnownClass(_) => unknown_gt
                        .iter()
                        .find(|&&gi| det.bbox.iou(&gts[gi].bbox) >= iou_threshold)
                        .copied(),
                    EvalPool::UnknownAgnostic => None,
                };
                match hit {
                    Some(gi) => MatchOutcome::OpenSetError { gt: gi },
                    None => MatchOutcome::FalsePositive,
                }
            }
        };
    }
    outcomes
}

/// Matching core used by the evaluation engine: detections arrive as
/// `(score, tie_key)` pairs already restricted to one pool, with a
/// precomputed IoU matrix `iou[det][gt]` against the pool ground truth.
/// Returns for each detection `Some(gt_index)` or `None` (unmatched).
pub(crate) fn greedy_match_pool(
    scores: &[(f64, usize)],
    iou: &[Vec<f64>],
    n_gt: usize,
    iou_threshold: f64,
) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .0
            .partial_cmp(&scores[a].0)
            .unwrap()
            .then(scores[a].1.cmp(&scores[b].1))
    });

    let mut matched = vec![None; scores.len()];
    let mut gt_taken = vec![false; n_gt];
    for &di in &order {
        let mut best: Option<(f64, usize)> = None;
        for (gi, taken) in gt_taken.iter().enumerate() {
            if *taken {
                continue;
            }
            let ov = iou[di][gi];
            if ov < iou_threshold {
                continue;
            }
            if best.is_none_or(|(best_ov, _)| ov > best_ov) {
                best = Some((ov, gi));
            }
        }
        if let Some((_, gi)) = best {
            gt_taken[gi] = true;
            matched[di] = Some(gi);
        }
    }
    matched
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(label: DetLabel, score: f64, coords: [f64; 4]) -> Detection {
        Detection::new(
            "im".into(),
            BoundingBox::new(coords[0], coords[1], coords[2], coords[3]).unwrap(),
            label,
            score,
        )
        .unwrap()
    }

    fn gt(class_id: ClassId, is_unknown: bool, coords: [f64; 4]) -> GtBox {
        GtBox {
            bbox: BoundingBox::new(coords[0], coords[1], coords[2], coords[3]).unwrap(),
            class_id,
            is_unknown,
        }
    }

    const UNIT: [f64; 4] = [0.0, 0.0, 10.0, 10.0];

    #[test]
    fn perfect_match_is_tp() {
        let dets = vec![det(DetLabel::Known(0), 0.9, UNIT)];
        let gts = vec![gt(0, false, UNIT)];
        let out = match_image(&dets, &gts, 0.5, EvalPool::KnownClass(0));
        assert_eq!(out, vec![MatchOutcome::TruePositive { gt: 0 }]);
    }

    #[test]
    fn single_assignment_rule() {
        let dets = vec![
            det(DetLabel::Known(0), 0.9, UNIT),
            det(DetLabel::Known(0), 0.8, UNIT),
        ];
        let gts = vec![gt(0, false, UNIT)];
        let out = match_image(&dets, &gts, 0.5, EvalPool::KnownClass(0));
        assert_eq!(
            out,
            vec![
                MatchOutcome::TruePositive { gt: 0 },
                MatchOutcome::FalsePositive
            ]
        );
    }

    #[test]
    fn iou_below_threshold_is_fp() {
        // IoU = 45/155 with the unit box: below 0.5
        let dets = vec![det(DetLabel::Known(0), 0.9, [0.0, 0.0, 9.0, 5.0])];
        let gts = vec![gt(0, false, UNIT)];
        let out = match_image(&dets, &gts, 0.5, EvalPool::KnownClass(0));
        assert_eq!(out, vec![MatchOutcome::FalsePositive]);
    }

    #[test]
    fn wrong_pool_detections_are_ignored() {
        let dets = vec![
            det(DetLabel::Known(0), 0.9, UNIT),
            det(DetLabel::Known(1), 0.9, UNIT),
            det(DetLabel::Unknown, 0.9, UNIT),
        ];
        let gts = vec![gt(0, false, UNIT)];
        let out = match_image(&dets, &gts, 0.5, EvalPool::KnownClass(0));
        assert_eq!(out[1], MatchOutcome::IgnoredWrongPool);
        assert_eq!(out[2], MatchOutcome::IgnoredWrongPool);
    }

    #[test]
    fn known_miss_on_unknown_gt_is_open_set_error() {
        let dets = vec![det(DetLabel::Known(0), 0.9, UNIT)];
        let gts = vec![gt(3, true, UNIT)];
        let out = match_image(&dets, &gts, 0.5, EvalPool::KnownClass(0));
        assert_eq!(out, vec![MatchOutcome::OpenSetError { gt: 0 }]);
    }

    #[test]
    fn tp_takes_precedence_over_open_set_error() {
        let dets = vec![det(DetLabel::Known(0), 0.9, UNIT)];
        let gts = vec![gt(0, false, UNIT), gt(3, true, UNIT)];
        let out = match_image(&dets, &gts, 0.5, EvalPool::KnownClass(0));
        assert_eq!(out, vec![MatchOutcome::TruePositive { gt: 0 }]);
    }

    #[test]
    fn unknown_pool_never_reports_open_set_errors() {
        let dets = vec![det(DetLabel::Unknown, 0.9, UNIT)];
        let gts = vec![gt(0, false, UNIT)];
        let out = match_image(&dets, &gts, 0.5, EvalPool::UnknownAgnostic);
        assert_eq!(out, vec![MatchOutcome::FalsePositive]);
    }

    #[test]
    fn greedy_prefers_highest_iou_then_lowest_gt_index() {
        let dets = vec![det(DetLabel::Known(0), 0.9, UNIT)];
        let gts = vec![
            gt(0, false, [0.0, 0.0, 10.0, 8.0]),
            gt(0, false, UNIT),
            gt(0, false, UNIT),
        ];
        let out = match_image(&dets, &gts, 0.5, EvalPool::KnownClass(0));
        // exact overlap (index 1) beats the partial one (index 0); the
        // equal-IoU duplicate at index 2 loses the tie
        assert_eq!(out, vec![MatchOutcome::TruePositive { gt: 1 }]);
    }

    #[test]
    fn score_ties_break_by_input_index() {
        let dets = vec![
            det(DetLabel::Known(0), 0.7, UNIT),
            det(DetLabel::Known(0), 0.7, UNIT),
        ];
        let gts = vec![gt(0, false, UNIT)];
        let out = match_image(&dets, &gts, 0.5, EvalPool::KnownClass(0));
        assert_eq!(
            out,
            vec![
                MatchOutcome::TruePositive { gt: 0 },
                MatchOutcome::FalsePositive
            ]
        );
    }
}
