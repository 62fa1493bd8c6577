//! Detector-output types, before and after open-set labeling.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, ClassTaxonomy, ImageId};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::splits::SplitSpec;

/// Whether a raw score vector holds logits or probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Logits,
    Probabilities,
}

/// Output-layer design of the detector that produced the scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Softmax,
    Sigmoid,
}

/// The ordered known-class universe a detection file is resolved against.
///
/// Raw score vectors are indexed by position in this list; labeled files
/// reference the names. Built from a split (the usual case) or from a
/// whole taxonomy for closed-set use.
#[derive(Debug, Clone)]
pub struct KnownClasses {
    ids: Vec<ClassId>,
    names: Vec<String>,
    by_name: HashMap<String, usize>,
}

impl KnownClasses {
    pub fn from_split(taxonomy: &ClassTaxonomy, split: &SplitSpec) -> Result<Self> {
        let ids: Vec<ClassId> = split.known_classes().iter().copied().collect();
        Self::from_ids(taxonomy, ids)
    }

    pub fn all(taxonomy: &ClassTaxonomy) -> Self {
        Self::from_ids(taxonomy, taxonomy.class_ids().collect())
            .expect("taxonomy ids are always valid")
    }

    fn from_ids(taxonomy: &ClassTaxonomy, ids: Vec<ClassId>) -> Result<Self> {
        let mut names = Vec::with_capacity(ids.len());
        let mut by_name = HashMap::with_capacity(ids.len());
        for (pos, &id) in ids.iter().enumerate() {
            let name = taxonomy
                .name_of(id)
                .ok_or_else(|| Error::Schema(format!("class id {id} not in taxonomy")))?;
            names.push(name.to_string());
            by_name.insert(name.to_string(), pos);
        }
        Ok(KnownClasses {
            ids,
            names,
            by_name,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ClassId] {
        &self.ids
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Taxonomy class id at score-vector position `pos`.
    pub fn id_at(&self, pos: usize) -> Option<ClassId> {
        self.ids.get(pos).copied()
    }

    pub fn position_of_name(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn id_of_name(&self, name: &str) -> Option<ClassId> {
        self.position_of_name(name).map(|pos| self.ids[pos])
    }

    pub fn name_of_id(&self, id: ClassId) -> Option<&str> {
        self.ids
            .iter()
            .position(|&i| i == id)
            .map(|pos| self.names[pos].as_str())
    }

    pub fn contains_id(&self, id: ClassId) -> bool {
        self.ids.contains(&id)
    }
}

/// A raw per-class prediction, one score per known class.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub image_id: ImageId,
    pub bbox: BoundingBox,
    scores_or_logits: Vec<f64>,
    pub value_kind: ValueKind,
    pub head_kind: HeadKind,
}

/// Tolerance on the softmax probability-sum check; detector exports
/// routinely carry last-digit rounding.
const SOFTMAX_SUM_SLACK: f64 = 1e-6;

impl RawPrediction {
    pub fn new(
        image_id: ImageId,
        bbox: BoundingBox,
        scores_or_logits: Vec<f64>,
        value_kind: ValueKind,
        head_kind: HeadKind,
        expected_len: usize,
    ) -> Result<Self> {
        if scores_or_logits.len() != expected_len {
            return Err(Error::Schema(format!(
                "score vector has {} entries, expected {} (one per known class)",
                scores_or_logits.len(),
                expected_len
            )));
        }
        for (i, &v) in scores_or_logits.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Schema(format!("score[{i}] is not finite: {v}")));
            }
            if value_kind == ValueKind::Probabilities && !(0.0..=1.0).contains(&v) {
                return Err(Error::Schema(format!(
                    "probability score[{i}] = {v} outside [0, 1]"
                )));
            }
        }
        if value_kind == ValueKind::Probabilities && head_kind == HeadKind::Softmax {
            let sum: f64 = scores_or_logits.iter().sum();
            if sum > 1.0 + SOFTMAX_SUM_SLACK {
                return Err(Error::Schema(format!(
                    "softmax probabilities sum to {sum} > 1"
                )));
            }
        }
        Ok(RawPrediction {
            image_id,
            bbox,
            scores_or_logits,
            value_kind,
            head_kind,
        })
    }

    pub fn scores_or_logits(&self) -> &[f64] {
        &self.scores_or_logits
    }

    pub fn num_classes(&self) -> usize {
        self.scores_or_logits.len()
    }
}

/// Open-set label of a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetLabel {
    Known(ClassId),
    Unknown,
}

impl DetLabel {
    pub fn is_unknown(&self) -> bool {
        matches!(self, DetLabel::Unknown)
    }
}

/// A detection after open-set labeling: the unit of evaluation input.
///
/// Known scores are top-1 probabilities in `[0, 1]`; unknown scores come
/// from top-m summation and may exceed 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: ImageId,
    pub bbox: BoundingBox,
    pub label: DetLabel,
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: ImageId, bbox: BoundingBox, label: DetLabel, score: f64) -> Result<Self> {
        if !score.is_finite() || score < 0.0 {
            return Err(Error::Schema(format!(
                "detection score must be finite and >= 0, got {score}"
            )));
        }
        Ok(Detection {
            image_id,
            bbox,
            label,
            score,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox() -> BoundingBox {
        BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn raw_prediction_checks_vector_length() {
        let ok = RawPrediction::new(
            "i".into(),
            bbox(),
            vec![0.1; 24],
            ValueKind::Probabilities,
            HeadKind::Sigmoid,
            24,
        );
        assert!(ok.is_ok());
        let bad = RawPrediction::new(
            "i".into(),
            bbox(),
            vec![0.1; 23],
            ValueKind::Probabilities,
            HeadKind::Sigmoid,
            24,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn probabilities_must_be_in_unit_interval() {
        let bad = RawPrediction::new(
            "i".into(),
            bbox(),
            vec![0.5, 1.2],
            ValueKind::Probabilities,
            HeadKind::Sigmoid,
            2,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn softmax_probabilities_must_sum_to_at_most_one() {
        let bad = RawPrediction::new(
            "i".into(),
            bbox(),
            vec![0.8, 0.8],
            ValueKind::Probabilities,
            HeadKind::Softmax,
            2,
        );
        assert!(bad.is_err());
        // fine for sigmoid heads
        let ok = RawPrediction::new(
            "i".into(),
            bbox(),
            vec![0.8, 0.8],
            ValueKind::Probabilities,
            HeadKind::Sigmoid,
            2,
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn detection_rejects_negative_or_nonfinite_scores() {
        assert!(Detection::new("i".into(), bbox(), DetLabel::Unknown, -0.1).is_err());
        assert!(Detection::new("i".into(), bbox(), DetLabel::Unknown, f64::NAN).is_err());
        assert!(Detection::new("i".into(), bbox(), DetLabel::Unknown, 2.5).is_ok());
    }
}
