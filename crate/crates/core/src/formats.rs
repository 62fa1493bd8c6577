//! File formats: native ground truth, COCO import, detection files, and
//! split-spec documents. All formats are UTF-8 JSON.
//!
//! Native ground truth:
//!
//! ```json
//! {
//!   "taxonomy": { "super_class": "Animal", "classes": ["cat", "dog"] },
//!   "images": [ { "id": "im1", "width": 640, "height": 480 } ],
//!   "annotations": [
//!     { "image_id": "im1", "class": "cat", "box": [10.0, 20.0, 110.0, 220.0] }
//!   ]
//! }
//! ```
//!
//! Boxes are `[x_min, y_min, x_max, y_max]` in pixels, continuous-area
//! convention. Annotations may carry `"group_of": true` or
//! `"crowd": true`; such records are dropped at parse with a warning.
//!
//! Detections (`kind` selects which record shape is required):
//!
//! ```json
//! { "detections": [
//!   { "image_id": "im1", "box": [..], "label": "unknown", "score": 0.42 },
//!   { "image_id": "im1", "box": [..], "scores": [0.1, 0.7],
//!     "value_kind": "logits", "head_kind": "softmax" }
//! ] }
//! ```
//!
//! Raw score vectors have one entry per known class, ordered as in the
//! split's known-class list (ascending taxonomy id). `value_kind`
//! defaults to `probabilities` and `head_kind` to `softmax`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassTaxonomy, DatasetView, GroundTruthInstance, ImageInfo};
use crate::detections::{DetLabel, Detection, HeadKind, KnownClasses, RawPrediction, ValueKind};
use crate::error::{Diagnostic, Error, Result};
use crate::geometry::BoundingBox;
use crate::splits::{SplitProvenance, SplitSpec};

/// Ground-truth document formats accepted by [`parse_ground_truth`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundTruthFormat {
    Native,
    CocoLike,
}

/// Detection document kinds accepted by [`parse_detections`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionsKind {
    Labeled,
    Raw,
}

/// Parse output plus non-fatal findings (dropped crowd boxes, overflowing
/// boxes, ...).
#[derive(Debug)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<Diagnostic>,
}

fn json_err(e: &serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

// ---------------------------------------------------------------------------
// native ground truth

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeDoc {
    taxonomy: NativeTaxonomy,
    images: Vec<ImageInfo>,
    annotations: Vec<NativeAnnotation>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeTaxonomy {
    super_class: String,
    classes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeAnnotation {
    image_id: String,
    class: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "is_false")]
    group_of: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    crowd: bool,
}

fn is_false(b: &bool) -> bool {
    !b
}

/// Parse a ground-truth document into a validated [`DatasetView`].
/// Instance order follows document order.
pub fn parse_ground_truth(source: &[u8], format: GroundTruthFormat) -> Result<Parsed<DatasetView>> {
    match format {
        GroundTruthFormat::Native => parse_native(source),
        GroundTruthFormat::CocoLike => parse_coco(source),
    }
}

fn parse_native(source: &[u8]) -> Result<Parsed<DatasetView>> {
    let doc: NativeDoc = serde_json::from_slice(source).map_err(|e| json_err(&e))?;
    let taxonomy = ClassTaxonomy::new(doc.taxonomy.super_class, doc.taxonomy.classes)?;

    let mut warnings = Vec::new();
    let mut instances = Vec::with_capacity(doc.annotations.len());
    for (idx, ann) in doc.annotations.into_iter().enumerate() {
        if ann.group_of || ann.crowd {
            warnings.push(Diagnostic::warning(format!(
                "annotation #{idx} on image '{}' dropped: flagged {}",
                ann.image_id,
                if ann.group_of { "group-of" } else { "crowd" }
            )));
            continue;
        }
        let class_id = taxonomy.id_of(&ann.class).ok_or_else(|| {
            Error::Schema(format!(
                "annotation #{idx}: unknown class name '{}'",
                ann.class
            ))
        })?;
        let bbox = BoundingBox::try_from(ann.bbox)
            .map_err(|e| Error::Schema(format!("annotation #{idx}: {e}")))?;
        instances.push(GroundTruthInstance {
            image_id: ann.image_id,
            bbox,
            class_id,
        });
    }

    let view = DatasetView::new(taxonomy, doc.images, instances)?;
    warnings.extend(view.validate().into_iter().filter(|d| !d.is_error()));
    Ok(Parsed {
        value: view,
        warnings,
    })
}

/// Serialize a view to the native format. `parse(serialize(v)) == v`
/// field for field.
pub fn serialize_ground_truth(view: &DatasetView) -> String {
    let doc = NativeDoc {
        taxonomy: NativeTaxonomy {
            super_class: view.taxonomy().super_class().to_string(),
            classes: view.taxonomy().class_names().to_vec(),
        },
        images: view.images().to_vec(),
        annotations: view
            .instances()
            .iter()
            .map(|inst| NativeAnnotation {
                image_id: inst.image_id.clone(),
                class: view
                    .taxonomy()
                    .name_of(inst.class_id)
                    .expect("instance class ids are validated")
                    .to_string(),
                bbox: inst.bbox.as_array(),
                group_of: false,
                crowd: false,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("native doc serializes");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// COCO-like import

#[derive(Debug, Deserialize)]
struct CocoDoc {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Deserialize)]
struct CocoImage {
    id: i64,
    width: u32,
    height: u32,
}

#[derive(Debug, Deserialize)]
struct CocoAnnotation {
    #[serde(default)]
    id: Option<i64>,
    image_id: i64,
    category_id: i64,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Debug, Deserialize)]
struct CocoCategory {
    id: i64,
    name: String,
    #[serde(default)]
    supercategory: Option<String>,
}

fn parse_coco(source: &[u8]) -> Result<Parsed<DatasetView>> {
    let doc: CocoDoc = serde_json::from_slice(source).map_err(|e| json_err(&e))?;

    // Dense class ids follow the categories array's declaration order.
    let mut cat_to_class: BTreeMap<i64, usize> = BTreeMap::new();
    let mut names = Vec::with_capacity(doc.categories.len());
    for (pos, cat) in doc.categories.iter().enumerate() {
        if cat_to_class.insert(cat.id, pos).is_some() {
            return Err(Error::Schema(format!(
                "duplicate COCO category id {}",
                cat.id
            )));
        }
        names.push(cat.name.clone());
    }
    let supers: Vec<&str> = doc
        .categories
        .iter()
        .filter_map(|c| c.supercategory.as_deref())
        .collect();
    let super_class = match supers.first() {
        Some(&first)
            if supers.len() == doc.categories.len() && supers.iter().all(|&s| s == first) =>
        {
            first.to_string()
        }
        _ => "dataset".to_string(),
    };
    let taxonomy = ClassTaxonomy::new(super_class, names)?;

    let images: Vec<ImageInfo> = doc
        .images
        .iter()
        .map(|im| ImageInfo {
            id: im.id.to_string(),
            width: im.width,
            height: im.height,
        })
        .collect();

    let mut warnings = Vec::new();
    let mut instances = Vec::with_capacity(doc.annotations.len());
    for (idx, ann) in doc.annotations.iter().enumerate() {
        let label = ann
            .id
            .map(|id| format!("annotation id {id}"))
            .unwrap_or_else(|| format!("annotation #{idx}"));
        if ann.iscrowd != 0 {
            warnings.push(Diagnostic::warning(format!("{label} dropped: iscrowd")));
            continue;
        }
        let &class_id = cat_to_class.get(&ann.category_id).ok_or_else(|| {
            Error::Schema(format!("{label}: unknown category id {}", ann.category_id))
        })?;
        let [x, y, w, h] = ann.bbox;
        let bbox = BoundingBox::new(x, y, x + w, y + h)
            .map_err(|e| Error::Schema(format!("{label}: {e}")))?;
        instances.push(GroundTruthInstance {
            image_id: ann.image_id.to_string(),
            bbox,
            class_id,
        });
    }

    let view = DatasetView::new(taxonomy, images, instances)?;
    warnings.extend(view.validate().into_iter().filter(|d| !d.is_error()));
    Ok(Parsed {
        value: view,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// detections

#[derive(Debug, Serialize, Deserialize)]
struct DetectionsDoc {
    detections: Vec<DetectionRecord>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    image_id: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value_kind: Option<ValueKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head_kind: Option<HeadKind>,
}

/// Result of parsing a detections file with [`parse_detections`].
#[derive(Debug)]
pub enum ParsedDetections {
    Labeled(Vec<Detection>),
    Raw(Vec<RawPrediction>),
}

/// Parse a detections document against a known-class universe.
pub fn parse_detections(
    source: &[u8],
    kind: DetectionsKind,
    known: &KnownClasses,
) -> Result<ParsedDetections> {
    let doc: DetectionsDoc = serde_json::from_slice(source).map_err(|e| json_err(&e))?;
    match kind {
        DetectionsKind::Labeled => {
            let mut out = Vec::with_capacity(doc.detections.len());
            for (idx, rec) in doc.detections.into_iter().enumerate() {
                out.push(labeled_from_record(rec, known).map_err(|e| rec_err(idx, e))?);
            }
            Ok(ParsedDetections::Labeled(out))
        }
        DetectionsKind::Raw => {
            let mut out = Vec::with_capacity(doc.detections.len());
            for (idx, rec) in doc.detections.into_iter().enumerate() {
                out.push(raw_from_record(rec, known).map_err(|e| rec_err(idx, e))?);
            }
            Ok(ParsedDetections::Raw(out))
        }
    }
}

fn rec_err(idx: usize, e: Error) -> Error {
    Error::Schema(format!("detection #{idx}: {e}"))
}

fn labeled_from_record(rec: DetectionRecord, known: &KnownClasses) -> Result<Detection> {
    if rec.scores.is_some() {
        return Err(Error::Schema(
            "labeled record must not carry a raw 'scores' vector".into(),
        ));
    }
    let label_str = rec
        .label
        .ok_or_else(|| Error::Schema("labeled record missing 'label'".into()))?;
    let score = rec
        .score
        .ok_or_else(|| Error::Schema("labeled record missing 'score'".into()))?;
    let label = if label_str.eq_ignore_ascii_case("unknown") {
        DetLabel::Unknown
    } else {
        let id = known
            .id_of_name(&label_str)
            .ok_or_else(|| Error::Schema(format!("label '{label_str}' is not a known class")))?;
        DetLabel::Known(id)
    };
    Detection::new(rec.image_id, BoundingBox::try_from(rec.bbox)?, label, score)
}

fn raw_from_record(rec: DetectionRecord, known: &KnownClasses) -> Result<RawPrediction> {
    if rec.label.is_some() {
        return Err(Error::Schema("raw record must not carry a 'label'".into()));
    }
    if rec.score.is_some() {
        return Err(Error::Schema(
            "raw record must not carry a scalar 'score'".into(),
        ));
    }
    let scores = rec
        .scores
        .ok_or_else(|| Error::Schema("raw record missing 'scores'".into()))?;
    RawPrediction::new(
        rec.image_id,
        BoundingBox::try_from(rec.bbox)?,
        scores,
        rec.value_kind.unwrap_or(ValueKind::Probabilities),
        rec.head_kind.unwrap_or(HeadKind::Softmax),
        known.len(),
    )
}

/// Serialize labeled detections; unknown labels render as `"unknown"`.
pub fn serialize_detections(dets: &[Detection], known: &KnownClasses) -> Result<String> {
    let mut records = Vec::with_capacity(dets.len());
    for det in dets {
        let label = match det.label {
            DetLabel::Unknown => "unknown".to_string(),
            DetLabel::Known(id) => known
                .name_of_id(id)
                .ok_or_else(|| {
                    Error::Schema(format!("detection labels class id {id} outside known set"))
                })?
                .to_string(),
        };
        records.push(DetectionRecord {
            image_id: det.image_id.clone(),
            bbox: det.bbox.as_array(),
            label: Some(label),
            score: Some(det.score),
            ..Default::default()
        });
    }
    let mut s = serde_json::to_string_pretty(&DetectionsDoc {
        detections: records,
    })
    .expect("detections doc serializes");
    s.push('\n');
    Ok(s)
}

// ---------------------------------------------------------------------------
// split specs

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitDoc {
    known: Vec<String>,
    unknown: BTreeMap<String, Vec<String>>,
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
    provenance: SplitProvenance,
}

pub fn parse_split_spec(source: &[u8], taxonomy: &ClassTaxonomy) -> Result<SplitSpec> {
    let doc: SplitDoc = serde_json::from_slice(source).map_err(|e| json_err(&e))?;
    let resolve = |names: &[String]| -> Result<std::collections::BTreeSet<usize>> {
        names
            .iter()
            .map(|n| {
                taxonomy
                    .id_of(n)
                    .ok_or_else(|| Error::Schema(format!("split references unknown class '{n}'")))
            })
            .collect()
    };
    let known = resolve(&doc.known)?;
    let mut unknown_sets = BTreeMap::new();
    for (name, names) in &doc.unknown {
        unknown_sets.insert(name.clone(), resolve(names)?);
    }
    SplitSpec::new(
        known,
        unknown_sets,
        doc.train,
        doc.val,
        doc.test,
        doc.provenance,
    )
}

pub fn serialize_split_spec(split: &SplitSpec, taxonomy: &ClassTaxonomy) -> Result<String> {
    let names_of = |ids: &std::collections::BTreeSet<usize>| -> Result<Vec<String>> {
        ids.iter()
            .map(|&id| {
                taxonomy
                    .name_of(id)
                    .map(str::to_string)
                    .ok_or_else(|| Error::Schema(format!("class id {id} not in taxonomy")))
            })
            .collect()
    };
    let mut unknown = BTreeMap::new();
    for (name, set) in split.unknown_sets() {
        unknown.insert(name.clone(), names_of(set)?);
    }
    let doc = SplitDoc {
        known: names_of(split.known_classes())?,
        unknown,
        train: split.subset_images(crate::dataset::Subset::Train).to_vec(),
        val: split.subset_images(crate::dataset::Subset::Val).to_vec(),
        test: split.subset_images(crate::dataset::Subset::Test).to_vec(),
        provenance: split.provenance.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("split doc serializes");
    s.push('\n');
    Ok(s)
}
