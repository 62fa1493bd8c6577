//! Ground-truth data model: taxonomy, images, annotated instances.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Diagnostic, Error, Result};
use crate::geometry::BoundingBox;
use crate::splits::SplitSpec;

/// Image identifier as it appears in annotation files.
pub type ImageId = String;

/// Dense internal class identifier. Files always reference class names;
/// ids are assigned from the taxonomy's declaration order.
pub type ClassId = usize;

/// A closed set of object classes under one super-class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTaxonomy {
    super_class: String,
    class_names: Vec<String>,
    by_name: HashMap<String, ClassId>,
}

impl ClassTaxonomy {
    pub fn new(super_class: impl Into<String>, class_names: Vec<String>) -> Result<Self> {
        let super_class = super_class.into();
        if class_names.is_empty() {
            return Err(Error::Schema("taxonomy has no classes".into()));
        }
        let mut by_name = HashMap::with_capacity(class_names.len());
        for (id, name) in class_names.iter().enumerate() {
            if by_name.insert(name.clone(), id).is_some() {
                return Err(Error::Schema(format!("duplicate class name '{name}'")));
            }
        }
        Ok(ClassTaxonomy {
            super_class,
            class_names,
            by_name,
        })
    }

    pub fn super_class(&self) -> &str {
        &self.super_class
    }

    pub fn len(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_names.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.by_name.get(name).copied()
    }

    pub fn name_of(&self, id: ClassId) -> Option<&str> {
        self.class_names.get(id).map(String::as_str)
    }

    pub fn contains_id(&self, id: ClassId) -> bool {
        id < self.class_names.len()
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> {
        0..self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }
}

/// Image metadata; pixel data is out of scope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: ImageId,
    pub width: u32,
    pub height: u32,
}

/// One annotated ground-truth box.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub image_id: ImageId,
    pub bbox: BoundingBox,
    pub class_id: ClassId,
}

/// Which subset of a split an image belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
    Test,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Train, Subset::Val, Subset::Test];

    pub fn name(&self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
        }
    }
}

/// A parsed dataset: taxonomy, images, instances, and (after
/// `apply_split`) the split that partitions it.
///
/// Immutable after construction; cheap to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetView {
    taxonomy: ClassTaxonomy,
    images: Vec<ImageInfo>,
    instances: Vec<GroundTruthInstance>,
    split: Option<SplitSpec>,
}

impl DatasetView {
    /// Build a view, rejecting any `error`-severity diagnostic.
    pub fn new(
        taxonomy: ClassTaxonomy,
        images: Vec<ImageInfo>,
        instances: Vec<GroundTruthInstance>,
    ) -> Result<Self> {
        let diagnostics = validate_parts(&taxonomy, &images, &instances);
        if let Some(first) = diagnostics.iter().find(|d| d.is_error()) {
            return Err(Error::Schema(first.message.clone()));
        }
        Ok(DatasetView {
            taxonomy,
            images,
            instances,
            split: None,
        })
    }

    pub(crate) fn with_parts(
        taxonomy: ClassTaxonomy,
        images: Vec<ImageInfo>,
        instances: Vec<GroundTruthInstance>,
        split: Option<SplitSpec>,
    ) -> Self {
        DatasetView {
            taxonomy,
            images,
            instances,
            split,
        }
    }

    pub fn taxonomy(&self) -> &ClassTaxonomy {
        &self.taxonomy
    }

    pub fn images(&self) -> &[ImageInfo] {
        &self.images
    }

    pub fn instances(&self) -> &[GroundTruthInstance] {
        &self.instances
    }

    pub fn split(&self) -> Option<&SplitSpec> {
        self.split.as_ref()
    }

    pub fn image(&self, id: &str) -> Option<&ImageInfo> {
        self.images.iter().find(|im| im.id == id)
    }

    /// Class ids present in each image, deduplicated.
    pub fn classes_by_image(&self) -> HashMap<&str, HashSet<ClassId>> {
        let mut map: HashMap<&str, HashSet<ClassId>> = HashMap::new();
        for inst in &self.instances {
            map.entry(inst.image_id.as_str())
                .or_default()
                .insert(inst.class_id);
        }
        map
    }

    /// Image ids of one subset. Empty when no split has been applied.
    pub fn subset_image_ids(&self, subset: Subset) -> &[ImageId] {
        match &self.split {
            None => &[],
            Some(s) => s.subset_images(subset),
        }
    }

    /// Instances whose image belongs to `subset`.
    pub fn subset_instances(&self, subset: Subset) -> Vec<&GroundTruthInstance> {
        let ids: HashSet<&str> = self
            .subset_image_ids(subset)
            .iter()
            .map(String::as_str)
            .collect();
        self.instances
            .iter()
            .filter(|inst| ids.contains(inst.image_id.as_str()))
            .collect()
    }

    /// Run all invariant checks, returning every finding.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = validate_parts(&self.taxonomy, &self.images, &self.instances);
        if let Some(split) = &self.split {
            out.extend(split.validate_against(&self.taxonomy));
            // Post-split purity: train annotations must be known-class only.
            let known = split.known_classes();
            for inst in self.subset_instances(Subset::Train) {
                if !known.contains(&inst.class_id) {
                    out.push(Diagnostic::error(format!(
                        "train image '{}' carries non-known class id {}",
                        inst.image_id, inst.class_id
                    )));
                }
            }
        }
        out
    }
}

/// Invariant checks over raw parts, usable before a `DatasetView` exists.
pub fn validate_parts(
    taxonomy: &ClassTaxonomy,
    images: &[ImageInfo],
    instances: &[GroundTruthInstance],
) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut dims: HashMap<&str, (u32, u32)> = HashMap::with_capacity(images.len());
    for im in images {
        if dims.insert(im.id.as_str(), (im.width, im.height)).is_some() {
            out.push(Diagnostic::error(format!("duplicate image id '{}'", im.id)));
        }
    }

    for (idx, inst) in instances.iter().enumerate() {
        if !taxonomy.contains_id(inst.class_id) {
            out.push(Diagnostic::error(format!(
                "annotation #{idx}: class id {} not in taxonomy",
                inst.class_id
            )));
        }
        match dims.get(inst.image_id.as_str()) {
            None => out.push(Diagnostic::error(format!(
                "annotation #{idx}: unknown image id '{}'",
                inst.image_id
            ))),
            Some(&(w, h)) => {
                // Annotations in the wild overflow image bounds; warn only.
                let b = &inst.bbox;
                if b.x_min() < 0.0
                    || b.y_min() < 0.0
                    || b.x_max() > w as f64
                    || b.y_max() > h as f64
                {
                    out.push(Diagnostic::warning(format!(
                        "annotation #{idx}: box {:?} exceeds image '{}' bounds {}x{}",
                        b.as_array(),
                        inst.image_id,
                        w,
                        h
                    )));
                }
            }
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_taxonomy() -> ClassTaxonomy {
        ClassTaxonomy::new("Animal", vec!["cat".into(), "dog".into()]).unwrap()
    }

    fn img(id: &str) -> ImageInfo {
        ImageInfo {
            id: id.into(),
            width: 100,
            height: 100,
        }
    }

    fn inst(image: &str, class_id: ClassId, coords: [f64; 4]) -> GroundTruthInstance {
        GroundTruthInstance {
            image_id: image.into(),
            bbox: BoundingBox::new(coords[0], coords[1], coords[2], coords[3]).unwrap(),
            class_id,
        }
    }

    #[test]
    fn taxonomy_assigns_dense_ids() {
        let t = toy_taxonomy();
        assert_eq!(t.id_of("cat"), Some(0));
        assert_eq!(t.id_of("dog"), Some(1));
        assert_eq!(t.name_of(1), Some("dog"));
        assert_eq!(t.id_of("bird"), None);
    }

    #[test]
    fn taxonomy_rejects_duplicates_and_empty() {
        assert!(ClassTaxonomy::new("x", vec![]).is_err());
        assert!(ClassTaxonomy::new("x", vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn valid_view_has_no_diagnostics() {
        let view = DatasetView::new(
            toy_taxonomy(),
            vec![img("a"), img("b")],
            vec![inst("a", 0, [0.0, 0.0, 10.0, 10.0])],
        )
        .unwrap();
        assert!(view.validate().is_empty());
    }

    #[test]
    fn duplicate_image_id_is_one_error() {
        let diags = validate_parts(&toy_taxonomy(), &[img("a"), img("a")], &[]);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].is_error());
    }

    #[test]
    fn out_of_bounds_box_is_warning_not_error() {
        let diags = validate_parts(
            &toy_taxonomy(),
            &[img("a")],
            &[inst("a", 0, [0.0, 0.0, 150.0, 50.0])],
        );
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, crate::error::Severity::Warning);

        // ...and does not block construction.
        let view = DatasetView::new(
            toy_taxonomy(),
            vec![img("a")],
            vec![inst("a", 0, [0.0, 0.0, 150.0, 50.0])],
        );
        assert!(view.is_ok());
    }

    #[test]
    fn unknown_image_reference_is_error() {
        let view = DatasetView::new(
            toy_taxonomy(),
            vec![img("a")],
            vec![inst("missing", 0, [0.0, 0.0, 10.0, 10.0])],
        );
        assert!(view.is_err());
    }
}
