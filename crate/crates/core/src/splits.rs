//! Known/unknown class splits and their application to a dataset.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, ClassTaxonomy, DatasetView, ImageId, Subset};
use crate::error::{Diagnostic, Error, Result};

/// How training images that contain unknown-class objects are handled.
///
/// `KeepUnknownTrainImages` keeps the image and strips its non-known
/// annotations (the Open Images rule). `DropUnknownTrainImages` removes
/// the image entirely if it contains any object outside the known set
/// (the CUB200/MTSD rule). Under either protocol a train image must
/// contain at least one known instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitProtocol {
    KeepUnknownTrainImages,
    DropUnknownTrainImages,
}

/// Record of how a split was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SplitProvenance {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ncut_value: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

/// A benchmark definition: which classes are known, which are unknown
/// (possibly several named sets), and the image subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    known_classes: BTreeSet<ClassId>,
    unknown_sets: BTreeMap<String, BTreeSet<ClassId>>,
    train_images: Vec<ImageId>,
    val_images: Vec<ImageId>,
    test_images: Vec<ImageId>,
    pub provenance: SplitProvenance,
}

impl SplitSpec {
    pub fn new(
        known_classes: BTreeSet<ClassId>,
        unknown_sets: BTreeMap<String, BTreeSet<ClassId>>,
        train_images: Vec<ImageId>,
        val_images: Vec<ImageId>,
        test_images: Vec<ImageId>,
        provenance: SplitProvenance,
    ) -> Result<Self> {
        let spec = SplitSpec {
            known_classes,
            unknown_sets,
            train_images,
            val_images,
            test_images,
            provenance,
        };
        spec.check_consistent()?;
        Ok(spec)
    }

    fn check_consistent(&self) -> Result<()> {
        if self.known_classes.is_empty() {
            return Err(Error::Config("split has an empty known-class set".into()));
        }
        for (name, set) in &self.unknown_sets {
            if set.is_empty() {
                return Err(Error::Config(format!("unknown set '{name}' is empty")));
            }
            if let Some(id) = set.intersection(&self.known_classes).next() {
                return Err(Error::Config(format!(
                    "class id {id} is both known and in unknown set '{name}'"
                )));
            }
        }
        let mut seen: HashSet<&str> = HashSet::new();
        for subset in Subset::ALL {
            for id in self.subset_images(subset) {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Config(format!(
                        "image '{id}' appears in more than one subset"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn known_classes(&self) -> &BTreeSet<ClassId> {
        &self.known_classes
    }

    /// Named unknown sets; most splits carry one, the MTSD-style union
    /// split carries several.
    pub fn unknown_sets(&self) -> &BTreeMap<String, BTreeSet<ClassId>> {
        &self.unknown_sets
    }

    /// Union of all named unknown sets.
    pub fn unknown_classes(&self) -> BTreeSet<ClassId> {
        self.unknown_sets.values().flatten().copied().collect()
    }

    pub fn subset_images(&self, subset: Subset) -> &[ImageId] {
        match subset {
            Subset::Train => &self.train_images,
            Subset::Val => &self.val_images,
            Subset::Test => &self.test_images,
        }
    }

    /// Checks against a taxonomy, returning diagnostics instead of failing.
    pub fn validate_against(&self, taxonomy: &ClassTaxonomy) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for &id in self
            .known_classes
            .iter()
            .chain(self.unknown_sets.values().flatten())
        {
            if !taxonomy.contains_id(id) {
                out.push(Diagnostic::error(format!(
                    "split references class id {id} outside the taxonomy"
                )));
            }
        }
        out
    }
}

impl DatasetView {
    /// Restrict the dataset to a split.
    ///
    /// Train images keep only known-class annotations and must contain at
    /// least one; under [`SplitProtocol::DropUnknownTrainImages`] an image
    /// with any instance outside the known set is removed entirely.
    /// Val/test images keep known- and unknown-class annotations and drop
    /// everything else. Annotations of images in no subset are dropped;
    /// image metadata stays, which makes the operation idempotent.
    pub fn apply_split(&self, split: &SplitSpec, protocol: SplitProtocol) -> Result<DatasetView> {
        let taxonomy = self.taxonomy().clone();
        for d in split.validate_against(&taxonomy) {
            if d.is_error() {
                return Err(Error::Config(d.message));
            }
        }

        let known = split.known_classes().clone();
        let unknown = split.unknown_classes();
        let eval_classes: BTreeSet<ClassId> = known.union(&unknown).copied().collect();

        let image_ids: HashSet<&str> = self.images().iter().map(|im| im.id.as_str()).collect();
        for subset in Subset::ALL {
            for id in split.subset_images(subset) {
                if !image_ids.contains(id.as_str()) {
                    return Err(Error::Config(format!(
                        "split {} subset references image '{id}' absent from the dataset",
                        subset.name()
                    )));
                }
            }
        }

        let classes_by_image = self.classes_by_image();
        let has_known = |id: &str| {
            classes_by_image
                .get(id)
                .is_some_and(|cs| cs.iter().any(|c| known.contains(c)))
        };
        let all_known = |id: &str| {
            classes_by_image
                .get(id)
                .is_none_or(|cs| cs.iter().all(|c| known.contains(c)))
        };

        let keep_train = |id: &ImageId| {
            has_known(id)
                && match protocol {
                    SplitProtocol::KeepUnknownTrainImages => true,
                    SplitProtocol::DropUnknownTrainImages => all_known(id),
                }
        };
        let train: Vec<ImageId> = split
            .subset_images(Subset::Train)
            .iter()
            .filter(|id| keep_train(id))
            .cloned()
            .collect();
        if train.is_empty() {
            return Err(Error::Config("split produces an empty training set".into()));
        }

        let filtered = SplitSpec::new(
            known.clone(),
            split.unknown_sets().clone(),
            train,
            split.subset_images(Subset::Val).to_vec(),
            split.subset_images(Subset::Test).to_vec(),
            split.provenance.clone(),
        )?;

        let train_set: HashSet<&str> = filtered
            .subset_images(Subset::Train)
            .iter()
            .map(String::as_str)
            .collect();
        let eval_set: HashSet<&str> = filtered
            .subset_images(Subset::Val)
            .iter()
            .chain(filtered.subset_images(Subset::Test))
            .map(String::as_str)
            .collect();

        let instances = self
            .instances()
            .iter()
            .filter(|inst| {
                let id = inst.image_id.as_str();
                if train_set.contains(id) {
                    known.contains(&inst.class_id)
                } else if eval_set.contains(id) {
                    eval_classes.contains(&inst.class_id)
                } else {
                    false
                }
            })
            .cloned()
            .collect();

        Ok(DatasetView::with_parts(
            taxonomy,
            self.images().to_vec(),
            instances,
            Some(filtered),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{GroundTruthInstance, ImageInfo};
    use crate::geometry::BoundingBox;

    fn taxonomy() -> ClassTaxonomy {
        ClassTaxonomy::new(
            "Animal",
            vec!["cat".into(), "dog".into(), "bird".into(), "fish".into()],
        )
        .unwrap()
    }

    fn img(id: &str) -> ImageInfo {
        ImageInfo {
            id: id.into(),
            width: 100,
            height: 100,
        }
    }

    fn inst(image: &str, class_id: ClassId) -> GroundTruthInstance {
        GroundTruthInstance {
            image_id: image.into(),
            bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            class_id,
        }
    }

    fn split(train: &[&str], test: &[&str]) -> SplitSpec {
        SplitSpec::new(
            BTreeSet::from([0]),
            BTreeMap::from([("unknown".to_string(), BTreeSet::from([1]))]),
            train.iter().map(|s| s.to_string()).collect(),
            vec![],
            test.iter().map(|s| s.to_string()).collect(),
            SplitProvenance::default(),
        )
        .unwrap()
    }

    // mixed: one known (cat) + one unknown (dog) box
    fn mixed_view() -> DatasetView {
        DatasetView::new(
            taxonomy(),
            vec![img("mixed"), img("pure"), img("unk_only")],
            vec![
                inst("mixed", 0),
                inst("mixed", 1),
                inst("pure", 0),
                inst("unk_only", 1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn keep_protocol_keeps_mixed_image_with_known_annotation_only() {
        let view = mixed_view();
        let s = split(&["mixed", "pure", "unk_only"], &[]);
        let out = view
            .apply_split(&s, SplitProtocol::KeepUnknownTrainImages)
            .unwrap();
        let train_imgs = out.subset_image_ids(Subset::Train);
        assert_eq!(train_imgs, &["mixed".to_string(), "pure".to_string()]);
        let mixed_insts: Vec<_> = out
            .instances()
            .iter()
            .filter(|i| i.image_id == "mixed")
            .collect();
        assert_eq!(mixed_insts.len(), 1);
        assert_eq!(mixed_insts[0].class_id, 0);
    }

    #[test]
    fn drop_protocol_removes_mixed_image() {
        let view = mixed_view();
        let s = split(&["mixed", "pure", "unk_only"], &[]);
        let out = view
            .apply_split(&s, SplitProtocol::DropUnknownTrainImages)
            .unwrap();
        assert_eq!(out.subset_image_ids(Subset::Train), &["pure".to_string()]);
    }

    #[test]
    fn unknown_only_image_excluded_from_train_but_eligible_for_test() {
        let view = mixed_view();
        let s = split(&["pure", "unk_only"], &["mixed"]);
        for protocol in [
            SplitProtocol::KeepUnknownTrainImages,
            SplitProtocol::DropUnknownTrainImages,
        ] {
            let out = view.apply_split(&s, protocol).unwrap();
            assert_eq!(out.subset_image_ids(Subset::Train), &["pure".to_string()]);
            assert_eq!(out.subset_image_ids(Subset::Test), &["mixed".to_string()]);
            // test keeps both known and unknown annotations
            let test_insts = out.subset_instances(Subset::Test);
            assert_eq!(test_insts.len(), 2);
        }
    }

    #[test]
    fn test_subset_drops_out_of_split_classes() {
        let view = DatasetView::new(
            taxonomy(),
            vec![img("a"), img("b")],
            vec![inst("a", 0), inst("b", 0), inst("b", 2), inst("b", 3)],
        )
        .unwrap();
        let s = split(&["a"], &["b"]);
        let out = view
            .apply_split(&s, SplitProtocol::KeepUnknownTrainImages)
            .unwrap();
        // classes 2 (bird) and 3 (fish) are in neither set: dropped
        let test_insts = out.subset_instances(Subset::Test);
        assert_eq!(test_insts.len(), 1);
        assert_eq!(test_insts[0].class_id, 0);
    }

    #[test]
    fn apply_split_is_idempotent() {
        let view = mixed_view();
        let s = split(&["mixed", "pure"], &["unk_only"]);
        let once = view
            .apply_split(&s, SplitProtocol::KeepUnknownTrainImages)
            .unwrap();
        let twice = once
            .apply_split(&s, SplitProtocol::KeepUnknownTrainImages)
            .unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn empty_train_set_is_config_error() {
        let view = mixed_view();
        let s = split(&["unk_only"], &[]);
        let err = view
            .apply_split(&s, SplitProtocol::KeepUnknownTrainImages)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn overlapping_known_unknown_rejected() {
        let r = SplitSpec::new(
            BTreeSet::from([0, 1]),
            BTreeMap::from([("u".to_string(), BTreeSet::from([1]))]),
            vec![],
            vec![],
            vec![],
            SplitProvenance::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn subsets_must_be_disjoint() {
        let r = SplitSpec::new(
            BTreeSet::from([0]),
            BTreeMap::new(),
            vec!["a".into()],
            vec!["a".into()],
            vec![],
            SplitProvenance::default(),
        );
        assert!(r.is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        prop_compose! {
            // images hold random class subsets; image 0 always holds a
            // known class so the train set cannot come out empty
            fn arb_case()(
                memberships in proptest::collection::vec(
                    proptest::collection::btree_set(0usize..4, 1..4), 2..10),
                protocol in prop_oneof![
                    Just(SplitProtocol::KeepUnknownTrainImages),
                    Just(SplitProtocol::DropUnknownTrainImages),
                ],
            ) -> (DatasetView, SplitSpec, SplitProtocol) {
                let mut memberships = memberships;
                memberships[0].insert(0);
                let images: Vec<ImageInfo> = (0..memberships.len())
                    .map(|i| ImageInfo { id: format!("im{i}"), width: 100, height: 100 })
                    .collect();
                let mut instances = Vec::new();
                for (i, classes) in memberships.iter().enumerate() {
                    for &c in classes {
                        instances.push(inst(&format!("im{i}"), c));
                    }
                }
                let view = DatasetView::new(taxonomy(), images, instances).unwrap();
                // train gets the first two thirds, test the rest; image 0
                // stays in train under either protocol only if pure, so
                // force-drop protocol cases may still empty the train set;
                // the property skips those
                let n = memberships.len();
                let train: Vec<String> = (0..n * 2 / 3 + 1).map(|i| format!("im{i}")).collect();
                let test: Vec<String> = (n * 2 / 3 + 1..n).map(|i| format!("im{i}")).collect();
                let split = SplitSpec::new(
                    BTreeSet::from([0]),
                    BTreeMap::from([("unknown".to_string(), BTreeSet::from([1]))]),
                    train,
                    vec![],
                    test,
                    SplitProvenance::default(),
                ).unwrap();
                (view, split, protocol)
            }
        }

        proptest! {
            #[test]
            fn apply_split_purity_and_idempotence(
                (view, split, protocol) in arb_case(),
            ) {
                let Ok(once) = view.apply_split(&split, protocol) else {
                    // an empty train set is a legitimate configuration error
                    return Ok(());
                };
                // class purity: train annotations are known-class only
                for inst in once.subset_instances(Subset::Train) {
                    prop_assert!(split.known_classes().contains(&inst.class_id));
                }
                // eval subsets carry only known or unknown classes
                for inst in once.subset_instances(Subset::Test) {
                    prop_assert!(
                        split.known_classes().contains(&inst.class_id)
                            || split.unknown_classes().contains(&inst.class_id)
                    );
                }
                // idempotence
                let twice = once.apply_split(&split, protocol).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
