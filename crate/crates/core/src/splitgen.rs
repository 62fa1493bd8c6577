//! Split generation: the pinned PRNG, seeded k-way random class splits,
//! image-pool assignment, and `SplitSpec` construction from class sets
//! or normalized-cut clusters.

use std::collections::{BTreeSet, HashSet};

use crate::cooccurrence::Partition;
use crate::dataset::{ClassId, DatasetView, ImageId};
use crate::error::{Error, Result};
use crate::splits::{SplitProtocol, SplitProvenance, SplitSpec};

/// The split-file PRNG: xoshiro256++ seeded through SplitMix64.
///
/// This generator is part of the split file format: a `(seed, inputs)`
/// pair must keep producing byte-identical splits forever, so the
/// algorithm is pinned here rather than borrowed from a library. Bounded
/// draws use plain modulo reduction; the bias is below 2^-50 for every
/// bound this crate uses.
#[derive(Debug, Clone)]
pub struct SplitRng {
    state: [u64; 4],
}

impl SplitRng {
    pub fn from_seed(seed: u64) -> Self {
        // SplitMix64 expansion of the 64-bit seed into the 256-bit state.
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = x;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        SplitRng {
            state: [next(), next(), next(), next()],
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, bound)` by modulo reduction.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        self.next_u64() % bound
    }

    /// Uniform f64 in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fisher–Yates shuffle: `i` runs from `len-1` down to 1 and swaps
    /// with `j = next_below(i + 1)`.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}

/// Configuration of a seeded k-way class split.
#[derive(Debug, Clone)]
pub struct RandomSplitConfig {
    pub k: usize,
    pub seed: u64,
    pub class_ids: Vec<ClassId>,
}

/// Partition `class_ids` into `k` disjoint sets whose sizes differ by at
/// most one. A pure function of `(seed, sorted class ids, k)`.
pub fn random_k_splits(config: &RandomSplitConfig) -> Result<Vec<BTreeSet<ClassId>>> {
    let n = config.class_ids.len();
    if config.k < 2 {
        return Err(Error::Config(format!("k must be >= 2, got {}", config.k)));
    }
    if config.k > n {
        return Err(Error::Config(format!(
            "cannot split {n} classes into {} sets",
            config.k
        )));
    }
    let mut ids: Vec<ClassId> = config.class_ids.clone();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != n {
        return Err(Error::Config("class_ids contains duplicates".into()));
    }

    let mut rng = SplitRng::from_seed(config.seed);
    rng.shuffle(&mut ids);

    // The first n % k chunks take the extra element.
    let base = n / config.k;
    let extra = n % config.k;
    let mut out = Vec::with_capacity(config.k);
    let mut cursor = 0;
    for chunk in 0..config.k {
        let size = base + usize::from(chunk < extra);
        out.push(ids[cursor..cursor + size].iter().copied().collect());
        cursor += size;
    }
    Ok(out)
}

/// Train/val/test image pools that splits are carved from.
///
/// Datasets that ship official subsets can inject them via `from_lists`;
/// otherwise `seeded_ratio` assigns images by a seeded shuffle of the
/// sorted image ids.
#[derive(Debug, Clone)]
pub struct SubsetPools {
    pub train: Vec<ImageId>,
    pub val: Vec<ImageId>,
    pub test: Vec<ImageId>,
}

impl SubsetPools {
    pub fn from_lists(train: Vec<ImageId>, val: Vec<ImageId>, test: Vec<ImageId>) -> Self {
        SubsetPools { train, val, test }
    }

    /// Seeded ratio assignment. `ratios` are (train, val, test) weights
    /// summing to 1; val and test take their floor share, train the rest.
    pub fn seeded_ratio(dataset: &DatasetView, ratios: (f64, f64, f64), seed: u64) -> Result<Self> {
        let (rt, rv, re) = ratios;
        let sum = rt + rv + re;
        if !(rt >= 0.0 && rv >= 0.0 && re >= 0.0 && (sum - 1.0).abs() < 1e-9) {
            return Err(Error::Config(format!(
                "subset ratios must be non-negative and sum to 1, got {ratios:?}"
            )));
        }
        let mut ids: Vec<ImageId> = dataset.images().iter().map(|im| im.id.clone()).collect();
        ids.sort_unstable();
        let mut rng = SplitRng::from_seed(seed);
        rng.shuffle(&mut ids);

        let n = ids.len();
        let n_val = (rv * n as f64).floor() as usize;
        let n_test = (re * n as f64).floor() as usize;
        // shuffled order reads [train..., val..., test...]
        let test = ids.split_off(n - n_test);
        let val = ids.split_off(ids.len() - n_val);
        Ok(SubsetPools {
            train: ids,
            val,
            test,
        })
    }
}

/// Options shared by every spec a [`make_split_specs`] call emits.
#[derive(Debug, Clone)]
pub struct MakeSplitOptions {
    pub protocol: SplitProtocol,
    pub seed: u64,
    pub method: String,
    pub ncut_value: Option<f64>,
    pub notes: Vec<String>,
}

/// Build one `SplitSpec` per unknown set, plus one for their union when
/// several sets are given. Image subsets follow the protocol rules:
/// train/val images need a known instance (train additionally drops
/// images with out-of-set objects under the drop protocol), test images
/// need an instance of any in-universe class.
pub fn make_split_specs(
    dataset: &DatasetView,
    known: &BTreeSet<ClassId>,
    unknowns: &[(String, BTreeSet<ClassId>)],
    pools: &SubsetPools,
    opts: &MakeSplitOptions,
) -> Result<Vec<SplitSpec>> {
    if known.is_empty() {
        return Err(Error::Config("known-class set is empty".into()));
    }
    if unknowns.is_empty() {
        return Err(Error::Config("need at least one unknown set".into()));
    }
    let mut seen: HashSet<ClassId> = known.iter().copied().collect();
    for (name, set) in unknowns {
        if set.is_empty() {
            return Err(Error::Config(format!("unknown set '{name}' is empty")));
        }
        for &id in set {
            if !seen.insert(id) {
                return Err(Error::Config(format!(
                    "class id {id} appears in more than one set"
                )));
            }
        }
    }
    for &id in &seen {
        if !dataset.taxonomy().contains_id(id) {
            return Err(Error::Config(format!("class id {id} not in taxonomy")));
        }
    }

    let classes_by_image = dataset.classes_by_image();
    let has_known = |id: &ImageId| {
        classes_by_image
            .get(id.as_str())
            .is_some_and(|cs| cs.iter().any(|c| known.contains(c)))
    };
    let all_known = |id: &ImageId| {
        classes_by_image
            .get(id.as_str())
            .is_none_or(|cs| cs.iter().all(|c| known.contains(c)))
    };
    let in_universe = |id: &ImageId| {
        classes_by_image
            .get(id.as_str())
            .is_some_and(|cs| cs.iter().any(|c| seen.contains(c)))
    };

    // The train/val/test image lists depend only on the known set and
    // the class universe, so every emitted spec shares them.
    let train: Vec<ImageId> = pools
        .train
        .iter()
        .filter(|id| {
            has_known(id)
                && match opts.protocol {
                    SplitProtocol::KeepUnknownTrainImages => true,
                    SplitProtocol::DropUnknownTrainImages => all_known(id),
                }
        })
        .cloned()
        .collect();
    if train.is_empty() {
        return Err(Error::Config(
            "no candidate training image contains a known instance".into(),
        ));
    }
    let val: Vec<ImageId> = pools
        .val
        .iter()
        .filter(|id| has_known(id))
        .cloned()
        .collect();
    let test: Vec<ImageId> = pools
        .test
        .iter()
        .filter(|id| in_universe(id))
        .cloned()
        .collect();

    let provenance = |extra: Option<String>| {
        let mut notes = opts.notes.clone();
        notes.extend(extra);
        SplitProvenance {
            method: opts.method.clone(),
            seed: Some(opts.seed),
            ncut_value: opts.ncut_value,
            notes,
        }
    };

    let mut specs = Vec::new();
    for (name, set) in unknowns {
        specs.push(SplitSpec::new(
            known.clone(),
            [(name.clone(), set.clone())].into_iter().collect(),
            train.clone(),
            val.clone(),
            test.clone(),
            provenance(None),
        )?);
    }
    if unknowns.len() > 1 {
        specs.push(SplitSpec::new(
            known.clone(),
            unknowns.iter().cloned().collect(),
            train,
            val,
            test,
            provenance(Some(format!("union of {} unknown sets", unknowns.len()))),
        )?);
    }
    Ok(specs)
}

/// Materialize normalized-cut clusters as class-id sets, in cluster
/// order. `class_ids[i]` is the class behind graph vertex `i`.
pub fn clusters_to_class_sets(
    class_ids: &[ClassId],
    partition: &Partition,
) -> Vec<BTreeSet<ClassId>> {
    (0..partition.k())
        .map(|c| {
            partition
                .cluster_members(c)
                .into_iter()
                .map(|v| class_ids[v])
                .collect()
        })
        .collect()
}

/// Pick the known cluster: the largest one, ties broken by the lowest
/// cluster index. Returns `(index, tied)`.
pub fn select_known_cluster(sets: &[BTreeSet<ClassId>]) -> (usize, bool) {
    let mut best = 0;
    for (i, set) in sets.iter().enumerate().skip(1) {
        if set.len() > sets[best].len() {
            best = i;
        }
    }
    let tied = sets
        .iter()
        .enumerate()
        .any(|(i, s)| i != best && s.len() == sets[best].len());
    (best, tied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassTaxonomy, GroundTruthInstance, ImageInfo, Subset};
    use crate::geometry::BoundingBox;

    // Reference values computed with an independent implementation of
    // SplitMix64 + xoshiro256++ from the published algorithm definitions.
    #[test]
    fn prng_matches_reference_stream() {
        let mut r = SplitRng::from_seed(0);
        let got: Vec<u64> = (0..5).map(|_| r.next_u64()).collect();
        assert_eq!(
            got,
            vec![
                0x53175d61490b23df,
                0x61da6f3dc380d507,
                0x5c0fdf91ec9a7bfc,
                0x02eebf8c3bbe5e1a,
                0x7eca04ebaf4a5eea,
            ]
        );

        let mut r = SplitRng::from_seed(42);
        assert_eq!(r.next_u64(), 0xd0764d4f4476689f);
        assert_eq!(r.next_u64(), 0x519e4174576f3791);
    }

    #[test]
    fn shuffle_matches_reference() {
        let mut xs: Vec<usize> = (0..10).collect();
        SplitRng::from_seed(42).shuffle(&mut xs);
        assert_eq!(xs, vec![6, 9, 7, 8, 0, 5, 3, 4, 2, 1]);
    }

    fn cfg(n: usize, k: usize, seed: u64) -> RandomSplitConfig {
        RandomSplitConfig {
            k,
            seed,
            class_ids: (0..n).collect(),
        }
    }

    #[test]
    fn splits_96_classes_into_four_24s() {
        let sets = random_k_splits(&cfg(96, 4, 7)).unwrap();
        assert_eq!(sets.len(), 4);
        assert!(sets.iter().all(|s| s.len() == 24));
    }

    #[test]
    fn splits_200_classes_into_four_50s() {
        let sets = random_k_splits(&cfg(200, 4, 7)).unwrap();
        assert!(sets.iter().all(|s| s.len() == 50));
    }

    #[test]
    fn splits_24_classes_into_four_6s() {
        let sets = random_k_splits(&cfg(24, 4, 7)).unwrap();
        assert!(sets.iter().all(|s| s.len() == 6));
    }

    #[test]
    fn splits_partition_the_class_set() {
        let sets = random_k_splits(&cfg(17, 4, 3)).unwrap();
        let sizes: Vec<usize> = sets.iter().map(|s| s.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 17);
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
        let union: BTreeSet<ClassId> = sets.iter().flatten().copied().collect();
        assert_eq!(union, (0..17).collect());
    }

    #[test]
    fn splits_are_deterministic_and_input_order_free() {
        let a = random_k_splits(&cfg(30, 3, 11)).unwrap();
        let b = random_k_splits(&cfg(30, 3, 11)).unwrap();
        assert_eq!(a, b);

        let mut reversed = cfg(30, 3, 11);
        reversed.class_ids.reverse();
        assert_eq!(a, random_k_splits(&reversed).unwrap());

        let c = random_k_splits(&cfg(30, 3, 12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn k_larger_than_class_count_is_config_error() {
        assert!(random_k_splits(&cfg(3, 4, 0)).is_err());
        assert!(random_k_splits(&cfg(4, 1, 0)).is_err());
    }

    fn dataset() -> DatasetView {
        // classes: 0 known-ish, 1 unknown1, 2 unknown2, 3 spare
        let taxonomy = ClassTaxonomy::new("T", (0..4).map(|i| format!("c{i}")).collect()).unwrap();
        let spec: &[(&str, &[usize])] = &[
            ("k0", &[0]),
            ("k1", &[0]),
            ("k2", &[0, 1]),
            ("u0", &[1]),
            ("u1", &[2]),
            ("m0", &[0, 2]),
            ("bg", &[3]),
        ];
        let images = spec
            .iter()
            .map(|(id, _)| ImageInfo {
                id: id.to_string(),
                width: 64,
                height: 64,
            })
            .collect();
        let mut instances = Vec::new();
        for (id, classes) in spec {
            for (i, &c) in classes.iter().enumerate() {
                instances.push(GroundTruthInstance {
                    image_id: id.to_string(),
                    bbox: BoundingBox::new(i as f64, 0.0, i as f64 + 2.0, 2.0).unwrap(),
                    class_id: c,
                });
            }
        }
        DatasetView::new(taxonomy, images, instances).unwrap()
    }

    fn opts(protocol: SplitProtocol) -> MakeSplitOptions {
        MakeSplitOptions {
            protocol,
            seed: 9,
            method: "test".into(),
            ncut_value: None,
            notes: vec![],
        }
    }

    #[test]
    fn make_split_specs_emits_one_per_set_plus_union() {
        let ds = dataset();
        let pools = SubsetPools::from_lists(
            vec!["k0".into(), "k2".into(), "m0".into()],
            vec!["k1".into()],
            vec!["u0".into(), "u1".into(), "bg".into()],
        );
        let specs = make_split_specs(
            &ds,
            &BTreeSet::from([0]),
            &[
                ("unknown1".into(), BTreeSet::from([1])),
                ("unknown2".into(), BTreeSet::from([2])),
            ],
            &pools,
            &opts(SplitProtocol::KeepUnknownTrainImages),
        )
        .unwrap();
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[0].unknown_sets().len(), 1);
        assert_eq!(specs[2].unknown_sets().len(), 2);
        assert_eq!(specs[2].unknown_classes(), BTreeSet::from([1, 2]));
        // image 'bg' holds only the out-of-universe class 3: not a test image
        assert_eq!(
            specs[0].subset_images(Subset::Test),
            &["u0".to_string(), "u1".to_string()]
        );
        // test list is shared by all emitted specs
        assert_eq!(
            specs[0].subset_images(Subset::Test),
            specs[2].subset_images(Subset::Test)
        );
    }

    #[test]
    fn drop_protocol_excludes_images_with_out_of_set_objects() {
        let ds = dataset();
        let pools = SubsetPools::from_lists(
            vec!["k0".into(), "k2".into(), "m0".into()],
            vec![],
            vec!["u0".into()],
        );
        let keep = make_split_specs(
            &ds,
            &BTreeSet::from([0]),
            &[("unknown".into(), BTreeSet::from([1]))],
            &pools,
            &opts(SplitProtocol::KeepUnknownTrainImages),
        )
        .unwrap();
        assert_eq!(
            keep[0].subset_images(Subset::Train),
            &["k0".to_string(), "k2".to_string(), "m0".to_string()]
        );

        // under drop, k2 (has class 1) and m0 (has class 2) both go, even
        // though class 2 is not part of this spec's unknown set
        let drop = make_split_specs(
            &ds,
            &BTreeSet::from([0]),
            &[("unknown".into(), BTreeSet::from([1]))],
            &pools,
            &opts(SplitProtocol::DropUnknownTrainImages),
        )
        .unwrap();
        assert_eq!(drop[0].subset_images(Subset::Train), &["k0".to_string()]);
    }

    #[test]
    fn overlapping_sets_rejected() {
        let ds = dataset();
        let pools = SubsetPools::from_lists(vec!["k0".into()], vec![], vec![]);
        let err = make_split_specs(
            &ds,
            &BTreeSet::from([0, 1]),
            &[("u".into(), BTreeSet::from([1]))],
            &pools,
            &opts(SplitProtocol::KeepUnknownTrainImages),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn seeded_ratio_pools_cover_all_images() {
        let ds = dataset();
        let pools = SubsetPools::seeded_ratio(&ds, (0.6, 0.2, 0.2), 4).unwrap();
        let total = pools.train.len() + pools.val.len() + pools.test.len();
        assert_eq!(total, ds.images().len());
        let again = SubsetPools::seeded_ratio(&ds, (0.6, 0.2, 0.2), 4).unwrap();
        assert_eq!(pools.train, again.train);
        assert_eq!(pools.test, again.test);
    }

    #[test]
    fn known_cluster_selection_prefers_largest_then_lowest_index() {
        let a = BTreeSet::from([1, 2, 3]);
        let b = BTreeSet::from([4, 5]);
        let c = BTreeSet::from([6, 7, 8]);
        assert_eq!(select_known_cluster(&[b.clone(), a.clone()]), (1, false));
        assert_eq!(select_known_cluster(&[a, b, c]), (0, true));
    }
}
