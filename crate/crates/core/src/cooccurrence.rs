//! Class co-occurrence graphs and the k-way normalized-cut objective.

use std::collections::{BTreeSet, HashMap};

use crate::dataset::{ClassId, DatasetView};
use crate::error::{Error, Result};

/// A weighted undirected graph over classes. `w[i][j]` counts the images
/// containing at least one instance of class `i` and at least one of
/// class `j`; the diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CoOccurrenceGraph {
    n: usize,
    weights: Vec<f64>, // n x n, row-major, symmetric
}

impl CoOccurrenceGraph {
    pub fn zeros(n: usize) -> Self {
        CoOccurrenceGraph {
            n,
            weights: vec![0.0; n * n],
        }
    }

    /// Build from a full matrix, checking symmetry, zero diagonal,
    /// non-negativity and finiteness.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::Config(format!(
                "weight matrix has {} entries, expected {}",
                weights.len(),
                n * n
            )));
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::Config(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Config(format!("invalid weight w[{i}][{j}] = {w}")));
                }
                if w != weights[j * n + i] {
                    return Err(Error::Config(format!("asymmetric weight at ({i}, {j})")));
                }
            }
        }
        Ok(CoOccurrenceGraph { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn set_weight(&mut self, i: usize, j: usize, w: f64) {
        self.weights[i * self.n + j] = w;
        self.weights[j * self.n + i] = w;
    }

    pub fn add_weight(&mut self, i: usize, j: usize, w: f64) {
        self.weights[i * self.n + j] += w;
        self.weights[j * self.n + i] += w;
    }

    /// Sum of incident edge weights.
    pub fn degree(&self, i: usize) -> f64 {
        self.weights[i * self.n..(i + 1) * self.n].iter().sum()
    }
}

/// Build the co-occurrence graph of `class_ids` over a dataset. Presence
/// counts, not instance multiplicity: an image with three dogs and one
/// cat adds one to w[dog][cat].
pub fn build_cooccurrence_graph(dataset: &DatasetView, class_ids: &[ClassId]) -> CoOccurrenceGraph {
    let index: HashMap<ClassId, usize> = class_ids
        .iter()
        .enumerate()
        .map(|(pos, &id)| (id, pos))
        .collect();

    let mut per_image: HashMap<&str, BTreeSet<usize>> = HashMap::new();
    for inst in dataset.instances() {
        if let Some(&pos) = index.get(&inst.class_id) {
            per_image
                .entry(inst.image_id.as_str())
                .or_default()
                .insert(pos);
        }
    }

    let mut graph = CoOccurrenceGraph::zeros(class_ids.len());
    for classes in per_image.values() {
        let classes: Vec<usize> = classes.iter().copied().collect();
        for (a, &i) in classes.iter().enumerate() {
            for &j in &classes[a + 1..] {
                graph.add_weight(i, j, 1.0);
            }
        }
    }
    graph
}

/// A k-way assignment of graph vertices to clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Every cluster in `0..k` must be non-empty.
    pub fn new(assignment: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("partition needs k >= 1".into()));
        }
        let mut seen = vec![false; k];
        for (v, &c) in assignment.iter().enumerate() {
            if c >= k {
                return Err(Error::Config(format!(
                    "vertex {v} assigned to cluster {c} >= k = {k}"
                )));
            }
            seen[c] = true;
        }
        if let Some(c) = seen.iter().position(|&s| !s) {
            return Err(Error::Config(format!("cluster {c} is empty")));
        }
        Ok(Partition { assignment, k })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cluster_members(&self, c: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a == c)
            .map(|(v, _)| v)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// True when `other` is the same grouping under a cluster relabeling.
    pub fn same_grouping(&self, other: &Partition) -> bool {
        if self.assignment.len() != other.assignment.len() || self.k != other.k {
            return false;
        }
        let mut map: HashMap<usize, usize> = HashMap::new();
        let mut used: Vec<bool> = vec![false; other.k];
        for (&a, &b) in self.assignment.iter().zip(&other.assignment) {
            match map.get(&a) {
                Some(&m) if m != b => return false,
                Some(_) => {}
                None => {
                    if used[b] {
                        return false;
                    }
                    map.insert(a, b);
                    used[b] = true;
                }
            }
        }
        true
    }
}

/// The k-way normalized-cut objective: sum over clusters of
/// `cut(A, V \ A) / assoc(A, V)`.
///
/// Errors when a cluster has zero total association (the ratio is
/// undefined).
pub fn ncut_value(graph: &CoOccurrenceGraph, partition: &Partition) -> Result<f64> {
    let n = graph.n();
    if partition.assignment().len() != n {
        return Err(Error::Config(format!(
            "partition covers {} vertices, graph has {n}",
            partition.assignment().len()
        )));
    }
    let assignment = partition.assignment();
    let mut cut = vec![0.0f64; partition.k()];
    let mut assoc = vec![0.0f64; partition.k()];
    for (i, &ci) in assignment.iter().enumerate() {
        for (j, &cj) in assignment.iter().enumerate() {
            let w = graph.weight(i, j);
            assoc[ci] += w;
            if cj != ci {
                cut[ci] += w;
            }
        }
    }
    let mut total = 0.0;
    for c in 0..partition.k() {
        if assoc[c] == 0.0 {
            return Err(Error::Numeric(format!(
                "normalized cut undefined: cluster {c} has zero association"
            )));
        }
        total += cut[c] / assoc[c];
    }
    Ok(total)
}
