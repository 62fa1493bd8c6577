//! Subcommand implementations.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use openset_eval::baseline::{cross_label_nms, relabel_all, sweep_baseline, BaselineConfig};
use openset_eval::cooccurrence::{build_cooccurrence_graph, ncut_value};
use openset_eval::dataset::{ClassId, DatasetView, Subset};
use openset_eval::detections::KnownClasses;
use openset_eval::error::{Error, Result};
use openset_eval::formats::{
    parse_detections, parse_ground_truth, parse_split_spec, serialize_detections,
    serialize_split_spec, DetectionsKind, GroundTruthFormat, ParsedDetections,
};
use openset_eval::metrics::{EvalConfig, EvalGroundTruth};
use openset_eval::report::{
    render_baseline_sweep, run_eval, write_atomic, RunManifest, TableFormat,
};
use openset_eval::spectral::normalized_cut;
use openset_eval::splitgen::{
    clusters_to_class_sets, make_split_specs, random_k_splits, select_known_cluster,
    MakeSplitOptions, RandomSplitConfig, SubsetPools,
};
use openset_eval::splits::{SplitProtocol, SplitSpec};

use crate::Method;

fn read_dataset(path: &Path, format: GroundTruthFormat) -> Result<DatasetView> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let parsed = parse_ground_truth(&bytes, format)?;
    for w in &parsed.warnings {
        eprintln!("{}: {w}", path.display());
    }
    Ok(parsed.value)
}

fn read_split(path: &Path, dataset: &DatasetView) -> Result<SplitSpec> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_split_spec(&bytes, dataset.taxonomy())
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn read_raw_predictions(
    path: &Path,
    known: &KnownClasses,
) -> Result<Vec<openset_eval::detections::RawPrediction>> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    match parse_detections(&bytes, DetectionsKind::Raw, known)? {
        ParsedDetections::Raw(preds) => Ok(preds),
        ParsedDetections::Labeled(_) => unreachable!("raw kind requested"),
    }
}

// ---------------------------------------------------------------------------
// eval

pub fn eval(manifest_path: &Path, out: Option<&Path>, format: TableFormat) -> Result<()> {
    let manifest = RunManifest::from_file(manifest_path)?;
    let base_dir = manifest_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let out_dir = match (out, &manifest.out_dir) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(dir)) if dir.is_absolute() => dir.clone(),
        (None, Some(dir)) => base_dir.join(dir),
        (None, None) => PathBuf::from("out"),
    };
    let summary = run_eval(&manifest, &base_dir, &out_dir, format)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", summary.table);
    eprintln!(
        "wrote {} files to {}",
        summary.written.len(),
        out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-splits

#[derive(Debug, Deserialize)]
struct PoolsFile {
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

pub struct GenSplitsArgs {
    pub method: Method,
    pub k: usize,
    pub dataset: PathBuf,
    pub dataset_format: GroundTruthFormat,
    pub protocol: SplitProtocol,
    pub known_chunks: usize,
    pub ratios: String,
    pub pools: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "ratios must be three comma-separated numbers, got '{s}'"
        )));
    }
    let mut vals = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        vals[i] = p
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("invalid ratio '{p}'")))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

fn load_pools(args: &GenSplitsArgs, dataset: &DatasetView) -> Result<SubsetPools> {
    match &args.pools {
        Some(path) => {
            let bytes = fs::read(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let pools: PoolsFile = serde_json::from_slice(&bytes)
                .map_err(|e| Error::Schema(format!("pools file {}: {e}", path.display())))?;
            Ok(SubsetPools::from_lists(pools.train, pools.val, pools.test))
        }
        None => SubsetPools::seeded_ratio(dataset, parse_ratios(&args.ratios)?, args.seed),
    }
}

fn write_spec(dataset: &DatasetView, spec: &SplitSpec, path: &Path) -> Result<()> {
    let text = serialize_split_spec(spec, dataset.taxonomy())?;
    write_atomic(path, text.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn gen_splits(args: GenSplitsArgs) -> Result<()> {
    let dataset = read_dataset(&args.dataset, args.dataset_format)?;
    let pools = load_pools(&args, &dataset)?;
    fs::create_dir_all(&args.out_dir)?;

    match args.method {
        Method::Random => gen_random_splits(&args, &dataset, &pools),
        Method::Ncut => gen_ncut_splits(&args, &dataset, &pools),
    }
}

fn gen_random_splits(
    args: &GenSplitsArgs,
    dataset: &DatasetView,
    pools: &SubsetPools,
) -> Result<()> {
    if args.known_chunks == 0 || args.known_chunks >= args.k {
        return Err(Error::Config(format!(
            "known_chunks must be in 1..k, got {} with k = {}",
            args.known_chunks, args.k
        )));
    }
    let chunks = random_k_splits(&RandomSplitConfig {
        k: args.k,
        seed: args.seed,
        class_ids: dataset.taxonomy().class_ids().collect(),
    })?;

    // Case i treats chunks i..i+known_chunks (wrapping) as known and the
    // rest as one unknown set, so each chunk takes every role once.
    for case in 0..args.k {
        let mut known = BTreeSet::new();
        for offset in 0..args.known_chunks {
            known.extend(&chunks[(case + offset) % args.k]);
        }
        let unknown: BTreeSet<ClassId> = chunks
            .iter()
            .flatten()
            .filter(|&id| !known.contains(id))
            .copied()
            .collect();
        let specs = make_split_specs(
            dataset,
            &known,
            &[("unknown".to_string(), unknown)],
            pools,
            &MakeSplitOptions {
                protocol: args.protocol,
                seed: args.seed,
                method: format!("random-k{} case {} of {}", args.k, case + 1, args.k),
                ncut_value: None,
                notes: vec![format!("known chunks per case: {}", args.known_chunks)],
            },
        )?;
        let path = args.out_dir.join(format!("split{}.json", case + 1));
        write_spec(dataset, &specs[0], &path)?;
    }
    Ok(())
}

fn gen_ncut_splits(args: &GenSplitsArgs, dataset: &DatasetView, pools: &SubsetPools) -> Result<()> {
    let class_ids: Vec<ClassId> = dataset.taxonomy().class_ids().collect();
    let graph = build_cooccurrence_graph(dataset, &class_ids);
    let partition = normalized_cut(&graph, args.k, args.seed)?;
    let objective = ncut_value(&graph, &partition)?;

    let sets = clusters_to_class_sets(&class_ids, &partition);
    let (known_idx, tied) = select_known_cluster(&sets);
    let known = sets[known_idx].clone();

    // Remaining clusters become unknown1, unknown2, ... by ascending size
    // (cluster index breaks ties).
    let mut rest: Vec<(usize, &BTreeSet<ClassId>)> = sets
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != known_idx)
        .collect();
    rest.sort_by_key(|&(i, s)| (s.len(), i));
    let unknowns: Vec<(String, BTreeSet<ClassId>)> = rest
        .iter()
        .enumerate()
        .map(|(pos, &(_, s))| (format!("unknown{}", pos + 1), s.clone()))
        .collect();

    let isolated = (0..graph.n()).filter(|&i| graph.degree(i) == 0.0).count();
    let mut notes = vec![format!(
        "ncut clusters (sizes {:?}), known = cluster {known_idx}",
        partition.cluster_sizes()
    )];
    if tied {
        notes.push("largest-cluster tie broken by lowest cluster index".into());
    }
    if isolated > 0 {
        notes.push(format!(
            "{isolated} isolated classes balanced across clusters"
        ));
    }

    let specs = make_split_specs(
        dataset,
        &known,
        &unknowns,
        pools,
        &MakeSplitOptions {
            protocol: args.protocol,
            seed: args.seed,
            method: format!("ncut-k{}", args.k),
            ncut_value: Some(objective),
            notes,
        },
    )?;
    for (i, spec) in specs.iter().enumerate() {
        let name = if i < unknowns.len() {
            format!("split_{}.json", unknowns[i].0)
        } else {
            "split_union.json".to_string()
        };
        write_spec(dataset, spec, &args.out_dir.join(name))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// baseline

pub struct BaselineArgs {
    pub gamma: f64,
    pub temperature: f64,
    pub top_m: usize,
    pub cross_nms: Option<f64>,
    pub raw: PathBuf,
    pub dataset: PathBuf,
    pub dataset_format: GroundTruthFormat,
    pub split: PathBuf,
    pub out: PathBuf,
}

pub fn baseline(args: BaselineArgs) -> Result<()> {
    let dataset = read_dataset(&args.dataset, args.dataset_format)?;
    let split = read_split(&args.split, &dataset)?;
    let known = KnownClasses::from_split(dataset.taxonomy(), &split)?;
    let preds = read_raw_predictions(&args.raw, &known)?;

    let cfg = BaselineConfig::new(args.gamma, args.temperature, args.top_m)?;
    for w in cfg.warnings_for(&preds) {
        eprintln!("{w}");
    }
    let mut dets = relabel_all(&preds, &cfg, &known)?;
    let relabeled = dets.iter().filter(|d| d.label.is_unknown()).count();
    if let Some(iou) = args.cross_nms {
        let before = dets.len();
        dets = cross_label_nms(&dets, iou)?;
        eprintln!("cross-label NMS suppressed {} boxes", before - dets.len());
    }

    let text = serialize_detections(&dets, &known)?;
    write_atomic(&args.out, text.as_bytes())?;
    eprintln!(
        "relabeled {relabeled} of {} boxes as unknown; wrote {}",
        preds.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

pub struct SweepArgs {
    pub gammas: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub raw: PathBuf,
    pub dataset: PathBuf,
    pub dataset_format: GroundTruthFormat,
    pub split: PathBuf,
    pub protocol: SplitProtocol,
    pub out_dir: Option<PathBuf>,
    pub format: TableFormat,
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let dataset = read_dataset(&args.dataset, args.dataset_format)?;
    let split = read_split(&args.split, &dataset)?;
    let view = dataset.apply_split(&split, args.protocol)?;
    let gt = EvalGroundTruth::from_view(&view, Subset::Test)?;
    let known = KnownClasses::from_split(dataset.taxonomy(), &split)?;
    let preds = read_raw_predictions(&args.raw, &known)?;

    let cells = sweep_baseline(
        &preds,
        &args.gammas,
        &args.temperatures,
        &known,
        &gt,
        &EvalConfig::default(),
    )?;
    let rendered = render_baseline_sweep(&cells, args.format);
    print!("{rendered}");
    if let Some(dir) = args.out_dir {
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("baseline_sweep.{}", args.format.extension()));
        write_atomic(&path, rendered.as_bytes())?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// validate

pub fn validate(
    dataset_path: &Path,
    format: GroundTruthFormat,
    split_path: Option<&Path>,
    protocol: SplitProtocol,
) -> Result<()> {
    let bytes = fs::read(dataset_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", dataset_path.display())))?;
    let parsed = parse_ground_truth(&bytes, format)?;
    let mut diagnostics = parsed.warnings;
    let dataset = parsed.value;
    diagnostics.extend(dataset.validate());

    if let Some(path) = split_path {
        let split = read_split(path, &dataset)?;
        diagnostics.extend(split.validate_against(dataset.taxonomy()));
        match dataset.apply_split(&split, protocol) {
            Ok(view) => diagnostics.extend(view.validate()),
            Err(e) => diagnostics.push(openset_eval::error::Diagnostic::error(format!(
                "apply_split failed: {e}"
            ))),
        }
    }

    for d in &diagnostics {
        println!("{d}");
    }
    let errors = diagnostics.iter().filter(|d| d.is_error()).count();
    if errors > 0 {
        return Err(Error::Schema(format!("validation found {errors} error(s)")));
    }
    println!(
        "ok: {} images, {} annotations, {} classes",
        dataset.images().len(),
        dataset.instances().len(),
        dataset.taxonomy().len()
    );
    Ok(())
}
