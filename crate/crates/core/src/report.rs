//! Aggregation across splits, table rendering, sweep export, and the
//! manifest-driven evaluation runner.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{cross_label_nms, relabel_all, BaselineConfig};
use crate::dataset::{ClassTaxonomy, Subset};
use crate::detections::KnownClasses;
use crate::error::{Error, Result};
use crate::formats::{
    parse_detections, parse_ground_truth, parse_split_spec, DetectionsKind, GroundTruthFormat,
    ParsedDetections,
};
use crate::metrics::{evaluate, EvalConfig, EvalGroundTruth, MetricsReport, OperatingPointStats};
use crate::splits::SplitProtocol;

/// Output table formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Markdown,
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            TableFormat::Markdown => "md",
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
        }
    }
}

/// Scores of one method on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitScore {
    pub split: String,
    pub ap_known: f64,
    pub ap_unknown: Option<f64>,
}

/// One table row: a method's per-split scores plus their mean and
/// population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub splits: Vec<SplitScore>,
}

/// Mean and population standard deviation (divisor n).
pub fn mean_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl AggregateRow {
    pub fn mean_std_known(&self) -> (f64, f64) {
        let values: Vec<f64> = self.splits.iter().map(|s| s.ap_known).collect();
        mean_population_std(&values)
    }

    /// Aggregated over the splits where AP_unk is defined; `None` when
    /// it is defined nowhere.
    pub fn mean_std_unknown(&self) -> Option<(f64, f64)> {
        let values: Vec<f64> = self.splits.iter().filter_map(|s| s.ap_unknown).collect();
        if values.is_empty() {
            None
        } else {
            Some(mean_population_std(&values))
        }
    }
}

/// Render an AP in the publication convention: percentage with one
/// decimal, rounding half away from zero (0.3755 renders as "37.6").
pub fn format_ap_percent(value: f64) -> String {
    format_one_decimal(value * 100.0)
}

/// One-decimal fixed rendering with round-half-away-from-zero applied to
/// the shortest decimal representation of the value.
pub fn format_one_decimal(value: f64) -> String {
    debug_assert!(value.is_finite());
    let repr = format!("{value}");
    let (sign, body) = match repr.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", repr.as_str()),
    };
    let (int_part, frac) = body.split_once('.').unwrap_or((body, ""));
    let mut frac_digits = frac.bytes().map(|b| b - b'0');
    let d1 = frac_digits.next().unwrap_or(0);
    let d2 = frac_digits.next().unwrap_or(0);

    let mut int: u128 = int_part.parse().expect("finite f64 integer part");
    let mut tenths = d1;
    if d2 >= 5 {
        tenths += 1;
        if tenths == 10 {
            tenths = 0;
            int += 1;
        }
    }
    format!("{sign}{int}.{tenths}")
}

fn mean_std_cell(mean: f64, std: f64) -> String {
    format!("{}±{}", format_ap_percent(mean), format_ap_percent(std))
}

/// Render aggregate rows. Markdown uses the publication convention
/// (percentages, one decimal, `mean±std`); csv and json carry full
/// precision on the raw `[0, 1]` scale.
pub fn render_table(rows: &[AggregateRow], format: TableFormat) -> Result<String> {
    let split_names: Vec<String> = rows
        .first()
        .map(|r| r.splits.iter().map(|s| s.split.clone()).collect())
        .unwrap_or_default();
    for row in rows {
        let names: Vec<String> = row.splits.iter().map(|s| s.split.clone()).collect();
        if names != split_names {
            return Err(Error::Config(format!(
                "rows are not homogeneous: method '{}' covers splits {names:?}, expected {split_names:?}",
                row.method
            )));
        }
    }

    match format {
        TableFormat::Markdown => {
            let mut header = String::from("| method |");
            for name in &split_names {
                header.push_str(&format!(" {name} AP_known | {name} AP_unk |"));
            }
            header.push_str(" mean AP_known | mean AP_unk |\n");
            let mut sep = String::from("|---|");
            for _ in 0..(split_names.len() * 2 + 2) {
                sep.push_str("---|");
            }
            sep.push('\n');

            let mut out = header + &sep;
            for row in rows {
                out.push_str(&format!("| {} |", row.method));
                for s in &row.splits {
                    let unk = s
                        .ap_unknown
                        .map(format_ap_percent)
                        .unwrap_or_else(|| "-".into());
                    out.push_str(&format!(" {} | {unk} |", format_ap_percent(s.ap_known)));
                }
                let (mk, sk) = row.mean_std_known();
                let unk = row
                    .mean_std_unknown()
                    .map(|(m, s)| mean_std_cell(m, s))
                    .unwrap_or_else(|| "-".into());
                out.push_str(&format!(" {} | {unk} |\n", mean_std_cell(mk, sk)));
            }
            Ok(out)
        }
        TableFormat::Csv => {
            let mut out = String::from("method");
            for name in &split_names {
                out.push_str(&format!(",{name}_ap_known,{name}_ap_unk"));
            }
            out.push_str(",mean_ap_known,std_ap_known,mean_ap_unk,std_ap_unk\n");
            for row in rows {
                out.push_str(&row.method);
                for s in &row.splits {
                    let unk = s.ap_unknown.map(|v| format!("{v}")).unwrap_or_default();
                    out.push_str(&format!(",{},{unk}", s.ap_known));
                }
                let (mk, sk) = row.mean_std_known();
                match row.mean_std_unknown() {
                    Some((mu, su)) => out.push_str(&format!(",{mk},{sk},{mu},{su}\n")),
                    None => out.push_str(&format!(",{mk},{sk},,\n")),
                }
            }
            Ok(out)
        }
        TableFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows).expect("aggregate rows serialize");
            s.push('\n');
            Ok(s)
        }
    }
}

/// Render a baseline hyperparameter sweep, one row per (temperature,
/// gamma) cell. Markdown uses the percentage convention; csv and json
/// carry full precision.
pub fn render_baseline_sweep(cells: &[crate::baseline::SweepCell], format: TableFormat) -> String {
    match format {
        TableFormat::Markdown => {
            let mut out = String::from(
                "| T | gamma | AP_known | AP_unk | WI | unknown boxes |\n|---|---|---|---|---|---|\n",
            );
            for c in cells {
                let unk = c
                    .report
                    .ap_unknown
                    .map(format_ap_percent)
                    .unwrap_or_else(|| "-".into());
                let wi = c
                    .report
                    .wi
                    .map(format_ap_percent)
                    .unwrap_or_else(|| "-".into());
                out.push_str(&format!(
                    "| {} | {} | {} | {unk} | {wi} | {} |\n",
                    c.temperature,
                    c.gamma,
                    format_ap_percent(c.report.map_known),
                    c.unknown_count
                ));
            }
            out
        }
        TableFormat::Csv => {
            let mut out = String::from("temperature,gamma,ap_known,ap_unk,wi,unknown_boxes\n");
            for c in cells {
                let unk = c
                    .report
                    .ap_unknown
                    .map(|v| format!("{v}"))
                    .unwrap_or_default();
                let wi = c.report.wi.map(|v| format!("{v}")).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{unk},{wi},{}\n",
                    c.temperature, c.gamma, c.report.map_known, c.unknown_count
                ));
            }
            out
        }
        TableFormat::Json => {
            #[derive(Serialize)]
            struct Cell<'a> {
                temperature: f64,
                gamma: f64,
                unknown_boxes: usize,
                report: &'a MetricsReport,
            }
            let rows: Vec<Cell> = cells
                .iter()
                .map(|c| Cell {
                    temperature: c.temperature,
                    gamma: c.gamma,
                    unknown_boxes: c.unknown_count,
                    report: &c.report,
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&rows).expect("sweep cells serialize");
            s.push('\n');
            s
        }
    }
}

/// Sweep CSV, one line per operating point:
/// `threshold,aose,wi,tp,fp,recall`. An undefined wilderness impact
/// leaves its field empty.
pub fn sweep_to_csv(stats: &[OperatingPointStats]) -> String {
    let mut out = String::from("threshold,aose,wi,tp,fp,recall\n");
    for s in stats {
        let wi = s
            .wilderness_impact()
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{wi},{},{},{}\n",
            s.conf_threshold, s.aose, s.tp_known, s.fp_known, s.recall_known
        ));
    }
    out
}

/// Export a sweep to a CSV file (refusing to write an empty sweep).
pub fn export_sweep(stats: &[OperatingPointStats], path: &Path) -> Result<()> {
    if stats.is_empty() {
        return Err(Error::Config("refusing to export an empty sweep".into()));
    }
    write_atomic(path, sweep_to_csv(stats).as_bytes())
}

/// Write via a temp file in the same directory plus rename, so readers
/// never observe partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// manifest-driven runs

fn default_temperature() -> f64 {
    1.0
}

fn default_top_m() -> usize {
    3
}

/// Baseline settings as they appear in a manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestBaseline {
    pub gamma: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_m")]
    pub top_m: usize,
}

impl ManifestBaseline {
    pub fn to_config(&self) -> Result<BaselineConfig> {
        BaselineConfig::new(self.gamma, self.temperature, self.top_m)
    }
}

/// One evaluated method: a name, its detection files, and how to
/// interpret them. Raw detections require `baseline` settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMethod {
    pub name: String,
    /// One path (reused for every split) or one path per split.
    pub detections: PathList,
    pub kind: DetectionsKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<ManifestBaseline>,
    /// IoU threshold of the optional cross-label NMS pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_nms: Option<f64>,
}

/// A single path or a list of paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathList {
    One(PathBuf),
    Many(Vec<PathBuf>),
}

impl PathList {
    fn for_split(&self, split_idx: usize, n_splits: usize) -> Result<&Path> {
        match self {
            PathList::One(p) => Ok(p),
            PathList::Many(ps) => {
                if ps.len() != n_splits {
                    return Err(Error::Config(format!(
                        "method lists {} detection files for {n_splits} splits",
                        ps.len()
                    )));
                }
                Ok(&ps[split_idx])
            }
        }
    }
}

/// Partial evaluation-config override; unset fields keep their defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfigPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aose_conf_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wi_recall_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_iou_for_openset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dets_per_image: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_thresholds: Option<Vec<f64>>,
}

impl EvalConfigPatch {
    pub fn apply(&self, mut cfg: EvalConfig) -> EvalConfig {
        if let Some(v) = &self.iou_grid {
            cfg.iou_grid = v.clone();
        }
        if let Some(v) = self.aose_conf_threshold {
            cfg.aose_conf_threshold = v;
        }
        if let Some(v) = self.wi_recall_target {
            cfg.wi_recall_target = v;
        }
        if let Some(v) = self.single_iou_for_openset {
            cfg.single_iou_for_openset = v;
        }
        if let Some(v) = self.max_dets_per_image {
            cfg.max_dets_per_image = v;
        }
        if let Some(v) = &self.sweep_thresholds {
            cfg.sweep_thresholds = v.clone();
        }
        cfg
    }
}

/// A full evaluation run: dataset, splits, methods, config, output.
/// Relative paths resolve against the manifest file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub dataset: PathBuf,
    #[serde(default = "default_gt_format")]
    pub dataset_format: GroundTruthFormat,
    pub splits: Vec<PathBuf>,
    pub methods: Vec<ManifestMethod>,
    #[serde(default = "default_protocol")]
    pub protocol: SplitProtocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalConfigPatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_gt_format() -> GroundTruthFormat {
    GroundTruthFormat::Native
}

fn default_protocol() -> SplitProtocol {
    SplitProtocol::KeepUnknownTrainImages
}

impl RunManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: format!("manifest {}: {e}", path.display()),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.splits.is_empty() {
            return Err(Error::Config("manifest lists no splits".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("manifest lists no methods".into()));
        }
        let mut names = HashSet::new();
        for m in &self.methods {
            if !names.insert(m.name.as_str()) {
                return Err(Error::Config(format!("duplicate method name '{}'", m.name)));
            }
            if m.kind == DetectionsKind::Raw && m.baseline.is_none() {
                return Err(Error::Config(format!(
                    "method '{}' has raw detections but no baseline settings",
                    m.name
                )));
            }
        }
        Ok(())
    }
}

/// Everything a run produced, for callers that want more than files.
#[derive(Debug)]
pub struct RunSummary {
    pub rows: Vec<AggregateRow>,
    pub table: String,
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// The report document written per (method, split).
#[derive(Debug, Serialize, Deserialize)]
pub struct ReportDoc {
    pub method: String,
    pub split: String,
    pub ap_known_per_class: BTreeMap<String, f64>,
    pub map_known: f64,
    pub ap_unknown: Option<f64>,
    pub aose: u64,
    pub wi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wi_note: Option<String>,
    pub sweep: Vec<OperatingPointStats>,
    pub config: EvalConfig,
}

pub fn report_to_doc(
    report: &MetricsReport,
    taxonomy: &ClassTaxonomy,
    method: &str,
    split: &str,
) -> ReportDoc {
    let ap_known_per_class = report
        .ap_known_per_class
        .iter()
        .map(|(&id, &ap)| {
            let name = taxonomy
                .name_of(id)
                .map(str::to_string)
                .unwrap_or_else(|| format!("class-{id}"));
            (name, ap)
        })
        .collect();
    ReportDoc {
        method: method.to_string(),
        split: split.to_string(),
        ap_known_per_class,
        map_known: report.map_known,
        ap_unknown: report.ap_unknown,
        aose: report.aose,
        wi: report.wi,
        wi_note: report.wi_note.clone(),
        sweep: report.sweep.clone(),
        config: report.config.clone(),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "split".into())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Run every (method, split) evaluation of a manifest and write one
/// report and sweep per pair plus the aggregate table. Pairs evaluate
/// concurrently; outputs are written atomically and row order follows
/// the manifest.
pub fn run_eval(
    manifest: &RunManifest,
    base_dir: &Path,
    out_dir: &Path,
    format: TableFormat,
) -> Result<RunSummary> {
    manifest.validate()?;
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };
    let read = |p: &PathBuf| -> Result<Vec<u8>> {
        fs::read(resolve(p)).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))
    };

    let mut warnings = Vec::new();
    let parsed = parse_ground_truth(&read(&manifest.dataset)?, manifest.dataset_format)?;
    for w in &parsed.warnings {
        warnings.push(format!("{}: {w}", manifest.dataset.display()));
    }
    let dataset = parsed.value;
    let taxonomy = dataset.taxonomy().clone();

    let mut splits = Vec::with_capacity(manifest.splits.len());
    for path in &manifest.splits {
        let spec = parse_split_spec(&read(path)?, &taxonomy)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        splits.push((file_stem(&resolve(path)), spec));
    }

    let eval_cfg = manifest
        .eval
        .clone()
        .unwrap_or_default()
        .apply(EvalConfig::default());
    eval_cfg.validate()?;

    fs::create_dir_all(out_dir)?;

    struct Job<'a> {
        method_idx: usize,
        split_idx: usize,
        method: &'a ManifestMethod,
    }
    let jobs: Vec<Job> = manifest
        .methods
        .iter()
        .enumerate()
        .flat_map(|(method_idx, method)| {
            (0..splits.len()).map(move |split_idx| Job {
                method_idx,
                split_idx,
                method,
            })
        })
        .collect();

    struct JobOutput {
        method_idx: usize,
        split_idx: usize,
        score: SplitScore,
        written: Vec<PathBuf>,
    }

    let outputs: Vec<JobOutput> = jobs
        .par_iter()
        .map(|job| -> Result<JobOutput> {
            let (split_name, split) = &splits[job.split_idx];
            let view = dataset.apply_split(split, manifest.protocol)?;
            let gt = EvalGroundTruth::from_view(&view, Subset::Test)?;
            let known = KnownClasses::from_split(&taxonomy, split)?;

            let det_path = job
                .method
                .detections
                .for_split(job.split_idx, splits.len())?;
            let bytes = fs::read(resolve(det_path))
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", det_path.display())))?;
            let mut dets = match parse_detections(&bytes, job.method.kind, &known)? {
                ParsedDetections::Labeled(d) => d,
                ParsedDetections::Raw(preds) => {
                    let baseline = job
                        .method
                        .baseline
                        .as_ref()
                        .expect("validated: raw methods carry baseline settings")
                        .to_config()?;
                    relabel_all(&preds, &baseline, &known)?
                }
            };
            if let Some(iou) = job.method.cross_nms {
                dets = cross_label_nms(&dets, iou)?;
            }

            let report = evaluate(&dets, &gt, &eval_cfg)?;
            let doc = report_to_doc(&report, &taxonomy, &job.method.name, split_name);

            let tag = format!("{}_{}", sanitize(&job.method.name), sanitize(split_name));
            let report_path = out_dir.join(format!("report_{tag}.json"));
            let mut json = serde_json::to_string_pretty(&doc).expect("report serializes");
            json.push('\n');
            write_atomic(&report_path, json.as_bytes())?;

            let mut written = vec![report_path];
            if !report.sweep.is_empty() {
                let sweep_path = out_dir.join(format!("sweep_{tag}.csv"));
                write_atomic(&sweep_path, sweep_to_csv(&report.sweep).as_bytes())?;
                written.push(sweep_path);
            }

            Ok(JobOutput {
                method_idx: job.method_idx,
                split_idx: job.split_idx,
                score: SplitScore {
                    split: split_name.clone(),
                    ap_known: report.map_known,
                    ap_unknown: report.ap_unknown,
                },
                written,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<AggregateRow> = manifest
        .methods
        .iter()
        .map(|m| AggregateRow {
            method: m.name.clone(),
            splits: vec![
                SplitScore {
                    split: String::new(),
                    ap_known: 0.0,
                    ap_unknown: None,
                };
                splits.len()
            ],
        })
        .collect();
    let mut written = Vec::new();
    let mut sorted = outputs;
    sorted.sort_by_key(|o| (o.method_idx, o.split_idx));
    for out in sorted {
        rows[out.method_idx].splits[out.split_idx] = out.score;
        written.extend(out.written);
    }

    let table = render_table(&rows, format)?;
    let table_path = out_dir.join(format!("aggregate.{}", format.extension()));
    write_atomic(&table_path, table.as_bytes())?;
    written.push(table_path);

    Ok(RunSummary {
        rows,
        table,
        written,
        warnings,
    })
}
