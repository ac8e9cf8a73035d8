//! Pipeline commands behind the `taxoprobe` binary.

pub mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use taxoprobe::analysis::{
    self, average_matrix, layer_skewness, render_grid, render_heatmap, render_panel_grid,
    shared_scale, skewness_tsv, AnalysisError, HeatmapSpec, LayerChoice, Palette, SkewnessReport,
};
use taxoprobe::attention::{
    batch_extract, store, AttentionError, Direction, ExtractOptions, ExtractionReport, MatrixStore,
    ModelBackend, PythonBackend, StubBackend,
};
use taxoprobe::dataset::{build_all, import_tsv, load_feature_norms, BuildReport, ExampleSentence, SetLabel};
use taxoprobe::lexicon::load_wordnet;
use taxoprobe::probe::{run_experiments, ExperimentReport, ProbeError};
use taxoprobe::AttentionMatrixF64;

pub use config::{BackendSpec, RunConfig};

/// Process exit codes.
pub mod exit {
    pub const FAILURE: i32 = 1;
    pub const INPUT: i32 = 2;
    pub const BACKEND: i32 = 3;
    pub const OVERWRITE: i32 = 4;
    pub const MISSING_SET: i32 = 5;
    pub const EMPTY_STORE: i32 = 6;
}

/// A failed command: message plus the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    fn input(message: impl fmt::Display) -> Self {
        Self::new(exit::INPUT, message.to_string())
    }

    fn other(message: impl fmt::Display) -> Self {
        Self::new(exit::FAILURE, message.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<AttentionError> for CliError {
    fn from(e: AttentionError) -> Self {
        let code = match &e {
            AttentionError::StoreExists(_) => exit::OVERWRITE,
            AttentionError::Backend(_) | AttentionError::NotStochastic(_) | AttentionError::Shape(_) => {
                exit::BACKEND
            }
            AttentionError::Unaligned(_) | AttentionError::Store { .. } => exit::INPUT,
            AttentionError::PositionOutOfRange { .. } | AttentionError::Io { .. } => exit::FAILURE,
        };
        let mut message = e.to_string();
        if code == exit::OVERWRITE {
            message.push_str(" (pass --force to replace it)");
        }
        CliError::new(code, message)
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::MissingSet(_) => CliError::new(exit::MISSING_SET, e.to_string()),
            ProbeError::Store(inner) => inner.into(),
            ProbeError::InvalidConfig(_) => CliError::input(e),
            other => CliError::other(other),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Store(inner) => inner.into(),
            AnalysisError::EmptySelection(_) => CliError::new(exit::EMPTY_STORE, e.to_string()),
            other => CliError::other(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Provenance recorded next to every artifact.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub lexicon_version: Option<String>,
    pub backend: Option<String>,
}

impl RunMetadata {
    pub fn new(config: &RunConfig) -> Self {
        RunMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            lexicon_version: None,
            backend: None,
        }
    }

    pub fn as_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("tool_version".into(), self.tool_version.clone());
        m.insert("config_hash".into(), self.config_hash.clone());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("lexicon_version".into(), self.lexicon_version.clone().unwrap_or_else(|| "unknown".into()));
        m.insert("backend".into(), self.backend.clone().unwrap_or_else(|| "unknown".into()));
        m
    }
}

pub const DATASET_META: &str = "dataset.meta.json";
pub const EXTRACTION_COUNTS: &str = "extraction_counts.tsv";

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::other(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::other(format!("cannot write {}: {e}", path.display())))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("metadata serializes");
    text.push('\n');
    write_file(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<T> {
    fs::read_to_string(path).ok().and_then(|t| serde_json::from_str(&t).ok())
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    metadata: RunMetadata,
    norms: PathBuf,
    lexicon: PathBuf,
    report: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreMeta {
    metadata: RunMetadata,
    report: serde_json::Value,
}

/// Loads the norms and lexicon, builds the three sets and writes them with
/// a JSON build report.
pub fn cmd_build_dataset(config: &RunConfig) -> CliResult<BuildReport> {
    let norms_path = config
        .paths
        .norms
        .clone()
        .ok_or_else(|| CliError::input("no feature norms path configured (paths.norms)"))?;
    let lexicon_path = config
        .paths
        .lexicon
        .clone()
        .ok_or_else(|| CliError::input("no lexical database path configured (paths.lexicon)"))?;
    if !norms_path.exists() {
        return Err(CliError::input(format!("feature norms not found: {}", norms_path.display())));
    }
    if !lexicon_path.exists() {
        return Err(CliError::input(format!("lexical database not found: {}", lexicon_path.display())));
    }
    let format = config.norms.format().map_err(CliError::input)?;
    let norms = load_feature_norms(&norms_path, &format).map_err(CliError::input)?;
    let db = load_wordnet(&lexicon_path).map_err(CliError::input)?;
    let build = build_all(&norms, &db);
    if build.positive.is_empty() {
        return Err(CliError::input(format!(
            "no pair from {} survived dataset construction",
            norms_path.display()
        )));
    }
    let dir = config.dataset_dir();
    build.write_tsv(&dir).map_err(CliError::other)?;
    let mut metadata = RunMetadata::new(config);
    metadata.lexicon_version = Some(db.version().to_string());
    write_json(
        &dir.join(DATASET_META),
        &DatasetMeta {
            metadata,
            norms: norms_path,
            lexicon: lexicon_path,
            report: serde_json::to_value(&build.report).expect("report serializes"),
        },
    )?;
    Ok(build.report)
}

/// Instantiates the configured backend.
pub fn make_backend(config: &RunConfig) -> CliResult<Box<dyn ModelBackend>> {
    let spec = config.backend_spec().map_err(CliError::input)?;
    match spec {
        BackendSpec::Stub { seed, layers, heads } => Ok(Box::new(StubBackend::with_shape(seed, layers, heads))),
        BackendSpec::Transformers { model } => {
            let vocab = config.backend.vocab.clone().unwrap_or_else(|| model.join("vocab.txt"));
            let backend = PythonBackend::spawn(
                &config.backend.python,
                &model.to_string_lossy(),
                &vocab,
                config.backend.lowercase,
            )
            .map_err(|e| CliError::new(exit::BACKEND, format!("backend unavailable: {e}")))?;
            Ok(Box::new(backend))
        }
    }
}

fn load_dataset(dir: &Path) -> CliResult<Vec<ExampleSentence>> {
    let mut all = Vec::new();
    for label in SetLabel::ALL {
        let path = dir.join(label.file_name());
        if !path.exists() {
            return Err(CliError::input(format!("dataset file not found: {}", path.display())));
        }
        all.extend(import_tsv(&path, label).map_err(CliError::input)?);
    }
    Ok(all)
}

/// Runs the backend over the dataset and writes the matrix store plus the
/// per-pattern acceptance table.
pub fn cmd_extract(config: &RunConfig, force: bool) -> CliResult<ExtractionReport> {
    let examples = load_dataset(&config.dataset_dir())?;
    let store_dir = config.store_dir();
    if store_dir.join(store::INDEX_FILE).exists() && !force {
        return Err(AttentionError::StoreExists(store_dir).into());
    }
    let backend = make_backend(config)?;
    let options = ExtractOptions {
        overwrite: force,
        chunk_size: config.backend.chunk_size,
        ..ExtractOptions::default()
    };
    let report = batch_extract(&examples, backend.as_ref(), &store_dir, &options)?;

    let mut metadata = RunMetadata::new(config);
    metadata.backend = Some(report.backend.clone());
    metadata.lexicon_version = read_json::<DatasetMeta>(&config.dataset_dir().join(DATASET_META))
        .and_then(|m| m.metadata.lexicon_version);
    write_json(
        &store_dir.join(store::META_FILE),
        &StoreMeta {
            metadata,
            report: serde_json::to_value(&report).expect("report serializes"),
        },
    )?;
    write_file(&config.out_dir.join(EXTRACTION_COUNTS), &report.to_tsv())?;
    Ok(report)
}

/// Opens a complete, non-empty store and returns it with its recorded
/// metadata.
fn open_store(config: &RunConfig) -> CliResult<(MatrixStore, RunMetadata)> {
    let dir = config.store_dir();
    if !dir.join(store::INDEX_FILE).exists() {
        return Err(CliError::input(format!("matrix store not found: {}", dir.display())));
    }
    let store = MatrixStore::open(&dir)?;
    if store.is_partial() {
        return Err(CliError::input(format!(
            "matrix store {} is incomplete; rerun extract with --force",
            dir.display()
        )));
    }
    if store.is_empty() {
        return Err(CliError::new(exit::EMPTY_STORE, format!("matrix store {} is empty", dir.display())));
    }
    let mut metadata = RunMetadata::new(config);
    if let Some(meta) = read_json::<StoreMeta>(&dir.join(store::META_FILE)) {
        metadata.lexicon_version = meta.metadata.lexicon_version;
        metadata.backend = meta.metadata.backend;
    }
    Ok((store, metadata))
}

pub const RESULTS_TSV: &str = "results.tsv";

#[derive(Debug, Serialize)]
struct ProbeOutput<'a> {
    metadata: RunMetadata,
    report: &'a ExperimentReport,
}

/// Runs the four experiments and writes `probe/results.tsv`, a JSON
/// sidecar with confusion matrices, and a plain-text table.
pub fn cmd_probe(config: &RunConfig) -> CliResult<ExperimentReport> {
    let (store, metadata) = open_store(config)?;
    let report = run_experiments(&store, &config.probe_config())?;
    let dir = probe_dir(config);
    write_file(&dir.join(RESULTS_TSV), &report.to_tsv())?;
    write_file(&dir.join("results.txt"), &report.to_table())?;
    write_json(&dir.join("results.json"), &ProbeOutput { metadata, report: &report })?;
    Ok(report)
}

pub fn probe_dir(config: &RunConfig) -> PathBuf {
    config.out_dir.join(format!("probe-{}", config.direction))
}

pub fn figures_dir(config: &RunConfig) -> PathBuf {
    config.out_dir.join("figures")
}

/// What `visualize` wrote.
#[derive(Debug, Default, Clone, PartialEq, Serialize)]
pub struct FigureSummary {
    pub heatmaps: usize,
    pub composites: usize,
    pub skewness_figures: usize,
    pub files: Vec<PathBuf>,
}

fn group_name(pattern: Option<u8>) -> String {
    pattern.map_or("all-patterns".to_string(), |p| format!("pattern{p}"))
}

#[derive(Debug, Serialize)]
struct PanelIndex {
    group: String,
    rows: Vec<SetLabel>,
    columns: Vec<Direction>,
    scale_min: f64,
    scale_max: f64,
    panels: Vec<Option<String>>,
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
struct SkewnessSidecar<'a> {
    group: String,
    layer_choice: LayerChoice,
    rows: Vec<String>,
    heads: usize,
    scale_min: f64,
    scale_max: f64,
    palette: Palette,
    estimator: &'static str,
    reports: &'a [SkewnessReport],
    metadata: BTreeMap<String, String>,
}

/// Averaged heatmaps (3 sets x 3 directions) per pattern and over all
/// patterns, shared colour scale per group, plus first/last-layer skewness.
pub fn cmd_visualize(config: &RunConfig) -> CliResult<FigureSummary> {
    let (store, metadata) = open_store(config)?;
    let meta_map = metadata.as_map();
    let root = figures_dir(config);
    let patterns = store.patterns();
    let mut groups: Vec<Option<u8>> = Vec::new();
    if config.figures.per_pattern {
        groups.extend(patterns.iter().map(|&p| Some(p)));
    }
    if config.figures.all_patterns && (patterns.len() > 1 || !config.figures.per_pattern) {
        groups.push(None);
    }

    let mut summary = FigureSummary::default();
    let mut all_skew = Vec::new();
    for pattern in groups {
        let name = group_name(pattern);
        let dir = root.join(&name);
        let mut cells: Vec<Option<(SetLabel, Direction, AttentionMatrixF64, usize)>> = Vec::new();
        for label in SetLabel::ALL {
            for direction in Direction::ALL {
                match average_matrix::<f64>(&store, Some(label), pattern, direction) {
                    Ok((m, n)) => cells.push(Some((label, direction, m, n))),
                    Err(AnalysisError::EmptySelection(_)) => cells.push(None),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        let scale = shared_scale(cells.iter().flatten().map(|c| &c.2));
        let mut panel_files = Vec::new();
        for cell in &cells {
            let Some((label, direction, matrix, count)) = cell else {
                panel_files.push(None);
                continue;
            };
            let file = format!("{label}_{direction}.png");
            let spec = HeatmapSpec {
                title: format!("{} {label} ({name})", capitalize(direction.as_str())),
                dataset: Some(*label),
                pattern,
                direction: *direction,
                output: dir.join(&file),
                scale,
            };
            render_heatmap(matrix, &spec, *count, &meta_map)?;
            summary.heatmaps += 1;
            summary.files.push(spec.output.clone());
            panel_files.push(Some(file));
        }
        let present: Vec<&AttentionMatrixF64> = cells.iter().flatten().map(|c| &c.2).collect();
        if !present.is_empty() {
            let path = dir.join("panels.png");
            render_panel_grid(&present, Direction::ALL.len(), scale, &path)?;
            let (lo, hi) = match scale {
                analysis::ColorScale::Fixed { min, max } => (min, max),
                analysis::ColorScale::Auto => (0.0, 0.0),
            };
            write_json(
                &path.with_extension("json"),
                &PanelIndex {
                    group: name.clone(),
                    rows: SetLabel::ALL.to_vec(),
                    columns: Direction::ALL.to_vec(),
                    scale_min: lo,
                    scale_max: hi,
                    panels: panel_files,
                    metadata: meta_map.clone(),
                },
            )?;
            summary.composites += 1;
            summary.files.push(path);
        }

        if config.figures.skewness {
            for which in LayerChoice::ALL {
                let mut reports = Vec::new();
                for label in SetLabel::ALL {
                    for direction in Direction::ALL {
                        match layer_skewness(&store, Some(label), pattern, direction, which) {
                            Ok(r) => reports.push(r),
                            Err(AnalysisError::EmptySelection(_)) => {}
                            Err(e) => return Err(e.into()),
                        }
                    }
                }
                if reports.is_empty() {
                    continue;
                }
                let grid: Vec<Vec<Option<f64>>> = reports.iter().map(|r| r.values.clone()).collect();
                let bound = grid.iter().flatten().flatten().fold(0f64, |m, v| m.max(v.abs()));
                let bound = if bound > 0.0 { bound } else { 1.0 };
                let path = dir.join(format!("skewness_{which}.png"));
                render_grid(&grid, (-bound, bound), Palette::Diverging, &path)?;
                write_json(
                    &path.with_extension("json"),
                    &SkewnessSidecar {
                        group: name.clone(),
                        layer_choice: which,
                        rows: reports
                            .iter()
                            .map(|r| format!("{}_{}", r.dataset.map_or("all".into(), |d| d.to_string()), r.direction))
                            .collect(),
                        heads: grid.first().map_or(0, Vec::len),
                        scale_min: -bound,
                        scale_max: bound,
                        palette: Palette::Diverging,
                        estimator: analysis::SKEWNESS_ESTIMATOR,
                        reports: &reports,
                        metadata: meta_map.clone(),
                    },
                )?;
                summary.skewness_figures += 1;
                summary.files.push(path);
                all_skew.extend(reports);
            }
        }
    }
    if config.figures.skewness {
        let path = root.join("skewness.tsv");
        write_file(&path, &skewness_tsv(&all_skew))?;
        summary.files.push(path);
    }
    Ok(summary)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map_or(String::new(), |f| f.to_uppercase().chain(c).collect())
}

/// Formats a build report for the terminal.
pub fn describe_build(report: &BuildReport, dir: &Path) -> String {
    let mut out = format!(
        "wrote {} examples per set to {}\n  norm rows: {}\n  positive pairs: {}\n  kept pairs: {}\n  lexicon: {}\n",
        report.examples_per_set,
        dir.display(),
        report.norm_rows,
        report.positive_pairs,
        report.kept_pairs,
        report.lexicon_version
    );
    for (reason, n) in &report.dropped {
        out.push_str(&format!("  dropped ({}): {n}\n", reason.as_str()));
    }
    out
}
