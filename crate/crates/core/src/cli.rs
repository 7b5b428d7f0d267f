//! Command-line front end. The binary only forwards to [`main`]; everything
//! else lives here so commands can be driven from tests.
//!
//! Stdout schemas:
//! - `detect`: `class,concept,epoch,score`, one row per classifier.
//! - `map`: writes `<out>.pgm` (one pixel per lattice location) and
//!   `<out>.csv` with `row,col,x,y,w,h,score`.
//! - `inspect`: `scope,key,value`.
//! - `synth`: `split,class,boxes`.
//! - `selftest`: one `PASS`/`FAIL` line per check.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{generate_synthetic, load_dataset, CorpusError, LoadOptions, Manifest, SynthConfig, MANIFEST_NAME};
use crate::graph::{ConceptId, FeatureSource, GraphError, Provenance};
use crate::image::{Image, ImageError};
use crate::inference::{detect_concept, response_map, DetectionCache, InferenceError};
use crate::learner::{train, LearnError, TrainConfig};
use crate::model_io::{load_model, save_model, ModelError};
use crate::selftest::run_selftest;

pub const WORKERS_ENV: &str = "CLASSIGRAPH_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "classigraph", version, about = "Growable classifier graphs: train, detect, inspect")]
pub struct Cli {
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a graph over an epoch schedule.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Manifest (JSON lines) of the corpus.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print classifier scores for one class on a whole image.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        class: String,
        /// Every classifier of the class instead of the newest one.
        #[arg(long)]
        all_classifiers: bool,
    },
    /// Export a concept's response map as PGM and CSV.
    Map {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        concept: u32,
        /// Frame size as a fraction of the image.
        #[arg(long)]
        scale: f64,
        /// Output path; `.pgm` and `.csv` extensions are substituted.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic part-whole corpus.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Node, edge and pool statistics of a model.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
    /// Oracle-equivalence and invariant suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// How samples are cut from the manifest for training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub split: Option<String>,
    pub margin: f64,
    pub negatives_per_image: usize,
    pub seed: u64,
    /// Per target class, other classes whose boxes serve as hard negatives.
    pub hard_negatives: BTreeMap<String, Vec<String>>,
}

impl Default for DataConfig {
    fn default() -> Self {
        let base = LoadOptions::default();
        Self {
            split: Some("train".into()),
            margin: base.margin,
            negatives_per_image: base.negatives_per_image,
            seed: base.seed,
            hard_negatives: BTreeMap::new(),
        }
    }
}

impl DataConfig {
    pub fn options(&self, class: &str) -> LoadOptions {
        LoadOptions {
            class: class.into(),
            split: self.split.clone(),
            margin: self.margin,
            negatives_per_image: self.negatives_per_image,
            negative_classes: self.hard_negatives.get(class).cloned().unwrap_or_default(),
            seed: self.seed,
            ..LoadOptions::default()
        }
    }
}

/// The `train --config` document: a [`TrainConfig`] plus a `data` section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainFile {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub data: DataConfig,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Invariant(_) => CliError::Invariant(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            // These come straight from configuration values.
            LearnError::Graph(GraphError::BadTolerance(_) | GraphError::EmptySampler(_) | GraphError::InvalidGeometry(_)) => {
                CliError::Usage(e.to_string())
            }
            LearnError::Graph(_) => CliError::Invariant(e.to_string()),
            LearnError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Learn(l) => l.into(),
            CorpusError::Infeasible(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send)) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    execute(cli, out)
}

pub fn execute(cli: Cli, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let workers = match cli.workers {
        Some(0) => return Err(CliError::Usage("--workers must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, out))
}

fn dispatch(command: Command, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    match command {
        Command::Train { config, data, out: model, seed } => cmd_train(&config, &data, &model, seed, out),
        Command::Detect { model, image, class, all_classifiers } => cmd_detect(&model, &image, &class, all_classifiers, out),
        Command::Map { model, image, concept, scale, out: path } => cmd_map(&model, &image, concept, scale, &path, out),
        Command::Synth { config, seed, out: dir } => cmd_synth(config.as_deref(), seed, &dir, out),
        Command::Inspect { model } => cmd_inspect(&model, out),
        Command::Selftest { seed } => cmd_selftest(seed, out),
    }
}

fn cmd_train(config: &Path, data: &Path, model: &Path, seed: Option<u64>, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let mut file: TrainFile = read_json(config)?;
    if let Some(s) = seed {
        file.train.seed = s;
    }
    let mut datasets = BTreeMap::new();
    for spec in &file.train.epochs {
        if !datasets.contains_key(&spec.class) {
            datasets.insert(spec.class.clone(), load_dataset(data, &file.data.options(&spec.class))?);
        }
    }
    let outcome = train(&datasets, &file.train)?;
    let echo = serde_json::json!({ "seed": file.train.seed, "config": file });
    save_model(&outcome.state.graph, &outcome.state.pool, Some(&echo), model)?;
    fs::write(sibling(model, ".report.csv"), outcome.report_csv())?;
    fs::write(sibling(model, ".trace.jsonl"), outcome.trace_jsonl())?;
    write!(out, "{}", outcome.report_csv())?;
    Ok(())
}

fn cmd_detect(model: &Path, image: &Path, class: &str, all: bool, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let m = load_model(model)?;
    let image = Image::read(image)?;
    let ids = m.graph.classifiers_for(class);
    let chosen: &[ConceptId] = match (all, ids.last()) {
        (_, None) => return Err(CliError::Data(format!("model has no classifier for class `{class}`"))),
        (true, _) => ids,
        (false, Some(_)) => &ids[ids.len() - 1..],
    };
    writeln!(out, "class,concept,epoch,score")?;
    for &c in chosen {
        let epoch = m.graph.concept(c).map_or(0, |n| n.epoch_created);
        let score = detect_concept(&m.graph, c, &image)?;
        writeln!(out, "{class},{},{epoch},{score}", c.0)?;
    }
    Ok(())
}

fn cmd_map(model: &Path, image: &Path, concept: u32, scale: f64, path: &Path, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let m = load_model(model)?;
    let image = Image::read(image)?;
    let mut cache = DetectionCache::new();
    let grid = response_map(&m.graph, ConceptId(concept), &image, &image.bounds(), scale, &mut cache)?;
    if grid.rows() == 0 || grid.cols() == 0 {
        return Err(CliError::Data(format!("scale {scale} leaves no frame inside the image")));
    }
    let heat = Image::from_gray(grid.cols(), grid.rows(), grid.scores.clone())?;
    let pgm = path.with_extension("pgm");
    let csv_path = path.with_extension("csv");
    heat.write(&pgm)?;
    let mut csv = String::from("row,col,x,y,w,h,score\n");
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            let f = grid.frame(r, c);
            csv.push_str(&format!("{r},{c},{},{},{},{},{}\n", f.x, f.y, f.w, f.h, grid.at(r, c)));
        }
    }
    fs::write(&csv_path, csv)?;
    writeln!(out, "{}\n{}", pgm.display(), csv_path.display())?;
    Ok(())
}

fn cmd_synth(config: Option<&Path>, seed: u64, dir: &Path, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let cfg: SynthConfig = match config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    let manifest: Manifest = generate_synthetic(&cfg, seed, dir)?;
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for a in &manifest.annotations {
        *counts.entry((a.split.clone(), a.class.clone())).or_default() += 1;
    }
    writeln!(out, "split,class,boxes")?;
    for ((split, class), n) in counts {
        writeln!(out, "{split},{class},{n}")?;
    }
    log::info!("wrote {}", dir.join(MANIFEST_NAME).display());
    Ok(())
}

fn cmd_inspect(model: &Path, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let m = load_model(model)?;
    let g = &m.graph;
    let leaves = g.concepts().iter().filter(|c| c.kind.is_leaf()).count();
    let parent_edges: usize = g.concepts().iter().map(|c| c.kind.parents().len()).sum();
    let concept_features = g.features().iter().filter(|f| matches!(f.source, FeatureSource::Concept(_))).count();
    let spawned = m.pool.entries().iter().filter(|e| matches!(e.provenance, Provenance::Spawned { .. })).count();
    let depth = g.concepts().iter().map(|c| g.depth(c.id)).max().unwrap_or(0);
    let rows: Vec<(String, String, String)> = [
        ("concepts", g.concept_count()),
        ("leaf_concepts", leaves),
        ("composite_concepts", g.concept_count() - leaves),
        ("feature_nodes", g.feature_count()),
        ("concept_feature_nodes", concept_features),
        ("parent_edges", parent_edges),
        ("max_depth", depth),
    ]
    .into_iter()
    .map(|(k, v)| ("graph".to_string(), k.to_string(), v.to_string()))
    .chain([
        ("pool".to_string(), "entries".to_string(), m.pool.len().to_string()),
        ("pool".to_string(), "initial".to_string(), (m.pool.len() - spawned).to_string()),
        ("pool".to_string(), "spawned".to_string(), spawned.to_string()),
    ])
    .collect();
    writeln!(out, "scope,key,value")?;
    for (s, k, v) in rows {
        writeln!(out, "{s},{k},{v}")?;
    }
    let mut epochs: BTreeMap<u32, [usize; 3]> = BTreeMap::new();
    for c in g.concepts() {
        epochs.entry(c.epoch_created).or_default()[if c.kind.is_leaf() { 0 } else { 1 }] += 1;
    }
    for e in m.pool.entries() {
        if let Provenance::Spawned { epoch } = e.provenance {
            epochs.entry(epoch).or_default()[2] += 1;
        }
    }
    for (epoch, [l, c, s]) in epochs {
        writeln!(out, "epoch:{epoch},leaf_concepts,{l}")?;
        writeln!(out, "epoch:{epoch},composite_concepts,{c}")?;
        writeln!(out, "epoch:{epoch},spawned_features,{s}")?;
    }
    for (class, ids) in g.classes() {
        let list: Vec<String> = ids.iter().map(|c| c.0.to_string()).collect();
        writeln!(out, "class:{class},classifiers,{}", list.join(" "))?;
    }
    if let Some(seed) = m.training.as_ref().and_then(|t| t.get("seed")) {
        writeln!(out, "training,seed,{seed}")?;
    }
    Ok(())
}

fn cmd_selftest(seed: u64, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let report = run_selftest(seed);
    for check in &report.checks {
        writeln!(out, "{check}")?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!(
            "{} selftest check(s) failed",
            report.checks.iter().filter(|c| !c.passed).count()
        )))
    }
}

/// Entry point for the binary: runs the command, reports errors on stderr.
pub fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    if let Err(e) = Cli::try_parse_from(&args) {
        // Help and version go to stdout with status 0; other parse errors exit 2.
        let _ = e.print();
        return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
    }
    match run(args, &mut std::io::stdout()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
