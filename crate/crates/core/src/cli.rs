//! Command-line driver: validate, train, eval, ablate, params, qwk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    load_dataset, load_fold_file, make_record_folds, Dataset, EssayRecord, FoldSplit, Partition,
    PromptSpec, ScoreRange, TextEncoding, OVERALL,
};
use crate::error::{Error, Result};
use crate::eval::{
    self, append_ablation, assemble_report, check_ablation_target, EvalReport, PairingUnit,
    QwkCell, TEST_QWK_FILE, TIMING_FILE,
};
use crate::glove::load_glove;
use crate::layers::{Dims, DropoutPlacement};
use crate::model::{
    save_checkpoint, Aggregation, ModelConfig, ModelGraph, Recurrent, TaskMode, VOCAB_SIZE,
};
use crate::text::build_vocab;
use crate::train::{measure_runtime, run_fold_with, FoldOutcome, RunTiming, TrainConfig};

pub const RUNS_ENV: &str = "TRAITGRADE_RUNS";

#[derive(Debug, Parser)]
#[command(
    name = "traitgrade",
    version,
    about = "Trait-aware neural essay scoring"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the essay and trait files and check every record.
    Validate(ValidateArgs),
    /// Train the (prompt, config, fold) grid, skipping finished cells.
    Train(TrainArgs),
    /// Aggregate finished runs into report.csv / report.md / traits.csv.
    Eval(EvalArgs),
    /// Retrain MTL without one trait and report the holistic QWK drop.
    Ablate(AblateArgs),
    /// Print trainable parameter counts.
    Params(ParamsArgs),
    /// Quadratic weighted kappa of two score columns in a CSV file.
    Qwk(QwkArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Essay TSV; overrides the config.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
    /// Trait score CSV file or directory; overrides the config.
    #[arg(long)]
    pub traits: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Restrict to these prompts (repeatable).
    #[arg(long)]
    pub prompt: Vec<u8>,
    /// Restrict to these folds (repeatable).
    #[arg(long)]
    pub fold: Vec<usize>,
    /// Restrict to stl or mtl.
    #[arg(long)]
    pub mode: Option<TaskMode>,
    /// Restrict to lstm or bilstm.
    #[arg(long)]
    pub recurrent: Option<Recurrent>,
    /// Parallel cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Overrides the training and initialization seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = RUNS_ENV)]
    pub runs_dir: Option<PathBuf>,
    /// Fold assignments (`essay_id<TAB>fold<TAB>partition`).
    #[arg(long)]
    pub folds_file: Option<PathBuf>,
    /// GloVe text vectors for embedding initialization.
    #[arg(long)]
    pub glove: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Experiment config (TOML); supplies pipeline aggregation rules.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = RUNS_ENV)]
    pub runs_dir: Option<PathBuf>,
    /// Also write traits.svg.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Trait to remove.
    #[arg(long = "trait")]
    pub trait_name: String,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long, default_value = "mtl")]
    pub mode: TaskMode,
    #[arg(long, default_value = "bilstm")]
    pub recurrent: Recurrent,
    #[arg(long, default_value_t = 1)]
    pub prompt: u8,
    #[arg(long, default_value_t = VOCAB_SIZE)]
    pub vocab_size: usize,
    /// Reads layer sizes from this config.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QwkArgs {
    /// Lowest and highest score.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_negative_numbers = true)]
    pub range: Vec<i64>,
    /// CSV whose first two columns are predicted and gold scores.
    pub file: PathBuf,
    /// Zero-based column holding predictions.
    #[arg(long, default_value_t = 0)]
    pub pred_col: usize,
    /// Zero-based column holding gold scores.
    #[arg(long, default_value_t = 1)]
    pub gold_col: usize,
}

/// Experiment config file. Every key is optional; unknown keys are errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelSection,
    pub training: TrainConfig,
    pub evaluation: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub tsv: Option<PathBuf>,
    pub traits: Option<PathBuf>,
    pub encoding: TextEncoding,
    pub folds_file: Option<PathBuf>,
    pub fold_seed: u64,
    pub glove: Option<PathBuf>,
    pub runs_dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            tsv: None,
            traits: None,
            encoding: TextEncoding::Latin1,
            folds_file: None,
            fold_seed: 42,
            glove: None,
            runs_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Subset of stl-lstm, stl-bilstm, mtl-lstm, mtl-bilstm.
    pub configs: Vec<String>,
    /// Heads trained as STL runs; `"all"` expands to overall plus every trait.
    pub stl_targets: Vec<String>,
    pub dims: Dims,
    pub dropout_placement: DropoutPlacement,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            configs: vec![
                eval::STL_LSTM.into(),
                eval::STL_BILSTM.into(),
                eval::MTL_LSTM.into(),
                eval::MTL_BILSTM.into(),
            ],
            stl_targets: vec![OVERALL.into()],
            dims: Dims::default(),
            dropout_placement: DropoutPlacement::default(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub pairing: PairingUnit,
    pub svg: bool,
    /// Trait-to-holistic rules keyed by prompt id, for pipelined scoring.
    pub aggregation: BTreeMap<String, Aggregation>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        cfg.training.validate()?;
        cfg.model.dims.validate()?;
        for c in &cfg.model.configs {
            parse_label(c)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn parse_label(label: &str) -> Result<(TaskMode, Recurrent)> {
    let (m, r) = label
        .split_once('-')
        .ok_or_else(|| Error::config(format!("bad model config {label:?}")))?;
    Ok((m.parse()?, r.parse()?))
}

/// Everything needed to reproduce one run cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub tsv: PathBuf,
    pub traits: PathBuf,
    pub folds_file: Option<PathBuf>,
    pub glove: Option<PathBuf>,
    pub prompt: u8,
    pub fold: usize,
    pub label: String,
    pub fold_seed: u64,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub optimizer: String,
    pub tool_version: String,
    pub timestamp: u64,
}

fn optimizer_note(t: &TrainConfig) -> String {
    let mut s = format!(
        "rmsprop lr={} rho={} eps={} (the 0.9 'momentum' knob is the squared-gradient decay)",
        t.learning_rate, t.rms_decay, t.epsilon
    );
    if t.momentum > 0.0 {
        let _ = write!(s, "; classical momentum {}", t.momentum);
    }
    s
}

/// One (prompt, config, fold) cell of the grid.
#[derive(Debug, Clone)]
struct Cell {
    prompt: u8,
    label: String,
    model: ModelConfig,
    fold: FoldSplit,
}

impl Cell {
    fn dir(&self, runs: &Path) -> PathBuf {
        runs.join(self.prompt.to_string())
            .join(&self.label)
            .join(self.fold.fold_id.to_string())
    }
}

struct Session {
    cfg: ExperimentConfig,
    config_path: Option<PathBuf>,
    tsv: PathBuf,
    traits: PathBuf,
}

impl Session {
    fn open(data: &DataArgs) -> Result<Self> {
        let cfg = match &data.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let tsv = data
            .tsv
            .clone()
            .or_else(|| cfg.data.tsv.clone())
            .ok_or_else(|| Error::config("no essay TSV given (--tsv or data.tsv)"))?;
        let traits = data
            .traits
            .clone()
            .or_else(|| cfg.data.traits.clone())
            .ok_or_else(|| Error::config("no trait scores given (--traits or data.traits)"))?;
        Ok(Session {
            cfg,
            config_path: data.config.clone(),
            tsv,
            traits,
        })
    }

    fn load(&self) -> Result<Dataset> {
        load_dataset(&self.tsv, &self.traits, self.cfg.data.encoding)
    }
}

fn runs_dir(flag: &Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.clone().unwrap_or_else(|| cfg.data.runs_dir.clone())
}

fn cells(session: &Session, grid: &GridArgs, dataset: &Dataset) -> Result<Vec<Cell>> {
    let cfg = &session.cfg;
    let prompts: Vec<u8> = if grid.prompt.is_empty() {
        dataset.prompts.keys().copied().collect()
    } else {
        grid.prompt.clone()
    };
    let folds_file = grid
        .folds_file
        .clone()
        .or_else(|| cfg.data.folds_file.clone());
    let mut out = Vec::new();
    for p in prompts {
        let spec = PromptSpec::new(p)?;
        let records = dataset.prompt(p)?;
        let folds = match &folds_file {
            Some(f) => load_fold_file(f, records)?,
            None => make_record_folds(records, cfg.data.fold_seed)?,
        };
        for label in &cfg.model.configs {
            let (mode, rec) = parse_label(label)?;
            if grid.mode.is_some_and(|m| m != mode) || grid.recurrent.is_some_and(|r| r != rec) {
                continue;
            }
            let targets: Vec<String> = match mode {
                TaskMode::Mtl => vec![OVERALL.into()],
                TaskMode::Stl => {
                    if cfg.model.stl_targets.iter().any(|t| t == "all") {
                        std::iter::once(OVERALL.to_string())
                            .chain(spec.traits.iter().cloned())
                            .collect()
                    } else {
                        cfg.model.stl_targets.clone()
                    }
                }
            };
            for target in targets {
                let mut mc = ModelConfig::new(mode, rec, spec.clone());
                if mode == TaskMode::Stl {
                    if target != OVERALL && !spec.has_trait(&target) {
                        continue;
                    }
                    mc.stl_target = target.clone();
                }
                mc.dims = cfg.model.dims;
                mc.dropout_placement = cfg.model.dropout_placement;
                mc.dropout = cfg.training.dropout;
                mc.seed = grid.seed.unwrap_or(cfg.model.seed);
                let cell_label = if mode == TaskMode::Stl && target != OVERALL {
                    format!("{label}-{target}")
                } else {
                    label.clone()
                };
                for fold in &folds {
                    if !grid.fold.is_empty() && !grid.fold.contains(&fold.fold_id) {
                        continue;
                    }
                    if fold.test_ids.is_empty() {
                        continue;
                    }
                    out.push(Cell {
                        prompt: p,
                        label: cell_label.clone(),
                        model: mc.clone(),
                        fold: fold.clone(),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Trains one cell and writes its directory. `test_qwk.csv` is written
/// last and marks the cell complete.
fn run_cell(
    session: &Session,
    grid: &GridArgs,
    records: &[EssayRecord],
    cell: &Cell,
    runs: &Path,
) -> Result<FoldOutcome> {
    let dir = cell.dir(runs);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut training = session.cfg.training.clone();
    if let Some(s) = grid.seed {
        training.seed = s;
    }
    let glove_path = grid
        .glove
        .clone()
        .or_else(|| session.cfg.data.glove.clone());
    let manifest = RunManifest {
        config_path: session.config_path.clone(),
        tsv: session.tsv.clone(),
        traits: session.traits.clone(),
        folds_file: grid
            .folds_file
            .clone()
            .or_else(|| session.cfg.data.folds_file.clone()),
        glove: glove_path.clone(),
        prompt: cell.prompt,
        fold: cell.fold.fold_id,
        label: cell.label.clone(),
        fold_seed: session.cfg.data.fold_seed,
        model: cell.model.clone(),
        training: training.clone(),
        optimizer: optimizer_note(&training),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    write_file(
        &dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;

    let train_recs = cell.fold.select(records, Partition::Train)?;
    let dev_recs = cell.fold.select(records, Partition::Dev)?;
    let test_recs = cell.fold.select(records, Partition::Test)?;
    let owned: Vec<EssayRecord> = train_recs.iter().map(|r| (*r).clone()).collect();
    let vocab = build_vocab(&owned)?;
    let mut mc = cell.model.clone();
    mc.vocab_size = vocab.len();
    let mut model = ModelGraph::build(mc)?;
    if let Some(g) = &glove_path {
        let vectors = load_glove(g, model.config.dims.embed_dim, Some(&vocab))?;
        model.apply_glove(&vocab, &vectors)?;
    }
    let outcome = run_fold_with(
        model,
        vocab,
        &train_recs,
        &dev_recs,
        &test_recs,
        cell.fold.fold_id,
        &training,
    )?;

    save_checkpoint(
        &dir.join("checkpoint.bin"),
        &outcome.trained.model,
        &outcome.vocab,
    )?;
    write_file(&dir.join("history.csv"), outcome.trained.history.to_csv())?;
    write_file(
        &dir.join(TIMING_FILE),
        format!(
            "seconds,best_epoch\n{},{}\n",
            outcome.trained.seconds, outcome.trained.best_epoch
        ),
    )?;
    let heads = outcome.heads();
    let mut preds = String::from("essay_id");
    for h in &heads {
        let _ = write!(preds, ",pred_{h},gold_{h}");
    }
    preds.push('\n');
    let by_id: BTreeMap<u64, &EssayRecord> = test_recs.iter().map(|r| (r.essay_id, *r)).collect();
    for (id, p) in outcome.test_ids.iter().zip(&outcome.test.predictions) {
        let _ = write!(preds, "{id}");
        for (h, v) in heads.iter().zip(p) {
            let gold = by_id[id].score(h).unwrap_or_default();
            let _ = write!(preds, ",{v},{gold}");
        }
        preds.push('\n');
    }
    write_file(&dir.join("predictions.csv"), preds)?;
    let mut q = String::from("head,qwk\n");
    for (h, v) in heads.iter().zip(&outcome.test.qwk) {
        let _ = writeln!(q, "{h},{v}");
    }
    write_file(&dir.join(TEST_QWK_FILE), q)?;
    Ok(outcome)
}

fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<()> {
    let session = Session::open(&args.data)?;
    let data = session.load()?;
    let mut mismatch = false;
    for (p, recs) in &data.prompts {
        let spec = PromptSpec::new(*p)?;
        let note = if recs.len() == spec.expected_essays {
            String::new()
        } else {
            mismatch = true;
            format!(" (full data set has {})", spec.expected_essays)
        };
        writeln!(out, "prompt {p}: {} essays{note}", recs.len()).map_err(stdout_err)?;
    }
    let status = if mismatch { "OK (subset)" } else { "OK" };
    writeln!(
        out,
        "{} essays, {} prompts, {status}",
        data.total(),
        data.prompts.len()
    )
    .map_err(stdout_err)?;
    Ok(())
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let session = Session::open(&args.data)?;
    let data = session.load()?;
    let runs = runs_dir(&args.grid.runs_dir, &session.cfg);
    let todo = cells(&session, &args.grid, &data)?;
    let mut pending = Vec::new();
    for c in todo {
        if c.dir(&runs).join(TEST_QWK_FILE).exists() {
            writeln!(
                out,
                "skip {}/{}/{}: already complete",
                c.prompt, c.label, c.fold.fold_id
            )
            .map_err(stdout_err)?;
        } else {
            pending.push(c);
        }
    }
    let next = AtomicUsize::new(0);
    let lines = Mutex::new(Vec::<(usize, String)>::new());
    let first_err = Mutex::new(None::<Error>);
    let jobs = args.grid.jobs.max(1).min(pending.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = pending.get(i) else { break };
                if first_err.lock().expect("lock").is_some() {
                    break;
                }
                let records = data
                    .prompt(cell.prompt)
                    .expect("cell prompts come from the data");
                match run_cell(&session, &args.grid, records, cell, &runs) {
                    Ok(o) => {
                        let q = o
                            .test_qwk(OVERALL)
                            .or_else(|_| Ok::<f64, Error>(o.test.qwk[0]))
                            .unwrap_or(0.0);
                        lines.lock().expect("lock").push((
                            i,
                            format!(
                                "done {}/{}/{}: test qwk {q:.4}, best epoch {}, {:.1}s",
                                cell.prompt,
                                cell.label,
                                cell.fold.fold_id,
                                o.trained.best_epoch,
                                o.trained.seconds
                            ),
                        ));
                    }
                    Err(e) => {
                        first_err.lock().expect("lock").get_or_insert(e);
                    }
                }
            });
        }
    });
    let mut lines = lines.into_inner().expect("lock");
    lines.sort();
    for (_, l) in lines {
        writeln!(out, "{l}").map_err(stdout_err)?;
    }
    match first_err.into_inner().expect("lock") {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    essay_id: u64,
    #[serde(flatten)]
    cols: BTreeMap<String, String>,
}

fn read_predictions(path: &Path) -> Result<BTreeMap<u64, BTreeMap<String, i64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for row in r.deserialize::<PredictionRow>() {
        let row = row?;
        let cols = row
            .cols
            .into_iter()
            .filter_map(|(k, v)| v.parse::<i64>().ok().map(|v| (k, v)))
            .collect();
        out.insert(row.essay_id, cols);
    }
    Ok(out)
}

/// Holistic QWK of trait-then-aggregate scoring, from STL trait runs.
fn pipeline_cells(runs: &Path, cfg: &ExperimentConfig) -> Result<Vec<QwkCell>> {
    let mut cells = Vec::new();
    for (key, agg) in &cfg.evaluation.aggregation {
        let prompt: u8 = key
            .parse()
            .map_err(|_| Error::config(format!("aggregation key {key:?} is not a prompt id")))?;
        let spec = PromptSpec::new(prompt)?;
        for rec in ["lstm", "bilstm"] {
            for fold in 0..crate::dataset::NUM_FOLDS {
                let gold_path = runs
                    .join(key)
                    .join(format!("stl-{rec}"))
                    .join(fold.to_string())
                    .join("predictions.csv");
                if !gold_path.exists() {
                    continue;
                }
                let golds = read_predictions(&gold_path)?;
                let mut trait_preds: BTreeMap<&str, BTreeMap<u64, BTreeMap<String, i64>>> =
                    BTreeMap::new();
                let mut complete = true;
                for t in agg.weights.keys() {
                    let p = runs
                        .join(key)
                        .join(format!("stl-{rec}-{t}"))
                        .join(fold.to_string())
                        .join("predictions.csv");
                    if !p.exists() {
                        complete = false;
                        break;
                    }
                    trait_preds.insert(t, read_predictions(&p)?);
                }
                if !complete {
                    continue;
                }
                let mut pred = Vec::new();
                let mut gold = Vec::new();
                for (id, row) in &golds {
                    let mut per_trait = BTreeMap::new();
                    for (t, table) in &trait_preds {
                        if let Some(v) = table.get(id).and_then(|r| r.get(&format!("pred_{t}"))) {
                            per_trait.insert(t.to_string(), *v);
                        }
                    }
                    pred.push(crate::model::pipeline_holistic(&per_trait, agg, &spec)?);
                    gold.push(*row.get(&format!("gold_{OVERALL}")).ok_or_else(|| {
                        Error::Format {
                            what: "predictions file",
                            message: format!("{} lacks gold_{OVERALL}", gold_path.display()),
                        }
                    })?);
                }
                cells.push(QwkCell {
                    prompt,
                    config: format!("pipeline-{rec}"),
                    head: OVERALL.into(),
                    fold,
                    qwk: eval::qwk(&pred, &gold, spec.overall_range)?,
                });
            }
        }
    }
    Ok(cells)
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let runs = runs_dir(&args.runs_dir, &cfg);
    let mut report: EvalReport = assemble_report(&runs)?;
    report.cells.extend(pipeline_cells(&runs, &cfg)?);
    report.write(&runs, args.svg || cfg.evaluation.svg)?;
    write!(out, "{}", report.to_markdown()).map_err(stdout_err)?;
    writeln!(
        out,
        "\nsignificance pairs per-{} QWK values",
        match cfg.evaluation.pairing {
            PairingUnit::Fold => "fold",
            PairingUnit::Essay => "essay",
        }
    )
    .map_err(stdout_err)?;
    let timings: Vec<RunTiming> = report
        .timings
        .iter()
        .map(|t| RunTiming {
            prompt: t.prompt,
            fold: t.fold,
            config: t.config.clone(),
            seconds: t.seconds,
        })
        .collect();
    for (rec, reference) in [("lstm", 2.30), ("bilstm", 3.70)] {
        if let Ok(t) = measure_runtime(&timings, rec) {
            writeln!(
                out,
                "speed-up {rec}: {:.2} (STL {:.1}s / MTL {:.1}s; reference {reference:.2})",
                t.speedup, t.stl_total, t.mtl_total
            )
            .map_err(stdout_err)?;
        }
    }
    writeln!(out, "wrote {}", runs.join("report.md").display()).map_err(stdout_err)?;
    Ok(())
}

fn cmd_ablate(args: &AblateArgs, out: &mut dyn Write) -> Result<()> {
    let session = Session::open(&args.data)?;
    let data = session.load()?;
    let runs = runs_dir(&args.grid.runs_dir, &session.cfg);
    let prompts = if args.grid.prompt.is_empty() {
        return Err(Error::config("ablate needs --prompt"));
    } else {
        args.grid.prompt.clone()
    };
    for p in prompts {
        let spec = PromptSpec::new(p)?;
        check_ablation_target(&spec, &args.trait_name)?;
        let records = data.prompt(p)?;
        let folds_file = args
            .grid
            .folds_file
            .clone()
            .or_else(|| session.cfg.data.folds_file.clone());
        let mut folds = match &folds_file {
            Some(f) => load_fold_file(f, records)?,
            None => make_record_folds(records, session.cfg.data.fold_seed)?,
        };
        if !args.grid.fold.is_empty() {
            folds.retain(|f| args.grid.fold.contains(&f.fold_id));
        }
        let rec = args.grid.recurrent.unwrap_or(Recurrent::Bilstm);
        let mut mc = ModelConfig::new(TaskMode::Mtl, rec, spec);
        mc.dims = session.cfg.model.dims;
        mc.dropout_placement = session.cfg.model.dropout_placement;
        mc.seed = args.grid.seed.unwrap_or(session.cfg.model.seed);
        let mut training = session.cfg.training.clone();
        if let Some(s) = args.grid.seed {
            training.seed = s;
        }
        let result = eval::ablate(records, &mc, &training, &args.trait_name, &folds)?;
        append_ablation(&runs, &result)?;
        let reference = result.reference.map_or("n/a".into(), |r| format!("{r:.4}"));
        writeln!(
            out,
            "prompt {p} ablate {}: base {:.4}, ablated {:.4}, delta {:.4} (reference {reference})",
            result.trait_name, result.base_qwk, result.ablated_qwk, result.delta
        )
        .map_err(stdout_err)?;
    }
    Ok(())
}

/// Reference parameter counts, for side-by-side printing.
fn reference_params(mode: TaskMode, rec: Recurrent) -> &'static str {
    match (mode, rec) {
        (TaskMode::Stl, Recurrent::Lstm) => "326K",
        (TaskMode::Stl, Recurrent::Bilstm) => "436K",
        (TaskMode::Mtl, Recurrent::Lstm) => "829K - 1.08M",
        (TaskMode::Mtl, Recurrent::Bilstm) => "1.38M - 1.85M",
    }
}

fn cmd_params(args: &ParamsArgs, out: &mut dyn Write) -> Result<()> {
    let mut mc = ModelConfig::new(args.mode, args.recurrent, PromptSpec::new(args.prompt)?);
    mc.vocab_size = args.vocab_size;
    if let Some(p) = &args.config {
        mc.dims = ExperimentConfig::load(p)?.model.dims;
    }
    let model = ModelGraph::build(mc)?;
    let count = model.count_params();
    writeln!(
        out,
        "{} prompt {}: {} trainable parameters (reference {})",
        model.config.label(),
        args.prompt,
        count.total,
        reference_params(args.mode, args.recurrent)
    )
    .map_err(stdout_err)?;
    for (name, n) in &count.breakdown {
        writeln!(out, "  {name:<32} {n:>10}").map_err(stdout_err)?;
    }
    Ok(())
}

fn cmd_qwk(args: &QwkArgs, out: &mut dyn Write) -> Result<()> {
    let range = match args.range.as_slice() {
        [lo, hi] if lo <= hi => ScoreRange::new(*lo, *hi),
        _ => return Err(Error::config("--range needs MIN MAX with MIN <= MAX")),
    };
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(&args.file)?;
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for (n, row) in r.records().enumerate() {
        let row = row?;
        let cell = |c: usize| {
            row.get(c)
                .map(str::trim)
                .and_then(|v| v.parse::<i64>().ok())
        };
        match (cell(args.pred_col), cell(args.gold_col)) {
            (Some(p), Some(g)) => {
                pred.push(p);
                gold.push(g);
            }
            // a header line
            _ if n == 0 => {}
            _ => {
                return Err(Error::Format {
                    what: "score CSV",
                    message: format!("line {}: expected integer scores", n + 1),
                })
            }
        }
    }
    let k = eval::qwk(&pred, &gold, range)?;
    writeln!(out, "{k:.6}").map_err(stdout_err)?;
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Ablate(a) => cmd_ablate(a, out),
        Command::Params(a) => cmd_params(a, out),
        Command::Qwk(a) => cmd_qwk(a, out),
    }
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Validation(issues) = &e {
                for i in issues {
                    eprintln!("  {i}");
                }
            }
            e.exit_code()
        }
    }
}
