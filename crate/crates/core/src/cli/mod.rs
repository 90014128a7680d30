//! Command-line front end: `train`, `predict`, `eval` and `cv`.

mod ingest;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use ingest::{ingest_csv, CsvTable};

use crate::binning::{BinningMode, DEFAULT_T_SPLIT, MAX_BINS};
use crate::boosting::{train, BoosterConfig, Model, Objective};
use crate::columnar::Session;
use crate::error::{Error, Result};
use crate::eval::{auc, cross_validate, rmse};
use crate::merge::{build_join_index, register_side_table, Frame, JoinIndex, Merge, SideTable};
use crate::persist::{load_model, save_model};

#[derive(Debug, Parser)]
#[command(name = "compact-gbdt", version, about = "Histogram gradient-boosted trees over CSV data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it as JSON.
    Train(TrainArgs),
    /// Score rows with a saved model.
    Predict(PredictArgs),
    /// Report metrics of a saved model on labelled data.
    Eval(EvalArgs),
    /// k-fold cross-validation.
    Cv(CvArgs),
}

/// `PATH:KEY:COLS`. `KEY` names the join column in both files; `COLS` is a
/// comma-separated list of side columns, or `*` for all but the key.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeSpec {
    pub path: PathBuf,
    pub key: String,
    pub columns: Option<Vec<String>>,
}

fn parse_merge(s: &str) -> std::result::Result<MergeSpec, String> {
    let mut parts = s.rsplitn(3, ':');
    let (cols, key, path) = match (parts.next(), parts.next(), parts.next()) {
        (Some(c), Some(k), Some(p)) if !c.is_empty() && !k.is_empty() && !p.is_empty() => (c, k, p),
        _ => return Err(format!("expected PATH:KEY:COLS, got `{s}`")),
    };
    let columns = (cols != "*").then(|| cols.split(',').map(|c| c.trim().to_string()).collect());
    Ok(MergeSpec { path: PathBuf::from(path), key: key.to_string(), columns })
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Main CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// Side table joined by key, `PATH:KEY:COLS` (repeatable).
    #[arg(long, value_parser = parse_merge)]
    pub merge: Vec<MergeSpec>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Mse,
    Logloss,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BinningModeArg {
    Cache,
    Zerocopy,
}

#[derive(Debug, Clone, Args)]
pub struct BoostArgs {
    #[arg(long, value_enum, default_value = "mse")]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 100)]
    pub num_trees: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 31)]
    pub max_leaves: usize,
    #[arg(long, default_value_t = MAX_BINS)]
    pub max_bins: usize,
    #[arg(long, default_value_t = 20)]
    pub min_data_in_leaf: usize,
    #[arg(long, default_value_t = 0.0)]
    pub min_split_gain: f64,
    /// Resize bins that are split on often.
    #[arg(long)]
    pub adaptive_bins: bool,
    #[arg(long, default_value_t = DEFAULT_T_SPLIT)]
    pub t_split: u32,
    #[arg(long, value_enum, default_value = "cache")]
    pub binning_mode: BinningModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub early_stopping_rounds: Option<usize>,
}

impl BoostArgs {
    pub fn config(&self) -> BoosterConfig {
        BoosterConfig {
            num_trees: self.num_trees,
            learning_rate: self.learning_rate,
            max_leaves: self.max_leaves,
            max_bins: self.max_bins,
            min_data_in_leaf: self.min_data_in_leaf,
            min_split_gain: self.min_split_gain,
            t_split: self.t_split,
            adaptive_bins: self.adaptive_bins,
            objective: match self.objective {
                ObjectiveArg::Mse => Objective::Mse,
                ObjectiveArg::Logloss => Objective::Logloss,
            },
            seed: self.seed,
            early_stopping_rounds: self.early_stopping_rounds,
            binning_mode: match self.binning_mode {
                BinningModeArg::Cache => BinningMode::Cache,
                BinningModeArg::Zerocopy => BinningMode::ZeroCopy,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub label: String,
    /// Validation CSV; joined with the same side tables.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[command(flatten)]
    pub boost: BoostArgs,
    /// Output model path.
    #[arg(long)]
    pub model: PathBuf,
    /// Print peak footprint counters as `mem.<category>=<bytes>`.
    #[arg(long)]
    pub mem_report: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub label: String,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub label: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub boost: BoostArgs,
    #[arg(long)]
    pub mem_report: bool,
}

struct Side {
    spec: MergeSpec,
    table: CsvTable,
}

impl Side {
    fn feature_names(&self) -> Vec<String> {
        match &self.spec.columns {
            Some(c) => c.clone(),
            None => self.table.names().iter().filter(|n| **n != self.spec.key).cloned().collect(),
        }
    }

    fn register(&self, max_bins: usize, session: &Session) -> Result<SideTable<'_>> {
        let names = self.feature_names();
        let columns = names.iter().map(|n| self.table.column(n)).collect::<Result<Vec<_>>>()?;
        let name = self.spec.path.display().to_string();
        register_side_table(&name, &self.table.column(&self.spec.key)?, columns, names, max_bins, session)
    }
}

fn load_sides(specs: &[MergeSpec]) -> Result<Vec<Side>> {
    specs.iter().map(|spec| Ok(Side { spec: spec.clone(), table: ingest_csv(&spec.path)? })).collect()
}

fn register_sides<'a>(sides: &'a [Side], max_bins: usize, session: &Session) -> Result<Vec<SideTable<'a>>> {
    sides.iter().map(|s| s.register(max_bins, session)).collect()
}

fn key_names(sides: &[Side]) -> Vec<&str> {
    sides.iter().map(|s| s.spec.key.as_str()).collect()
}

fn join_all(main: &CsvTable, sides: &[Side], tables: &[SideTable<'_>], session: &Session) -> Result<Vec<JoinIndex>> {
    sides
        .iter()
        .zip(tables)
        .map(|(s, t)| build_join_index(&main.column(&s.spec.key)?, t, session))
        .collect()
}

fn merges<'a>(tables: &'a [SideTable<'a>], joins: &'a [JoinIndex]) -> Vec<Merge<'a>> {
    tables.iter().zip(joins).map(|(side, join)| Merge { side, join }).collect()
}

fn io<T>(r: std::io::Result<T>) -> Result<T> {
    r.map_err(Error::from)
}

fn write_mem_report(session: &Session, out: &mut dyn Write) -> Result<()> {
    for (name, bytes) in session.peak_footprint().entries() {
        io(writeln!(out, "mem.{name}={bytes}"))?;
    }
    Ok(())
}

fn run_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let config = a.boost.config();
    config.validate()?;
    let main = ingest_csv(&a.data.data)?;
    let valid = a.valid.as_ref().map(|p| ingest_csv(p)).transpose()?;
    let sides = load_sides(&a.data.merge)?;
    let session = Session::new();
    let tables = register_sides(&sides, config.max_bins, &session)?;
    let keys = key_names(&sides);

    let ds = main.dataset(Some(&a.label), &keys)?;
    let joins = join_all(&main, &sides, &tables, &session)?;
    let frame = Frame::with_merges(&ds, merges(&tables, &joins))?;

    let vds = valid.as_ref().map(|v| v.dataset(Some(&a.label), &keys)).transpose()?;
    let vjoins = valid.as_ref().map(|v| join_all(v, &sides, &tables, &session)).transpose()?;
    let vframe = match (&vds, &vjoins) {
        (Some(d), Some(j)) => Some(Frame::with_merges(d, merges(&tables, j))?),
        _ => None,
    };

    let model = train(&config, &frame, vframe.as_ref(), &session)?;
    for h in &model.history {
        io(writeln!(out, "{}", h.log_line()))?;
    }
    save_model(&model, &a.model)?;
    if a.mem_report {
        write_mem_report(&session, out)?;
    }
    Ok(())
}

/// Map a missing model feature to a schema error, the CLI's contract for incompatible files.
fn schema(e: Error) -> Error {
    match e {
        Error::SchemaMismatch(n) => Error::SchemaError(format!("model feature `{n}` not present in the data")),
        e => e,
    }
}

fn scores_for(model: &Model, data: &DataArgs, label: Option<&str>) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let main = ingest_csv(&data.data)?;
    let sides = load_sides(&data.merge)?;
    if main.n_rows() == 0 {
        let mut available: Vec<String> = main.names().to_vec();
        for s in &sides {
            available.extend(s.feature_names());
        }
        if let Some(missing) = model.feature_names.iter().find(|n| !available.contains(n)) {
            return Err(schema(Error::SchemaMismatch(missing.clone())));
        }
        if let Some(l) = label {
            main.index_of(l)?;
        }
        return Ok((Vec::new(), label.map(|_| Vec::new())));
    }
    let session = Session::new();
    let tables = register_sides(&sides, MAX_BINS, &session)?;
    let keys = key_names(&sides);
    let ds = main.dataset(label, &keys)?;
    let joins = join_all(&main, &sides, &tables, &session)?;
    let frame = Frame::with_merges(&ds, merges(&tables, &joins))?;
    let scores = model.predict(&frame).map_err(schema)?;
    let labels = label.map(|l| main.values(l).map(<[f64]>::to_vec)).transpose()?;
    Ok((scores, labels))
}

fn run_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let (scores, _) = scores_for(&model, &a.data, None)?;
    let proba = model.objective == Objective::Logloss;
    let mut text = String::from(if proba { "score,probability\n" } else { "score\n" });
    for s in scores {
        if proba {
            text.push_str(&format!("{s},{}\n", model.transform(s)));
        } else {
            text.push_str(&format!("{s}\n"));
        }
    }
    match &a.out {
        Some(p) => io(fs::write(p, text)),
        None => io(out.write_all(text.as_bytes())),
    }
}

fn run_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let (scores, labels) = scores_for(&model, &a.data, Some(&a.label))?;
    let labels = labels.unwrap_or_default();
    match model.objective {
        Objective::Mse => io(writeln!(out, "rmse={}", rmse(&labels, &scores)?)),
        Objective::Logloss => {
            for &y in &labels {
                Objective::Logloss.check_label(y)?;
            }
            io(writeln!(out, "auc={}", auc(&labels, &scores)?))?;
            let loss = Objective::Logloss.report_loss(labels.iter().copied().zip(scores.iter().copied()));
            io(writeln!(out, "logloss={loss}"))
        }
    }
}

fn run_cv(a: &CvArgs, out: &mut dyn Write) -> Result<()> {
    let config = a.boost.config();
    config.validate()?;
    let main = ingest_csv(&a.data.data)?;
    let sides = load_sides(&a.data.merge)?;
    let session = Session::new();
    let tables = register_sides(&sides, config.max_bins, &session)?;
    let keys = key_names(&sides);
    let ds = main.dataset(Some(&a.label), &keys)?;
    let joins = join_all(&main, &sides, &tables, &session)?;
    let frame = Frame::with_merges(&ds, merges(&tables, &joins))?;

    let results = cross_validate(&config, &frame, a.folds, &session)?;
    let mut sum = 0.0;
    for r in &results {
        io(writeln!(out, "fold={} {}={}", r.fold, r.metric_name, r.metric))?;
        sum += r.metric;
    }
    io(writeln!(out, "mean_{}={}", results[0].metric_name, sum / results.len() as f64))?;
    if a.mem_report {
        write_mem_report(&session, out)?;
    }
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Train(a) => run_train(a, out),
        Command::Predict(a) => run_predict(a, out),
        Command::Eval(a) => run_eval(a, out),
        Command::Cv(a) => run_cv(a, out),
    }
}
