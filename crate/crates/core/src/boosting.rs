//! Objectives, gradient computation and the stagewise training loop.

use std::borrow::Cow;

use crate::binning::{construct_bins_on_rows, quantize, quantize_as, BinMapper, BinnedColumn, BinningMode, DEFAULT_T_SPLIT, MAX_BINS};
use crate::columnar::{Category, FeatureColumn, Session, TrackedVec};
use crate::error::{Error, Result};
use crate::merge::{FeatureSource, Frame};
use crate::tree::{grow_tree, FeatureView, GradientPair, SplitConfig, Tree, TreeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// `½ (y − ŷ)²`
    Mse,
    /// Binary cross-entropy on a raw additive score.
    Logloss,
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Mse => "mse",
            Objective::Logloss => "logloss",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mse" => Ok(Objective::Mse),
            "logloss" => Ok(Objective::Logloss),
            other => Err(Error::ConfigError(format!("unknown objective `{other}`"))),
        }
    }

    /// Per-row loss at raw prediction `s`.
    pub fn loss(&self, y: f64, s: f64) -> f64 {
        match self {
            Objective::Mse => 0.5 * (y - s) * (y - s),
            Objective::Logloss => softplus(s) - y * s,
        }
    }

    pub fn gradient(&self, y: f64, s: f64) -> GradientPair {
        match self {
            Objective::Mse => GradientPair { g: s - y, h: 1.0 },
            Objective::Logloss => {
                let p = sigmoid(s);
                // p − 1 = −σ(−s) keeps precision for confident positives
                let g = if y == 1.0 { -sigmoid(-s) } else { p - y };
                GradientPair { g, h: p * (1.0 - p) }
            }
        }
    }

    pub fn check_label(&self, y: f64) -> Result<()> {
        let ok = match self {
            Objective::Mse => y.is_finite(),
            Objective::Logloss => y == 0.0 || y == 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLabel(y))
        }
    }

    /// Reported training/validation loss: RMSE for MSE, mean log loss for logistic.
    pub fn report_loss(&self, labels: impl Iterator<Item = (f64, f64)>) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for (y, s) in labels {
            sum += match self {
                Objective::Mse => (y - s) * (y - s),
                Objective::Logloss => self.loss(y, s),
            };
            n += 1;
        }
        let mean = sum / n as f64;
        match self {
            Objective::Mse => mean.sqrt(),
            Objective::Logloss => mean,
        }
    }
}

pub fn compute_gradients(objective: Objective, labels: &[f64], predictions: &[f64]) -> Result<Vec<GradientPair>> {
    if labels.len() != predictions.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    labels
        .iter()
        .zip(predictions)
        .map(|(&y, &s)| {
            objective.check_label(y)?;
            Ok(objective.gradient(y, s))
        })
        .collect()
}

/// Rate clamp for the logistic base score.
const RATE_CLAMP: f64 = 1e-6;

pub fn initial_score(objective: Objective, labels: &[f64]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    Ok(match objective {
        Objective::Mse => mean,
        Objective::Logloss => {
            let p = mean.clamp(RATE_CLAMP, 1.0 - RATE_CLAMP);
            (p / (1.0 - p)).ln()
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoosterConfig {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub max_bins: usize,
    pub min_data_in_leaf: usize,
    pub min_split_gain: f64,
    pub t_split: u32,
    pub adaptive_bins: bool,
    pub objective: Objective,
    pub seed: u64,
    pub early_stopping_rounds: Option<usize>,
    pub binning_mode: BinningMode,
}

impl Default for BoosterConfig {
    fn default() -> Self {
        Self {
            num_trees: 100,
            learning_rate: 0.1,
            max_leaves: 31,
            max_bins: MAX_BINS,
            min_data_in_leaf: 20,
            min_split_gain: 0.0,
            t_split: DEFAULT_T_SPLIT,
            adaptive_bins: false,
            objective: Objective::Mse,
            seed: 0,
            early_stopping_rounds: None,
            binning_mode: BinningMode::Cache,
        }
    }
}

impl BoosterConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigError(msg));
        if self.num_trees < 1 {
            return fail("num_trees must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return fail(format!("learning_rate must be in (0, 1], got {}", self.learning_rate));
        }
        if !(2..=MAX_BINS).contains(&self.max_bins) {
            return fail(format!("max_bins must be in [2, {MAX_BINS}], got {}", self.max_bins));
        }
        if self.max_leaves < 1 {
            return fail("max_leaves must be at least 1".into());
        }
        if !(self.min_split_gain >= 0.0) {
            return fail(format!("min_split_gain must be non-negative, got {}", self.min_split_gain));
        }
        if self.early_stopping_rounds == Some(0) {
            return fail("early_stopping_rounds must be at least 1".into());
        }
        Ok(())
    }

    fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            max_leaves: self.max_leaves,
            split: SplitConfig { min_data_in_leaf: self.min_data_in_leaf, min_split_gain: self.min_split_gain },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLoss {
    /// Number of trees in the ensemble when the loss was measured.
    pub iteration: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

impl IterationLoss {
    /// `iter=<t> train_loss=<v> [valid_loss=<v>]`
    pub fn log_line(&self) -> String {
        let mut line = format!("iter={} train_loss={}", self.iteration, self.train_loss);
        if let Some(v) = self.valid_loss {
            line.push_str(&format!(" valid_loss={v}"));
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub objective: Objective,
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Bin boundaries per feature at the end of training.
    pub bin_boundaries: Vec<Vec<f64>>,
    /// Bins per feature at the end of training, missing bin included.
    pub bin_counts: Vec<usize>,
    pub seed: u64,
    pub num_trees_requested: usize,
    pub history: Vec<IterationLoss>,
}

impl Model {
    /// Column of `frame` feeding each model feature.
    fn feature_sources<'f>(&self, frame: &Frame<'f>) -> Result<Vec<FeatureSource<'f>>> {
        self.feature_names
            .iter()
            .map(|n| {
                let f = frame.feature_index(n).ok_or_else(|| Error::SchemaMismatch(n.clone()))?;
                Ok(frame.source(f))
            })
            .collect()
    }

    /// Raw additive score `base + Σ lr · tree(x)` for one row.
    pub fn predict_row(&self, value_of: impl Fn(usize) -> f64) -> f64 {
        let mut score = self.base_score;
        for t in &self.trees {
            score += self.learning_rate * t.predict(&value_of);
        }
        score
    }

    /// Raw scores for the frame's selected rows (all rows when there is no selection).
    pub fn predict(&self, frame: &Frame<'_>) -> Result<Vec<f64>> {
        let sources = self.feature_sources(frame)?;
        let all: Vec<u32>;
        let rows = match frame.rows() {
            Some(r) => r,
            None => {
                all = (0..frame.dataset().n_rows() as u32).collect();
                &all
            }
        };
        Ok(rows
            .iter()
            .map(|&r| self.predict_row(|f| sources[f].value(r as usize)))
            .collect())
    }

    /// Logistic view of raw scores; identity for MSE models.
    pub fn transform(&self, score: f64) -> f64 {
        match self.objective {
            Objective::Mse => score,
            Objective::Logloss => sigmoid(score),
        }
    }

    pub fn predict_proba(&self, frame: &Frame<'_>) -> Result<Vec<f64>> {
        Ok(self.predict(frame)?.into_iter().map(|s| self.transform(s)).collect())
    }
}

/// One training feature: its source, mutable bin mapper and current quantization.
struct FeatureSlot<'a> {
    source: FeatureSource<'a>,
    mapper: BinMapper,
    binned: Cow<'a, BinnedColumn>,
    extra_missing: bool,
}

impl<'a> FeatureSlot<'a> {
    fn source_column(&self) -> FeatureColumn<'a> {
        match self.source {
            FeatureSource::Main(c) => c,
            FeatureSource::Merged { side, feature, .. } => *side.column(feature),
        }
    }

    fn view(&self) -> Result<FeatureView<'_>> {
        let v = match self.source {
            FeatureSource::Main(c) => FeatureView::direct(c, &self.mapper, &self.binned)?,
            FeatureSource::Merged { side, feature, join } => FeatureView::joined(
                join.ordinals(),
                *side.column(feature),
                &self.mapper,
                &self.binned,
                join.n_unmatched() > 0,
            )?,
        };
        Ok(if self.extra_missing { v.with_missing_slot() } else { v })
    }

    fn requantize(&mut self, mode: BinningMode, session: &Session) {
        let column = self.source_column();
        self.binned = Cow::Owned(match self.source {
            FeatureSource::Main(_) => quantize(&column, &self.mapper, mode, session),
            FeatureSource::Merged { .. } => {
                quantize_as(&column, &self.mapper, BinningMode::Cache, session, Category::MergeStructures)
            }
        });
    }
}

fn labels_of<'a>(frame: &Frame<'a>) -> Result<FeatureColumn<'a>> {
    frame
        .dataset()
        .labels()
        .copied()
        .ok_or_else(|| Error::SchemaError("dataset has no label column".into()))
}

pub fn train(config: &BoosterConfig, train: &Frame<'_>, valid: Option<&Frame<'_>>, session: &Session) -> Result<Model> {
    train_with_mappers(config, train, valid, &[], session)
}

/// [`train`] with optional preset bin mappers, matched to features by position.
/// `None` (or a short slice) builds bins from the data.
pub fn train_with_mappers(
    config: &BoosterConfig,
    train: &Frame<'_>,
    valid: Option<&Frame<'_>>,
    preset: &[Option<BinMapper>],
    session: &Session,
) -> Result<Model> {
    config.validate()?;
    let objective = config.objective;
    let labels = labels_of(train)?;
    let n_rows = train.dataset().n_rows();
    let rows: Cow<'_, [u32]> = match train.rows() {
        Some(r) => Cow::Borrowed(r),
        None => Cow::Owned((0..n_rows as u32).collect()),
    };
    let _rows_charge = matches!(rows, Cow::Owned(_)).then(|| session.allocate(Category::Gradients, rows.len() * 4));
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut train_labels = Vec::with_capacity(rows.len());
    for &r in rows.iter() {
        let y = labels.raw(r as usize);
        objective.check_label(y)?;
        train_labels.push(y);
    }
    let base_score = initial_score(objective, &train_labels)?;
    drop(train_labels);

    let mut slots = Vec::with_capacity(train.n_features());
    for (f, source) in train.sources().into_iter().enumerate() {
        let preset = preset.get(f).cloned().flatten();
        let slot = match source {
            FeatureSource::Main(c) => {
                let mapper = match preset {
                    Some(m) => m,
                    None => construct_bins_on_rows(&c, Some(&rows), config.max_bins, session)?,
                };
                let extra_missing =
                    !mapper.has_missing_bin() && rows.iter().any(|&r| !c.raw(r as usize).is_finite());
                let binned = Cow::Owned(quantize(&c, &mapper, config.binning_mode, session));
                FeatureSlot { source, mapper, binned, extra_missing }
            }
            FeatureSource::Merged { side, feature, .. } => match preset {
                Some(m) => {
                    let column = side.column(feature);
                    let extra_missing = !m.has_missing_bin() && (0..column.len()).any(|k| !column.raw(k).is_finite());
                    let mut slot = FeatureSlot {
                        source,
                        mapper: m,
                        binned: Cow::Borrowed(side.binned(feature)),
                        extra_missing,
                    };
                    slot.requantize(config.binning_mode, session);
                    slot
                }
                None => FeatureSlot {
                    source,
                    mapper: side.mapper(feature).clone(),
                    binned: Cow::Borrowed(side.binned(feature)),
                    extra_missing: false,
                },
            },
        };
        slots.push(slot);
    }

    let valid_setup = match valid {
        Some(v) => {
            let vlabels = labels_of(v)?;
            let vrows: Vec<u32> = match v.rows() {
                Some(r) => r.to_vec(),
                None => (0..v.dataset().n_rows() as u32).collect(),
            };
            if vrows.is_empty() {
                return Err(Error::EmptyDataset);
            }
            for &r in &vrows {
                objective.check_label(vlabels.raw(r as usize))?;
            }
            let map: Vec<FeatureSource<'_>> = train
                .feature_names()
                .iter()
                .map(|n| v.feature_index(n).map(|f| v.source(f)).ok_or_else(|| Error::SchemaMismatch(n.clone())))
                .collect::<Result<_>>()?;
            let scores = TrackedVec::filled(session, Category::Gradients, base_score, vrows.len());
            Some((vlabels, vrows, map, scores))
        }
        None => None,
    };
    let mut valid_state = valid_setup;

    let mut scores = TrackedVec::filled(session, Category::Gradients, base_score, n_rows);
    let mut grads = TrackedVec::filled(session, Category::Gradients, GradientPair::default(), n_rows);

    let train_loss = |scores: &[f64]| {
        objective.report_loss(rows.iter().map(|&r| (labels.raw(r as usize), scores[r as usize])))
    };
    let valid_loss = |state: &Option<(FeatureColumn<'_>, Vec<u32>, Vec<FeatureSource<'_>>, TrackedVec<f64>)>| {
        state.as_ref().map(|(vl, vrows, _, vs)| {
            objective.report_loss(vrows.iter().zip(vs.iter()).map(|(&r, &s)| (vl.raw(r as usize), s)))
        })
    };

    let mut history = vec![IterationLoss { iteration: 0, train_loss: train_loss(&scores), valid_loss: valid_loss(&valid_state) }];
    let mut trees: Vec<Tree> = Vec::new();
    let mut best = (history[0].valid_loss.unwrap_or(f64::INFINITY), 0usize);
    let tree_config = config.tree_config();

    for t in 1..=config.num_trees {
        for slot in slots.iter_mut() {
            if !slot.binned.is_current(&slot.mapper) {
                slot.requantize(config.binning_mode, session);
            }
        }
        for &r in rows.iter() {
            let r = r as usize;
            grads[r] = objective.gradient(labels.raw(r), scores[r]);
        }
        let grown = {
            let views: Vec<FeatureView<'_>> = slots.iter().map(|s| s.view()).collect::<Result<_>>()?;
            grow_tree(&views, &grads, &rows, &tree_config, session)
        };
        for (node, leaf_rows) in grown.partition.leaves() {
            let w = match grown.tree.nodes()[node] {
                crate::tree::Node::Leaf { value } => value,
                crate::tree::Node::Split { .. } => unreachable!(),
            };
            for &r in leaf_rows {
                scores[r as usize] += config.learning_rate * w;
            }
        }
        if let Some((_, vrows, map, vscores)) = valid_state.as_mut() {
            for (i, &r) in vrows.iter().enumerate() {
                let w = grown.tree.predict(|f| map[f].value(r as usize));
                vscores[i] += config.learning_rate * w;
            }
        }
        for (feature, bin) in grown.split_hits() {
            slots[feature].mapper.record_split_hit(bin)?;
        }
        if config.adaptive_bins {
            for slot in slots.iter_mut() {
                let column = slot.source_column();
                let resize_rows = match slot.source {
                    FeatureSource::Main(_) => Some(&rows[..]),
                    FeatureSource::Merged { .. } => None,
                };
                for bin in slot.mapper.bins_due_for_resize(config.t_split) {
                    match slot.mapper.adaptive_resize(bin, &column, resize_rows, session) {
                        Ok(_) | Err(Error::ResizeNoop(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        trees.push(grown.tree);
        drop(grown.partition);

        let entry = IterationLoss { iteration: t, train_loss: train_loss(&scores), valid_loss: valid_loss(&valid_state) };
        if !entry.train_loss.is_finite() || entry.valid_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::DivergenceDetected(t));
        }
        history.push(entry);
        if let (Some(v), Some(rounds)) = (entry.valid_loss, config.early_stopping_rounds) {
            if v < best.0 {
                best = (v, t);
            } else if t - best.1 >= rounds {
                trees.truncate(best.1);
                break;
            }
        }
    }

    Ok(Model {
        objective,
        base_score,
        learning_rate: config.learning_rate,
        feature_names: train.feature_names().to_vec(),
        trees,
        bin_boundaries: slots.iter().map(|s| s.mapper.boundaries().to_vec()).collect(),
        bin_counts: slots.iter().map(|s| s.mapper.n_bins()).collect(),
        seed: config.seed,
        num_trees_requested: config.num_trees,
        history,
    })
}
