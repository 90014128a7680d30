//! Metrics and k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::boosting::{train, BoosterConfig, Model, Objective};
use crate::columnar::Session;
use crate::error::{Error, Result};
use crate::merge::Frame;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{a} labels but {b} scores")));
    }
    Ok(())
}

/// Area under the ROC curve via the Mann–Whitney rank sum with average ranks on ties.
pub fn auc(labels: &[f64], scores: &[f64]) -> Result<f64> {
    check_lengths(labels.len(), scores.len())?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    if let Some(&y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidLabel(y));
    }

    // twice the rank sum keeps average ranks integral
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1, average (i + j + 2) / 2
        let avg_x2 = (i + j + 2) as u128;
        let pos_in_run = order[i..=j].iter().filter(|&&r| labels[r] == 1.0).count() as u128;
        rank_sum_x2 += avg_x2 * pos_in_run;
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    // U = R - p(p+1)/2, so 2U = 2R - p(p+1)
    let u_x2 = rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / (2 * p * n) as f64)
}

pub fn rmse(labels: &[f64], predictions: &[f64]) -> Result<f64> {
    check_lengths(labels.len(), predictions.len())?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sse: f64 = labels.iter().zip(predictions).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok((sse / labels.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub n_rows: usize,
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(train_rows, test_rows)` for one fold, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<u32>, Vec<u32>) {
        let (test, train): (Vec<u32>, Vec<u32>) = (0..self.n_rows as u32).partition(|&r| self.fold_of[r as usize] == fold);
        (train, test)
    }
}

/// Seeded shuffle followed by contiguous blocks; the first `n % k` folds get one extra row.
pub fn kfold_split(n_rows: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n_rows {
        return Err(Error::InvalidFoldCount { n_rows, k });
    }
    let mut perm: Vec<usize> = (0..n_rows).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n_rows / k, n_rows % k);
    let mut fold_of = vec![0; n_rows];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &perm[pos..pos + size] {
            fold_of[row] = fold;
        }
        pos += size;
    }
    Ok(FoldAssignment { n_rows, k, fold_of })
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub metric_name: &'static str,
    pub metric: f64,
    pub model: Model,
}

/// Metric reported per fold: AUC for logistic models, RMSE otherwise.
pub fn fold_metric(objective: Objective, labels: &[f64], scores: &[f64]) -> Result<(&'static str, f64)> {
    match objective {
        Objective::Mse => Ok(("rmse", rmse(labels, scores)?)),
        Objective::Logloss => Ok(("auc", auc(labels, scores)?)),
    }
}

/// Train one model per fold on the remaining rows and score the held-out rows.
pub fn cross_validate(config: &BoosterConfig, frame: &Frame<'_>, k: usize, session: &Session) -> Result<Vec<FoldResult>> {
    let ds = frame.dataset();
    let labels = ds.labels().ok_or_else(|| Error::SchemaError("dataset has no label column".into()))?;
    let folds = kfold_split(ds.n_rows(), k, config.seed)?;
    let mut results = Vec::with_capacity(k);
    for fold in 0..k {
        let (train_rows, test_rows) = folds.split(fold);
        let train_frame = frame.clone().with_rows(&train_rows)?;
        let test_frame = frame.clone().with_rows(&test_rows)?;
        let model = train(config, &train_frame, None, session)?;
        let scores = model.predict(&test_frame)?;
        let y: Vec<f64> = test_rows.iter().map(|&r| labels.raw(r as usize)).collect();
        let (metric_name, metric) = fold_metric(config.objective, &y, &scores)?;
        results.push(FoldResult { fold, metric_name, metric, model });
    }
    Ok(results)
}
