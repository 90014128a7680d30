#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use compact_gbdt::tree::NodeStats;
use rand::Rng;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_compact-gbdt"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn compact-gbdt")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Write a headed CSV; `NaN` cells are written empty.
pub fn write_csv(path: &Path, names: &[&str], columns: &[Vec<f64>]) {
    let mut text = names.join(",");
    text.push('\n');
    let n = columns.first().map_or(0, Vec::len);
    for r in 0..n {
        let cells: Vec<String> = columns
            .iter()
            .map(|c| if c[r].is_nan() { String::new() } else { format!("{}", c[r]) })
            .collect();
        writeln!(text, "{}", cells.join(",")).unwrap();
    }
    std::fs::write(path, text).unwrap();
}

/// `iter=<t> train_loss=<v>` lines from training output.
pub fn loss_log(out: &str) -> Vec<(usize, f64)> {
    out.lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let t = it.next()?.strip_prefix("iter=")?.parse().ok()?;
            let v = it.next()?.strip_prefix("train_loss=")?.parse().ok()?;
            Some((t, v))
        })
        .collect()
}

pub fn mem_line(out: &str, name: &str) -> Option<u64> {
    let prefix = format!("mem.{name}=");
    out.lines().find_map(|l| l.strip_prefix(&prefix)?.parse().ok())
}

pub fn gain(l: &NodeStats, r: &NodeStats, p: &NodeStats) -> f64 {
    let s = |n: &NodeStats| n.sum_g * n.sum_g / (n.sum_h + 1e-10);
    0.5 * (s(l) + s(r) - s(p))
}

/// Every candidate split `(feature, boundary index, gain)` found by direct
/// enumeration over raw rows. Missing values always go left.
pub fn enumerate_splits(
    values: &[Vec<f64>],
    boundaries: &[Vec<f64>],
    g: &[f64],
    h: &[f64],
    min_leaf: usize,
) -> Vec<(usize, usize, f64)> {
    let n = g.len();
    let parent = NodeStats::new(g.iter().sum(), h.iter().sum(), n as u32);
    let mut out = Vec::new();
    for (f, bounds) in boundaries.iter().enumerate() {
        for (b, &t) in bounds.iter().enumerate() {
            let (mut l, mut r) = (NodeStats::default(), NodeStats::default());
            for i in 0..n {
                let v = values[f][i];
                let side = if !v.is_finite() || v <= t { &mut l } else { &mut r };
                side.sum_g += g[i];
                side.sum_h += h[i];
                side.count += 1;
            }
            if (l.count as usize) < min_leaf || (r.count as usize) < min_leaf {
                continue;
            }
            out.push((f, b, gain(&l, &r, &parent)));
        }
    }
    out
}

/// Best candidate with gain above `min_gain`; ties keep the first enumerated.
pub fn best_split(cands: &[(usize, usize, f64)], min_gain: f64) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for &c in cands {
        if c.2 > min_gain && best.map_or(true, |b| c.2 > b.2) {
            best = Some(c);
        }
    }
    best
}

/// Quadratic AUC: correctly ordered (positive, negative) pairs, ties counting half.
pub fn auc_pairwise(labels: &[f64], scores: &[f64]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for i in 0..labels.len() {
        if labels[i] != 1.0 {
            continue;
        }
        for j in 0..labels.len() {
            if labels[j] != 0.0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

pub fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}
