mod common;

use compact_gbdt::binning::{construct_bins, quantize, BinMapper, BinningMode};
use compact_gbdt::boosting::{train, BoosterConfig, Model, Objective};
use compact_gbdt::columnar::{Dataset, FeatureColumn, Session};
use compact_gbdt::eval::{auc, kfold_split, rmse};
use compact_gbdt::merge::{build_join_index, materialize_merge, register_side_table, Frame, Merge};
use compact_gbdt::persist::{from_json, to_json};
use compact_gbdt::tree::{
    build_histogram, find_best_split, grow_tree, histogram_subtraction, split_gain, FeatureView, GradientPair,
    NodeStats, SplitConfig, TreeConfig,
};
use proptest::prelude::*;

use common::*;

fn col(v: &[f64]) -> FeatureColumn<'_> {
    FeatureColumn::from_f64(v).unwrap()
}

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![8 => -100.0..100.0f64, 1 => Just(f64::NAN), 1 => (0..5i32).prop_map(f64::from)]
}

fn column(n: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(value(), n).prop_filter("needs a finite value", |v| v.iter().any(|x| x.is_finite()))
}

fn grads(n: usize) -> impl Strategy<Value = Vec<GradientPair>> {
    prop::collection::vec((-1.0..1.0f64, 0.01..1.0f64).prop_map(|(g, h)| GradientPair { g, h }), n)
}

fn regression(n: usize, m: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (prop::collection::vec(prop::collection::vec(-5.0..5.0f64, n), m), prop::collection::vec(-3.0..3.0f64, n))
}

fn dataset<'a>(cols: &'a [Vec<f64>], y: Option<&'a [f64]>) -> Dataset<'a> {
    let names = (0..cols.len()).map(|i| format!("f{i}")).collect();
    Dataset::new(cols.iter().map(|c| col(c)).collect(), names, y.map(col)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn histogram_totals_match_node((values, g, pick) in column(1..200).prop_flat_map(|v| {
        let n = v.len();
        (Just(v), grads(n), prop::collection::vec(any::<bool>(), n))
    })) {
        let s = Session::new();
        let c = col(&values);
        let mp = construct_bins(&c, 32, &s).unwrap();
        for mode in [BinningMode::Cache, BinningMode::ZeroCopy] {
            let b = quantize(&c, &mp, mode, &s);
            let view = FeatureView::direct(c, &mp, &b).unwrap();
            let rows: Vec<u32> = (0..values.len() as u32).filter(|&r| pick[r as usize]).collect();
            let hist = build_histogram(&rows, &view, &g, &s);
            prop_assert_eq!(hist.total_count(), rows.len() as u64);
            let gs: f64 = rows.iter().map(|&r| g[r as usize].g).sum();
            let hs: f64 = rows.iter().map(|&r| g[r as usize].h).sum();
            prop_assert!((hist.sum_g().iter().sum::<f64>() - gs).abs() < 1e-9);
            prop_assert!((hist.sum_h().iter().sum::<f64>() - hs).abs() < 1e-9);

            let all: Vec<u32> = (0..values.len() as u32).collect();
            let rest: Vec<u32> = all.iter().copied().filter(|&r| !pick[r as usize]).collect();
            let parent = build_histogram(&all, &view, &g, &s);
            let sib = histogram_subtraction(&parent, &hist).unwrap();
            let direct = build_histogram(&rest, &view, &g, &s);
            prop_assert_eq!(sib.counts(), direct.counts());
            for k in 0..sib.n_bins() {
                prop_assert!((sib.sum_g()[k] - direct.sum_g()[k]).abs() < 1e-9);
                prop_assert!((sib.sum_h()[k] - direct.sum_h()[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn accepted_split_is_consistent((values, g) in column(2..120).prop_flat_map(|v| {
        let n = v.len();
        (Just(v), grads(n))
    }), min_leaf in 1usize..6) {
        let s = Session::new();
        let c = col(&values);
        let mp = construct_bins(&c, 16, &s).unwrap();
        let b = quantize(&c, &mp, BinningMode::Cache, &s);
        let view = FeatureView::direct(c, &mp, &b).unwrap();
        let rows: Vec<u32> = (0..values.len() as u32).collect();
        let hist = build_histogram(&rows, &view, &g, &s);
        let parent = NodeStats::new(g.iter().map(|p| p.g).sum(), g.iter().map(|p| p.h).sum(), rows.len() as u32);
        let cfg = SplitConfig { min_data_in_leaf: min_leaf, min_split_gain: 0.0 };
        if let Some(sp) = find_best_split(&[hist], &[mp.boundaries()], &parent, &cfg) {
            prop_assert!(sp.gain > 0.0);
            prop_assert!(sp.missing_goes_left);
            prop_assert_eq!(sp.left.count + sp.right.count, parent.count);
            prop_assert!(sp.left.count as usize >= min_leaf && sp.right.count as usize >= min_leaf);
            prop_assert_eq!(sp.threshold, mp.boundaries()[sp.split_bin]);
            // recompute both sides from rows
            let (mut l, mut r) = (NodeStats::default(), NodeStats::default());
            for (i, &v) in values.iter().enumerate() {
                let side = if !v.is_finite() || v <= sp.threshold { &mut l } else { &mut r };
                side.sum_g += g[i].g;
                side.sum_h += g[i].h;
                side.count += 1;
            }
            prop_assert_eq!((l.count, r.count), (sp.left.count, sp.right.count));
            prop_assert!((gain(&l, &r, &parent) - sp.gain).abs() < 1e-9);
            prop_assert!((split_gain(&sp.left, &sp.right, &parent) - sp.gain).abs() < 1e-12);
        }
    }

    #[test]
    fn grown_tree_partitions_rows((cols, y) in regression(150, 3), max_leaves in 1usize..20, min_leaf in 1usize..15) {
        let s = Session::new();
        let fc: Vec<FeatureColumn> = cols.iter().map(|c| col(c)).collect();
        let mappers: Vec<BinMapper> = fc.iter().map(|c| construct_bins(c, 64, &s).unwrap()).collect();
        let binned: Vec<_> = fc.iter().zip(&mappers).map(|(c, m)| quantize(c, m, BinningMode::ZeroCopy, &s)).collect();
        let views: Vec<FeatureView> = (0..3).map(|f| FeatureView::direct(fc[f], &mappers[f], &binned[f]).unwrap()).collect();
        let g: Vec<GradientPair> = y.iter().map(|&v| GradientPair { g: -v, h: 1.0 }).collect();
        let rows: Vec<u32> = (0..150).collect();
        let cfg = TreeConfig { max_leaves, split: SplitConfig { min_data_in_leaf: min_leaf, min_split_gain: 0.0 } };
        let grown = grow_tree(&views, &g, &rows, &cfg, &s);
        prop_assert!(grown.tree.n_leaves() <= max_leaves);
        prop_assert_eq!(grown.splits.len() + 1, grown.tree.n_leaves());
        let mut seen = vec![0u8; 150];
        for (node, leaf_rows) in grown.partition.leaves() {
            for &r in leaf_rows {
                seen[r as usize] += 1;
                prop_assert_eq!(grown.tree.leaf_index(|f| cols[f][r as usize]), node);
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        drop(grown);
        prop_assert_eq!(s.memory_footprint().histogram_bytes, 0);
        prop_assert_eq!(s.memory_footprint().gradient_bytes, 0);
    }

    #[test]
    fn prediction_is_additive((cols, y) in regression(120, 2), lr in 0.05..1.0f64) {
        let s = Session::new();
        let ds = dataset(&cols, Some(&y));
        let frame = Frame::new(&ds);
        let cfg = BoosterConfig { num_trees: 8, learning_rate: lr, min_data_in_leaf: 5, ..Default::default() };
        let model = train(&cfg, &frame, None, &s).unwrap();
        let full = model.predict(&frame).unwrap();
        let mut prefix = model.clone();
        let last = prefix.trees.pop().unwrap();
        let before = prefix.predict(&frame).unwrap();
        for (i, (a, b)) in full.iter().zip(&before).enumerate() {
            let t = last.predict(|f| cols[f][i]);
            prop_assert!((a - b - lr * t).abs() < 1e-12);
        }
        // running scores during training agree with the returned model
        let final_loss = model.history.last().unwrap().train_loss;
        prop_assert!((rmse(&y, &full).unwrap() - final_loss).abs() < 1e-9);
    }

    #[test]
    fn binning_modes_train_identical_models((cols, y) in regression(200, 3), adaptive in any::<bool>()) {
        let ds = dataset(&cols, Some(&y));
        let frame = Frame::new(&ds);
        let mk = |mode| BoosterConfig {
            num_trees: 10, min_data_in_leaf: 3, max_bins: 16, adaptive_bins: adaptive, t_split: 2,
            binning_mode: mode, ..Default::default()
        };
        let a = train(&mk(BinningMode::Cache), &frame, None, &Session::new()).unwrap();
        let b = train(&mk(BinningMode::ZeroCopy), &frame, None, &Session::new()).unwrap();
        prop_assert_eq!(to_json(&a), to_json(&b));
    }

    #[test]
    fn model_json_round_trip((cols, y) in regression(80, 2), logistic in any::<bool>()) {
        let labels: Vec<f64> = if logistic { y.iter().map(|&v| f64::from(v > 0.0)).collect() } else { y.clone() };
        let ds = dataset(&cols, Some(&labels));
        let objective = if logistic { Objective::Logloss } else { Objective::Mse };
        let cfg = BoosterConfig { num_trees: 5, min_data_in_leaf: 4, objective, ..Default::default() };
        let model = train(&cfg, &Frame::new(&ds), None, &Session::new()).unwrap();
        let text = to_json(&model);
        let back: Model = from_json(&text).unwrap();
        prop_assert_eq!(to_json(&back), text);
        prop_assert_eq!(back.base_score.to_bits(), model.base_score.to_bits());
        let frame = Frame::new(&ds);
        let a = model.predict(&frame).unwrap();
        let b = back.predict(&frame).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn auc_matches_pairwise_and_is_rank_invariant(
        data in prop::collection::vec((0..2u8, 0..12u8), 2..200)
            .prop_filter("both classes", |d| d.iter().any(|x| x.0 == 0) && d.iter().any(|x| x.0 == 1))
    ) {
        let labels: Vec<f64> = data.iter().map(|d| f64::from(d.0)).collect();
        let scores: Vec<f64> = data.iter().map(|d| f64::from(d.1) / 7.0).collect();
        let a = auc(&labels, &scores).unwrap();
        prop_assert_eq!(a, auc_pairwise(&labels, &scores));
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 10.0).collect();
        prop_assert_eq!(auc(&labels, &warped).unwrap(), a);
    }

    #[test]
    fn rmse_properties(y in prop::collection::vec(-50.0..50.0f64, 1..100), d in prop::collection::vec(-5.0..5.0f64, 100)) {
        prop_assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        let up: Vec<f64> = y.iter().zip(&d).map(|(a, b)| a + b).collect();
        let down: Vec<f64> = y.iter().zip(&d).map(|(a, b)| a - b).collect();
        prop_assert!((rmse(&y, &up).unwrap() - rmse(&y, &down).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn folds_are_balanced(n in 2usize..500, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let f = kfold_split(n, k, seed).unwrap();
        let sizes = f.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert_eq!(f, kfold_split(n, k, seed).unwrap());
    }

    #[test]
    fn implicit_histograms_match_materialized(
        side_vals in prop::collection::vec(value(), 2..30),
        picks in prop::collection::vec(0usize..40, 1..200),
        g in grads(200),
    ) {
        prop_assume!(side_vals.iter().any(|v| v.is_finite()));
        let s = Session::new();
        let u = side_vals.len();
        let keys: Vec<f64> = (0..u).map(|k| k as f64 * 2.0).collect();
        let main_keys: Vec<f64> = picks.iter().map(|&p| p as f64 * 2.0).collect();
        let side = register_side_table("t", &col(&keys), vec![col(&side_vals)], vec!["v".into()], 256, &s).unwrap();
        let join = build_join_index(&col(&main_keys), &side, &s).unwrap();
        let expected_unmatched = picks.iter().filter(|&&p| p >= u).count();
        prop_assert_eq!(join.n_unmatched(), expected_unmatched);

        let mat = materialize_merge(&col(&main_keys), &side, &s).unwrap();
        let rows: Vec<u32> = (0..picks.len() as u32).collect();
        let implicit = build_histogram(
            &rows,
            &FeatureView::joined(join.ordinals(), *side.column(0), side.mapper(0), side.binned(0), join.n_unmatched() > 0).unwrap(),
            &g,
            &s,
        );
        let mc = col(&mat[0]);
        let mb = quantize(&mc, side.mapper(0), BinningMode::ZeroCopy, &s);
        let mut mview = FeatureView::direct(mc, side.mapper(0), &mb).unwrap();
        if implicit.missing_slot().is_some() {
            mview = mview.with_missing_slot();
        }
        let explicit = build_histogram(&rows, &mview, &g, &s);
        prop_assert_eq!(implicit.counts(), explicit.counts());
        prop_assert_eq!(implicit.sum_g(), explicit.sum_g());
        prop_assert_eq!(implicit.sum_h(), explicit.sum_h());
    }
}

#[test]
fn footprint_returns_to_zero_after_training() {
    let x: Vec<f64> = (0..500).map(|i| ((i * 7) % 31) as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| v * 0.5).collect();
    let s = Session::new();
    {
        let cols = vec![x.clone()];
        let ds = dataset(&cols, Some(&y));
        let cfg = BoosterConfig { num_trees: 5, adaptive_bins: true, t_split: 1, ..Default::default() };
        train(&cfg, &Frame::new(&ds), None, &s).unwrap();
    }
    let now = s.memory_footprint();
    assert_eq!(now.total_library_bytes, 0);
    let peak = s.peak_footprint();
    assert!(peak.is_consistent());
    assert_eq!(peak.raw_value_bytes_copied, 0);
    assert!(peak.gradient_bytes >= 500 * 16);
}

#[test]
fn side_mapper_granularity_is_per_key() {
    let s = Session::new();
    let keys = [1.0, 2.0, 3.0];
    let vals = [10.0, 20.0, 30.0];
    let side = register_side_table("t", &col(&keys), vec![col(&vals)], vec!["v".into()], 256, &s).unwrap();
    // heavy repetition of one key on the main side does not change the key-level bins
    let main_keys: Vec<f64> = std::iter::repeat(1.0).take(1000).chain([2.0, 3.0]).collect();
    let join = build_join_index(&col(&main_keys), &side, &s).unwrap();
    assert_eq!(side.mapper(0).n_bins(), 3);
    let x: Vec<f64> = (0..main_keys.len()).map(|i| i as f64).collect();
    let ds = Dataset::new(vec![col(&x)], vec!["x".into()], None).unwrap();
    let frame = Frame::with_merges(&ds, vec![Merge { side: &side, join: &join }]).unwrap();
    assert_eq!(frame.feature_names(), ["x", "v"]);
    assert_eq!(frame.raw_value(1, 1001), 30.0);
}
