//! Histogram gradient-boosted decision trees over borrowed columns.
//!
//! Feature columns are attached without copying, side tables are joined
//! through a per-row ordinal index instead of being materialized, and every
//! library allocation is charged to a [`Session`]'s footprint counters.

pub mod binning;
pub mod boosting;
pub mod cli;
pub mod columnar;
pub mod error;
pub mod eval;
pub mod merge;
pub mod persist;
pub mod tree;

pub use binning::{construct_bins, quantize, BinMapper, BinnedColumn, BinningMode, ResizeOutcome};
pub use boosting::{compute_gradients, initial_score, train, train_with_mappers, BoosterConfig, IterationLoss, Model, Objective};
pub use columnar::{Category, Dataset, FeatureColumn, FootprintReport, Session};
pub use error::{Error, Result};
pub use eval::{auc, kfold_split, rmse, FoldAssignment};
pub use merge::{build_join_index, materialize_merge, register_side_table, Frame, JoinIndex, Merge, SideTable};
pub use persist::{load_model, save_model};
pub use tree::{GradientPair, Node, Tree};
