//! Rank aggregation over historical top-κ ranking snapshots.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`ingest`] parses dated ranking tables, applies a cutoff κ and counts
//!    how often each player appears and beats every other player.
//! 2. [`weights`] turns those counts into the prevalence-scaled pair weight
//!    matrix.
//! 3. [`walk`] runs a lazy random walk on the symmetric group whose
//!    transposition probabilities follow the pair weights, and samples its
//!    stationary distribution (with an exact solver for small rosters).
//! 4. [`dominance`] compares per-player rank CDFs under first-order
//!    stochastic dominance and builds the resulting partial order.
//! 5. [`linext`] samples linear extensions of that order uniformly and
//!    reports average ranks.
//!
//! [`report`] wires the stages together, writes the JSON/DOT/CSV artifacts and
//! computes cross-cutoff correlation fits.

pub mod dominance;
pub mod error;
pub mod fixtures;
pub mod ingest;
pub mod linext;
mod matrix;
pub mod report;
pub mod rng;
pub mod verify;
pub mod walk;
pub mod weights;

pub use dominance::{build_poset, dominates, DominancePoset, EmpiricalRankDistribution};
pub use error::{Error, Result};
pub use ingest::{
    apply_cutoff, build_incidence, parse_players_file, parse_snapshot_file, PairIncidence,
    PlayerId, RankingSnapshot, RawRecord, SnapshotCollection, SourceFormat,
};
pub use linext::{
    average_ranks, enumerate_extensions, sample_extensions, AvgRankReport, ExtensionSamplerConfig,
    LinearExtension,
};
pub use matrix::SquareMatrix;
pub use walk::{
    exact_stationary, run_chain, run_chains, step, support_graph_check, InitialState, Permutation,
    SampleSet, WalkConfig,
};
pub use weights::{build_weights, oriented_weight, WeightMatrix};
