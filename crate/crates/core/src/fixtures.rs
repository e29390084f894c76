//! The bundled five-player synthetic dataset.
//!
//! Ten weekly snapshots over players `900001..=900005`, plus two players
//! ranked 6th and 7th on the first and last dates so that a cutoff of 5
//! has something to remove. Its stationary rank CDFs are well separated:
//! two incomparable top players above two incomparable middle players
//! above a single last player.

use std::path::Path;

use crate::error::Result;
use crate::ingest::{apply_cutoff, parse_players_reader, parse_snapshot_reader, SnapshotCollection, SourceFormat};

pub const SYNTHETIC_RANKINGS: &str = include_str!("../data/synthetic_n5.csv");
pub const SYNTHETIC_PLAYERS: &str = include_str!("../data/synthetic_n5_players.csv");

/// The synthetic collection at the given cutoff (5 yields the n = 5 roster).
pub fn synthetic_collection(cutoff: u32) -> Result<SnapshotCollection> {
    let records = parse_snapshot_reader(
        SYNTHETIC_RANKINGS.as_bytes(),
        Path::new("synthetic_n5.csv"),
        SourceFormat::Sackmann,
    )?;
    let names = parse_players_reader(SYNTHETIC_PLAYERS.as_bytes(), Path::new("synthetic_n5_players.csv"))?;
    apply_cutoff(&records, cutoff, Some(&names))
}
