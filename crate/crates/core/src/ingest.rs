//! Loading ranking tables and counting pairwise incidences.
//!
//! A ranking table is a comma-separated file with one row per
//! `(ranking_date, rank, player, points)`; any trailing columns are ignored.
//! [`parse_snapshot_file`] reads rows verbatim, [`apply_cutoff`] groups them
//! into dated snapshots truncated at rank κ and assigns dense player indices,
//! and [`build_incidence`] produces the appearance / co-appearance / beat
//! counts consumed by the weight matrix.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerId {
    pub external_id: String,
    pub display_name: String,
}

/// Column layout of a ranking table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    /// `ranking_date,rank,player,points[,...]`; `points` may be blank.
    #[default]
    Sackmann,
    /// `ranking_date,rank,player[,...]`.
    Minimal,
}

impl SourceFormat {
    fn min_columns(self) -> usize {
        match self {
            SourceFormat::Sackmann => 4,
            SourceFormat::Minimal => 3,
        }
    }
}

impl FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sackmann" => Ok(SourceFormat::Sackmann),
            "minimal" => Ok(SourceFormat::Minimal),
            other => Err(Error::Data(format!("unknown source format `{other}`"))),
        }
    }
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceFormat::Sackmann => "sackmann",
            SourceFormat::Minimal => "minimal",
        })
    }
}

/// One row of a ranking table, before any cutoff.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub date: NaiveDate,
    pub rank: u32,
    pub player: String,
    pub points: Option<i64>,
    /// 1-based line in the source file (0 for synthesized records).
    pub line: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub player: usize,
    pub rank: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingSnapshot {
    pub date: NaiveDate,
    /// Sorted ascending by rank; equal ranks are source ties.
    pub entries: Vec<SnapshotEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotCollection {
    pub snapshots: Vec<RankingSnapshot>,
    pub roster: Vec<PlayerId>,
    pub cutoff: u32,
    /// Dates that had no player within the cutoff.
    pub dropped_dates: usize,
    /// SHA-256 over the retained snapshots and the cutoff.
    pub fingerprint: String,
}

impl SnapshotCollection {
    pub fn n(&self) -> usize {
        self.roster.len()
    }

    /// Checks every structural invariant of the collection.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let mut seen = vec![false; n];
        for snap in &self.snapshots {
            if snap.entries.is_empty() {
                return Err(Error::Structural(format!("empty snapshot on {}", snap.date)));
            }
            let mut in_snapshot = HashSet::new();
            for pair in snap.entries.windows(2) {
                if pair[0].rank > pair[1].rank {
                    return Err(Error::Structural(format!(
                        "snapshot on {} is not sorted by rank",
                        snap.date
                    )));
                }
            }
            for e in &snap.entries {
                if e.player >= n {
                    return Err(Error::Structural(format!(
                        "player index {} out of range on {}",
                        e.player, snap.date
                    )));
                }
                if e.rank == 0 || e.rank > self.cutoff {
                    return Err(Error::Structural(format!(
                        "rank {} outside [1, {}] on {}",
                        e.rank, self.cutoff, snap.date
                    )));
                }
                if !in_snapshot.insert(e.player) {
                    return Err(Error::Structural(format!(
                        "player index {} repeated on {}",
                        e.player, snap.date
                    )));
                }
                seen[e.player] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Structural(format!(
                "roster player {} never appears",
                self.roster[i].external_id
            )));
        }
        Ok(())
    }

    /// Builds a collection from best-to-worst orders, one per synthetic weekly
    /// date starting 2000-01-03, with ranks 1, 2, ... and no cutoff applied
    /// beyond the longest order.
    pub fn from_orders<S: AsRef<str>>(orders: &[Vec<S>]) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
        let mut records = Vec::new();
        for (week, order) in orders.iter().enumerate() {
            let date = start + chrono::Duration::weeks(week as i64);
            for (pos, player) in order.iter().enumerate() {
                records.push(RawRecord {
                    date,
                    rank: pos as u32 + 1,
                    player: player.as_ref().to_string(),
                    points: None,
                    line: 0,
                });
            }
        }
        let cutoff = orders.iter().map(Vec::len).max().unwrap_or(0).max(1) as u32;
        apply_cutoff(&records, cutoff, None)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairIncidence {
    pub n: usize,
    /// `appearances[i]`: snapshots containing player `i`.
    pub appearances: Vec<u32>,
    /// Symmetric; zero diagonal.
    pub co_appearances: SquareMatrix<u32>,
    /// `beats[i][j]`: snapshots where `i` is strictly better ranked than `j`.
    pub beats: SquareMatrix<u32>,
    pub fingerprint: String,
}

fn is_date_token(s: &str) -> bool {
    s.len() == 8 && s.bytes().all(|b| b.is_ascii_digit())
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    if !is_date_token(s) {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y%m%d").ok()
}

fn csv_reader<R: std::io::Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

/// Reads every row of a ranking table in source order.
///
/// A first row whose leading field is not a `YYYYMMDD` date is taken as a
/// header and skipped. Blank lines are ignored.
pub fn parse_snapshot_file(path: &Path, format: SourceFormat) -> Result<Vec<RawRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_snapshot_reader(std::io::BufReader::new(file), path, format)
}

/// [`parse_snapshot_file`] over any reader; `path` only labels errors.
pub fn parse_snapshot_reader<R: std::io::Read>(
    source: R,
    path: &Path,
    format: SourceFormat,
) -> Result<Vec<RawRecord>> {
    let mut reader = csv_reader(source);
    let mut records = Vec::new();
    let mut first = true;
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(str::is_empty) {
            continue;
        }
        let is_first = std::mem::replace(&mut first, false);
        if is_first && !is_date_token(row.get(0).unwrap_or("")) {
            continue;
        }
        if row.len() < format.min_columns() {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "expected at least {} columns, found {}",
                    format.min_columns(),
                    row.len()
                ),
            ));
        }
        let date = parse_date(&row[0])
            .ok_or_else(|| Error::parse(path, line, format!("unparseable date `{}`", &row[0])))?;
        let rank: u32 = row[1]
            .parse()
            .ok()
            .filter(|&r| r > 0)
            .ok_or_else(|| Error::parse(path, line, format!("unparseable rank `{}`", &row[1])))?;
        let player = row[2].to_string();
        if player.is_empty() {
            return Err(Error::parse(path, line, "empty player token"));
        }
        let points = match format {
            SourceFormat::Sackmann if !row[3].is_empty() => {
                Some(row[3].parse::<i64>().map_err(|_| {
                    Error::parse(path, line, format!("unparseable points `{}`", &row[3]))
                })?)
            }
            _ => None,
        };
        records.push(RawRecord {
            date,
            rank,
            player,
            points,
            line,
        });
    }
    if records.is_empty() {
        return Err(Error::Data(format!(
            "{}: no ranking rows found",
            path.display()
        )));
    }
    Ok(records)
}

const PLAYER_HEADER_TOKENS: &[&str] = &["player_id", "id", "player", "name", "name_first", "name_last"];

/// Reads a players table: `id,first_name,last_name[,...]` or `id,name`.
///
/// Returns external id → display name. The header row is recognised by a
/// field named like `player_id` or `name_first`.
pub fn parse_players_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_players_reader(std::io::BufReader::new(file), path)
}

pub fn parse_players_reader<R: std::io::Read>(source: R, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut reader = csv_reader(source);
    let mut names = BTreeMap::new();
    let mut first = true;
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(str::is_empty) {
            continue;
        }
        if std::mem::replace(&mut first, false)
            && row
                .iter()
                .any(|f| PLAYER_HEADER_TOKENS.contains(&f.to_ascii_lowercase().as_str()))
        {
            continue;
        }
        if row.len() < 2 {
            return Err(Error::parse(path, line, "expected at least 2 columns"));
        }
        let name = if row.len() >= 3 {
            [&row[1], &row[2]]
                .iter()
                .filter(|s| !s.is_empty())
                .copied()
                .collect::<Vec<_>>()
                .join(" ")
        } else {
            row[1].to_string()
        };
        names.insert(row[0].to_string(), name);
    }
    Ok(names)
}

/// Groups records by date, keeps ranks `≤ cutoff` and assigns dense indices.
///
/// Indices follow first appearance ordered by (date, rank, external id).
/// Dates with nothing inside the cutoff are dropped and counted in
/// `dropped_dates`. A player listed twice on one date is an error.
pub fn apply_cutoff(
    records: &[RawRecord],
    cutoff: u32,
    names: Option<&BTreeMap<String, String>>,
) -> Result<SnapshotCollection> {
    if cutoff == 0 {
        return Err(Error::Contract("cutoff must be at least 1".into()));
    }
    if records.is_empty() {
        return Err(Error::Data("no ranking records".into()));
    }

    let mut by_date: BTreeMap<NaiveDate, Vec<&RawRecord>> = BTreeMap::new();
    for r in records {
        by_date.entry(r.date).or_default().push(r);
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut roster = Vec::new();
    let mut snapshots = Vec::new();
    let mut dropped_dates = 0;
    let mut hasher = Sha256::new();
    hasher.update(format!("cutoff={cutoff}\n"));

    for (date, mut rows) in by_date {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.player.as_str()) {
                return Err(Error::Data(format!(
                    "player {} listed twice on {} (line {})",
                    r.player, date, r.line
                )));
            }
        }
        rows.retain(|r| r.rank <= cutoff);
        if rows.is_empty() {
            dropped_dates += 1;
            continue;
        }
        rows.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.player.cmp(&b.player)));
        hasher.update(date.format("%Y%m%d").to_string());
        let entries = rows
            .iter()
            .map(|r| {
                hasher.update(format!(",{}:{}", r.player, r.rank));
                let player = *index.entry(r.player.clone()).or_insert_with(|| {
                    roster.push(PlayerId {
                        external_id: r.player.clone(),
                        display_name: names
                            .and_then(|m| m.get(&r.player))
                            .cloned()
                            .unwrap_or_else(|| r.player.clone()),
                    });
                    roster.len() - 1
                });
                SnapshotEntry {
                    player,
                    rank: r.rank,
                }
            })
            .collect();
        hasher.update("\n");
        snapshots.push(RankingSnapshot { date, entries });
    }

    if snapshots.is_empty() {
        return Err(Error::Data(format!(
            "no player ranked within the top {cutoff} on any date"
        )));
    }
    if dropped_dates > 0 {
        log::warn!("{dropped_dates} date(s) had no player within the top {cutoff} and were dropped");
    }

    let collection = SnapshotCollection {
        snapshots,
        roster,
        cutoff,
        dropped_dates,
        fingerprint: hex::encode(hasher.finalize()),
    };
    collection.validate()?;
    Ok(collection)
}

/// Counts appearances, co-appearances and strict beats.
///
/// A tie (equal rank values) counts as a co-appearance but as a beat for
/// neither player.
pub fn build_incidence(collection: &SnapshotCollection) -> PairIncidence {
    let n = collection.n();
    let mut appearances = vec![0u32; n];
    let mut co_appearances = SquareMatrix::filled(n, 0u32);
    let mut beats = SquareMatrix::filled(n, 0u32);

    for snap in &collection.snapshots {
        for (a, upper) in snap.entries.iter().enumerate() {
            appearances[upper.player] += 1;
            for lower in &snap.entries[a + 1..] {
                let (i, j) = (upper.player, lower.player);
                *co_appearances.get_mut(i, j) += 1;
                *co_appearances.get_mut(j, i) += 1;
                if upper.rank < lower.rank {
                    *beats.get_mut(i, j) += 1;
                }
            }
        }
    }

    PairIncidence {
        n,
        appearances,
        co_appearances,
        beats,
        fingerprint: collection.fingerprint.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn rec(date: &str, rank: u32, player: &str) -> RawRecord {
        RawRecord {
            date: parse_date(date).unwrap(),
            rank,
            player: player.into(),
            points: None,
            line: 0,
        }
    }

    #[test]
    fn parses_row_fields() {
        let f = write_tmp("19900101,1,101736,3000\n");
        let recs = parse_snapshot_file(f.path(), SourceFormat::Sackmann).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].date, NaiveDate::from_ymd_opt(1990, 1, 1).unwrap());
        assert_eq!(recs[0].rank, 1);
        assert_eq!(recs[0].player, "101736");
        assert_eq!(recs[0].points, Some(3000));
    }

    #[test]
    fn skips_header_and_keeps_order() {
        let f = write_tmp("ranking_date,rank,player,points\n19900108,2,b,10\n19900101,1,a,20\n");
        let recs = parse_snapshot_file(f.path(), SourceFormat::Sackmann).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].player, "b");
        assert_eq!(recs[1].player, "a");
    }

    #[test]
    fn blank_points_and_trailing_columns() {
        let f = write_tmp("19730827,1,100001,,extra\n19730827,2,100002,5,x,y\n");
        let recs = parse_snapshot_file(f.path(), SourceFormat::Sackmann).unwrap();
        assert_eq!(recs[0].points, None);
        assert_eq!(recs[1].points, Some(5));
    }

    #[test]
    fn bad_rank_names_the_line() {
        let f = write_tmp("ranking_date,rank,player,points\n19900101,1,a,1\n19900101,one,101736,3000\n");
        match parse_snapshot_file(f.path(), SourceFormat::Sackmann) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("rank"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_date_and_arity_are_errors() {
        let f = write_tmp("19900101,1,a,1\n1990-01-08,1,a,1\n");
        assert!(matches!(
            parse_snapshot_file(f.path(), SourceFormat::Sackmann),
            Err(Error::Parse { line: 2, .. })
        ));
        let f = write_tmp("19900101,1,a\n");
        assert!(matches!(
            parse_snapshot_file(f.path(), SourceFormat::Sackmann),
            Err(Error::Parse { line: 1, .. })
        ));
        assert_eq!(
            parse_snapshot_file(f.path(), SourceFormat::Minimal).unwrap().len(),
            1
        );
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("");
        assert!(matches!(
            parse_snapshot_file(f.path(), SourceFormat::Sackmann),
            Err(Error::Data(_))
        ));
        let f = write_tmp("ranking_date,rank,player,points\n");
        assert!(parse_snapshot_file(f.path(), SourceFormat::Sackmann).is_err());
    }

    #[test]
    fn players_file_with_header() {
        let f = write_tmp(
            "player_id,name_first,name_last,hand\n104925,Novak,Djokovic,R\n103819,Roger,Federer,R\n",
        );
        let names = parse_players_file(f.path()).unwrap();
        assert_eq!(names["104925"], "Novak Djokovic");
        assert_eq!(names.len(), 2);
        let f = write_tmp("a,Alpha\n");
        assert_eq!(parse_players_file(f.path()).unwrap()["a"], "Alpha");
    }

    #[test]
    fn cutoff_truncates_prefix() {
        let recs: Vec<_> = (1..=100).map(|r| rec("19900101", r, &format!("p{r}"))).collect();
        let c = apply_cutoff(&recs, 10, None).unwrap();
        assert_eq!(c.snapshots.len(), 1);
        assert_eq!(c.snapshots[0].entries.len(), 10);
        assert_eq!(c.n(), 10);
    }

    #[test]
    fn roster_is_union_of_top_sets() {
        let mut recs = Vec::new();
        for (r, p) in ["a", "b", "c", "x"].iter().enumerate() {
            recs.push(rec("19900101", r as u32 + 1, p));
        }
        for (r, p) in ["c", "a", "d", "b"].iter().enumerate() {
            recs.push(rec("19900108", r as u32 + 1, p));
        }
        let c = apply_cutoff(&recs, 3, None).unwrap();
        let ids: Vec<_> = c.roster.iter().map(|p| p.external_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c", "d"]);
    }

    #[test]
    fn index_order_breaks_ties_by_external_id() {
        let recs = vec![
            rec("19900108", 1, "z"),
            rec("19900101", 2, "m"),
            rec("19900101", 2, "k"),
            rec("19900101", 1, "q"),
        ];
        let c = apply_cutoff(&recs, 5, None).unwrap();
        let ids: Vec<_> = c.roster.iter().map(|p| p.external_id.as_str()).collect();
        assert_eq!(ids, ["q", "k", "m", "z"]);
    }

    #[test]
    fn empty_dates_are_dropped_and_counted() {
        let recs = vec![
            rec("19900101", 1, "a"),
            rec("19900108", 7, "b"),
            rec("19900115", 2, "b"),
        ];
        let c = apply_cutoff(&recs, 3, None).unwrap();
        assert_eq!(c.snapshots.len(), 2);
        assert_eq!(c.dropped_dates, 1);
    }

    #[test]
    fn duplicate_player_on_a_date_is_an_error() {
        let recs = vec![rec("19900101", 1, "a"), rec("19900101", 2, "a")];
        assert!(matches!(apply_cutoff(&recs, 3, None), Err(Error::Data(_))));
    }

    #[test]
    fn zero_cutoff_and_empty_input() {
        assert!(apply_cutoff(&[rec("19900101", 1, "a")], 0, None).is_err());
        assert!(apply_cutoff(&[], 3, None).is_err());
    }

    #[test]
    fn display_names_come_from_players_map() {
        let mut names = BTreeMap::new();
        names.insert("a".to_string(), "Alice".to_string());
        let c = apply_cutoff(&[rec("19900101", 1, "a"), rec("19900101", 2, "b")], 3, Some(&names))
            .unwrap();
        assert_eq!(c.roster[0].display_name, "Alice");
        assert_eq!(c.roster[1].display_name, "b");
    }

    #[test]
    fn incidence_three_snapshot_instance() {
        let c = SnapshotCollection::from_orders(&[
            vec!["A", "B"],
            vec!["B", "A"],
            vec!["A", "B", "C"],
        ])
        .unwrap();
        let inc = build_incidence(&c);
        let (a, b, cc) = (0, 1, 2);
        assert_eq!(inc.beats.at(a, b), 2);
        assert_eq!(inc.beats.at(b, a), 1);
        assert_eq!(inc.appearances, vec![3, 3, 1]);
        assert_eq!(inc.co_appearances.at(a, b), 3);
        assert_eq!(inc.co_appearances.at(a, cc), 1);
        assert_eq!(inc.beats.at(cc, a), 0);
    }

    #[test]
    fn incidence_single_comparison() {
        let c = SnapshotCollection::from_orders(&[vec!["A", "B"]]).unwrap();
        let inc = build_incidence(&c);
        assert_eq!(inc.beats.at(0, 1), 1);
        assert_eq!(inc.beats.at(1, 0), 0);
    }

    #[test]
    fn ties_count_as_co_appearance_only() {
        let c = apply_cutoff(&[rec("19900101", 1, "A"), rec("19900101", 1, "B")], 3, None).unwrap();
        let inc = build_incidence(&c);
        assert_eq!(inc.beats.at(0, 1), 0);
        assert_eq!(inc.beats.at(1, 0), 0);
        assert_eq!(inc.co_appearances.at(0, 1), 1);
        assert_eq!(inc.co_appearances.at(0, 0), 0);
    }

    #[test]
    fn never_co_ranked_players_have_zero_counts() {
        let c = SnapshotCollection::from_orders(&[vec!["A", "B"], vec!["C", "D"]]).unwrap();
        let inc = build_incidence(&c);
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert_eq!(inc.co_appearances.at(i, j), 0);
            assert_eq!(inc.beats.at(i, j), 0);
            assert_eq!(inc.beats.at(j, i), 0);
        }
    }
}
