//! End-to-end orchestration and the artifacts it writes.
//!
//! A [`RunManifest`] pins every input and parameter of a run. The
//! [`run_pipeline`] driver executes ingest → weights → walk → dominance →
//! linear extensions and writes, into the manifest's output directory:
//!
//! * `poset-k{κ}.json`: roster, cover edges, maximal players, optional CDFs;
//! * `hasse-k{κ}.dot`: the Hasse diagram, maximal players on the right;
//! * `avg-ranks-k{κ}.csv`: average rank over sampled linear extensions;
//! * `run-k{κ}.log`: `key=value` diagnostics and timings.
//!
//! Every artifact except the log is a pure function of the manifest and
//! embeds the manifest fingerprint.
//!
//! The cross-cutoff analysis ([`top_k_common_players`], [`correlate`])
//! operates on average-rank CSVs from several runs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dominance::{build_poset, DominancePoset, EmpiricalRankDistribution};
use crate::error::{Error, Result};
use crate::ingest::{
    apply_cutoff, build_incidence, parse_players_file, parse_snapshot_file, PlayerId, SourceFormat,
};
use crate::linext::{sampled_average_ranks, AvgRankReport, ExtensionSamplerConfig};
use crate::walk::{run_chains, InitialState, WalkConfig};
use crate::weights::build_weights;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkSettings {
    pub seed: u64,
    pub samples: usize,
    /// Defaults to `50·n·(n−1)`.
    pub burn_in: Option<u64>,
    /// Defaults to `2(n−1)`.
    pub thin: Option<u64>,
    pub chains: usize,
    pub initial_state: InitialState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionSettings {
    pub count: usize,
    /// Defaults to the walk seed.
    pub seed: Option<u64>,
    pub burn_in: Option<u64>,
    pub thin: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub rankings: Vec<PathBuf>,
    pub players: Option<PathBuf>,
    pub format: SourceFormat,
    pub cutoff: u32,
    pub walk: WalkSettings,
    pub epsilon: f64,
    pub extensions: ExtensionSettings,
    pub emit_cdf: bool,
    pub dump_weights: bool,
    pub write_samples: bool,
    pub out_dir: PathBuf,
    pub tool_version: String,
}

impl RunManifest {
    /// A manifest with the standard experiment settings: 100000 walk samples,
    /// 100000 extensions, ε = 0, one chain.
    pub fn new(rankings: Vec<PathBuf>, cutoff: u32, out_dir: PathBuf) -> Self {
        Self {
            rankings,
            players: None,
            format: SourceFormat::Sackmann,
            cutoff,
            walk: WalkSettings {
                seed: 0,
                samples: 100_000,
                burn_in: None,
                thin: None,
                chains: 1,
                initial_state: InitialState::PrevalenceSorted,
            },
            epsilon: 0.0,
            extensions: ExtensionSettings {
                count: 100_000,
                seed: None,
                burn_in: None,
                thin: None,
            },
            emit_cdf: false,
            dump_weights: false,
            write_samples: false,
            out_dir,
            tool_version: TOOL_VERSION.to_string(),
        }
    }

    /// SHA-256 over the manifest (output directory excluded) and the bytes
    /// of every input file.
    pub fn fingerprint(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&canonical)?);
        for path in self.rankings.iter().chain(self.players.iter()) {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn poset_path(&self) -> PathBuf {
        self.out_dir.join(format!("poset-k{}.json", self.cutoff))
    }

    pub fn dot_path(&self) -> PathBuf {
        self.out_dir.join(format!("hasse-k{}.dot", self.cutoff))
    }

    pub fn avg_ranks_path(&self) -> PathBuf {
        self.out_dir.join(format!("avg-ranks-k{}.csv", self.cutoff))
    }

    pub fn log_path(&self) -> PathBuf {
        self.out_dir.join(format!("run-k{}.log", self.cutoff))
    }

    pub fn weights_path(&self) -> PathBuf {
        self.out_dir.join(format!("weights-k{}.csv", self.cutoff))
    }

    pub fn samples_path(&self) -> PathBuf {
        self.out_dir.join(format!("samples-k{}.txt", self.cutoff))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Manifest,
    Ingest,
    Weights,
    Walk,
    Dominance,
    Extensions,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Manifest => "manifest",
            Stage::Ingest => "ingest",
            Stage::Weights => "weights",
            Stage::Walk => "walk",
            Stage::Dominance => "dominance",
            Stage::Extensions => "extensions",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed (manifest {manifest})")]
pub struct PipelineError {
    pub stage: Stage,
    pub manifest: String,
    #[source]
    pub source: Error,
}

/// Everything a pipeline run produced.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub fingerprint: String,
    pub roster: Vec<PlayerId>,
    pub poset: DominancePoset,
    pub avg_ranks: AvgRankReport,
    pub poset_path: PathBuf,
    pub dot_path: PathBuf,
    pub avg_ranks_path: PathBuf,
    pub log_path: PathBuf,
}

impl PipelineOutput {
    /// Display names of the maximal players.
    pub fn maximal_names(&self) -> Vec<&str> {
        self.poset
            .maximal
            .iter()
            .map(|&i| self.roster[i].display_name.as_str())
            .collect()
    }
}

struct RunLog {
    lines: Vec<String>,
    clock: Instant,
}

impl RunLog {
    fn new() -> Self {
        Self {
            lines: Vec::new(),
            clock: Instant::now(),
        }
    }

    fn stage(&mut self, stage: Stage, fields: &[(&str, String)]) {
        let mut line = format!("stage={stage} elapsed_ms={}", self.clock.elapsed().as_millis());
        for (k, v) in fields {
            line.push_str(&format!(" {k}={v}"));
        }
        log::info!("{line}");
        self.lines.push(line);
        self.clock = Instant::now();
    }
}

/// Runs the whole pipeline and writes its artifacts.
pub fn run_pipeline(manifest: &RunManifest) -> std::result::Result<PipelineOutput, PipelineError> {
    let echo = serde_json::to_string(manifest).unwrap_or_default();
    let fail = |stage: Stage| {
        let manifest = echo.clone();
        move |source: Error| PipelineError {
            stage,
            manifest,
            source,
        }
    };

    let fingerprint = manifest.fingerprint().map_err(fail(Stage::Manifest))?;
    let mut log = RunLog::new();

    let mut records = Vec::new();
    for path in &manifest.rankings {
        records.extend(parse_snapshot_file(path, manifest.format).map_err(fail(Stage::Ingest))?);
    }
    let names = match &manifest.players {
        Some(p) => Some(parse_players_file(p).map_err(fail(Stage::Ingest))?),
        None => None,
    };
    let collection =
        apply_cutoff(&records, manifest.cutoff, names.as_ref()).map_err(fail(Stage::Ingest))?;
    let n = collection.n();
    log.stage(
        Stage::Ingest,
        &[
            ("files", manifest.rankings.len().to_string()),
            ("records", records.len().to_string()),
            ("cutoff", manifest.cutoff.to_string()),
            ("snapshots", collection.snapshots.len().to_string()),
            ("dropped_dates", collection.dropped_dates.to_string()),
            ("n", n.to_string()),
            ("fingerprint", fingerprint.clone()),
        ],
    );

    let incidence = build_incidence(&collection);
    let weights = build_weights(&incidence);
    std::fs::create_dir_all(&manifest.out_dir)
        .map_err(|e| Error::io(&manifest.out_dir, e))
        .map_err(fail(Stage::Output))?;
    if manifest.dump_weights {
        weights
            .write_csv(&manifest.weights_path())
            .map_err(fail(Stage::Weights))?;
    }
    log.stage(Stage::Weights, &[("data_fingerprint", collection.fingerprint.clone())]);

    let mut walk_cfg = WalkConfig::for_roster(n, manifest.walk.seed, manifest.walk.samples);
    walk_cfg.initial_state = manifest.walk.initial_state;
    if let Some(b) = manifest.walk.burn_in {
        walk_cfg.burn_in_steps = b;
    }
    if let Some(t) = manifest.walk.thin {
        walk_cfg.thin_steps = t;
    }
    let samples = run_chains(&weights, &walk_cfg, manifest.walk.chains).map_err(fail(Stage::Walk))?;
    if manifest.write_samples {
        samples
            .write_text(&manifest.samples_path())
            .map_err(fail(Stage::Output))?;
    }
    log.stage(
        Stage::Walk,
        &[
            ("samples", samples.len().to_string()),
            ("chains", samples.chains.to_string()),
            ("burn_in", walk_cfg.burn_in_steps.to_string()),
            ("thin", walk_cfg.thin_steps.to_string()),
            ("rng", samples.rng_algorithm.clone()),
        ],
    );

    let dist = EmpiricalRankDistribution::from_samples(&samples).map_err(fail(Stage::Dominance))?;
    let poset = build_poset(&dist, manifest.epsilon).map_err(fail(Stage::Dominance))?;
    poset.audit().map_err(fail(Stage::Dominance))?;
    log.stage(
        Stage::Dominance,
        &[
            ("epsilon", manifest.epsilon.to_string()),
            ("cover_edges", poset.cover_edges.len().to_string()),
            ("maximal", poset.maximal.len().to_string()),
            ("closure_applied", poset.closure_applied.to_string()),
        ],
    );

    let mut ext_cfg = ExtensionSamplerConfig::for_poset(
        n,
        manifest.extensions.count,
        manifest.extensions.seed.unwrap_or(manifest.walk.seed),
    );
    if let Some(b) = manifest.extensions.burn_in {
        ext_cfg.burn_in_steps = b;
    }
    if let Some(t) = manifest.extensions.thin {
        ext_cfg.thin_steps = t;
    }
    let avg_ranks = sampled_average_ranks(&poset, &ext_cfg).map_err(fail(Stage::Extensions))?;
    log.stage(
        Stage::Extensions,
        &[
            ("extensions", avg_ranks.extensions_sampled.to_string()),
            ("burn_in", ext_cfg.burn_in_steps.to_string()),
            ("thin", ext_cfg.thin_steps.to_string()),
        ],
    );

    let doc = PosetDocument::new(
        &fingerprint,
        manifest.cutoff,
        &collection.roster,
        &poset,
        samples.len(),
        manifest.emit_cdf.then_some(&dist),
    );
    doc.write(&manifest.poset_path()).map_err(fail(Stage::Output))?;
    export_hasse(&poset, &collection.roster, &manifest.dot_path(), &fingerprint)
        .map_err(fail(Stage::Output))?;
    let labeled = LabeledAvgRanks {
        cutoff: Some(manifest.cutoff),
        fingerprint: Some(fingerprint.clone()),
        players: collection.roster.clone(),
        avg_rank: avg_ranks.avg_rank.clone(),
        extensions_sampled: avg_ranks.extensions_sampled,
    };
    labeled
        .write_csv(&manifest.avg_ranks_path())
        .map_err(fail(Stage::Output))?;
    log.stage(Stage::Output, &[("out_dir", manifest.out_dir.display().to_string())]);

    let log_path = manifest.log_path();
    std::fs::write(&log_path, log.lines.join("\n") + "\n")
        .map_err(|e| Error::io(&log_path, e))
        .map_err(fail(Stage::Output))?;

    Ok(PipelineOutput {
        fingerprint,
        roster: collection.roster,
        poset,
        avg_ranks,
        poset_path: manifest.poset_path(),
        dot_path: manifest.dot_path(),
        avg_ranks_path: manifest.avg_ranks_path(),
        log_path,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub external_id: String,
    pub name: String,
}

/// On-disk form of a dominance poset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosetDocument {
    pub manifest_fingerprint: String,
    pub cutoff: u32,
    pub roster: Vec<RosterEntry>,
    pub sample_count: usize,
    pub epsilon: f64,
    /// `[better, worse]` roster indices.
    pub cover_edges: Vec<[usize; 2]>,
    pub maximal: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdf: Option<Vec<Vec<f64>>>,
}

impl PosetDocument {
    pub fn new(
        fingerprint: &str,
        cutoff: u32,
        roster: &[PlayerId],
        poset: &DominancePoset,
        sample_count: usize,
        cdf: Option<&EmpiricalRankDistribution>,
    ) -> Self {
        Self {
            manifest_fingerprint: fingerprint.to_string(),
            cutoff,
            roster: roster
                .iter()
                .map(|p| RosterEntry {
                    external_id: p.external_id.clone(),
                    name: p.display_name.clone(),
                })
                .collect(),
            sample_count,
            epsilon: poset.epsilon,
            cover_edges: poset.cover_edges.iter().map(|&(a, b)| [a, b]).collect(),
            maximal: poset.maximal.clone(),
            cdf: cdf.map(|d| d.matrix().rows().map(<[f64]>::to_vec).collect()),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Rebuilds the poset and checks that the stored maximal set agrees.
    pub fn to_poset(&self) -> Result<DominancePoset> {
        let edges: Vec<(usize, usize)> = self.cover_edges.iter().map(|e| (e[0], e[1])).collect();
        let poset = DominancePoset::from_cover_edges(self.roster.len(), &edges, self.epsilon)?;
        if poset.maximal != self.maximal {
            return Err(Error::Structural(
                "stored maximal set disagrees with cover edges".into(),
            ));
        }
        Ok(poset)
    }

    pub fn players(&self) -> Vec<PlayerId> {
        self.roster
            .iter()
            .map(|r| PlayerId {
                external_id: r.external_id.clone(),
                display_name: r.name.clone(),
            })
            .collect()
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders the Hasse diagram as DOT text.
///
/// Edges run better → worse; `rankdir=RL` lays the graph out horizontally
/// with maximal players on the right.
pub fn hasse_dot(poset: &DominancePoset, roster: &[PlayerId], fingerprint: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("// manifest_fingerprint: {fingerprint}\n"));
    out.push_str("digraph hasse {\n  rankdir=RL;\n  node [shape=box];\n");
    for (i, p) in roster.iter().enumerate() {
        out.push_str(&format!("  n{i} [label=\"{}\"];\n", dot_escape(&p.display_name)));
    }
    for &(a, b) in &poset.cover_edges {
        out.push_str(&format!("  n{a} -> n{b};\n"));
    }
    out.push_str("}\n");
    out
}

pub fn export_hasse(
    poset: &DominancePoset,
    roster: &[PlayerId],
    path: &Path,
    fingerprint: &str,
) -> Result<()> {
    if roster.len() != poset.n() {
        return Err(Error::Contract("roster size differs from poset size".into()));
    }
    std::fs::write(path, hasse_dot(poset, roster, fingerprint)).map_err(|e| Error::io(path, e))
}

/// Average ranks tied to player identities, as stored in the CSV artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledAvgRanks {
    pub cutoff: Option<u32>,
    pub fingerprint: Option<String>,
    pub players: Vec<PlayerId>,
    pub avg_rank: Vec<f64>,
    pub extensions_sampled: usize,
}

impl LabeledAvgRanks {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        if let Some(fp) = &self.fingerprint {
            writeln!(out, "# manifest_fingerprint={fp}").map_err(io)?;
        }
        if let Some(c) = self.cutoff {
            writeln!(out, "# cutoff={c}").map_err(io)?;
        }
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        w.write_record(["external_id", "name", "avg_rank", "extensions_sampled"])
            .map_err(csv_err)?;
        for (p, r) in self.players.iter().zip(&self.avg_rank) {
            w.write_record([
                p.external_id.as_str(),
                p.display_name.as_str(),
                &r.to_string(),
                &self.extensions_sampled.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cutoff = None;
        let mut fingerprint = None;
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix('#') {
                match meta.trim().split_once('=') {
                    Some(("cutoff", v)) => {
                        cutoff = Some(v.parse().map_err(|_| {
                            Error::Data(format!("{}: bad cutoff header", path.display()))
                        })?)
                    }
                    Some(("manifest_fingerprint", v)) => fingerprint = Some(v.to_string()),
                    _ => {}
                }
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut players = Vec::new();
        let mut avg_rank = Vec::new();
        let mut extensions_sampled = None;
        for row in reader.records() {
            let row = row.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::parse(path, line, e.to_string())
            })?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            if row.len() < 4 {
                return Err(Error::parse(path, line, "expected 4 columns"));
            }
            let rank: f64 = row[2]
                .parse()
                .map_err(|_| Error::parse(path, line, "unparseable avg_rank"))?;
            let count: usize = row[3]
                .parse()
                .map_err(|_| Error::parse(path, line, "unparseable extensions_sampled"))?;
            extensions_sampled.get_or_insert(count);
            players.push(PlayerId {
                external_id: row[0].to_string(),
                display_name: row[1].to_string(),
            });
            avg_rank.push(rank);
        }
        let extensions_sampled = extensions_sampled
            .ok_or_else(|| Error::Data(format!("{}: no players", path.display())))?;
        Ok(Self {
            cutoff,
            fingerprint,
            players,
            avg_rank,
            extensions_sampled,
        })
    }

    fn rank_of(&self, external_id: &str) -> Option<f64> {
        self.players
            .iter()
            .position(|p| p.external_id == external_id)
            .map(|i| self.avg_rank[i])
    }

    /// External ids of the best `k` players by average rank, ties by id.
    pub fn top(&self, k: usize) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.players.len()).collect();
        idx.sort_by(|&a, &b| {
            self.avg_rank[a]
                .total_cmp(&self.avg_rank[b])
                .then_with(|| self.players[a].external_id.cmp(&self.players[b].external_id))
        });
        idx.into_iter()
            .take(k)
            .map(|i| self.players[i].external_id.as_str())
            .collect()
    }
}

/// Players in the best `k` of every report, ordered by the first report.
pub fn top_k_common_players(reports: &[LabeledAvgRanks], k: usize) -> Result<Vec<String>> {
    if reports.len() < 2 {
        return Err(Error::Contract("need at least two reports".into()));
    }
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    let universe: HashSet<&str> = reports[0]
        .players
        .iter()
        .map(|p| p.external_id.as_str())
        .filter(|id| reports[1..].iter().all(|r| r.rank_of(id).is_some()))
        .collect();
    if universe.is_empty() {
        return Err(Error::Data("reports share no players".into()));
    }
    let tops: Vec<HashSet<&str>> = reports[1..].iter().map(|r| r.top(k).into_iter().collect()).collect();
    let common: Vec<String> = reports[0]
        .top(k)
        .into_iter()
        .filter(|id| tops.iter().all(|t| t.contains(id)))
        .map(str::to_string)
        .collect();
    if common.is_empty() {
        log::warn!("no player is in the top {k} of every report");
    }
    Ok(common)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` when the response has zero variance.
    pub r_squared: Option<f64>,
}

/// Simple least squares of `y` on `x`; `None` when `x` has zero variance.
pub fn ols(x: &[f64], y: &[f64]) -> Option<OlsFit> {
    let n = x.len() as f64;
    if x.len() != y.len() || x.is_empty() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = (syy != 0.0).then(|| ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0));
    Some(OlsFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairFit {
    /// Index into the (cutoff-sorted) report list of the predictor.
    pub predictor: usize,
    pub response: usize,
    pub predictor_cutoff: Option<u32>,
    pub response_cutoff: Option<u32>,
    pub points: usize,
    /// `None`: the predictor has zero variance and the fit is undefined.
    pub fit: Option<OlsFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub predictor_cutoff: Option<u32>,
    pub response_cutoff: Option<u32>,
    pub external_id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffCorrelation {
    pub subset: Vec<String>,
    pub pairs: Vec<PairFit>,
    pub scatter: Vec<ScatterRow>,
}

/// Least-squares fits of average ranks between every pair of reports.
///
/// When every report carries a cutoff the reports are ordered by cutoff and
/// the smaller-cutoff report is the predictor; otherwise the earlier report
/// in the list predicts the later one.
pub fn correlate(reports: &[LabeledAvgRanks], subset: &[String]) -> Result<CutoffCorrelation> {
    if subset.len() < 3 {
        return Err(Error::Contract(format!(
            "a fit needs at least 3 common players, got {}",
            subset.len()
        )));
    }
    let mut order: Vec<usize> = (0..reports.len()).collect();
    if reports.iter().all(|r| r.cutoff.is_some()) {
        order.sort_by_key(|&i| reports[i].cutoff);
    }
    let columns: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            subset
                .iter()
                .map(|id| {
                    reports[i].rank_of(id).ok_or_else(|| {
                        Error::Data(format!("player {id} missing from report {i}"))
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    let mut scatter = Vec::new();
    for pred in 0..order.len() {
        for resp in pred + 1..order.len() {
            let (x, y) = (&columns[pred], &columns[resp]);
            let predictor_cutoff = reports[order[pred]].cutoff;
            let response_cutoff = reports[order[resp]].cutoff;
            pairs.push(PairFit {
                predictor: pred,
                response: resp,
                predictor_cutoff,
                response_cutoff,
                points: subset.len(),
                fit: ols(x, y),
            });
            for (k, id) in subset.iter().enumerate() {
                scatter.push(ScatterRow {
                    predictor_cutoff,
                    response_cutoff,
                    external_id: id.clone(),
                    x: x[k],
                    y: y[k],
                });
            }
        }
    }
    Ok(CutoffCorrelation {
        subset: subset.to_vec(),
        pairs,
        scatter,
    })
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CutoffCorrelation {
    /// Writes `fits.csv` and `scatter.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let fits = dir.join("fits.csv");
        let scatter = dir.join("scatter.csv");
        let csv_err = |p: &Path| {
            let p = p.to_path_buf();
            move |e: csv::Error| Error::Data(format!("{}: {e}", p.display()))
        };

        let mut w = csv::Writer::from_path(&fits).map_err(csv_err(&fits))?;
        w.write_record([
            "predictor_cutoff",
            "response_cutoff",
            "points",
            "slope",
            "intercept",
            "r_squared",
            "status",
        ])
        .map_err(csv_err(&fits))?;
        for p in &self.pairs {
            let (slope, intercept, r2, status) = match p.fit {
                Some(f) => (
                    f.slope.to_string(),
                    f.intercept.to_string(),
                    opt_str(f.r_squared),
                    if f.r_squared.is_some() { "ok" } else { "r2_undefined" },
                ),
                None => (String::new(), String::new(), String::new(), "undefined"),
            };
            w.write_record([
                opt_str(p.predictor_cutoff),
                opt_str(p.response_cutoff),
                p.points.to_string(),
                slope,
                intercept,
                r2,
                status.to_string(),
            ])
            .map_err(csv_err(&fits))?;
        }
        w.flush().map_err(|e| Error::io(&fits, e))?;

        let mut w = csv::Writer::from_path(&scatter).map_err(csv_err(&scatter))?;
        w.write_record(["predictor_cutoff", "response_cutoff", "external_id", "x", "y"])
            .map_err(csv_err(&scatter))?;
        for r in &self.scatter {
            w.write_record([
                opt_str(r.predictor_cutoff),
                opt_str(r.response_cutoff),
                r.external_id.clone(),
                r.x.to_string(),
                r.y.to_string(),
            ])
            .map_err(csv_err(&scatter))?;
        }
        w.flush().map_err(|e| Error::io(&scatter, e))?;
        Ok((fits, scatter))
    }
}

/// Runs one pipeline per cutoff concurrently, each into its own artifacts.
pub fn run_cutoffs(
    base: &RunManifest,
    cutoffs: &[u32],
) -> Vec<std::result::Result<PipelineOutput, PipelineError>> {
    use rayon::prelude::*;
    cutoffs
        .par_iter()
        .map(|&k| {
            let mut m = base.clone();
            m.cutoff = k;
            run_pipeline(&m)
        })
        .collect()
}

/// Fingerprints embedded in the poset JSON, DOT and CSV artifacts of a run.
pub fn artifact_fingerprints(output: &PipelineOutput) -> Result<BTreeMap<&'static str, String>> {
    let mut found = BTreeMap::new();
    found.insert("json", PosetDocument::read(&output.poset_path)?.manifest_fingerprint);
    let dot = std::fs::read_to_string(&output.dot_path).map_err(|e| Error::io(&output.dot_path, e))?;
    let dot_fp = dot
        .lines()
        .find_map(|l| l.strip_prefix("// manifest_fingerprint: "))
        .ok_or_else(|| Error::Data("DOT file has no fingerprint".into()))?;
    found.insert("dot", dot_fp.to_string());
    let csv_fp = LabeledAvgRanks::read_csv(&output.avg_ranks_path)?
        .fingerprint
        .ok_or_else(|| Error::Data("CSV file has no fingerprint".into()))?;
    found.insert("csv", csv_fp);
    Ok(found)
}
