//! The lazy data-driven transposition walk on the symmetric group.
//!
//! A state is a full ranking of the roster. Each step stays put with
//! probability 1/2; otherwise it picks an unordered pair of players with
//! probability proportional to [`oriented_weight`] and swaps their ranks.
//!
//! [`step`] is the direct O(n²) implementation of one transition. The sampler
//! behind [`run_chain`] keeps the pair weights in a Fenwick tree instead, so
//! a move costs O(d log n²) where `d` is the rank distance of the swapped
//! players. Both consume the random stream identically.
//!
//! For `n ≤ 7` the full kernel can be materialized: [`exact_stationary`]
//! solves for the stationary vector and [`support_graph_check`] inspects the
//! support graph by breadth-first search.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, ChainRng, RNG_ALGORITHM};
use crate::weights::{oriented_unchecked, oriented_weight, WeightMatrix};

/// Largest roster for which the kernel is materialized.
pub const EXACT_MAX_N: usize = 7;

/// A ranking of `n` players; rank 1 is best.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    rank_of: Vec<u32>,
    pos_of: Vec<u32>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            rank_of: (1..=n as u32).collect(),
            pos_of: (0..n as u32).collect(),
        }
    }

    /// Builds from `rank_of`, which must be a bijection onto `1..=n`.
    pub fn from_ranks(rank_of: Vec<u32>) -> Result<Self> {
        let n = rank_of.len();
        let mut pos_of = vec![u32::MAX; n];
        for (player, &r) in rank_of.iter().enumerate() {
            if r == 0 || r as usize > n || pos_of[r as usize - 1] != u32::MAX {
                return Err(Error::Contract(format!(
                    "rank vector {rank_of:?} is not a permutation of 1..={n}"
                )));
            }
            pos_of[r as usize - 1] = player as u32;
        }
        Ok(Self { rank_of, pos_of })
    }

    /// Builds from a best-to-worst list of player indices.
    pub fn from_order(order: &[usize]) -> Result<Self> {
        let mut rank_of = vec![0u32; order.len()];
        for (pos, &p) in order.iter().enumerate() {
            if p >= order.len() {
                return Err(Error::Contract(format!("player {p} out of range")));
            }
            rank_of[p] = pos as u32 + 1;
        }
        Self::from_ranks(rank_of)
    }

    pub fn n(&self) -> usize {
        self.rank_of.len()
    }

    /// `rank_of()[i]` is the 1-based rank of player `i`.
    pub fn rank_of(&self) -> &[u32] {
        &self.rank_of
    }

    /// `pos_of()[r - 1]` is the player at rank `r`.
    pub fn pos_of(&self) -> &[u32] {
        &self.pos_of
    }

    pub fn rank(&self, player: usize) -> u32 {
        self.rank_of[player]
    }

    /// True when `i` is ranked strictly above `j`.
    pub fn above(&self, i: usize, j: usize) -> bool {
        self.rank_of[i] < self.rank_of[j]
    }

    /// Exchanges the ranks of players `i` and `j`.
    pub fn swap_players(&mut self, i: usize, j: usize) {
        let (ri, rj) = (self.rank_of[i], self.rank_of[j]);
        self.rank_of[i] = rj;
        self.rank_of[j] = ri;
        self.pos_of[rj as usize - 1] = i as u32;
        self.pos_of[ri as usize - 1] = j as u32;
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.n();
        self.pos_of.len() == n
            && self
                .rank_of
                .iter()
                .enumerate()
                .all(|(i, &r)| r >= 1 && r as usize <= n && self.pos_of[r as usize - 1] as usize == i)
    }

    /// Position of this permutation in the lexicographic order of rank vectors.
    pub fn lex_index(&self) -> usize {
        lex_index(&self.rank_of)
    }

    /// Inverse of [`Permutation::lex_index`].
    pub fn from_lex_index(n: usize, mut index: usize) -> Self {
        let mut available: Vec<u32> = (1..=n as u32).collect();
        let mut rank_of = Vec::with_capacity(n);
        for k in (0..n).rev() {
            let f = factorial(k);
            rank_of.push(available.remove(index / f));
            index %= f;
        }
        Self::from_ranks(rank_of).expect("unranked vector is a permutation")
    }
}

fn lex_index(rank_of: &[u32]) -> usize {
    let n = rank_of.len();
    let mut index = 0;
    for (a, &r) in rank_of.iter().enumerate() {
        let smaller_later = rank_of[a + 1..].iter().filter(|&&s| s < r).count();
        index += smaller_later * factorial(n - 1 - a);
    }
    index
}

pub fn factorial(k: usize) -> usize {
    (1..=k).product()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// Players ordered by descending appearance count, ties by index.
    #[default]
    PrevalenceSorted,
    /// A uniformly shuffled ranking drawn from the chain's own stream.
    SeededRandom,
}

impl std::str::FromStr for InitialState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prevalence-sorted" => Ok(InitialState::PrevalenceSorted),
            "seeded-random" => Ok(InitialState::SeededRandom),
            other => Err(Error::Data(format!("unknown initial state `{other}`"))),
        }
    }
}

impl std::fmt::Display for InitialState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitialState::PrevalenceSorted => "prevalence-sorted",
            InitialState::SeededRandom => "seeded-random",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub seed: u64,
    pub burn_in_steps: u64,
    pub thin_steps: u64,
    pub num_samples: usize,
    pub initial_state: InitialState,
}

impl WalkConfig {
    /// Defaults for a roster of `n`: burn-in `50·n·(n−1)`, thinning `2(n−1)`.
    pub fn for_roster(n: usize, seed: u64, num_samples: usize) -> Self {
        let n = n as u64;
        Self {
            seed,
            burn_in_steps: default_burn_in(n),
            thin_steps: default_thin(n),
            num_samples,
            initial_state: InitialState::PrevalenceSorted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin_steps == 0 {
            return Err(Error::Contract("thin_steps must be at least 1".into()));
        }
        if self.num_samples == 0 {
            return Err(Error::Contract("num_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        self.burn_in_steps + self.thin_steps * self.num_samples as u64
    }
}

pub fn default_burn_in(n: u64) -> u64 {
    50 * n * n.saturating_sub(1)
}

pub fn default_thin(n: u64) -> u64 {
    (2 * n.saturating_sub(1)).max(1)
}

/// Thinned draws from one or more chains, stored as packed rank vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    n: usize,
    ranks: Vec<u16>,
    pub config: WalkConfig,
    pub chains: usize,
    pub rng_algorithm: String,
    pub fingerprint: String,
}

impl SampleSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.ranks.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rank vector of sample `t`.
    pub fn ranks(&self, t: usize) -> &[u16] {
        &self.ranks[t * self.n..(t + 1) * self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u16]> {
        self.ranks.chunks(self.n.max(1))
    }

    pub fn permutation(&self, t: usize) -> Permutation {
        Permutation::from_ranks(self.ranks(t).iter().map(|&r| u32::from(r)).collect())
            .expect("stored samples are permutations")
    }

    /// Builds a set from explicit permutations (all over the same `n`).
    pub fn from_permutations(perms: &[Permutation], config: WalkConfig, fingerprint: &str) -> Result<Self> {
        let n = perms.first().map(Permutation::n).unwrap_or(0);
        let mut ranks = Vec::with_capacity(n * perms.len());
        for p in perms {
            if p.n() != n {
                return Err(Error::Contract("samples must share one roster size".into()));
            }
            ranks.extend(p.rank_of().iter().map(|&r| r as u16));
        }
        Ok(Self {
            n,
            ranks,
            config,
            chains: 1,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            fingerprint: fingerprint.to_string(),
        })
    }

    /// Writes a `#`-prefixed key=value header then one sample per line.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(out, "# rankwalk-samples v1").map_err(io)?;
        writeln!(out, "# n={}", self.n).map_err(io)?;
        writeln!(out, "# seed={}", self.config.seed).map_err(io)?;
        writeln!(out, "# burn_in={}", self.config.burn_in_steps).map_err(io)?;
        writeln!(out, "# thin={}", self.config.thin_steps).map_err(io)?;
        writeln!(out, "# num_samples={}", self.config.num_samples).map_err(io)?;
        writeln!(out, "# initial_state={}", self.config.initial_state).map_err(io)?;
        writeln!(out, "# chains={}", self.chains).map_err(io)?;
        writeln!(out, "# rng={}", self.rng_algorithm).map_err(io)?;
        writeln!(out, "# fingerprint={}", self.fingerprint).map_err(io)?;
        let mut line = String::new();
        for row in self.iter() {
            line.clear();
            for (k, r) in row.iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                line.push_str(&r.to_string());
            }
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = std::collections::HashMap::new();
        let mut ranks = Vec::new();
        let mut n = None;
        for (k, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line_no = k as u64 + 1;
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((key, value)) = meta.trim().split_once('=') {
                    header.insert(key.to_string(), value.to_string());
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<u32> = line
                .split_whitespace()
                .map(|t| t.parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, line_no, "non-integer rank"))?;
            let expected = *n.get_or_insert(row.len());
            if row.len() != expected {
                return Err(Error::parse(path, line_no, "sample length differs from first sample"));
            }
            Permutation::from_ranks(row.clone())
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
            ranks.extend(row.iter().map(|&r| r as u16));
        }
        let n = n.ok_or_else(|| Error::Data(format!("{}: no samples", path.display())))?;
        let get = |key: &str| -> Result<String> {
            header
                .get(key)
                .cloned()
                .ok_or_else(|| Error::Data(format!("{}: missing header `{key}`", path.display())))
        };
        let num = |key: &str| -> Result<u64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Data(format!("{}: bad header `{key}`", path.display())))
        };
        let config = WalkConfig {
            seed: num("seed")?,
            burn_in_steps: num("burn_in")?,
            thin_steps: num("thin")?,
            num_samples: num("num_samples")? as usize,
            initial_state: get("initial_state")?.parse()?,
        };
        Ok(Self {
            n,
            ranks,
            config,
            chains: num("chains")? as usize,
            rng_algorithm: get("rng")?,
            fingerprint: get("fingerprint")?,
        })
    }
}

/// One transition of the walk, computed directly from all pair weights.
pub fn step<R: Rng + ?Sized>(perm: &Permutation, w: &WeightMatrix, rng: &mut R) -> Result<Permutation> {
    let n = perm.n();
    if w.n() != n {
        return Err(Error::Contract(format!(
            "permutation over {n} players but weights over {}",
            w.n()
        )));
    }
    if n < 2 {
        return Err(Error::Contract("the walk needs at least two players".into()));
    }
    let mut next = perm.clone();
    if rng.gen::<bool>() {
        return Ok(next);
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += oriented_weight(w, perm, i, j)?;
        }
    }
    let target = rng.gen::<f64>() * total;
    let mut running = 0.0;
    let mut chosen = (n - 2, n - 1);
    'scan: for i in 0..n {
        for j in i + 1..n {
            running += oriented_weight(w, perm, i, j)?;
            if running > target {
                chosen = (i, j);
                break 'scan;
            }
        }
    }
    next.swap_players(chosen.0, chosen.1);
    Ok(next)
}

/// Exact one-step distribution from `perm`: the lazy mass first, then one
/// entry per transposition in `(i, j)` lexicographic order.
pub fn transition_row(perm: &Permutation, w: &WeightMatrix) -> Result<Vec<(Permutation, f64)>> {
    let n = perm.n();
    if n < 2 || w.n() != n {
        return Err(Error::Contract("transition row needs n >= 2 matching weights".into()));
    }
    let mut moves = Vec::with_capacity(n * (n - 1) / 2 + 1);
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let ow = oriented_weight(w, perm, i, j)?;
            total += ow;
            let mut next = perm.clone();
            next.swap_players(i, j);
            moves.push((next, ow));
        }
    }
    let mut row = Vec::with_capacity(moves.len() + 1);
    row.push((perm.clone(), 0.5));
    row.extend(moves.into_iter().map(|(p, ow)| (p, 0.5 * ow / total)));
    Ok(row)
}

/// Fenwick tree over non-negative pair weights.
struct Fenwick {
    tree: Vec<f64>,
    leaves: Vec<f64>,
    top_bit: usize,
}

impl Fenwick {
    fn new(leaves: Vec<f64>) -> Self {
        let len = leaves.len();
        let mut f = Self {
            tree: vec![0.0; len + 1],
            leaves,
            top_bit: if len == 0 { 0 } else { 1 << (usize::BITS - 1 - len.leading_zeros()) },
        };
        f.rebuild();
        f
    }

    fn rebuild(&mut self) {
        let len = self.leaves.len();
        self.tree[1..].copy_from_slice(&self.leaves);
        self.tree[0] = 0.0;
        for i in 1..=len {
            let parent = i + (i & i.wrapping_neg());
            if parent <= len {
                self.tree[parent] += self.tree[i];
            }
        }
    }

    fn set(&mut self, index: usize, value: f64) {
        let delta = value - self.leaves[index];
        self.leaves[index] = value;
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut sum = 0.0;
        let mut i = self.leaves.len();
        while i > 0 {
            sum += self.tree[i];
            i &= i - 1;
        }
        sum
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`.
    fn find(&self, mut target: f64) -> usize {
        let len = self.leaves.len();
        let mut pos = 0;
        let mut bit = self.top_bit;
        while bit > 0 {
            let next = pos + bit;
            if next <= len && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            bit >>= 1;
        }
        pos.min(len - 1)
    }
}

/// Incremental sampler state for one chain.
struct Walker<'w> {
    w: &'w WeightMatrix,
    perm: Permutation,
    pair_index: Vec<usize>,
    pairs: Vec<(u32, u32)>,
    weights: Fenwick,
    moves_since_rebuild: usize,
}

impl<'w> Walker<'w> {
    fn new(w: &'w WeightMatrix, perm: Permutation) -> Self {
        let n = w.n();
        let mut pair_index = vec![usize::MAX; n * n];
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        let mut leaves = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                pair_index[i * n + j] = pairs.len();
                pair_index[j * n + i] = pairs.len();
                pairs.push((i as u32, j as u32));
                leaves.push(oriented_unchecked(w, perm.rank_of(), i, j));
            }
        }
        Self {
            w,
            perm,
            pair_index,
            pairs,
            weights: Fenwick::new(leaves),
            moves_since_rebuild: 0,
        }
    }

    fn refresh(&mut self, a: usize, b: usize) {
        let n = self.w.n();
        let idx = self.pair_index[a * n + b];
        let value = oriented_unchecked(self.w, self.perm.rank_of(), a, b);
        self.weights.set(idx, value);
    }

    fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if rng.gen::<bool>() {
            return;
        }
        let target = rng.gen::<f64>() * self.weights.total();
        let (i, j) = self.pairs[self.weights.find(target)];
        let (i, j) = (i as usize, j as usize);
        let (lo, hi) = {
            let (ri, rj) = (self.perm.rank(i), self.perm.rank(j));
            (ri.min(rj) as usize, ri.max(rj) as usize)
        };
        self.perm.swap_players(i, j);
        self.refresh(i, j);
        for r in lo + 1..hi {
            let c = self.perm.pos_of()[r - 1] as usize;
            self.refresh(i, c);
            self.refresh(j, c);
        }
        self.moves_since_rebuild += 1;
        if self.moves_since_rebuild >= self.pairs.len() {
            self.weights.rebuild();
            self.moves_since_rebuild = 0;
        }
    }
}

fn initial_permutation(w: &WeightMatrix, state: InitialState, rng: &mut ChainRng) -> Permutation {
    let n = w.n();
    let mut order: Vec<usize> = (0..n).collect();
    match state {
        InitialState::PrevalenceSorted => {
            let prevalence = w.prevalence();
            order.sort_by(|&a, &b| prevalence[b].cmp(&prevalence[a]).then(a.cmp(&b)));
        }
        InitialState::SeededRandom => order.shuffle(rng),
    }
    Permutation::from_order(&order).expect("order is a permutation")
}

fn run_stream(w: &WeightMatrix, cfg: &WalkConfig, stream: u64, num_samples: usize) -> Vec<u16> {
    let n = w.n();
    let mut rng = rng::seeded(cfg.seed, stream);
    let start = initial_permutation(w, cfg.initial_state, &mut rng);
    let mut walker = Walker::new(w, start);
    for _ in 0..cfg.burn_in_steps {
        walker.advance(&mut rng);
    }
    let mut ranks = Vec::with_capacity(n * num_samples);
    for _ in 0..num_samples {
        for _ in 0..cfg.thin_steps {
            walker.advance(&mut rng);
        }
        ranks.extend(walker.perm.rank_of().iter().map(|&r| r as u16));
    }
    ranks
}

fn check_walkable(w: &WeightMatrix, cfg: &WalkConfig) -> Result<()> {
    cfg.validate()?;
    if w.n() < 2 {
        return Err(Error::Contract(format!(
            "the walk needs at least two players, roster has {}",
            w.n()
        )));
    }
    if w.n() > usize::from(u16::MAX) {
        return Err(Error::TooLarge(format!("roster of {} players", w.n())));
    }
    Ok(())
}

/// Runs one chain: burn-in, then one sample every `thin_steps` steps.
///
/// Deterministic in `(w, cfg)`; uses stream 0 of the seeded generator.
pub fn run_chain(w: &WeightMatrix, cfg: &WalkConfig) -> Result<SampleSet> {
    run_chains(w, cfg, 1)
}

/// Runs `chains` independent chains in parallel on streams `0..chains` and
/// concatenates their samples in stream order.
///
/// `cfg.num_samples` is split as evenly as possible, earlier chains taking
/// the remainder. Each chain performs its own burn-in.
pub fn run_chains(w: &WeightMatrix, cfg: &WalkConfig, chains: usize) -> Result<SampleSet> {
    check_walkable(w, cfg)?;
    if chains == 0 || chains > cfg.num_samples {
        return Err(Error::Contract(format!(
            "chain count {chains} must be in 1..={}",
            cfg.num_samples
        )));
    }
    let base = cfg.num_samples / chains;
    let extra = cfg.num_samples % chains;
    let parts: Vec<Vec<u16>> = (0..chains)
        .into_par_iter()
        .map(|c| run_stream(w, cfg, c as u64, base + usize::from(c < extra)))
        .collect();
    Ok(SampleSet {
        n: w.n(),
        ranks: parts.concat(),
        config: cfg.clone(),
        chains,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        fingerprint: w.fingerprint().to_string(),
    })
}

/// The full transition matrix over `S_n`, states in lexicographic order.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub n: usize,
    /// Sparse rows: `(target state, probability)`, lazy entry first.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl Kernel {
    pub fn states(&self) -> usize {
        self.rows.len()
    }

    pub fn self_loop(&self, state: usize) -> f64 {
        self.rows[state]
            .iter()
            .filter(|(t, _)| *t == state)
            .map(|(_, p)| p)
            .sum()
    }
}

fn check_exact(w: &WeightMatrix) -> Result<()> {
    if w.n() > EXACT_MAX_N {
        return Err(Error::TooLarge(format!(
            "exact computation over S_{} refused; at most n = {EXACT_MAX_N}",
            w.n()
        )));
    }
    if w.n() < 2 {
        return Err(Error::Contract("the walk needs at least two players".into()));
    }
    Ok(())
}

pub fn materialize_kernel(w: &WeightMatrix) -> Result<Kernel> {
    check_exact(w)?;
    let n = w.n();
    let rows = (0..factorial(n))
        .map(|s| {
            let perm = Permutation::from_lex_index(n, s);
            transition_row(&perm, w)
                .map(|row| row.into_iter().map(|(p, prob)| (p.lex_index(), prob)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(Kernel { n, rows })
}

/// Stationary distribution over `S_n`, indexed by [`Permutation::lex_index`].
#[derive(Clone, Debug)]
pub struct StationaryDistribution {
    pub n: usize,
    pub probs: Vec<f64>,
    /// `‖μP − μ‖₁` of the returned vector.
    pub residual: f64,
}

impl StationaryDistribution {
    pub fn state(&self, index: usize) -> Permutation {
        Permutation::from_lex_index(self.n, index)
    }
}

const DENSE_SOLVE_MAX_STATES: usize = 720;
const POWER_TOLERANCE: f64 = 1e-12;
const POWER_MAX_ITERATIONS: usize = 5_000_000;

fn apply_kernel(kernel: &Kernel, mu: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (s, row) in kernel.rows.iter().enumerate() {
        let m = mu[s];
        for &(t, p) in row {
            out[t] += m * p;
        }
    }
}

fn residual(kernel: &Kernel, mu: &[f64]) -> f64 {
    let mut next = vec![0.0; mu.len()];
    apply_kernel(kernel, mu, &mut next);
    next.iter().zip(mu).map(|(a, b)| (a - b).abs()).sum()
}

/// Solves `μ = μP`, `Σμ = 1` for the materialized kernel (`n ≤ 7`).
///
/// Up to 720 states the system is solved directly by LU factorization;
/// for `n = 7` the vector is power-iterated until the L1 residual drops
/// below 1e−12.
pub fn exact_stationary(w: &WeightMatrix) -> Result<StationaryDistribution> {
    let kernel = materialize_kernel(w)?;
    let size = kernel.states();
    let mut probs = if size <= DENSE_SOLVE_MAX_STATES {
        let mut a = nalgebra::DMatrix::<f64>::zeros(size, size);
        for (s, row) in kernel.rows.iter().enumerate() {
            for &(t, p) in row {
                a[(t, s)] += p;
            }
        }
        for s in 0..size {
            a[(s, s)] -= 1.0;
        }
        for s in 0..size {
            a[(size - 1, s)] = 1.0;
        }
        let mut b = nalgebra::DVector::<f64>::zeros(size);
        b[size - 1] = 1.0;
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numerical("stationary system is singular".into()))?;
        x.iter().copied().collect::<Vec<_>>()
    } else {
        let mut mu = vec![1.0 / size as f64; size];
        let mut next = vec![0.0; size];
        let mut converged = false;
        for _ in 0..POWER_MAX_ITERATIONS {
            apply_kernel(&kernel, &mu, &mut next);
            let diff: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut mu, &mut next);
            if diff < POWER_TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(
                "power iteration did not reach residual 1e-12".into(),
            ));
        }
        mu
    };
    for p in probs.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let residual = residual(&kernel, &probs);
    Ok(StationaryDistribution {
        n: w.n(),
        probs,
        residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportDiagnostics {
    pub strongly_connected: bool,
    /// Largest shortest-path distance; `None` when not strongly connected.
    pub diameter: Option<usize>,
    pub has_self_loops: bool,
}

/// Breadth-first search over the support graph of the kernel (`n ≤ 7`).
pub fn support_graph_check(w: &WeightMatrix) -> Result<SupportDiagnostics> {
    let kernel = materialize_kernel(w)?;
    let size = kernel.states();
    let adjacency: Vec<Vec<usize>> = kernel
        .rows
        .iter()
        .enumerate()
        .map(|(s, row)| {
            row.iter()
                .filter(|&&(t, p)| t != s && p > 0.0)
                .map(|&(t, _)| t)
                .collect()
        })
        .collect();
    let has_self_loops = (0..size).all(|s| kernel.self_loop(s) > 0.0);

    let mut dist = vec![usize::MAX; size];
    let mut queue = std::collections::VecDeque::with_capacity(size);
    let mut diameter = 0;
    for source in 0..size {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[source] = 0;
        queue.clear();
        queue.push_back(source);
        let mut reached = 1;
        while let Some(s) = queue.pop_front() {
            for &t in &adjacency[s] {
                if dist[t] == usize::MAX {
                    dist[t] = dist[s] + 1;
                    diameter = diameter.max(dist[t]);
                    reached += 1;
                    queue.push_back(t);
                }
            }
        }
        if reached < size {
            return Ok(SupportDiagnostics {
                strongly_connected: false,
                diameter: None,
                has_self_loops,
            });
        }
    }
    Ok(SupportDiagnostics {
        strongly_connected: true,
        diameter: Some(diameter),
        has_self_loops,
    })
}

/// Empirical frequency of each state of `S_n` (`n ≤ 7`), by lex index.
pub fn empirical_state_distribution(samples: &SampleSet) -> Result<Vec<f64>> {
    let n = samples.n();
    if n > EXACT_MAX_N {
        return Err(Error::TooLarge(format!("state histogram over S_{n}")));
    }
    let mut counts = vec![0u64; factorial(n)];
    let mut buf = vec![0u32; n];
    for row in samples.iter() {
        for (b, &r) in buf.iter_mut().zip(row) {
            *b = u32::from(r);
        }
        counts[lex_index(&buf)] += 1;
    }
    let total = samples.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_incidence, SnapshotCollection};
    use crate::weights::build_weights;
    use proptest::prelude::{any, prop_assert, proptest};
    use rand::Rng;

    fn three_player_weights() -> WeightMatrix {
        let c = SnapshotCollection::from_orders(&[
            vec!["A", "B"],
            vec!["B", "A"],
            vec!["A", "B", "C"],
        ])
        .unwrap();
        build_weights(&build_incidence(&c))
    }

    fn random_weights(n: usize, seed: u64) -> WeightMatrix {
        let mut rng = rng::seeded(seed, 99);
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { 1.0 + rng.gen::<f64>() * 10.0 })
                    .collect()
            })
            .collect();
        WeightMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn lex_index_roundtrip() {
        for n in 1..=5 {
            for k in 0..factorial(n) {
                let p = Permutation::from_lex_index(n, k);
                assert!(p.is_consistent());
                assert_eq!(p.lex_index(), k);
            }
        }
        assert_eq!(Permutation::identity(4).lex_index(), 0);
    }

    #[test]
    fn from_ranks_rejects_non_bijections() {
        assert!(Permutation::from_ranks(vec![1, 1, 2]).is_err());
        assert!(Permutation::from_ranks(vec![0, 1]).is_err());
        assert!(Permutation::from_ranks(vec![1, 3]).is_err());
    }

    #[test]
    fn swap_exchanges_ranks_of_players() {
        let mut p = Permutation::from_ranks(vec![3, 1, 2]).unwrap();
        p.swap_players(0, 2);
        assert_eq!(p.rank_of(), &[2, 1, 3]);
        assert_eq!(p.pos_of(), &[1, 0, 2]);
        assert!(p.is_consistent());
    }

    #[test]
    fn two_player_row_is_forced() {
        let w = WeightMatrix::from_rows(vec![vec![0.0, 7.0], vec![1.5, 0.0]]).unwrap();
        let row = transition_row(&Permutation::identity(2), &w).unwrap();
        assert_eq!(row.len(), 2);
        assert_eq!(row[0].1, 0.5);
        assert_eq!(row[1].0.rank_of(), &[2, 1]);
        assert_eq!(row[1].1, 0.5);
    }

    #[test]
    fn uniform_weights_move_uniformly() {
        let w = WeightMatrix::uniform(5);
        let row = transition_row(&Permutation::from_ranks(vec![2, 5, 1, 3, 4]).unwrap(), &w).unwrap();
        for (_, p) in &row[1..] {
            assert!((p - 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn three_player_row_matches_hand_normalization() {
        // From A>B>C the swaps AB, AC, BC carry w[B][A]=2, w[C][A]=1, w[C][B]=1.
        let w = three_player_weights();
        let row = transition_row(&Permutation::identity(3), &w).unwrap();
        let expected = [(vec![1, 2, 3], 0.5), (vec![2, 1, 3], 0.25), (vec![3, 2, 1], 0.125), (vec![1, 3, 2], 0.125)];
        for ((perm, p), (ranks, q)) in row.iter().zip(expected) {
            assert_eq!(perm.rank_of(), ranks.as_slice());
            assert!((p - q).abs() < 1e-15);
        }
        // From C>B>A every swap moves toward history: w[A][B]=3, w[A][C]=4, w[B][C]=4.
        let row = transition_row(&Permutation::from_ranks(vec![3, 2, 1]).unwrap(), &w).unwrap();
        let probs: Vec<f64> = row.iter().map(|(_, p)| *p).collect();
        let expected = [0.5, 0.5 * 3.0 / 11.0, 0.5 * 4.0 / 11.0, 0.5 * 4.0 / 11.0];
        for (p, q) in probs.iter().zip(expected) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn step_empirical_frequencies_match_row() {
        let w = three_player_weights();
        let start = Permutation::identity(3);
        let row = transition_row(&start, &w).unwrap();
        let mut rng = rng::seeded(5, 0);
        let trials = 200_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..trials {
            *counts.entry(step(&start, &w, &mut rng).unwrap()).or_insert(0usize) += 1;
        }
        for (perm, p) in row {
            let freq = counts[&perm] as f64 / trials as f64;
            assert!((freq - p).abs() < 0.005, "{perm:?}: {freq} vs {p}");
        }
    }

    #[test]
    fn fenwick_walker_tracks_direct_step() {
        for (n, seed) in [(2, 1), (3, 2), (5, 3), (8, 4)] {
            let w = random_weights(n, seed);
            let start = Permutation::identity(n);
            let mut direct_rng = rng::seeded(seed, 0);
            let mut walker_rng = rng::seeded(seed, 0);
            let mut direct = start.clone();
            let mut walker = Walker::new(&w, start);
            for _ in 0..5_000 {
                direct = step(&direct, &w, &mut direct_rng).unwrap();
                walker.advance(&mut walker_rng);
                assert_eq!(walker.perm, direct);
            }
        }
    }

    #[test]
    fn fenwick_prefix_search() {
        let f = Fenwick::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(f.total(), 15.0);
        assert_eq!(f.find(0.0), 0);
        assert_eq!(f.find(0.999), 0);
        assert_eq!(f.find(1.0), 1);
        assert_eq!(f.find(5.9), 2);
        assert_eq!(f.find(14.99), 4);
        assert_eq!(f.find(15.0), 4);
    }

    #[test]
    fn walk_needs_two_players() {
        let w = WeightMatrix::uniform(1);
        let cfg = WalkConfig::for_roster(1, 0, 10);
        assert!(matches!(run_chain(&w, &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let w = WeightMatrix::uniform(3);
        let mut cfg = WalkConfig::for_roster(3, 0, 10);
        cfg.thin_steps = 0;
        assert!(run_chain(&w, &cfg).is_err());
        cfg.thin_steps = 1;
        cfg.num_samples = 0;
        assert!(run_chain(&w, &cfg).is_err());
    }

    #[test]
    fn default_schedule() {
        let cfg = WalkConfig::for_roster(5, 0, 100_000);
        assert_eq!(cfg.thin_steps, 8);
        assert_eq!(cfg.burn_in_steps, 1000);
        assert_eq!(cfg.total_steps(), 1000 + 8 * 100_000);
    }

    #[test]
    fn chains_are_deterministic() {
        let w = random_weights(6, 11);
        let cfg = WalkConfig::for_roster(6, 42, 500);
        assert_eq!(run_chain(&w, &cfg).unwrap(), run_chain(&w, &cfg).unwrap());
        let a = run_chains(&w, &cfg, 3).unwrap();
        assert_eq!(a, run_chains(&w, &cfg, 3).unwrap());
        assert_eq!(a.len(), 500);
        let mut other = cfg.clone();
        other.seed = 43;
        assert_ne!(run_chain(&w, &other).unwrap(), run_chain(&w, &cfg).unwrap());
    }

    #[test]
    fn prevalence_sorted_start() {
        let w = WeightMatrix::uniform(4).with_prevalence(vec![2, 9, 2, 5]).unwrap();
        let mut rng = rng::seeded(0, 0);
        let p = initial_permutation(&w, InitialState::PrevalenceSorted, &mut rng);
        assert_eq!(p.pos_of(), &[1, 3, 0, 2]);
    }

    #[test]
    fn seeded_random_start_is_reproducible() {
        let w = WeightMatrix::uniform(10);
        let mut cfg = WalkConfig::for_roster(10, 3, 1);
        cfg.burn_in_steps = 0;
        cfg.thin_steps = 1;
        cfg.initial_state = InitialState::SeededRandom;
        assert_eq!(run_chain(&w, &cfg).unwrap(), run_chain(&w, &cfg).unwrap());
    }

    #[test]
    fn two_player_stationary_is_half_half() {
        for (a, b) in [(1.0, 1.0), (3.0, 1.0), (1.0, 50.0)] {
            let w = WeightMatrix::from_rows(vec![vec![0.0, a], vec![b, 0.0]]).unwrap();
            let mu = exact_stationary(&w).unwrap();
            assert!((mu.probs[0] - 0.5).abs() < 1e-12);
            assert!((mu.probs[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn three_player_stationary_matches_frozen_values() {
        // Independent dense solve of μ = μP for the A>B, B>A, A>B>C instance.
        let expected = [
            (vec![1, 2, 3], 0.27101200686106347),
            (vec![1, 3, 2], 0.15608919382504288),
            (vec![2, 1, 3], 0.2401372212692968),
            (vec![2, 3, 1], 0.09862778730703259),
            (vec![3, 1, 2], 0.13036020583190394),
            (vec![3, 2, 1], 0.10377358490566031),
        ];
        let mu = exact_stationary(&three_player_weights()).unwrap();
        assert!(mu.residual < 1e-12);
        for (ranks, p) in expected {
            let idx = Permutation::from_ranks(ranks).unwrap().lex_index();
            assert!((mu.probs[idx] - p).abs() < 1e-12);
        }
    }

    #[test]
    fn three_player_chain_matches_exact() {
        let w = three_player_weights();
        let samples = run_chain(&w, &WalkConfig::for_roster(3, 9, 100_000)).unwrap();
        let tv = total_variation(
            &empirical_state_distribution(&samples).unwrap(),
            &exact_stationary(&w).unwrap().probs,
        );
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn uniform_weights_give_uniform_stationary() {
        for n in 2..=5 {
            let mu = exact_stationary(&WeightMatrix::uniform(n)).unwrap();
            let u = 1.0 / factorial(n) as f64;
            assert!(mu.probs.iter().all(|p| (p - u).abs() < 1e-10));
        }
    }

    #[test]
    fn power_iteration_path_for_seven_players() {
        let mu = exact_stationary(&WeightMatrix::uniform(7)).unwrap();
        assert_eq!(mu.probs.len(), 5040);
        assert!(mu.probs.iter().all(|p| (p - 1.0 / 5040.0).abs() < 1e-10));
    }

    #[test]
    fn exact_refuses_large_rosters() {
        let w = WeightMatrix::uniform(8);
        assert!(matches!(exact_stationary(&w), Err(Error::TooLarge(_))));
        assert!(matches!(support_graph_check(&w), Err(Error::TooLarge(_))));
    }

    #[test]
    fn support_graph_small_cases() {
        let d = support_graph_check(&WeightMatrix::uniform(2)).unwrap();
        assert_eq!(d.diameter, Some(1));
        let d = support_graph_check(&random_weights(4, 1)).unwrap();
        assert!(d.strongly_connected);
        assert_eq!(d.diameter, Some(3));
        assert!(d.has_self_loops);
    }

    #[test]
    fn relabeling_players_relabels_stationary() {
        let w = random_weights(4, 21);
        let relabel = [2usize, 0, 3, 1];
        let rows = (0..4)
            .map(|a| {
                (0..4)
                    .map(|b| {
                        let (i, j) = (relabel.iter().position(|&x| x == a).unwrap(), relabel.iter().position(|&x| x == b).unwrap());
                        if a == b { 0.0 } else { w.get(i, j) }
                    })
                    .collect()
            })
            .collect();
        let w2 = WeightMatrix::from_rows(rows).unwrap();
        let mu = exact_stationary(&w).unwrap();
        let mu2 = exact_stationary(&w2).unwrap();
        for k in 0..24 {
            let p = Permutation::from_lex_index(4, k);
            let mut ranks2 = vec![0; 4];
            for i in 0..4 {
                ranks2[relabel[i]] = p.rank(i);
            }
            let k2 = Permutation::from_ranks(ranks2).unwrap().lex_index();
            assert!((mu.probs[k] - mu2.probs[k2]).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_text_roundtrip() {
        let w = random_weights(4, 2);
        let samples = run_chains(&w, &WalkConfig::for_roster(4, 1, 50), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        samples.write_text(&path).unwrap();
        assert_eq!(SampleSet::read_text(&path).unwrap(), samples);
    }

    proptest! {
        #[test]
        fn steps_preserve_bijectivity(n in 2usize..9, seed in any::<u64>()) {
            let w = random_weights(n, seed);
            let mut rng = rng::seeded(seed, 1);
            let mut p = Permutation::identity(n);
            for _ in 0..50 {
                let next = step(&p, &w, &mut rng).unwrap();
                prop_assert!(next.is_consistent());
                let changed = (0..n).filter(|&i| next.rank(i) != p.rank(i)).count();
                prop_assert!(changed == 0 || changed == 2);
                p = next;
            }
        }

        #[test]
        fn rows_sum_to_one(n in 2usize..7, seed in any::<u64>(), state in any::<usize>()) {
            let w = random_weights(n, seed);
            let p = Permutation::from_lex_index(n, state % factorial(n));
            let row = transition_row(&p, &w).unwrap();
            let total: f64 = row.iter().map(|(_, q)| q).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(row[0].1 >= 0.5);
        }
    }
}
