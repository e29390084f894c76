//! Uniform sampling of linear extensions and average ranks.
//!
//! The sampler is the lazy adjacent-transposition chain on linear
//! extensions: pick a position `p` uniformly in `0..n-1`; if the players at
//! `p` and `p + 1` are incomparable, swap them with probability 1/2. The
//! chain is symmetric and the extension graph is connected, so the uniform
//! distribution is its unique stationary law.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dominance::DominancePoset;
use crate::error::{Error, Result};
use crate::rng::{self, ChainRng};

/// Refuse enumeration past this many extensions.
pub const ENUMERATION_LIMIT: usize = 1_000_000;

/// A total order of players, best first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinearExtension {
    pub order: Vec<usize>,
}

impl LinearExtension {
    pub fn respects(&self, poset: &DominancePoset) -> bool {
        respects(&self.order, poset)
    }
}

fn respects(order: &[usize], poset: &DominancePoset) -> bool {
    let n = poset.n();
    if order.len() != n {
        return false;
    }
    let mut position = vec![usize::MAX; n];
    for (pos, &p) in order.iter().enumerate() {
        if p >= n || position[p] != usize::MAX {
            return false;
        }
        position[p] = pos;
    }
    poset.cover_edges.iter().all(|&(a, b)| position[a] < position[b])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionSamplerConfig {
    pub extensions: usize,
    pub seed: u64,
    pub burn_in_steps: u64,
    pub thin_steps: u64,
    /// Check one in this many recorded extensions against the poset.
    pub audit_every: usize,
}

impl ExtensionSamplerConfig {
    /// Defaults: burn-in `n³·⌈ln max(n, 2)⌉`, thinning `n²`, audit 1 in 1000.
    pub fn for_poset(n: usize, extensions: usize, seed: u64) -> Self {
        Self {
            extensions,
            seed,
            burn_in_steps: default_burn_in(n),
            thin_steps: default_thin(n),
            audit_every: 1000,
        }
    }
}

pub fn default_burn_in(n: usize) -> u64 {
    let n = n as u64;
    let log_factor = (n.max(2) as f64).ln().ceil() as u64;
    n * n * n * log_factor
}

pub fn default_thin(n: usize) -> u64 {
    ((n * n) as u64).max(1)
}

/// Lexicographically smallest topological order of the poset.
pub fn initial_extension(poset: &DominancePoset) -> Vec<usize> {
    let n = poset.n();
    let mut pending: Vec<usize> = (0..n)
        .map(|j| (0..n).filter(|&i| poset.better(i, j)).count())
        .collect();
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&j| pending[j] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for j in 0..n {
            if poset.better(i, j) {
                pending[j] -= 1;
                if pending[j] == 0 {
                    ready.push(Reverse(j));
                }
            }
        }
    }
    order
}

/// Streaming sampler; each call to [`ExtensionSampler::next_extension`]
/// advances the chain by the thinning interval.
pub struct ExtensionSampler<'p> {
    poset: &'p DominancePoset,
    order: Vec<usize>,
    rng: ChainRng,
    thin_steps: u64,
    audit_every: usize,
    produced: usize,
}

impl<'p> ExtensionSampler<'p> {
    pub fn new(poset: &'p DominancePoset, cfg: &ExtensionSamplerConfig) -> Result<Self> {
        if poset.n() == 0 {
            return Err(Error::Contract("cannot sample extensions of an empty poset".into()));
        }
        if cfg.thin_steps == 0 || cfg.audit_every == 0 {
            return Err(Error::Contract("thin_steps and audit_every must be at least 1".into()));
        }
        let order = initial_extension(poset);
        if order.len() != poset.n() {
            return Err(Error::Structural("poset relation contains a cycle".into()));
        }
        let mut sampler = Self {
            poset,
            order,
            rng: rng::seeded(cfg.seed, 0),
            thin_steps: cfg.thin_steps,
            audit_every: cfg.audit_every,
            produced: 0,
        };
        for _ in 0..cfg.burn_in_steps {
            sampler.advance();
        }
        Ok(sampler)
    }

    fn advance(&mut self) {
        let n = self.order.len();
        if n < 2 {
            return;
        }
        let p = self.rng.gen_range(0..n - 1);
        let (a, b) = (self.order[p], self.order[p + 1]);
        if !self.poset.comparable(a, b) && self.rng.gen::<bool>() {
            self.order.swap(p, p + 1);
        }
    }

    pub fn next_extension(&mut self) -> Result<&[usize]> {
        for _ in 0..self.thin_steps {
            self.advance();
        }
        if self.produced.is_multiple_of(self.audit_every) && !respects(&self.order, self.poset) {
            return Err(Error::Structural(format!(
                "sampled extension {} violates the poset",
                self.produced
            )));
        }
        self.produced += 1;
        Ok(&self.order)
    }
}

/// Draws `cfg.extensions` thinned extensions; deterministic in `(poset, cfg)`.
pub fn sample_extensions_with(
    poset: &DominancePoset,
    cfg: &ExtensionSamplerConfig,
) -> Result<Vec<LinearExtension>> {
    let mut sampler = ExtensionSampler::new(poset, cfg)?;
    (0..cfg.extensions)
        .map(|_| {
            sampler.next_extension().map(|o| LinearExtension {
                order: o.to_vec(),
            })
        })
        .collect()
}

/// [`sample_extensions_with`] under the default schedule.
pub fn sample_extensions(poset: &DominancePoset, count: usize, seed: u64) -> Result<Vec<LinearExtension>> {
    sample_extensions_with(poset, &ExtensionSamplerConfig::for_poset(poset.n(), count, seed))
}

/// All linear extensions, or an error once more than `limit` are found.
pub fn enumerate_extensions_limited(poset: &DominancePoset, limit: usize) -> Result<Vec<LinearExtension>> {
    let n = poset.n();
    let mut pending: Vec<usize> = (0..n)
        .map(|j| (0..n).filter(|&i| poset.better(i, j)).count())
        .collect();
    let mut placed = vec![false; n];
    let mut prefix = Vec::with_capacity(n);
    let mut out = Vec::new();

    fn recurse(
        poset: &DominancePoset,
        pending: &mut [usize],
        placed: &mut [bool],
        prefix: &mut Vec<usize>,
        out: &mut Vec<LinearExtension>,
        limit: usize,
    ) -> Result<()> {
        let n = poset.n();
        if prefix.len() == n {
            if out.len() >= limit {
                return Err(Error::TooLarge(format!("more than {limit} linear extensions")));
            }
            out.push(LinearExtension {
                order: prefix.clone(),
            });
            return Ok(());
        }
        for i in 0..n {
            if placed[i] || pending[i] != 0 {
                continue;
            }
            placed[i] = true;
            prefix.push(i);
            for j in 0..n {
                if poset.better(i, j) {
                    pending[j] -= 1;
                }
            }
            let result = recurse(poset, pending, placed, prefix, out, limit);
            for j in 0..n {
                if poset.better(i, j) {
                    pending[j] += 1;
                }
            }
            prefix.pop();
            placed[i] = false;
            result?;
        }
        Ok(())
    }

    recurse(poset, &mut pending, &mut placed, &mut prefix, &mut out, limit)?;
    Ok(out)
}

pub fn enumerate_extensions(poset: &DominancePoset) -> Result<Vec<LinearExtension>> {
    enumerate_extensions_limited(poset, ENUMERATION_LIMIT)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvgRankReport {
    /// 1-based mean position of each player.
    pub avg_rank: Vec<f64>,
    pub extensions_sampled: usize,
}

impl AvgRankReport {
    /// Weighted average of reports over the same roster.
    pub fn merge(reports: &[AvgRankReport]) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Contract("no reports to merge".into()))?;
        let n = first.avg_rank.len();
        if reports.iter().any(|r| r.avg_rank.len() != n) {
            return Err(Error::Contract("reports cover different rosters".into()));
        }
        let total: usize = reports.iter().map(|r| r.extensions_sampled).sum();
        let avg_rank = (0..n)
            .map(|i| {
                reports
                    .iter()
                    .map(|r| r.avg_rank[i] * r.extensions_sampled as f64)
                    .sum::<f64>()
                    / total as f64
            })
            .collect();
        Ok(Self {
            avg_rank,
            extensions_sampled: total,
        })
    }
}

struct RankAccumulator {
    sums: Vec<u64>,
    count: usize,
}

impl RankAccumulator {
    fn new(n: usize) -> Self {
        Self {
            sums: vec![0; n],
            count: 0,
        }
    }

    fn add(&mut self, order: &[usize]) {
        for (pos, &p) in order.iter().enumerate() {
            self.sums[p] += pos as u64 + 1;
        }
        self.count += 1;
    }

    fn finish(self) -> AvgRankReport {
        let count = self.count as f64;
        AvgRankReport {
            avg_rank: self.sums.iter().map(|&s| s as f64 / count).collect(),
            extensions_sampled: self.count,
        }
    }
}

pub fn average_ranks(extensions: &[LinearExtension]) -> Result<AvgRankReport> {
    let n = extensions
        .first()
        .ok_or_else(|| Error::Contract("no extensions to average".into()))?
        .order
        .len();
    let mut acc = RankAccumulator::new(n);
    for e in extensions {
        if e.order.len() != n {
            return Err(Error::Contract("extensions cover different rosters".into()));
        }
        acc.add(&e.order);
    }
    Ok(acc.finish())
}

/// Samples and averages without keeping the extensions in memory.
pub fn sampled_average_ranks(poset: &DominancePoset, cfg: &ExtensionSamplerConfig) -> Result<AvgRankReport> {
    if cfg.extensions == 0 {
        return Err(Error::Contract("extension count must be at least 1".into()));
    }
    let mut sampler = ExtensionSampler::new(poset, cfg)?;
    let mut acc = RankAccumulator::new(poset.n());
    for _ in 0..cfg.extensions {
        acc.add(sampler.next_extension()?);
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> DominancePoset {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        DominancePoset::from_cover_edges(n, &edges, 0.0).unwrap()
    }

    fn fan() -> DominancePoset {
        DominancePoset::from_cover_edges(3, &[(0, 1), (0, 2)], 0.0).unwrap()
    }

    #[test]
    fn chain_has_one_extension() {
        let p = chain(6);
        assert_eq!(enumerate_extensions(&p).unwrap().len(), 1);
        let samples = sample_extensions(&p, 50, 1).unwrap();
        assert!(samples.iter().all(|e| e.order == vec![0, 1, 2, 3, 4, 5]));
    }

    #[test]
    fn antichain_has_factorial_extensions() {
        for k in 1..=6 {
            let count = enumerate_extensions(&DominancePoset::antichain(k)).unwrap().len();
            assert_eq!(count, (1..=k).product::<usize>());
        }
    }

    #[test]
    fn fan_extensions_and_ranks() {
        let exts = enumerate_extensions(&fan()).unwrap();
        let orders: Vec<_> = exts.iter().map(|e| e.order.clone()).collect();
        assert_eq!(orders, vec![vec![0, 1, 2], vec![0, 2, 1]]);
        let report = average_ranks(&exts).unwrap();
        assert_eq!(report.avg_rank, vec![1.0, 2.5, 2.5]);
        assert_eq!(report.extensions_sampled, 2);
    }

    #[test]
    fn single_extension_gives_positions() {
        let r = average_ranks(&[LinearExtension {
            order: vec![2, 0, 1],
        }])
        .unwrap();
        assert_eq!(r.avg_rank, vec![2.0, 3.0, 1.0]);
        assert!(average_ranks(&[]).is_err());
    }

    #[test]
    fn enumeration_guard() {
        let p = DominancePoset::antichain(7);
        assert!(matches!(
            enumerate_extensions_limited(&p, 100),
            Err(Error::TooLarge(_))
        ));
        assert_eq!(enumerate_extensions_limited(&p, 5040).unwrap().len(), 5040);
    }

    #[test]
    fn initial_extension_is_smallest_topological_order() {
        let p = DominancePoset::from_cover_edges(4, &[(3, 0), (2, 1)], 0.0).unwrap();
        assert_eq!(initial_extension(&p), vec![2, 1, 3, 0]);
    }

    #[test]
    fn empty_poset_is_rejected() {
        assert!(sample_extensions(&DominancePoset::antichain(0), 5, 0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_audited() {
        let p = DominancePoset::from_cover_edges(5, &[(0, 2), (1, 2), (2, 4)], 0.0).unwrap();
        let mut cfg = ExtensionSamplerConfig::for_poset(5, 2000, 17);
        cfg.audit_every = 1;
        let a = sample_extensions_with(&p, &cfg).unwrap();
        assert_eq!(a, sample_extensions_with(&p, &cfg).unwrap());
        assert!(a.iter().all(|e| e.respects(&p)));
        let streamed = sampled_average_ranks(&p, &cfg).unwrap();
        assert_eq!(streamed, average_ranks(&a).unwrap());
    }

    #[test]
    fn merge_weights_by_count() {
        let a = AvgRankReport { avg_rank: vec![1.0, 2.0], extensions_sampled: 1 };
        let b = AvgRankReport { avg_rank: vec![2.0, 1.0], extensions_sampled: 3 };
        let m = AvgRankReport::merge(&[a, b]).unwrap();
        assert_eq!(m.avg_rank, vec![1.75, 1.25]);
        assert_eq!(m.extensions_sampled, 4);
    }

    #[test]
    fn default_schedule() {
        let cfg = ExtensionSamplerConfig::for_poset(8, 10, 0);
        assert_eq!(cfg.burn_in_steps, 512 * 3);
        assert_eq!(cfg.thin_steps, 64);
        assert_eq!(default_burn_in(1), 1);
    }

    fn random_poset(n: usize, mask: &[bool]) -> DominancePoset {
        let mut edges = Vec::new();
        let mut k = 0;
        for a in 0..n {
            for b in a + 1..n {
                if mask[k] {
                    edges.push((a, b));
                }
                k += 1;
            }
        }
        DominancePoset::from_cover_edges(n, &edges, 0.0).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn exact_average_ranks_respect_the_order(
            n in 1usize..=6,
            mask in proptest::collection::vec(proptest::bool::ANY, 15),
        ) {
            let p = random_poset(n, &mask);
            let exts = enumerate_extensions(&p).unwrap();
            proptest::prop_assert!(exts.iter().all(|e| e.respects(&p)));
            let r = average_ranks(&exts).unwrap().avg_rank;
            let total: f64 = r.iter().sum();
            proptest::prop_assert!((total - (n * (n + 1)) as f64 / 2.0).abs() < 1e-9);
            for i in 0..n {
                for j in 0..n {
                    if p.better(i, j) {
                        proptest::prop_assert!(r[i] < r[j]);
                    }
                }
            }
        }

        #[test]
        fn samples_are_extensions(
            n in 2usize..=6,
            mask in proptest::collection::vec(proptest::bool::ANY, 15),
            seed in 0u64..1000,
        ) {
            let p = random_poset(n, &mask);
            let mut cfg = ExtensionSamplerConfig::for_poset(n, 200, seed);
            cfg.audit_every = 1;
            let exts = sample_extensions_with(&p, &cfg).unwrap();
            proptest::prop_assert!(exts.iter().all(|e| e.respects(&p)));
        }
    }
}
