//! First-order stochastic dominance between players' rank distributions.
//!
//! Player `i` dominates `j` when, for every cutoff `k`, `i` is at least as
//! likely as `j` to be ranked `k` or better, and strictly more likely for
//! some `k`. With a slack `ε > 0` both comparisons are relaxed by `ε`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::walk::{SampleSet, StationaryDistribution};

/// Per-player rank CDFs: `cdf(i, k)` is `Pr[X(i) ≤ k]` for `k` in `1..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRankDistribution {
    cdf: SquareMatrix<f64>,
    pub sample_count: usize,
}

impl EmpiricalRankDistribution {
    pub fn from_samples(samples: &SampleSet) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Contract("empty sample set".into()));
        }
        let n = samples.n();
        let mut counts = SquareMatrix::filled(n, 0u64);
        for row in samples.iter() {
            for (player, &r) in row.iter().enumerate() {
                *counts.get_mut(player, usize::from(r) - 1) += 1;
            }
        }
        let total = samples.len() as f64;
        let mut cdf = SquareMatrix::filled(n, 0.0);
        for i in 0..n {
            let mut running = 0u64;
            for k in 0..n {
                running += counts.at(i, k);
                cdf.set(i, k, running as f64 / total);
            }
        }
        Ok(Self {
            cdf,
            sample_count: samples.len(),
        })
    }

    /// CDFs induced by an exact distribution over `S_n`.
    ///
    /// `sample_count` is reported as 0 for exact inputs.
    pub fn from_stationary(mu: &StationaryDistribution) -> Self {
        let n = mu.n;
        let mut mass = SquareMatrix::filled(n, 0.0);
        for (index, &p) in mu.probs.iter().enumerate() {
            let perm = mu.state(index);
            for (player, &r) in perm.rank_of().iter().enumerate() {
                *mass.get_mut(player, r as usize - 1) += p;
            }
        }
        let mut cdf = SquareMatrix::filled(n, 0.0);
        for i in 0..n {
            let mut running = 0.0;
            for k in 0..n {
                running += mass.at(i, k);
                cdf.set(i, k, if k + 1 == n { 1.0 } else { running.min(1.0) });
            }
        }
        Self {
            cdf,
            sample_count: 0,
        }
    }

    /// Builds from explicit CDF rows, checking monotonicity and the final 1.
    pub fn from_rows(rows: Vec<Vec<f64>>, sample_count: usize) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Contract("cdf rows must form a square matrix".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.windows(2).any(|w| w[1] < w[0]) || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Contract(format!("cdf row {i} is not a CDF")));
            }
            if n > 0 && row[n - 1] != 1.0 {
                return Err(Error::Contract(format!("cdf row {i} does not end at 1")));
            }
        }
        Ok(Self {
            cdf: SquareMatrix::from_rows(rows),
            sample_count,
        })
    }

    pub fn n(&self) -> usize {
        self.cdf.n()
    }

    /// `Pr[X(player) ≤ k]`, `k` 1-based.
    #[inline]
    pub fn cdf(&self, player: usize, k: usize) -> f64 {
        self.cdf.at(player, k - 1)
    }

    pub fn matrix(&self) -> &SquareMatrix<f64> {
        &self.cdf
    }
}

/// True iff `i` dominates `j` under slack `epsilon`.
pub fn dominates(dist: &EmpiricalRankDistribution, i: usize, j: usize, epsilon: f64) -> Result<bool> {
    if i == j {
        return Err(Error::Contract(format!("dominates called with i = j = {i}")));
    }
    let (a, b) = (dist.matrix().row(i), dist.matrix().row(j));
    let mut strict = false;
    for (&fi, &fj) in a.iter().zip(b) {
        if fi < fj - epsilon {
            return Ok(false);
        }
        strict |= fi > fj + epsilon;
    }
    Ok(strict)
}

/// A strict partial order over players: `better(i, j)` means `i` is
/// conclusively better than `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominancePoset {
    relation: SquareMatrix<bool>,
    /// Hasse edges `(better, worse)`, sorted.
    pub cover_edges: Vec<(usize, usize)>,
    /// Players with no strict superior, ascending.
    pub maximal: Vec<usize>,
    pub epsilon: f64,
    /// Whether the raw ε-relation needed transitive closure.
    pub closure_applied: bool,
}

fn is_transitive(rel: &SquareMatrix<bool>) -> bool {
    let n = rel.n();
    (0..n).all(|i| {
        (0..n).filter(|&k| rel.at(i, k)).all(|k| (0..n).all(|j| !rel.at(k, j) || rel.at(i, j)))
    })
}

fn close_transitively(rel: &mut SquareMatrix<bool>) {
    let n = rel.n();
    for k in 0..n {
        for i in 0..n {
            if rel.at(i, k) {
                for j in 0..n {
                    if rel.at(k, j) {
                        rel.set(i, j, true);
                    }
                }
            }
        }
    }
}

impl DominancePoset {
    /// Wraps a relation that must already be a strict partial order.
    pub fn from_relation(relation: SquareMatrix<bool>, epsilon: f64) -> Result<Self> {
        let n = relation.n();
        let cover_edges = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| {
                relation.at(i, j) && !(0..n).any(|k| relation.at(i, k) && relation.at(k, j))
            })
            .collect();
        let maximal = (0..n)
            .filter(|&j| !(0..n).any(|i| relation.at(i, j)))
            .collect();
        let poset = Self {
            relation,
            cover_edges,
            maximal,
            epsilon,
            closure_applied: false,
        };
        poset.audit()?;
        Ok(poset)
    }

    /// Rebuilds the order from its Hasse edges.
    pub fn from_cover_edges(n: usize, edges: &[(usize, usize)], epsilon: f64) -> Result<Self> {
        let mut relation = SquareMatrix::filled(n, false);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Structural(format!("edge ({a}, {b}) out of range")));
            }
            relation.set(a, b, true);
        }
        close_transitively(&mut relation);
        Self::from_relation(relation, epsilon)
    }

    /// The antichain on `n` players.
    pub fn antichain(n: usize) -> Self {
        Self::from_relation(SquareMatrix::filled(n, false), 0.0).expect("antichain is a poset")
    }

    pub fn n(&self) -> usize {
        self.relation.n()
    }

    #[inline]
    pub fn better(&self, i: usize, j: usize) -> bool {
        self.relation.at(i, j)
    }

    pub fn comparable(&self, i: usize, j: usize) -> bool {
        self.better(i, j) || self.better(j, i)
    }

    pub fn relation(&self) -> &SquareMatrix<bool> {
        &self.relation
    }

    /// Checks the strict partial order axioms, that the cover edges close
    /// back to the relation, and that `maximal` is exact.
    pub fn audit(&self) -> Result<()> {
        let n = self.n();
        let rel = &self.relation;
        for i in 0..n {
            if rel.at(i, i) {
                return Err(Error::Structural(format!("relation is not irreflexive at {i}")));
            }
            for j in 0..n {
                if rel.at(i, j) && rel.at(j, i) {
                    return Err(Error::Structural(format!(
                        "relation is not antisymmetric for ({i}, {j})"
                    )));
                }
            }
        }
        if !is_transitive(rel) {
            return Err(Error::Structural("relation is not transitive".into()));
        }
        let mut closed = SquareMatrix::filled(n, false);
        for &(a, b) in &self.cover_edges {
            closed.set(a, b, true);
        }
        close_transitively(&mut closed);
        if &closed != rel {
            return Err(Error::Structural("cover edges do not reproduce the relation".into()));
        }
        let maximal: Vec<usize> = (0..n).filter(|&j| !(0..n).any(|i| rel.at(i, j))).collect();
        if maximal != self.maximal {
            return Err(Error::Structural("maximal set is inconsistent".into()));
        }
        Ok(())
    }
}

/// Builds the dominance order from rank CDFs.
///
/// Mutual ε-dominance is treated as incomparable. If the ε-relation is not
/// transitive it is closed, and the closure must stay antisymmetric.
pub fn build_poset(dist: &EmpiricalRankDistribution, epsilon: f64) -> Result<DominancePoset> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Contract(format!("epsilon {epsilon} must be finite and >= 0")));
    }
    let n = dist.n();
    let mut dom = SquareMatrix::filled(n, false);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                dom.set(i, j, dominates(dist, i, j, epsilon)?);
            }
        }
    }
    let mut relation = SquareMatrix::filled(n, false);
    for i in 0..n {
        for j in 0..n {
            relation.set(i, j, dom.at(i, j) && !dom.at(j, i));
        }
    }
    let closure_applied = !is_transitive(&relation);
    if closure_applied {
        close_transitively(&mut relation);
        for i in 0..n {
            for j in i..n {
                if relation.at(i, j) && relation.at(j, i) {
                    return Err(Error::Structural(format!(
                        "epsilon {epsilon} makes the dominance relation cyclic between players {i} and {j}; use a smaller epsilon"
                    )));
                }
            }
        }
    }
    let mut poset = DominancePoset::from_relation(relation, epsilon)?;
    poset.closure_applied = closure_applied;
    Ok(poset)
}
