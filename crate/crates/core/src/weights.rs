//! The prevalence-scaled pair weight matrix.
//!
//! `w[i][j] = 1 + (appearances[i] / appearances[j]) * beats[i][j]`: every
//! strict win of `i` over `j` counts once, discounted when `i` spent far
//! fewer snapshots above the cutoff than `j`. The additive unit keeps every
//! transposition possible.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::PairIncidence;
use crate::matrix::SquareMatrix;
use crate::walk::Permutation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    w: SquareMatrix<f64>,
    /// Appearance counts, used to order the prevalence-sorted start state.
    prevalence: Vec<u32>,
    fingerprint: String,
}

impl WeightMatrix {
    /// Builds from explicit rows; the diagonal is ignored and set to 0.
    ///
    /// Off-diagonal entries must be finite and at least 1.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Contract("weight rows must form a square matrix".into()));
        }
        let mut w = SquareMatrix::from_rows(rows);
        for i in 0..n {
            w.set(i, i, 0.0);
            for j in 0..n {
                let v = w.at(i, j);
                if i != j && !(v.is_finite() && v >= 1.0) {
                    return Err(Error::Contract(format!(
                        "weight [{i}][{j}] = {v} must be finite and >= 1"
                    )));
                }
            }
        }
        let fingerprint = hash_entries(&w);
        Ok(Self {
            w,
            prevalence: vec![1; n],
            fingerprint,
        })
    }

    /// All off-diagonal weights equal to 1: the uniform transposition walk.
    pub fn uniform(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        Self::from_rows(rows).expect("uniform weights are valid")
    }

    pub fn with_prevalence(mut self, prevalence: Vec<u32>) -> Result<Self> {
        if prevalence.len() != self.n() {
            return Err(Error::Contract("prevalence length must equal n".into()));
        }
        self.prevalence = prevalence;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.w.n()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w.at(i, j)
    }

    pub fn matrix(&self) -> &SquareMatrix<f64> {
        &self.w
    }

    pub fn prevalence(&self) -> &[u32] {
        &self.prevalence
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Writes the matrix as comma-separated rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        for row in self.w.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn hash_entries(w: &SquareMatrix<f64>) -> String {
    let mut h = Sha256::new();
    h.update((w.n() as u64).to_le_bytes());
    for v in w.as_slice() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn build_weights(incidence: &PairIncidence) -> WeightMatrix {
    let n = incidence.n;
    let mut w = SquareMatrix::filled(n, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let ratio = f64::from(incidence.appearances[i]) / f64::from(incidence.appearances[j]);
            w.set(i, j, 1.0 + ratio * f64::from(incidence.beats.at(i, j)));
        }
    }
    WeightMatrix {
        w,
        prevalence: incidence.appearances.clone(),
        fingerprint: incidence.fingerprint.clone(),
    }
}

/// Unnormalized mass of transposing players `i` and `j` from state `perm`.
///
/// This is the weight of the order the swap would produce: `w[j][i]` when
/// `i` currently ranks above `j`, else `w[i][j]`. Symmetric in `(i, j)`.
#[inline]
pub fn oriented_weight(w: &WeightMatrix, perm: &Permutation, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::Contract(format!("oriented_weight called with i = j = {i}")));
    }
    Ok(oriented_unchecked(w, perm.rank_of(), i, j))
}

#[inline]
pub(crate) fn oriented_unchecked(w: &WeightMatrix, rank_of: &[u32], i: usize, j: usize) -> f64 {
    if rank_of[i] < rank_of[j] {
        w.get(j, i)
    } else {
        w.get(i, j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_incidence, SnapshotCollection};
    use proptest::prelude::*;

    fn incidence(appearances: Vec<u32>, beats: Vec<Vec<u32>>) -> PairIncidence {
        let n = appearances.len();
        PairIncidence {
            n,
            appearances,
            co_appearances: SquareMatrix::filled(n, 0),
            beats: SquareMatrix::from_rows(beats),
            fingerprint: String::new(),
        }
    }

    #[test]
    fn three_snapshot_instance() {
        let c = SnapshotCollection::from_orders(&[
            vec!["A", "B"],
            vec!["B", "A"],
            vec!["A", "B", "C"],
        ])
        .unwrap();
        let w = build_weights(&build_incidence(&c));
        assert_eq!(w.get(0, 1), 3.0);
        assert_eq!(w.get(1, 0), 2.0);
        assert_eq!(w.get(0, 2), 4.0);
        assert_eq!(w.get(2, 0), 1.0);
        assert_eq!(w.get(0, 0), 0.0);
    }

    #[test]
    fn no_beats_gives_unit_weight() {
        let w = build_weights(&incidence(vec![7, 2], vec![vec![0, 0], vec![5, 0]]));
        assert_eq!(w.get(0, 1), 1.0);
        assert_eq!(w.get(1, 0), 1.0 + (2.0 / 7.0) * 5.0);
    }

    #[test]
    fn short_career_is_discounted() {
        let w = build_weights(&incidence(vec![1, 100], vec![vec![0, 1], vec![0, 0]]));
        assert!((w.get(0, 1) - 1.01).abs() < 1e-15);
    }

    #[test]
    fn oriented_weight_cases() {
        let w = WeightMatrix::from_rows(vec![vec![0.0, 2.0], vec![9.0, 0.0]]).unwrap();
        let i_above = Permutation::identity(2);
        assert_eq!(oriented_weight(&w, &i_above, 0, 1).unwrap(), 9.0);
        let j_above = Permutation::from_ranks(vec![2, 1]).unwrap();
        assert_eq!(oriented_weight(&w, &j_above, 0, 1).unwrap(), 2.0);
        assert_eq!(oriented_weight(&w, &j_above, 1, 0).unwrap(), 2.0);
        assert!(matches!(
            oriented_weight(&w, &i_above, 1, 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn uniform_weights_are_all_one() {
        let w = WeightMatrix::uniform(4);
        let p = Permutation::from_ranks(vec![3, 1, 4, 2]).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_eq!(oriented_weight(&w, &p, i, j).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn rejects_sub_unit_weights() {
        assert!(WeightMatrix::from_rows(vec![vec![0.0, 0.5], vec![1.0, 0.0]]).is_err());
        assert!(WeightMatrix::from_rows(vec![vec![0.0, f64::NAN], vec![1.0, 0.0]]).is_err());
    }

    proptest! {
        #[test]
        fn common_prevalence_scale_leaves_weights_unchanged(
            app in proptest::collection::vec(1u32..50, 3),
            beats in proptest::collection::vec(0u32..20, 9),
            scale in 1u32..9,
        ) {
            let rows: Vec<Vec<u32>> = beats.chunks(3).map(|c| c.to_vec()).collect();
            let a = build_weights(&incidence(app.clone(), rows.clone()));
            let b = build_weights(&incidence(app.iter().map(|x| x * scale).collect(), rows));
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((a.get(i, j) - b.get(i, j)).abs() <= 1e-12 * a.get(i, j).max(1.0));
                }
            }
        }

        #[test]
        fn weights_are_monotone(
            ai in 1u32..50, aj in 1u32..50, b in 0u32..30,
        ) {
            let base = build_weights(&incidence(vec![ai, aj], vec![vec![0, b], vec![0, 0]])).get(0, 1);
            let more_beats = build_weights(&incidence(vec![ai, aj], vec![vec![0, b + 1], vec![0, 0]])).get(0, 1);
            let more_i = build_weights(&incidence(vec![ai + 1, aj], vec![vec![0, b], vec![0, 0]])).get(0, 1);
            let more_j = build_weights(&incidence(vec![ai, aj + 1], vec![vec![0, b], vec![0, 0]])).get(0, 1);
            prop_assert!(base >= 1.0);
            prop_assert!(more_beats >= base);
            prop_assert!(more_i >= base);
            prop_assert!(more_j <= base);
        }
    }
}
