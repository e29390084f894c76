//! Small-n self checks against exact oracles, exposed by `rankwalk verify`.

use std::fmt;

use rand::Rng;

use crate::dominance::{build_poset, DominancePoset, EmpiricalRankDistribution};
use crate::error::Result;
use crate::fixtures::synthetic_collection;
use crate::ingest::build_incidence;
use crate::linext::{enumerate_extensions, sampled_average_ranks, ExtensionSamplerConfig};
use crate::rng::seeded;
use crate::walk::{
    empirical_state_distribution, exact_stationary, materialize_kernel, run_chain,
    support_graph_check, total_variation, WalkConfig,
};
use crate::weights::{build_weights, WeightMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// A random weight matrix with entries in `[1, 6)`.
pub fn random_weights<R: Rng>(n: usize, rng: &mut R) -> Result<WeightMatrix> {
    let rows = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { 1.0 + 5.0 * rng.gen::<f64>() })
                .collect()
        })
        .collect();
    WeightMatrix::from_rows(rows)
}

fn kernel_check(seed: u64) -> Result<Check> {
    let mut rng = seeded(seed, 0);
    let mut worst_row = 0.0f64;
    let mut failures = Vec::new();
    for trial in 0..20 {
        let n = 2 + trial % 4;
        let w = random_weights(n, &mut rng)?;
        let kernel = materialize_kernel(&w)?;
        for (s, row) in kernel.rows.iter().enumerate() {
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            worst_row = worst_row.max((sum - 1.0).abs());
            if kernel.self_loop(s) < 0.5 {
                failures.push(format!("trial {trial}: lazy mass below 1/2"));
            }
        }
        let diag = support_graph_check(&w)?;
        if !diag.strongly_connected || diag.diameter != Some(n - 1) {
            failures.push(format!("trial {trial}: support graph {diag:?}"));
        }
    }
    if worst_row > 1e-12 {
        failures.push(format!("row sum error {worst_row:e}"));
    }
    Ok(Check {
        name: "kernel",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("20 random instances, max row-sum error {worst_row:.1e}")
        } else {
            failures.join("; ")
        },
    })
}

fn stationarity_checks(seed: u64, samples: usize) -> Result<Vec<Check>> {
    let collection = synthetic_collection(5)?;
    let w = build_weights(&build_incidence(&collection));
    let mu = exact_stationary(&w)?;
    let chain = run_chain(&w, &WalkConfig::for_roster(5, seed, samples))?;
    let tv = total_variation(&empirical_state_distribution(&chain)?, &mu.probs);

    let exact_poset = build_poset(&EmpiricalRankDistribution::from_stationary(&mu), 0.0)?;
    let sampled_poset = build_poset(&EmpiricalRankDistribution::from_samples(&chain)?, 0.0)?;
    let same = exact_poset.relation() == sampled_poset.relation();
    let audit = sampled_poset.audit();

    Ok(vec![
        Check {
            name: "stationarity",
            passed: tv < 0.02,
            detail: format!("TV {tv:.4} over {samples} samples (limit 0.02)"),
        },
        Check {
            name: "dominance",
            passed: same && audit.is_ok(),
            detail: format!(
                "exact and sampled posets {}; audit {}",
                if same { "agree" } else { "differ" },
                match audit {
                    Ok(()) => "ok".to_string(),
                    Err(e) => e.to_string(),
                }
            ),
        },
    ])
}

fn extension_check(seed: u64, samples: usize) -> Result<Check> {
    let fan = DominancePoset::from_cover_edges(3, &[(0, 1), (0, 2)], 0.0)?;
    let exact = enumerate_extensions(&fan)?;
    let report = sampled_average_ranks(&fan, &ExtensionSamplerConfig::for_poset(3, samples, seed))?;
    let r = &report.avg_rank;
    let passed = exact.len() == 2
        && (0.98..=1.02).contains(&r[0])
        && (2.45..=2.55).contains(&r[1])
        && (2.45..=2.55).contains(&r[2]);
    Ok(Check {
        name: "extensions",
        passed,
        detail: format!(
            "fan average ranks {:.4} {:.4} {:.4}, {} extensions",
            r[0],
            r[1],
            r[2],
            exact.len()
        ),
    })
}

/// Runs every check; `samples` sizes the sampled comparisons.
pub fn run_checks(seed: u64, samples: usize) -> Result<Vec<Check>> {
    let mut checks = vec![kernel_check(seed)?];
    checks.extend(stationarity_checks(seed, samples)?);
    checks.push(extension_check(seed, samples)?);
    Ok(checks)
}
