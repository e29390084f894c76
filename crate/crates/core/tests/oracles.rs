//! Exact results on the bundled fixture, checked against values computed
//! independently with a dense numpy eigen-solve of the same kernel.

use rankwalk::fixtures::synthetic_collection;
use rankwalk::{build_incidence, build_poset, build_weights, exact_stationary, EmpiricalRankDistribution};

/// Rank CDFs by external id 900001..=900005, columns k = 1..5.
const CDF_BY_ID: [[f64; 5]; 5] = [
    [0.355847293412035, 0.589603532901562, 0.758006070149373, 0.88832604956082, 1.0],
    [0.299855517001154, 0.588276404382498, 0.777097172274466, 0.904780908313985, 1.0],
    [0.138199466406011, 0.330371805652085, 0.580148263671042, 0.806727052600058, 1.0],
    [0.124215853637398, 0.306578487178652, 0.557219597882532, 0.840254875944368, 1.0],
    [0.081881869543401, 0.185169769885203, 0.327528896022585, 0.559911113580768, 1.0],
];

#[test]
fn exact_cdfs_match_independent_solve() {
    let collection = synthetic_collection(5).unwrap();
    let mu = exact_stationary(&build_weights(&build_incidence(&collection))).unwrap();
    assert!(mu.residual < 1e-12);
    let dist = EmpiricalRankDistribution::from_stationary(&mu);
    for (player, id) in collection.roster.iter().enumerate() {
        let row = id.external_id.parse::<usize>().unwrap() - 900_001;
        for k in 1..=5 {
            let got = dist.cdf(player, k);
            let want = CDF_BY_ID[row][k - 1];
            assert!((got - want).abs() < 1e-9, "{} k={k}: {got} vs {want}", id.external_id);
        }
    }
}

#[test]
fn exact_poset_on_fixture() {
    let collection = synthetic_collection(5).unwrap();
    let mu = exact_stationary(&build_weights(&build_incidence(&collection))).unwrap();
    let poset = build_poset(&EmpiricalRankDistribution::from_stationary(&mu), 0.0).unwrap();
    let idx = |id: &str| collection.roster.iter().position(|p| p.external_id == id).unwrap();
    let (a, b, c, d, e) = (idx("900001"), idx("900002"), idx("900003"), idx("900004"), idx("900005"));

    let mut maximal = vec![a, b];
    maximal.sort();
    assert_eq!(poset.maximal, maximal);
    assert!(!poset.comparable(a, b));
    assert!(!poset.comparable(c, d));
    for top in [a, b] {
        for mid in [c, d] {
            assert!(poset.better(top, mid));
        }
    }
    for x in [a, b, c, d] {
        assert!(poset.better(x, e));
    }
    assert_eq!(poset.cover_edges.len(), 6);
}
