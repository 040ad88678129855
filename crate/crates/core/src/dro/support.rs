//! Explicit support enumeration and the enumeration-based oracles the
//! decomposition is tested against.
//!
//! A support point is a choice of at most k failing lines together with
//! a failure onset step for each; permanence makes the per-step budget
//! equivalent to capping the failing set. The closed-form count is
//! Σ_{j=0..k} C(E, j) · T^j.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{evaluate_q, FirstStageDecision, ScenarioRealization, VariableIndex};
use crate::netdata::CaseData;
use crate::solver::{Backend, ProblemSpec, RowSense, SolveOptions};

/// Hard cap on the enumerated support size.
pub const SUPPORT_LIMIT: u128 = 100_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of support points without enumerating them.
pub fn support_size(n_edges: usize, horizon: usize, k: usize) -> u128 {
    (0..=k.min(n_edges))
        .map(|j| binomial(n_edges, j) * (horizon as u128).pow(j as u32))
        .sum()
}

/// Enumerates every trajectory in the support, all-intact first, then by
/// ascending failure count, failing set, and onset tuple.
pub fn enumerate_support(case: &CaseData) -> Result<Vec<ScenarioRealization>> {
    let n_edges = case.edge_count();
    let horizon = case.horizon();
    let k = case.params.k.min(n_edges);

    let size = support_size(n_edges, horizon, k);
    if size > SUPPORT_LIMIT {
        return Err(Error::SupportTooLarge {
            size,
            limit: SUPPORT_LIMIT,
        });
    }

    let mut out = Vec::with_capacity(size as usize);
    for j in 0..=k {
        let mut subset: Vec<usize> = (0..j).collect();
        loop {
            if j > 0 && subset[j - 1] >= n_edges {
                break;
            }
            // All onset assignments for this failing set, lexicographic.
            let mut onsets = vec![0usize; j];
            'onsets: loop {
                let mut fail_step = vec![None; n_edges];
                for (pos, &e) in subset.iter().enumerate() {
                    fail_step[e] = Some(onsets[pos]);
                }
                out.push(ScenarioRealization { fail_step });
                for pos in (0..j).rev() {
                    onsets[pos] += 1;
                    if onsets[pos] < horizon {
                        continue 'onsets;
                    }
                    onsets[pos] = 0;
                }
                break;
            }
            if j == 0 {
                break;
            }
            // Next lexicographic j-subset of {0..n_edges}.
            let mut pos = j;
            loop {
                if pos == 0 {
                    subset[j - 1] = n_edges; // exhausted
                    break;
                }
                pos -= 1;
                subset[pos] += 1;
                if subset[pos] <= n_edges - (j - pos) {
                    for p in pos + 1..j {
                        subset[p] = subset[p - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
    debug_assert_eq!(out.len() as u128, size);
    Ok(out)
}

/// Worst-case expectation over the full support, solved as an explicit
/// LP over scenario probabilities.
#[derive(Debug, Clone)]
pub struct BruteForceOutcome {
    /// max_{P} E_P[Q(x, u)] subject to the moment caps.
    pub value: f64,
    /// Q(x, u) per support point, in enumeration order.
    pub q_values: Vec<f64>,
    /// Probabilities per support point, in enumeration order.
    pub probabilities: Vec<f64>,
}

/// Evaluates Q on every support point (concurrently) and maximizes the
/// expectation over distributions satisfying the moment caps.
pub fn brute_force_dro(
    case: &CaseData,
    x: &FirstStageDecision,
    backend: &dyn Backend,
) -> Result<BruteForceOutcome> {
    let support = enumerate_support(case)?;
    let q_values: Vec<f64> = support
        .par_iter()
        .map(|u| evaluate_q(case, x, u, backend).map(|d| d.objective))
        .collect::<Result<_>>()?;

    let mut spec = ProblemSpec::maximize("worst-expectation");
    for &q in &q_values {
        spec.add_col(q, 0.0, f64::INFINITY);
    }
    spec.add_row(
        "mass",
        RowSense::Eq,
        1.0,
        (0..support.len()).map(|s| (s, 1.0)).collect(),
    );
    for (e, edge) in case.edges.iter().enumerate() {
        for t in 0..case.horizon() {
            let coeffs: Vec<(usize, f64)> = support
                .iter()
                .enumerate()
                .filter(|(_, u)| !u.intact(e, t))
                .map(|(s, _)| (s, 1.0))
                .collect();
            spec.add_row("moment", RowSense::Le, edge.mu_max[t], coeffs);
        }
    }
    let solved = backend.solve(&spec, &SolveOptions::default())?;
    Ok(BruteForceOutcome {
        value: solved.objective,
        q_values,
        probabilities: solved.columns,
    })
}

/// Optimal moment multipliers by explicit epigraph over the support:
/// min_{β≥0} Σ(mu_max - 1)β + z with z ≥ Q(x,u) + Σ u β for every
/// support point. Equals [`brute_force_dro`] by LP duality, but exposes
/// the minimizing β for testing the dualized subproblem.
pub fn optimal_beta_by_enumeration(
    case: &CaseData,
    x: &FirstStageDecision,
    backend: &dyn Backend,
) -> Result<(Vec<f64>, f64)> {
    let idx = VariableIndex::new(case);
    let support = enumerate_support(case)?;
    let q_values: Vec<f64> = support
        .par_iter()
        .map(|u| evaluate_q(case, x, u, backend).map(|d| d.objective))
        .collect::<Result<_>>()?;

    let mut spec = ProblemSpec::minimize("moment-multipliers");
    for (e, edge) in case.edges.iter().enumerate() {
        for t in 0..case.horizon() {
            debug_assert_eq!(idx.u(e, t), spec.n_cols());
            spec.add_col(edge.mu_max[t] - 1.0, 0.0, f64::INFINITY);
        }
    }
    let z = spec.add_col(1.0, f64::NEG_INFINITY, f64::INFINITY);
    for (s, u) in support.iter().enumerate() {
        // z ≥ q_s + Σ_{intact (e,t)} β  =>  Σ u β - z ≤ -q_s.
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for e in 0..case.edge_count() {
            for t in 0..case.horizon() {
                if u.intact(e, t) {
                    coeffs.push((idx.u(e, t), 1.0));
                }
            }
        }
        coeffs.push((z, -1.0));
        spec.add_row("epigraph", RowSense::Le, -q_values[s], coeffs);
    }
    let solved = backend.solve(&spec, &SolveOptions::default())?;
    let beta = solved.columns[..idx.u_count()].to_vec();
    Ok((beta, solved.objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArcDir;
    use crate::netdata::parse_case;
    use crate::solver::backend_by_name;
    use std::collections::HashSet;

    fn two_bus_case(mu: f64) -> CaseData {
        parse_case(
            &format!(
                r#"{{
              "meta": {{"s_base_kva": 1000.0, "horizon_steps": 1, "step_hours": 1.0}},
              "params": {{"v_min": 0.95, "v_max": 1.05, "big_m": 1.0, "k": 1, "n_sw_max": 2, "beta_bound": 100000.0}},
              "nodes": [
                {{"id": "a", "demand_p": [0.0], "demand_q": [0.0], "weight": 1.0, "critical": false}},
                {{"id": "b", "demand_p": [50.0], "demand_q": [10.0], "weight": 100.0, "critical": true}}
              ],
              "edges": [
                {{"from_node": "a", "to_node": "b", "r": 0.0001, "x": 0.0001, "is_tie": false, "initially_closed": true, "mu_max": [{mu}]}}
              ],
              "dgs": [
                {{"node": "a", "p_max": [100.0], "q_max": [50.0], "grid_forming": true}}
              ]
            }}"#
            ),
            "inline",
        )
        .unwrap()
    }

    fn case_with_shape(n_edges: usize, horizon: usize, k: usize) -> CaseData {
        // A star with enough leaves to carry the requested edge count.
        let mut nodes = vec![
            r#"{"id": "hub", "demand_p": [0.0], "demand_q": [0.0], "weight": 1.0, "critical": false}"#
                .to_string(),
        ];
        let mut edges = Vec::new();
        for e in 0..n_edges {
            nodes.push(format!(
                r#"{{"id": "l{e}", "demand_p": [1.0], "demand_q": [0.0], "weight": 1.0, "critical": false}}"#
            ));
            edges.push(format!(
                r#"{{"from_node": "hub", "to_node": "l{e}", "r": 0.001, "x": 0.001, "is_tie": false, "initially_closed": true, "mu_max": [0.1]}}"#
            ));
        }
        parse_case(
            &format!(
                r#"{{
              "meta": {{"s_base_kva": 1000.0, "horizon_steps": {horizon}, "step_hours": 1.0}},
              "params": {{"v_min": 0.95, "v_max": 1.05, "big_m": 1.0, "k": {k}, "n_sw_max": {n_edges}, "beta_bound": 1000.0}},
              "nodes": [{}],
              "edges": [{}],
              "dgs": [
                {{"node": "hub", "p_max": [100.0], "q_max": [50.0], "grid_forming": true}}
              ]
            }}"#,
                nodes.join(","),
                edges.join(",")
            ),
            "inline",
        )
        .unwrap()
    }

    #[test]
    fn single_edge_single_step_has_two_points() {
        let support = enumerate_support(&case_with_shape(1, 1, 1)).unwrap();
        assert_eq!(support.len(), 2);
        assert_eq!(support[0], ScenarioRealization::all_intact(1));
        assert_eq!(support[1].fail_step, vec![Some(0)]);
    }

    #[test]
    fn single_edge_two_steps_has_three_points() {
        let support = enumerate_support(&case_with_shape(1, 2, 1)).unwrap();
        assert_eq!(support.len(), 3);
        // Intact, fail at step 1, fail at step 2.
        let fails: Vec<_> = support.iter().map(|s| s.fail_step[0]).collect();
        assert_eq!(fails, vec![None, Some(0), Some(1)]);
    }

    #[test]
    fn two_edges_two_steps_budget_one() {
        // Permanent failures with at most one line down at any step:
        // the failing set has at most one edge, each with 2 possible
        // onsets -> 1 + 2*2 = 5 trajectories.
        let support = enumerate_support(&case_with_shape(2, 2, 1)).unwrap();
        assert_eq!(support.len(), 5);
        assert_eq!(support.len() as u128, support_size(2, 2, 1));
        let unique: HashSet<_> = support.iter().collect();
        assert_eq!(unique.len(), 5, "duplicates in the enumeration");
        for s in &support {
            assert!(s.within_budget(1, 2));
        }
    }

    #[test]
    fn larger_budget_matches_closed_form_and_stays_unique() {
        let case = case_with_shape(4, 3, 2);
        let support = enumerate_support(&case).unwrap();
        // 1 + C(4,1)*3 + C(4,2)*9 = 1 + 12 + 54.
        assert_eq!(support.len(), 67);
        assert_eq!(support_size(4, 3, 2), 67);
        let unique: HashSet<_> = support.iter().collect();
        assert_eq!(unique.len(), support.len());
        for s in &support {
            assert!(s.within_budget(2, 3));
            // Monotone by construction: once failed, stays failed.
            for e in 0..4 {
                for t in 1..3 {
                    assert!(s.intact(e, t - 1) || !s.intact(e, t));
                }
            }
        }
    }

    #[test]
    fn oversized_support_is_refused() {
        // 40 edges, horizon 4, k=3 exceeds the cap by a wide margin.
        let case = crate::netdata::build_ieee37_case(&crate::netdata::Ieee37Overrides {
            k: 3,
            ..Default::default()
        });
        match enumerate_support(&case) {
            Err(Error::SupportTooLarge { size, limit }) => {
                assert_eq!(size, support_size(40, 4, 3));
                assert_eq!(limit, SUPPORT_LIMIT);
            }
            other => panic!("expected SupportTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn budget_larger_than_edge_count_saturates() {
        let support = enumerate_support(&case_with_shape(2, 1, 2)).unwrap();
        // 1 + 2 + 1 = all subsets of two edges.
        assert_eq!(support.len(), 4);
    }

    fn spanning_decision(case: &CaseData) -> FirstStageDecision {
        let idx = VariableIndex::new(case);
        let mut cols = vec![0.0; idx.x_count()];
        for t in 0..case.horizon() {
            for e in 0..case.edge_count() {
                cols[idx.c(e, ArcDir::Fwd, t)] = 1.0;
                cols[idx.f(e, ArcDir::Fwd, t)] = 1.0;
            }
        }
        FirstStageDecision::from_columns(&idx, &cols)
    }

    #[test]
    fn worst_expectation_puts_mass_on_the_failure() {
        // One line, demand 50 kW at weight 100, mu = 0.3: losing the
        // line costs 5000, so the adversary plays it with the full
        // allowed probability.
        let case = two_bus_case(0.3);
        let x = spanning_decision(&case);
        let backend = backend_by_name("highs").unwrap();
        let out = brute_force_dro(&case, &x, backend.as_ref()).unwrap();
        assert!((out.value - 1500.0).abs() <= 1e-6, "{}", out.value);
        assert!((out.q_values[0] - 0.0).abs() <= 1e-6);
        assert!((out.q_values[1] - 5000.0).abs() <= 1e-6);
        assert!((out.probabilities[1] - 0.3).abs() <= 1e-9);
    }

    #[test]
    fn moment_multipliers_certify_the_same_value() {
        let case = two_bus_case(0.3);
        let x = spanning_decision(&case);
        let backend = backend_by_name("highs").unwrap();
        let primal = brute_force_dro(&case, &x, backend.as_ref()).unwrap();
        let (beta, dual_value) = optimal_beta_by_enumeration(&case, &x, backend.as_ref()).unwrap();
        assert!(
            (primal.value - dual_value).abs() <= 1e-6 * primal.value.abs().max(1.0),
            "primal {} vs dual {}",
            primal.value,
            dual_value
        );
        // Hand-derived: the multiplier settles at the failure cost.
        assert!((beta[0] - 5000.0).abs() <= 1e-6, "{:?}", beta);
    }

    #[test]
    fn saturated_moment_cap_recovers_plain_worst_case() {
        // mu = 1 makes the moment rows vacuous: the worst distribution
        // is the point mass on the worst trajectory.
        let case = two_bus_case(1.0);
        let x = spanning_decision(&case);
        let backend = backend_by_name("highs").unwrap();
        let out = brute_force_dro(&case, &x, backend.as_ref()).unwrap();
        assert!((out.value - 5000.0).abs() <= 1e-6, "{}", out.value);
    }
}
