//! Small hand-analyzable cases shared by unit tests across modules.
//! Every number here is chosen so worst cases and optima can be derived
//! on paper; tests assert against those derivations, not against the
//! code under test.

use crate::model::{ArcDir, FirstStageDecision, VariableIndex};
use crate::netdata::{parse_case, CaseData};

/// One grid-forming source feeding one weighted load over one line.
///
/// Hand analysis (single step, k = 1): the dispatch loss is 0 with the
/// line intact and 100 $/kWh · 50 kW = 5000 with it failed, so with
/// failure mass capped at 0.3 the worst expectation is 1500.
pub fn two_bus_case() -> CaseData {
    parse_case(
        r#"{
          "meta": {"s_base_kva": 1000.0, "horizon_steps": 1, "step_hours": 1.0},
          "params": {"v_min": 0.95, "v_max": 1.05, "big_m": 1.0, "k": 1, "n_sw_max": 2, "beta_bound": 100000.0},
          "nodes": [
            {"id": "a", "demand_p": [0.0], "demand_q": [0.0], "weight": 1.0, "critical": false},
            {"id": "b", "demand_p": [50.0], "demand_q": [10.0], "weight": 100.0, "critical": true}
          ],
          "edges": [
            {"from_node": "a", "to_node": "b", "r": 0.0001, "x": 0.0001, "is_tie": false, "initially_closed": true, "mu_max": [0.3]}
          ],
          "dgs": [
            {"node": "a", "p_max": [100.0], "q_max": [50.0], "grid_forming": true}
          ]
        }"#,
        "inline",
    )
    .unwrap()
}

/// Stretches a single-step case to `steps` identical steps.
pub fn repeat_steps(case: &CaseData, steps: usize) -> CaseData {
    let mut out = case.clone();
    out.meta.horizon_steps = steps;
    for n in &mut out.nodes {
        n.demand_p = vec![n.demand_p[0]; steps];
        n.demand_q = vec![n.demand_q[0]; steps];
    }
    for e in &mut out.edges {
        e.mu_max = vec![e.mu_max[0]; steps];
    }
    for d in &mut out.dgs {
        d.p_max = vec![d.p_max[0]; steps];
        d.q_max = vec![d.q_max[0]; steps];
    }
    out
}

/// Three leaves on a grid-forming hub, distinct weights, one step,
/// k = 1.
///
/// Hand analysis: losing leaf i sheds 10 kW at weight {1, 2, 5}, so the
/// per-trajectory losses are {0, 10, 20, 50}. With 0.2 failure mass per
/// line the worst distribution spends 0.2 on each single failure:
/// 0.2·(10 + 20 + 50) = 16. The plain worst case is 50.
pub fn star_case() -> CaseData {
    parse_case(
        r#"{
          "meta": {"s_base_kva": 1000.0, "horizon_steps": 1, "step_hours": 1.0},
          "params": {"v_min": 0.95, "v_max": 1.05, "big_m": 1.0, "k": 1, "n_sw_max": 4, "beta_bound": 100000.0},
          "nodes": [
            {"id": "hub", "demand_p": [0.0], "demand_q": [0.0], "weight": 1.0, "critical": false},
            {"id": "l1", "demand_p": [10.0], "demand_q": [0.0], "weight": 1.0, "critical": false},
            {"id": "l2", "demand_p": [10.0], "demand_q": [0.0], "weight": 2.0, "critical": false},
            {"id": "l3", "demand_p": [10.0], "demand_q": [0.0], "weight": 5.0, "critical": true}
          ],
          "edges": [
            {"from_node": "hub", "to_node": "l1", "r": 0.0001, "x": 0.0001, "is_tie": false, "initially_closed": true, "mu_max": [0.2]},
            {"from_node": "hub", "to_node": "l2", "r": 0.0001, "x": 0.0001, "is_tie": false, "initially_closed": true, "mu_max": [0.2]},
            {"from_node": "hub", "to_node": "l3", "r": 0.0001, "x": 0.0001, "is_tie": false, "initially_closed": true, "mu_max": [0.2]}
          ],
          "dgs": [
            {"node": "hub", "p_max": [100.0], "q_max": [50.0], "grid_forming": true}
          ]
        }"#,
        "inline",
    )
    .unwrap()
}

/// Closes every line in its forward orientation at every step — valid
/// whenever the case is a tree rooted at its grid-forming buses with
/// edges listed parent-to-child.
pub fn spanning(case: &CaseData) -> FirstStageDecision {
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
