//! First-stage topology polytope: radial microgrid formation over time
//! with a per-step switching budget.
//!
//! Radiality uses a single-commodity fictitious flow: every energized
//! non-root bus absorbs one unit, roots source flow, and flow may only
//! travel along selected parent arcs. Parent uniqueness plus the flow
//! balance rules out cycles and energization through shed buses.

use crate::netdata::CaseData;
use crate::solver::{RowSense, RowSpec};

use super::{ArcDir, LinearSystem, VariableIndex};

/// Assembles the first-stage constraint system over the x block.
///
/// Row groups:
/// - `eq3`: roots are net sources of fictitious flow.
/// - `eq4`: each non-root absorbs one unit unless its slack is active.
/// - `eq5`: flow only on selected arcs, capped at the node count.
/// - `eq6`: no parent arc may point into a root.
/// - `eq7`: at most one orientation per edge.
/// - `eq8`: parent uniqueness — one incoming arc or an active slack.
/// - `eq10`: switch-event bookkeeping against the initial line status.
/// - `eq11`: per-step switching budget (the first step reflects the
///   pre-horizon state and is exempt).
///
/// Slack bounds live on the sv columns themselves: [0,1] for regular
/// buses, pinned to 0 at grid-forming buses.
pub fn build_first_stage(case: &CaseData, idx: &VariableIndex) -> LinearSystem {
    let horizon = case.horizon();
    let n_nodes = case.node_count();
    let n_edges = case.edge_count();
    let roots = case.root_nodes();
    let endpoints = case.edge_endpoints();
    let flow_cap = n_nodes as f64;

    let mut sys = LinearSystem {
        n_cols: idx.x_count(),
        col_lower: vec![0.0; idx.x_count()],
        col_upper: vec![0.0; idx.x_count()],
        integer: vec![false; idx.x_count()],
        rows: Vec::new(),
    };

    for t in 0..horizon {
        for e in 0..n_edges {
            for dir in ArcDir::BOTH {
                let c = idx.c(e, dir, t);
                sys.col_upper[c] = 1.0;
                sys.integer[c] = true;
                sys.col_upper[idx.f(e, dir, t)] = flow_cap;
            }
            // Switch events stay continuous: closures are integral, so
            // the event split closed(t) - closed(t-1) = v_cl - v_op
            // always admits an integral minimal representation, and the
            // budget row only ever tightens when both events are pushed
            // down. Declaring them relaxed spares the search half its
            // binaries without changing the reachable closure set.
            for col in [idx.v_cl(e, t), idx.v_op(e, t)] {
                sys.col_upper[col] = 1.0;
            }
        }
        for i in 0..n_nodes {
            // Roots carry no slack; their upper bound stays at 0.
            if !roots.contains(&i) {
                sys.col_upper[idx.sv(i, t)] = 1.0;
            }
        }
    }

    // Arcs incident to each node, as (edge, direction pointing *into* the
    // node) and (edge, direction pointing *out of* the node).
    let mut arcs_in: Vec<Vec<(usize, ArcDir)>> = vec![Vec::new(); n_nodes];
    let mut arcs_out: Vec<Vec<(usize, ArcDir)>> = vec![Vec::new(); n_nodes];
    for (e, &(a, b)) in endpoints.iter().enumerate() {
        arcs_in[b].push((e, ArcDir::Fwd));
        arcs_out[a].push((e, ArcDir::Fwd));
        arcs_in[a].push((e, ArcDir::Rev));
        arcs_out[b].push((e, ArcDir::Rev));
    }

    for t in 0..horizon {
        for i in 0..n_nodes {
            let inflow: Vec<(usize, f64)> = arcs_in[i]
                .iter()
                .map(|&(e, d)| (idx.f(e, d, t), 1.0))
                .collect();
            let outflow: Vec<(usize, f64)> = arcs_out[i]
                .iter()
                .map(|&(e, d)| (idx.f(e, d, t), -1.0))
                .collect();
            let mut coeffs = inflow;
            coeffs.extend(outflow);
            if roots.contains(&i) {
                // Net outflow >= 0: roots only inject.
                sys.rows.push(RowSpec {
                    tag: "eq3".into(),
                    sense: RowSense::Le,
                    rhs: 0.0,
                    coeffs: coeffs.clone(),
                });
                // No parent arc may point into a root.
                let parents: Vec<(usize, f64)> = arcs_in[i]
                    .iter()
                    .map(|&(e, d)| (idx.c(e, d, t), 1.0))
                    .collect();
                sys.rows.push(RowSpec {
                    tag: "eq6".into(),
                    sense: RowSense::Eq,
                    rhs: 0.0,
                    coeffs: parents,
                });
            } else {
                // Absorb one unit unless the slack is active.
                coeffs.push((idx.sv(i, t), 1.0));
                sys.rows.push(RowSpec {
                    tag: "eq4".into(),
                    sense: RowSense::Eq,
                    rhs: 1.0,
                    coeffs,
                });
                // Exactly one parent or an active slack.
                let mut parents: Vec<(usize, f64)> = arcs_in[i]
                    .iter()
                    .map(|&(e, d)| (idx.c(e, d, t), 1.0))
                    .collect();
                parents.push((idx.sv(i, t), 1.0));
                sys.rows.push(RowSpec {
                    tag: "eq8".into(),
                    sense: RowSense::Eq,
                    rhs: 1.0,
                    coeffs: parents,
                });
            }
        }

        for e in 0..n_edges {
            for dir in ArcDir::BOTH {
                sys.rows.push(RowSpec {
                    tag: "eq5".into(),
                    sense: RowSense::Le,
                    rhs: 0.0,
                    coeffs: vec![(idx.f(e, dir, t), 1.0), (idx.c(e, dir, t), -flow_cap)],
                });
            }
            sys.rows.push(RowSpec {
                tag: "eq7".into(),
                sense: RowSense::Le,
                rhs: 1.0,
                coeffs: vec![
                    (idx.c(e, ArcDir::Fwd, t), 1.0),
                    (idx.c(e, ArcDir::Rev, t), 1.0),
                ],
            });

            // Switch-event bookkeeping: closed(t) - closed(t-1) =
            // v_cl - v_op, anchored at the pre-horizon status.
            let mut coeffs = vec![
                (idx.c(e, ArcDir::Fwd, t), 1.0),
                (idx.c(e, ArcDir::Rev, t), 1.0),
                (idx.v_cl(e, t), -1.0),
                (idx.v_op(e, t), 1.0),
            ];
            let rhs = if t == 0 {
                if case.edges[e].initially_closed {
                    1.0
                } else {
                    0.0
                }
            } else {
                coeffs.push((idx.c(e, ArcDir::Fwd, t - 1), -1.0));
                coeffs.push((idx.c(e, ArcDir::Rev, t - 1), -1.0));
                0.0
            };
            sys.rows.push(RowSpec {
                tag: "eq10".into(),
                sense: RowSense::Eq,
                rhs,
                coeffs,
            });
        }

        // The first step's events express the gap to the initial status
        // and are not charged against the budget.
        if t >= 1 {
            let coeffs = (0..n_edges)
                .flat_map(|e| [(idx.v_cl(e, t), 1.0), (idx.v_op(e, t), 1.0)])
                .collect();
            sys.rows.push(RowSpec {
                tag: "eq11".into(),
                sense: RowSense::Le,
                rhs: case.params.n_sw_max as f64,
                coeffs,
            });
        }
    }

    sys
}
