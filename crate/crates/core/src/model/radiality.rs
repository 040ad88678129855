//! Graph-side radiality verification, independent of the MILP encoding.
//!
//! The checks reason directly over the parent arcs and the closed-line
//! subgraph, so they can confirm (or refute) what the first-stage
//! constraint system claims to enforce.

use crate::netdata::CaseData;

use super::{ArcDir, FirstStageDecision};

/// Outcome of the structural checks at one step; empty means radial.
#[derive(Debug, Clone)]
pub struct RadialityReport {
    pub violations: Vec<String>,
}

impl RadialityReport {
    pub fn is_radial(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verifies the microgrid structure implied by `x` at step `t`:
///
/// - each closed-line component is a tree;
/// - each component containing an energized bus has exactly one
///   grid-forming bus;
/// - closed lines never touch de-energized buses;
/// - parent arcs are consistent: at most one parent per bus, no parent
///   at grid-forming buses, no arc leaving a dead bus, and never both
///   orientations of one edge.
pub fn check_radiality(x: &FirstStageDecision, case: &CaseData, t: usize) -> RadialityReport {
    let n = case.node_count();
    let endpoints = case.edge_endpoints();
    let roots = case.root_nodes();
    let is_root = {
        let mut v = vec![false; n];
        for &r in &roots {
            v[r] = true;
        }
        v
    };
    let id = |i: usize| case.nodes[i].id.as_str();
    let mut violations = Vec::new();

    // Parent arcs per bus: (edge, tail).
    let mut parents: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, &(a, b)) in endpoints.iter().enumerate() {
        if x.arc(e, ArcDir::Fwd, t) && x.arc(e, ArcDir::Rev, t) {
            violations.push(format!(
                "step {t}: edge {}-{} selected in both orientations",
                id(a),
                id(b)
            ));
        }
        if x.arc(e, ArcDir::Fwd, t) {
            parents[b].push((e, a));
        }
        if x.arc(e, ArcDir::Rev, t) {
            parents[a].push((e, b));
        }
    }

    for i in 0..n {
        if parents[i].len() > 1 {
            violations.push(format!(
                "step {t}: bus {} has {} parents",
                id(i),
                parents[i].len()
            ));
        }
        if is_root[i] && !parents[i].is_empty() {
            violations.push(format!(
                "step {t}: grid-forming bus {} has a parent",
                id(i)
            ));
        }
    }

    // A bus is energized when it is grid-forming or has a parent.
    let energized: Vec<bool> = (0..n)
        .map(|i| is_root[i] || !parents[i].is_empty())
        .collect();
    for i in 0..n {
        for &(e, tail) in &parents[i] {
            if !energized[tail] {
                let (a, b) = endpoints[e];
                violations.push(format!(
                    "step {t}: edge {}-{} leaves de-energized bus {}",
                    id(a),
                    id(b),
                    id(tail)
                ));
            }
        }
    }

    // Components of the closed-line subgraph.
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut closed_edges: Vec<(usize, usize)> = Vec::new();
    for (e, &(a, b)) in endpoints.iter().enumerate() {
        if x.closed(e, t) {
            adjacency[a].push(b);
            adjacency[b].push(a);
            closed_edges.push((a, b));
            for node in [a, b] {
                if !energized[node] {
                    violations.push(format!(
                        "step {t}: closed edge {}-{} touches de-energized bus {}",
                        id(a),
                        id(b),
                        id(node)
                    ));
                }
            }
        }
    }
    let mut component = vec![usize::MAX; n];
    let mut n_components = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        component[start] = n_components;
        while let Some(v) = stack.pop() {
            for &w in &adjacency[v] {
                if component[w] == usize::MAX {
                    component[w] = n_components;
                    stack.push(w);
                }
            }
        }
        n_components += 1;
    }

    let mut comp_nodes = vec![0usize; n_components];
    let mut comp_edges = vec![0usize; n_components];
    let mut comp_roots = vec![0usize; n_components];
    let mut comp_energized = vec![false; n_components];
    let mut comp_witness = vec![0usize; n_components];
    for i in 0..n {
        let c = component[i];
        comp_nodes[c] += 1;
        comp_witness[c] = i;
        if is_root[i] {
            comp_roots[c] += 1;
        }
        if energized[i] {
            comp_energized[c] = true;
        }
    }
    for &(a, _) in &closed_edges {
        comp_edges[component[a]] += 1;
    }

    for c in 0..n_components {
        if comp_edges[c] + 1 != comp_nodes[c] {
            violations.push(format!(
                "step {t}: component of bus {} has {} edges over {} buses (cycle)",
                id(comp_witness[c]),
                comp_edges[c],
                comp_nodes[c]
            ));
        }
        if comp_energized[c] && comp_roots[c] != 1 {
            violations.push(format!(
                "step {t}: energized component of bus {} has {} grid-forming buses",
                id(comp_witness[c]),
                comp_roots[c]
            ));
        }
    }

    RadialityReport { violations }
}
