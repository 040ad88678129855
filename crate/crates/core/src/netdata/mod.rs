//! Case-data model, file ingestion, validation, and the built-in
//! generator for the modified 37-node study case.
//!
//! Case files are UTF-8 JSON with explicit units: demands in kW/kvar,
//! impedances in p.u., weights in $/kWh, step length in hours. Internal
//! computation is per-unit on the declared `s_base_kva`.

mod ieee37;

pub use ieee37::{build_ieee37_case, Ieee37Overrides};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A load/junction node. Per-step arrays have length `horizon_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    /// Active demand per time step (kW).
    pub demand_p: Vec<f64>,
    /// Reactive demand per time step (kvar).
    pub demand_q: Vec<f64>,
    /// Shedding cost ($/kWh).
    pub weight: f64,
    pub critical: bool,
}

/// A switchable line section. `mu_max[t]` bounds the probability that the
/// line has failed by the end of step `t` (cumulative along the horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from_node: String,
    pub to_node: String,
    /// Resistance (p.u.).
    pub r: f64,
    /// Reactance (p.u.).
    pub x: f64,
    pub is_tie: bool,
    pub initially_closed: bool,
    /// Per-step failure-probability bound, each in [0, 1].
    pub mu_max: Vec<f64>,
}

/// A distributed generator. Grid-forming units set the voltage reference
/// of their island and double as microgrid roots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgSpec {
    pub node: String,
    /// Active capacity per step (kW).
    pub p_max: Vec<f64>,
    /// Reactive capacity per step (kvar).
    pub q_max: Vec<f64>,
    pub grid_forming: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMeta {
    pub s_base_kva: f64,
    pub horizon_steps: usize,
    pub step_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseParams {
    /// Voltage bounds (p.u.).
    pub v_min: f64,
    pub v_max: f64,
    /// Disjunctive constant for flow gating rows (p.u.).
    pub big_m: f64,
    /// Contingency budget: at most `k` lines failed simultaneously.
    pub k: usize,
    /// Per-step switch-action limit (applies from the second step on).
    pub n_sw_max: usize,
    /// Upper bound for the moment duals of the ambiguity set.
    pub beta_bound: f64,
}

/// A full problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseData {
    pub meta: CaseMeta,
    pub params: CaseParams,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
    pub dgs: Vec<DgSpec>,
}

/// One violated invariant found by [`validate_case`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// What is wrong, e.g. `"mu_max out of [0,1]"`.
    pub code: String,
    /// Which node/edge/dg it concerns.
    pub subject: String,
    pub message: String,
}

/// Every invariant violation in a case; empty iff the case is valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, code: &str, subject: impl fmt::Display, message: impl Into<String>) {
        self.violations.push(Violation {
            code: code.to_string(),
            subject: subject.to_string(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "[{}] {}: {}", v.code, v.subject, v.message)?;
        }
        Ok(())
    }
}

impl CaseData {
    pub fn horizon(&self) -> usize {
        self.meta.horizon_steps
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Dense node index by id.
    pub fn node_lookup(&self) -> BTreeMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect()
    }

    /// Indices of grid-forming buses (microgrid roots), sorted and deduplicated.
    pub fn root_nodes(&self) -> Vec<usize> {
        let lookup = self.node_lookup();
        let mut roots: Vec<usize> = self
            .dgs
            .iter()
            .filter(|d| d.grid_forming)
            .filter_map(|d| lookup.get(d.node.as_str()).copied())
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots
    }

    /// Edge endpoints as dense node indices, in edge-list order.
    pub fn edge_endpoints(&self) -> Vec<(usize, usize)> {
        let lookup = self.node_lookup();
        self.edges
            .iter()
            .map(|e| {
                (
                    *lookup.get(e.from_node.as_str()).expect("validated edge"),
                    *lookup.get(e.to_node.as_str()).expect("validated edge"),
                )
            })
            .collect()
    }

    /// Total active demand at step `t` (kW).
    pub fn total_demand_p(&self, t: usize) -> f64 {
        self.nodes.iter().map(|n| n.demand_p[t]).sum()
    }

    /// Total weighted demand over the horizon, `sum_t sum_i w_i * d_{i,t}`.
    /// This is the largest weighted shedding any dispatch can produce.
    pub fn total_weighted_demand(&self) -> f64 {
        (0..self.horizon())
            .map(|t| {
                self.nodes
                    .iter()
                    .map(|n| n.weight * n.demand_p[t])
                    .sum::<f64>()
            })
            .sum()
    }

    /// kW per p.u.
    pub fn s_base(&self) -> f64 {
        self.meta.s_base_kva
    }

    /// Content hash of the case (hex SHA-256 over its canonical JSON form).
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("case serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Loads and shape-validates a case file.
///
/// Per-step arrays of length 1 are broadcast to the horizon length; any
/// other arity mismatch is a schema error naming the offending element.
pub fn load_case(path: impl AsRef<Path>) -> Result<CaseData> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_case(&text, &path.display().to_string())
}

/// Parses case JSON from a string; `origin` names the source in errors.
pub fn parse_case(text: &str, origin: &str) -> Result<CaseData> {
    let mut case: CaseData = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    normalize_arities(&mut case)?;
    Ok(case)
}

fn fix_arity(arr: &mut Vec<f64>, horizon: usize, key: String) -> Result<()> {
    if arr.len() == horizon {
        return Ok(());
    }
    if arr.len() == 1 {
        let v = arr[0];
        arr.resize(horizon, v);
        return Ok(());
    }
    Err(Error::schema(
        key,
        format!(
            "per-step array has length {} but horizon_steps is {}",
            arr.len(),
            horizon
        ),
    ))
}

fn normalize_arities(case: &mut CaseData) -> Result<()> {
    let horizon = case.meta.horizon_steps;
    if horizon == 0 {
        return Err(Error::schema("meta.horizon_steps", "must be at least 1"));
    }
    for node in &mut case.nodes {
        fix_arity(
            &mut node.demand_p,
            horizon,
            format!("nodes[{}].demand_p", node.id),
        )?;
        fix_arity(
            &mut node.demand_q,
            horizon,
            format!("nodes[{}].demand_q", node.id),
        )?;
    }
    for (i, edge) in case.edges.iter_mut().enumerate() {
        fix_arity(
            &mut edge.mu_max,
            horizon,
            format!("edges[{i} {}-{}].mu_max", edge.from_node, edge.to_node),
        )?;
    }
    for dg in &mut case.dgs {
        fix_arity(&mut dg.p_max, horizon, format!("dgs[{}].p_max", dg.node))?;
        fix_arity(&mut dg.q_max, horizon, format!("dgs[{}].q_max", dg.node))?;
    }
    Ok(())
}

/// Checks every structural invariant of a case and reports all violations.
/// Pure: identical inputs produce identical reports.
pub fn validate_case(case: &CaseData) -> ValidationReport {
    let mut report = ValidationReport::default();
    let horizon = case.meta.horizon_steps;

    if horizon == 0 {
        report.push("horizon", "meta", "horizon_steps must be at least 1");
    }
    if case.meta.step_hours <= 0.0 {
        report.push("step-hours", "meta", "step_hours must be positive");
    }
    if case.meta.s_base_kva <= 0.0 {
        report.push("s-base", "meta", "s_base_kva must be positive");
    }
    if !(case.params.v_min < 1.0 && 1.0 < case.params.v_max) {
        report.push(
            "voltage-window",
            "params",
            format!(
                "v_min < 1 < v_max required, got [{}, {}]",
                case.params.v_min, case.params.v_max
            ),
        );
    }
    if case.params.big_m <= 0.0 {
        report.push("big-m", "params", "big_m must be positive");
    }
    if case.params.beta_bound <= 0.0 {
        report.push("beta-bound", "params", "beta_bound must be positive");
    }
    if case.params.k > case.edges.len() {
        report.push(
            "budget",
            "params",
            format!(
                "contingency budget k={} exceeds edge count {}",
                case.params.k,
                case.edges.len()
            ),
        );
    }

    let mut seen_ids = BTreeSet::new();
    for node in &case.nodes {
        if !seen_ids.insert(node.id.as_str()) {
            report.push("duplicate-node", &node.id, "node id appears twice");
        }
        for (name, arr) in [("demand_p", &node.demand_p), ("demand_q", &node.demand_q)] {
            if arr.len() != horizon {
                report.push(
                    "arity",
                    &node.id,
                    format!("{name} has length {} != horizon {horizon}", arr.len()),
                );
            }
            if arr.iter().any(|v| *v < 0.0) {
                report.push("negative-demand", &node.id, format!("{name} has a negative entry"));
            }
        }
        if node.weight <= 0.0 {
            report.push("weight", &node.id, "weight must be strictly positive");
        }
    }
    let max_noncritical = case
        .nodes
        .iter()
        .filter(|n| !n.critical)
        .map(|n| n.weight)
        .fold(f64::NEG_INFINITY, f64::max);
    for node in case.nodes.iter().filter(|n| n.critical) {
        if node.weight <= max_noncritical {
            report.push(
                "critical-weight",
                &node.id,
                format!(
                    "critical weight {} does not exceed the largest non-critical weight {}",
                    node.weight, max_noncritical
                ),
            );
        }
    }

    let lookup = case.node_lookup();
    let mut seen_pairs = BTreeSet::new();
    for (i, edge) in case.edges.iter().enumerate() {
        let subject = format!("edge {} {}-{}", i, edge.from_node, edge.to_node);
        if edge.from_node == edge.to_node {
            report.push("self-loop", &subject, "from_node equals to_node");
        }
        for end in [&edge.from_node, &edge.to_node] {
            if !lookup.contains_key(end.as_str()) {
                report.push("unknown-node", &subject, format!("endpoint {end} not in nodes"));
            }
        }
        let key = if edge.from_node <= edge.to_node {
            (edge.from_node.clone(), edge.to_node.clone())
        } else {
            (edge.to_node.clone(), edge.from_node.clone())
        };
        if !seen_pairs.insert(key) {
            report.push("duplicate-edge", &subject, "unordered node pair appears twice");
        }
        if edge.r < 0.0 || edge.x < 0.0 {
            report.push("impedance", &subject, "r and x must be nonnegative");
        }
        if edge.mu_max.len() != horizon {
            report.push(
                "arity",
                &subject,
                format!("mu_max has length {} != horizon {horizon}", edge.mu_max.len()),
            );
        }
        if edge.mu_max.iter().any(|m| !(0.0..=1.0).contains(m)) {
            report.push("mu-range", &subject, "mu_max out of [0,1]");
        }
    }

    let mut grid_forming_at = BTreeMap::new();
    for (i, dg) in case.dgs.iter().enumerate() {
        let subject = format!("dg {} at {}", i, dg.node);
        if !lookup.contains_key(dg.node.as_str()) {
            report.push("unknown-node", &subject, "dg node not in nodes");
        }
        for (name, arr) in [("p_max", &dg.p_max), ("q_max", &dg.q_max)] {
            if arr.len() != horizon {
                report.push(
                    "arity",
                    &subject,
                    format!("{name} has length {} != horizon {horizon}", arr.len()),
                );
            }
            if arr.iter().any(|v| *v < 0.0) {
                report.push("negative-capacity", &subject, format!("{name} has a negative entry"));
            }
        }
        if dg.grid_forming {
            if let Some(prev) = grid_forming_at.insert(dg.node.clone(), i) {
                report.push(
                    "grid-forming-clash",
                    &dg.node,
                    format!("two grid-forming DGs on one node (dgs {prev} and {i})"),
                );
            }
        }
    }
    if grid_forming_at.is_empty() {
        report.push("no-root", "dgs", "at least one grid-forming DG is required");
    }

    if !all_edges_closed_connected(case) {
        report.push(
            "disconnected",
            "topology",
            "graph is not connected with all edges closed",
        );
    }

    report
}

fn all_edges_closed_connected(case: &CaseData) -> bool {
    let n = case.nodes.len();
    if n == 0 {
        return false;
    }
    let lookup = case.node_lookup();
    let mut adjacency = vec![Vec::new(); n];
    for edge in &case.edges {
        let (Some(&a), Some(&b)) = (
            lookup.get(edge.from_node.as_str()),
            lookup.get(edge.to_node.as_str()),
        ) else {
            continue; // reported separately
        };
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 0;
    while let Some(v) = stack.pop() {
        count += 1;
        for &w in &adjacency[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    count == n
}
