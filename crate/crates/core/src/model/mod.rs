//! Deterministic model assembly: variable indexing, the first-stage
//! topology polytope, the second-stage operation system in affine form,
//! the second-stage evaluator, and independent graph radiality oracles.
//!
//! Conventions used throughout:
//! - Arcs are ordered edge directions. `ArcDir::Fwd` points
//!   `from_node -> to_node`; `c[arc] = 1` means the tail is the parent of
//!   the head and fictitious flow may travel tail -> head.
//! - An edge is *closed* at step `t` when either of its two arcs is
//!   selected; power may flow on closed edges only.
//! - Grid-forming DG buses are *roots*: they source fictitious flow, have
//!   no parent, and pin their island's voltage to 1 p.u.
//! - Power quantities are per-unit on the case base inside all linear
//!   systems; public results are converted back to kW/kvar.

mod first_stage;
mod radiality;
mod second_stage;

pub use first_stage::build_first_stage;
pub use radiality::{check_radiality, RadialityReport};
pub use second_stage::{build_second_stage, dispatch_bounds, evaluate_q, AffineRow, AffineSystem};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netdata::CaseData;
use crate::solver::RowSpec;

/// Direction of an ordered arc over an undirected edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcDir {
    /// `from_node -> to_node` as listed in the case file.
    Fwd,
    /// `to_node -> from_node`.
    Rev,
}

impl ArcDir {
    pub const BOTH: [ArcDir; 2] = [ArcDir::Fwd, ArcDir::Rev];

    fn offset(self) -> usize {
        match self {
            ArcDir::Fwd => 0,
            ArcDir::Rev => 1,
        }
    }
}

/// Dense, deterministic column numbering for every decision symbol.
///
/// Layout is three contiguous blocks: first-stage `x` (c, f, sv, v_cl,
/// v_op), second-stage `y` (PG, QG, S_p, S_q, PF, QF, V, delta), then the
/// uncertainty `u`. Within a kind, subscripts are ordered
/// (entity, direction, step). The split lets the same index serve the
/// first-stage MILP (x only), dispatch LPs (y only, x and u as data), and
/// the dualized subproblem (u plus one multiplier per affine row).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableIndex {
    n_nodes: usize,
    n_edges: usize,
    n_dgs: usize,
    horizon: usize,
}

impl VariableIndex {
    pub fn new(case: &CaseData) -> Self {
        Self {
            n_nodes: case.node_count(),
            n_edges: case.edge_count(),
            n_dgs: case.dgs.len(),
            horizon: case.horizon(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn n_dgs(&self) -> usize {
        self.n_dgs
    }

    fn arc_offset(&self, edge: usize, dir: ArcDir, t: usize) -> usize {
        debug_assert!(edge < self.n_edges && t < self.horizon);
        (edge * 2 + dir.offset()) * self.horizon + t
    }

    fn node_offset(&self, node: usize, t: usize) -> usize {
        debug_assert!(node < self.n_nodes && t < self.horizon);
        node * self.horizon + t
    }

    fn edge_offset(&self, edge: usize, t: usize) -> usize {
        debug_assert!(edge < self.n_edges && t < self.horizon);
        edge * self.horizon + t
    }

    fn dg_offset(&self, dg: usize, t: usize) -> usize {
        debug_assert!(dg < self.n_dgs && t < self.horizon);
        dg * self.horizon + t
    }

    // ---- x block -----------------------------------------------------

    pub fn c(&self, edge: usize, dir: ArcDir, t: usize) -> usize {
        self.arc_offset(edge, dir, t)
    }

    pub fn f(&self, edge: usize, dir: ArcDir, t: usize) -> usize {
        2 * self.n_edges * self.horizon + self.arc_offset(edge, dir, t)
    }

    pub fn sv(&self, node: usize, t: usize) -> usize {
        4 * self.n_edges * self.horizon + self.node_offset(node, t)
    }

    pub fn v_cl(&self, edge: usize, t: usize) -> usize {
        (4 * self.n_edges + self.n_nodes) * self.horizon + self.edge_offset(edge, t)
    }

    pub fn v_op(&self, edge: usize, t: usize) -> usize {
        (5 * self.n_edges + self.n_nodes) * self.horizon + self.edge_offset(edge, t)
    }

    /// Number of first-stage columns; x occupies `0..x_count()`.
    pub fn x_count(&self) -> usize {
        (6 * self.n_edges + self.n_nodes) * self.horizon
    }

    // ---- y block (indices relative to the y block) --------------------

    pub fn pg(&self, dg: usize, t: usize) -> usize {
        self.dg_offset(dg, t)
    }

    pub fn qg(&self, dg: usize, t: usize) -> usize {
        self.n_dgs * self.horizon + self.dg_offset(dg, t)
    }

    pub fn s_p(&self, node: usize, t: usize) -> usize {
        2 * self.n_dgs * self.horizon + self.node_offset(node, t)
    }

    pub fn s_q(&self, node: usize, t: usize) -> usize {
        (2 * self.n_dgs + self.n_nodes) * self.horizon + self.node_offset(node, t)
    }

    pub fn pf(&self, edge: usize, t: usize) -> usize {
        (2 * self.n_dgs + 2 * self.n_nodes) * self.horizon + self.edge_offset(edge, t)
    }

    pub fn qf(&self, edge: usize, t: usize) -> usize {
        (2 * self.n_dgs + 2 * self.n_nodes + self.n_edges) * self.horizon
            + self.edge_offset(edge, t)
    }

    pub fn v(&self, node: usize, t: usize) -> usize {
        (2 * self.n_dgs + 2 * self.n_nodes + 2 * self.n_edges) * self.horizon
            + self.node_offset(node, t)
    }

    pub fn delta(&self, edge: usize, t: usize) -> usize {
        (2 * self.n_dgs + 3 * self.n_nodes + 2 * self.n_edges) * self.horizon
            + self.edge_offset(edge, t)
    }

    /// Number of second-stage columns.
    pub fn y_count(&self) -> usize {
        (2 * self.n_dgs + 3 * self.n_nodes + 3 * self.n_edges) * self.horizon
    }

    // ---- u block (indices relative to the u block)'s -------------------

    pub fn u(&self, edge: usize, t: usize) -> usize {
        self.edge_offset(edge, t)
    }

    /// Number of uncertainty columns.
    pub fn u_count(&self) -> usize {
        self.n_edges * self.horizon
    }

    /// Decodes a u-block index back to (edge, step).
    pub fn u_subscript(&self, u_local: usize) -> (usize, usize) {
        (u_local / self.horizon, u_local % self.horizon)
    }

    pub fn total_count(&self) -> usize {
        self.x_count() + self.y_count() + self.u_count()
    }
}

/// First-stage constraint system over the x block: sparse tagged rows
/// plus per-column bounds and integrality marks.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub n_cols: usize,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    pub integer: Vec<bool>,
    pub rows: Vec<RowSpec>,
}

impl LinearSystem {
    pub fn rows_tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a RowSpec> {
        self.rows.iter().filter(move |r| r.tag == tag)
    }

    pub fn count_tagged(&self, tag: &str) -> usize {
        self.rows_tagged(tag).count()
    }
}

/// Microgrid boundaries over time, as produced by the master MILP or
/// constructed directly in tests.
///
/// `sv` keeps the solver's raw values; consumers that need the exact
/// 0/1 slack derive it from `c` via [`FirstStageDecision::sv_exact`],
/// and the hygiene suite asserts raw and derived values agree closely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageDecision {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub horizon: usize,
    /// Parent-arc selection, indexed like [`VariableIndex::c`].
    pub c: Vec<bool>,
    /// Fictitious flows, indexed like [`VariableIndex::f`] minus its offset.
    pub f: Vec<f64>,
    /// Connection slack per (node, t); 1 means disconnected/shed.
    pub sv: Vec<f64>,
    /// Close events per (edge, t).
    pub v_cl: Vec<bool>,
    /// Open events per (edge, t).
    pub v_op: Vec<bool>,
}

impl FirstStageDecision {
    /// Extracts a decision from master-problem columns (absolute x block).
    pub fn from_columns(idx: &VariableIndex, columns: &[f64]) -> Self {
        let (ne, nn, horizon) = (idx.n_edges(), idx.n_nodes(), idx.horizon());
        let mut out = Self {
            n_nodes: nn,
            n_edges: ne,
            horizon,
            c: vec![false; 2 * ne * horizon],
            f: vec![0.0; 2 * ne * horizon],
            sv: vec![0.0; nn * horizon],
            v_cl: vec![false; ne * horizon],
            v_op: vec![false; ne * horizon],
        };
        for e in 0..ne {
            for t in 0..horizon {
                for dir in ArcDir::BOTH {
                    let a = (e * 2 + dir.offset()) * horizon + t;
                    out.c[a] = columns[idx.c(e, dir, t)] > 0.5;
                    out.f[a] = columns[idx.f(e, dir, t)];
                }
                out.v_cl[e * horizon + t] = columns[idx.v_cl(e, t)] > 0.5;
                out.v_op[e * horizon + t] = columns[idx.v_op(e, t)] > 0.5;
            }
        }
        for i in 0..nn {
            for t in 0..horizon {
                out.sv[i * horizon + t] = columns[idx.sv(i, t)];
            }
        }
        out
    }

    pub fn arc(&self, edge: usize, dir: ArcDir, t: usize) -> bool {
        self.c[(edge * 2 + dir.offset()) * self.horizon + t]
    }

    /// Whether the edge is in the forest (either orientation) at step t.
    pub fn closed(&self, edge: usize, t: usize) -> bool {
        self.arc(edge, ArcDir::Fwd, t) || self.arc(edge, ArcDir::Rev, t)
    }

    pub fn sv_raw(&self, node: usize, t: usize) -> f64 {
        self.sv[node * self.horizon + t]
    }

    /// Exact connection slack implied by the parent arcs: 0 for roots,
    /// otherwise 1 minus the number of incoming arcs (clamped to [0,1]).
    pub fn sv_exact(&self, case: &CaseData, node: usize, t: usize) -> f64 {
        let roots = case.root_nodes();
        if roots.contains(&node) {
            return 0.0;
        }
        let endpoints = case.edge_endpoints();
        let mut parents = 0usize;
        for (e, &(a, b)) in endpoints.iter().enumerate() {
            if (b == node && self.arc(e, ArcDir::Fwd, t))
                || (a == node && self.arc(e, ArcDir::Rev, t))
            {
                parents += 1;
            }
        }
        if parents >= 1 {
            0.0
        } else {
            1.0
        }
    }

    pub fn closed_edges(&self, t: usize) -> Vec<usize> {
        (0..self.n_edges).filter(|&e| self.closed(e, t)).collect()
    }

    /// Root assignment per node at step t: `Some(root_node)` if the node
    /// lies in a component containing exactly one grid-forming bus when
    /// walking closed edges, `None` otherwise.
    pub fn membership(&self, case: &CaseData, t: usize) -> Vec<Option<usize>> {
        let n = case.node_count();
        let endpoints = case.edge_endpoints();
        let roots = case.root_nodes();
        let mut adjacency = vec![Vec::new(); n];
        for (e, &(a, b)) in endpoints.iter().enumerate() {
            if self.closed(e, t) {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        let mut component = vec![usize::MAX; n];
        let mut comp_count = 0;
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            component[start] = comp_count;
            while let Some(v) = stack.pop() {
                for &w in &adjacency[v] {
                    if component[w] == usize::MAX {
                        component[w] = comp_count;
                        stack.push(w);
                    }
                }
            }
            comp_count += 1;
        }
        let mut comp_root = vec![Vec::new(); comp_count];
        for &r in &roots {
            comp_root[component[r]].push(r);
        }
        (0..n)
            .map(|i| match comp_root[component[i]].as_slice() {
                [only] => Some(*only),
                _ => None,
            })
            .collect()
    }
}

/// A binary line-survival trajectory, stored as each edge's first failed
/// step so temporal monotonicity holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioRealization {
    /// `fail_step[e] = Some(t)` means edge e is failed from step t on.
    pub fail_step: Vec<Option<usize>>,
}

impl ScenarioRealization {
    pub fn all_intact(n_edges: usize) -> Self {
        Self {
            fail_step: vec![None; n_edges],
        }
    }

    pub fn n_edges(&self) -> usize {
        self.fail_step.len()
    }

    /// u_{e,t}: 1 while intact, 0 from the failure step on.
    pub fn intact(&self, edge: usize, t: usize) -> bool {
        match self.fail_step[edge] {
            Some(s) => t < s,
            None => true,
        }
    }

    pub fn u_value(&self, edge: usize, t: usize) -> f64 {
        if self.intact(edge, t) {
            1.0
        } else {
            0.0
        }
    }

    pub fn failed_count_at(&self, t: usize) -> usize {
        self.fail_step
            .iter()
            .filter(|s| matches!(s, Some(step) if *step <= t))
            .count()
    }

    /// Whether every step's simultaneous-failure count stays within k.
    /// With monotone failures this is decided at the last step.
    pub fn within_budget(&self, k: usize, horizon: usize) -> bool {
        horizon == 0 || self.failed_count_at(horizon - 1) <= k
    }

    /// Builds from an explicit u matrix (edge-major), rejecting any
    /// non-monotone trajectory.
    pub fn from_u_matrix(u: &[Vec<bool>]) -> Result<Self> {
        let mut fail_step = Vec::with_capacity(u.len());
        for (e, row) in u.iter().enumerate() {
            let mut first_failed = None;
            for (t, &intact) in row.iter().enumerate() {
                match (first_failed, intact) {
                    (None, false) => first_failed = Some(t),
                    (Some(_), true) => {
                        return Err(Error::InvalidCase(format!(
                            "edge {e} recovers at step {t}; failures must be permanent"
                        )))
                    }
                    _ => {}
                }
            }
            fail_step.push(first_failed);
        }
        Ok(Self { fail_step })
    }

    pub fn u_matrix(&self, horizon: usize) -> Vec<Vec<bool>> {
        (0..self.n_edges())
            .map(|e| (0..horizon).map(|t| self.intact(e, t)).collect())
            .collect()
    }
}

/// Optimal second-stage operation for one (x, u) pair. Power values are
/// back in kW/kvar; voltages in p.u.
#[derive(Debug, Clone, Serialize)]
pub struct DispatchResult {
    /// Active/reactive DG output, `[dg][t]`, kW / kvar.
    pub pg: Vec<Vec<f64>>,
    pub qg: Vec<Vec<f64>>,
    /// Served load, `[node][t]`, kW / kvar.
    pub s_p: Vec<Vec<f64>>,
    pub s_q: Vec<Vec<f64>>,
    /// Line flows, `[edge][t]`, kW / kvar (positive = from -> to).
    pub pf: Vec<Vec<f64>>,
    pub qf: Vec<Vec<f64>>,
    /// Voltages, `[node][t]`, p.u.
    pub v: Vec<Vec<f64>>,
    /// Unserved active load, `[node][t]`, kW.
    pub shed: Vec<Vec<f64>>,
    /// Weighted shedding rate: sum over steps and nodes of w_i * shed (kW
    /// times $/kWh, i.e. $ per hour of step length). Multiply by
    /// step_hours for dollars.
    pub objective: f64,
}

impl DispatchResult {
    /// Weighted shedding rate contributed by step t ($/h-scale).
    pub fn step_weighted_shed(&self, case: &CaseData, t: usize) -> f64 {
        case.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| n.weight * self.shed[i][t])
            .sum()
    }

    /// Value of lost load in dollars over the whole horizon.
    pub fn voll_dollars(&self, case: &CaseData) -> f64 {
        self.objective * case.meta.step_hours
    }
}
