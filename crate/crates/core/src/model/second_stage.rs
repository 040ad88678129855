//! Second-stage operation model: islanded LinDistFlow dispatch with load
//! shedding, parameterized by the topology decision and the line-survival
//! trajectory.
//!
//! Rows are kept in affine form `F y <= b - E x - H u` (senses Le/Eq) so
//! the same data serves three consumers: the dispatch LP for a fixed
//! (x, u), replicated copies inside the master MILP, and the dualized
//! worst-case subproblem. All second-stage columns are free; every bound
//! on them is an explicit row, which keeps the LP dual exactly the row
//! multipliers.

use crate::error::Result;
use crate::netdata::CaseData;
use crate::solver::{Backend, ProblemSpec, RowSense, SolveOptions};

use super::{ArcDir, DispatchResult, FirstStageDecision, ScenarioRealization, VariableIndex};

/// One affine row: `f . y  (sense)  b - e . x - h . u`.
///
/// `f` indexes the y block locally, `e` indexes absolute first-stage
/// columns, `h` indexes the u block locally.
#[derive(Debug, Clone)]
pub struct AffineRow {
    pub tag: String,
    pub sense: RowSense,
    pub b: f64,
    pub f: Vec<(usize, f64)>,
    pub e: Vec<(usize, f64)>,
    pub h: Vec<(usize, f64)>,
}

/// The full second-stage system plus its linear objective over y.
#[derive(Debug, Clone)]
pub struct AffineSystem {
    pub n_y: usize,
    pub n_u: usize,
    pub rows: Vec<AffineRow>,
    /// Objective coefficients over y (minimization).
    pub y_cost: Vec<f64>,
    /// Constant objective term: the full weighted demand, so the
    /// objective value is the weighted unserved load.
    pub obj_offset: f64,
}

impl AffineSystem {
    pub fn rows_tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a AffineRow> {
        self.rows.iter().filter(move |r| r.tag == tag)
    }

    pub fn count_tagged(&self, tag: &str) -> usize {
        self.rows_tagged(tag).count()
    }

    /// Fixed right-hand side `b - e.x - h.u` for one row.
    pub fn rhs_fixed(
        &self,
        row: &AffineRow,
        idx: &VariableIndex,
        case: &CaseData,
        x: &FirstStageDecision,
        u: &ScenarioRealization,
    ) -> f64 {
        let mut rhs = row.b;
        for &(col, coef) in &row.e {
            rhs -= coef * idx.x_value(case, x, col);
        }
        for &(u_local, coef) in &row.h {
            let (e, t) = idx.u_subscript(u_local);
            rhs -= coef * u.u_value(e, t);
        }
        rhs
    }

    /// Dispatch LP over the y block for a fixed (x, u).
    pub fn dispatch_spec(
        &self,
        name: &str,
        idx: &VariableIndex,
        case: &CaseData,
        x: &FirstStageDecision,
        u: &ScenarioRealization,
    ) -> ProblemSpec {
        let mut spec = ProblemSpec::minimize(name);
        spec.offset = self.obj_offset;
        for j in 0..self.n_y {
            spec.add_col(self.y_cost[j], f64::NEG_INFINITY, f64::INFINITY);
        }
        for row in &self.rows {
            let rhs = self.rhs_fixed(row, idx, case, x, u);
            spec.add_row(&row.tag, row.sense, rhs, row.f.clone());
        }
        spec
    }
}

impl VariableIndex {
    /// Value of an absolute first-stage column under a decision.
    ///
    /// Connection slacks are derived exactly from the parent arcs rather
    /// than read from the (possibly solver-noisy) sv field, so affine
    /// right-hand sides built from a decision are exact.
    pub fn x_value(&self, case: &CaseData, x: &FirstStageDecision, col: usize) -> f64 {
        let horizon = self.horizon();
        let arc_block = 2 * self.n_edges() * horizon;
        let sv_start = 4 * self.n_edges() * horizon;
        let vcl_start = sv_start + self.n_nodes() * horizon;
        let vop_start = vcl_start + self.n_edges() * horizon;
        if col < arc_block {
            if x.c[col] {
                1.0
            } else {
                0.0
            }
        } else if col < sv_start {
            x.f[col - arc_block]
        } else if col < vcl_start {
            let local = col - sv_start;
            x.sv_exact(case, local / horizon, local % horizon)
        } else if col < vop_start {
            if x.v_cl[col - vcl_start] {
                1.0
            } else {
                0.0
            }
        } else if x.v_op[col - vop_start] {
            1.0
        } else {
            0.0
        }
    }
}

/// Assembles the second-stage system.
///
/// Row groups (senses in parentheses):
/// - `eq12` (Le): DG output gated off at disconnected buses and capped.
/// - `eq13` (Eq): nodal active/reactive balance.
/// - `eq14` (Eq): LinDistFlow voltage drop with relaxation delta.
/// - `eq15` (Le): delta confined to 0 on closed lines between connected
///   buses, released on open lines, widened at disconnected endpoints.
/// - `eq16` (Eq): grid-forming buses hold 1 p.u.
/// - `eq17` (Le): voltage window, collapsing to 0 at disconnected buses.
/// - `eq18` (Le): flow only on closed lines.
/// - `eq19` (Le): flow only on surviving lines (the only u-coupled rows).
/// - `aux` (Le/Eq): served-load box and the proportional reactive link.
pub fn build_second_stage(case: &CaseData, idx: &VariableIndex) -> AffineSystem {
    let horizon = case.horizon();
    let n_nodes = case.node_count();
    let s_base = case.s_base();
    let roots = case.root_nodes();
    let endpoints = case.edge_endpoints();
    let lookup = case.node_lookup();
    let m_delta = 2.0 * (case.params.v_max - case.params.v_min);
    // The widening at disconnected endpoints must dominate any feasible
    // voltage difference, so floor the configured big-M at v_max.
    let m_widen = case.params.big_m.max(case.params.v_max);
    // The network is lossless, so no line ever carries more than the
    // fleet can inject or the loads can absorb in a step. Capping the
    // disjunctive flow envelopes at that throughput keeps every integral
    // point feasible and hands branch-and-bound a much tighter
    // relaxation than the raw configured constant.
    let (m_p, m_q) = flow_envelopes(case);

    let mut sys = AffineSystem {
        n_y: idx.y_count(),
        n_u: idx.u_count(),
        rows: Vec::new(),
        y_cost: vec![0.0; idx.y_count()],
        obj_offset: 0.0,
    };
    for (i, node) in case.nodes.iter().enumerate() {
        for t in 0..horizon {
            sys.y_cost[idx.s_p(i, t)] = -node.weight * s_base;
            sys.obj_offset += node.weight * node.demand_p[t];
        }
    }

    // DGs per node for the balance rows.
    let mut dgs_at: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (g, dg) in case.dgs.iter().enumerate() {
        dgs_at[lookup[dg.node.as_str()]].push(g);
    }

    for t in 0..horizon {
        for (g, dg) in case.dgs.iter().enumerate() {
            let bus = lookup[dg.node.as_str()];
            let p_cap = dg.p_max[t] / s_base;
            let q_cap = dg.q_max[t] / s_base;
            sys.rows.push(AffineRow {
                tag: "eq12".into(),
                sense: RowSense::Le,
                b: p_cap,
                f: vec![(idx.pg(g, t), 1.0)],
                e: vec![(idx.sv(bus, t), p_cap)],
                h: vec![],
            });
            sys.rows.push(AffineRow {
                tag: "eq12".into(),
                sense: RowSense::Le,
                b: 0.0,
                f: vec![(idx.pg(g, t), -1.0)],
                e: vec![],
                h: vec![],
            });
            sys.rows.push(AffineRow {
                tag: "eq12".into(),
                sense: RowSense::Le,
                b: q_cap,
                f: vec![(idx.qg(g, t), 1.0)],
                e: vec![(idx.sv(bus, t), q_cap)],
                h: vec![],
            });
            sys.rows.push(AffineRow {
                tag: "eq12".into(),
                sense: RowSense::Le,
                b: 0.0,
                f: vec![(idx.qg(g, t), -1.0)],
                e: vec![],
                h: vec![],
            });
        }

        for (i, node) in case.nodes.iter().enumerate() {
            // Active balance: inflow - outflow + generation = served.
            let mut active = Vec::new();
            let mut reactive = Vec::new();
            for (e, &(a, b)) in endpoints.iter().enumerate() {
                if b == i {
                    active.push((idx.pf(e, t), 1.0));
                    reactive.push((idx.qf(e, t), 1.0));
                } else if a == i {
                    active.push((idx.pf(e, t), -1.0));
                    reactive.push((idx.qf(e, t), -1.0));
                }
            }
            for &g in &dgs_at[i] {
                active.push((idx.pg(g, t), 1.0));
                reactive.push((idx.qg(g, t), 1.0));
            }
            active.push((idx.s_p(i, t), -1.0));
            reactive.push((idx.s_q(i, t), -1.0));
            sys.rows.push(AffineRow {
                tag: "eq13".into(),
                sense: RowSense::Eq,
                b: 0.0,
                f: active,
                e: vec![],
                h: vec![],
            });
            sys.rows.push(AffineRow {
                tag: "eq13".into(),
                sense: RowSense::Eq,
                b: 0.0,
                f: reactive,
                e: vec![],
                h: vec![],
            });

            // Served-load box and the proportional reactive link.
            let d_p = node.demand_p[t] / s_base;
            let d_q = node.demand_q[t] / s_base;
            sys.rows.push(AffineRow {
                tag: "aux".into(),
                sense: RowSense::Le,
                b: d_p,
                f: vec![(idx.s_p(i, t), 1.0)],
                e: vec![],
                h: vec![],
            });
            sys.rows.push(AffineRow {
                tag: "aux".into(),
                sense: RowSense::Le,
                b: 0.0,
                f: vec![(idx.s_p(i, t), -1.0)],
                e: vec![],
                h: vec![],
            });
            if node.demand_p[t] > 0.0 {
                // Served reactive tracks served active at the demand's
                // power factor.
                let ratio = node.demand_q[t] / node.demand_p[t];
                sys.rows.push(AffineRow {
                    tag: "aux".into(),
                    sense: RowSense::Eq,
                    b: 0.0,
                    f: vec![(idx.s_q(i, t), 1.0), (idx.s_p(i, t), -ratio)],
                    e: vec![],
                    h: vec![],
                });
            } else {
                sys.rows.push(AffineRow {
                    tag: "aux".into(),
                    sense: RowSense::Le,
                    b: d_q,
                    f: vec![(idx.s_q(i, t), 1.0)],
                    e: vec![],
                    h: vec![],
                });
                sys.rows.push(AffineRow {
                    tag: "aux".into(),
                    sense: RowSense::Le,
                    b: 0.0,
                    f: vec![(idx.s_q(i, t), -1.0)],
                    e: vec![],
                    h: vec![],
                });
            }

            // Voltage window, collapsing to 0 when disconnected.
            sys.rows.push(AffineRow {
                tag: "eq17".into(),
                sense: RowSense::Le,
                b: case.params.v_max,
                f: vec![(idx.v(i, t), 1.0)],
                e: vec![(idx.sv(i, t), case.params.v_max)],
                h: vec![],
            });
            sys.rows.push(AffineRow {
                tag: "eq17".into(),
                sense: RowSense::Le,
                b: -case.params.v_min,
                f: vec![(idx.v(i, t), -1.0)],
                e: vec![(idx.sv(i, t), -case.params.v_min)],
                h: vec![],
            });
        }

        for (e, &(a, b)) in endpoints.iter().enumerate() {
            let edge = &case.edges[e];
            let c_fwd = idx.c(e, ArcDir::Fwd, t);
            let c_rev = idx.c(e, ArcDir::Rev, t);

            // Voltage drop along the line, with relaxation delta.
            sys.rows.push(AffineRow {
                tag: "eq14".into(),
                sense: RowSense::Eq,
                b: 0.0,
                f: vec![
                    (idx.v(a, t), 1.0),
                    (idx.v(b, t), -1.0),
                    (idx.pf(e, t), -edge.r),
                    (idx.qf(e, t), -edge.x),
                    (idx.delta(e, t), -1.0),
                ],
                e: vec![],
                h: vec![],
            });

            // |delta| <= m_delta (1 - closed) + m_widen (sv_a + sv_b).
            for sign in [1.0, -1.0] {
                sys.rows.push(AffineRow {
                    tag: "eq15".into(),
                    sense: RowSense::Le,
                    b: m_delta,
                    f: vec![(idx.delta(e, t), sign)],
                    e: vec![
                        (c_fwd, m_delta),
                        (c_rev, m_delta),
                        (idx.sv(a, t), -m_widen),
                        (idx.sv(b, t), -m_widen),
                    ],
                    h: vec![],
                });
            }

            // |PF|, |QF| <= M * closed.
            for (flow, m) in [(idx.pf(e, t), m_p[t]), (idx.qf(e, t), m_q[t])] {
                for sign in [1.0, -1.0] {
                    sys.rows.push(AffineRow {
                        tag: "eq18".into(),
                        sense: RowSense::Le,
                        b: 0.0,
                        f: vec![(flow, sign)],
                        e: vec![(c_fwd, -m), (c_rev, -m)],
                        h: vec![],
                    });
                }
            }

            // |PF|, |QF| <= M * u: failed lines carry nothing.
            for (flow, m) in [(idx.pf(e, t), m_p[t]), (idx.qf(e, t), m_q[t])] {
                for sign in [1.0, -1.0] {
                    sys.rows.push(AffineRow {
                        tag: "eq19".into(),
                        sense: RowSense::Le,
                        b: 0.0,
                        f: vec![(flow, sign)],
                        e: vec![],
                        h: vec![(idx.u(e, t), -m)],
                    });
                }
            }
        }

        for &r in &roots {
            sys.rows.push(AffineRow {
                tag: "eq16".into(),
                sense: RowSense::Eq,
                b: 1.0,
                f: vec![(idx.v(r, t), 1.0)],
                e: vec![],
                h: vec![],
            });
        }
    }

    sys
}

/// Per-step bounds on any single line's active and reactive flow: the
/// lesser of total generation capacity and total demand, floored by the
/// configured disjunctive constant. Valid because the balance rows are
/// lossless — a line cannot transport what nobody injects or absorbs.
fn flow_envelopes(case: &CaseData) -> (Vec<f64>, Vec<f64>) {
    let s_base = case.s_base();
    let horizon = case.horizon();
    let mut m_p = vec![0.0; horizon];
    let mut m_q = vec![0.0; horizon];
    for t in 0..horizon {
        let gen_p: f64 = case.dgs.iter().map(|d| d.p_max[t]).sum();
        let gen_q: f64 = case.dgs.iter().map(|d| d.q_max[t]).sum();
        let dem_p: f64 = case.nodes.iter().map(|n| n.demand_p[t]).sum();
        let dem_q: f64 = case.nodes.iter().map(|n| n.demand_q[t]).sum();
        m_p[t] = case.params.big_m.min(gen_p.min(dem_p) / s_base);
        m_q[t] = case.params.big_m.min(gen_q.min(dem_q) / s_base);
    }
    (m_p, m_q)
}

/// Finite boxes on the dispatch columns, implied by the dispatch rows.
///
/// Intended for embedding dispatch copies inside mixed-integer problems,
/// where explicit bounds sharpen presolve and node relaxations. The dual
/// subproblem must NOT apply these: its construction reads every
/// restriction on y out of the rows, so columns stay free there.
pub fn dispatch_bounds(case: &CaseData, idx: &VariableIndex) -> (Vec<f64>, Vec<f64>) {
    let s_base = case.s_base();
    let horizon = case.horizon();
    let (m_p, m_q) = flow_envelopes(case);
    let m_delta = 2.0 * (case.params.v_max - case.params.v_min);
    let m_widen = case.params.big_m.max(case.params.v_max);
    let mut lo = vec![f64::NEG_INFINITY; idx.y_count()];
    let mut hi = vec![f64::INFINITY; idx.y_count()];
    for t in 0..horizon {
        for (g, dg) in case.dgs.iter().enumerate() {
            lo[idx.pg(g, t)] = 0.0;
            hi[idx.pg(g, t)] = dg.p_max[t] / s_base;
            lo[idx.qg(g, t)] = 0.0;
            hi[idx.qg(g, t)] = dg.q_max[t] / s_base;
        }
        for (i, node) in case.nodes.iter().enumerate() {
            lo[idx.s_p(i, t)] = 0.0;
            hi[idx.s_p(i, t)] = node.demand_p[t] / s_base;
            lo[idx.s_q(i, t)] = 0.0;
            hi[idx.s_q(i, t)] = node.demand_q[t] / s_base;
            lo[idx.v(i, t)] = 0.0;
            hi[idx.v(i, t)] = case.params.v_max;
        }
        for e in 0..case.edge_count() {
            lo[idx.pf(e, t)] = -m_p[t];
            hi[idx.pf(e, t)] = m_p[t];
            lo[idx.qf(e, t)] = -m_q[t];
            hi[idx.qf(e, t)] = m_q[t];
            let d_cap = m_delta + 2.0 * m_widen;
            lo[idx.delta(e, t)] = -d_cap;
            hi[idx.delta(e, t)] = d_cap;
        }
    }
    (lo, hi)
}

/// Solves the dispatch LP for a fixed topology and trajectory and
/// returns the operating point with power in kW/kvar.
pub fn evaluate_q(
    case: &CaseData,
    x: &FirstStageDecision,
    u: &ScenarioRealization,
    backend: &dyn Backend,
) -> Result<DispatchResult> {
    let idx = VariableIndex::new(case);
    let sys = build_second_stage(case, &idx);
    let spec = sys.dispatch_spec("dispatch", &idx, case, x, u);
    let solved = backend.solve(&spec, &SolveOptions::default())?;
    let cols = &solved.columns;
    let horizon = case.horizon();
    let s_base = case.s_base();

    let at = |local: usize| cols[local];
    let pg = (0..case.dgs.len())
        .map(|g| (0..horizon).map(|t| at(idx.pg(g, t)) * s_base).collect())
        .collect();
    let qg = (0..case.dgs.len())
        .map(|g| (0..horizon).map(|t| at(idx.qg(g, t)) * s_base).collect())
        .collect();
    let s_p: Vec<Vec<f64>> = (0..case.node_count())
        .map(|i| (0..horizon).map(|t| at(idx.s_p(i, t)) * s_base).collect())
        .collect();
    let s_q = (0..case.node_count())
        .map(|i| (0..horizon).map(|t| at(idx.s_q(i, t)) * s_base).collect())
        .collect();
    let pf = (0..case.edge_count())
        .map(|e| (0..horizon).map(|t| at(idx.pf(e, t)) * s_base).collect())
        .collect();
    let qf = (0..case.edge_count())
        .map(|e| (0..horizon).map(|t| at(idx.qf(e, t)) * s_base).collect())
        .collect();
    let v = (0..case.node_count())
        .map(|i| (0..horizon).map(|t| at(idx.v(i, t))).collect())
        .collect();
    let shed = (0..case.node_count())
        .map(|i| {
            (0..horizon)
                .map(|t| case.nodes[i].demand_p[t] - s_p[i][t])
                .collect()
        })
        .collect();

    Ok(DispatchResult {
        pg,
        qg,
        s_p,
        s_q,
        pf,
        qf,
        v,
        shed,
        objective: solved.objective,
    })
}
