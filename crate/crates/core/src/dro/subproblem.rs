//! Worst-case trajectory search: maximizes Q(x, u) + β·u over the
//! structured support by dualizing the dispatch LP and linearizing the
//! resulting u·λ products exactly at binary u.
//!
//! Each u-coupled row contributes one product w = u·λ with λ boxed in
//! [-Λ, 0]. The envelope rows pinch w to u·λ exactly whenever u is
//! binary, so the MILP value equals the true bilinear max as long as Λ
//! really bounds the duals. Λ cannot be certified cheaply a priori, so
//! the solve is followed by two independent checks at the chosen
//! trajectory — a box-free primal re-evaluation and a dual re-solve with
//! u fixed — and the box is escalated tenfold once before giving up.

use crate::error::{Error, Result};
use crate::model::{
    evaluate_q, AffineSystem, FirstStageDecision, ScenarioRealization, VariableIndex,
};
use crate::netdata::CaseData;
use crate::solver::{Backend, ProblemSpec, RowSense, SolveOptions};

/// Result of one worst-case search.
#[derive(Debug, Clone)]
pub struct SubproblemOutcome {
    /// max_u [ Q(x, u) + β·u ], certified by primal re-evaluation.
    pub value: f64,
    pub worst: ScenarioRealization,
    /// Largest |w - u·λ| over the linearized products at the optimum.
    pub mccormick_gap: f64,
    /// Dual box actually used.
    pub dual_bound: f64,
    /// Whether the box had to be escalated.
    pub escalated: bool,
}

struct Layout {
    /// Multiplier column per affine row.
    lambda: Vec<usize>,
    /// Trajectory column per u subscript.
    u: Vec<usize>,
    /// Product column per affine row (u-coupled rows only).
    w: Vec<Option<usize>>,
    /// (row, u column, h coefficient) per product.
    products: Vec<(usize, usize, f64)>,
}

/// Builds the dualized MILP. With `fixed_u` the trajectory columns are
/// clamped (and left continuous), turning it into the restricted dual
/// LP at that trajectory.
fn build_dual_problem(
    case: &CaseData,
    idx: &VariableIndex,
    second: &AffineSystem,
    x: &FirstStageDecision,
    beta: &[f64],
    bound: f64,
    fixed_u: Option<&ScenarioRealization>,
) -> (ProblemSpec, Layout) {
    let mut spec = ProblemSpec::maximize("worst-trajectory");
    spec.offset = second.obj_offset;

    // One multiplier per row; sign from the row sense, box only where
    // the multiplier meets a product.
    let mut layout = Layout {
        lambda: Vec::with_capacity(second.rows.len()),
        u: Vec::with_capacity(second.n_u),
        w: vec![None; second.rows.len()],
        products: Vec::new(),
    };
    for row in &second.rows {
        let mut rhs_x = row.b;
        for &(col, coef) in &row.e {
            rhs_x -= coef * idx.x_value(case, x, col);
        }
        let (lower, upper) = match row.sense {
            RowSense::Le if !row.h.is_empty() => (-bound, 0.0),
            RowSense::Le => (f64::NEG_INFINITY, 0.0),
            RowSense::Eq => (f64::NEG_INFINITY, f64::INFINITY),
            RowSense::Ge => (0.0, f64::INFINITY),
        };
        layout.lambda.push(spec.add_col(rhs_x, lower, upper));
    }

    let horizon = case.horizon();
    for local in 0..second.n_u {
        let (e, t) = idx.u_subscript(local);
        let col = match fixed_u {
            Some(u) => {
                let v = u.u_value(e, t);
                spec.add_col(beta[local], v, v)
            }
            None => {
                // A line that stays open for the rest of the horizon is
                // dominated: failing it gates no flow and forfeits the
                // intact reward, so pin it intact and spare the search
                // a useless binary.
                let open_for_good = (t..horizon).all(|s| !x.closed(e, s));
                if open_for_good {
                    spec.add_int_col(beta[local], 1.0, 1.0)
                } else {
                    spec.add_int_col(beta[local], 0.0, 1.0)
                }
            }
        };
        layout.u.push(col);
    }

    // Products and their envelopes. Every u-coupled row carries exactly
    // one u entry, so w = u·λ with objective weight -h.
    for (r, row) in second.rows.iter().enumerate() {
        if row.h.is_empty() {
            continue;
        }
        assert_eq!(row.h.len(), 1, "one trajectory entry per row");
        let (u_local, h_coef) = row.h[0];
        let lc = layout.lambda[r];
        let uc = layout.u[u_local];
        let wc = spec.add_col(-h_coef, -bound, 0.0);
        layout.w[r] = Some(wc);
        layout.products.push((r, uc, h_coef));
        let l = -bound;
        // w >= L·u  (tight at u = 0).
        spec.add_row("mc", RowSense::Le, 0.0, vec![(uc, l), (wc, -1.0)]);
        // w >= λ  (tight at u = 1).
        spec.add_row("mc", RowSense::Le, 0.0, vec![(lc, 1.0), (wc, -1.0)]);
        // w <= λ - L + L·u  (with the column bound w <= 0 this pinches
        // w to exactly u·λ at binary u).
        spec.add_row(
            "mc",
            RowSense::Le,
            -l,
            vec![(wc, 1.0), (lc, -1.0), (uc, -l)],
        );
    }

    // Dual feasibility: the multipliers price every dispatch column.
    let mut columns_of: Vec<Vec<(usize, f64)>> = vec![Vec::new(); second.n_y];
    for (r, row) in second.rows.iter().enumerate() {
        for &(j, coef) in &row.f {
            columns_of[j].push((layout.lambda[r], coef));
        }
    }
    for (j, coeffs) in columns_of.into_iter().enumerate() {
        spec.add_row("price", RowSense::Eq, second.y_cost[j], coeffs);
    }

    // Support: permanent failures, at most k down per step.
    let n_edges = case.edge_count();
    for e in 0..n_edges {
        for t in 1..horizon {
            spec.add_row(
                "support",
                RowSense::Le,
                0.0,
                vec![(layout.u[idx.u(e, t)], 1.0), (layout.u[idx.u(e, t - 1)], -1.0)],
            );
        }
    }
    let k = case.params.k.min(n_edges) as f64;
    for t in 0..horizon {
        let coeffs: Vec<(usize, f64)> = (0..n_edges)
            .map(|e| (layout.u[idx.u(e, t)], -1.0))
            .collect();
        spec.add_row("support", RowSense::Le, k - n_edges as f64, coeffs);
    }

    // Weak duality caps the whole objective: for any trajectory the
    // multiplier value is at most Q(x, u) - offset, and Q never exceeds
    // the offset (shedding everything), so Σ cost·col ≤ Σ β. Integral
    // points all satisfy this; fractional ones that ride the envelope
    // slack do not, which is exactly what the search needs pruned.
    if fixed_u.is_none() {
        let beta_total: f64 = beta.iter().sum();
        let coeffs: Vec<(usize, f64)> = spec
            .cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c.cost != 0.0)
            .map(|(j, c)| (j, c.cost))
            .collect();
        spec.add_row("cap", RowSense::Le, beta_total, coeffs);
    }

    (spec, layout)
}

fn dot_beta(beta: &[f64], u: &ScenarioRealization, idx: &VariableIndex) -> f64 {
    let mut total = 0.0;
    for (local, &b) in beta.iter().enumerate() {
        let (e, t) = idx.u_subscript(local);
        total += b * u.u_value(e, t);
    }
    total
}

/// Initial dual box. Shedding is always available recourse, so no
/// shadow price on a capacity row can exceed the cost of shedding one
/// p.u. at the heaviest-weighted node (weight times power base); the
/// box sits at four times that, and the certification loop escalates
/// it if a genuine price ever gets close. Keeping the box tight
/// matters: it is the big-M of the envelope rows, and an oversized one
/// makes the relaxation useless to the integer search.
fn initial_bound(case: &CaseData) -> f64 {
    let w_max = case
        .nodes
        .iter()
        .map(|n| n.weight)
        .fold(0.0_f64, f64::max);
    (4.0 * w_max * case.s_base()).max(1.0)
}

/// Among the optimal multipliers of the restricted dual, picks the one
/// closest to zero: same rows, the original objective pinned as a
/// constraint, and Σλ over the boxed multipliers maximized (each is
/// nonpositive). Paired cap rows that are simultaneously tight leave a
/// degenerate ray along which a vertex otherwise parks at the box; the
/// purified point is interior unless the box is genuinely too small.
fn purify_multipliers(
    rspec: &ProblemSpec,
    layout: &Layout,
    objective: f64,
    backend: &dyn Backend,
) -> Result<crate::solver::SolveResult> {
    let mut pspec = rspec.clone();
    let pinned: Vec<(usize, f64)> = pspec
        .cols
        .iter()
        .enumerate()
        .filter(|&(_, c)| c.cost != 0.0)
        .map(|(j, c)| (j, c.cost))
        .collect();
    let slack = 1e-7 * objective.abs().max(1.0);
    pspec.add_row(
        "value",
        RowSense::Ge,
        objective - pspec.offset - slack,
        pinned,
    );
    for col in &mut pspec.cols {
        col.cost = 0.0;
    }
    for &(r, _, _) in &layout.products {
        pspec.cols[layout.lambda[r]].cost = 1.0;
    }
    backend.solve(&pspec, &SolveOptions::default())
}

/// Finds the support trajectory maximizing Q(x, u) + β·u.
///
/// The returned value is re-certified through [`evaluate_q`] at the
/// chosen trajectory, and the multipliers are checked to sit strictly
/// inside their box on a restricted, purified re-solve. If a multiplier
/// still needs the box, the box is widened tenfold and the search
/// repeated; a second failure reports [`Error::DualBoundTight`].
pub fn solve_subproblem(
    case: &CaseData,
    idx: &VariableIndex,
    second: &AffineSystem,
    x: &FirstStageDecision,
    beta: &[f64],
    backend: &dyn Backend,
    opts: &SolveOptions,
) -> Result<SubproblemOutcome> {
    assert_eq!(beta.len(), second.n_u, "one multiplier per (edge, step)");
    let horizon = case.horizon();
    let mut bound = initial_bound(case);
    let mut last_failure = String::new();

    for attempt in 0..2 {
        let (spec, layout) = build_dual_problem(case, idx, second, x, beta, bound, None);
        let milp = backend.solve(&spec, opts)?;

        let u_matrix: Vec<Vec<bool>> = (0..case.edge_count())
            .map(|e| {
                (0..horizon)
                    .map(|t| milp.columns[layout.u[idx.u(e, t)]] > 0.5)
                    .collect()
            })
            .collect();
        let worst = ScenarioRealization::from_u_matrix(&u_matrix)?;

        // Box-free certificate of the value at the chosen trajectory.
        let primal = evaluate_q(case, x, &worst, backend)?;
        let v_primal = primal.objective + dot_beta(beta, &worst, idx);

        // Restricted dual re-solve (u clamped to the trajectory, boxes
        // kept), then purification. The purified multipliers are the
        // ones reported on.
        let (rspec, rlayout) =
            build_dual_problem(case, idx, second, x, beta, bound, Some(&worst));
        let restricted = backend.solve(&rspec, &SolveOptions::default())?;
        let purified = purify_multipliers(&rspec, &rlayout, restricted.objective, backend)?;

        let mut max_gap = 0.0_f64;
        let mut tightest: Option<(usize, f64)> = None;
        for &(r, _, _) in &rlayout.products {
            let lambda = purified.columns[rlayout.lambda[r]];
            let w = purified.columns[rlayout.w[r].expect("product column")];
            let (e, t) = idx.u_subscript(second.rows[r].h[0].0);
            let u_val = worst.u_value(e, t);
            max_gap = max_gap.max((w - u_val * lambda).abs());
            if (lambda + bound).abs() <= 1e-6 * bound.max(1.0) {
                tightest = Some((r, lambda));
            }
        }

        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        let value_ok = rel(milp.objective, v_primal) <= 1e-6
            && rel(restricted.objective, v_primal) <= 1e-6;

        if tightest.is_none() && value_ok {
            return Ok(SubproblemOutcome {
                value: v_primal,
                worst,
                mccormick_gap: max_gap,
                dual_bound: bound,
                escalated: attempt > 0,
            });
        }

        last_failure = match tightest {
            Some((r, lambda)) => {
                let tag = &second.rows[r].tag;
                format!("row {r} ({tag}) multiplier {lambda:.6e} at box -{bound:.6e}")
            }
            None => format!(
                "value drift: milp {:.6e}, restricted {:.6e}, primal {v_primal:.6e}",
                milp.objective, restricted.objective
            ),
        };
        bound *= 10.0;
    }

    Err(Error::DualBoundTight {
        row: last_failure,
        bound,
        value: f64::NAN,
    })
}
