//! Relaxed master problem over a pool of adversary trajectories.
//!
//! The master chooses the switching plan x and moment multipliers β
//! together with one dispatch copy per pooled trajectory, and an
//! epigraph variable η that dominates every copy's weighted shedding
//! plus the β reward the adversary would collect there:
//!
//!   minimize  Σ (mu_max - 1)·β + η
//!   s.t.      x first-stage feasible
//!             η ≥ shed(y^s) + β·u^s       for every pooled trajectory s
//!             y^s dispatch-feasible at (x, u^s)
//!
//! Its value is a lower bound on the full problem that tightens as the
//! pool grows. The robust variant pins β to zero; the static variant
//! pins the configuration to its first step.

use crate::error::Result;
use crate::model::{
    AffineSystem, ArcDir, FirstStageDecision, LinearSystem, ScenarioRealization, VariableIndex,
};
use crate::netdata::CaseData;
use crate::solver::{Backend, ProblemSpec, RowSense, SolveOptions};

use super::Method;

/// Master solution: the lower bound and the point it is attained at.
#[derive(Debug, Clone)]
pub struct MasterOutcome {
    pub objective: f64,
    /// Proven lower bound on the master optimum — the honest bound even
    /// when the integer search stopped at its gap tolerance.
    pub bound: f64,
    pub x: FirstStageDecision,
    /// Moment multipliers, flat by [`VariableIndex::u`]. All zero for
    /// the robust variant.
    pub beta: Vec<f64>,
    /// Epigraph value: the pool's worst dispatch-plus-reward.
    pub eta: f64,
    /// Raw solution columns: x block, β block, η, then one dispatch copy
    /// per pooled trajectory in pool order. Extending this with a
    /// dispatch for a newly pooled trajectory yields a feasible starting
    /// hint for the next master.
    pub columns: Vec<f64>,
}

/// Solves the master over `cuts`. Callers seed the pool with at least
/// one trajectory (conventionally all-intact), otherwise β would be
/// unconstrained toward its cap and the bound meaningless. `start`, when
/// given, must be a feasible point in this master's column layout; it
/// primes the integer search with an incumbent.
#[allow(clippy::too_many_arguments)]
pub fn solve_master(
    case: &CaseData,
    idx: &VariableIndex,
    first: &LinearSystem,
    second: &AffineSystem,
    method: Method,
    cuts: &[ScenarioRealization],
    start: Option<Vec<f64>>,
    backend: &dyn Backend,
    opts: &SolveOptions,
) -> Result<MasterOutcome> {
    assert!(!cuts.is_empty(), "master needs a seeded trajectory pool");
    let mut spec = ProblemSpec::minimize("master");

    // Shared switching block, bounds and integrality as built.
    for j in 0..first.n_cols {
        if first.integer[j] {
            spec.add_int_col(0.0, first.col_lower[j], first.col_upper[j]);
        } else {
            spec.add_col(0.0, first.col_lower[j], first.col_upper[j]);
        }
    }
    for row in &first.rows {
        spec.add_row(row.tag.as_str(), row.sense, row.rhs, row.coeffs.clone());
    }

    // Static variant: freeze the configuration at its first step.
    if method == Method::DrSmf {
        for e in 0..case.edge_count() {
            for dir in ArcDir::BOTH {
                for t in 1..case.horizon() {
                    spec.add_row(
                        "aux",
                        RowSense::Eq,
                        0.0,
                        vec![(idx.c(e, dir, t), 1.0), (idx.c(e, dir, 0), -1.0)],
                    );
                }
            }
        }
    }

    // Moment multipliers; their cost carries the ambiguity constant.
    let beta_cap = if method.uses_moments() {
        case.params.beta_bound
    } else {
        0.0
    };
    let beta_base = spec.n_cols();
    for local in 0..second.n_u {
        let (e, t) = idx.u_subscript(local);
        spec.add_col(case.edges[e].mu_max[t] - 1.0, 0.0, beta_cap);
    }

    // Worst pooled dispatch. Shedding is nonnegative, so zero is a
    // valid floor.
    let eta = spec.add_col(1.0, 0.0, f64::INFINITY);

    // One dispatch copy per pooled trajectory, boxed by the bounds the
    // dispatch rows imply so node relaxations stay tight.
    let (y_lo, y_hi) = crate::model::dispatch_bounds(case, idx);
    for u in cuts {
        let y_base = spec.n_cols();
        for j in 0..second.n_y {
            spec.add_col(0.0, y_lo[j], y_hi[j]);
        }
        for row in &second.rows {
            // Survival envelopes specialize per trajectory: on intact
            // cells the closure envelope already dominates them, and on
            // failed cells the flow column is simply pinned to zero.
            if row.tag == "eq19" {
                let (e, t) = idx.u_subscript(row.h[0].0);
                if !u.intact(e, t) {
                    let col = y_base + row.f[0].0;
                    spec.cols[col].lower = 0.0;
                    spec.cols[col].upper = 0.0;
                }
                continue;
            }
            let mut coeffs: Vec<(usize, f64)> =
                row.f.iter().map(|&(j, c)| (y_base + j, c)).collect();
            coeffs.extend(row.e.iter().copied());
            let mut rhs = row.b;
            for &(local, h) in &row.h {
                let (e, t) = idx.u_subscript(local);
                rhs -= h * u.u_value(e, t);
            }
            spec.add_row(row.tag.as_str(), row.sense, rhs, coeffs);
        }
        // η dominates this copy's shedding plus the adversary's intact
        // reward: cost·y + Σ_intact β - η ≤ -offset.
        let mut coeffs: Vec<(usize, f64)> = second
            .y_cost
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c != 0.0)
            .map(|(j, &c)| (y_base + j, c))
            .collect();
        for local in 0..second.n_u {
            let (e, t) = idx.u_subscript(local);
            if u.intact(e, t) {
                coeffs.push((beta_base + local, 1.0));
            }
        }
        coeffs.push((eta, -1.0));
        spec.add_row("cut", RowSense::Le, -second.obj_offset, coeffs);
    }

    if let Some(start) = start {
        if start.len() == spec.n_cols() {
            spec.start = Some(start);
        }
    }

    let solved = backend.solve(&spec, opts)?;
    let beta = solved.columns[beta_base..beta_base + second.n_u]
        .iter()
        .map(|&b| b.max(0.0))
        .collect();
    Ok(MasterOutcome {
        objective: solved.objective,
        bound: solved.bound.unwrap_or(solved.objective).min(solved.objective),
        x: FirstStageDecision::from_columns(idx, &solved.columns),
        beta,
        eta: solved.columns[eta],
        columns: solved.columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_first_stage, build_second_stage};
    use crate::solver::backend_by_name;
    use crate::test_fixtures::{repeat_steps, two_bus_case};

    struct Built {
        case: crate::netdata::CaseData,
        idx: VariableIndex,
        first: LinearSystem,
        second: AffineSystem,
    }

    fn build(case: crate::netdata::CaseData) -> Built {
        let idx = VariableIndex::new(&case);
        let first = build_first_stage(&case, &idx);
        let second = build_second_stage(&case, &idx);
        Built {
            case,
            idx,
            first,
            second,
        }
    }

    #[test]
    fn intact_seed_alone_certifies_zero() {
        // With only the all-intact trajectory pooled, closing the line
        // serves everything and β has no reason to leave zero.
        let b = build(two_bus_case());
        let backend = backend_by_name("highs").unwrap();
        let cuts = vec![ScenarioRealization::all_intact(1)];
        let out = solve_master(
            &b.case,
            &b.idx,
            &b.first,
            &b.second,
            Method::DrDmf,
            &cuts,
            None,
            backend.as_ref(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(out.objective.abs() <= 1e-6, "{}", out.objective);
        assert!(out.beta[0].abs() <= 1e-6);
        assert!(out.x.closed(0, 0));
    }

    #[test]
    fn full_support_pool_reproduces_the_exact_value() {
        // Two trajectories exhaust the support here (k = 1, one step),
        // so the master *is* the full problem: worst expectation
        // 0.3·5000 = 1500, attained with β at the failure cost.
        let b = build(two_bus_case());
        let backend = backend_by_name("highs").unwrap();
        let cuts = vec![
            ScenarioRealization::all_intact(1),
            ScenarioRealization {
                fail_step: vec![Some(0)],
            },
        ];
        let out = solve_master(
            &b.case,
            &b.idx,
            &b.first,
            &b.second,
            Method::DrDmf,
            &cuts,
            None,
            backend.as_ref(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!((out.objective - 1500.0).abs() <= 1e-3, "{}", out.objective);
        assert!((out.beta[0] - 5000.0).abs() <= 1e-2, "{}", out.beta[0]);
        assert!((out.eta - 5000.0).abs() <= 1e-2, "{}", out.eta);
    }

    #[test]
    fn robust_variant_pins_multipliers_and_takes_the_worst() {
        let b = build(two_bus_case());
        let backend = backend_by_name("highs").unwrap();
        let cuts = vec![
            ScenarioRealization::all_intact(1),
            ScenarioRealization {
                fail_step: vec![Some(0)],
            },
        ];
        let out = solve_master(
            &b.case,
            &b.idx,
            &b.first,
            &b.second,
            Method::RoDmf,
            &cuts,
            None,
            backend.as_ref(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!((out.objective - 5000.0).abs() <= 1e-3, "{}", out.objective);
        assert!(out.beta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn static_variant_holds_one_configuration() {
        // Two steps, same data each step: whatever the master closes at
        // step 0 must stay closed (and open stay open) at step 1.
        let b = build(repeat_steps(&two_bus_case(), 2));
        let backend = backend_by_name("highs").unwrap();
        let cuts = vec![ScenarioRealization::all_intact(1)];
        let out = solve_master(
            &b.case,
            &b.idx,
            &b.first,
            &b.second,
            Method::DrSmf,
            &cuts,
            None,
            backend.as_ref(),
            &SolveOptions::default(),
        )
        .unwrap();
        for e in 0..b.case.edge_count() {
            for dir in ArcDir::BOTH {
                assert_eq!(out.x.arc(e, dir, 0), out.x.arc(e, dir, 1));
            }
        }
    }
}
