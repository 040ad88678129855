//! HiGHS-backed implementation of the [`Backend`] trait.
//!
//! Models are rebuilt column-wise on every call (HiGHS ingests columns
//! against pre-declared rows), solved single-threaded with a fixed seed,
//! and the objective is recomputed from the returned point so the spec's
//! offset is always included.

use std::collections::BTreeMap;
use std::ops::Bound;

use highs::{ColProblem, HighsModelStatus, HighsSolutionStatus, Sense};

use super::{Backend, ProblemSpec, RowSense, SolveOptions, SolveResult, SolveStatus};
use crate::error::{Error, Result};

/// The bundled HiGHS solver. Stateless; safe to share across threads.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

fn col_bounds(lower: f64, upper: f64) -> (Bound<f64>, Bound<f64>) {
    let lo = if lower.is_finite() {
        Bound::Included(lower)
    } else {
        Bound::Unbounded
    };
    let hi = if upper.is_finite() {
        Bound::Included(upper)
    } else {
        Bound::Unbounded
    };
    (lo, hi)
}

fn row_bounds(sense: RowSense, rhs: f64) -> (Bound<f64>, Bound<f64>) {
    match sense {
        RowSense::Le => (Bound::Unbounded, Bound::Included(rhs)),
        RowSense::Eq => (Bound::Included(rhs), Bound::Included(rhs)),
        RowSense::Ge => (Bound::Included(rhs), Bound::Unbounded),
    }
}

impl Backend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, spec: &ProblemSpec, opts: &SolveOptions) -> Result<SolveResult> {
        spec.check()?;

        let mut problem = ColProblem::default();
        let row_handles: Vec<_> = spec
            .rows
            .iter()
            .map(|row| {
                let (lo, hi) = row_bounds(row.sense, row.rhs);
                problem.add_row((lo, hi))
            })
            .collect();

        // Transpose to column-major factors, merging duplicate entries so
        // each (row, column) pair reaches HiGHS exactly once.
        let mut factors: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); spec.n_cols()];
        for (i, row) in spec.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    *factors[j].entry(i).or_insert(0.0) += a;
                }
            }
        }
        for (col, cfactors) in spec.cols.iter().zip(factors) {
            let entries: Vec<_> = cfactors
                .into_iter()
                .map(|(i, a)| (row_handles[i], a))
                .collect();
            let bounds = col_bounds(col.lower, col.upper);
            if col.integer {
                problem.add_integer_column(col.cost, bounds, entries);
            } else {
                problem.add_column(col.cost, bounds, entries);
            }
        }

        let sense = if spec.maximize {
            Sense::Maximise
        } else {
            Sense::Minimise
        };
        let mut model = problem.optimise(sense);
        if opts.verbose {
            // Model construction silences the solver; turn its log back
            // on so long solves are observable.
            model.set_option("output_flag", true);
            model.set_option("log_to_console", true);
        }
        model.set_option("threads", 1);
        model.set_option("random_seed", opts.seed);
        if let Some(limit) = opts.time_limit {
            model.set_option("time_limit", limit);
        }
        if let Some(gap) = opts.mip_rel_gap {
            model.set_option("mip_rel_gap", gap);
        }
        if let Some(start) = &spec.start {
            model.set_solution(Some(start.as_slice()), None, None, None);
        }

        let is_mip = spec.is_mip();
        let solved = model.solve();
        let status = solved.status();
        // The proven bound: exact for LP optima, the branch-and-bound
        // dual bound for integer solves (honest even under gap or time
        // termination).
        let bound = |solved: &highs::SolvedModel, exact: f64| {
            if is_mip {
                solved
                    .double_info_value(c"mip_dual_bound")
                    .ok()
                    .filter(|b| b.is_finite())
                    .map(|b| spec.offset + b)
            } else {
                Some(exact)
            }
        };
        match status {
            HighsModelStatus::Optimal => {
                let solution = solved.get_solution();
                let columns = solution.columns().to_vec();
                let row_duals = if is_mip {
                    None
                } else {
                    Some(solution.dual_rows().to_vec())
                };
                let objective = spec.objective_of(&columns);
                Ok(SolveResult {
                    status: SolveStatus::Optimal,
                    objective,
                    bound: bound(&solved, objective),
                    columns,
                    row_duals,
                })
            }
            HighsModelStatus::Infeasible => Err(Error::Infeasible {
                context: spec.name.clone(),
            }),
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                Err(Error::Unbounded {
                    context: spec.name.clone(),
                })
            }
            HighsModelStatus::ReachedTimeLimit => {
                if solved.primal_solution_status() == HighsSolutionStatus::Feasible {
                    let columns = solved.get_solution().columns().to_vec();
                    Ok(SolveResult {
                        status: SolveStatus::TimeLimit,
                        objective: spec.objective_of(&columns),
                        bound: bound(&solved, f64::NAN).filter(|b| b.is_finite()),
                        columns,
                        row_duals: None,
                    })
                } else {
                    Err(Error::Backend {
                        backend: "highs".into(),
                        message: format!("time limit hit with no feasible point on {}", spec.name),
                    })
                }
            }
            other => Err(Error::Backend {
                backend: "highs".into(),
                message: format!("unexpected status {other:?} on {}", spec.name),
            }),
        }
    }
}
