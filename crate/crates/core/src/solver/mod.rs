//! Backend-neutral LP/MILP container and the solver trait.
//!
//! Optimization models are assembled into a [`ProblemSpec`] — a sparse
//! row/column description with tagged rows — and handed to a [`Backend`]
//! for solving. Results always carry the primal point; pure LPs solved to
//! optimality also carry row duals.
//!
//! Dual sign convention (minimization): a `<=` row has a nonpositive
//! dual, a `>=` row a nonnegative dual, an `=` row a free dual, and for
//! every column `j` the reduced cost `c_j - sum_i A_ij * dual_i` is
//! nonnegative at an optimal basis (zero for basic columns). The HiGHS
//! backend is checked against this convention in the tests below.

mod highs_backend;

pub use highs_backend::HighsBackend;

use crate::error::{Error, Result};

/// Relation between a row's activity and its right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl RowSense {
    fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        }
    }
}

/// One linear constraint. `tag` is a short provenance label that survives
/// into text dumps and error messages.
#[derive(Debug, Clone)]
pub struct RowSpec {
    pub tag: String,
    pub sense: RowSense,
    pub rhs: f64,
    /// Sparse coefficients as (column index, value).
    pub coeffs: Vec<(usize, f64)>,
}

/// One decision variable.
#[derive(Debug, Clone, Copy)]
pub struct ColSpec {
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

/// A complete LP or MILP in sparse form.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    /// Used in error messages and dumps.
    pub name: String,
    pub maximize: bool,
    /// Constant added to the reported objective.
    pub offset: f64,
    pub cols: Vec<ColSpec>,
    pub rows: Vec<RowSpec>,
    /// Optional primal point handed to the backend as a starting hint
    /// (an incumbent for integer searches). Must match `n_cols` when set.
    pub start: Option<Vec<f64>>,
}

impl ProblemSpec {
    pub fn minimize(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            maximize: false,
            offset: 0.0,
            cols: Vec::new(),
            rows: Vec::new(),
            start: None,
        }
    }

    pub fn maximize(name: impl Into<String>) -> Self {
        Self {
            maximize: true,
            ..Self::minimize(name)
        }
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_col(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cols.push(ColSpec {
            cost,
            lower,
            upper,
            integer: false,
        });
        self.cols.len() - 1
    }

    pub fn add_int_col(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cols.push(ColSpec {
            cost,
            lower,
            upper,
            integer: true,
        });
        self.cols.len() - 1
    }

    pub fn add_row(
        &mut self,
        tag: impl Into<String>,
        sense: RowSense,
        rhs: f64,
        coeffs: Vec<(usize, f64)>,
    ) -> usize {
        self.rows.push(RowSpec {
            tag: tag.into(),
            sense,
            rhs,
            coeffs,
        });
        self.rows.len() - 1
    }

    pub fn is_mip(&self) -> bool {
        self.cols.iter().any(|c| c.integer)
    }

    /// Objective value of a primal point, including the offset.
    pub fn objective_of(&self, columns: &[f64]) -> f64 {
        self.offset
            + self
                .cols
                .iter()
                .zip(columns)
                .map(|(c, x)| c.cost * x)
                .sum::<f64>()
    }

    /// Activity (left-hand side value) of every row at a primal point.
    pub fn row_activities(&self, columns: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.coeffs.iter().map(|&(j, a)| a * columns[j]).sum())
            .collect()
    }

    /// Rejects malformed models (NaN data, dangling column indices,
    /// crossed bounds) before they reach a backend.
    pub fn check(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::Backend {
                backend: "spec".into(),
                message: format!("{}: {message}", self.name),
            })
        };
        if !self.offset.is_finite() {
            return fail("objective offset is not finite".into());
        }
        for (j, col) in self.cols.iter().enumerate() {
            if !col.cost.is_finite() {
                return fail(format!("column {j} has non-finite cost"));
            }
            if col.lower.is_nan() || col.upper.is_nan() || col.lower > col.upper {
                return fail(format!(
                    "column {j} has invalid bounds [{}, {}]",
                    col.lower, col.upper
                ));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return fail(format!("row {i} ({}) has non-finite rhs", row.tag));
            }
            for &(j, a) in &row.coeffs {
                if j >= self.cols.len() {
                    return fail(format!("row {i} ({}) references column {j}", row.tag));
                }
                if !a.is_finite() {
                    return fail(format!("row {i} ({}) has non-finite coefficient", row.tag));
                }
            }
        }
        if let Some(start) = &self.start {
            if start.len() != self.cols.len() {
                return fail(format!(
                    "starting hint has {} values for {} columns",
                    start.len(),
                    self.cols.len()
                ));
            }
        }
        Ok(())
    }

    /// Human-readable LP-format dump, one row per line with its tag.
    pub fn lp_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "\\ {}", self.name);
        let _ = writeln!(
            out,
            "{}",
            if self.maximize { "Maximize" } else { "Minimize" }
        );
        let mut obj = String::from(" obj:");
        for (j, col) in self.cols.iter().enumerate() {
            if col.cost != 0.0 {
                let _ = write!(obj, " {:+} x{j}", col.cost);
            }
        }
        if self.offset != 0.0 {
            let _ = write!(obj, " {:+}", self.offset);
        }
        let _ = writeln!(out, "{obj}");
        let _ = writeln!(out, "Subject To");
        for (i, row) in self.rows.iter().enumerate() {
            let mut line = format!(" r{i}_{}:", row.tag);
            for &(j, a) in &row.coeffs {
                let _ = write!(line, " {a:+} x{j}");
            }
            let _ = writeln!(out, "{line} {} {}", row.sense.symbol(), row.rhs);
        }
        let _ = writeln!(out, "Bounds");
        for (j, col) in self.cols.iter().enumerate() {
            let lo = if col.lower.is_finite() {
                format!("{}", col.lower)
            } else {
                "-infinity".into()
            };
            let hi = if col.upper.is_finite() {
                format!("{}", col.upper)
            } else {
                "+infinity".into()
            };
            let _ = writeln!(out, " {lo} <= x{j} <= {hi}");
        }
        if self.is_mip() {
            let _ = writeln!(out, "General");
            for (j, col) in self.cols.iter().enumerate() {
                if col.integer {
                    let _ = writeln!(out, " x{j}");
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

/// How a solve ended when a usable point exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Hit the time limit with a feasible incumbent.
    TimeLimit,
}

/// A usable primal (and, for LPs, dual) point.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective including the spec's offset (recomputed from `columns`).
    pub objective: f64,
    pub columns: Vec<f64>,
    /// One dual per row; `Some` only for LPs solved to optimality.
    pub row_duals: Option<Vec<f64>>,
    /// Best proven bound on the optimum in the optimization direction
    /// (at most `objective` for minimization, at least for maximization),
    /// offset included. For gap-terminated integer solves this is the
    /// honest bound, which callers must use wherever validity matters.
    pub bound: Option<f64>,
}

/// Knobs shared by every backend. Threads are pinned to one inside each
/// backend so repeated solves are bit-reproducible.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub time_limit: Option<f64>,
    pub mip_rel_gap: Option<f64>,
    pub seed: i32,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit: None,
            mip_rel_gap: None,
            seed: 0,
            verbose: false,
        }
    }
}

/// An LP/MILP solver. Implementations must be stateless so one instance
/// can serve concurrent solves.
pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Solves the model. Infeasible and unbounded outcomes become errors
    /// carrying the model name; `Ok` always holds a usable point.
    fn solve(&self, spec: &ProblemSpec, opts: &SolveOptions) -> Result<SolveResult>;
}

/// Looks up a backend by its CLI name.
pub fn backend_by_name(name: &str) -> Result<Box<dyn Backend>> {
    match name {
        "highs" => Ok(Box::new(HighsBackend)),
        other => Err(Error::UnknownBackend(other.to_string())),
    }
}

/// One residual found by [`verify_solution`].
#[derive(Debug, Clone)]
pub struct ResidualViolation {
    pub what: String,
    pub amount: f64,
}

/// Independently rechecks a primal point against a spec: bounds,
/// integrality, and every row, using plain dot products.
pub fn verify_solution(spec: &ProblemSpec, columns: &[f64], tol: f64) -> Vec<ResidualViolation> {
    let mut out = Vec::new();
    if columns.len() != spec.n_cols() {
        out.push(ResidualViolation {
            what: format!(
                "solution has {} entries for {} columns",
                columns.len(),
                spec.n_cols()
            ),
            amount: f64::INFINITY,
        });
        return out;
    }
    for (j, (col, &x)) in spec.cols.iter().zip(columns).enumerate() {
        if x < col.lower - tol {
            out.push(ResidualViolation {
                what: format!("column {j} below lower bound {}", col.lower),
                amount: col.lower - x,
            });
        }
        if x > col.upper + tol {
            out.push(ResidualViolation {
                what: format!("column {j} above upper bound {}", col.upper),
                amount: x - col.upper,
            });
        }
        if col.integer && (x - x.round()).abs() > tol {
            out.push(ResidualViolation {
                what: format!("column {j} is not integral"),
                amount: (x - x.round()).abs(),
            });
        }
    }
    for (i, (row, activity)) in spec.rows.iter().zip(spec.row_activities(columns)).enumerate() {
        let residual = match row.sense {
            RowSense::Le => activity - row.rhs,
            RowSense::Ge => row.rhs - activity,
            RowSense::Eq => (activity - row.rhs).abs(),
        };
        if residual > tol {
            out.push(ResidualViolation {
                what: format!("row {i} ({}) violated", row.tag),
                amount: residual,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-7;

    /// min x + 2y s.t. x + y >= 3, x - y <= 1, x,y >= 0.
    /// Both rows are active at the optimum (2, 1), so the duals solve
    /// l1 + l2 = 1, l1 - l2 = 2, giving (1.5, -0.5).
    fn tiny_lp() -> ProblemSpec {
        let mut spec = ProblemSpec::minimize("tiny");
        let x = spec.add_col(1.0, 0.0, f64::INFINITY);
        let y = spec.add_col(2.0, 0.0, f64::INFINITY);
        spec.add_row("cover", RowSense::Ge, 3.0, vec![(x, 1.0), (y, 1.0)]);
        spec.add_row("cap", RowSense::Le, 1.0, vec![(x, 1.0), (y, -1.0)]);
        spec
    }

    #[test]
    fn lp_optimum_and_duals_match_hand_solution() {
        let spec = tiny_lp();
        let result = HighsBackend
            .solve(&spec, &SolveOptions::default())
            .unwrap();
        assert_eq!(result.status, SolveStatus::Optimal);
        assert!((result.objective - 4.0).abs() < TOL);
        assert!((result.columns[0] - 2.0).abs() < TOL);
        assert!((result.columns[1] - 1.0).abs() < TOL);
        let duals = result.row_duals.expect("LP must carry duals");
        assert!((duals[0] - 1.5).abs() < TOL);
        assert!((duals[1] + 0.5).abs() < TOL);
    }

    /// Balanced transportation: supplies (20, 30), demands (10, 25, 15),
    /// unit costs [[8, 6, 10], [9, 12, 13]]. The optimal plan ships all of
    /// plant 1 to market 2 and splits plant 2 as (10, 5, 15), costing
    /// 20*6 + 10*9 + 5*12 + 15*13 = 465; the potentials u = (0, 6),
    /// v = (3, 6, 7) price every unused lane at a positive reduced cost.
    #[test]
    fn transportation_lp_satisfies_complementary_slackness() {
        let supplies = [20.0, 30.0];
        let demands = [10.0, 25.0, 15.0];
        let costs = [[8.0, 6.0, 10.0], [9.0, 12.0, 13.0]];
        let mut spec = ProblemSpec::minimize("transport");
        let mut cols = [[0usize; 3]; 2];
        for p in 0..2 {
            for m in 0..3 {
                cols[p][m] = spec.add_col(costs[p][m], 0.0, f64::INFINITY);
            }
        }
        for (p, &supply) in supplies.iter().enumerate() {
            let coeffs = (0..3).map(|m| (cols[p][m], 1.0)).collect();
            spec.add_row("supply", RowSense::Le, supply, coeffs);
        }
        for (m, &demand) in demands.iter().enumerate() {
            let coeffs = (0..2).map(|p| (cols[p][m], 1.0)).collect();
            spec.add_row("demand", RowSense::Eq, demand, coeffs);
        }

        let result = HighsBackend
            .solve(&spec, &SolveOptions::default())
            .unwrap();
        assert!((result.objective - 465.0).abs() < TOL);

        let duals = result.row_duals.expect("LP must carry duals");
        let activities = spec.row_activities(&result.columns);
        // A <= row with a nonzero dual must be tight.
        for (i, row) in spec.rows.iter().enumerate() {
            assert!(
                duals[i].abs() < TOL || (activities[i] - row.rhs).abs() < TOL,
                "row {i} has slack but dual {}",
                duals[i]
            );
            if row.sense == RowSense::Le {
                assert!(duals[i] <= TOL, "<= row dual must be nonpositive");
            }
        }
        // Reduced costs are nonnegative, and zero wherever flow moves.
        for p in 0..2 {
            for m in 0..3 {
                let j = cols[p][m];
                let reduced = costs[p][m] - duals[p] - duals[2 + m];
                assert!(reduced > -TOL, "lane {p}->{m} priced below cost");
                if result.columns[j] > TOL {
                    assert!(reduced.abs() < TOL, "used lane {p}->{m} must price out");
                }
            }
        }
        assert!(verify_solution(&spec, &result.columns, TOL).is_empty());
    }

    /// max 5a + 4b s.t. 6a + 4b <= 24, a + 2b <= 6, a,b integer >= 0.
    /// Enumerating the lattice gives the optimum 20 at (4, 0).
    #[test]
    fn small_mip_finds_integer_optimum() {
        let mut spec = ProblemSpec::maximize("knapsack");
        let a = spec.add_int_col(5.0, 0.0, f64::INFINITY);
        let b = spec.add_int_col(4.0, 0.0, f64::INFINITY);
        spec.add_row("cap1", RowSense::Le, 24.0, vec![(a, 6.0), (b, 4.0)]);
        spec.add_row("cap2", RowSense::Le, 6.0, vec![(a, 1.0), (b, 2.0)]);
        let result = HighsBackend
            .solve(&spec, &SolveOptions::default())
            .unwrap();
        assert!((result.objective - 20.0).abs() < TOL);
        assert!((result.columns[0] - 4.0).abs() < TOL);
        assert!(result.columns[1].abs() < TOL);
        assert!(result.row_duals.is_none(), "MIPs carry no duals");
    }

    #[test]
    fn infeasible_model_reports_its_name() {
        let mut spec = ProblemSpec::minimize("impossible");
        let x = spec.add_col(1.0, 0.0, f64::INFINITY);
        spec.add_row("lo", RowSense::Ge, 2.0, vec![(x, 1.0)]);
        spec.add_row("hi", RowSense::Le, 1.0, vec![(x, 1.0)]);
        match HighsBackend.solve(&spec, &SolveOptions::default()) {
            Err(Error::Infeasible { context }) => assert!(context.contains("impossible")),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_model_is_detected() {
        let mut spec = ProblemSpec::minimize("bottomless");
        spec.add_col(-1.0, 0.0, f64::INFINITY);
        match HighsBackend.solve(&spec, &SolveOptions::default()) {
            Err(Error::Unbounded { context }) => assert!(context.contains("bottomless")),
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn objective_offset_is_included() {
        let mut spec = ProblemSpec::minimize("offset");
        spec.offset = 10.0;
        let x = spec.add_col(1.0, 0.0, f64::INFINITY);
        spec.add_row("floor", RowSense::Ge, 3.0, vec![(x, 1.0)]);
        let result = HighsBackend
            .solve(&spec, &SolveOptions::default())
            .unwrap();
        assert!((result.objective - 13.0).abs() < TOL);
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let mut spec = ProblemSpec::maximize("repeat");
        let a = spec.add_int_col(3.0, 0.0, 10.0);
        let b = spec.add_int_col(2.0, 0.0, 10.0);
        let c = spec.add_int_col(4.0, 0.0, 10.0);
        spec.add_row("r1", RowSense::Le, 17.0, vec![(a, 2.0), (b, 1.0), (c, 3.0)]);
        spec.add_row("r2", RowSense::Le, 11.0, vec![(a, 1.0), (b, 2.0), (c, 1.0)]);
        let opts = SolveOptions {
            seed: 7,
            ..SolveOptions::default()
        };
        let first = HighsBackend.solve(&spec, &opts).unwrap();
        let second = HighsBackend.solve(&spec, &opts).unwrap();
        assert_eq!(first.columns, second.columns);
        assert_eq!(first.objective, second.objective);
    }

    #[test]
    fn verify_solution_flags_corruption() {
        let spec = tiny_lp();
        let good = HighsBackend
            .solve(&spec, &SolveOptions::default())
            .unwrap();
        assert!(verify_solution(&spec, &good.columns, TOL).is_empty());
        let mut bad = good.columns.clone();
        bad[0] = -5.0;
        let violations = verify_solution(&spec, &bad, TOL);
        assert!(!violations.is_empty());
        assert!(violations.iter().any(|v| v.what.contains("cover")));
        assert!(violations.iter().any(|v| v.what.contains("lower bound")));
    }

    #[test]
    fn malformed_specs_are_rejected_before_solving() {
        let mut spec = ProblemSpec::minimize("bad");
        let x = spec.add_col(1.0, 0.0, 1.0);
        spec.add_row("dangling", RowSense::Le, 1.0, vec![(x + 1, 1.0)]);
        assert!(spec.check().is_err());
        assert!(HighsBackend.solve(&spec, &SolveOptions::default()).is_err());

        let mut nan_spec = ProblemSpec::minimize("nan");
        nan_spec.add_col(f64::NAN, 0.0, 1.0);
        assert!(nan_spec.check().is_err());
    }

    #[test]
    fn backend_lookup_accepts_highs_only() {
        assert_eq!(backend_by_name("highs").unwrap().name(), "highs");
        match backend_by_name("gurobi") {
            Err(Error::UnknownBackend(name)) => assert_eq!(name, "gurobi"),
            Err(other) => panic!("expected unknown-backend error, got {other}"),
            Ok(backend) => panic!("unexpected backend {}", backend.name()),
        }
    }

    #[test]
    fn lp_text_names_rows_by_tag() {
        let text = tiny_lp().lp_text();
        assert!(text.contains("Minimize"));
        assert!(text.contains("r0_cover:"));
        assert!(text.contains("r1_cap:"));
        assert!(text.contains(">= 3"));
        assert!(text.ends_with("End\n"));
    }
}
