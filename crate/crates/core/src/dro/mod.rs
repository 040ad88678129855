//! Distributionally robust formation: support enumeration, the
//! column-and-constraint master/subproblem pair, and the outer loop.
//!
//! The ambiguity set couples per-(line, step) moment caps on the failure
//! indicators with a structured support: failures are permanent and at
//! most k lines are down at any step. Strong duality over the moment
//! rows turns the inner expectation into a bilinear max-min that the
//! subproblem solves exactly via an exact linearization of the binary
//! products.

mod master;
mod subproblem;
mod support;

pub use master::{solve_master, MasterOutcome};
pub use subproblem::{solve_subproblem, SubproblemOutcome};
pub use support::{brute_force_dro, enumerate_support, optimal_beta_by_enumeration, BruteForceOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_first_stage, build_second_stage, evaluate_q, FirstStageDecision, ScenarioRealization,
    VariableIndex,
};
use crate::netdata::CaseData;
use crate::solver::{Backend, ProblemSpec, RowSense, SolveOptions};

/// Which formation policy to solve for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Distributionally robust, dynamic (re-switching) formation.
    DrDmf,
    /// Distributionally robust, one static configuration.
    DrSmf,
    /// Plain robust (worst-case) dynamic formation.
    RoDmf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::DrDmf, Method::DrSmf, Method::RoDmf];

    pub fn tag(self) -> &'static str {
        match self {
            Method::DrDmf => "dr-dmf",
            Method::DrSmf => "dr-smf",
            Method::RoDmf => "ro-dmf",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "dr-dmf" => Ok(Method::DrDmf),
            "dr-smf" => Ok(Method::DrSmf),
            "ro-dmf" => Ok(Method::RoDmf),
            other => Err(Error::InvalidCase(format!(
                "unknown method '{other}' (expected dr-dmf, dr-smf, or ro-dmf)"
            ))),
        }
    }

    /// Whether the moment caps participate (β free) or are ignored.
    pub fn uses_moments(self) -> bool {
        !matches!(self, Method::RoDmf)
    }
}

/// Moment caps and failure budget, extracted from the case.
#[derive(Debug, Clone)]
pub struct AmbiguitySpec {
    /// Expected-failure cap per (edge, step).
    pub mu_max: Vec<Vec<f64>>,
    /// Maximum simultaneous failures per step.
    pub k: usize,
}

impl AmbiguitySpec {
    pub fn from_case(case: &CaseData) -> Self {
        Self {
            mu_max: case.edges.iter().map(|e| e.mu_max.clone()).collect(),
            k: case.params.k,
        }
    }

    /// The all-intact point mass always satisfies the moment caps, so
    /// the ambiguity set is never empty.
    pub fn slater_witness(&self, horizon: usize) -> ScenarioRealization {
        let _ = horizon;
        ScenarioRealization::all_intact(self.mu_max.len())
    }
}

/// Outer-loop knobs.
#[derive(Debug, Clone)]
pub struct CcgConfig {
    /// Relative gap at which the loop declares convergence.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed passed to the MILP solver for reproducible runs.
    pub solver_seed: i32,
    /// Per-solve wall-clock limit, seconds.
    pub time_limit: Option<f64>,
    pub verbose: bool,
}

impl Default for CcgConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 50,
            solver_seed: 0,
            time_limit: None,
            verbose: false,
        }
    }
}

impl CcgConfig {
    /// MIP gap for inner solves: one order tighter than the outer
    /// tolerance, so candidate bounds are accurate enough for the
    /// convergence test without forcing the integer search to prove
    /// exact ties among near-equivalent failure sets.
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            time_limit: self.time_limit,
            mip_rel_gap: Some((self.tol * 1e-1).clamp(1e-9, 1e-4)),
            seed: self.solver_seed,
            verbose: self.verbose,
        }
    }
}

/// Progress of the outer loop. Bounds are monotonized: the lower bound
/// never decreases (cut pools only grow) and the upper bound keeps the
/// best certified candidate.
#[derive(Debug, Clone)]
pub struct CcgState {
    pub iteration: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub cuts: Vec<ScenarioRealization>,
}

impl CcgState {
    pub fn gap(&self) -> f64 {
        (self.upper_bound - self.lower_bound) / self.upper_bound.abs().max(1.0)
    }
}

/// One outer iteration, as recorded in the solution. Wall time is kept
/// out of the serialized form so repeated runs produce identical bytes;
/// the CLI writes it to the iteration-log CSV instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub master_objective: f64,
    pub lower_bound: f64,
    pub candidate_upper: f64,
    pub upper_bound: f64,
    pub gap: f64,
    #[serde(skip_serializing, default)]
    pub wall_ms: f64,
}

/// A support point with its recovered worst-case probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorstScenario {
    pub scenario: ScenarioRealization,
    pub probability: f64,
}

/// A solved formation policy, self-describing enough to re-evaluate:
/// the raw first-stage decision plus human-oriented derived views.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub method: String,
    pub case_fingerprint: String,
    pub converged: bool,
    /// Optimal worst-case expected weighted shedding rate. Multiply by
    /// step_hours for dollars.
    pub objective: f64,
    /// Moment multipliers per (edge, step); absent for ro-dmf.
    pub beta: Option<Vec<Vec<f64>>>,
    pub first_stage: FirstStageDecision,
    /// Closed edge indices per step (derived from `first_stage`).
    pub closed_lines: Vec<Vec<usize>>,
    /// Per step, per node: id of the grid-forming bus serving it.
    pub membership: Vec<Vec<Option<String>>>,
    pub worst_scenarios: Vec<WorstScenario>,
    pub iterations: Vec<IterationRecord>,
}

impl Solution {
    pub fn final_gap(&self) -> f64 {
        self.iterations.last().map_or(f64::INFINITY, |r| r.gap)
    }

    pub fn beta_flat(&self, idx: &VariableIndex) -> Vec<f64> {
        match &self.beta {
            Some(rows) => {
                let mut flat = vec![0.0; idx.u_count()];
                for (e, row) in rows.iter().enumerate() {
                    for (t, &b) in row.iter().enumerate() {
                        flat[idx.u(e, t)] = b;
                    }
                }
                flat
            }
            None => vec![0.0; idx.u_count()],
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let name = path.as_ref().display().to_string();
        let text = serde_json::to_string_pretty(self).expect("solution serializes");
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(name, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let name = path.as_ref().display().to_string();
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(name.clone(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: name,
            message: e.to_string(),
        })
    }
}

/// Runs the column-and-constraint loop for one method.
///
/// Each iteration solves the master over the current cut pool, then the
/// worst-case subproblem at the master's (x, β). The subproblem value
/// certifies an upper bound; its argmax trajectory becomes a new cut.
/// Convergence is declared at relative gap ≤ `config.tol`.
///
/// A repeated cut with the gap still open means the bounds cannot make
/// further progress ([`Error::Stall`]). Hitting `max_iter` returns the
/// best incumbent with `converged: false` rather than an error.
pub fn run_ccg(
    case: &CaseData,
    method: Method,
    config: &CcgConfig,
    backend: &dyn Backend,
) -> Result<Solution> {
    let idx = VariableIndex::new(case);
    let first = build_first_stage(case, &idx);
    let second = build_second_stage(case, &idx);
    let ambiguity = AmbiguitySpec::from_case(case);
    let opts = config.solve_options();
    // The master feeds the lower bound through its proven dual bound, so
    // it may legitimately stop early. While new trajectories keep
    // arriving it runs loose — most of a disjunctive tree's effort goes
    // into proving the last fraction of a percent, pointlessly so when
    // the next cut moves the target anyway. Once the pool stops growing
    // the master is re-solved at half the outer tolerance so the
    // convergence test can close at `tol`.
    let master_gap = |tight: bool| {
        if tight {
            (config.tol * 0.5).clamp(1e-9, 1e-4)
        } else {
            (config.tol * 10.0).clamp(config.tol, 1e-3)
        }
    };
    let mut tight = false;

    let mut state = CcgState {
        iteration: 0,
        lower_bound: f64::NEG_INFINITY,
        upper_bound: f64::INFINITY,
        cuts: vec![ambiguity.slater_witness(case.horizon())],
    };
    let mut log: Vec<IterationRecord> = Vec::new();
    let mut incumbent: Option<(FirstStageDecision, Vec<f64>, SubproblemOutcome)> = None;
    let mut converged = false;
    // Feasible starting hint for the next master: the previous master's
    // point extended with a dispatch for the newly pooled trajectory.
    let mut master_start: Option<Vec<f64>> = None;

    let max_iter = config.max_iter.max(1);
    while state.iteration < max_iter {
        state.iteration += 1;
        let started = std::time::Instant::now();

        let master_opts = SolveOptions {
            mip_rel_gap: Some(master_gap(tight)),
            ..opts.clone()
        };
        let master = solve_master(
            case,
            &idx,
            &first,
            &second,
            method,
            &state.cuts,
            master_start.take(),
            backend,
            &master_opts,
        )?;
        state.lower_bound = state.lower_bound.max(master.bound);
        let master_secs = started.elapsed().as_secs_f64();
        if config.verbose {
            eprintln!(
                "iter {:>3}: master {:8.2}s  lb {:12.4}  ({} cuts{})",
                state.iteration,
                master_secs,
                state.lower_bound,
                state.cuts.len(),
                if tight { ", tight" } else { "" },
            );
        }

        let sub = solve_subproblem(case, &idx, &second, &master.x, &master.beta, backend, &opts)?;
        let constant = moment_constant(case, &master.beta, &idx);
        let candidate = constant + sub.value;
        if config.verbose {
            eprintln!(
                "          sub    {:8.2}s  cand {:12.4}",
                started.elapsed().as_secs_f64() - master_secs,
                candidate,
            );
        }
        if candidate < state.upper_bound {
            state.upper_bound = candidate;
            incumbent = Some((master.x.clone(), master.beta.clone(), sub.clone()));
        }

        let gap = state.gap();
        log.push(IterationRecord {
            iteration: state.iteration,
            master_objective: master.objective,
            lower_bound: state.lower_bound,
            candidate_upper: candidate,
            upper_bound: state.upper_bound,
            gap,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });

        if gap <= config.tol {
            converged = true;
            break;
        }
        if state.cuts.contains(&sub.worst) {
            if !tight {
                // The pool has stabilized but the master was only solved
                // loosely; re-solve it tightly from its own point before
                // concluding anything about the remaining gap.
                tight = true;
                master_start = Some(master.columns);
                continue;
            }
            return Err(Error::Stall {
                gap,
                tol: config.tol,
                iterations: state.iteration,
            });
        }

        // Prime the next master: this master's point stays feasible once
        // the new copy is dispatched at (x, u_new) and the epigraph is
        // lifted over the new cut by exactly that dispatch's objective
        // plus the adversary's intact reward at the current multipliers.
        let warm = second.dispatch_spec("warm-start dispatch", &idx, case, &master.x, &sub.worst);
        if let Ok(dispatched) = backend.solve(&warm, &opts) {
            let reward: f64 = (0..second.n_u)
                .filter(|&local| {
                    let (e, t) = idx.u_subscript(local);
                    sub.worst.intact(e, t)
                })
                .map(|local| master.beta[local])
                .sum();
            let eta_pos = first.n_cols + second.n_u;
            let mut start = master.columns.clone();
            start[eta_pos] = start[eta_pos].max(dispatched.objective + reward);
            start.extend_from_slice(&dispatched.columns);
            master_start = Some(start);
        }

        state.cuts.push(sub.worst);
    }

    let (x, beta, _sub) = incumbent.expect("at least one iteration ran");
    let worst_scenarios = if method.uses_moments() {
        recover_worst_distribution(case, &x, &state.cuts, backend)?
    } else {
        // Plain robust: the adversary plays a single trajectory.
        let sub = solve_subproblem(case, &idx, &second, &x, &beta, backend, &opts)?;
        vec![WorstScenario {
            scenario: sub.worst,
            probability: 1.0,
        }]
    };

    let horizon = case.horizon();
    let closed_lines = (0..horizon).map(|t| x.closed_edges(t)).collect();
    let membership = (0..horizon)
        .map(|t| {
            x.membership(case, t)
                .into_iter()
                .map(|m| m.map(|r| case.nodes[r].id.clone()))
                .collect()
        })
        .collect();
    let beta_field = if method.uses_moments() {
        let idx_u = &idx;
        Some(
            (0..case.edge_count())
                .map(|e| (0..horizon).map(|t| beta[idx_u.u(e, t)]).collect())
                .collect(),
        )
    } else {
        None
    };

    Ok(Solution {
        method: method.tag().to_string(),
        case_fingerprint: case.fingerprint(),
        converged,
        objective: state.upper_bound,
        beta: beta_field,
        first_stage: x,
        closed_lines,
        membership,
        worst_scenarios,
        iterations: log,
    })
}

/// Σ (mu_max - 1) β, the constant part of the dualized objective.
fn moment_constant(case: &CaseData, beta: &[f64], idx: &VariableIndex) -> f64 {
    let mut total = 0.0;
    for (e, edge) in case.edges.iter().enumerate() {
        for t in 0..case.horizon() {
            total += (edge.mu_max[t] - 1.0) * beta[idx.u(e, t)];
        }
    }
    total
}

/// Recovers a worst-case distribution over the generated cuts: the
/// expectation-maximizing probabilities subject to the moment caps.
fn recover_worst_distribution(
    case: &CaseData,
    x: &FirstStageDecision,
    cuts: &[ScenarioRealization],
    backend: &dyn Backend,
) -> Result<Vec<WorstScenario>> {
    let q_values: Vec<f64> = cuts
        .iter()
        .map(|u| evaluate_q(case, x, u, backend).map(|d| d.objective))
        .collect::<Result<_>>()?;

    let mut spec = ProblemSpec::maximize("worst-distribution");
    for &q in &q_values {
        spec.add_col(q, 0.0, f64::INFINITY);
    }
    spec.add_row(
        "mass",
        RowSense::Eq,
        1.0,
        (0..cuts.len()).map(|s| (s, 1.0)).collect(),
    );
    for (e, edge) in case.edges.iter().enumerate() {
        for t in 0..case.horizon() {
            let coeffs: Vec<(usize, f64)> = cuts
                .iter()
                .enumerate()
                .filter(|(_, u)| !u.intact(e, t))
                .map(|(s, _)| (s, 1.0))
                .collect();
            spec.add_row("moment", RowSense::Le, edge.mu_max[t], coeffs);
        }
    }
    let solved = backend.solve(&spec, &SolveOptions::default())?;
    let mut out: Vec<WorstScenario> = cuts
        .iter()
        .zip(&solved.columns)
        .filter(|(_, &p)| p > 1e-12)
        .map(|(u, &p)| WorstScenario {
            scenario: u.clone(),
            probability: p,
        })
        .collect();
    // Deterministic order: heaviest scenario first, ties by enumeration
    // order (stable sort).
    out.sort_by(|a, b| b.probability.partial_cmp(&a.probability).unwrap());
    Ok(out)
}
