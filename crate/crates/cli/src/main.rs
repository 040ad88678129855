//! `gridmf` — generate study cases, solve formation policies, and score
//! them against Monte Carlo contingencies.
//!
//! Outputs are machine-readable JSON/CSV with no timestamps, so
//! identical inputs (including seeds) reproduce byte-identical files.
//!
//! Exit codes: 0 success; 2 the solve did not converge (iteration cap
//! or stall); 3 model infeasible; 4 input/output problems (bad paths,
//! malformed or mismatched files); 5 solver backend failures.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gridmf_core::dro::{run_ccg, CcgConfig, Method, Solution};
use gridmf_core::netdata::{build_ieee37_case, load_case, validate_case, Ieee37Overrides};
use gridmf_core::scenario::{compare_methods, evaluate_policy, sample_scenarios, SamplerConfig};
use gridmf_core::solver::backend_by_name;

#[derive(Parser)]
#[command(
    name = "gridmf",
    version,
    about = "Distributionally robust dynamic microgrid formation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the built-in modified 37-node study case to a JSON file.
    GenCase(GenCaseArgs),
    /// Solve one formation method on a case; write solution + log.
    Solve(SolveArgs),
    /// Score one solution file against sampled contingencies.
    Evaluate(EvaluateArgs),
    /// Score several solution files on one shared scenario set.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenCaseArgs {
    /// Output case file.
    #[arg(long)]
    out: PathBuf,
    /// Number of dispatch steps.
    #[arg(long)]
    horizon: Option<usize>,
    /// Step length in hours.
    #[arg(long)]
    step_hours: Option<f64>,
    /// Simultaneous-failure budget of the uncertainty set.
    #[arg(long)]
    k: Option<usize>,
    /// Switch-action limit per step.
    #[arg(long)]
    n_sw_max: Option<usize>,
    /// Shedding cost for critical loads, $/kWh.
    #[arg(long)]
    critical_weight: Option<f64>,
    /// Shedding cost for ordinary loads, $/kWh.
    #[arg(long)]
    default_weight: Option<f64>,
    /// Scale factor on every DG capacity.
    #[arg(long)]
    dg_scale: Option<f64>,
    /// Scale factor on every failure-probability bound.
    #[arg(long)]
    hazard_scale: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    /// Case file to solve.
    #[arg(long)]
    case: PathBuf,
    /// Formation method: dr-dmf, dr-smf, or ro-dmf.
    #[arg(long)]
    method: String,
    /// Relative convergence tolerance of the outer loop.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Outer-iteration cap; hitting it exits 2 with the incumbent.
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    /// Solver seed for reproducible branching.
    #[arg(long, default_value_t = 0)]
    seed: i32,
    /// Per-solve wall-clock limit, seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// MILP/LP backend.
    #[arg(long, default_value = "highs")]
    backend: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Echo solver logs.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Case file the solution was produced for.
    #[arg(long)]
    case: PathBuf,
    /// Solution file from `gridmf solve`.
    #[arg(long)]
    solution: PathBuf,
    /// Number of Monte Carlo scenarios.
    #[arg(long, default_value_t = 1000)]
    scenarios: usize,
    /// Sampling seed; echoed into the outputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative disturbance on failure probabilities.
    #[arg(long, default_value_t = 0.1)]
    perturbation: f64,
    /// MILP/LP backend.
    #[arg(long, default_value = "highs")]
    backend: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Case file the solutions were produced for.
    #[arg(long)]
    case: PathBuf,
    /// Solution files; the first is the comparison reference.
    #[arg(long, num_args = 1.., required = true)]
    solutions: Vec<PathBuf>,
    /// Number of Monte Carlo scenarios (shared by all methods).
    #[arg(long, default_value_t = 1000)]
    scenarios: usize,
    /// Sampling seed; echoed into the outputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative disturbance on failure probabilities.
    #[arg(long, default_value_t = 0.1)]
    perturbation: f64,
    /// MILP/LP backend.
    #[arg(long, default_value = "highs")]
    backend: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenCase(args) => cmd_gen_case(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code(&err));
        }
    }
}

/// Maps failures onto the documented exit-code contract.
fn exit_code(err: &anyhow::Error) -> i32 {
    use gridmf_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Stall { .. }) => 2,
        Some(E::Infeasible { .. }) => 3,
        Some(
            E::Io { .. }
            | E::Parse { .. }
            | E::Schema { .. }
            | E::InvalidCase(_)
            | E::OverrideConflict(_)
            | E::FingerprintMismatch { .. }
            | E::SupportTooLarge { .. },
        ) => 4,
        Some(
            E::Backend { .. }
            | E::UnknownBackend(_)
            | E::Unbounded { .. }
            | E::DualBoundTight { .. },
        ) => 5,
        None if err.downcast_ref::<std::io::Error>().is_some() => 4,
        None => 1,
    }
}

fn cmd_gen_case(args: GenCaseArgs) -> anyhow::Result<i32> {
    let mut overrides = Ieee37Overrides::default();
    if let Some(v) = args.horizon {
        overrides.horizon_steps = v;
    }
    if let Some(v) = args.step_hours {
        overrides.step_hours = v;
    }
    if let Some(v) = args.k {
        overrides.k = v;
    }
    if let Some(v) = args.n_sw_max {
        overrides.n_sw_max = v;
    }
    if let Some(v) = args.critical_weight {
        overrides.critical_weight = v;
    }
    if let Some(v) = args.default_weight {
        overrides.default_weight = v;
    }
    if let Some(v) = args.dg_scale {
        overrides.dg_scale = v;
    }
    if let Some(v) = args.hazard_scale {
        overrides.hazard_scale = v;
    }

    let case = build_ieee37_case(&overrides);
    let report = validate_case(&case);
    if !report.is_empty() {
        return Err(gridmf_core::Error::InvalidCase(report.to_string()).into());
    }
    case.save(&args.out)?;
    println!(
        "wrote {} ({} nodes, {} lines, {} steps)",
        args.out.display(),
        case.node_count(),
        case.edge_count(),
        case.horizon()
    );
    Ok(0)
}

fn iteration_csv(solution: &Solution) -> String {
    let mut out =
        String::from("iteration,master_objective,lower_bound,candidate_upper,upper_bound,gap,wall_ms\n");
    for r in &solution.iterations {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.3}\n",
            r.iteration,
            r.master_objective,
            r.lower_bound,
            r.candidate_upper,
            r.upper_bound,
            r.gap,
            r.wall_ms
        ));
    }
    out
}

fn cmd_solve(args: SolveArgs) -> anyhow::Result<i32> {
    let case = load_case(&args.case)?;
    let method = Method::from_tag(&args.method)?;
    let backend = backend_by_name(&args.backend)?;
    let config = CcgConfig {
        tol: args.tol,
        max_iter: args.max_iter,
        solver_seed: args.seed,
        time_limit: args.time_limit,
        verbose: args.verbose,
    };

    let solution = run_ccg(&case, method, &config, backend.as_ref())?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let solution_path = args.out.join(format!("solution-{}.json", method.tag()));
    solution.save(&solution_path)?;
    let log_path = args.out.join(format!("iterations-{}.csv", method.tag()));
    std::fs::write(&log_path, iteration_csv(&solution))
        .with_context(|| format!("writing {}", log_path.display()))?;

    println!(
        "{}: objective {:.6} $/h, {} iterations, gap {:.3e}",
        method.tag(),
        solution.objective,
        solution.iterations.len(),
        solution.final_gap()
    );
    println!("wrote {}", solution_path.display());
    println!("wrote {}", log_path.display());

    if solution.converged {
        Ok(0)
    } else {
        eprintln!(
            "did not converge within {} iterations (gap {:.3e} > {:.3e}); incumbent written",
            args.max_iter,
            solution.final_gap(),
            args.tol
        );
        Ok(2)
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<i32> {
    let case = load_case(&args.case)?;
    let solution = Solution::load(&args.solution)?;
    let backend = backend_by_name(&args.backend)?;
    let cfg = SamplerConfig {
        n_scenarios: args.scenarios,
        seed: args.seed,
        perturbation: args.perturbation,
        probability_source: None,
    };
    let scenarios = sample_scenarios(&case, &cfg)?;
    let stats = evaluate_policy(&case, &solution, &scenarios, backend.as_ref())?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let payload = serde_json::json!({
        "seed": cfg.seed,
        "n_scenarios": cfg.n_scenarios,
        "perturbation": cfg.perturbation,
        "stats": stats,
    });
    let base = format!("evaluation-{}", stats.method);
    let json_path = args.out.join(format!("{base}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&payload)?)
        .with_context(|| format!("writing {}", json_path.display()))?;
    let steps_path = args.out.join(format!("{base}-steps.csv"));
    std::fs::write(&steps_path, stats.per_step_csv())
        .with_context(|| format!("writing {}", steps_path.display()))?;
    let box_path = args.out.join(format!("{base}-box.csv"));
    std::fs::write(&box_path, stats.box_plot_csv())
        .with_context(|| format!("writing {}", box_path.display()))?;

    println!(
        "{}: expected lost load {:.2} $ over {} scenarios ({:.1}% outside the k-budget)",
        stats.method,
        stats.expected_total,
        stats.n_scenarios,
        100.0 * stats.out_of_support_fraction
    );
    for path in [&json_path, &steps_path, &box_path] {
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<i32> {
    let case = load_case(&args.case)?;
    let solutions: Vec<Solution> = args
        .solutions
        .iter()
        .map(Solution::load)
        .collect::<gridmf_core::Result<_>>()?;
    let backend = backend_by_name(&args.backend)?;
    let cfg = SamplerConfig {
        n_scenarios: args.scenarios,
        seed: args.seed,
        perturbation: args.perturbation,
        probability_source: None,
    };
    let scenarios = sample_scenarios(&case, &cfg)?;
    let table = compare_methods(&case, &solutions, &scenarios, backend.as_ref())?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let payload = serde_json::json!({
        "seed": cfg.seed,
        "n_scenarios": cfg.n_scenarios,
        "perturbation": cfg.perturbation,
        "table": table,
    });
    let json_path = args.out.join("comparison.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&payload)?)
        .with_context(|| format!("writing {}", json_path.display()))?;
    let steps_path = args.out.join("comparison-steps.csv");
    std::fs::write(&steps_path, table.per_step_csv())
        .with_context(|| format!("writing {}", steps_path.display()))?;
    let box_path = args.out.join("comparison-box.csv");
    std::fs::write(&box_path, table.box_plot_csv())
        .with_context(|| format!("writing {}", box_path.display()))?;

    for (i, stats) in table.stats.iter().enumerate() {
        if i == 0 {
            println!(
                "{}: expected {:.2} $ (reference)",
                stats.method, stats.expected_total
            );
        } else {
            println!(
                "{}: expected {:.2} $ ({}{:.1}% vs {}, {})",
                stats.method,
                stats.expected_total,
                if table.reduction_vs_first_pct[i] >= 0.0 { "-" } else { "+" },
                table.reduction_vs_first_pct[i].abs(),
                table.methods[0],
                if table.significant_at_95[i] {
                    "significant at 95%"
                } else {
                    "not significant"
                }
            );
        }
    }
    for path in [&json_path, &steps_path, &box_path] {
        println!("wrote {}", path.display());
    }
    Ok(0)
}
