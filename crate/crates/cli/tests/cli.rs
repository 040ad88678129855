//! End-to-end runs of the `gridmf` binary: every subcommand, the exit-code
//! contract, and byte-level reproducibility of the written artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridmf_core::dro::Solution;
use gridmf_core::netdata::{load_case, validate_case};

fn gridmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridmf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Hub-and-three-leaves case with per-line failure mass `mu` and `t`
/// identical steps. Worst distribution (k = 1, mu = 0.2) costs 16 $/h;
/// the plain worst case 50 $/h.
fn star_json(t: usize, mu: f64, k: usize) -> String {
    let rep = |v: f64| {
        (0..t)
            .map(|_| format!("{v}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!(
        r#"{{
  "meta": {{"s_base_kva": 1000.0, "horizon_steps": {t}, "step_hours": 1.0}},
  "params": {{"v_min": 0.95, "v_max": 1.05, "big_m": 1.0, "k": {k}, "n_sw_max": 4, "beta_bound": 100000.0}},
  "nodes": [
    {{"id": "hub", "demand_p": [{z}], "demand_q": [{z}], "weight": 1.0, "critical": false}},
    {{"id": "l1", "demand_p": [{d}], "demand_q": [{z}], "weight": 1.0, "critical": false}},
    {{"id": "l2", "demand_p": [{d}], "demand_q": [{z}], "weight": 2.0, "critical": false}},
    {{"id": "l3", "demand_p": [{d}], "demand_q": [{z}], "weight": 5.0, "critical": true}}
  ],
  "edges": [
    {{"from_node": "hub", "to_node": "l1", "r": 0.0001, "x": 0.0001, "is_tie": false, "initially_closed": true, "mu_max": [{m}]}},
    {{"from_node": "hub", "to_node": "l2", "r": 0.0001, "x": 0.0001, "is_tie": false, "initially_closed": true, "mu_max": [{m}]}},
    {{"from_node": "hub", "to_node": "l3", "r": 0.0001, "x": 0.0001, "is_tie": false, "initially_closed": true, "mu_max": [{m}]}}
  ],
  "dgs": [
    {{"node": "hub", "p_max": [{g}], "q_max": [50.0], "grid_forming": true}}
  ]
}}"#,
        t = t,
        k = k,
        z = rep(0.0),
        d = rep(10.0),
        m = rep(mu),
        g = rep(100.0),
    )
}

fn write_star(dir: &Path, name: &str, t: usize, mu: f64, k: usize) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, star_json(t, mu, k)).unwrap();
    path
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_case_emits_the_advertised_study_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("case.json");
    let run = gridmf(&["gen-case", "--out", path_str(&out)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));

    let case = load_case(&out).unwrap();
    assert!(validate_case(&case).is_empty());
    assert_eq!(case.horizon(), 4);
    assert_eq!(case.dgs.iter().filter(|d| d.grid_forming).count(), 3);
    assert_eq!(case.edges.iter().filter(|e| e.is_tie).count(), 4);
}

#[test]
fn gen_case_honours_horizon_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("case.json");
    let run = gridmf(&["gen-case", "--out", path_str(&out), "--horizon", "2"]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert_eq!(load_case(&out).unwrap().horizon(), 2);
}

#[test]
fn solve_writes_solution_and_iteration_log() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_star(dir.path(), "case.json", 1, 0.2, 1);
    let run = gridmf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "dr-dmf",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));

    let solution = Solution::load(dir.path().join("solution-dr-dmf.json")).unwrap();
    assert!(solution.converged);
    // Enumerated optimum of this fixture (0.2 mass on each single
    // failure): 0.2·(10 + 20 + 50).
    assert!((solution.objective - 16.0).abs() <= 1e-2);

    let log = std::fs::read_to_string(dir.path().join("iterations-dr-dmf.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(
        lines.next(),
        Some("iteration,master_objective,lower_bound,candidate_upper,upper_bound,gap,wall_ms")
    );
    assert_eq!(log.lines().count(), solution.iterations.len() + 1);
}

#[test]
fn zero_budget_converges_in_one_iteration() {
    // k = 0 leaves only the all-intact trajectory in the support, so
    // the seed cut is already exact.
    let dir = tempfile::tempdir().unwrap();
    let case = write_star(dir.path(), "case.json", 1, 0.2, 0);
    let run = gridmf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "dr-dmf",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let solution = Solution::load(dir.path().join("solution-dr-dmf.json")).unwrap();
    assert_eq!(solution.iterations.len(), 1);
    assert!(solution.objective.abs() <= 1e-6);
}

#[test]
fn static_method_emits_constant_line_status() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_star(dir.path(), "case.json", 2, 0.2, 1);
    let run = gridmf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "dr-smf",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let solution = Solution::load(dir.path().join("solution-dr-smf.json")).unwrap();
    assert_eq!(solution.method, "dr-smf");
    let first = &solution.closed_lines[0];
    for step in &solution.closed_lines {
        assert_eq!(step, first);
    }
}

#[test]
fn iteration_cap_exits_two_but_keeps_the_incumbent() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_star(dir.path(), "case.json", 1, 0.2, 1);
    let run = gridmf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "dr-dmf",
        "--max-iter",
        "1",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&run), 2, "{}", stderr(&run));
    let solution = Solution::load(dir.path().join("solution-dr-dmf.json")).unwrap();
    assert!(!solution.converged);
    assert_eq!(solution.iterations.len(), 1);
}

#[test]
fn unknown_method_and_missing_case_map_to_contract_codes() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_star(dir.path(), "case.json", 1, 0.2, 1);
    let bad_method = gridmf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "dr-xyz",
        "--out",
        path_str(dir.path()),
    ]);
    // Unknown method tag is an input problem.
    assert_eq!(code(&bad_method), 4, "{}", stderr(&bad_method));

    let missing = gridmf(&[
        "solve",
        "--case",
        "/nonexistent/case.json",
        "--method",
        "dr-dmf",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&missing), 4, "{}", stderr(&missing));

    let bad_backend = gridmf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "dr-dmf",
        "--backend",
        "cplex",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&bad_backend), 5, "{}", stderr(&bad_backend));
}

#[test]
fn evaluate_scores_zero_when_nothing_can_fail() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_star(dir.path(), "case.json", 1, 0.0, 1);
    let solve = gridmf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "dr-dmf",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&solve), 0, "{}", stderr(&solve));
    let run = gridmf(&[
        "evaluate",
        "--case",
        path_str(&case),
        "--solution",
        path_str(&dir.path().join("solution-dr-dmf.json")),
        "--scenarios",
        "1",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let payload: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("evaluation-dr-dmf.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(payload["stats"]["expected_total"].as_f64().unwrap(), 0.0);
    assert_eq!(payload["seed"].as_u64().unwrap(), 0);
}

#[test]
fn evaluate_rejects_a_solution_for_a_different_case() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_star(dir.path(), "case.json", 1, 0.2, 1);
    let other = write_star(dir.path(), "other.json", 1, 0.3, 1);
    let solve = gridmf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "dr-dmf",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&solve), 0, "{}", stderr(&solve));
    let run = gridmf(&[
        "evaluate",
        "--case",
        path_str(&other),
        "--solution",
        path_str(&dir.path().join("solution-dr-dmf.json")),
        "--scenarios",
        "4",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&run), 4, "{}", stderr(&run));
    assert!(stderr(&run).contains("fingerprint"));
}

#[test]
fn compare_against_itself_reports_zero_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_star(dir.path(), "case.json", 1, 0.2, 1);
    let solve = gridmf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "dr-dmf",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&solve), 0, "{}", stderr(&solve));
    let solution = dir.path().join("solution-dr-dmf.json");
    let run = gridmf(&[
        "compare",
        "--case",
        path_str(&case),
        "--solutions",
        path_str(&solution),
        path_str(&solution),
        "--scenarios",
        "16",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let payload: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("comparison.json")).unwrap(),
    )
    .unwrap();
    let reductions = payload["table"]["reduction_vs_first_pct"].as_array().unwrap();
    assert_eq!(reductions[1].as_f64().unwrap(), 0.0);
    assert_eq!(
        payload["table"]["significant_at_95"][1].as_bool().unwrap(),
        false
    );
    let steps = std::fs::read_to_string(dir.path().join("comparison-steps.csv")).unwrap();
    assert_eq!(steps.lines().next(), Some("step,dr-dmf,dr-dmf"));
}

#[test]
fn identical_runs_reproduce_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_star(dir.path(), "case.json", 1, 0.2, 1);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let run = gridmf(&[
            "solve",
            "--case",
            path_str(&case),
            "--method",
            "dr-dmf",
            "--out",
            path_str(out),
        ]);
        assert_eq!(code(&run), 0, "{}", stderr(&run));
        let eval = gridmf(&[
            "evaluate",
            "--case",
            path_str(&case),
            "--solution",
            path_str(&out.join("solution-dr-dmf.json")),
            "--scenarios",
            "32",
            "--seed",
            "9",
            "--out",
            path_str(out),
        ]);
        assert_eq!(code(&eval), 0, "{}", stderr(&eval));
    }
    for name in [
        "solution-dr-dmf.json",
        "evaluation-dr-dmf.json",
        "evaluation-dr-dmf-steps.csv",
        "evaluation-dr-dmf-box.csv",
    ] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // The iteration log carries wall times and is allowed to differ;
    // everything else must be stable. Echo the solve summary line too.
    let rerun = gridmf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "dr-dmf",
        "--out",
        path_str(&out_a),
    ]);
    assert!(stdout(&rerun).contains("objective 16.0"));
}
