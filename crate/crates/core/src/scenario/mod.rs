//! Monte Carlo contingency scenarios and fixed-policy evaluation.
//!
//! # Marginal-to-hazard conversion
//!
//! Failure profiles are *cumulative*: `probability_source[e][t]` is the
//! probability that line `e` has failed by the end of step `t`. Sampling
//! converts them to incremental hazards
//!
//! ```text
//! h_0 = p_0,    h_t = (p_t - p_{t-1}) / (1 - p_{t-1})   (clamped to [0, 1])
//! ```
//!
//! so a *constant* profile means the line can only fail at the first
//! step. Case authors should supply nondecreasing profiles.
//!
//! Samples are deliberately **not** truncated to the failure budget k:
//! they stand for reality rather than the ambiguity support. The
//! fraction of samples falling outside the support is reported so the
//! modeling conservatism can be audited.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dro::Solution;
use crate::error::{Error, Result};
use crate::model::{evaluate_q, ScenarioRealization};
use crate::netdata::CaseData;
use crate::solver::Backend;

/// Contingency sampling parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_scenarios: usize,
    pub seed: u64,
    /// Relative disturbance on each marginal probability, drawn
    /// uniformly from [-perturbation, +perturbation] per (scenario,
    /// line, step).
    pub perturbation: f64,
    /// Cumulative failure marginals per line per step; defaults to the
    /// case's moment caps.
    pub probability_source: Option<Vec<Vec<f64>>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_scenarios: 1000,
            seed: 0,
            perturbation: 0.1,
            probability_source: None,
        }
    }
}

fn resolve_marginals(case: &CaseData, cfg: &SamplerConfig) -> Result<Vec<Vec<f64>>> {
    if cfg.n_scenarios == 0 {
        return Err(Error::schema("n_scenarios", "must be at least 1"));
    }
    if !(cfg.perturbation >= 0.0 && cfg.perturbation.is_finite()) {
        return Err(Error::schema("perturbation", "must be finite and >= 0"));
    }
    let source = match &cfg.probability_source {
        Some(rows) => rows.clone(),
        None => case.edges.iter().map(|e| e.mu_max.clone()).collect(),
    };
    if source.len() != case.edge_count() {
        return Err(Error::schema(
            "probability_source",
            format!(
                "expected one row per line ({}), got {}",
                case.edge_count(),
                source.len()
            ),
        ));
    }
    for (e, row) in source.iter().enumerate() {
        if row.len() != case.horizon() {
            return Err(Error::schema(
                "probability_source",
                format!(
                    "row {e} has {} entries, horizon is {}",
                    row.len(),
                    case.horizon()
                ),
            ));
        }
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::schema(
                "probability_source",
                format!("row {e} has probabilities outside [0, 1]"),
            ));
        }
    }
    Ok(source)
}

/// Probability that a still-intact line fails at step `t`, implied by
/// the perturbed cumulative profile.
fn incremental_hazard(cumulative: &[f64], t: usize) -> f64 {
    if t == 0 {
        return cumulative[0];
    }
    let prev = cumulative[t - 1];
    if prev >= 1.0 {
        return 1.0;
    }
    ((cumulative[t] - prev) / (1.0 - prev)).clamp(0.0, 1.0)
}

/// Draws `cfg.n_scenarios` monotone failure trajectories. Identical
/// (case, cfg) inputs produce bit-identical scenario lists.
pub fn sample_scenarios(
    case: &CaseData,
    cfg: &SamplerConfig,
) -> Result<Vec<ScenarioRealization>> {
    let source = resolve_marginals(case, cfg)?;
    let horizon = case.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_scenarios);
    for _ in 0..cfg.n_scenarios {
        let mut fail_step = vec![None; case.edge_count()];
        for (e, profile) in source.iter().enumerate() {
            let perturbed: Vec<f64> = profile
                .iter()
                .map(|&p| {
                    let eps = rng.gen_range(-cfg.perturbation..=cfg.perturbation);
                    (p * (1.0 + eps)).clamp(0.0, 1.0)
                })
                .collect();
            for t in 0..horizon {
                if rng.gen::<f64>() < incremental_hazard(&perturbed, t) {
                    fail_step[e] = Some(t);
                    break;
                }
            }
        }
        out.push(ScenarioRealization { fail_step });
    }
    Ok(out)
}

/// Five-number summary plus 1.5·IQR outliers, quantiles by linear
/// interpolation (type 7).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub outliers: Vec<f64>,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= n {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

impl BoxStats {
    pub fn from_samples(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                min: 0.0,
                q1: 0.0,
                median: 0.0,
                q3: 0.0,
                max: 0.0,
                outliers: Vec::new(),
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q1 = quantile_sorted(&sorted, 0.25);
        let q3 = quantile_sorted(&sorted, 0.75);
        let fence = 1.5 * (q3 - q1);
        let outliers = sorted
            .iter()
            .copied()
            .filter(|&v| v < q1 - fence || v > q3 + fence)
            .collect();
        Self {
            min: sorted[0],
            q1,
            median: quantile_sorted(&sorted, 0.5),
            q3,
            max: *sorted.last().unwrap(),
            outliers,
        }
    }
}

/// Monte Carlo evaluation of one formation policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalStats {
    pub method: String,
    pub n_scenarios: usize,
    /// Mean of `per_scenario_dollars`.
    pub expected_total: f64,
    /// Expected dollars lost per step; sums to `expected_total`.
    pub per_step_expected: Vec<f64>,
    pub box_stats: BoxStats,
    /// Lost-load dollars per scenario, in scenario order.
    pub per_scenario_dollars: Vec<f64>,
    /// Scenarios whose dispatch came back infeasible even with load
    /// shedding available — expected 0; nonzero means the first stage
    /// itself is broken.
    pub infeasible_count: usize,
    /// Fraction of scenarios outside the modeled support (budget
    /// exceeded): how far reality strays from the ambiguity set.
    pub out_of_support_fraction: f64,
}

fn with_scenario_index(i: usize, e: Error) -> Error {
    match e {
        Error::Backend { backend, message } => Error::Backend {
            backend,
            message: format!("scenario {i}: {message}"),
        },
        Error::Unbounded { context } => Error::Unbounded {
            context: format!("scenario {i}: {context}"),
        },
        other => other,
    }
}

/// Scores a solved policy against a scenario set: one dispatch LP per
/// scenario (in parallel), aggregated to dollars.
pub fn evaluate_policy(
    case: &CaseData,
    solution: &Solution,
    scenarios: &[ScenarioRealization],
    backend: &dyn Backend,
) -> Result<EvalStats> {
    let actual = case.fingerprint();
    if solution.case_fingerprint != actual {
        return Err(Error::FingerprintMismatch {
            expected: solution.case_fingerprint.clone(),
            actual,
        });
    }

    let horizon = case.horizon();
    let step_hours = case.meta.step_hours;
    let dispatched: Vec<_> = scenarios
        .par_iter()
        .map(|u| evaluate_q(case, &solution.first_stage, u, backend))
        .collect();

    let mut per_scenario = Vec::with_capacity(scenarios.len());
    let mut per_step = vec![0.0; horizon];
    let mut infeasible = 0usize;
    for (i, outcome) in dispatched.into_iter().enumerate() {
        match outcome {
            Ok(d) => {
                per_scenario.push(d.voll_dollars(case));
                for (t, slot) in per_step.iter_mut().enumerate() {
                    *slot += d.step_weighted_shed(case, t) * step_hours;
                }
            }
            Err(Error::Infeasible { .. }) => infeasible += 1,
            Err(e) => return Err(with_scenario_index(i, e)),
        }
    }

    let n = per_scenario.len().max(1) as f64;
    let expected_total = per_scenario.iter().sum::<f64>() / n;
    for slot in &mut per_step {
        *slot /= n;
    }
    let out_of_support = scenarios
        .iter()
        .filter(|u| !u.within_budget(case.params.k, horizon))
        .count() as f64
        / scenarios.len().max(1) as f64;

    Ok(EvalStats {
        method: solution.method.clone(),
        n_scenarios: scenarios.len(),
        expected_total,
        per_step_expected: per_step,
        box_stats: BoxStats::from_samples(&per_scenario),
        per_scenario_dollars: per_scenario,
        infeasible_count: infeasible,
        out_of_support_fraction: out_of_support,
    })
}

/// Side-by-side Monte Carlo comparison, first method as the reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub methods: Vec<String>,
    pub stats: Vec<EvalStats>,
    /// How much the first method reduces expected dollars relative to
    /// each method, in percent: 100·(E_j - E_0)/E_j. Zero for the first.
    pub reduction_vs_first_pct: Vec<f64>,
    /// One-sided paired z statistic for "first beats method j". Zero
    /// for the first method and for degenerate (zero-variance) pairs.
    pub paired_z_vs_first: Vec<f64>,
    /// Whether the first method's advantage over method j is
    /// significant at 95% (one-sided).
    pub significant_at_95: Vec<bool>,
}

/// Evaluates every solution on the common scenario set and tabulates
/// expected dollars, box plots, and paired significance against the
/// first (reference) method.
pub fn compare_methods(
    case: &CaseData,
    solutions: &[Solution],
    scenarios: &[ScenarioRealization],
    backend: &dyn Backend,
) -> Result<ComparisonTable> {
    assert!(!solutions.is_empty(), "compare_methods needs at least one solution");
    let stats: Vec<EvalStats> = solutions
        .iter()
        .map(|s| evaluate_policy(case, s, scenarios, backend))
        .collect::<Result<_>>()?;

    let reference = &stats[0];
    let mut reduction = vec![0.0];
    let mut z_scores = vec![0.0];
    let mut significant = vec![false];
    for other in stats.iter().skip(1) {
        if other.per_scenario_dollars.len() != reference.per_scenario_dollars.len() {
            return Err(Error::InvalidCase(
                "cannot pair methods: scenario evaluations diverged (infeasible dispatches)"
                    .to_string(),
            ));
        }
        reduction.push(if other.expected_total.abs() > 0.0 {
            100.0 * (other.expected_total - reference.expected_total) / other.expected_total
        } else {
            0.0
        });
        let diffs: Vec<f64> = other
            .per_scenario_dollars
            .iter()
            .zip(&reference.per_scenario_dollars)
            .map(|(o, r)| o - r)
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = if diffs.len() > 1 {
            diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let sd = var.sqrt();
        // One-sided 95% critical value of the standard normal.
        const Z_95: f64 = 1.6449;
        if sd == 0.0 {
            z_scores.push(0.0);
            significant.push(mean > 0.0);
        } else {
            let z = mean / (sd / n.sqrt());
            z_scores.push(z);
            significant.push(z > Z_95);
        }
    }

    Ok(ComparisonTable {
        methods: stats.iter().map(|s| s.method.clone()).collect(),
        stats,
        reduction_vs_first_pct: reduction,
        paired_z_vs_first: z_scores,
        significant_at_95: significant,
    })
}

fn csv_to_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    write(&mut writer).expect("csv rows are well-formed");
    String::from_utf8(writer.into_inner().expect("csv flushes")).expect("csv is utf-8")
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// One row per method: `method,min,q1,median,q3,max,outliers`, with
/// outliers semicolon-joined. Directly plottable.
pub fn box_plot_csv(stats: &[EvalStats]) -> String {
    csv_to_string(|w| {
        w.write_record(["method", "min", "q1", "median", "q3", "max", "outliers"])?;
        for s in stats {
            let b = &s.box_stats;
            let outliers = b
                .outliers
                .iter()
                .map(|v| fmt(*v))
                .collect::<Vec<_>>()
                .join(";");
            let row = vec![
                s.method.clone(),
                fmt(b.min),
                fmt(b.q1),
                fmt(b.median),
                fmt(b.q3),
                fmt(b.max),
                outliers,
            ];
            w.write_record(&row)?;
        }
        Ok(())
    })
}

/// Step rows plus a `total` row; one expected-dollars column per method.
pub fn per_step_csv(stats: &[EvalStats]) -> String {
    let horizon = stats.first().map_or(0, |s| s.per_step_expected.len());
    csv_to_string(|w| {
        let mut header = vec!["step".to_string()];
        header.extend(stats.iter().map(|s| s.method.clone()));
        w.write_record(&header)?;
        for t in 0..horizon {
            let mut row = vec![(t + 1).to_string()];
            row.extend(stats.iter().map(|s| fmt(s.per_step_expected[t])));
            w.write_record(&row)?;
        }
        let mut total = vec!["total".to_string()];
        total.extend(stats.iter().map(|s| fmt(s.expected_total)));
        w.write_record(&total)?;
        Ok(())
    })
}

impl EvalStats {
    pub fn per_step_csv(&self) -> String {
        per_step_csv(std::slice::from_ref(self))
    }

    pub fn box_plot_csv(&self) -> String {
        box_plot_csv(std::slice::from_ref(self))
    }
}

impl ComparisonTable {
    pub fn per_step_csv(&self) -> String {
        per_step_csv(&self.stats)
    }

    pub fn box_plot_csv(&self) -> String {
        box_plot_csv(&self.stats)
    }
}
