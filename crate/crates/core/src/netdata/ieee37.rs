//! Built-in study case: a 37-node distribution feeder with three
//! grid-forming DGs and four normally-open tie switches, prepared for a
//! multi-step storm contingency.
//!
//! The feeder follows the familiar 37-bus layout (substation bus 799,
//! load buses 701-744, regulator secondary 775). Line lengths are in
//! feet and converted to per-unit impedances with a flat ohm-per-foot
//! figure, which keeps the voltage rows active without dominating the
//! trade-off between shedding and switching.

use super::{CaseData, CaseMeta, CaseParams, DgSpec, EdgeSpec, NodeSpec};

/// Tunable knobs for [`build_ieee37_case`]. `Default` reproduces the
/// reference configuration used throughout the test suite.
#[derive(Debug, Clone, PartialEq)]
pub struct Ieee37Overrides {
    /// Number of half-open dispatch intervals in the horizon.
    pub horizon_steps: usize,
    /// Interval length in hours.
    pub step_hours: f64,
    /// Simultaneous-failure budget of the uncertainty set.
    pub k: usize,
    /// Switch-action limit per step (from the second step on).
    pub n_sw_max: usize,
    /// Shedding cost for critical loads ($/kWh).
    pub critical_weight: f64,
    /// Shedding cost for ordinary loads ($/kWh).
    pub default_weight: f64,
    /// Multiplies every DG capacity.
    pub dg_scale: f64,
    /// Multiplies every failure-probability bound (clamped to [0,1]).
    pub hazard_scale: f64,
}

impl Default for Ieee37Overrides {
    fn default() -> Self {
        Self {
            horizon_steps: 4,
            step_hours: 0.5,
            k: 2,
            n_sw_max: 4,
            critical_weight: 100.0,
            default_weight: 10.0,
            dg_scale: 1.0,
            hazard_scale: 1.0,
        }
    }
}

/// Ohm-per-foot style conversion into per-unit on the case base.
const R_PU_PER_FOOT: f64 = 5.0e-6;
const X_PU_PER_FOOT: f64 = 2.5e-6;

/// Feeder segments as (from, to, length in feet), in trunk-first order.
const SEGMENTS: &[(&str, &str, f64)] = &[
    ("799", "701", 1850.0),
    ("701", "702", 960.0),
    ("702", "705", 400.0),
    ("702", "713", 360.0),
    ("702", "703", 1320.0),
    ("703", "727", 240.0),
    ("703", "730", 600.0),
    ("704", "714", 80.0),
    ("704", "720", 800.0),
    ("705", "742", 320.0),
    ("705", "712", 240.0),
    ("706", "725", 280.0),
    ("707", "724", 760.0),
    ("707", "722", 120.0),
    ("708", "733", 320.0),
    ("708", "732", 320.0),
    ("709", "731", 600.0),
    ("709", "708", 320.0),
    ("710", "735", 200.0),
    ("710", "736", 1280.0),
    ("711", "741", 400.0),
    ("711", "740", 200.0),
    ("713", "704", 520.0),
    ("714", "718", 520.0),
    ("720", "707", 920.0),
    ("720", "706", 600.0),
    ("727", "744", 280.0),
    ("730", "709", 200.0),
    ("733", "734", 560.0),
    ("734", "737", 640.0),
    ("734", "710", 520.0),
    ("737", "738", 400.0),
    ("738", "711", 400.0),
    ("744", "728", 200.0),
    ("744", "729", 280.0),
    ("709", "775", 50.0),
];

/// Normally-open tie switches as (from, to, length in feet).
const TIES: &[(&str, &str, f64)] = &[
    ("736", "742", 500.0),
    ("725", "741", 500.0),
    ("732", "736", 500.0),
    ("718", "731", 500.0),
];

/// Spot loads as (node, kW, kvar); buses not listed carry no load.
const LOADS: &[(&str, f64, f64)] = &[
    ("701", 630.0, 315.0),
    ("712", 85.0, 40.0),
    ("713", 85.0, 40.0),
    ("714", 38.0, 18.0),
    ("718", 85.0, 40.0),
    ("720", 85.0, 40.0),
    ("722", 161.0, 80.0),
    ("724", 42.0, 21.0),
    ("725", 42.0, 21.0),
    ("727", 42.0, 21.0),
    ("728", 126.0, 63.0),
    ("729", 42.0, 21.0),
    ("730", 85.0, 40.0),
    ("731", 85.0, 40.0),
    ("732", 42.0, 21.0),
    ("733", 85.0, 40.0),
    ("734", 42.0, 21.0),
    ("735", 85.0, 40.0),
    ("736", 42.0, 21.0),
    ("737", 140.0, 70.0),
    ("738", 126.0, 62.0),
    ("740", 85.0, 40.0),
    ("741", 42.0, 21.0),
    ("742", 93.0, 44.0),
    ("744", 42.0, 21.0),
];

/// Grid-forming DG placements as (node, kW, kvar). Sized so the fleet
/// covers total feeder demand with comfortable headroom: unserved
/// energy then stems from connectivity loss, not a built-in capacity
/// deficit, which is what the formation decisions actually trade off.
const DGS: &[(&str, f64, f64)] = &[
    ("702", 1200.0, 720.0),
    ("704", 900.0, 540.0),
    ("710", 900.0, 540.0),
];

/// Loads whose interruption is costed at the critical tariff.
const CRITICAL: &[&str] = &["701", "722", "728", "735", "738"];

/// Storm-exposed trunk segments: their failure-probability bounds ramp
/// much faster than the rest of the feeder. The path runs down the main
/// spine, through territory the tie switches can re-supply, so exposure
/// creates reconfiguration decisions rather than unavoidable outages.
const EXPOSED: &[(&str, &str)] = &[
    ("702", "703"),
    ("703", "730"),
    ("730", "709"),
    ("709", "708"),
    ("734", "737"),
];

/// Cumulative failure-probability bound reached by the end of the horizon.
const BASE_MU_FINAL: f64 = 0.04;
const EXPOSED_MU_FINAL: f64 = 0.40;

fn node_ids() -> Vec<&'static str> {
    let mut ids = vec!["799"];
    ids.extend([
        "701", "702", "703", "704", "705", "706", "707", "708", "709", "710", "711", "712",
        "713", "714", "718", "720", "722", "724", "725", "727", "728", "729", "730", "731",
        "732", "733", "734", "735", "736", "737", "738", "740", "741", "742", "744",
    ]);
    ids.push("775");
    ids
}

fn mu_profile(final_value: f64, horizon: usize, scale: f64) -> Vec<f64> {
    (1..=horizon)
        .map(|t| (final_value * scale * t as f64 / horizon as f64).clamp(0.0, 1.0))
        .collect()
}

/// Builds the 37-node study case. Deterministic: equal overrides yield an
/// identical case (and therefore an identical fingerprint).
pub fn build_ieee37_case(overrides: &Ieee37Overrides) -> CaseData {
    let horizon = overrides.horizon_steps;

    let nodes: Vec<NodeSpec> = node_ids()
        .into_iter()
        .map(|id| {
            let (p, q) = LOADS
                .iter()
                .find(|(n, _, _)| *n == id)
                .map(|(_, p, q)| (*p, *q))
                .unwrap_or((0.0, 0.0));
            let critical = CRITICAL.contains(&id);
            NodeSpec {
                id: id.to_string(),
                demand_p: vec![p; horizon],
                demand_q: vec![q; horizon],
                weight: if critical {
                    overrides.critical_weight
                } else {
                    overrides.default_weight
                },
                critical,
            }
        })
        .collect();

    let is_exposed = |a: &str, b: &str| {
        EXPOSED
            .iter()
            .any(|(f, t)| (*f == a && *t == b) || (*f == b && *t == a))
    };

    let mut edges: Vec<EdgeSpec> = SEGMENTS
        .iter()
        .map(|(from, to, feet)| {
            let final_mu = if is_exposed(from, to) {
                EXPOSED_MU_FINAL
            } else {
                BASE_MU_FINAL
            };
            EdgeSpec {
                from_node: from.to_string(),
                to_node: to.to_string(),
                r: feet * R_PU_PER_FOOT,
                x: feet * X_PU_PER_FOOT,
                is_tie: false,
                initially_closed: true,
                mu_max: mu_profile(final_mu, horizon, overrides.hazard_scale),
            }
        })
        .collect();
    edges.extend(TIES.iter().map(|(from, to, feet)| EdgeSpec {
        from_node: from.to_string(),
        to_node: to.to_string(),
        r: feet * R_PU_PER_FOOT,
        x: feet * X_PU_PER_FOOT,
        is_tie: true,
        initially_closed: false,
        mu_max: mu_profile(BASE_MU_FINAL, horizon, overrides.hazard_scale),
    }));

    let dgs: Vec<DgSpec> = DGS
        .iter()
        .map(|(node, p, q)| DgSpec {
            node: node.to_string(),
            p_max: vec![p * overrides.dg_scale; horizon],
            q_max: vec![q * overrides.dg_scale; horizon],
            grid_forming: true,
        })
        .collect();

    let weighted_demand_per_step: f64 = nodes.iter().map(|n| n.weight * n.demand_p[0]).sum();

    CaseData {
        meta: CaseMeta {
            s_base_kva: 2500.0,
            horizon_steps: horizon,
            step_hours: overrides.step_hours,
        },
        params: CaseParams {
            v_min: 0.95,
            v_max: 1.05,
            big_m: 1.2,
            k: overrides.k,
            n_sw_max: overrides.n_sw_max,
            beta_bound: weighted_demand_per_step * horizon as f64,
        },
        nodes,
        edges,
        dgs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdata::{load_case, validate_case};

    #[test]
    fn default_case_shape() {
        let case = build_ieee37_case(&Ieee37Overrides::default());
        assert_eq!(case.node_count(), 37);
        assert_eq!(case.edge_count(), 40);
        assert_eq!(case.edges.iter().filter(|e| e.is_tie).count(), 4);
        assert_eq!(case.horizon(), 4);
        assert_eq!(case.meta.step_hours, 0.5);
    }

    #[test]
    fn default_case_grid_forming_placement() {
        let case = build_ieee37_case(&Ieee37Overrides::default());
        let forming: Vec<&str> = case
            .dgs
            .iter()
            .filter(|d| d.grid_forming)
            .map(|d| d.node.as_str())
            .collect();
        assert_eq!(forming, vec!["702", "704", "710"]);
    }

    #[test]
    fn default_case_weights_and_demand() {
        let case = build_ieee37_case(&Ieee37Overrides::default());
        for node in &case.nodes {
            let expected = if node.critical { 100.0 } else { 10.0 };
            assert_eq!(node.weight, expected, "weight at {}", node.id);
        }
        let total: f64 = case.nodes.iter().map(|n| n.demand_p[0]).sum();
        assert!((total - 2457.0).abs() < 1e-9, "total demand was {total}");
    }

    #[test]
    fn default_case_validates_clean() {
        let case = build_ieee37_case(&Ieee37Overrides::default());
        let report = validate_case(&case);
        assert!(report.is_empty(), "unexpected violations:\n{report}");
    }

    #[test]
    fn ties_start_open_and_segments_closed() {
        let case = build_ieee37_case(&Ieee37Overrides::default());
        for edge in &case.edges {
            assert_eq!(edge.initially_closed, !edge.is_tie);
        }
    }

    #[test]
    fn generated_case_survives_save_and_reload() {
        let case = build_ieee37_case(&Ieee37Overrides::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case.json");
        case.save(&path).unwrap();
        let reloaded = load_case(&path).unwrap();
        assert_eq!(reloaded, case);
        assert_eq!(reloaded.fingerprint(), case.fingerprint());
    }

    #[test]
    fn hazard_bounds_ramp_and_respect_range() {
        let case = build_ieee37_case(&Ieee37Overrides {
            hazard_scale: 5.0,
            ..Ieee37Overrides::default()
        });
        for edge in &case.edges {
            for pair in edge.mu_max.windows(2) {
                assert!(pair[0] <= pair[1], "bounds must be nondecreasing in time");
            }
            assert!(edge.mu_max.iter().all(|m| (0.0..=1.0).contains(m)));
        }
    }

    #[test]
    fn horizon_override_reshapes_all_arrays() {
        let case = build_ieee37_case(&Ieee37Overrides {
            horizon_steps: 2,
            ..Ieee37Overrides::default()
        });
        assert!(case.nodes.iter().all(|n| n.demand_p.len() == 2));
        assert!(case.edges.iter().all(|e| e.mu_max.len() == 2));
        assert!(validate_case(&case).is_empty());
    }
}
