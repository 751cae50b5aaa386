//! Seeded random instances plus the cross-check suites behind `verify` and
//! the acceptance tests. Every suite prints one line per case and reports
//! the worst observed deviation.

use crate::ddu::enumerate_relaxed_u_vertices;
use crate::formulation::recourse_template;
use crate::instance::{
    instance_from_doc, CostsDoc, FirstStageDecision, InstanceDoc, LineDoc, LoadsDoc, MherDoc,
    MhersDoc, NetworkInstance, NodesDoc, PqLimitDoc, SolverDoc, UncertaintyDoc, VoltageDoc,
    SCHEMA_VERSION,
};
use crate::npccg::{solve_coplan, solve_worst_case, AlgoConfig, CoPlanStatus, Enhancements};
use crate::oracle::{brute_force_coplan, brute_force_worst_case, OracleStatus};
use crate::solver::{solve_lp_with_duals, solve_milp, SolveStatus};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// Fixed fixtures
// ---------------------------------------------------------------------------

pub mod fixtures {
    use super::*;

    /// Smallest well-formed instance: one substation, one load node, one EH
    /// node hosting a single rentable unit, two vulnerable lines and a tie.
    pub fn tri_node_doc() -> InstanceDoc {
        let mut p_kw = BTreeMap::new();
        p_kw.insert("2".to_string(), vec![100.0, 100.0]);
        p_kw.insert("3".to_string(), vec![50.0, 50.0]);
        let mut q_kvar = BTreeMap::new();
        q_kvar.insert("2".to_string(), vec![30.0, 30.0]);
        q_kvar.insert("3".to_string(), vec![15.0, 15.0]);
        InstanceDoc {
            schema: SCHEMA_VERSION,
            nodes: NodesDoc {
                ids: vec!["1".into(), "2".into(), "3".into()],
                substations: vec!["1".into()],
                eh: vec!["3".into()],
                voltage: VoltageDoc { v_min: 0.94, v_max: 1.06, v_ref: 1.0 },
                substation_limits: [(
                    "1".to_string(),
                    PqLimitDoc { p_max_kw: 1000.0, q_max_kvar: 800.0 },
                )]
                .into_iter()
                .collect(),
                generators: BTreeMap::new(),
                parking: [("3".to_string(), 1)].into_iter().collect(),
            },
            lines: vec![
                LineDoc {
                    id: "1-2".into(),
                    from: "1".into(),
                    to: "2".into(),
                    r_pu: 2e-5,
                    x_pu: 4e-5,
                    p_max_kw: 1000.0,
                    q_max_kvar: 800.0,
                    switchable: true,
                    tie: false,
                    vulnerable: true,
                },
                LineDoc {
                    id: "1-3".into(),
                    from: "1".into(),
                    to: "3".into(),
                    r_pu: 2e-5,
                    x_pu: 4e-5,
                    p_max_kw: 1000.0,
                    q_max_kvar: 800.0,
                    switchable: true,
                    tie: false,
                    vulnerable: true,
                },
                LineDoc {
                    id: "2-3".into(),
                    from: "2".into(),
                    to: "3".into(),
                    r_pu: 2e-5,
                    x_pu: 4e-5,
                    p_max_kw: 1000.0,
                    q_max_kvar: 800.0,
                    switchable: true,
                    tie: true,
                    vulnerable: false,
                },
            ],
            mhers: MhersDoc {
                conversion_kwh_per_kg: 38.9,
                units: vec![MherDoc {
                    id: "M1".into(),
                    h_max_kg: 30.0,
                    h_min_kg: 0.0,
                    p_max_kw: 200.0,
                    q_max_kvar: 250.0,
                    efficiency: 0.52,
                    travel_burn_kg_per_period: 1.0,
                    rental_cost: None,
                    capex: Some(415_000.0),
                    premium: true,
                }],
                travel_times: BTreeMap::new(),
            },
            loads: LoadsDoc {
                periods: 2,
                period_hours: 1.0,
                p_kw,
                q_kvar,
                weights: BTreeMap::new(),
            },
            costs: CostsDoc {
                hardening: [("1-2".to_string(), 20_000.0), ("1-3".to_string(), 15_000.0)]
                    .into_iter()
                    .collect(),
                budget: 50_000.0,
            },
            uncertainty: UncertaintyDoc {
                k: 1,
                sigma1: 0.7,
                sigma2: 0.9,
                resilience_target: 0.8,
            },
            solver: SolverDoc::default(),
        }
    }

    pub fn tri_node_json() -> String {
        serde_json::to_string_pretty(&tri_node_doc()).unwrap()
    }

    /// Three nodes for ratio arithmetic: substation plus two load nodes with
    /// weights 2 and 1 and demands 100 each over a single period.
    pub fn two_node_ratio_doc() -> InstanceDoc {
        let mut p_kw = BTreeMap::new();
        p_kw.insert("a".to_string(), vec![100.0]);
        p_kw.insert("b".to_string(), vec![100.0]);
        let mut weights = BTreeMap::new();
        weights.insert("a".to_string(), 2.0);
        weights.insert("b".to_string(), 1.0);
        InstanceDoc {
            schema: SCHEMA_VERSION,
            nodes: NodesDoc {
                ids: vec!["s".into(), "a".into(), "b".into()],
                substations: vec!["s".into()],
                eh: vec![],
                voltage: VoltageDoc { v_min: 0.94, v_max: 1.06, v_ref: 1.0 },
                substation_limits: [(
                    "s".to_string(),
                    PqLimitDoc { p_max_kw: 500.0, q_max_kvar: 300.0 },
                )]
                .into_iter()
                .collect(),
                generators: BTreeMap::new(),
                parking: BTreeMap::new(),
            },
            lines: vec![
                LineDoc {
                    id: "s-a".into(),
                    from: "s".into(),
                    to: "a".into(),
                    r_pu: 2e-5,
                    x_pu: 4e-5,
                    p_max_kw: 400.0,
                    q_max_kvar: 300.0,
                    switchable: true,
                    tie: false,
                    vulnerable: false,
                },
                LineDoc {
                    id: "s-b".into(),
                    from: "s".into(),
                    to: "b".into(),
                    r_pu: 2e-5,
                    x_pu: 4e-5,
                    p_max_kw: 400.0,
                    q_max_kvar: 300.0,
                    switchable: true,
                    tie: false,
                    vulnerable: false,
                },
            ],
            mhers: MhersDoc {
                conversion_kwh_per_kg: 38.9,
                units: vec![],
                travel_times: BTreeMap::new(),
            },
            loads: LoadsDoc {
                periods: 1,
                period_hours: 1.0,
                p_kw,
                q_kvar: BTreeMap::new(),
                weights,
            },
            costs: CostsDoc { hardening: BTreeMap::new(), budget: 0.0 },
            uncertainty: UncertaintyDoc {
                k: 0,
                sigma1: 0.7,
                sigma2: 0.9,
                resilience_target: 0.5,
            },
            solver: SolverDoc::default(),
        }
    }

    pub fn two_node_ratio_json() -> String {
        serde_json::to_string_pretty(&two_node_ratio_doc()).unwrap()
    }

    /// The 14-node layout: thirteen normally-closed lines, tie switches on
    /// 5-11 and 8-14, six EH nodes, six rentable units of three types, and
    /// two stationary generators.
    pub fn fourteen_bus_doc() -> InstanceDoc {
        let closed = [
            ("1-2", "1", "2"),
            ("2-3", "2", "3"),
            ("3-4", "3", "4"),
            ("4-5", "4", "5"),
            ("5-6", "5", "6"),
            ("6-7", "6", "7"),
            ("7-8", "7", "8"),
            ("2-9", "2", "9"),
            ("9-10", "9", "10"),
            ("10-11", "10", "11"),
            ("4-12", "4", "12"),
            ("12-13", "12", "13"),
            ("13-14", "13", "14"),
        ];
        let ties = [("5-11", "5", "11"), ("8-14", "8", "14")];
        let mut lines = Vec::new();
        for (id, a, b) in closed {
            lines.push(LineDoc {
                id: id.into(),
                from: a.into(),
                to: b.into(),
                r_pu: 2.5e-5,
                x_pu: 5e-5,
                p_max_kw: 1600.0,
                q_max_kvar: 1200.0,
                switchable: true,
                tie: false,
                vulnerable: true,
            });
        }
        for (id, a, b) in ties {
            lines.push(LineDoc {
                id: id.into(),
                from: a.into(),
                to: b.into(),
                r_pu: 2.5e-5,
                x_pu: 5e-5,
                p_max_kw: 1600.0,
                q_max_kvar: 1200.0,
                switchable: true,
                tie: true,
                vulnerable: false,
            });
        }
        let eh = ["4", "6", "7", "9", "11", "12"];
        let mut p_kw = BTreeMap::new();
        let mut q_kvar = BTreeMap::new();
        let demands = [
            ("2", 120.0),
            ("3", 90.0),
            ("4", 140.0),
            ("5", 80.0),
            ("6", 95.0),
            ("7", 110.0),
            ("8", 70.0),
            ("9", 130.0),
            ("10", 85.0),
            ("11", 100.0),
            ("12", 125.0),
            ("13", 75.0),
            ("14", 105.0),
        ];
        for (node, p) in demands {
            p_kw.insert(node.to_string(), vec![p, p, p]);
            q_kvar.insert(node.to_string(), vec![p * 0.32, p * 0.32, p * 0.32]);
        }
        // Types 1-3 in cheap/premium variants, per entry: (H, P, Q, cost).
        let unit_specs: [(&str, f64, f64, f64, f64, bool); 6] = [
            ("M1", 30.0, 200.0, 250.0, 8_300.0, false),
            ("M2", 45.0, 200.0, 300.0, 8_450.0, false),
            ("M3", 60.0, 300.0, 400.0, 12_600.0, false),
            ("M4", 30.0, 200.0, 250.0, 9_960.0, true),
            ("M5", 45.0, 200.0, 300.0, 10_140.0, true),
            ("M6", 60.0, 300.0, 400.0, 15_120.0, true),
        ];
        let units: Vec<MherDoc> = unit_specs
            .iter()
            .map(|&(id, h, p, q, cost, premium)| MherDoc {
                id: id.into(),
                h_max_kg: h,
                h_min_kg: 0.0,
                p_max_kw: p,
                q_max_kvar: q,
                efficiency: 0.52,
                travel_burn_kg_per_period: 1.0,
                rental_cost: Some(cost),
                capex: Some(cost * 50.0),
                premium,
            })
            .collect();
        // Travel time: one period between nearby EH nodes, two across the
        // feeder split.
        let near = |a: &str, b: &str| -> u32 {
            let group = |x: &str| matches!(x, "4" | "6" | "7" | "12");
            if group(a) == group(b) {
                1
            } else {
                2
            }
        };
        let mut travel_times = BTreeMap::new();
        for (id, ..) in unit_specs.iter().map(|s| (s.0,)) {
            let mut from_map = BTreeMap::new();
            for a in eh {
                let mut to_map = BTreeMap::new();
                for b in eh {
                    if a != b {
                        to_map.insert(b.to_string(), near(a, b));
                    }
                }
                from_map.insert(a.to_string(), to_map);
            }
            travel_times.insert(id.to_string(), from_map);
        }
        let hardening: BTreeMap<String, f64> = closed
            .iter()
            .enumerate()
            .map(|(i, (id, _, _))| (id.to_string(), 14_000.0 + 1_700.0 * i as f64))
            .collect();
        InstanceDoc {
            schema: SCHEMA_VERSION,
            nodes: NodesDoc {
                ids: (1..=14).map(|i| i.to_string()).collect(),
                substations: vec!["1".into()],
                eh: eh.iter().map(|s| s.to_string()).collect(),
                voltage: VoltageDoc { v_min: 0.94, v_max: 1.06, v_ref: 1.0 },
                substation_limits: [(
                    "1".to_string(),
                    PqLimitDoc { p_max_kw: 2500.0, q_max_kvar: 1800.0 },
                )]
                .into_iter()
                .collect(),
                generators: [
                    ("7".to_string(), PqLimitDoc { p_max_kw: 200.0, q_max_kvar: 150.0 }),
                    ("12".to_string(), PqLimitDoc { p_max_kw: 250.0, q_max_kvar: 180.0 }),
                ]
                .into_iter()
                .collect(),
                parking: eh.iter().map(|s| (s.to_string(), 2)).collect(),
            },
            lines,
            mhers: MhersDoc {
                conversion_kwh_per_kg: 38.9,
                units,
                travel_times,
            },
            loads: LoadsDoc {
                periods: 3,
                period_hours: 1.0,
                p_kw,
                q_kvar,
                weights: BTreeMap::new(),
            },
            costs: CostsDoc { hardening, budget: 200_000.0 },
            uncertainty: UncertaintyDoc {
                k: 5,
                sigma1: 0.7,
                sigma2: 0.9,
                resilience_target: 0.9,
            },
            solver: SolverDoc::default(),
        }
    }

    pub fn fourteen_bus_json() -> String {
        serde_json::to_string_pretty(&fourteen_bus_doc()).unwrap()
    }

    /// Chain of five vulnerable lines, no fleet; damage-pattern tests.
    pub fn line5_instance() -> NetworkInstance {
        let names: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
        let mut lines = Vec::new();
        for i in 0..5 {
            lines.push(LineDoc {
                id: format!("n{}-n{}", i, i + 1),
                from: names[i].clone(),
                to: names[i + 1].clone(),
                r_pu: 2e-5,
                x_pu: 4e-5,
                p_max_kw: 800.0,
                q_max_kvar: 600.0,
                switchable: true,
                tie: false,
                vulnerable: true,
            });
        }
        let mut p_kw = BTreeMap::new();
        for name in names.iter().skip(1) {
            p_kw.insert(name.clone(), vec![100.0]);
        }
        let doc = InstanceDoc {
            schema: SCHEMA_VERSION,
            nodes: NodesDoc {
                ids: names.clone(),
                substations: vec!["n0".into()],
                eh: vec![],
                voltage: VoltageDoc { v_min: 0.94, v_max: 1.06, v_ref: 1.0 },
                substation_limits: [(
                    "n0".to_string(),
                    PqLimitDoc { p_max_kw: 1000.0, q_max_kvar: 800.0 },
                )]
                .into_iter()
                .collect(),
                generators: BTreeMap::new(),
                parking: BTreeMap::new(),
            },
            lines,
            mhers: MhersDoc {
                conversion_kwh_per_kg: 38.9,
                units: vec![],
                travel_times: BTreeMap::new(),
            },
            loads: LoadsDoc {
                periods: 1,
                period_hours: 1.0,
                p_kw,
                q_kvar: BTreeMap::new(),
                weights: BTreeMap::new(),
            },
            costs: CostsDoc {
                hardening: (0..5)
                    .map(|i| (format!("n{}-n{}", i, i + 1), 10_000.0 + 1_000.0 * i as f64))
                    .collect(),
                budget: 60_000.0,
            },
            uncertainty: UncertaintyDoc {
                k: 2,
                sigma1: 0.7,
                sigma2: 0.9,
                resilience_target: 0.5,
            },
            solver: SolverDoc::default(),
        };
        instance_from_doc(&doc).unwrap()
    }

    fn premium_base(units: Vec<MherDoc>) -> NetworkInstance {
        let mut doc = tri_node_doc();
        doc.mhers.units = units;
        doc.nodes.parking = [("3".to_string(), 8)].into_iter().collect();
        instance_from_doc(&doc).unwrap()
    }

    pub fn premium_one_instance(h_max: f64) -> NetworkInstance {
        premium_base(vec![MherDoc {
            id: "M1".into(),
            h_max_kg: h_max,
            h_min_kg: 0.0,
            p_max_kw: 200.0,
            q_max_kvar: 250.0,
            efficiency: 0.52,
            travel_burn_kg_per_period: 1.0,
            rental_cost: Some(8_300.0),
            capex: None,
            premium: true,
        }])
    }

    pub fn premium_two_instance(h1: f64, h2: f64) -> NetworkInstance {
        premium_base(
            [h1, h2]
                .iter()
                .enumerate()
                .map(|(i, &h)| MherDoc {
                    id: format!("M{}", i + 1),
                    h_max_kg: h,
                    h_min_kg: 0.0,
                    p_max_kw: 200.0,
                    q_max_kvar: 250.0,
                    efficiency: 0.52,
                    travel_burn_kg_per_period: 1.0,
                    rental_cost: Some(8_300.0 + 150.0 * i as f64),
                    capex: None,
                    premium: true,
                })
                .collect(),
        )
    }

    /// The trend instance for the target/damage sweeps: the 14-node shape
    /// with a reduced vulnerable set and fleet so exact solves stay fast.
    pub fn fourteen_bus_reduced() -> NetworkInstance {
        let mut doc = fourteen_bus_doc();
        doc.loads.periods = 2;
        for series in doc.loads.p_kw.values_mut() {
            series.truncate(2);
        }
        for series in doc.loads.q_kvar.values_mut() {
            series.truncate(2);
        }
        let vulnerable = ["2-3", "3-4", "2-9", "9-10", "12-13", "13-14"];
        for line in &mut doc.lines {
            line.vulnerable = vulnerable.contains(&line.id.as_str());
        }
        doc.costs.hardening.retain(|id, _| vulnerable.contains(&id.as_str()));
        doc.mhers.units.truncate(2);
        doc.mhers.units[1].premium = true;
        doc.mhers
            .travel_times
            .retain(|id, _| ["M1", "M2"].contains(&id.as_str()));
        doc.nodes.eh = vec!["4".into(), "7".into(), "12".into()];
        doc.nodes.parking = doc.nodes.eh.iter().map(|e| (e.clone(), 2)).collect();
        doc.nodes.generators.retain(|id, _| doc.nodes.eh.contains(id));
        for times in doc.mhers.travel_times.values_mut() {
            times.retain(|from, _| doc.nodes.eh.contains(from));
            for to_map in times.values_mut() {
                to_map.retain(|to, _| doc.nodes.eh.contains(to));
            }
        }
        doc.uncertainty.k = 4;
        instance_from_doc(&doc).unwrap()
    }
}

// ---------------------------------------------------------------------------
// Seeded random instances
// ---------------------------------------------------------------------------

/// Size envelope for generated instances.
#[derive(Debug, Clone)]
pub struct GenProfile {
    pub nodes: (usize, usize),
    pub periods: (usize, usize),
    pub mhers: (usize, usize),
    pub eh: (usize, usize),
    pub vulnerable: (usize, usize),
    pub k: (u32, u32),
    pub ties: (usize, usize),
    pub target_choices: Vec<f64>,
}

impl GenProfile {
    /// Envelope for worst-case cross-checks.
    pub fn worst_case() -> Self {
        GenProfile {
            nodes: (5, 8),
            periods: (2, 3),
            mhers: (1, 2),
            eh: (1, 2),
            vulnerable: (3, 5),
            k: (1, 2),
            ties: (0, 1),
            target_choices: vec![0.8],
        }
    }
    /// Tiny envelope for full co-planning cross-checks.
    pub fn coplan() -> Self {
        GenProfile {
            nodes: (4, 6),
            periods: (1, 2),
            mhers: (1, 2),
            eh: (1, 2),
            vulnerable: (3, 4),
            k: (1, 2),
            ties: (0, 1),
            target_choices: vec![0.65, 0.75, 0.85],
        }
    }
}

fn pick(rng: &mut StdRng, range: (usize, usize)) -> usize {
    rng.gen_range(range.0..=range.1)
}

/// Deterministic random instance from a seed and a size envelope.
pub fn random_instance(seed: u64, profile: &GenProfile) -> NetworkInstance {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = pick(&mut rng, profile.nodes);
    let periods = pick(&mut rng, profile.periods);
    let names: Vec<String> = (0..n)
        .map(|i| if i == 0 { "s".to_string() } else { format!("n{i}") })
        .collect();

    // Random substation-rooted spanning tree.
    let mut lines: Vec<LineDoc> = Vec::new();
    for j in 1..n {
        let parent = rng.gen_range(0..j);
        lines.push(LineDoc {
            id: format!("{}-{}", names[parent], names[j]),
            from: names[parent].clone(),
            to: names[j].clone(),
            r_pu: rng.gen_range(1.0e-5..4.0e-5),
            x_pu: rng.gen_range(1.5e-5..6.0e-5),
            p_max_kw: 0.0, // sized below once the loads exist
            q_max_kvar: 0.0,
            switchable: true,
            tie: false,
            vulnerable: false,
        });
    }
    let n_ties = pick(&mut rng, profile.ties);
    let mut tie_count = 0;
    let mut guard = 0;
    while tie_count < n_ties && guard < 40 {
        guard += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let id = format!("{}-{}", names[a], names[b]);
        let rev = format!("{}-{}", names[b], names[a]);
        if lines.iter().any(|l| l.id == id || l.id == rev) {
            continue;
        }
        lines.push(LineDoc {
            id,
            from: names[a].clone(),
            to: names[b].clone(),
            r_pu: rng.gen_range(1.0e-5..4.0e-5),
            x_pu: rng.gen_range(1.5e-5..6.0e-5),
            p_max_kw: 0.0,
            q_max_kvar: 0.0,
            switchable: true,
            tie: true,
            vulnerable: false,
        });
        tie_count += 1;
    }
    let tree_count = n - 1;
    let nv = pick(&mut rng, profile.vulnerable).min(tree_count);
    let mut vul_idx: Vec<usize> = (0..tree_count).collect();
    for i in (1..vul_idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        vul_idx.swap(i, j);
    }
    vul_idx.truncate(nv);
    vul_idx.sort_unstable();
    for &i in &vul_idx {
        lines[i].vulnerable = true;
    }

    // Loads.
    let mut p_kw = BTreeMap::new();
    let mut q_kvar = BTreeMap::new();
    let mut weights = BTreeMap::new();
    let mut total = 0.0;
    for name in names.iter().skip(1) {
        if rng.gen_bool(0.12) {
            continue; // an unloaded pass-through node
        }
        let series: Vec<f64> = (0..periods)
            .map(|_| (rng.gen_range(50.0..250.0f64) * 10.0).round() / 10.0)
            .collect();
        total += series.iter().sum::<f64>() / periods as f64;
        let qf = rng.gen_range(0.2..0.45);
        q_kvar.insert(
            name.clone(),
            series.iter().map(|p| (p * qf * 10.0).round() / 10.0).collect(),
        );
        p_kw.insert(name.clone(), series);
        if rng.gen_bool(0.3) {
            weights.insert(name.clone(), rng.gen_range(2..=3) as f64);
        }
    }
    if p_kw.is_empty() {
        p_kw.insert(names[1].clone(), vec![100.0; periods]);
        q_kvar.insert(names[1].clone(), vec![30.0; periods]);
        total = 100.0;
    }
    for line in &mut lines {
        line.p_max_kw = (total * rng.gen_range(0.9..1.4) * 10.0).round() / 10.0;
        line.q_max_kvar = (line.p_max_kw * 0.7 * 10.0).round() / 10.0;
    }

    // EH nodes with parking and the occasional stationary generator.
    let ne = pick(&mut rng, profile.eh).min(n - 1).max(1);
    let mut eh_pool: Vec<usize> = (1..n).collect();
    for i in (1..eh_pool.len()).rev() {
        let j = rng.gen_range(0..=i);
        eh_pool.swap(i, j);
    }
    eh_pool.truncate(ne);
    eh_pool.sort_unstable();
    let eh: Vec<String> = eh_pool.iter().map(|&i| names[i].clone()).collect();
    let mut generators = BTreeMap::new();
    for name in &eh {
        if rng.gen_bool(0.4) {
            let p = (rng.gen_range(80.0..250.0f64) * 10.0).round() / 10.0;
            generators.insert(
                name.clone(),
                PqLimitDoc { p_max_kw: p, q_max_kvar: (p * 0.75 * 10.0).round() / 10.0 },
            );
        }
    }

    // Fleet.
    let nm = pick(&mut rng, profile.mhers);
    let mut units = Vec::new();
    for m in 0..nm {
        let h = [30.0, 45.0, 60.0][rng.gen_range(0..3)];
        let p = [150.0, 200.0, 300.0][rng.gen_range(0..3)];
        let capex = rng.gen_range(400_000.0..800_000.0f64).round();
        units.push(MherDoc {
            id: format!("M{}", m + 1),
            h_max_kg: h,
            h_min_kg: 0.0,
            p_max_kw: p,
            q_max_kvar: (p * 1.25).round(),
            efficiency: 0.52,
            travel_burn_kg_per_period: 1.0,
            rental_cost: None,
            capex: Some(capex),
            premium: rng.gen_bool(0.5),
        });
    }
    let mut travel_times = BTreeMap::new();
    for unit in &units {
        let mut from_map = BTreeMap::new();
        for a in &eh {
            let mut to_map = BTreeMap::new();
            for b in &eh {
                if a != b {
                    to_map.insert(b.clone(), rng.gen_range(1..=2u32));
                }
            }
            if !to_map.is_empty() {
                from_map.insert(a.clone(), to_map);
            }
        }
        travel_times.insert(unit.id.clone(), from_map);
    }

    let hardening: BTreeMap<String, f64> = vul_idx
        .iter()
        .map(|&i| (lines[i].id.clone(), rng.gen_range(8_000.0..40_000.0f64).round()))
        .collect();
    let rental_total: f64 = units.iter().map(|u| 0.02 * u.capex.unwrap()).sum();
    let cost_total: f64 = hardening.values().sum::<f64>() + rental_total;
    let budget = (cost_total * rng.gen_range(0.35..1.0)).round();
    let k = rng.gen_range(profile.k.0..=profile.k.1).min(nv as u32);
    let target = profile.target_choices[rng.gen_range(0..profile.target_choices.len())];

    let doc = InstanceDoc {
        schema: SCHEMA_VERSION,
        nodes: NodesDoc {
            ids: names.clone(),
            substations: vec![names[0].clone()],
            eh,
            voltage: VoltageDoc { v_min: 0.94, v_max: 1.06, v_ref: 1.0 },
            substation_limits: [(
                names[0].clone(),
                PqLimitDoc {
                    p_max_kw: (total * rng.gen_range(1.0..1.4) * 10.0).round() / 10.0,
                    q_max_kvar: (total * 0.9 * 10.0).round() / 10.0,
                },
            )]
            .into_iter()
            .collect(),
            generators,
            parking: names
                .iter()
                .map(|nme| (nme.clone(), rng.gen_range(1..=2u32)))
                .collect(),
        },
        lines,
        mhers: MhersDoc {
            conversion_kwh_per_kg: 38.9,
            units,
            travel_times,
        },
        loads: LoadsDoc { periods, period_hours: 1.0, p_kw, q_kvar, weights },
        costs: CostsDoc { hardening, budget },
        uncertainty: UncertaintyDoc {
            k,
            sigma1: 0.7,
            sigma2: 0.9,
            resilience_target: target,
        },
        solver: SolverDoc::default(),
    };
    instance_from_doc(&doc).expect("generated instance must validate")
}

/// Deterministic random budget-feasible first stage.
pub fn random_feasible_decision(inst: &NetworkInstance, seed: u64) -> FirstStageDecision {
    let mut rng = StdRng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for _ in 0..64 {
        let hardened: Vec<bool> = (0..inst.vulnerable.len()).map(|_| rng.gen_bool(0.35)).collect();
        let rented: Vec<bool> = (0..inst.n_mhers()).map(|_| rng.gen_bool(0.6)).collect();
        let mut preallocation = vec![None; inst.n_mhers()];
        for m in 0..inst.n_mhers() {
            if rented[m] && inst.n_eh() > 0 && rng.gen_bool(0.85) {
                preallocation[m] = Some(rng.gen_range(0..inst.n_eh()));
            }
        }
        let z = FirstStageDecision { hardened, rented, preallocation };
        if inst.first_stage_feasible(&z) {
            return z;
        }
    }
    FirstStageDecision::all_zero(inst)
}

// ---------------------------------------------------------------------------
// Suite runners
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub cases: Vec<SuiteCase>,
    pub max_delta: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.pass)
    }
    pub fn render_table(&self) -> String {
        let mut s = format!("suite {} (seed {})\n", self.suite, self.seed);
        for c in &self.cases {
            s.push_str(&format!(
                "  {:<28} {}  {}\n",
                c.name,
                if c.pass { "PASS" } else { "FAIL" },
                c.detail
            ));
        }
        s.push_str(&format!(
            "  => {} | max |delta| = {:.3e}\n",
            if self.passed() { "ALL PASS" } else { "FAILURES PRESENT" },
            self.max_delta
        ));
        s
    }
}

fn physics_ok(
    inst: &NetworkInstance,
    scenario: &crate::instance::Scenario,
    plan: &crate::instance::RecoursePlan,
) -> Result<(), String> {
    let violations = plan.physics_violations(inst, scenario);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations.join("; "))
    }
}

/// One worst-case cross-check: nested value vs oracle value plus the
/// physics audit of both plans.
pub fn worst_case_case(
    inst: &NetworkInstance,
    z: &FirstStageDecision,
) -> Result<(f64, String), String> {
    let cfg = AlgoConfig::default();
    let algo = solve_worst_case(inst, z, &cfg, &[]).map_err(|e| e.to_string())?;
    let (oracle_value, oracle_scenario, oracle_plan) =
        brute_force_worst_case(inst, z, &cfg.milp).map_err(|e| e.to_string())?;
    physics_ok(inst, &algo.scenario, &algo.plan)?;
    physics_ok(inst, &oracle_scenario, &oracle_plan)?;
    let delta = (algo.value - oracle_value).abs() / oracle_value.abs().max(1.0);
    if delta > 1e-6 {
        return Err(format!(
            "value mismatch: algo {:.9} oracle {:.9}",
            algo.value, oracle_value
        ));
    }
    Ok((
        delta,
        format!("algo {:.6} oracle {:.6}", algo.value, oracle_value),
    ))
}

/// Nested worst-case vs exhaustive oracle on seeded random instances.
pub fn worst_case_suite(seed: u64, count: usize) -> SuiteReport {
    let profile = GenProfile::worst_case();
    let mut cases = Vec::new();
    let mut max_delta = 0.0f64;
    for i in 0..count {
        let inst = random_instance(seed.wrapping_add(i as u64), &profile);
        let z = random_feasible_decision(&inst, seed.wrapping_add(i as u64));
        let name = format!("worst-case[{i}]");
        match worst_case_case(&inst, &z) {
            Ok((delta, detail)) => {
                max_delta = max_delta.max(delta);
                cases.push(SuiteCase { name, pass: true, detail });
            }
            Err(e) => cases.push(SuiteCase { name, pass: false, detail: e }),
        }
    }
    SuiteReport { suite: "worst-case".into(), seed, cases, max_delta }
}

/// Single-instance worst-case verification at a seeded plan plus the
/// all-zero plan.
pub fn worst_case_single(inst: &NetworkInstance, seed: u64) -> SuiteReport {
    let mut cases = Vec::new();
    let mut max_delta = 0.0f64;
    let plans = vec![
        ("zero-plan".to_string(), FirstStageDecision::all_zero(inst)),
        ("seeded-plan".to_string(), random_feasible_decision(inst, seed)),
    ];
    for (name, z) in plans {
        match worst_case_case(inst, &z) {
            Ok((delta, detail)) => {
                max_delta = max_delta.max(delta);
                cases.push(SuiteCase { name, pass: true, detail });
            }
            Err(e) => cases.push(SuiteCase { name, pass: false, detail: e }),
        }
    }
    SuiteReport { suite: "worst-case".into(), seed, cases, max_delta }
}

/// One co-planning cross-check: status, cost, and certified ratio.
pub fn coplan_case(inst: &NetworkInstance) -> Result<(f64, String), String> {
    let cfg = AlgoConfig::default();
    let algo = solve_coplan(inst, &cfg).map_err(|e| e.to_string())?;
    let oracle = brute_force_coplan(inst, &cfg.milp, 4096).map_err(|e| e.to_string())?;
    let status_match = matches!(
        (algo.status, oracle.status),
        (CoPlanStatus::Optimal, OracleStatus::Optimal)
            | (CoPlanStatus::Infeasible, OracleStatus::Infeasible)
    );
    if !status_match {
        return Err(format!(
            "status mismatch: algo {:?} oracle {:?}",
            algo.status, oracle.status
        ));
    }
    if matches!(algo.status, CoPlanStatus::Infeasible) {
        return Ok((0.0, "both infeasible".into()));
    }
    let src_delta = (algo.src - oracle.src).abs() / oracle.src.abs().max(1.0);
    if src_delta > 1e-9 {
        return Err(format!("src mismatch: algo {} oracle {}", algo.src, oracle.src));
    }
    let ratio_delta = (algo.certified_ratio - oracle.certified_ratio).abs();
    if ratio_delta > 1e-6 {
        return Err(format!(
            "certified ratio mismatch: algo {} oracle {}",
            algo.certified_ratio, oracle.certified_ratio
        ));
    }
    if let (Some(s), Some(p)) = (&algo.worst_scenario, &algo.worst_plan) {
        physics_ok(inst, s, p)?;
    }
    Ok((
        src_delta.max(ratio_delta),
        format!("src {:.2} ratio {:.6}", algo.src, algo.certified_ratio),
    ))
}

/// Nested co-planning vs exhaustive oracle on seeded tiny instances.
pub fn coplan_suite(seed: u64, count: usize) -> SuiteReport {
    let profile = GenProfile::coplan();
    let mut cases = Vec::new();
    let mut max_delta = 0.0f64;
    for i in 0..count {
        let inst = random_instance(seed.wrapping_add(1000 + i as u64), &profile);
        let name = format!("coplan[{i}]");
        match coplan_case(&inst) {
            Ok((delta, detail)) => {
                max_delta = max_delta.max(delta);
                cases.push(SuiteCase { name, pass: true, detail });
            }
            Err(e) => cases.push(SuiteCase { name, pass: false, detail: e }),
        }
    }
    SuiteReport { suite: "coplan".into(), seed, cases, max_delta }
}

/// Single-instance co-planning verification.
pub fn coplan_single(inst: &NetworkInstance, seed: u64) -> SuiteReport {
    let mut cases = Vec::new();
    let mut max_delta = 0.0f64;
    match coplan_case(inst) {
        Ok((delta, detail)) => {
            max_delta = delta;
            cases.push(SuiteCase { name: "coplan".into(), pass: true, detail });
        }
        Err(e) => cases.push(SuiteCase { name: "coplan".into(), pass: false, detail: e }),
    }
    SuiteReport { suite: "coplan".into(), seed, cases, max_delta }
}

/// One integrality audit of the relaxed damage polytope.
pub fn lemma1_case(inst: &NetworkInstance, z: &FirstStageDecision) -> (bool, f64, String) {
    let verts = enumerate_relaxed_u_vertices(inst, z);
    let mut worst = 0.0f64;
    for v in &verts {
        for &c in v {
            worst = worst.max((c - c.round()).abs());
        }
    }
    (
        worst < 1e-7 && !verts.is_empty(),
        worst,
        format!("{} vertices, max fractional part {:.2e}", verts.len(), worst),
    )
}

/// Integrality audit of the relaxed damage polytope on random instances.
pub fn lemma1_suite(seed: u64, count: usize) -> SuiteReport {
    let profile = GenProfile::worst_case();
    let mut cases = Vec::new();
    let mut max_delta = 0.0f64;
    for i in 0..count {
        let inst = random_instance(seed.wrapping_add(2000 + i as u64), &profile);
        let z = random_feasible_decision(&inst, seed.wrapping_add(7000 + i as u64));
        let (pass, worst, detail) = lemma1_case(&inst, &z);
        max_delta = max_delta.max(worst);
        cases.push(SuiteCase { name: format!("lemma1[{i}]"), pass, detail });
    }
    SuiteReport { suite: "lemma1".into(), seed, cases, max_delta }
}

/// Single-instance integrality audit at a seeded plan.
pub fn lemma1_single(inst: &NetworkInstance, seed: u64) -> SuiteReport {
    let z = random_feasible_decision(inst, seed);
    let (pass, worst, detail) = lemma1_case(inst, &z);
    SuiteReport {
        suite: "lemma1".into(),
        seed,
        cases: vec![SuiteCase { name: "lemma1".into(), pass, detail }],
        max_delta: worst,
    }
}

/// One enhancement-neutrality check; returns (delta, detail, basic and
/// enhanced inner iteration counts).
pub fn enhancements_case(inst: &NetworkInstance) -> Result<(f64, String, usize, usize), String> {
    let mut basic_cfg = AlgoConfig::default();
    basic_cfg.enhancements = Enhancements::None;
    let mut enhanced_cfg = AlgoConfig::default();
    enhanced_cfg.enhancements = Enhancements::All;
    let basic = solve_coplan(inst, &basic_cfg).map_err(|e| e.to_string())?;
    let enhanced = solve_coplan(inst, &enhanced_cfg).map_err(|e| e.to_string())?;
    if basic.status != enhanced.status {
        return Err(format!(
            "status diverged: basic {:?} enhanced {:?}",
            basic.status, enhanced.status
        ));
    }
    let (bi, ei) = (basic.inner_iterations_total, enhanced.inner_iterations_total);
    if matches!(basic.status, CoPlanStatus::Infeasible) {
        return Ok((0.0, "both infeasible".into(), bi, ei));
    }
    let delta = (basic.src - enhanced.src).abs() / basic.src.abs().max(1.0);
    if delta > 1e-9 {
        return Err(format!(
            "value diverged: basic {} enhanced {}",
            basic.src, enhanced.src
        ));
    }
    Ok((
        delta,
        format!("src {:.2}; inner iters {bi} vs {ei}", basic.src),
        bi,
        ei,
    ))
}

/// Equal answers with and without enhancements; iteration counts reported.
pub fn enhancements_suite(seed: u64, count: usize) -> SuiteReport {
    let profile = GenProfile::coplan();
    let mut cases = Vec::new();
    let mut max_delta = 0.0f64;
    let mut base_iters = 0usize;
    let mut enh_iters = 0usize;
    for i in 0..count {
        let inst = random_instance(seed.wrapping_add(3000 + i as u64), &profile);
        let name = format!("enhancements[{i}]");
        match enhancements_case(&inst) {
            Ok((delta, detail, bi, ei)) => {
                max_delta = max_delta.max(delta);
                base_iters += bi;
                enh_iters += ei;
                cases.push(SuiteCase { name, pass: true, detail });
            }
            Err(e) => cases.push(SuiteCase { name, pass: false, detail: e }),
        }
    }
    cases.push(SuiteCase {
        name: "iteration-ratio".into(),
        pass: true,
        detail: format!(
            "total inner iterations: basic {} enhanced {} (ratio {:.2})",
            base_iters,
            enh_iters,
            if enh_iters > 0 { base_iters as f64 / enh_iters as f64 } else { f64::NAN }
        ),
    });
    SuiteReport { suite: "enhancements".into(), seed, cases, max_delta }
}

/// Single-instance enhancement-neutrality verification.
pub fn enhancements_single(inst: &NetworkInstance, seed: u64) -> SuiteReport {
    let mut cases = Vec::new();
    let mut max_delta = 0.0f64;
    match enhancements_case(inst) {
        Ok((delta, detail, _, _)) => {
            max_delta = delta;
            cases.push(SuiteCase { name: "enhancements".into(), pass: true, detail });
        }
        Err(e) => cases.push(SuiteCase { name: "enhancements".into(), pass: false, detail: e }),
    }
    SuiteReport { suite: "enhancements".into(), seed, cases, max_delta }
}

/// Strong-duality identity at random (routing, scenario) fixings.
pub fn strong_duality_suite(seed: u64, count: usize) -> SuiteReport {
    let profile = GenProfile::worst_case();
    let cfg = AlgoConfig::default();
    let mut cases = Vec::new();
    let mut max_delta = 0.0f64;
    let mut done = 0usize;
    let mut trial = 0u64;
    while done < count && trial < count as u64 * 4 {
        trial += 1;
        let inst = random_instance(seed.wrapping_add(4000 + trial), &profile);
        let template = recourse_template(&inst);
        let z = random_feasible_decision(&inst, seed.wrapping_add(5000 + trial));
        let scenarios = match crate::ddu::enumerate_scenario_vertices(&inst, &z) {
            Ok(s) => s,
            Err(e) => {
                cases.push(SuiteCase {
                    name: format!("strong-duality[{done}]"),
                    pass: false,
                    detail: e.to_string(),
                });
                continue;
            }
        };
        let mut rng = StdRng::seed_from_u64(seed.wrapping_add(6000 + trial));
        let scenario = &scenarios[rng.gen_range(0..scenarios.len())];
        let name = format!("strong-duality[{done}]");
        let outcome = (|| -> Result<f64, String> {
            let (model, bind) = template
                .recourse_milp(&inst, &z, scenario)
                .map_err(|e| e.to_string())?;
            let sol = solve_milp(&model, &cfg.milp).map_err(|e| e.to_string())?;
            if !matches!(sol.status, SolveStatus::Optimal) {
                return Err(format!("recourse {:?}", sol.status));
            }
            let ups = template.upsilon_from_assignment(&bind, &sol.assignment);
            let lp = template
                .inner_lp(&inst, &z, scenario, &ups)
                .map_err(|e| e.to_string())?;
            let (lp_sol, duals) = solve_lp_with_duals(&lp).map_err(|e| e.to_string())?;
            let mu = template.split_duals(&duals);
            let residual = template.dual_feasibility_residual(&mu);
            if residual > 1e-8 {
                return Err(format!("dual feasibility residual {residual:.2e}"));
            }
            let dual_obj = template.dual_objective(&mu, &ups, scenario);
            Ok((dual_obj - lp_sol.objective).abs())
        })();
        match outcome {
            Ok(delta) => {
                max_delta = max_delta.max(delta);
                cases.push(SuiteCase {
                    name,
                    pass: delta <= 1e-8,
                    detail: format!("|dual - primal| = {delta:.2e}"),
                });
                done += 1;
            }
            Err(e) => {
                cases.push(SuiteCase { name, pass: false, detail: e });
                done += 1;
            }
        }
    }
    SuiteReport { suite: "strong-duality".into(), seed, cases, max_delta }
}
