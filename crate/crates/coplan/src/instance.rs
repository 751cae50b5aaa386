//! Problem data model: the instance document format, validation, and the
//! restoration-ratio metric.
//!
//! An instance is immutable once loaded; solvers and oracles share it freely
//! across worker threads.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Current instance document schema version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("instance parse error: {0}")]
    Parse(String),
    #[error("unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("instance validation failed:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error("restoration ratio undefined: total weighted demand is zero")]
    ZeroDemand,
    #[error("{0}")]
    Data(String),
}

// ---------------------------------------------------------------------------
// Document format (what lives in the JSON file)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub schema: u32,
    pub nodes: NodesDoc,
    pub lines: Vec<LineDoc>,
    pub mhers: MhersDoc,
    pub loads: LoadsDoc,
    pub costs: CostsDoc,
    pub uncertainty: UncertaintyDoc,
    #[serde(default)]
    pub solver: SolverDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NodesDoc {
    pub ids: Vec<String>,
    pub substations: Vec<String>,
    /// Nodes with vehicle-to-grid interfaces where MHERs may park.
    pub eh: Vec<String>,
    pub voltage: VoltageDoc,
    /// Import limits per substation node (kW / kVar).
    pub substation_limits: BTreeMap<String, PqLimitDoc>,
    /// Stationary generators at EH nodes (kW / kVar).
    #[serde(default)]
    pub generators: BTreeMap<String, PqLimitDoc>,
    /// Parking capacity per EH node; defaults to the fleet size.
    #[serde(default)]
    pub parking: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VoltageDoc {
    pub v_min: f64,
    pub v_max: f64,
    pub v_ref: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PqLimitDoc {
    pub p_max_kw: f64,
    pub q_max_kvar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LineDoc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub r_pu: f64,
    pub x_pu: f64,
    pub p_max_kw: f64,
    pub q_max_kvar: f64,
    #[serde(default = "default_true")]
    pub switchable: bool,
    /// Normally-open tie line; ties are invulnerable.
    #[serde(default)]
    pub tie: bool,
    /// Eligible for damage and for hardening.
    #[serde(default)]
    pub vulnerable: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MhersDoc {
    /// Hydrogen-to-power conversion factor (kWh per kg).
    pub conversion_kwh_per_kg: f64,
    pub units: Vec<MherDoc>,
    /// travel_times[mher][from_eh][to_eh] in whole periods, >= 1 between
    /// distinct nodes. Directed; both directions must be present.
    #[serde(default)]
    pub travel_times: BTreeMap<String, BTreeMap<String, BTreeMap<String, u32>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MherDoc {
    pub id: String,
    pub h_max_kg: f64,
    #[serde(default)]
    pub h_min_kg: f64,
    pub p_max_kw: f64,
    pub q_max_kvar: f64,
    /// Generation efficiency in (0, 1].
    pub efficiency: f64,
    /// Hydrogen burned per period while traveling (kg).
    pub travel_burn_kg_per_period: f64,
    /// Rental cost in dollars; when omitted it defaults to 2% of `capex`.
    #[serde(default)]
    pub rental_cost: Option<f64>,
    #[serde(default)]
    pub capex: Option<f64>,
    /// Participates in the aggregate storage guarantee.
    #[serde(default)]
    pub premium: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LoadsDoc {
    pub periods: usize,
    #[serde(default = "default_period_hours")]
    pub period_hours: f64,
    /// Active demand per node and period (kW); nodes absent here carry zero.
    pub p_kw: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub q_kvar: BTreeMap<String, Vec<f64>>,
    /// Priority weights; default 1.
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
}

fn default_period_hours() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CostsDoc {
    /// Hardening cost per vulnerable line id, in dollars. Authors resolve
    /// unit cost times length before writing the document.
    pub hardening: BTreeMap<String, f64>,
    pub budget: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyDoc {
    /// Maximum number of damaged vulnerable lines.
    pub k: u32,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Target restoration ratio in [0, 1].
    pub resilience_target: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverDoc {
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Voltage-relaxation constant; computed from the data when omitted.
    #[serde(default)]
    pub big_m_voltage: Option<f64>,
    /// Fictitious-flow bound; defaults to the node count.
    #[serde(default)]
    pub big_m_flow: Option<f64>,
    #[serde(default = "default_dual_cap")]
    pub dual_cap: f64,
    #[serde(default = "default_enum_lines")]
    pub max_enum_lines: usize,
    #[serde(default = "default_enum_fleet")]
    pub max_enum_fleet: usize,
}

fn default_backend() -> String {
    "reference".to_string()
}
fn default_dual_cap() -> f64 {
    1e4
}
fn default_enum_lines() -> usize {
    20
}
fn default_enum_fleet() -> usize {
    8
}

impl Default for SolverDoc {
    fn default() -> Self {
        SolverDoc {
            backend: default_backend(),
            big_m_voltage: None,
            big_m_flow: None,
            dual_cap: default_dual_cap(),
            max_enum_lines: default_enum_lines(),
            max_enum_fleet: default_enum_fleet(),
        }
    }
}

// ---------------------------------------------------------------------------
// Indexed in-memory model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub r_pu: f64,
    pub x_pu: f64,
    pub p_max_kw: f64,
    pub q_max_kvar: f64,
    pub switchable: bool,
    pub tie: bool,
    pub vulnerable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mher {
    pub id: String,
    pub h_max_kg: f64,
    pub h_min_kg: f64,
    pub p_max_kw: f64,
    pub q_max_kvar: f64,
    pub efficiency: f64,
    pub travel_burn_kg_per_period: f64,
    pub rental_cost: f64,
    pub capex: Option<f64>,
    pub premium: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MherFleet {
    pub units: Vec<Mher>,
    pub conversion_kwh_per_kg: f64,
    /// travel[m][i][j]: periods for unit m to move between EH-list positions
    /// i and j (0 on the diagonal).
    pub travel: Vec<Vec<Vec<u32>>>,
}

/// Immutable problem data with all derived adjacency precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    pub node_names: Vec<String>,
    pub substations: Vec<usize>,
    pub eh_nodes: Vec<usize>,
    pub lines: Vec<Line>,
    /// Line indices eligible for damage/hardening, in declaration order.
    pub vulnerable: Vec<usize>,
    pub tie_lines: Vec<usize>,
    /// Incoming / outgoing line indices per node.
    pub lines_in: Vec<Vec<usize>>,
    pub lines_out: Vec<Vec<usize>>,

    pub periods: usize,
    pub period_hours: f64,
    /// p_load[node][t], q_load[node][t] (kW / kVar), t zero-based.
    pub p_load: Vec<Vec<f64>>,
    pub q_load: Vec<Vec<f64>>,
    pub weights: Vec<f64>,

    pub v_min: f64,
    pub v_max: f64,
    pub v_ref: f64,
    /// (p_max, q_max) import limit per node; zero for non-substations.
    pub sub_limit: Vec<(f64, f64)>,
    /// Stationary generator ratings per node; zero where none is installed.
    pub sg_limit: Vec<(f64, f64)>,
    /// Parking capacity per node (only meaningful at EH nodes).
    pub parking: Vec<u32>,

    pub fleet: MherFleet,

    /// Hardening cost per vulnerable-list position, dollars.
    pub hardening_cost: Vec<f64>,
    pub budget: f64,

    pub k: u32,
    pub sigma1: f64,
    pub sigma2: f64,
    pub resilience_target: f64,

    pub big_m_voltage: f64,
    pub big_m_flow: f64,
    pub solver: SolverDoc,
}

impl NetworkInstance {
    pub fn n_nodes(&self) -> usize {
        self.node_names.len()
    }
    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }
    pub fn n_mhers(&self) -> usize {
        self.fleet.units.len()
    }
    pub fn n_eh(&self) -> usize {
        self.eh_nodes.len()
    }
    pub fn is_source(&self, node: usize) -> bool {
        self.substations.contains(&node) || self.eh_nodes.contains(&node)
    }
    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.node_names.iter().position(|n| n == name)
    }
    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }
    pub fn mher_index(&self, id: &str) -> Option<usize> {
        self.fleet.units.iter().position(|m| m.id == id)
    }
    /// Position of `line` in the vulnerable list, if it is vulnerable.
    pub fn vulnerable_position(&self, line: usize) -> Option<usize> {
        self.vulnerable.iter().position(|&l| l == line)
    }
    /// Position of `node` in the EH list, if it is an EH node.
    pub fn eh_position(&self, node: usize) -> Option<usize> {
        self.eh_nodes.iter().position(|&n| n == node)
    }

    /// Total weighted demand over the horizon (the restoration-ratio
    /// denominator).
    pub fn total_weighted_demand(&self) -> f64 {
        let mut d = 0.0;
        for j in 0..self.n_nodes() {
            for t in 0..self.periods {
                d += self.weights[j] * self.p_load[j][t];
            }
        }
        d
    }

    pub fn first_stage_cost(&self, z: &FirstStageDecision) -> f64 {
        let mut c = 0.0;
        for (v, &h) in z.hardened.iter().enumerate() {
            if h {
                c += self.hardening_cost[v];
            }
        }
        for (m, &r) in z.rented.iter().enumerate() {
            if r {
                c += self.fleet.units[m].rental_cost;
            }
        }
        c
    }

    /// Budget, pre-allocation, and parking checks for a first-stage decision.
    pub fn first_stage_feasible(&self, z: &FirstStageDecision) -> bool {
        if z.hardened.len() != self.vulnerable.len()
            || z.rented.len() != self.n_mhers()
            || z.preallocation.len() != self.n_mhers()
        {
            return false;
        }
        if self.first_stage_cost(z) > self.budget + 1e-9 {
            return false;
        }
        let mut per_eh = vec![0u32; self.n_eh()];
        for m in 0..self.n_mhers() {
            if let Some(e) = z.preallocation[m] {
                if !z.rented[m] || e >= self.n_eh() {
                    return false;
                }
                per_eh[e] += 1;
            }
        }
        (0..self.n_eh()).all(|e| per_eh[e] <= self.parking[self.eh_nodes[e]])
    }

    /// Checks a scenario against the uncertainty set induced by `z`.
    pub fn scenario_admissible(&self, z: &FirstStageDecision, s: &Scenario) -> bool {
        if s.intact.len() != self.vulnerable.len() || s.h0.len() != self.n_mhers() {
            return false;
        }
        let damaged = s.intact.iter().filter(|&&ok| !ok).count() as u32;
        if damaged > self.k {
            return false;
        }
        for v in 0..self.vulnerable.len() {
            if z.hardened[v] && !s.intact[v] {
                return false;
            }
        }
        let mut prem_sum = 0.0;
        let mut prem_floor = 0.0;
        for m in 0..self.n_mhers() {
            let unit = &self.fleet.units[m];
            let (lo, hi) = if z.rented[m] {
                (self.sigma1 * unit.h_max_kg, unit.h_max_kg)
            } else {
                (0.0, 0.0)
            };
            if s.h0[m] < lo - 1e-9 || s.h0[m] > hi + 1e-9 {
                return false;
            }
            if unit.premium {
                prem_sum += s.h0[m];
                if z.rented[m] {
                    prem_floor += self.sigma2 * unit.h_max_kg;
                }
            }
        }
        prem_sum >= prem_floor - 1e-9
    }

    pub fn to_doc(&self) -> InstanceDoc {
        let name = |j: usize| self.node_names[j].clone();
        let mut substation_limits = BTreeMap::new();
        for &s in &self.substations {
            substation_limits.insert(
                name(s),
                PqLimitDoc {
                    p_max_kw: self.sub_limit[s].0,
                    q_max_kvar: self.sub_limit[s].1,
                },
            );
        }
        let mut generators = BTreeMap::new();
        for &e in &self.eh_nodes {
            if self.sg_limit[e].0 > 0.0 || self.sg_limit[e].1 > 0.0 {
                generators.insert(
                    name(e),
                    PqLimitDoc {
                        p_max_kw: self.sg_limit[e].0,
                        q_max_kvar: self.sg_limit[e].1,
                    },
                );
            }
        }
        let mut parking = BTreeMap::new();
        for &e in &self.eh_nodes {
            parking.insert(name(e), self.parking[e]);
        }
        let mut p_kw = BTreeMap::new();
        let mut q_kvar = BTreeMap::new();
        let mut weights = BTreeMap::new();
        for j in 0..self.n_nodes() {
            if self.p_load[j].iter().any(|&v| v != 0.0) {
                p_kw.insert(name(j), self.p_load[j].clone());
            }
            if self.q_load[j].iter().any(|&v| v != 0.0) {
                q_kvar.insert(name(j), self.q_load[j].clone());
            }
            if self.weights[j] != 1.0 {
                weights.insert(name(j), self.weights[j]);
            }
        }
        let mut travel_times = BTreeMap::new();
        for (m, unit) in self.fleet.units.iter().enumerate() {
            let mut from_map = BTreeMap::new();
            for (i, &ei) in self.eh_nodes.iter().enumerate() {
                let mut to_map = BTreeMap::new();
                for (j, &ej) in self.eh_nodes.iter().enumerate() {
                    if i != j {
                        to_map.insert(name(ej), self.fleet.travel[m][i][j]);
                    }
                }
                if !to_map.is_empty() {
                    from_map.insert(name(ei), to_map);
                }
            }
            travel_times.insert(unit.id.clone(), from_map);
        }
        InstanceDoc {
            schema: SCHEMA_VERSION,
            nodes: NodesDoc {
                ids: self.node_names.clone(),
                substations: self.substations.iter().map(|&s| name(s)).collect(),
                eh: self.eh_nodes.iter().map(|&e| name(e)).collect(),
                voltage: VoltageDoc {
                    v_min: self.v_min,
                    v_max: self.v_max,
                    v_ref: self.v_ref,
                },
                substation_limits,
                generators,
                parking,
            },
            lines: self
                .lines
                .iter()
                .map(|l| LineDoc {
                    id: l.id.clone(),
                    from: name(l.from),
                    to: name(l.to),
                    r_pu: l.r_pu,
                    x_pu: l.x_pu,
                    p_max_kw: l.p_max_kw,
                    q_max_kvar: l.q_max_kvar,
                    switchable: l.switchable,
                    tie: l.tie,
                    vulnerable: l.vulnerable,
                })
                .collect(),
            mhers: MhersDoc {
                conversion_kwh_per_kg: self.fleet.conversion_kwh_per_kg,
                units: self
                    .fleet
                    .units
                    .iter()
                    .map(|u| MherDoc {
                        id: u.id.clone(),
                        h_max_kg: u.h_max_kg,
                        h_min_kg: u.h_min_kg,
                        p_max_kw: u.p_max_kw,
                        q_max_kvar: u.q_max_kvar,
                        efficiency: u.efficiency,
                        travel_burn_kg_per_period: u.travel_burn_kg_per_period,
                        rental_cost: Some(u.rental_cost),
                        capex: u.capex,
                        premium: u.premium,
                    })
                    .collect(),
                travel_times,
            },
            loads: LoadsDoc {
                periods: self.periods,
                period_hours: self.period_hours,
                p_kw,
                q_kvar,
                weights,
            },
            costs: CostsDoc {
                hardening: self
                    .vulnerable
                    .iter()
                    .enumerate()
                    .map(|(v, &l)| (self.lines[l].id.clone(), self.hardening_cost[v]))
                    .collect(),
                budget: self.budget,
            },
            uncertainty: UncertaintyDoc {
                k: self.k,
                sigma1: self.sigma1,
                sigma2: self.sigma2,
                resilience_target: self.resilience_target,
            },
            solver: self.solver.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("instance serialization")
    }
}

// ---------------------------------------------------------------------------
// Decisions, scenarios, plans
// ---------------------------------------------------------------------------

/// First-stage decision: hardening vector, rental vector, pre-allocation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FirstStageDecision {
    /// Indexed like `NetworkInstance::vulnerable`.
    pub hardened: Vec<bool>,
    pub rented: Vec<bool>,
    /// Pre-event EH position per unit (EH-list index); None for unallocated.
    pub preallocation: Vec<Option<usize>>,
}

impl FirstStageDecision {
    pub fn all_zero(inst: &NetworkInstance) -> Self {
        FirstStageDecision {
            hardened: vec![false; inst.vulnerable.len()],
            rented: vec![false; inst.n_mhers()],
            preallocation: vec![None; inst.n_mhers()],
        }
    }
}

/// An uncertainty realization: line survival and initial hydrogen storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// intact[v] = false means the v-th vulnerable line is damaged.
    pub intact: Vec<bool>,
    /// Initial hydrogen storage per unit (kg); zero for unrented units.
    pub h0: Vec<f64>,
}

impl Scenario {
    pub fn damaged_count(&self) -> usize {
        self.intact.iter().filter(|&&ok| !ok).count()
    }
}

/// Post-event recourse: routing, switching, and the continuous operation
/// profile. Indices follow the owning instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoursePlan {
    /// position[m][t]: EH-list index where unit m is parked, None if traveling
    /// or not rented. t is zero-based over the post-event periods.
    pub position: Vec<Vec<Option<usize>>>,
    /// traveling[m][t]
    pub traveling: Vec<Vec<bool>>,
    /// closed[l][t]: switch state per line (non-switchable lines are true).
    pub closed: Vec<Vec<bool>>,
    pub p_flow: Vec<Vec<f64>>,
    pub q_flow: Vec<Vec<f64>>,
    pub voltage: Vec<Vec<f64>>,
    pub served_p: Vec<Vec<f64>>,
    pub served_q: Vec<Vec<f64>>,
    pub node_p: Vec<Vec<f64>>,
    pub node_q: Vec<Vec<f64>>,
    pub mher_p: Vec<Vec<f64>>,
    pub mher_q: Vec<Vec<f64>>,
    pub storage: Vec<Vec<f64>>,
    pub sg_p: Vec<Vec<f64>>,
    pub sg_q: Vec<Vec<f64>>,
    pub fict_flow: Vec<Vec<f64>>,
    pub fict_inject: Vec<Vec<f64>>,
    /// Restoration ratio attained by the plan.
    pub value: f64,
}

impl RecoursePlan {
    /// Independent physics audit of a plan against its instance and scenario.
    /// Returns human-readable violations; an empty list means the plan passes
    /// the radiality count, source connectivity, hydrogen bookkeeping, bound,
    /// and restoration-monotonicity checks.
    pub fn physics_violations(&self, inst: &NetworkInstance, scenario: &Scenario) -> Vec<String> {
        let mut out = Vec::new();
        let n_sub = inst.substations.len();
        let want_closed = inst.n_nodes() - n_sub;
        for t in 0..inst.periods {
            let closed: usize = (0..inst.n_lines()).filter(|&l| self.closed[l][t]).count();
            if closed != want_closed {
                out.push(format!(
                    "radiality count at t={}: {} closed, expected {}",
                    t + 1,
                    closed,
                    want_closed
                ));
            }
            // Source reachability over closed switches (fictitious-flow
            // feasibility): every non-source node must reach a source.
            let mut seen = vec![false; inst.n_nodes()];
            let mut stack: Vec<usize> = inst
                .substations
                .iter()
                .chain(inst.eh_nodes.iter())
                .copied()
                .collect();
            for &s in &stack {
                seen[s] = true;
            }
            while let Some(j) = stack.pop() {
                for &l in inst.lines_in[j].iter().chain(inst.lines_out[j].iter()) {
                    if !self.closed[l][t] {
                        continue;
                    }
                    let other = if inst.lines[l].from == j {
                        inst.lines[l].to
                    } else {
                        inst.lines[l].from
                    };
                    if !seen[other] {
                        seen[other] = true;
                        stack.push(other);
                    }
                }
            }
            for j in 0..inst.n_nodes() {
                if !seen[j] {
                    out.push(format!(
                        "node {} unreachable from any source at t={}",
                        inst.node_names[j],
                        t + 1
                    ));
                }
            }
        }
        // Hydrogen bookkeeping per unit.
        let xi = inst.fleet.conversion_kwh_per_kg;
        for m in 0..inst.n_mhers() {
            let unit = &inst.fleet.units[m];
            let mut h_prev = scenario.h0[m];
            for t in 0..inst.periods {
                let burn = self.mher_p[m][t] * inst.period_hours / (unit.efficiency * xi);
                let travel = if self.traveling[m][t] {
                    unit.travel_burn_kg_per_period
                } else {
                    0.0
                };
                let expect = h_prev - burn - travel;
                if (self.storage[m][t] - expect).abs() > 1e-9 {
                    out.push(format!(
                        "storage of {} at t={} is {} but dynamics give {}",
                        unit.id,
                        t + 1,
                        self.storage[m][t],
                        expect
                    ));
                }
                if self.storage[m][t] < unit.h_min_kg - 1e-9
                    || self.storage[m][t] > unit.h_max_kg + 1e-9
                {
                    out.push(format!(
                        "storage of {} at t={} out of [{}, {}]: {}",
                        unit.id,
                        t + 1,
                        unit.h_min_kg,
                        unit.h_max_kg,
                        self.storage[m][t]
                    ));
                }
                h_prev = self.storage[m][t];
            }
        }
        // Non-decreasing restoration per node.
        for j in 0..inst.n_nodes() {
            for t in 1..inst.periods {
                let (pd0, pd1) = (inst.p_load[j][t - 1], inst.p_load[j][t]);
                if pd0 <= 0.0 || pd1 <= 0.0 {
                    continue;
                }
                let (r0, r1) = (self.served_p[j][t - 1] / pd0, self.served_p[j][t] / pd1);
                if r1 < r0 - 1e-9 {
                    out.push(format!(
                        "restoration ratio at node {} drops from {} to {} at t={}",
                        inst.node_names[j],
                        r0,
                        r1,
                        t + 1
                    ));
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Loading and validation
// ---------------------------------------------------------------------------

/// Parses and validates an instance document.
pub fn load_instance(text: &str) -> Result<NetworkInstance, InstanceError> {
    let doc: InstanceDoc = serde_json::from_str(text)
        .map_err(|e| InstanceError::Parse(format!("line {} column {}: {}", e.line(), e.column(), e)))?;
    instance_from_doc(&doc)
}

pub fn instance_from_doc(doc: &InstanceDoc) -> Result<NetworkInstance, InstanceError> {
    if doc.schema != SCHEMA_VERSION {
        return Err(InstanceError::Schema { found: doc.schema });
    }
    let inst = index_doc(doc)?;
    let report = validate(&inst);
    if !report.passed() {
        return Err(InstanceError::Invalid(report.failures()));
    }
    Ok(inst)
}

/// Structural indexing; hard errors here are malformed references that make
/// an indexed model impossible (unknown node names, duplicate ids).
fn index_doc(doc: &InstanceDoc) -> Result<NetworkInstance, InstanceError> {
    let node_names = doc.nodes.ids.clone();
    let n = node_names.len();
    let mut name_set = BTreeSet::new();
    for name in &node_names {
        if !name_set.insert(name.clone()) {
            return Err(InstanceError::Data(format!("duplicate node id {name:?}")));
        }
    }
    let node_idx = |name: &str| -> Result<usize, InstanceError> {
        node_names
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| InstanceError::Data(format!("unknown node {name:?}")))
    };

    let mut substations = Vec::new();
    for s in &doc.nodes.substations {
        substations.push(node_idx(s)?);
    }
    let mut eh_nodes = Vec::new();
    for e in &doc.nodes.eh {
        eh_nodes.push(node_idx(e)?);
    }

    let mut lines = Vec::new();
    let mut line_ids = BTreeSet::new();
    for ld in &doc.lines {
        if !line_ids.insert(ld.id.clone()) {
            return Err(InstanceError::Data(format!("duplicate line id {:?}", ld.id)));
        }
        lines.push(Line {
            id: ld.id.clone(),
            from: node_idx(&ld.from)?,
            to: node_idx(&ld.to)?,
            r_pu: ld.r_pu,
            x_pu: ld.x_pu,
            p_max_kw: ld.p_max_kw,
            q_max_kvar: ld.q_max_kvar,
            switchable: ld.switchable,
            tie: ld.tie,
            vulnerable: ld.vulnerable,
        });
    }
    let vulnerable: Vec<usize> = (0..lines.len()).filter(|&l| lines[l].vulnerable).collect();
    let tie_lines: Vec<usize> = (0..lines.len()).filter(|&l| lines[l].tie).collect();

    let mut lines_in = vec![Vec::new(); n];
    let mut lines_out = vec![Vec::new(); n];
    for (l, line) in lines.iter().enumerate() {
        if line.from >= n || line.to >= n {
            return Err(InstanceError::Data(format!("line {:?} endpoint out of range", line.id)));
        }
        lines_out[line.from].push(l);
        lines_in[line.to].push(l);
    }

    let periods = doc.loads.periods;
    let series = |map: &BTreeMap<String, Vec<f64>>, j: usize| -> Result<Vec<f64>, InstanceError> {
        match map.get(&node_names[j]) {
            None => Ok(vec![0.0; periods]),
            Some(v) if v.len() == periods => Ok(v.clone()),
            Some(v) => Err(InstanceError::Data(format!(
                "load series for node {:?} has {} entries, expected {}",
                node_names[j],
                v.len(),
                periods
            ))),
        }
    };
    let mut p_load = Vec::with_capacity(n);
    let mut q_load = Vec::with_capacity(n);
    for j in 0..n {
        p_load.push(series(&doc.loads.p_kw, j)?);
        q_load.push(series(&doc.loads.q_kvar, j)?);
    }
    let weights: Vec<f64> = (0..n)
        .map(|j| doc.loads.weights.get(&node_names[j]).copied().unwrap_or(1.0))
        .collect();

    let mut sub_limit = vec![(0.0, 0.0); n];
    for (name, lim) in &doc.nodes.substation_limits {
        sub_limit[node_idx(name)?] = (lim.p_max_kw, lim.q_max_kvar);
    }
    let mut sg_limit = vec![(0.0, 0.0); n];
    for (name, lim) in &doc.nodes.generators {
        sg_limit[node_idx(name)?] = (lim.p_max_kw, lim.q_max_kvar);
    }
    let fleet_size = doc.mhers.units.len() as u32;
    let mut parking = vec![fleet_size; n];
    for (name, &cap) in &doc.nodes.parking {
        parking[node_idx(name)?] = cap;
    }

    let mut units = Vec::new();
    let mut unit_ids = BTreeSet::new();
    for u in &doc.mhers.units {
        if !unit_ids.insert(u.id.clone()) {
            return Err(InstanceError::Data(format!("duplicate MHER id {:?}", u.id)));
        }
        let rental_cost = match (u.rental_cost, u.capex) {
            (Some(c), _) => c,
            (None, Some(capex)) => 0.02 * capex,
            (None, None) => {
                return Err(InstanceError::Data(format!(
                    "MHER {:?} needs rental_cost or capex",
                    u.id
                )))
            }
        };
        units.push(Mher {
            id: u.id.clone(),
            h_max_kg: u.h_max_kg,
            h_min_kg: u.h_min_kg,
            p_max_kw: u.p_max_kw,
            q_max_kvar: u.q_max_kvar,
            efficiency: u.efficiency,
            travel_burn_kg_per_period: u.travel_burn_kg_per_period,
            rental_cost,
            capex: u.capex,
            premium: u.premium,
        });
    }

    let n_eh = eh_nodes.len();
    let mut travel = vec![vec![vec![0u32; n_eh]; n_eh]; units.len()];
    for (m, unit) in units.iter().enumerate() {
        if let Some(per_from) = doc.mhers.travel_times.get(&unit.id) {
            for (from, per_to) in per_from {
                let fi = node_idx(from)?;
                let fpos = eh_nodes.iter().position(|&e| e == fi).ok_or_else(|| {
                    InstanceError::Data(format!("travel time from non-EH node {from:?}"))
                })?;
                for (to, &periods) in per_to {
                    let ti = node_idx(to)?;
                    let tpos = eh_nodes.iter().position(|&e| e == ti).ok_or_else(|| {
                        InstanceError::Data(format!("travel time to non-EH node {to:?}"))
                    })?;
                    travel[m][fpos][tpos] = periods;
                }
            }
        }
    }

    let mut hardening_cost = vec![0.0; vulnerable.len()];
    let mut hardening_seen = vec![false; vulnerable.len()];
    for (id, &cost) in &doc.costs.hardening {
        let l = lines
            .iter()
            .position(|line| &line.id == id)
            .ok_or_else(|| InstanceError::Data(format!("hardening cost for unknown line {id:?}")))?;
        if let Some(v) = vulnerable.iter().position(|&vl| vl == l) {
            hardening_cost[v] = cost;
            hardening_seen[v] = true;
        }
    }
    // Missing entries are caught by validation, flag with NaN for the report.
    for v in 0..vulnerable.len() {
        if !hardening_seen[v] {
            hardening_cost[v] = f64::NAN;
        }
    }

    let v_min = doc.nodes.voltage.v_min;
    let v_max = doc.nodes.voltage.v_max;
    let v_ref = doc.nodes.voltage.v_ref;
    // Tightest valid relaxation for the voltage-coupling rows.
    let worst_drop = lines
        .iter()
        .map(|l| (l.r_pu * l.p_max_kw + l.x_pu * l.q_max_kvar) / v_ref)
        .fold(0.0f64, f64::max);
    let big_m_voltage = doc
        .solver
        .big_m_voltage
        .unwrap_or((v_max - v_min) + worst_drop);
    let big_m_flow = doc.solver.big_m_flow.unwrap_or(n as f64);

    Ok(NetworkInstance {
        node_names,
        substations,
        eh_nodes,
        lines,
        vulnerable,
        tie_lines,
        lines_in,
        lines_out,
        periods,
        period_hours: doc.loads.period_hours,
        p_load,
        q_load,
        weights,
        v_min,
        v_max,
        v_ref,
        sub_limit,
        sg_limit,
        parking,
        fleet: MherFleet {
            units,
            conversion_kwh_per_kg: doc.mhers.conversion_kwh_per_kg,
            travel,
        },
        hardening_cost,
        budget: doc.costs.budget,
        k: doc.uncertainty.k,
        sigma1: doc.uncertainty.sigma1,
        sigma2: doc.uncertainty.sigma2,
        resilience_target: doc.uncertainty.resilience_target,
        big_m_voltage,
        big_m_flow,
        solver: doc.solver.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .flat_map(|c| {
                c.details
                    .iter()
                    .map(|d| format!("{}: {}", c.name, d))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Checks every instance invariant; failures carry the offending ids.
pub fn validate(inst: &NetworkInstance) -> ValidationReport {
    let mut checks = Vec::new();
    let mut check = |name: &'static str, details: Vec<String>| {
        checks.push(CheckResult {
            name,
            passed: details.is_empty(),
            details,
        });
    };

    // Node roles.
    let mut bad = Vec::new();
    for &s in &inst.substations {
        if inst.eh_nodes.contains(&s) {
            bad.push(format!("node {} is both substation and EH", inst.node_names[s]));
        }
    }
    check("node roles disjoint", bad);

    let mut bad = Vec::new();
    if inst.substations.is_empty() {
        bad.push("no substation node declared".to_string());
    }
    check("at least one substation", bad);

    // Tie lines are invulnerable.
    let mut bad = Vec::new();
    for &l in &inst.tie_lines {
        if inst.lines[l].vulnerable {
            bad.push(format!(
                "tie line {} marked vulnerable; ties are normally open and invulnerable",
                inst.lines[l].id
            ));
        }
    }
    check("tie lines invulnerable", bad);

    // Line parameters.
    let mut bad = Vec::new();
    for line in &inst.lines {
        if line.from == line.to {
            bad.push(format!("line {} is a self-loop", line.id));
        }
        if line.r_pu < 0.0 || line.x_pu < 0.0 {
            bad.push(format!("line {} has negative impedance", line.id));
        }
        if line.p_max_kw <= 0.0 || line.q_max_kvar <= 0.0 {
            bad.push(format!("line {} has nonpositive capacity", line.id));
        }
    }
    check("line parameters", bad);

    // sigma and k ranges.
    let mut bad = Vec::new();
    if !(inst.sigma1 <= inst.sigma2 + 1e-12) {
        bad.push(format!("σ1 ≤ σ2 violated ({} > {})", inst.sigma1, inst.sigma2));
    }
    if inst.sigma1 < 0.0 || inst.sigma2 > 1.0 {
        bad.push(format!("σ1, σ2 must lie in [0,1] ({}, {})", inst.sigma1, inst.sigma2));
    }
    check("storage fractions ordered", bad);

    let mut bad = Vec::new();
    if inst.k as usize > inst.vulnerable.len() {
        bad.push(format!(
            "k exceeds vulnerable line count ({} > {})",
            inst.k,
            inst.vulnerable.len()
        ));
    }
    check("damage budget within vulnerable set", bad);

    let mut bad = Vec::new();
    if inst.resilience_target < 0.0 || inst.resilience_target > 1.0 {
        bad.push(format!("target {} outside [0, 1]", inst.resilience_target));
    }
    check("resilience target in range", bad);

    // Loads.
    let mut bad = Vec::new();
    for j in 0..inst.n_nodes() {
        for t in 0..inst.periods {
            if inst.p_load[j][t] < 0.0 {
                bad.push(format!("negative demand at node {} t={}", inst.node_names[j], t + 1));
            }
        }
        if inst.weights[j] < 0.0 {
            bad.push(format!("negative weight at node {}", inst.node_names[j]));
        }
    }
    if inst.periods == 0 {
        bad.push("horizon has zero periods".to_string());
    }
    check("loads and weights nonnegative", bad);

    let mut bad = Vec::new();
    if inst.total_weighted_demand() <= 0.0 {
        bad.push("total weighted demand is zero; restoration ratio undefined".to_string());
    }
    check("restoration ratio well-defined", bad);

    // Hardening costs present for every vulnerable line.
    let mut bad = Vec::new();
    for (v, &l) in inst.vulnerable.iter().enumerate() {
        if !inst.hardening_cost[v].is_finite() || inst.hardening_cost[v] < 0.0 {
            bad.push(format!("missing or negative hardening cost for line {}", inst.lines[l].id));
        }
    }
    check("hardening costs", bad);

    // Fleet parameters.
    let mut bad = Vec::new();
    for unit in &inst.fleet.units {
        if unit.h_min_kg > unit.h_max_kg {
            bad.push(format!("{}: H_min exceeds H_max", unit.id));
        }
        if unit.efficiency <= 0.0 || unit.efficiency > 1.0 {
            bad.push(format!("{}: efficiency {} outside (0, 1]", unit.id, unit.efficiency));
        }
        if inst.sigma1 * unit.h_max_kg < unit.h_min_kg - 1e-9 {
            bad.push(format!(
                "{}: σ1·H_max {} below H_min {}; an idle unit could start out of range",
                unit.id,
                inst.sigma1 * unit.h_max_kg,
                unit.h_min_kg
            ));
        }
        if unit.rental_cost < 0.0 {
            bad.push(format!("{}: negative rental cost", unit.id));
        }
    }
    if inst.fleet.conversion_kwh_per_kg <= 0.0 {
        bad.push("nonpositive hydrogen conversion factor".to_string());
    }
    check("fleet parameters", bad);

    // Travel times between distinct EH nodes.
    let mut bad = Vec::new();
    for (m, unit) in inst.fleet.units.iter().enumerate() {
        for i in 0..inst.n_eh() {
            for j in 0..inst.n_eh() {
                if i != j && inst.fleet.travel[m][i][j] == 0 {
                    bad.push(format!(
                        "{}: missing travel time {} -> {}",
                        unit.id,
                        inst.node_names[inst.eh_nodes[i]],
                        inst.node_names[inst.eh_nodes[j]]
                    ));
                }
            }
        }
    }
    check("travel times supplied", bad);

    // Voltage window.
    let mut bad = Vec::new();
    if !(inst.v_min < inst.v_max) {
        bad.push(format!("voltage window [{}, {}] empty", inst.v_min, inst.v_max));
    }
    if inst.v_ref < inst.v_min || inst.v_ref > inst.v_max {
        bad.push(format!("reference voltage {} outside window", inst.v_ref));
    }
    check("voltage window", bad);

    // Normally-closed lines form a substation-rooted spanning forest, which
    // is what makes the all-closed fallback plan feasible in every scenario.
    let mut bad = Vec::new();
    let closed_count = inst.lines.iter().filter(|l| !l.tie).count();
    let want = inst.n_nodes() - inst.substations.len();
    if closed_count != want {
        bad.push(format!(
            "{} normally-closed lines, expected |N|-|N_sub| = {}",
            closed_count, want
        ));
    }
    let mut seen = vec![false; inst.n_nodes()];
    let mut stack = inst.substations.clone();
    for &s in &stack {
        seen[s] = true;
    }
    while let Some(j) = stack.pop() {
        for &l in inst.lines_in[j].iter().chain(inst.lines_out[j].iter()) {
            if inst.lines[l].tie {
                continue;
            }
            let other = if inst.lines[l].from == j { inst.lines[l].to } else { inst.lines[l].from };
            if !seen[other] {
                seen[other] = true;
                stack.push(other);
            }
        }
    }
    for j in 0..inst.n_nodes() {
        if !seen[j] {
            bad.push(format!(
                "node {} not reachable from a substation over normally-closed lines",
                inst.node_names[j]
            ));
        }
    }
    check("normally-closed topology is a rooted forest", bad);

    ValidationReport { checks }
}

/// Weighted served-energy share: Σ w_j pl / Σ w_j P^d over nodes and periods.
pub fn restoration_ratio(inst: &NetworkInstance, served: &[Vec<f64>]) -> Result<f64, InstanceError> {
    let denom = inst.total_weighted_demand();
    if denom <= 0.0 {
        return Err(InstanceError::ZeroDemand);
    }
    let mut num = 0.0;
    for j in 0..inst.n_nodes() {
        for t in 0..inst.periods {
            num += inst.weights[j] * served[j][t];
        }
    }
    Ok(num / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suites::fixtures;

    #[test]
    fn minimal_three_node_instance_loads() {
        let inst = load_instance(&fixtures::tri_node_json()).unwrap();
        assert_eq!(inst.n_lines(), 3);
        assert_eq!(inst.n_eh(), 1);
        assert_eq!(inst.vulnerable.len(), 2);
        assert_eq!(inst.tie_lines.len(), 1);
        assert_eq!(inst.n_mhers(), 1);
    }

    #[test]
    fn sigma_order_violation_rejected() {
        let mut doc: InstanceDoc = serde_json::from_str(&fixtures::tri_node_json()).unwrap();
        doc.uncertainty.sigma1 = 0.9;
        doc.uncertainty.sigma2 = 0.7;
        let err = instance_from_doc(&doc).unwrap_err();
        match err {
            InstanceError::Invalid(msgs) => {
                assert!(msgs.iter().any(|m| m.contains("σ1 ≤ σ2 violated")), "{msgs:?}");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn fourteen_bus_layout() {
        let inst = load_instance(&fixtures::fourteen_bus_json()).unwrap();
        assert_eq!(inst.n_nodes(), 14);
        assert_eq!(inst.n_eh(), 6);
        let ties: Vec<&str> = inst.tie_lines.iter().map(|&l| inst.lines[l].id.as_str()).collect();
        assert_eq!(ties, vec!["5-11", "8-14"]);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&fixtures::tri_node_json()).unwrap();
        v.as_object_mut().unwrap().insert("surprise".into(), serde_json::json!(1));
        let err = load_instance(&v.to_string()).unwrap_err();
        assert!(matches!(err, InstanceError::Parse(_)));
    }

    #[test]
    fn k_out_of_range_reported() {
        let mut doc: InstanceDoc = serde_json::from_str(&fixtures::tri_node_json()).unwrap();
        doc.uncertainty.k = 5;
        let inst = index_doc(&doc).unwrap();
        let report = validate(&inst);
        assert!(!report.passed());
        assert!(report
            .failures()
            .iter()
            .any(|m| m.contains("k exceeds vulnerable line count")));
    }

    #[test]
    fn tie_marked_vulnerable_reported() {
        let mut doc: InstanceDoc = serde_json::from_str(&fixtures::tri_node_json()).unwrap();
        for line in &mut doc.lines {
            if line.tie {
                line.vulnerable = true;
            }
        }
        // Keep the hardening map total so only the tie check fires.
        for line in &doc.lines.clone() {
            if line.tie {
                doc.costs.hardening.insert(line.id.clone(), 1000.0);
            }
        }
        let inst = index_doc(&doc).unwrap();
        let report = validate(&inst);
        assert!(report
            .failures()
            .iter()
            .any(|m| m.contains("normally open and invulnerable")));
    }

    #[test]
    fn restoration_ratio_full_zero_and_weighted() {
        let inst = load_instance(&fixtures::two_node_ratio_json()).unwrap();
        let full: Vec<Vec<f64>> = inst.p_load.clone();
        assert!((restoration_ratio(&inst, &full).unwrap() - 1.0).abs() < 1e-12);
        let none = vec![vec![0.0; inst.periods]; inst.n_nodes()];
        assert_eq!(restoration_ratio(&inst, &none).unwrap(), 0.0);
        // weights (2,1), demands (100,100), served (100,0) -> 2/3
        let mut part = none.clone();
        part[1][0] = 100.0;
        let r = restoration_ratio(&inst, &part).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn restoration_ratio_zero_demand_errors() {
        let mut doc: InstanceDoc = serde_json::from_str(&fixtures::two_node_ratio_json()).unwrap();
        doc.loads.p_kw.clear();
        let inst = index_doc(&doc).unwrap();
        assert!(matches!(
            restoration_ratio(&inst, &vec![vec![0.0; inst.periods]; inst.n_nodes()]),
            Err(InstanceError::ZeroDemand)
        ));
    }

    #[test]
    fn document_round_trip() {
        for text in [
            fixtures::tri_node_json(),
            fixtures::fourteen_bus_json(),
            fixtures::two_node_ratio_json(),
        ] {
            let inst = load_instance(&text).unwrap();
            let again = load_instance(&inst.to_json()).unwrap();
            assert_eq!(inst, again);
        }
    }
}
