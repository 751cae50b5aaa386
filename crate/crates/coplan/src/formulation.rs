//! Constraint systems: the first-stage feasible set, the post-event recourse
//! program, and the dual polytope of its continuous core.
//!
//! The recourse program is described once as a symbolic template. Every use
//! site (the recourse MILP at a fixed scenario, the inner LP at fixed
//! routing/switching, master cut blocks with variable scenarios, the dual
//! polytope, dual-objective evaluation) instantiates the same rows, so the
//! coefficient matrices stay consistent across the whole algorithm.
//!
//! Rows are tagged by block: `Lambda` rows couple the continuous profile to
//! routing and initial storage, `Pi` rows couple it to line survival and
//! switching, and `Theta` rows involve binaries only. The dual variables of
//! the Lambda/Pi rows are exactly the (λ, π) pair of the inner LP.

use crate::instance::{FirstStageDecision, NetworkInstance, RecoursePlan, Scenario};
use crate::model::{Model, Objective, Sense, VarId};
use crate::solver::MilpSolution;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("routing/switching choice violates its own constraint set: {0}")]
    UpsilonInfeasible(String),
    #[error("scenario not admissible for the given first stage")]
    ScenarioInadmissible,
    #[error("product linearization needs a positive bound, got {0}")]
    NonpositiveBound(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

// ---------------------------------------------------------------------------
// First stage
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FirstStageVars {
    pub harden: Vec<VarId>,
    pub rent: Vec<VarId>,
    /// prealloc[m][e]
    pub prealloc: Vec<Vec<VarId>>,
}

/// Declares the first-stage binaries and rows into `model` and puts the
/// reinforcement cost on the objective.
pub fn append_first_stage(model: &mut Model, inst: &NetworkInstance) -> FirstStageVars {
    let harden: Vec<VarId> = inst
        .vulnerable
        .iter()
        .enumerate()
        .map(|(v, &l)| {
            let id = model.add_binary(format!("harden[{}]", inst.lines[l].id));
            model.set_obj(id, inst.hardening_cost[v]);
            id
        })
        .collect();
    let rent: Vec<VarId> = inst
        .fleet
        .units
        .iter()
        .map(|u| {
            let id = model.add_binary(format!("rent[{}]", u.id));
            model.set_obj(id, u.rental_cost);
            id
        })
        .collect();
    let prealloc: Vec<Vec<VarId>> = (0..inst.n_mhers())
        .map(|m| {
            (0..inst.n_eh())
                .map(|e| {
                    model.add_binary(format!(
                        "prealloc[{},{}]",
                        inst.fleet.units[m].id, inst.node_names[inst.eh_nodes[e]]
                    ))
                })
                .collect()
        })
        .collect();

    let mut budget: Vec<(VarId, f64)> = Vec::new();
    for (v, &id) in harden.iter().enumerate() {
        budget.push((id, inst.hardening_cost[v]));
    }
    for (m, &id) in rent.iter().enumerate() {
        budget.push((id, inst.fleet.units[m].rental_cost));
    }
    model.add_row("budget", budget, Sense::Le, inst.budget);

    for m in 0..inst.n_mhers() {
        let mut coeffs: Vec<(VarId, f64)> =
            prealloc[m].iter().map(|&id| (id, 1.0)).collect();
        coeffs.push((rent[m], -1.0));
        model.add_row(
            format!("prealloc_once[{}]", inst.fleet.units[m].id),
            coeffs,
            Sense::Le,
            0.0,
        );
    }
    for e in 0..inst.n_eh() {
        let coeffs: Vec<(VarId, f64)> = (0..inst.n_mhers()).map(|m| (prealloc[m][e], 1.0)).collect();
        model.add_row(
            format!("parking_cap[{}]", inst.node_names[inst.eh_nodes[e]]),
            coeffs,
            Sense::Le,
            inst.parking[inst.eh_nodes[e]] as f64,
        );
    }
    FirstStageVars { harden, rent, prealloc }
}

/// Stand-alone first-stage model (budget, pre-allocation, parking rows).
pub fn build_first_stage(inst: &NetworkInstance) -> (Model, FirstStageVars) {
    let mut model = Model::new("first_stage", Objective::Minimize);
    let vars = append_first_stage(&mut model, inst);
    (model, vars)
}

pub fn decision_from_assignment(
    inst: &NetworkInstance,
    vars: &FirstStageVars,
    x: &[f64],
) -> FirstStageDecision {
    let bit = |v: VarId| x[v.idx()] > 0.5;
    FirstStageDecision {
        hardened: vars.harden.iter().map(|&v| bit(v)).collect(),
        rented: vars.rent.iter().map(|&v| bit(v)).collect(),
        preallocation: (0..inst.n_mhers())
            .map(|m| (0..inst.n_eh()).find(|&e| bit(vars.prealloc[m][e])))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Product linearization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub enum ProductKind {
    /// w = a * b with binary a and continuous b in [0, bound].
    BinaryTimesContinuous { bound: f64 },
    /// w = a * b with both binary.
    BinaryTimesBinary,
}

/// Adds the auxiliary variable and envelope rows for a product and returns it.
pub fn linearize_product(
    model: &mut Model,
    name: &str,
    a: VarId,
    b: VarId,
    kind: ProductKind,
) -> Result<VarId, FormulationError> {
    match kind {
        ProductKind::BinaryTimesContinuous { bound } => {
            if bound <= 0.0 {
                return Err(FormulationError::NonpositiveBound(bound));
            }
            let w = model.add_continuous(name.to_string(), 0.0, bound);
            model.add_row(format!("{name}_cap"), vec![(w, 1.0), (a, -bound)], Sense::Le, 0.0);
            model.add_row(format!("{name}_ub"), vec![(w, 1.0), (b, -1.0)], Sense::Le, 0.0);
            model.add_row(
                format!("{name}_lb"),
                vec![(w, 1.0), (b, -1.0), (a, -bound)],
                Sense::Ge,
                -bound,
            );
            Ok(w)
        }
        ProductKind::BinaryTimesBinary => {
            let w = model.add_continuous(name.to_string(), 0.0, 1.0);
            model.add_row(format!("{name}_le_a"), vec![(w, 1.0), (a, -1.0)], Sense::Le, 0.0);
            model.add_row(format!("{name}_le_b"), vec![(w, 1.0), (b, -1.0)], Sense::Le, 0.0);
            model.add_row(
                format!("{name}_ge"),
                vec![(w, 1.0), (a, -1.0), (b, -1.0)],
                Sense::Ge,
                -1.0,
            );
            Ok(w)
        }
    }
}

// ---------------------------------------------------------------------------
// Recourse template
// ---------------------------------------------------------------------------

/// Template variable index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TVar(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TRole {
    /// Routing / traveling / switching binaries: the discrete recourse.
    BinaryRecourse,
    Continuous,
    /// Line survival of the v-th vulnerable line.
    ScenarioU(usize),
    /// Initial storage of unit m.
    ScenarioH0(usize),
    /// Survival-times-switch product for (vulnerable position, period).
    ProductUw(usize, usize),
    /// First-stage rental flag of unit m (parameter in recourse contexts).
    ParamChi(usize),
    /// First-stage pre-allocation of unit m at EH position e.
    ParamG0(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowBlock {
    Lambda,
    Pi,
    Theta,
}

#[derive(Debug, Clone)]
pub struct TRow {
    pub name: String,
    pub coeffs: Vec<(TVar, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub block: RowBlock,
}

/// Discrete recourse decision: values of the binary-recourse template
/// variables in template order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Upsilon {
    pub bits: Vec<bool>,
}

/// Multipliers of the Lambda/Pi rows of the inner LP, in template row order.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub lambda: Vec<f64>,
    pub pi: Vec<f64>,
}

/// A (υ, μ) pair; the pair list parameterizes the worst-scenario blocks.
#[derive(Debug, Clone)]
pub struct VuPair {
    pub upsilon: Upsilon,
    pub mu: DualPoint,
}

/// Ordered pair list with pairwise-distinct υ entries.
#[derive(Debug, Clone, Default)]
pub struct VuPairSet {
    pairs: Vec<VuPair>,
}

impl VuPairSet {
    pub fn new() -> Self {
        VuPairSet { pairs: Vec::new() }
    }
    pub fn len(&self) -> usize {
        self.pairs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
    pub fn iter(&self) -> impl Iterator<Item = &VuPair> {
        self.pairs.iter()
    }
    pub fn contains_upsilon(&self, u: &Upsilon) -> bool {
        self.pairs.iter().any(|p| &p.upsilon == u)
    }
    /// Appends the pair unless its υ is already present; reports whether it
    /// was added.
    pub fn push(&mut self, pair: VuPair) -> bool {
        if self.contains_upsilon(&pair.upsilon) {
            return false;
        }
        self.pairs.push(pair);
        true
    }
}

#[derive(Debug, Clone)]
pub struct RecourseTemplate {
    pub n_vars: usize,
    pub names: Vec<String>,
    pub roles: Vec<TRole>,
    pub rows: Vec<TRow>,
    /// Template row ids per dual block, in dual-vector order.
    pub lambda_rows: Vec<usize>,
    pub pi_rows: Vec<usize>,
    pub theta_rows: Vec<usize>,
    /// Maximization objective (the restoration ratio) over template vars.
    pub objective: Vec<(TVar, f64)>,
    /// Binary-recourse variables in `Upsilon::bits` order.
    pub binary_vars: Vec<TVar>,
    /// Line index per vulnerable position (mirrors `NetworkInstance`).
    pub u_lines: Vec<usize>,

    // Index maps.
    pub gamma: Vec<Vec<Vec<TVar>>>,          // [m][e][t]
    pub phi: Vec<Vec<TVar>>,                 // [m][t]
    pub omega: Vec<Option<Vec<TVar>>>,       // [line] -> per-period switches
    pub u: Vec<TVar>,                        // [vulnerable pos]
    pub h0: Vec<TVar>,                       // [m]
    pub uw: HashMap<(usize, usize), TVar>,   // (vulnerable pos, t)
    pub chi: Vec<TVar>,                      // [m]
    pub g0: Vec<Vec<TVar>>,                  // [m][e]
    pub p_flow: Vec<Vec<TVar>>,              // [line][t]
    pub q_flow: Vec<Vec<TVar>>,
    pub volt: Vec<Vec<TVar>>,                // [node][t]
    pub pl: Vec<Vec<TVar>>,
    pub ql: Vec<Vec<TVar>>,
    pub pout: Vec<Option<Vec<TVar>>>,        // [node] (substations and EH)
    pub qout: Vec<Option<Vec<TVar>>>,
    pub gp: Vec<Vec<TVar>>,                  // [m][t]
    pub gq: Vec<Vec<TVar>>,
    pub storage: Vec<Vec<TVar>>,             // [m][t]
    pub psg: Vec<Option<Vec<TVar>>>,         // [node in EH]
    pub qsg: Vec<Option<Vec<TVar>>>,
    pub fict: Vec<Vec<TVar>>,                // [line][t]
    pub g_src: Vec<Option<Vec<TVar>>>,       // [node source]
    pub gp_link: Vec<Vec<Vec<TVar>>>,        // [m][e][t]
    pub gq_link: Vec<Vec<Vec<TVar>>>,
}

/// How a template variable is realized in a concrete model.
#[derive(Debug, Clone, Copy)]
pub enum Binding {
    Var(VarId),
    Val(f64),
}

struct TemplateBuilder {
    names: Vec<String>,
    roles: Vec<TRole>,
    rows: Vec<TRow>,
}

impl TemplateBuilder {
    fn var(&mut self, name: String, role: TRole) -> TVar {
        self.names.push(name);
        self.roles.push(role);
        TVar(self.names.len() - 1)
    }
    fn row(
        &mut self,
        name: String,
        coeffs: Vec<(TVar, f64)>,
        sense: Sense,
        rhs: f64,
        block: RowBlock,
    ) {
        self.rows.push(TRow { name, coeffs, sense, rhs, block });
    }
}

/// What multiplies a gated row: the survival-times-switch factor of a line.
enum Gate {
    Uw(TVar),
    U(TVar),
    Omega(TVar),
    One,
}

pub fn recourse_template(inst: &NetworkInstance) -> RecourseTemplate {
    let nt = inst.periods;
    let nm = inst.n_mhers();
    let ne = inst.n_eh();
    let nn = inst.n_nodes();
    let nl = inst.n_lines();
    let mut b = TemplateBuilder { names: Vec::new(), roles: Vec::new(), rows: Vec::new() };

    // --- variables ---
    let gamma: Vec<Vec<Vec<TVar>>> = (0..nm)
        .map(|m| {
            (0..ne)
                .map(|e| {
                    (0..nt)
                        .map(|t| b.var(format!("gamma[{m},{e},{t}]"), TRole::BinaryRecourse))
                        .collect()
                })
                .collect()
        })
        .collect();
    let phi: Vec<Vec<TVar>> = (0..nm)
        .map(|m| {
            (0..nt)
                .map(|t| b.var(format!("travel[{m},{t}]"), TRole::BinaryRecourse))
                .collect()
        })
        .collect();
    let omega: Vec<Option<Vec<TVar>>> = (0..nl)
        .map(|l| {
            if inst.lines[l].switchable {
                Some(
                    (0..nt)
                        .map(|t| b.var(format!("closed[{l},{t}]"), TRole::BinaryRecourse))
                        .collect(),
                )
            } else {
                None
            }
        })
        .collect();
    let u: Vec<TVar> = (0..inst.vulnerable.len())
        .map(|v| b.var(format!("u[{v}]"), TRole::ScenarioU(v)))
        .collect();
    let h0: Vec<TVar> = (0..nm)
        .map(|m| b.var(format!("h0[{m}]"), TRole::ScenarioH0(m)))
        .collect();
    let mut uw = HashMap::new();
    for (v, &l) in inst.vulnerable.iter().enumerate() {
        if inst.lines[l].switchable {
            for t in 0..nt {
                uw.insert((v, t), b.var(format!("uclosed[{v},{t}]"), TRole::ProductUw(v, t)));
            }
        }
    }
    let chi: Vec<TVar> = (0..nm)
        .map(|m| b.var(format!("chi[{m}]"), TRole::ParamChi(m)))
        .collect();
    let g0: Vec<Vec<TVar>> = (0..nm)
        .map(|m| {
            (0..ne)
                .map(|e| b.var(format!("g0[{m},{e}]"), TRole::ParamG0(m, e)))
                .collect()
        })
        .collect();

    let cont = |b: &mut TemplateBuilder, name: String| b.var(name, TRole::Continuous);
    let grid2 = |b: &mut TemplateBuilder, tag: &str, n1: usize| -> Vec<Vec<TVar>> {
        (0..n1)
            .map(|i| (0..nt).map(|t| cont(b, format!("{tag}[{i},{t}]"))).collect())
            .collect()
    };
    let p_flow = grid2(&mut b, "pflow", nl);
    let q_flow = grid2(&mut b, "qflow", nl);
    let volt = grid2(&mut b, "volt", nn);
    let pl = grid2(&mut b, "served_p", nn);
    let ql = grid2(&mut b, "served_q", nn);
    let mut pout: Vec<Option<Vec<TVar>>> = vec![None; nn];
    let mut qout: Vec<Option<Vec<TVar>>> = vec![None; nn];
    for j in 0..nn {
        if inst.is_source(j) {
            pout[j] = Some((0..nt).map(|t| cont(&mut b, format!("node_p[{j},{t}]"))).collect());
            qout[j] = Some((0..nt).map(|t| cont(&mut b, format!("node_q[{j},{t}]"))).collect());
        }
    }
    let gp = grid2(&mut b, "mher_p", nm);
    let gq = grid2(&mut b, "mher_q", nm);
    let storage = grid2(&mut b, "storage", nm);
    let mut psg: Vec<Option<Vec<TVar>>> = vec![None; nn];
    let mut qsg: Vec<Option<Vec<TVar>>> = vec![None; nn];
    for &e in &inst.eh_nodes {
        psg[e] = Some((0..nt).map(|t| cont(&mut b, format!("sg_p[{e},{t}]"))).collect());
        qsg[e] = Some((0..nt).map(|t| cont(&mut b, format!("sg_q[{e},{t}]"))).collect());
    }
    let fict = grid2(&mut b, "fict", nl);
    let mut g_src: Vec<Option<Vec<TVar>>> = vec![None; nn];
    for j in 0..nn {
        if inst.is_source(j) {
            g_src[j] = Some((0..nt).map(|t| cont(&mut b, format!("inject[{j},{t}]"))).collect());
        }
    }
    let gp_link: Vec<Vec<Vec<TVar>>> = (0..nm)
        .map(|m| {
            (0..ne)
                .map(|e| (0..nt).map(|t| cont(&mut b, format!("gp_at[{m},{e},{t}]"))).collect())
                .collect()
        })
        .collect();
    let gq_link: Vec<Vec<Vec<TVar>>> = (0..nm)
        .map(|m| {
            (0..ne)
                .map(|e| (0..nt).map(|t| cont(&mut b, format!("gq_at[{m},{e},{t}]"))).collect())
                .collect()
        })
        .collect();

    let gate = |v_of_line: &dyn Fn(usize) -> Option<usize>, l: usize, t: usize| -> Gate {
        match (v_of_line(l), inst.lines[l].switchable) {
            (Some(v), true) => Gate::Uw(uw[&(v, t)]),
            (Some(v), false) => Gate::U(u[v]),
            (None, true) => Gate::Omega(omega[l].as_ref().unwrap()[t]),
            (None, false) => Gate::One,
        }
    };
    let vul_of = |l: usize| inst.vulnerable.iter().position(|&vl| vl == l);

    // --- Theta rows: routing and radiality on binaries only ---
    for m in 0..nm {
        for t in 0..nt {
            let mut coeffs: Vec<(TVar, f64)> = (0..ne).map(|e| (gamma[m][e][t], 1.0)).collect();
            coeffs.push((chi[m], -1.0));
            b.row(format!("park_once[{m},{t}]"), coeffs, Sense::Le, 0.0, RowBlock::Theta);
        }
    }
    for e in 0..ne {
        for t in 0..nt {
            let coeffs: Vec<(TVar, f64)> = (0..nm).map(|m| (gamma[m][e][t], 1.0)).collect();
            b.row(
                format!("park_cap[{e},{t}]"),
                coeffs,
                Sense::Le,
                inst.parking[inst.eh_nodes[e]] as f64,
                RowBlock::Theta,
            );
        }
    }
    for m in 0..nm {
        for t in 0..nt {
            let mut coeffs: Vec<(TVar, f64)> = vec![(phi[m][t], 1.0)];
            for e in 0..ne {
                coeffs.push((gamma[m][e][t], 1.0));
            }
            coeffs.push((chi[m], -1.0));
            b.row(format!("travel_def[{m},{t}]"), coeffs, Sense::Eq, 0.0, RowBlock::Theta);
        }
    }
    // Travel-time exclusion windows, including from the pre-event position.
    for m in 0..nm {
        for i in 0..ne {
            for j in 0..ne {
                if i == j {
                    continue;
                }
                let tr = inst.fleet.travel[m][i][j] as usize;
                for t0 in 0..=nt.saturating_sub(1) {
                    for tau in 1..=tr {
                        let t1 = t0 + tau; // 1-based arrival when t0 counts from the event
                        if t1 > nt {
                            continue;
                        }
                        let mut coeffs = vec![(gamma[m][j][t1 - 1], 1.0), (chi[m], -1.0)];
                        if t0 == 0 {
                            coeffs.push((g0[m][i], 1.0));
                        } else {
                            coeffs.push((gamma[m][i][t0 - 1], 1.0));
                        }
                        b.row(
                            format!("travel_gap[{m},{i},{j},{t0},{tau}]"),
                            coeffs,
                            Sense::Le,
                            0.0,
                            RowBlock::Theta,
                        );
                    }
                }
            }
        }
    }
    let n_always_closed = inst.lines.iter().filter(|l| !l.switchable).count() as f64;
    for t in 0..nt {
        let coeffs: Vec<(TVar, f64)> = (0..nl)
            .filter_map(|l| omega[l].as_ref().map(|o| (o[t], 1.0)))
            .collect();
        b.row(
            format!("radiality[{t}]"),
            coeffs,
            Sense::Eq,
            (nn - inst.substations.len()) as f64 - n_always_closed,
            RowBlock::Theta,
        );
    }

    // --- Lambda rows: storage dynamics, balances, restoration, outputs ---
    let xi = inst.fleet.conversion_kwh_per_kg;
    for m in 0..nm {
        let unit = &inst.fleet.units[m];
        let burn = inst.period_hours / (unit.efficiency * xi);
        for t in 0..nt {
            let mut coeffs = vec![
                (storage[m][t], 1.0),
                (gp[m][t], burn),
                (phi[m][t], unit.travel_burn_kg_per_period),
            ];
            if t == 0 {
                coeffs.push((h0[m], -1.0));
            } else {
                coeffs.push((storage[m][t - 1], -1.0));
            }
            b.row(format!("storage_dyn[{m},{t}]"), coeffs, Sense::Eq, 0.0, RowBlock::Lambda);
            b.row(
                format!("storage_lo[{m},{t}]"),
                vec![(storage[m][t], 1.0)],
                Sense::Ge,
                unit.h_min_kg,
                RowBlock::Lambda,
            );
            b.row(
                format!("storage_hi[{m},{t}]"),
                vec![(storage[m][t], 1.0)],
                Sense::Le,
                unit.h_max_kg,
                RowBlock::Lambda,
            );
            b.row(format!("gp_lo[{m},{t}]"), vec![(gp[m][t], 1.0)], Sense::Ge, 0.0, RowBlock::Lambda);
            b.row(
                format!("gp_hi[{m},{t}]"),
                vec![(gp[m][t], 1.0)],
                Sense::Le,
                unit.p_max_kw,
                RowBlock::Lambda,
            );
            b.row(format!("gq_lo[{m},{t}]"), vec![(gq[m][t], 1.0)], Sense::Ge, 0.0, RowBlock::Lambda);
            b.row(
                format!("gq_hi[{m},{t}]"),
                vec![(gq[m][t], 1.0)],
                Sense::Le,
                unit.q_max_kvar,
                RowBlock::Lambda,
            );
        }
    }
    for j in 0..nn {
        for t in 0..nt {
            let mut pc: Vec<(TVar, f64)> = Vec::new();
            let mut qc: Vec<(TVar, f64)> = Vec::new();
            for &l in &inst.lines_in[j] {
                pc.push((p_flow[l][t], 1.0));
                qc.push((q_flow[l][t], 1.0));
            }
            for &l in &inst.lines_out[j] {
                pc.push((p_flow[l][t], -1.0));
                qc.push((q_flow[l][t], -1.0));
            }
            pc.push((pl[j][t], -1.0));
            qc.push((ql[j][t], -1.0));
            if let Some(po) = &pout[j] {
                pc.push((po[t], 1.0));
            }
            if let Some(qo) = &qout[j] {
                qc.push((qo[t], 1.0));
            }
            b.row(format!("balance_p[{j},{t}]"), pc, Sense::Eq, 0.0, RowBlock::Lambda);
            b.row(format!("balance_q[{j},{t}]"), qc, Sense::Eq, 0.0, RowBlock::Lambda);
        }
    }
    for j in 0..nn {
        for t in 0..nt {
            let pd = inst.p_load[j][t];
            b.row(format!("served_lo[{j},{t}]"), vec![(pl[j][t], 1.0)], Sense::Ge, 0.0, RowBlock::Lambda);
            b.row(
                format!("served_hi[{j},{t}]"),
                vec![(pl[j][t], 1.0)],
                Sense::Le,
                pd,
                RowBlock::Lambda,
            );
            if t >= 1 {
                let pd_prev = inst.p_load[j][t - 1];
                if pd > 0.0 && pd_prev > 0.0 {
                    b.row(
                        format!("served_monotone[{j},{t}]"),
                        vec![(pl[j][t], 1.0 / pd), (pl[j][t - 1], -1.0 / pd_prev)],
                        Sense::Ge,
                        0.0,
                        RowBlock::Lambda,
                    );
                }
            }
            if pd > 0.0 {
                let ratio = inst.q_load[j][t] / pd;
                b.row(
                    format!("reactive_track[{j},{t}]"),
                    vec![(ql[j][t], 1.0), (pl[j][t], -ratio)],
                    Sense::Eq,
                    0.0,
                    RowBlock::Lambda,
                );
            } else {
                b.row(
                    format!("reactive_track[{j},{t}]"),
                    vec![(ql[j][t], 1.0)],
                    Sense::Eq,
                    0.0,
                    RowBlock::Lambda,
                );
            }
        }
    }
    for &s in &inst.substations {
        for t in 0..nt {
            let po = pout[s].as_ref().unwrap()[t];
            let qo = qout[s].as_ref().unwrap()[t];
            b.row(format!("import_p_lo[{s},{t}]"), vec![(po, 1.0)], Sense::Ge, 0.0, RowBlock::Lambda);
            b.row(
                format!("import_p_hi[{s},{t}]"),
                vec![(po, 1.0)],
                Sense::Le,
                inst.sub_limit[s].0,
                RowBlock::Lambda,
            );
            b.row(format!("import_q_lo[{s},{t}]"), vec![(qo, 1.0)], Sense::Ge, 0.0, RowBlock::Lambda);
            b.row(
                format!("import_q_hi[{s},{t}]"),
                vec![(qo, 1.0)],
                Sense::Le,
                inst.sub_limit[s].1,
                RowBlock::Lambda,
            );
        }
    }
    for (e, &node) in inst.eh_nodes.iter().enumerate() {
        for t in 0..nt {
            let po = pout[node].as_ref().unwrap()[t];
            let qo = qout[node].as_ref().unwrap()[t];
            let mut pc = vec![(po, 1.0), (psg[node].as_ref().unwrap()[t], -1.0)];
            let mut qc = vec![(qo, 1.0), (qsg[node].as_ref().unwrap()[t], -1.0)];
            for m in 0..nm {
                pc.push((gp_link[m][e][t], -1.0));
                qc.push((gq_link[m][e][t], -1.0));
            }
            b.row(format!("eh_out_p[{node},{t}]"), pc, Sense::Eq, 0.0, RowBlock::Lambda);
            b.row(format!("eh_out_q[{node},{t}]"), qc, Sense::Eq, 0.0, RowBlock::Lambda);
            let sgp = psg[node].as_ref().unwrap()[t];
            let sgq = qsg[node].as_ref().unwrap()[t];
            b.row(format!("sg_p_lo[{node},{t}]"), vec![(sgp, 1.0)], Sense::Ge, 0.0, RowBlock::Lambda);
            b.row(
                format!("sg_p_hi[{node},{t}]"),
                vec![(sgp, 1.0)],
                Sense::Le,
                inst.sg_limit[node].0,
                RowBlock::Lambda,
            );
            b.row(format!("sg_q_lo[{node},{t}]"), vec![(sgq, 1.0)], Sense::Ge, 0.0, RowBlock::Lambda);
            b.row(
                format!("sg_q_hi[{node},{t}]"),
                vec![(sgq, 1.0)],
                Sense::Le,
                inst.sg_limit[node].1,
                RowBlock::Lambda,
            );
            // Linearized products: output-at-node equals the unit output when
            // the unit is parked there and zero otherwise.
            for m in 0..nm {
                let pmax = inst.fleet.units[m].p_max_kw;
                let qmax = inst.fleet.units[m].q_max_kvar;
                let (wp, wq) = (gp_link[m][e][t], gq_link[m][e][t]);
                let g = gamma[m][e][t];
                b.row(format!("gp_at_lo[{m},{e},{t}]"), vec![(wp, 1.0)], Sense::Ge, 0.0, RowBlock::Lambda);
                b.row(
                    format!("gp_at_cap[{m},{e},{t}]"),
                    vec![(wp, 1.0), (g, -pmax)],
                    Sense::Le,
                    0.0,
                    RowBlock::Lambda,
                );
                b.row(
                    format!("gp_at_ub[{m},{e},{t}]"),
                    vec![(wp, 1.0), (gp[m][t], -1.0)],
                    Sense::Le,
                    0.0,
                    RowBlock::Lambda,
                );
                b.row(
                    format!("gp_at_lb[{m},{e},{t}]"),
                    vec![(wp, 1.0), (gp[m][t], -1.0), (g, -pmax)],
                    Sense::Ge,
                    -pmax,
                    RowBlock::Lambda,
                );
                b.row(format!("gq_at_lo[{m},{e},{t}]"), vec![(wq, 1.0)], Sense::Ge, 0.0, RowBlock::Lambda);
                b.row(
                    format!("gq_at_cap[{m},{e},{t}]"),
                    vec![(wq, 1.0), (g, -qmax)],
                    Sense::Le,
                    0.0,
                    RowBlock::Lambda,
                );
                b.row(
                    format!("gq_at_ub[{m},{e},{t}]"),
                    vec![(wq, 1.0), (gq[m][t], -1.0)],
                    Sense::Le,
                    0.0,
                    RowBlock::Lambda,
                );
                b.row(
                    format!("gq_at_lb[{m},{e},{t}]"),
                    vec![(wq, 1.0), (gq[m][t], -1.0), (g, -qmax)],
                    Sense::Ge,
                    -qmax,
                    RowBlock::Lambda,
                );
            }
        }
    }

    // --- Pi rows: voltage coupling, flow gates, voltage bounds, fictitious
    // connectivity ---
    let m_volt = inst.big_m_voltage;
    let m_fict = inst.big_m_flow;
    for (l, line) in inst.lines.iter().enumerate() {
        for t in 0..nt {
            let drop_p = line.r_pu / inst.v_ref;
            let drop_q = line.x_pu / inst.v_ref;
            let base = vec![
                (volt[line.from][t], 1.0),
                (volt[line.to][t], -1.0),
                (p_flow[l][t], -drop_p),
                (q_flow[l][t], -drop_q),
            ];
            let mut hi = base.clone();
            let mut hi_rhs = m_volt;
            let mut lo = base;
            let mut lo_rhs = -m_volt;
            match gate(&vul_of, l, t) {
                Gate::Uw(w) => {
                    hi.push((w, m_volt));
                    lo.push((w, -m_volt));
                }
                Gate::U(uv) => {
                    hi.push((uv, m_volt));
                    lo.push((uv, -m_volt));
                }
                Gate::Omega(o) => {
                    hi.push((o, m_volt));
                    lo.push((o, -m_volt));
                }
                Gate::One => {
                    hi_rhs -= m_volt;
                    lo_rhs += m_volt;
                }
            }
            b.row(format!("volt_drop_hi[{l},{t}]"), hi, Sense::Le, hi_rhs, RowBlock::Pi);
            b.row(format!("volt_drop_lo[{l},{t}]"), lo, Sense::Ge, lo_rhs, RowBlock::Pi);

            for (tag, flow, cap) in [
                ("p", p_flow[l][t], line.p_max_kw),
                ("q", q_flow[l][t], line.q_max_kvar),
            ] {
                let mut up = vec![(flow, 1.0)];
                let mut up_rhs = 0.0;
                let mut dn = vec![(flow, 1.0)];
                let mut dn_rhs = 0.0;
                match gate(&vul_of, l, t) {
                    Gate::Uw(w) => {
                        up.push((w, -cap));
                        dn.push((w, cap));
                    }
                    Gate::U(uv) => {
                        up.push((uv, -cap));
                        dn.push((uv, cap));
                    }
                    Gate::Omega(o) => {
                        up.push((o, -cap));
                        dn.push((o, cap));
                    }
                    Gate::One => {
                        up_rhs += cap;
                        dn_rhs -= cap;
                    }
                }
                b.row(format!("flow_{tag}_hi[{l},{t}]"), up, Sense::Le, up_rhs, RowBlock::Pi);
                b.row(format!("flow_{tag}_lo[{l},{t}]"), dn, Sense::Ge, dn_rhs, RowBlock::Pi);
            }
        }
    }
    for j in 0..nn {
        for t in 0..nt {
            b.row(
                format!("volt_lo[{j},{t}]"),
                vec![(volt[j][t], 1.0)],
                Sense::Ge,
                inst.v_min,
                RowBlock::Pi,
            );
            b.row(
                format!("volt_hi[{j},{t}]"),
                vec![(volt[j][t], 1.0)],
                Sense::Le,
                inst.v_max,
                RowBlock::Pi,
            );
        }
    }
    for j in 0..nn {
        for t in 0..nt {
            let mut coeffs: Vec<(TVar, f64)> = Vec::new();
            for &l in &inst.lines_in[j] {
                coeffs.push((fict[l][t], 1.0));
            }
            for &l in &inst.lines_out[j] {
                coeffs.push((fict[l][t], -1.0));
            }
            if inst.is_source(j) {
                coeffs.push((g_src[j].as_ref().unwrap()[t], 1.0));
                b.row(format!("fict_source[{j},{t}]"), coeffs, Sense::Eq, 0.0, RowBlock::Pi);
                let gs = g_src[j].as_ref().unwrap()[t];
                b.row(format!("inject_lo[{j},{t}]"), vec![(gs, 1.0)], Sense::Ge, 0.0, RowBlock::Pi);
                b.row(
                    format!("inject_hi[{j},{t}]"),
                    vec![(gs, 1.0)],
                    Sense::Le,
                    m_fict,
                    RowBlock::Pi,
                );
            } else {
                b.row(format!("fict_demand[{j},{t}]"), coeffs, Sense::Eq, 1.0, RowBlock::Pi);
            }
        }
    }
    for l in 0..nl {
        for t in 0..nt {
            let f = fict[l][t];
            match &omega[l] {
                Some(o) => {
                    b.row(
                        format!("fict_gate_hi[{l},{t}]"),
                        vec![(f, 1.0), (o[t], -m_fict)],
                        Sense::Le,
                        0.0,
                        RowBlock::Pi,
                    );
                    b.row(
                        format!("fict_gate_lo[{l},{t}]"),
                        vec![(f, 1.0), (o[t], m_fict)],
                        Sense::Ge,
                        0.0,
                        RowBlock::Pi,
                    );
                }
                None => {
                    b.row(format!("fict_gate_hi[{l},{t}]"), vec![(f, 1.0)], Sense::Le, m_fict, RowBlock::Pi);
                    b.row(format!("fict_gate_lo[{l},{t}]"), vec![(f, 1.0)], Sense::Ge, -m_fict, RowBlock::Pi);
                }
            }
        }
    }

    // --- objective: restoration ratio ---
    let denom = inst.total_weighted_demand();
    let mut objective = Vec::new();
    for j in 0..nn {
        for t in 0..nt {
            let w = inst.weights[j] / denom;
            if w != 0.0 {
                objective.push((pl[j][t], w));
            }
        }
    }

    let mut lambda_rows = Vec::new();
    let mut pi_rows = Vec::new();
    let mut theta_rows = Vec::new();
    for (i, row) in b.rows.iter().enumerate() {
        match row.block {
            RowBlock::Lambda => lambda_rows.push(i),
            RowBlock::Pi => pi_rows.push(i),
            RowBlock::Theta => theta_rows.push(i),
        }
    }
    let binary_vars: Vec<TVar> = (0..b.names.len())
        .map(TVar)
        .filter(|v| b.roles[v.0] == TRole::BinaryRecourse)
        .collect();

    RecourseTemplate {
        n_vars: b.names.len(),
        names: b.names,
        roles: b.roles,
        rows: b.rows,
        lambda_rows,
        pi_rows,
        theta_rows,
        objective,
        binary_vars,
        u_lines: inst.vulnerable.clone(),
        gamma,
        phi,
        omega,
        u,
        h0,
        uw,
        chi,
        g0,
        p_flow,
        q_flow,
        volt,
        pl,
        ql,
        pout,
        qout,
        gp,
        gq,
        storage,
        psg,
        qsg,
        fict,
        g_src,
        gp_link,
        gq_link,
    }
}

impl RecourseTemplate {
    pub fn dual_dim(&self) -> usize {
        self.lambda_rows.len() + self.pi_rows.len()
    }

    /// Index of a binary-recourse variable inside `Upsilon::bits`.
    fn bit_index(&self, v: TVar) -> usize {
        self.binary_vars
            .iter()
            .position(|&b| b == v)
            .expect("not a binary-recourse variable")
    }

    pub fn upsilon_gamma(&self, ups: &Upsilon, m: usize, e: usize, t: usize) -> bool {
        ups.bits[self.bit_index(self.gamma[m][e][t])]
    }
    pub fn upsilon_omega(&self, ups: &Upsilon, l: usize, t: usize) -> bool {
        match &self.omega[l] {
            Some(o) => ups.bits[self.bit_index(o[t])],
            None => true,
        }
    }
    pub fn upsilon_phi(&self, ups: &Upsilon, m: usize, t: usize) -> bool {
        ups.bits[self.bit_index(self.phi[m][t])]
    }

    /// Scalar value of a template variable under fixed (z, scenario, υ);
    /// continuous variables are not resolvable here.
    fn fixed_value(
        &self,
        role: TRole,
        v: TVar,
        z: &FirstStageDecision,
        s: &Scenario,
        ups: Option<&Upsilon>,
    ) -> Option<f64> {
        match role {
            TRole::Continuous => None,
            TRole::BinaryRecourse => {
                ups.map(|u| if u.bits[self.bit_index(v)] { 1.0 } else { 0.0 })
            }
            TRole::ScenarioU(i) => Some(if s.intact[i] { 1.0 } else { 0.0 }),
            TRole::ScenarioH0(m) => Some(s.h0[m]),
            TRole::ProductUw(i, t) => {
                let uval = if s.intact[i] { 1.0 } else { 0.0 };
                match ups {
                    Some(u) => {
                        let l = // line of vulnerable position i
                            self.u_line_of(i);
                        let o = if self.upsilon_omega(u, l, t) { 1.0 } else { 0.0 };
                        Some(uval * o)
                    }
                    None => None,
                }
            }
            TRole::ParamChi(m) => Some(if z.rented[m] { 1.0 } else { 0.0 }),
            TRole::ParamG0(m, e) => Some(if z.preallocation[m] == Some(e) { 1.0 } else { 0.0 }),
        }
    }

    /// Line index of the v-th vulnerable position (derived from uw keys is
    /// not possible for non-switchable lines, so templates keep a map).
    fn u_line_of(&self, v: usize) -> usize {
        self.u_lines[v]
    }

    /// Full recourse MILP at a fixed first stage and scenario: maximize the
    /// restoration ratio over routing, switching and operation. The pairing
    /// must be admissible: z feasible and the scenario inside the
    /// uncertainty set induced by z.
    pub fn recourse_milp(
        &self,
        inst: &NetworkInstance,
        z: &FirstStageDecision,
        s: &Scenario,
    ) -> Result<(Model, Vec<Binding>), FormulationError> {
        if !inst.first_stage_feasible(z) || !inst.scenario_admissible(z, s) {
            return Err(FormulationError::ScenarioInadmissible);
        }
        let mut model = Model::new("recourse", Objective::Maximize);
        let mut bind: Vec<Binding> = Vec::with_capacity(self.n_vars);
        for v in 0..self.n_vars {
            let role = self.roles[v];
            let b = match role {
                TRole::Continuous => Binding::Var(model.add_continuous(
                    self.names[v].clone(),
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                )),
                TRole::BinaryRecourse => Binding::Var(model.add_binary(self.names[v].clone())),
                TRole::ProductUw(i, t) => {
                    // Survival is data here; the product collapses onto the
                    // switch variable or vanishes.
                    if s.intact[i] {
                        let l = self.u_line_of(i);
                        let o = self.omega[l].as_ref().unwrap()[t];
                        bind_of(&bind, o)
                    } else {
                        Binding::Val(0.0)
                    }
                }
                other => Binding::Val(
                    self.fixed_value(other, TVar(v), z, s, None)
                        .expect("parameter must be resolvable"),
                ),
            };
            bind.push(b);
        }
        for row in &self.rows {
            append_bound_row(&mut model, row, &bind);
        }
        for &(v, c) in &self.objective {
            if let Binding::Var(id) = bind[v.0] {
                model.add_obj(id, c);
            }
        }
        Ok((model, bind))
    }

    /// Inner LP at fixed (υ, scenario): continuous profile only. Rows are
    /// emitted in Lambda-then-Pi order so row index r corresponds to dual
    /// coordinate r. Theta rows are checked against υ and dropped.
    pub fn inner_lp(
        &self,
        inst: &NetworkInstance,
        z: &FirstStageDecision,
        s: &Scenario,
        ups: &Upsilon,
    ) -> Result<Model, FormulationError> {
        let _ = inst;
        let mut model = Model::new("inner_lp", Objective::Maximize);
        let mut bind: Vec<Binding> = Vec::with_capacity(self.n_vars);
        for v in 0..self.n_vars {
            let role = self.roles[v];
            let b = match role {
                TRole::Continuous => Binding::Var(model.add_continuous(
                    self.names[v].clone(),
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                )),
                other => Binding::Val(
                    self.fixed_value(other, TVar(v), z, s, Some(ups))
                        .expect("all binaries fixed"),
                ),
            };
            bind.push(b);
        }
        // Theta feasibility audit.
        for &ri in &self.theta_rows {
            let row = &self.rows[ri];
            let mut lhs = 0.0;
            for &(v, c) in &row.coeffs {
                match bind[v.0] {
                    Binding::Val(val) => lhs += c * val,
                    Binding::Var(_) => unreachable!("theta rows are binary-only"),
                }
            }
            let ok = match row.sense {
                Sense::Le => lhs <= row.rhs + 1e-6,
                Sense::Ge => lhs >= row.rhs - 1e-6,
                Sense::Eq => (lhs - row.rhs).abs() <= 1e-6,
            };
            if !ok {
                return Err(FormulationError::UpsilonInfeasible(row.name.clone()));
            }
        }
        for &ri in self.lambda_rows.iter().chain(self.pi_rows.iter()) {
            append_bound_row(&mut model, &self.rows[ri], &bind);
        }
        for &(v, c) in &self.objective {
            if let Binding::Var(id) = bind[v.0] {
                model.add_obj(id, c);
            }
        }
        Ok(model)
    }

    /// Splits a raw dual vector (aligned with `inner_lp` row order) into the
    /// (λ, π) pair.
    pub fn split_duals(&self, duals: &[f64]) -> DualPoint {
        let nl = self.lambda_rows.len();
        DualPoint {
            lambda: duals[..nl].to_vec(),
            pi: duals[nl..nl + self.pi_rows.len()].to_vec(),
        }
    }

    /// λᵀ(f − G·H₀ − W·γ) + πᵀ(h − L·(ω∘u)) for fixed everything: the scalar
    /// the pair contributes at a scenario. Equals the inner LP optimum when
    /// μ is optimal for (υ, s).
    pub fn dual_objective(&self, mu: &DualPoint, ups: &Upsilon, s: &Scenario) -> f64 {
        let cut = self.pair_cut(mu, ups);
        let mut val = cut.constant;
        for (v, &c) in cut.u_coef.iter().enumerate() {
            if s.intact[v] {
                val += c;
            }
        }
        for (m, &c) in cut.h0_coef.iter().enumerate() {
            val += c * s.h0[m];
        }
        val
    }

    /// The pair row as an affine function of the scenario: value(s) =
    /// constant + Σ_v u_coef[v]·u_v + Σ_m h0_coef[m]·H0_m. First-stage
    /// parameters never enter dualized rows, so the cut is independent of z.
    pub fn pair_cut(&self, mu: &DualPoint, ups: &Upsilon) -> PairCut {
        let mut constant = 0.0;
        let mut u_coef = vec![0.0; self.u.len()];
        let mut h0_coef = vec![0.0; self.h0.len()];
        for (pos, &ri) in self
            .lambda_rows
            .iter()
            .chain(self.pi_rows.iter())
            .enumerate()
        {
            let m = if pos < self.lambda_rows.len() {
                mu.lambda[pos]
            } else {
                mu.pi[pos - self.lambda_rows.len()]
            };
            if m == 0.0 {
                continue;
            }
            let row = &self.rows[ri];
            let mut eff = row.rhs;
            for &(v, c) in &row.coeffs {
                match self.roles[v.0] {
                    TRole::Continuous => {}
                    TRole::BinaryRecourse => {
                        if ups.bits[self.bit_index(v)] {
                            eff -= c;
                        }
                    }
                    TRole::ScenarioU(i) => u_coef[i] -= m * c,
                    TRole::ScenarioH0(i) => h0_coef[i] -= m * c,
                    TRole::ProductUw(i, t) => {
                        let l = self.u_line_of(i);
                        if self.upsilon_omega(ups, l, t) {
                            u_coef[i] -= m * c;
                        }
                    }
                    TRole::ParamChi(_) | TRole::ParamG0(_, _) => {
                        unreachable!("first-stage parameters only appear in Theta rows")
                    }
                }
            }
            constant += m * eff;
        }
        PairCut { constant, u_coef, h0_coef }
    }

    /// Residual of dual feasibility Fᵀλ + Hᵀπ = q; the largest violation over
    /// continuous template variables.
    pub fn dual_feasibility_residual(&self, mu: &DualPoint) -> f64 {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for (pos, &ri) in self
            .lambda_rows
            .iter()
            .chain(self.pi_rows.iter())
            .enumerate()
        {
            let m = if pos < self.lambda_rows.len() {
                mu.lambda[pos]
            } else {
                mu.pi[pos - self.lambda_rows.len()]
            };
            if m == 0.0 {
                continue;
            }
            for &(v, c) in &self.rows[ri].coeffs {
                if self.roles[v.0] == TRole::Continuous {
                    *acc.entry(v.0).or_insert(0.0) += m * c;
                }
            }
        }
        let mut q = vec![0.0; self.n_vars];
        for &(v, c) in &self.objective {
            q[v.0] = c;
        }
        let mut worst = 0.0f64;
        for v in 0..self.n_vars {
            if self.roles[v] == TRole::Continuous {
                let lhs = acc.get(&v).copied().unwrap_or(0.0);
                worst = worst.max((lhs - q[v]).abs());
            }
        }
        worst
    }

    /// Upsilon carried by a recourse MILP solution.
    pub fn upsilon_from_assignment(&self, bind: &[Binding], x: &[f64]) -> Upsilon {
        let bits = self
            .binary_vars
            .iter()
            .map(|&v| match bind[v.0] {
                Binding::Var(id) => x[id.idx()] > 0.5,
                Binding::Val(val) => val > 0.5,
            })
            .collect();
        Upsilon { bits }
    }

    /// Structured plan from a recourse solution.
    pub fn extract_plan(
        &self,
        inst: &NetworkInstance,
        bind: &[Binding],
        sol: &MilpSolution,
    ) -> RecoursePlan {
        let val = |v: TVar| -> f64 {
            match bind[v.0] {
                Binding::Var(id) => sol.assignment[id.idx()],
                Binding::Val(x) => x,
            }
        };
        let nt = inst.periods;
        let nm = inst.n_mhers();
        let nl = inst.n_lines();
        let nn = inst.n_nodes();
        let position = (0..nm)
            .map(|m| {
                (0..nt)
                    .map(|t| (0..inst.n_eh()).find(|&e| val(self.gamma[m][e][t]) > 0.5))
                    .collect()
            })
            .collect();
        let traveling = (0..nm)
            .map(|m| (0..nt).map(|t| val(self.phi[m][t]) > 0.5).collect())
            .collect();
        let closed = (0..nl)
            .map(|l| {
                (0..nt)
                    .map(|t| match &self.omega[l] {
                        Some(o) => val(o[t]) > 0.5,
                        None => true,
                    })
                    .collect()
            })
            .collect();
        let grid = |vars: &Vec<Vec<TVar>>| -> Vec<Vec<f64>> {
            vars.iter().map(|row| row.iter().map(|&v| val(v)).collect()).collect()
        };
        let opt_grid = |vars: &Vec<Option<Vec<TVar>>>| -> Vec<Vec<f64>> {
            (0..vars.len())
                .map(|j| match &vars[j] {
                    Some(vs) => vs.iter().map(|&v| val(v)).collect(),
                    None => vec![0.0; nt],
                })
                .collect()
        };
        let served_p = grid(&self.pl);
        let value = crate::instance::restoration_ratio(inst, &served_p).unwrap_or(0.0);
        let _ = nn;
        RecoursePlan {
            position,
            traveling,
            closed,
            p_flow: grid(&self.p_flow),
            q_flow: grid(&self.q_flow),
            voltage: grid(&self.volt),
            served_p,
            served_q: grid(&self.ql),
            node_p: opt_grid(&self.pout),
            node_q: opt_grid(&self.qout),
            mher_p: grid(&self.gp),
            mher_q: grid(&self.gq),
            storage: grid(&self.storage),
            sg_p: opt_grid(&self.psg),
            sg_q: opt_grid(&self.qsg),
            fict_flow: grid(&self.fict),
            fict_inject: opt_grid(&self.g_src),
            value,
        }
    }
}

fn bind_of(bind: &[Binding], v: TVar) -> Binding {
    bind[v.0]
}

/// Appends a template row into a model under a binding, folding fixed values
/// into the right-hand side.
pub fn append_bound_row(model: &mut Model, row: &TRow, bind: &[Binding]) {
    let mut coeffs: Vec<(VarId, f64)> = Vec::with_capacity(row.coeffs.len());
    let mut rhs = row.rhs;
    for &(v, c) in &row.coeffs {
        match bind[v.0] {
            Binding::Var(id) => coeffs.push((id, c)),
            Binding::Val(x) => rhs -= c * x,
        }
    }
    if coeffs.is_empty() {
        return;
    }
    model.add_row(row.name.clone(), coeffs, row.sense, rhs);
}

/// Affine representation of a pair row over scenario coordinates.
#[derive(Debug, Clone)]
pub struct PairCut {
    pub constant: f64,
    pub u_coef: Vec<f64>,
    pub h0_coef: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Scenario-parametric solvers
// ---------------------------------------------------------------------------

/// The full recourse program with the scenario entering through variable
/// bounds: damage flags and initial storage are bound-fixed variables, so a
/// scenario sweep reuses one branch-and-bound (and its warm basis) instead
/// of rebuilding the model.
pub struct RecourseMachine {
    bind: Vec<Binding>,
    bb: crate::solver::BranchAndBound,
    u_cols: Vec<usize>,
    h0_cols: Vec<usize>,
}

impl RecourseMachine {
    pub fn new(
        inst: &NetworkInstance,
        template: &RecourseTemplate,
        z: &FirstStageDecision,
    ) -> RecourseMachine {
        let mut model = Model::new("recourse_sweep", Objective::Maximize);
        let mut bind: Vec<Binding> = Vec::with_capacity(template.n_vars);
        let mut u_cols = vec![0usize; template.u.len()];
        let mut h0_cols = vec![0usize; template.h0.len()];
        for v in 0..template.n_vars {
            let role = template.roles[v];
            let b = match role {
                TRole::Continuous => Binding::Var(model.add_continuous(
                    template.names[v].clone(),
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                )),
                TRole::BinaryRecourse => Binding::Var(model.add_binary(template.names[v].clone())),
                TRole::ScenarioU(i) => {
                    let id = model.add_binary(template.names[v].clone());
                    u_cols[i] = id.idx();
                    Binding::Var(id)
                }
                TRole::ScenarioH0(m) => {
                    let id = model.add_continuous(
                        template.names[v].clone(),
                        0.0,
                        inst.fleet.units[m].h_max_kg,
                    );
                    h0_cols[m] = id.idx();
                    Binding::Var(id)
                }
                TRole::ProductUw(i, t) => {
                    let w = model.add_continuous(template.names[v].clone(), 0.0, 1.0);
                    let uvar = match bind[template.u[i].0] {
                        Binding::Var(id) => id,
                        _ => unreachable!(),
                    };
                    let l = template.u_lines[i];
                    let ovar = match bind[template.omega[l].as_ref().unwrap()[t].0] {
                        Binding::Var(id) => id,
                        _ => unreachable!(),
                    };
                    model.add_row(
                        format!("{}_le_u", template.names[v]),
                        vec![(w, 1.0), (uvar, -1.0)],
                        Sense::Le,
                        0.0,
                    );
                    model.add_row(
                        format!("{}_le_w", template.names[v]),
                        vec![(w, 1.0), (ovar, -1.0)],
                        Sense::Le,
                        0.0,
                    );
                    model.add_row(
                        format!("{}_ge", template.names[v]),
                        vec![(w, 1.0), (uvar, -1.0), (ovar, -1.0)],
                        Sense::Ge,
                        -1.0,
                    );
                    Binding::Var(w)
                }
                TRole::ParamChi(m) => Binding::Val(if z.rented[m] { 1.0 } else { 0.0 }),
                TRole::ParamG0(m, e) => {
                    Binding::Val(if z.preallocation[m] == Some(e) { 1.0 } else { 0.0 })
                }
            };
            bind.push(b);
        }
        for row in &template.rows {
            append_bound_row(&mut model, row, &bind);
        }
        for &(v, c) in &template.objective {
            if let Binding::Var(id) = bind[v.0] {
                model.add_obj(id, c);
            }
        }
        let mut bb = crate::solver::BranchAndBound::new(&model);
        bb.seed_with(base_plan_fixing(inst, template, z, &bind));
        RecourseMachine { bind, bb, u_cols, h0_cols }
    }

    /// Solves the recourse program at a scenario; damage and storage arrive
    /// as bound fixes.
    pub fn solve_at(
        &mut self,
        s: &Scenario,
        params: &crate::solver::SolveParams,
    ) -> Result<crate::solver::MilpSolution, crate::solver::SolverError> {
        for (i, &col) in self.u_cols.iter().enumerate() {
            let v = if s.intact[i] { 1.0 } else { 0.0 };
            self.bb.set_base_bounds(col, v, v);
        }
        for (m, &col) in self.h0_cols.iter().enumerate() {
            self.bb.set_base_bounds(col, s.h0[m], s.h0[m]);
        }
        self.bb.solve(params)
    }

    pub fn bindings(&self) -> &[Binding] {
        &self.bind
    }
}

/// The always-feasible fallback plan as a binary fixing: every unit sits at
/// its pre-event position (or the first spot with spare parking, else keeps
/// traveling), ties stay open, everything else stays closed. Seeding the
/// search with its completion gives the tree an incumbent immediately.
fn base_plan_fixing(
    inst: &NetworkInstance,
    template: &RecourseTemplate,
    z: &FirstStageDecision,
    bind: &[Binding],
) -> Vec<(usize, f64)> {
    let col = |v: TVar| -> usize {
        match bind[v.0] {
            Binding::Var(id) => id.idx(),
            Binding::Val(_) => unreachable!("binary recourse is always a variable here"),
        }
    };
    let mut fixing = Vec::new();
    let mut occupancy = vec![0u32; inst.n_eh()];
    for m in 0..inst.n_mhers() {
        if let Some(e) = z.preallocation[m] {
            occupancy[e] += 1;
        }
    }
    for m in 0..inst.n_mhers() {
        let spot = if !z.rented[m] {
            None
        } else if let Some(e) = z.preallocation[m] {
            Some(e)
        } else {
            let found = (0..inst.n_eh())
                .find(|&e| occupancy[e] < inst.parking[inst.eh_nodes[e]]);
            if let Some(e) = found {
                occupancy[e] += 1;
            }
            found
        };
        for e in 0..inst.n_eh() {
            for t in 0..inst.periods {
                fixing.push((col(template.gamma[m][e][t]), if spot == Some(e) { 1.0 } else { 0.0 }));
            }
        }
        let travels = z.rented[m] && spot.is_none();
        for t in 0..inst.periods {
            fixing.push((col(template.phi[m][t]), if travels { 1.0 } else { 0.0 }));
        }
    }
    for (l, line) in inst.lines.iter().enumerate() {
        if let Some(omega) = &template.omega[l] {
            for t in 0..inst.periods {
                fixing.push((col(omega[t]), if line.tie { 0.0 } else { 1.0 }));
            }
        }
    }
    fixing
}

/// Per-row affine right-hand side over scenario coordinates.
struct RhsAffine {
    constant: f64,
    u_terms: Vec<(usize, f64)>,
    h0_terms: Vec<(usize, f64)>,
}

impl RhsAffine {
    fn at(&self, s: &Scenario) -> f64 {
        let mut eff = self.constant;
        for &(i, c) in &self.u_terms {
            if s.intact[i] {
                eff += c;
            }
        }
        for &(m, c) in &self.h0_terms {
            eff += c * s.h0[m];
        }
        eff
    }
}

/// A single-variable row folded into a column bound.
struct FoldedBound {
    col: usize,
    coef: f64,
    sense: Sense,
    rhs: RhsAffine,
}

/// The inner LP of one discrete decision, re-solvable across scenarios by
/// moving bounds only (the scenario never touches coefficients once the
/// switching pattern is fixed). Single-variable rows act through column
/// bounds; the value is identical to the full-row program, which stays the
/// reference wherever duals are extracted.
pub struct InnerLpMachine {
    spx: crate::simplex::Simplex,
    /// Kept (multi-variable) rows with their scenario-affine sides.
    kept: Vec<(Sense, RhsAffine)>,
    folds: Vec<FoldedBound>,
    /// Columns affected by folds with their static base bounds.
    fold_cols: Vec<(usize, f64, f64)>,
}

impl RecourseTemplate {
    fn row_affine(&self, ri: usize, ups: &Upsilon) -> RhsAffine {
        let row = &self.rows[ri];
        let mut constant = row.rhs;
        let mut u_terms = Vec::new();
        let mut h0_terms = Vec::new();
        for &(v, c) in &row.coeffs {
            match self.roles[v.0] {
                TRole::Continuous => {}
                TRole::BinaryRecourse => {
                    if ups.bits[self.bit_index(v)] {
                        constant -= c;
                    }
                }
                TRole::ScenarioU(i) => u_terms.push((i, -c)),
                TRole::ScenarioH0(m) => h0_terms.push((m, -c)),
                TRole::ProductUw(i, t) => {
                    let l = self.u_line_of(i);
                    if self.upsilon_omega(ups, l, t) {
                        u_terms.push((i, -c));
                    }
                }
                TRole::ParamChi(_) | TRole::ParamG0(_, _) => {
                    unreachable!("first-stage parameters only appear in Theta rows")
                }
            }
        }
        RhsAffine { constant, u_terms, h0_terms }
    }

    /// Builds the sweep solver for one discrete decision; fails if the
    /// decision violates its own constraint set.
    pub fn inner_lp_machine(
        &self,
        inst: &NetworkInstance,
        z: &FirstStageDecision,
        ups: &Upsilon,
    ) -> Result<InnerLpMachine, FormulationError> {
        // A placeholder scenario instantiates the structure; every bound is
        // rewritten before each solve.
        let placeholder = Scenario {
            intact: vec![true; self.u.len()],
            h0: vec![0.0; self.h0.len()],
        };
        let full = self.inner_lp(inst, z, &placeholder, ups)?;
        let mut reduced = full.clone();
        reduced.rows = Vec::new();
        let mut kept = Vec::new();
        let mut folds = Vec::new();
        for (pos, &ri) in self
            .lambda_rows
            .iter()
            .chain(self.pi_rows.iter())
            .enumerate()
        {
            let row = &full.rows[pos];
            let affine = self.row_affine(ri, ups);
            if row.coeffs.len() == 1 {
                let (v, a) = row.coeffs[0];
                folds.push(FoldedBound { col: v.idx(), coef: a, sense: row.sense, rhs: affine });
            } else {
                kept.push((row.sense, affine));
                reduced.rows.push(row.clone());
            }
        }
        let mut fold_cols: Vec<(usize, f64, f64)> = Vec::new();
        for f in &folds {
            if !fold_cols.iter().any(|&(c, _, _)| c == f.col) {
                let var = &reduced.vars[f.col];
                fold_cols.push((f.col, var.lb, var.ub));
            }
        }
        let form = crate::simplex::LpForm::from_model(&reduced);
        Ok(InnerLpMachine {
            spx: crate::simplex::Simplex::new(form),
            kept,
            folds,
            fold_cols,
        })
    }
}

impl InnerLpMachine {
    /// Optimal inner-LP value at a scenario, or None when the fixed decision
    /// admits no feasible operation there.
    pub fn value_at(&mut self, s: &Scenario) -> Option<f64> {
        for (r, (sense, affine)) in self.kept.iter().enumerate() {
            let eff = affine.at(s);
            let (lo, hi) = match sense {
                Sense::Le => (f64::NEG_INFINITY, eff),
                Sense::Ge => (eff, f64::INFINITY),
                Sense::Eq => (eff, eff),
            };
            self.spx.set_row_bounds(r, lo, hi);
        }
        for &(col, lb, ub) in &self.fold_cols {
            self.spx.set_col_bounds(col, lb, ub);
        }
        for f in &self.folds {
            let b = f.rhs.at(s) / f.coef;
            let (lo, hi) = bounds_of(&self.spx, f.col);
            let (mut nlo, mut nhi) = (lo, hi);
            match (f.sense, f.coef > 0.0) {
                (Sense::Le, true) | (Sense::Ge, false) => nhi = nhi.min(b),
                (Sense::Ge, true) | (Sense::Le, false) => nlo = nlo.max(b),
                (Sense::Eq, _) => {
                    nlo = nlo.max(b);
                    nhi = nhi.min(b);
                }
            }
            if nlo > nhi + 1e-9 {
                return None; // bound conflict: infeasible at this scenario
            }
            self.spx.set_col_bounds(f.col, nlo, nhi.max(nlo));
        }
        match self.spx.solve() {
            crate::simplex::LpStatus::Optimal => Some(self.spx.current_objective()),
            _ => None,
        }
    }
}

fn bounds_of(spx: &crate::simplex::Simplex, col: usize) -> (f64, f64) {
    spx.col_bounds(col)
}

// ---------------------------------------------------------------------------
// Dual polytope
// ---------------------------------------------------------------------------

/// Builds the fixed dual polytope of the inner LP: sign-constrained
/// multipliers per Lambda/Pi row and the dual-feasibility equalities, one per
/// continuous template variable. Independent of any first-stage or scenario
/// data by construction.
pub fn build_dual_polytope(template: &RecourseTemplate) -> (Model, Vec<VarId>) {
    let mut model = Model::new("dual_polytope", Objective::Minimize);
    let mut mu_vars = Vec::with_capacity(template.dual_dim());
    for &ri in template.lambda_rows.iter().chain(template.pi_rows.iter()) {
        let row = &template.rows[ri];
        // Maximization primal: <= rows get nonnegative duals, >= rows
        // nonpositive, equalities free.
        let (lb, ub) = match row.sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (f64::NEG_INFINITY, f64::INFINITY),
        };
        mu_vars.push(model.add_continuous(format!("mu[{}]", row.name), lb, ub));
    }
    let mut q = vec![0.0; template.n_vars];
    for &(v, c) in &template.objective {
        q[v.0] = c;
    }
    for v in 0..template.n_vars {
        if template.roles[v] != TRole::Continuous {
            continue;
        }
        let mut coeffs: Vec<(VarId, f64)> = Vec::new();
        for (pos, &ri) in template
            .lambda_rows
            .iter()
            .chain(template.pi_rows.iter())
            .enumerate()
        {
            for &(tv, c) in &template.rows[ri].coeffs {
                if tv.0 == v {
                    coeffs.push((mu_vars[pos], c));
                }
            }
        }
        model.add_row(
            format!("stationarity[{}]", template.names[v]),
            coeffs,
            Sense::Eq,
            q[v],
        );
    }
    (model, mu_vars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::load_instance;
    use crate::model::VarKind;
    use crate::solver::{solve_lp_with_duals, solve_milp, SolveParams, SolveStatus};
    use crate::suites::fixtures;

    fn tri() -> NetworkInstance {
        load_instance(&fixtures::tri_node_json()).unwrap()
    }

    fn rent_first(inst: &NetworkInstance) -> FirstStageDecision {
        let mut z = FirstStageDecision::all_zero(inst);
        z.rented[0] = true;
        z.preallocation[0] = Some(0);
        z
    }

    fn intact(inst: &NetworkInstance, z: &FirstStageDecision) -> Scenario {
        Scenario {
            intact: vec![true; inst.vulnerable.len()],
            h0: (0..inst.n_mhers())
                .map(|m| if z.rented[m] { inst.fleet.units[m].h_max_kg } else { 0.0 })
                .collect(),
        }
    }

    #[test]
    fn first_stage_counts() {
        // 2 vulnerable lines, 1 unit, 1 EH node with cap 1: one budget row,
        // one pre-allocation row, one parking row; 2+1+1 binaries.
        let inst = tri();
        let (model, vars) = build_first_stage(&inst);
        assert_eq!(model.n_rows(), 3);
        assert_eq!(model.n_vars(), 4);
        assert!(model.vars.iter().all(|v| v.kind == VarKind::Binary));
        assert_eq!(vars.harden.len(), 2);
        // Rental cost lands on the rental flag.
        assert_eq!(model.vars[vars.rent[0].idx()].obj, 8_300.0);
    }

    #[test]
    fn zero_budget_admits_only_zero_plan() {
        let mut doc: crate::instance::InstanceDoc =
            serde_json::from_str(&fixtures::tri_node_json()).unwrap();
        doc.costs.budget = 0.0;
        let inst = crate::instance::instance_from_doc(&doc).unwrap();
        let (model, vars) = build_first_stage(&inst);
        let sol = solve_milp(&model, &SolveParams::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
        let z = decision_from_assignment(&inst, &vars, &sol.assignment);
        assert!(z.hardened.iter().all(|&h| !h));
        assert!(z.rented.iter().all(|&r| !r));
    }

    #[test]
    fn undamaged_network_restores_everything() {
        let inst = tri();
        let z = rent_first(&inst);
        let template = recourse_template(&inst);
        let s = intact(&inst, &z);
        let (model, bind) = template.recourse_milp(&inst, &z, &s).unwrap();
        let sol = solve_milp(&model, &SolveParams::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-8, "objective {}", sol.objective);
        let plan = template.extract_plan(&inst, &bind, &sol);
        assert!(plan.physics_violations(&inst, &s).is_empty());
    }

    #[test]
    fn hydrogen_drop_follows_conversion() {
        // A unit discharging 200 kW for one 1-hour period burns
        // 200 / (0.52 * 38.9) kg, about 9.886.
        let inst = tri();
        let template = recourse_template(&inst);
        let burn = inst.period_hours / (0.52 * 38.9);
        let row = template
            .rows
            .iter()
            .find(|r| r.name == "storage_dyn[0,0]")
            .unwrap();
        let gp_coef = row
            .coeffs
            .iter()
            .find(|&&(v, _)| v == template.gp[0][0])
            .unwrap()
            .1;
        assert!((gp_coef - burn).abs() < 1e-12);
        assert!((200.0 * burn - 9.886).abs() < 5e-3);

        // Against a damaged feeder the unit must discharge; the trajectory
        // drops accordingly.
        let mut z = rent_first(&inst);
        z.hardened = vec![false, false];
        let s = Scenario { intact: vec![true, false], h0: vec![30.0] };
        let (model, bind) = template.recourse_milp(&inst, &z, &s).unwrap();
        let sol = solve_milp(&model, &SolveParams::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let plan = template.extract_plan(&inst, &bind, &sol);
        let served_at_3: f64 = plan.served_p[2].iter().sum();
        assert!(served_at_3 > 0.0, "EH node should be fed by the unit");
        let drop = s.h0[0] - plan.storage[0][0];
        assert!(
            (drop - plan.mher_p[0][0] * burn).abs() < 1e-9,
            "drop {drop} vs discharge {}",
            plan.mher_p[0][0]
        );
    }

    #[test]
    fn unparked_rented_unit_travels() {
        let inst = tri();
        let template = recourse_template(&inst);
        let z = rent_first(&inst);
        let s = intact(&inst, &z);
        // Force gamma = 0 everywhere: traveling must absorb the rental flag.
        let (mut model, bind) = template.recourse_milp(&inst, &z, &s).unwrap();
        for e in 0..inst.n_eh() {
            for t in 0..inst.periods {
                if let Binding::Var(id) = bind[template.gamma[0][e][t].0] {
                    model.set_bounds(id, 0.0, 0.0);
                }
            }
        }
        let sol = solve_milp(&model, &SolveParams::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        for t in 0..inst.periods {
            if let Binding::Var(id) = bind[template.phi[0][t].0] {
                assert!(sol.assignment[id.idx()] > 0.5, "must travel at t={t}");
            }
        }
    }

    #[test]
    fn product_linearization_cases() {
        // a = 0 forces w = 0.
        let mut m = Model::new("t", Objective::Maximize);
        let a = m.add_binary("a");
        let b = m.add_continuous("b", 0.0, 200.0);
        let w = linearize_product(&mut m, "w", a, b, ProductKind::BinaryTimesContinuous { bound: 200.0 })
            .unwrap();
        m.set_obj(w, 1.0);
        m.set_bounds(a, 0.0, 0.0);
        m.set_bounds(b, 137.5, 137.5);
        let sol = solve_milp(&m, &SolveParams::default()).unwrap();
        assert_eq!(sol.assignment[w.idx()], 0.0);

        // a = 1 pins w to b.
        let mut m = Model::new("t", Objective::Maximize);
        let a = m.add_binary("a");
        let b = m.add_continuous("b", 137.5, 137.5);
        let w = linearize_product(&mut m, "w", a, b, ProductKind::BinaryTimesContinuous { bound: 200.0 })
            .unwrap();
        m.set_obj(w, 1.0);
        m.set_bounds(a, 1.0, 1.0);
        let sol = solve_milp(&m, &SolveParams::default()).unwrap();
        assert!((sol.assignment[w.idx()] - 137.5).abs() < 1e-9);

        // Binary conjunction truth table corner.
        let mut m = Model::new("t", Objective::Maximize);
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        let w = linearize_product(&mut m, "w", a, b, ProductKind::BinaryTimesBinary).unwrap();
        m.set_obj(w, 1.0);
        m.set_bounds(a, 1.0, 1.0);
        m.set_bounds(b, 1.0, 1.0);
        let sol = solve_milp(&m, &SolveParams::default()).unwrap();
        assert!((sol.assignment[w.idx()] - 1.0).abs() < 1e-9);

        // Nonpositive bound rejected.
        let mut m = Model::new("t", Objective::Maximize);
        let a = m.add_binary("a");
        let b = m.add_continuous("b", 0.0, 1.0);
        assert!(matches!(
            linearize_product(&mut m, "w", a, b, ProductKind::BinaryTimesContinuous { bound: 0.0 }),
            Err(FormulationError::NonpositiveBound(_))
        ));
    }

    #[test]
    fn linearization_exact_over_all_binary_points() {
        // Optimal value of the linearized model equals the literally
        // evaluated product at every binary assignment.
        let bound = 7.5;
        for a_val in [0.0, 1.0] {
            for b_val in [0.0, 3.25, bound] {
                let mut m = Model::new("t", Objective::Maximize);
                let a = m.add_binary("a");
                let b = m.add_continuous("b", b_val, b_val);
                let w =
                    linearize_product(&mut m, "w", a, b, ProductKind::BinaryTimesContinuous { bound })
                        .unwrap();
                m.set_obj(w, 1.0);
                m.set_bounds(a, a_val, a_val);
                let sol = solve_milp(&m, &SolveParams::default()).unwrap();
                assert!((sol.objective - a_val * b_val).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dual_polytope_single_row_lp() {
        // {max y : y <= 3} has the unit dual on its only row.
        let mut m = Model::new("t", Objective::Maximize);
        let y = m.add_continuous("y", f64::NEG_INFINITY, f64::INFINITY);
        m.set_obj(y, 1.0);
        m.add_row("cap", vec![(y, 1.0)], Sense::Le, 3.0);
        let (_, duals) = solve_lp_with_duals(&m).unwrap();
        assert!((duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dual_polytope_matches_template_rows() {
        let inst = tri();
        let template = recourse_template(&inst);
        let (dual_model, mu_vars) = build_dual_polytope(&template);
        assert_eq!(mu_vars.len(), template.dual_dim());
        assert_eq!(
            template.dual_dim(),
            template.lambda_rows.len() + template.pi_rows.len()
        );
        // No first-stage or scenario symbol leaks into the dual system.
        for v in &dual_model.vars {
            assert!(v.name.starts_with("mu["), "unexpected variable {}", v.name);
        }
        for row in &dual_model.rows {
            assert!(row.name.starts_with("stationarity["));
        }
        // The stationarity system is feasible (a dual point exists because
        // the primal is bounded), checked by solving it.
        let sol = solve_milp(&dual_model, &SolveParams::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
    }

    #[test]
    fn strong_duality_on_inner_lp() {
        let inst = tri();
        let template = recourse_template(&inst);
        let z = rent_first(&inst);
        let s = Scenario { intact: vec![false, true], h0: vec![27.0] };
        let (model, bind) = template.recourse_milp(&inst, &z, &s).unwrap();
        let sol = solve_milp(&model, &SolveParams::default()).unwrap();
        let ups = template.upsilon_from_assignment(&bind, &sol.assignment);
        let lp = template.inner_lp(&inst, &z, &s, &ups).unwrap();
        let (lp_sol, duals) = solve_lp_with_duals(&lp).unwrap();
        assert!((lp_sol.objective - sol.objective).abs() < 1e-8);
        let mu = template.split_duals(&duals);
        assert!(template.dual_feasibility_residual(&mu) <= 1e-8);
        let dual_obj = template.dual_objective(&mu, &ups, &s);
        assert!(
            (dual_obj - lp_sol.objective).abs() <= 1e-8,
            "dual {} vs primal {}",
            dual_obj,
            lp_sol.objective
        );
        // Zero multipliers always evaluate to zero.
        let zero = DualPoint {
            lambda: vec![0.0; template.lambda_rows.len()],
            pi: vec![0.0; template.pi_rows.len()],
        };
        assert_eq!(template.dual_objective(&zero, &ups, &s), 0.0);
        // Weak duality: lowering the available storage cannot raise the
        // bound the fixed multipliers certify.
        let mut s_low = s.clone();
        s_low.h0[0] = 21.0;
        assert!(template.dual_objective(&mu, &ups, &s_low) <= dual_obj + 1e-9);
        // Basic dual: support is no larger than the number of primal
        // variables.
        let nnz = mu.lambda.iter().chain(mu.pi.iter()).filter(|&&v| v != 0.0).count();
        let n_cont = template
            .roles
            .iter()
            .filter(|r| matches!(r, TRole::Continuous))
            .count();
        assert!(nnz <= n_cont, "{nnz} nonzero duals for {n_cont} variables");
    }

    #[test]
    fn mismatched_scenario_rejected() {
        let inst = tri();
        let template = recourse_template(&inst);
        let z = FirstStageDecision::all_zero(&inst);
        // Storage without rental violates the uncertainty set.
        let s = Scenario { intact: vec![true, true], h0: vec![30.0] };
        assert!(matches!(
            template.recourse_milp(&inst, &z, &s),
            Err(FormulationError::ScenarioInadmissible)
        ));
    }

    #[test]
    fn pair_cut_is_affine_in_scenario() {
        let inst = tri();
        let template = recourse_template(&inst);
        let z = rent_first(&inst);
        let s = Scenario { intact: vec![true, false], h0: vec![30.0] };
        let (model, bind) = template.recourse_milp(&inst, &z, &s).unwrap();
        let sol = solve_milp(&model, &SolveParams::default()).unwrap();
        let ups = template.upsilon_from_assignment(&bind, &sol.assignment);
        let lp = template.inner_lp(&inst, &z, &s, &ups).unwrap();
        let (_, duals) = solve_lp_with_duals(&lp).unwrap();
        let mu = template.split_duals(&duals);
        let cut = template.pair_cut(&mu, &ups);
        for probe in [
            Scenario { intact: vec![true, true], h0: vec![27.0] },
            Scenario { intact: vec![false, true], h0: vec![21.0] },
        ] {
            let direct = template.dual_objective(&mu, &ups, &probe);
            let mut affine = cut.constant;
            for (v, &c) in cut.u_coef.iter().enumerate() {
                if probe.intact[v] {
                    affine += c;
                }
            }
            for (m, &c) in cut.h0_coef.iter().enumerate() {
                affine += c * probe.h0[m];
            }
            assert!((direct - affine).abs() < 1e-10);
        }
    }
}
