//! Nested column-and-constraint generation.
//!
//! The outer loop proposes first-stage plans from a master that carries, per
//! past iteration, a full copy of the recourse program tied to a
//! worst-scenario optimality block. The inner loop evaluates a fixed plan:
//! it alternates between the scenario master (minimize the pair-set upper
//! envelope over the uncertainty set) and the recourse subproblem (evaluate a
//! candidate scenario exactly), then runs correction rounds that resolve
//! ties among optimal scenarios. Both enhancement strategies are optional:
//! the auxiliary singleton block pinning the latest worst damage pattern,
//! and warm-starting the inner loop from the master's recourse decisions.

use crate::ddu::{
    append_ou_block, append_ou_prime_block, enumerate_scenario_vertices, DduError, FirstStage,
    OuBlockVars,
};
use crate::formulation::{
    append_bound_row, append_first_stage, decision_from_assignment, recourse_template, Binding,
    DualPoint, FirstStageVars, FormulationError, RecourseTemplate, TRole, Upsilon, VuPair,
    VuPairSet,
};
use crate::instance::{FirstStageDecision, NetworkInstance, RecoursePlan, Scenario};
use crate::model::{Model, Objective, Sense, VarId};
use crate::solver::{solve_lp_with_duals, solve_milp, SolveParams, SolveStatus, SolverError};
use serde::Serialize;
use std::time::Instant;
use thiserror::Error;

/// Certification slack shared by the resilience comparisons.
pub const RESILIENCE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum NpccgError {
    #[error(transparent)]
    Ddu(#[from] DduError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error("outer loop exceeded {cap} iterations (best plan so far: {best:?})")]
    OuterCap {
        cap: usize,
        best: Option<FirstStageDecision>,
        log: Vec<IterationRow>,
    },
    #[error("inner loop exceeded {0} iterations")]
    InnerCap(usize),
    #[error("correction loop exceeded {0} rounds")]
    CorrectionCap(usize),
    #[error("dual point failed the feasibility audit: residual {0}")]
    DualInfeasible(f64),
    #[error("recourse subproblem unexpectedly {0:?}")]
    Recourse(SolveStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Enhancements {
    None,
    OuPrime,
    WarmStart,
    All,
}

impl Enhancements {
    pub fn ou_prime(self) -> bool {
        matches!(self, Enhancements::OuPrime | Enhancements::All)
    }
    pub fn warm_start(self) -> bool {
        matches!(self, Enhancements::WarmStart | Enhancements::All)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgoConfig {
    pub enhancements: Enhancements,
    /// Relative convergence gap of the inner loop.
    pub inner_eps: f64,
    /// Guard for the relative-gap denominator.
    pub inner_eps_guard: f64,
    pub outer_cap: usize,
    pub inner_cap: usize,
    pub correction_cap: usize,
    #[serde(skip)]
    pub milp: SolveParams,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            enhancements: Enhancements::All,
            inner_eps: 1e-6,
            inner_eps_guard: 1e-9,
            outer_cap: 100,
            inner_cap: 200,
            correction_cap: 20,
            milp: SolveParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Mp1,
    Mp2,
    Sp2,
    Cp,
}

/// One line of the iteration log; serialized as `iterations.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRow {
    pub outer_n: usize,
    pub inner_j: usize,
    pub phase: Phase,
    pub lb: f64,
    pub ub: f64,
    pub wall_ms: f64,
    pub cuts_total: usize,
}

pub fn log_to_csv(rows: &[IterationRow]) -> String {
    let mut s = String::from("outer_n,inner_j,phase,lb,ub,wall_ms,cuts_total\n");
    for r in rows {
        let phase = match r.phase {
            Phase::Mp1 => "mp1",
            Phase::Mp2 => "mp2",
            Phase::Sp2 => "sp2",
            Phase::Cp => "cp",
        };
        s.push_str(&format!(
            "{},{},{},{},{},{:.3},{}\n",
            r.outer_n, r.inner_j, phase, r.lb, r.ub, r.wall_ms, r.cuts_total
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CoPlanStatus {
    Optimal,
    Infeasible,
}

/// Final co-planning answer.
#[derive(Debug, Clone)]
pub struct CoPlanSolution {
    pub status: CoPlanStatus,
    pub decision: FirstStageDecision,
    /// System reinforcement cost in dollars.
    pub src: f64,
    /// Worst-case restoration ratio certified at the returned plan.
    pub certified_ratio: f64,
    pub worst_scenario: Option<Scenario>,
    pub worst_plan: Option<RecoursePlan>,
    pub outer_iterations: usize,
    pub inner_iterations_total: usize,
    pub wall_s: f64,
    pub log: Vec<IterationRow>,
}

/// Result of evaluating one first-stage plan against its uncertainty set.
#[derive(Debug, Clone)]
pub struct WorstCaseResult {
    /// min over scenarios of the best attainable restoration ratio.
    pub value: f64,
    pub scenario: Scenario,
    pub plan: RecoursePlan,
    pub pairs: VuPairSet,
    /// Damage patterns picked by the scenario master per inner iteration.
    pub u_history: Vec<Vec<bool>>,
    pub inner_iterations: usize,
    pub correction_rounds: usize,
    pub log: Vec<IterationRow>,
}

// ---------------------------------------------------------------------------
// Inner loop machinery
// ---------------------------------------------------------------------------

/// Scenario-master state: recorded discrete recourse decisions and the table
/// of their exact values per scenario vertex, filled lazily.
pub struct InnerState<'a> {
    inst: &'a NetworkInstance,
    template: &'a RecourseTemplate,
    z: &'a FirstStageDecision,
    pub scenarios: Vec<Scenario>,
    pub blocks: Vec<Upsilon>,
    /// values[b][s]: None until solved; NEG_INFINITY marks an infeasible fix.
    values: Vec<Vec<Option<f64>>>,
    /// One sweep solver per block; None when the decision is inadmissible.
    machines: Vec<Option<crate::formulation::InnerLpMachine>>,
    /// max over computed blocks per scenario.
    scen_max: Vec<f64>,
    covered: Vec<usize>,
}

impl<'a> InnerState<'a> {
    pub fn new(
        inst: &'a NetworkInstance,
        template: &'a RecourseTemplate,
        z: &'a FirstStageDecision,
    ) -> Result<Self, NpccgError> {
        let scenarios = enumerate_scenario_vertices(inst, z)?;
        let n = scenarios.len();
        Ok(InnerState {
            inst,
            template,
            z,
            scenarios,
            blocks: Vec::new(),
            values: Vec::new(),
            machines: Vec::new(),
            scen_max: vec![f64::NEG_INFINITY; n],
            covered: vec![0; n],
        })
    }

    /// Records a distinct discrete recourse decision; false if already known.
    pub fn add_block(&mut self, ups: Upsilon) -> bool {
        if self.blocks.contains(&ups) {
            return false;
        }
        let machine = self.template.inner_lp_machine(self.inst, self.z, &ups).ok();
        self.blocks.push(ups);
        self.values.push(vec![None; self.scenarios.len()]);
        self.machines.push(machine);
        true
    }

    fn ensure_value(&mut self, b: usize, s: usize) -> f64 {
        if let Some(v) = self.values[b][s] {
            return v;
        }
        let v = match &mut self.machines[b] {
            Some(machine) => machine
                .value_at(&self.scenarios[s])
                .unwrap_or(f64::NEG_INFINITY),
            None => f64::NEG_INFINITY,
        };
        self.values[b][s] = Some(v);
        self.covered[s] += 1;
        if v > self.scen_max[s] {
            self.scen_max[s] = v;
        }
        v
    }

    fn complete_scenario(&mut self, s: usize) {
        for b in 0..self.blocks.len() {
            self.ensure_value(b, s);
        }
    }
}

/// Solves the scenario master exactly over the vertex set: the minimizer of
/// the pair-set envelope, its value (the inner lower bound), and per-block
/// optimal duals at the minimizer. With no recorded blocks the bound is
/// unbounded below and the first vertex is returned.
pub fn inner_master(
    state: &mut InnerState,
) -> Result<(usize, f64, Vec<Option<DualPoint>>), NpccgError> {
    let n = state.scenarios.len();
    let argmin = if state.blocks.is_empty() {
        0
    } else {
        // Lazy exact argmin: the running max per scenario only grows as
        // blocks get evaluated, so the first fully covered minimum is exact.
        loop {
            let mut best = 0;
            for s in 1..n {
                if state.scen_max[s] < state.scen_max[best] {
                    best = s;
                }
            }
            if state.covered[best] == state.blocks.len() {
                break best;
            }
            state.complete_scenario(best);
        }
    };
    let lb = if state.blocks.is_empty() {
        f64::NEG_INFINITY
    } else {
        state.scen_max[argmin]
    };
    let mut duals = Vec::with_capacity(state.blocks.len());
    for b in 0..state.blocks.len() {
        duals.push(
            extract_extreme_point(
                state.inst,
                state.template,
                state.z,
                &state.scenarios[argmin],
                &state.blocks[b],
            )
            .ok(),
        );
    }
    Ok((argmin, lb, duals))
}

/// Evaluates a scenario exactly: the full recourse program at a fixed
/// uncertainty realization. Returns the discrete decision, the plan, and the
/// attained ratio (an upper-bound candidate for the worst case).
pub fn inner_subproblem(
    inst: &NetworkInstance,
    template: &RecourseTemplate,
    z: &FirstStageDecision,
    scenario: &Scenario,
    params: &SolveParams,
) -> Result<(Upsilon, RecoursePlan, f64), NpccgError> {
    let mut machine = crate::formulation::RecourseMachine::new(inst, template, z);
    subproblem_on(inst, template, &mut machine, scenario, params)
}

fn subproblem_on(
    inst: &NetworkInstance,
    template: &RecourseTemplate,
    machine: &mut crate::formulation::RecourseMachine,
    scenario: &Scenario,
    params: &SolveParams,
) -> Result<(Upsilon, RecoursePlan, f64), NpccgError> {
    let sol = machine.solve_at(scenario, params)?;
    if !matches!(sol.status, SolveStatus::Optimal) {
        return Err(NpccgError::Recourse(sol.status));
    }
    let ups = template.upsilon_from_assignment(machine.bindings(), &sol.assignment);
    let plan = template.extract_plan(inst, machine.bindings(), &sol);
    Ok((ups, plan, sol.objective))
}

/// Optimal basic duals of the inner LP at a fixed scenario and discrete
/// decision; validated against dual feasibility to 1e-8.
pub fn extract_extreme_point(
    inst: &NetworkInstance,
    template: &RecourseTemplate,
    z: &FirstStageDecision,
    scenario: &Scenario,
    ups: &Upsilon,
) -> Result<DualPoint, NpccgError> {
    let model = template.inner_lp(inst, z, scenario, ups)?;
    let (_, duals) = solve_lp_with_duals(&model)?;
    let mu = template.split_duals(&duals);
    let residual = template.dual_feasibility_residual(&mu);
    if residual > 1e-8 {
        return Err(NpccgError::DualInfeasible(residual));
    }
    Ok(mu)
}

/// Outcome of one correction round.
pub enum CorrectionOutcome {
    /// The optimality block admits a scenario with a strictly better
    /// recourse; the new pair to append.
    Improved {
        value: f64,
        scenario: Scenario,
        pair: VuPair,
    },
    /// No optimal scenario beats the incumbent bound.
    Settled { value: f64 },
}

/// Maximizes the recourse value over the worst-scenario block of the current
/// pair set (at a fixed first stage) jointly with recourse decisions. A
/// value above the inner upper bound reveals a tie among optimal scenarios
/// hiding a better recovery, which the caller resolves by appending the
/// returned pair.
pub fn correction(
    inst: &NetworkInstance,
    template: &RecourseTemplate,
    z: &FirstStageDecision,
    pairs: &VuPairSet,
    ub: f64,
    params: &SolveParams,
) -> Result<CorrectionOutcome, NpccgError> {
    let mut model = Model::new("correction", Objective::Maximize);
    let ou = append_ou_block(&mut model, inst, template, pairs, FirstStage::Fixed(z), "ou_")?;
    let mut bind = bind_recourse_block(&mut model, template, "r_", &ou, None);
    resolve_fixed_params(template, &mut bind, z);
    for row in &template.rows {
        append_bound_row(&mut model, row, &bind);
    }
    for &(v, c) in &template.objective {
        if let Binding::Var(id) = bind[v.0] {
            model.add_obj(id, c);
        }
    }
    // Only scenarios that beat the incumbent bound matter; everything else
    // prunes against the cutoff.
    let mut probe = params.clone();
    probe.cutoff = Some(ub + 0.5 * RESILIENCE_TOL);
    let sol = solve_milp(&model, &probe)?;
    match sol.status {
        SolveStatus::NoBetterThanCutoff => {
            return Ok(CorrectionOutcome::Settled { value: ub });
        }
        SolveStatus::Optimal => {}
        other => return Err(NpccgError::Recourse(other)),
    }
    let scenario = Scenario {
        intact: ou.u.iter().map(|&id| sol.assignment[id.idx()] > 0.5).collect(),
        h0: ou
            .h0
            .iter()
            .enumerate()
            .map(|(m, &id)| {
                if z.rented[m] {
                    sol.assignment[id.idx()]
                } else {
                    0.0
                }
            })
            .collect(),
    };
    let value = sol.objective;
    if value > ub + RESILIENCE_TOL.max(1e-9 * ub.abs()) {
        let ups = template.upsilon_from_assignment(&bind, &sol.assignment);
        let mu = extract_extreme_point(inst, template, z, &scenario, &ups)?;
        Ok(CorrectionOutcome::Improved {
            value,
            scenario,
            pair: VuPair { upsilon: ups, mu },
        })
    } else {
        Ok(CorrectionOutcome::Settled { value })
    }
}

/// Worst-case evaluation of a fixed plan: inner loop plus correction rounds.
/// `warm` seeds the recorded decision set before the first iteration.
pub fn solve_worst_case(
    inst: &NetworkInstance,
    z: &FirstStageDecision,
    cfg: &AlgoConfig,
    warm: &[Upsilon],
) -> Result<WorstCaseResult, NpccgError> {
    let template = recourse_template(inst);
    solve_worst_case_with(inst, &template, z, cfg, warm, 0)
}

pub(crate) fn solve_worst_case_with(
    inst: &NetworkInstance,
    template: &RecourseTemplate,
    z: &FirstStageDecision,
    cfg: &AlgoConfig,
    warm: &[Upsilon],
    outer_n: usize,
) -> Result<WorstCaseResult, NpccgError> {
    let start = Instant::now();
    let mut state = InnerState::new(inst, template, z)?;
    let mut sp_machine = crate::formulation::RecourseMachine::new(inst, template, z);
    for ups in warm {
        state.add_block(ups.clone());
    }
    let mut log: Vec<IterationRow> = Vec::new();
    let mut ub = f64::INFINITY;
    let mut incumbent: Option<(Scenario, RecoursePlan)> = None;
    let mut u_history: Vec<Vec<bool>> = Vec::new();
    let final_duals: Vec<Option<DualPoint>>;
    let final_scenario_idx: usize;
    let mut inner_iterations = 0usize;

    loop {
        inner_iterations += 1;
        if inner_iterations > cfg.inner_cap {
            return Err(NpccgError::InnerCap(cfg.inner_cap));
        }
        let t0 = Instant::now();
        let (s_idx, lb, duals) = inner_master(&mut state)?;
        u_history.push(state.scenarios[s_idx].intact.clone());
        log.push(IterationRow {
            outer_n,
            inner_j: inner_iterations,
            phase: Phase::Mp2,
            lb,
            ub,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            cuts_total: state.blocks.len(),
        });

        let t0 = Instant::now();
        let (ups, plan, value) =
            subproblem_on(inst, template, &mut sp_machine, &state.scenarios[s_idx], &cfg.milp)?;
        if value < ub {
            ub = value;
            incumbent = Some((state.scenarios[s_idx].clone(), plan));
        }
        log.push(IterationRow {
            outer_n,
            inner_j: inner_iterations,
            phase: Phase::Sp2,
            lb,
            ub,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            cuts_total: state.blocks.len(),
        });

        // Relative gap with a guard denominator; absolute closure also
        // counts since the value is a ratio in [0, 1].
        let gap_closed = lb.is_finite()
            && (ub - lb) <= (cfg.inner_eps * lb.abs().max(cfg.inner_eps_guard)).max(1e-9);
        if gap_closed {
            final_duals = duals;
            final_scenario_idx = s_idx;
            break;
        }
        let added = state.add_block(ups);
        if !added {
            // A repeated decision forces value == envelope at this scenario,
            // so the bounds have met within solver precision.
            final_duals = duals;
            final_scenario_idx = s_idx;
            break;
        }
    }

    // Pair set: recorded decisions with duals extracted at the converged
    // scenario. Blocks infeasible there contribute no finite bound and are
    // dropped.
    let mut pairs = VuPairSet::new();
    for (b, ups) in state.blocks.iter().enumerate() {
        let mu = match final_duals.get(b) {
            Some(Some(mu)) => Some(mu.clone()),
            _ => extract_extreme_point(
                inst,
                template,
                z,
                &state.scenarios[final_scenario_idx],
                ups,
            )
            .ok(),
        };
        if let Some(mu) = mu {
            pairs.push(VuPair { upsilon: ups.clone(), mu });
        }
    }

    // Correction rounds: resolve optimal-scenario ties that hide a better
    // recourse than the incumbent bound.
    let mut rounds = 0usize;
    loop {
        if pairs.is_empty() {
            break;
        }
        let t0 = Instant::now();
        let outcome = correction(inst, template, z, &pairs, ub, &cfg.milp)?;
        match outcome {
            CorrectionOutcome::Settled { value } => {
                log.push(IterationRow {
                    outer_n,
                    inner_j: 0,
                    phase: Phase::Cp,
                    lb: value,
                    ub,
                    wall_ms: t0.elapsed().as_secs_f64() * 1e3,
                    cuts_total: pairs.len(),
                });
                break;
            }
            CorrectionOutcome::Improved { value, scenario: _, pair } => {
                rounds += 1;
                log.push(IterationRow {
                    outer_n,
                    inner_j: rounds,
                    phase: Phase::Cp,
                    lb: value,
                    ub,
                    wall_ms: t0.elapsed().as_secs_f64() * 1e3,
                    cuts_total: pairs.len() + 1,
                });
                if rounds > cfg.correction_cap {
                    return Err(NpccgError::CorrectionCap(cfg.correction_cap));
                }
                pairs.push(pair);
            }
        }
    }

    let _ = start;
    let (scenario, plan) = incumbent.expect("at least one subproblem ran");
    Ok(WorstCaseResult {
        value: ub,
        scenario,
        plan,
        pairs,
        u_history,
        inner_iterations,
        correction_rounds: rounds,
        log,
    })
}

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

/// Everything a past outer iteration contributes to the master.
struct CutRecord {
    pairs: VuPairSet,
    u_star: Vec<bool>,
    u_history: Vec<Vec<bool>>,
}

/// Per-cut variable bindings kept for warm-start extraction.
struct CutHandles {
    bind: Vec<Binding>,
}

fn bind_recourse_block(
    model: &mut Model,
    template: &RecourseTemplate,
    prefix: &str,
    ou: &OuBlockVars,
    first_stage: Option<&FirstStageVars>,
) -> Vec<Binding> {
    let mut bind: Vec<Binding> = Vec::with_capacity(template.n_vars);
    for v in 0..template.n_vars {
        let name = format!("{prefix}{}", template.names[v]);
        let b = match template.roles[v] {
            TRole::Continuous => {
                Binding::Var(model.add_continuous(name, f64::NEG_INFINITY, f64::INFINITY))
            }
            TRole::BinaryRecourse => {
                let id = model.add_binary(name);
                model.set_branch_class(id, 2);
                Binding::Var(id)
            }
            TRole::ScenarioU(i) => Binding::Var(ou.u[i]),
            TRole::ScenarioH0(m) => Binding::Var(ou.h0[m]),
            TRole::ProductUw(i, t) => {
                let w = model.add_continuous(name.clone(), 0.0, 1.0);
                let l = template.u_lines[i];
                let omega = match bind[template.omega[l].as_ref().unwrap()[t].0] {
                    Binding::Var(id) => id,
                    Binding::Val(_) => unreachable!("switch variables bind first"),
                };
                model.add_row(
                    format!("{name}_le_u"),
                    vec![(w, 1.0), (ou.u[i], -1.0)],
                    Sense::Le,
                    0.0,
                );
                model.add_row(
                    format!("{name}_le_w"),
                    vec![(w, 1.0), (omega, -1.0)],
                    Sense::Le,
                    0.0,
                );
                model.add_row(
                    format!("{name}_ge"),
                    vec![(w, 1.0), (ou.u[i], -1.0), (omega, -1.0)],
                    Sense::Ge,
                    -1.0,
                );
                Binding::Var(w)
            }
            TRole::ParamChi(m) => match first_stage {
                Some(fs) => Binding::Var(fs.rent[m]),
                None => Binding::Val(f64::NAN), // replaced by fixed-z path
            },
            TRole::ParamG0(m, e) => match first_stage {
                Some(fs) => Binding::Var(fs.prealloc[m][e]),
                None => Binding::Val(f64::NAN),
            },
        };
        bind.push(b);
    }
    bind
}

/// Replaces unresolved first-stage parameter bindings with a fixed decision.
fn resolve_fixed_params(template: &RecourseTemplate, bind: &mut [Binding], z: &FirstStageDecision) {
    for v in 0..template.n_vars {
        match template.roles[v] {
            TRole::ParamChi(m) => {
                if matches!(bind[v], Binding::Val(x) if x.is_nan()) {
                    bind[v] = Binding::Val(if z.rented[m] { 1.0 } else { 0.0 });
                }
            }
            TRole::ParamG0(m, e) => {
                if matches!(bind[v], Binding::Val(x) if x.is_nan()) {
                    bind[v] = Binding::Val(if z.preallocation[m] == Some(e) { 1.0 } else { 0.0 });
                }
            }
            _ => {}
        }
    }
}

fn build_outer_master(
    inst: &NetworkInstance,
    template: &RecourseTemplate,
    cuts: &[CutRecord],
    cfg: &AlgoConfig,
) -> Result<(Model, FirstStageVars, Vec<CutHandles>), NpccgError> {
    let mut model = Model::new("outer_master", Objective::Minimize);
    let fs = append_first_stage(&mut model, inst);
    for &id in fs.harden.iter().chain(fs.rent.iter()) {
        model.set_branch_class(id, 0);
    }
    for row in &fs.prealloc {
        for &id in row {
            model.set_branch_class(id, 0);
        }
    }
    let mut handles = Vec::with_capacity(cuts.len());
    for (l, cut) in cuts.iter().enumerate() {
        let prefix = format!("c{l}_");
        let symbolic = FirstStage::Symbolic { harden: &fs.harden, rent: &fs.rent };
        let ou = append_ou_block(&mut model, inst, template, &cut.pairs, symbolic, &prefix)?;
        if cfg.enhancements.ou_prime() {
            append_ou_prime_block(
                &mut model,
                inst,
                &ou.u,
                symbolic,
                &cut.u_star,
                &cut.u_history,
                &prefix,
            );
        }
        let bind = bind_recourse_block(&mut model, template, &prefix, &ou, Some(&fs));
        for row in &template.rows {
            append_bound_row(&mut model, row, &bind);
        }
        // The plan must meet the target in the worst scenario of this block.
        let mut res: Vec<(VarId, f64)> = Vec::new();
        for &(v, c) in &template.objective {
            if let Binding::Var(id) = bind[v.0] {
                res.push((id, c));
            }
        }
        model.add_row(
            format!("{prefix}resilience"),
            res,
            Sense::Ge,
            inst.resilience_target,
        );
        handles.push(CutHandles { bind });
    }
    Ok((model, fs, handles))
}

/// Full co-planning: minimize reinforcement cost subject to the worst-case
/// restoration target, by outer column-and-constraint generation.
pub fn solve_coplan(inst: &NetworkInstance, cfg: &AlgoConfig) -> Result<CoPlanSolution, NpccgError> {
    let start = Instant::now();
    let template = recourse_template(inst);
    let mut cuts: Vec<CutRecord> = Vec::new();
    let mut log: Vec<IterationRow> = Vec::new();
    let mut inner_total = 0usize;
    let mut best: Option<FirstStageDecision> = None;

    for outer_n in 1..=cfg.outer_cap {
        let t0 = Instant::now();
        let (mp1, fs, handles) = build_outer_master(inst, &template, &cuts, cfg)?;
        if cfg.milp.verbose {
            eprintln!(
                "mp1[{outer_n}]: {} vars ({} binary), {} rows",
                mp1.n_vars(),
                mp1.vars.iter().filter(|v| v.kind == crate::model::VarKind::Binary).count(),
                mp1.n_rows()
            );
        }
        let sol = solve_milp(&mp1, &cfg.milp)?;
        if cfg.milp.verbose {
            eprintln!(
                "mp1[{outer_n}]: status {:?} obj {:.2} nodes {} in {:.2}s",
                sol.status, sol.objective, sol.nodes, sol.wall_s
            );
        }
        log.push(IterationRow {
            outer_n,
            inner_j: 0,
            phase: Phase::Mp1,
            lb: if sol.assignment.is_empty() { f64::NAN } else { sol.objective },
            ub: f64::NAN,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            cuts_total: cuts.len(),
        });
        match sol.status {
            SolveStatus::Infeasible => {
                return Ok(CoPlanSolution {
                    status: CoPlanStatus::Infeasible,
                    decision: FirstStageDecision::all_zero(inst),
                    src: f64::NAN,
                    certified_ratio: f64::NAN,
                    worst_scenario: None,
                    worst_plan: None,
                    outer_iterations: outer_n,
                    inner_iterations_total: inner_total,
                    wall_s: start.elapsed().as_secs_f64(),
                    log,
                });
            }
            SolveStatus::Optimal => {}
            other => return Err(NpccgError::Recourse(other)),
        }
        let z = decision_from_assignment(inst, &fs, &sol.assignment);
        best = Some(z.clone());
        let src = sol.objective;

        // Warm seeds from the master's own recourse decisions.
        let mut warm: Vec<Upsilon> = Vec::new();
        if cfg.enhancements.warm_start() {
            for h in &handles {
                let ups = template.upsilon_from_assignment(&h.bind, &sol.assignment);
                if !warm.contains(&ups) {
                    warm.push(ups);
                }
            }
        }

        let wc = solve_worst_case_with(inst, &template, &z, cfg, &warm, outer_n)?;
        inner_total += wc.inner_iterations;
        log.extend(wc.log.iter().cloned());

        if wc.value >= inst.resilience_target - RESILIENCE_TOL {
            return Ok(CoPlanSolution {
                status: CoPlanStatus::Optimal,
                decision: z,
                src,
                certified_ratio: wc.value,
                worst_scenario: Some(wc.scenario),
                worst_plan: Some(wc.plan),
                outer_iterations: outer_n,
                inner_iterations_total: inner_total,
                wall_s: start.elapsed().as_secs_f64(),
                log,
            });
        }
        cuts.push(CutRecord {
            pairs: wc.pairs,
            u_star: wc.scenario.intact.clone(),
            u_history: wc.u_history,
        });
    }
    Err(NpccgError::OuterCap { cap: cfg.outer_cap, best, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::load_instance;
    use crate::oracle::{brute_force_coplan, brute_force_worst_case, OracleStatus};
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

    #[test]
    fn intact_only_worst_case_converges_fast() {
        let mut inst = tri();
        inst.k = 0;
        let z = rent_first(&inst);
        let cfg = AlgoConfig::default();
        let wc = solve_worst_case(&inst, &z, &cfg, &[]).unwrap();
        assert!(wc.inner_iterations <= 2, "{} iterations", wc.inner_iterations);
        assert!(wc.scenario.intact.iter().all(|&b| b));
        // The storage part lands on the least favorable vertex.
        let (oracle, _, _) = brute_force_worst_case(&inst, &z, &cfg.milp).unwrap();
        assert!((wc.value - oracle).abs() <= 1e-9);
    }

    #[test]
    fn worst_case_matches_oracle_on_micro_instance() {
        let inst = tri();
        let cfg = AlgoConfig::default();
        for z in [
            FirstStageDecision::all_zero(&inst),
            rent_first(&inst),
            FirstStageDecision {
                hardened: vec![true, false],
                rented: vec![true],
                preallocation: vec![Some(0)],
            },
        ] {
            let wc = solve_worst_case(&inst, &z, &cfg, &[]).unwrap();
            let (oracle, _, _) = brute_force_worst_case(&inst, &z, &cfg.milp).unwrap();
            assert!(
                (wc.value - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
                "algo {} vs oracle {} at {:?}",
                wc.value,
                oracle,
                z
            );
            assert!(wc.plan.physics_violations(&inst, &wc.scenario).is_empty());
        }
    }

    #[test]
    fn dominated_damage_never_selected() {
        // With one line hardened the remaining worst case keeps the
        // protected line up; the reported scenario damages at most k lines
        // and never a hardened one.
        let inst = tri();
        let cfg = AlgoConfig::default();
        let z = FirstStageDecision {
            hardened: vec![true, false],
            rented: vec![false],
            preallocation: vec![None],
        };
        let wc = solve_worst_case(&inst, &z, &cfg, &[]).unwrap();
        assert!(wc.scenario.intact[0], "hardened line reported damaged");
        assert!(wc.scenario.damaged_count() <= inst.k as usize);
    }

    #[test]
    fn zero_target_terminates_immediately() {
        let mut inst = tri();
        inst.resilience_target = 0.0;
        let cfg = AlgoConfig::default();
        let sol = solve_coplan(&inst, &cfg).unwrap();
        assert_eq!(sol.status, CoPlanStatus::Optimal);
        assert_eq!(sol.outer_iterations, 1);
        assert_eq!(sol.src, 0.0);
        assert!(sol.decision.hardened.iter().all(|&h| !h));
        assert!(sol.decision.rented.iter().all(|&r| !r));
    }

    #[test]
    fn coplan_matches_oracle_on_micro_instance() {
        let inst = tri();
        let cfg = AlgoConfig::default();
        let algo = solve_coplan(&inst, &cfg).unwrap();
        let oracle = brute_force_coplan(&inst, &cfg.milp, 4096).unwrap();
        assert_eq!(
            matches!(algo.status, CoPlanStatus::Optimal),
            matches!(oracle.status, OracleStatus::Optimal)
        );
        if matches!(algo.status, CoPlanStatus::Optimal) {
            assert!((algo.src - oracle.src).abs() <= 1e-9 * oracle.src.abs().max(1.0));
            assert!((algo.certified_ratio - oracle.certified_ratio).abs() <= 1e-6);
        }
    }

    #[test]
    fn infeasible_when_nothing_is_affordable() {
        let mut inst = tri();
        inst.budget = 0.0;
        inst.k = inst.vulnerable.len() as u32;
        inst.resilience_target = 0.99;
        let cfg = AlgoConfig::default();
        let sol = solve_coplan(&inst, &cfg).unwrap();
        assert_eq!(sol.status, CoPlanStatus::Infeasible);
        let oracle = brute_force_coplan(&inst, &cfg.milp, 4096).unwrap();
        assert_eq!(oracle.status, OracleStatus::Infeasible);
    }

    #[test]
    fn enhancements_do_not_change_the_answer() {
        let inst = tri();
        let mut basic = AlgoConfig::default();
        basic.enhancements = Enhancements::None;
        let mut enhanced = AlgoConfig::default();
        enhanced.enhancements = Enhancements::All;
        let a = solve_coplan(&inst, &basic).unwrap();
        let b = solve_coplan(&inst, &enhanced).unwrap();
        assert_eq!(a.status, b.status);
        if matches!(a.status, CoPlanStatus::Optimal) {
            assert!((a.src - b.src).abs() <= 1e-9);
        }
    }

    #[test]
    fn correction_settles_on_singleton_sets() {
        let inst = tri();
        let cfg = AlgoConfig::default();
        let z = rent_first(&inst);
        let wc = solve_worst_case(&inst, &z, &cfg, &[]).unwrap();
        // After convergence the correction fixed point holds: the block
        // admits no scenario whose recourse beats the reported value.
        let template = recourse_template(&inst);
        match correction(&inst, &template, &z, &wc.pairs, wc.value, &cfg.milp).unwrap() {
            CorrectionOutcome::Settled { value } => {
                assert!(value <= wc.value + 1e-6);
            }
            CorrectionOutcome::Improved { value, .. } => {
                panic!("correction found {value} above settled {}", wc.value)
            }
        }
    }

    #[test]
    fn warm_start_preserves_value() {
        let inst = tri();
        let cfg = AlgoConfig::default();
        let z = rent_first(&inst);
        let cold = solve_worst_case(&inst, &z, &cfg, &[]).unwrap();
        // Seed with every decision the cold run recorded.
        let seeds: Vec<Upsilon> = cold.pairs.iter().map(|p| p.upsilon.clone()).collect();
        let warm = solve_worst_case(&inst, &z, &cfg, &seeds).unwrap();
        assert!((cold.value - warm.value).abs() <= 1e-9);
        assert!(warm.inner_iterations <= cold.inner_iterations);
    }

    #[test]
    fn log_rows_cover_phases() {
        let mut inst = tri();
        inst.resilience_target = 0.9;
        let cfg = AlgoConfig::default();
        let sol = solve_coplan(&inst, &cfg).unwrap();
        let csv = log_to_csv(&sol.log);
        assert!(csv.starts_with("outer_n,inner_j,phase,lb,ub,wall_ms,cuts_total"));
        assert!(sol.log.iter().any(|r| r.phase == Phase::Mp1));
        assert!(sol.log.iter().any(|r| r.phase == Phase::Mp2));
        assert!(sol.log.iter().any(|r| r.phase == Phase::Sp2));
    }
}
