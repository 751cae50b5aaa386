//! Exhaustive ground truth for small instances: worst-case evaluation by
//! scenario enumeration and co-planning by first-stage enumeration. The
//! acceptance suites certify the nested algorithm against these.

use crate::ddu::{enumerate_scenario_vertices, DduError};
use crate::formulation::{recourse_template, RecourseMachine, RecourseTemplate};
use crate::instance::{FirstStageDecision, NetworkInstance, RecoursePlan, Scenario};
use crate::npccg::RESILIENCE_TOL;
use crate::solver::{SolveParams, SolveStatus, SolverError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Ddu(#[from] DduError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Formulation(#[from] crate::formulation::FormulationError),
    #[error("first-stage enumeration would visit {0} plans (cap {1})")]
    FirstStageCap(usize, usize),
    #[error("recourse subproblem ended {0:?}")]
    Recourse(SolveStatus),
}

/// Exact worst case of a fixed plan: evaluates the recourse program at every
/// scenario vertex and takes the minimum. Ties resolve to the first scenario
/// in enumeration order.
pub fn brute_force_worst_case(
    inst: &NetworkInstance,
    z: &FirstStageDecision,
    params: &SolveParams,
) -> Result<(f64, Scenario, RecoursePlan), OracleError> {
    let template = recourse_template(inst);
    brute_force_worst_case_with(inst, &template, z, params)
}

pub(crate) fn brute_force_worst_case_with(
    inst: &NetworkInstance,
    template: &RecourseTemplate,
    z: &FirstStageDecision,
    params: &SolveParams,
) -> Result<(f64, Scenario, RecoursePlan), OracleError> {
    let scenarios = enumerate_scenario_vertices(inst, z)?;
    let mut machine = RecourseMachine::new(inst, template, z);
    let mut best: Option<(usize, f64, RecoursePlan)> = None;
    for (i, s) in scenarios.iter().enumerate() {
        let sol = machine.solve_at(s, params)?;
        if !matches!(sol.status, SolveStatus::Optimal) {
            return Err(OracleError::Recourse(sol.status));
        }
        let better = match &best {
            None => true,
            Some((_, bv, _)) => sol.objective < bv - 1e-12,
        };
        if better {
            let plan = template.extract_plan(inst, machine.bindings(), &sol);
            best = Some((i, sol.objective, plan));
        }
    }
    let (i, value, plan) = best.expect("uncertainty set is never empty");
    Ok((value, scenarios[i].clone(), plan))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct OracleCoPlan {
    pub status: OracleStatus,
    /// Cheapest feasible plan (first in deterministic order among ties).
    pub decision: FirstStageDecision,
    pub src: f64,
    pub certified_ratio: f64,
    pub worst_scenario: Option<Scenario>,
    /// Cost-tied optimal plans, capped.
    pub tied_plans: Vec<FirstStageDecision>,
    pub plans_examined: usize,
}

/// Exact co-planning by enumerating every budget-feasible first stage in
/// ascending cost order; the first plan whose worst case meets the target is
/// optimal. Cost ties are reported up to a cap.
pub fn brute_force_coplan(
    inst: &NetworkInstance,
    params: &SolveParams,
    cap: usize,
) -> Result<OracleCoPlan, OracleError> {
    let template = recourse_template(inst);
    let mut plans = enumerate_first_stages(inst, cap)?;
    plans.sort_by(|a, b| {
        inst.first_stage_cost(a)
            .partial_cmp(&inst.first_stage_cost(b))
            .unwrap()
            .then_with(|| format!("{a:?}").cmp(&format!("{b:?}")))
    });
    let examined = plans.len();
    let mut winner: Option<(FirstStageDecision, f64, f64, Scenario)> = None;
    let mut ties: Vec<FirstStageDecision> = Vec::new();
    for z in plans {
        let cost = inst.first_stage_cost(&z);
        if let Some((_, best_cost, _, _)) = &winner {
            if cost > *best_cost + 1e-9 {
                break;
            }
        }
        let (value, scenario, _) = brute_force_worst_case_with(inst, &template, &z, params)?;
        if value >= inst.resilience_target - RESILIENCE_TOL {
            if winner.is_none() {
                winner = Some((z.clone(), cost, value, scenario));
                ties.push(z);
            } else if ties.len() < 10 {
                ties.push(z);
            }
        }
    }
    match winner {
        Some((decision, cost, value, scenario)) => Ok(OracleCoPlan {
            status: OracleStatus::Optimal,
            decision,
            src: cost,
            certified_ratio: value,
            worst_scenario: Some(scenario),
            tied_plans: ties,
            plans_examined: examined,
        }),
        None => Ok(OracleCoPlan {
            status: OracleStatus::Infeasible,
            decision: FirstStageDecision::all_zero(inst),
            src: f64::NAN,
            certified_ratio: f64::NAN,
            worst_scenario: None,
            tied_plans: Vec::new(),
            plans_examined: examined,
        }),
    }
}

/// Every budget-feasible (hardening, rental, pre-allocation) combination.
pub fn enumerate_first_stages(
    inst: &NetworkInstance,
    cap: usize,
) -> Result<Vec<FirstStageDecision>, OracleError> {
    let nv = inst.vulnerable.len();
    let nm = inst.n_mhers();
    let ne = inst.n_eh();
    // Quick size bound before materializing.
    let rough = 2usize
        .checked_pow(nv as u32)
        .and_then(|a| a.checked_mul((ne + 2).checked_pow(nm as u32)?))
        .unwrap_or(usize::MAX);
    if rough > cap.saturating_mul(64) {
        return Err(OracleError::FirstStageCap(rough, cap));
    }
    let mut out = Vec::new();
    for hmask in 0u64..(1 << nv) {
        let hardened: Vec<bool> = (0..nv).map(|v| hmask >> v & 1 == 1).collect();
        // Per unit: 0 = not rented, 1 = rented unallocated, 2.. = rented at EH e.
        let options = ne + 2;
        let total = options.pow(nm as u32);
        for code in 0..total {
            let mut c = code;
            let mut rented = vec![false; nm];
            let mut prealloc = vec![None; nm];
            for m in 0..nm {
                let o = c % options;
                c /= options;
                if o >= 1 {
                    rented[m] = true;
                    if o >= 2 {
                        prealloc[m] = Some(o - 2);
                    }
                }
            }
            let z = FirstStageDecision { hardened: hardened.clone(), rented, preallocation: prealloc };
            if inst.first_stage_feasible(&z) {
                out.push(z);
                if out.len() > cap {
                    return Err(OracleError::FirstStageCap(out.len(), cap));
                }
            }
        }
    }
    Ok(out)
}
