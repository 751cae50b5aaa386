//! Mixed-integer solving behind a backend-agnostic contract. The reference
//! backend is a depth-first branch and bound over the bounded-variable
//! simplex, so the whole test suite runs without any external solver.
//!
//! One simplex instance persists across the entire tree: a node only moves
//! variable bounds, re-solves warmly from wherever the basis is, and the
//! basis inverse survives untouched. The same mechanism serves scenario
//! sweeps, which are right-hand-side bound moves on row logicals.

use crate::model::{Model, Objective, Sense, VarKind};
use crate::simplex::{LpForm, LpStatus, Simplex, FEAS_TOL};
use std::time::Instant;
use thiserror::Error;

/// Shared feasibility tolerance referenced by the acceptance checks.
pub const FEASIBILITY_TOL: f64 = 1e-6;
const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SolveParams {
    /// Relative optimality gap at which branching stops.
    pub rel_gap: f64,
    pub time_limit_s: f64,
    pub threads: usize,
    pub seed: u64,
    pub verbose: bool,
    pub node_limit: usize,
    /// Only solutions strictly better than this objective are of interest;
    /// the search prunes everything else and reports `NoBetterThanCutoff`
    /// when nothing beats it.
    pub cutoff: Option<f64>,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            rel_gap: 1e-9,
            time_limit_s: 600.0,
            threads: 1,
            seed: 0,
            verbose: false,
            node_limit: 2_000_000,
            cutoff: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Stopped at a limit with an incumbent in hand.
    FeasibleLimit,
    Infeasible,
    Unbounded,
    /// A cutoff was set and no solution beats it.
    NoBetterThanCutoff,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub objective: f64,
    /// Best proven bound (equals the objective at optimality).
    pub bound: f64,
    /// Values indexed by `VarId`.
    pub assignment: Vec<f64>,
    pub wall_s: f64,
    pub nodes: usize,
}

impl MilpSolution {
    pub fn value(&self, model: &Model, name: &str) -> f64 {
        model
            .var(name)
            .map(|v| self.assignment[v.idx()])
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("model is infeasible")]
    Infeasible,
    #[error("model is unbounded")]
    Unbounded,
    #[error("iteration limit inside the simplex")]
    IterLimit,
    #[error("LP solve requested on a model with integer variables")]
    IntegersPresent,
    #[error("unknown solver backend {0:?}")]
    UnknownBackend(String),
    #[error("time or node limit hit without an incumbent")]
    LimitNoIncumbent,
}

/// Branch and bound over one owned simplex; reusable across solves that only
/// move bounds (scenario sweeps, repeated subproblems).
pub struct BranchAndBound {
    spx: Simplex,
    minimize: bool,
    /// Binary columns sorted by branching class then index.
    binaries: Vec<(usize, u8)>,
    orig_bounds: Vec<(f64, f64)>,
    n_vars: usize,
    /// Optional binary fixing evaluated for a starting incumbent per solve.
    seed_fixing: Option<Vec<(usize, f64)>>,
    var_names: Vec<String>,
}

impl BranchAndBound {
    pub fn new(model: &Model) -> BranchAndBound {
        BranchAndBound::with_presolve(model, true)
    }

    pub fn with_presolve(model: &Model, presolve: bool) -> BranchAndBound {
        let mut binaries: Vec<(usize, u8)> = model
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, v)| (i, v.branch_class))
            .collect();
        binaries.sort_by_key(|&(i, c)| (c, i));
        // Fold single-variable rows into bounds; the solution set is
        // unchanged and the working basis shrinks considerably. Rows whose
        // implied bound conflicts with the variable's own bounds are kept so
        // the solve reports infeasibility the ordinary way.
        let mut reduced = model.clone();
        let mut bounds: Vec<(f64, f64)> = model.vars.iter().map(|v| (v.lb, v.ub)).collect();
        let mut kept = Vec::with_capacity(model.rows.len());
        for row in &reduced.rows {
            if presolve && row.coeffs.len() == 1 {
                let (v, a) = row.coeffs[0];
                let (lo, hi) = bounds[v.idx()];
                let b = row.rhs / a;
                let (mut nlo, mut nhi) = (lo, hi);
                match (row.sense, a > 0.0) {
                    (Sense::Le, true) | (Sense::Ge, false) => nhi = nhi.min(b),
                    (Sense::Ge, true) | (Sense::Le, false) => nlo = nlo.max(b),
                    (Sense::Eq, _) => {
                        nlo = nlo.max(b);
                        nhi = nhi.min(b);
                    }
                }
                if nlo <= nhi + 1e-9 {
                    bounds[v.idx()] = (nlo, nhi.max(nlo));
                    continue;
                }
            }
            kept.push(row.clone());
        }
        reduced.rows = kept;
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            reduced.vars[i].lb = lo;
            reduced.vars[i].ub = hi;
        }
        let form = LpForm::from_model(&reduced);
        BranchAndBound {
            spx: Simplex::new(form),
            minimize: model.objective == Objective::Minimize,
            binaries,
            orig_bounds: bounds,
            n_vars: model.n_vars(),
            seed_fixing: None,
            var_names: model.vars.iter().map(|v| v.name.clone()).collect(),
        }
    }

    /// Registers a binary fixing whose LP completion seeds the incumbent at
    /// the start of every solve. The fixing must cover all binaries.
    pub fn seed_with(&mut self, fixing: Vec<(usize, f64)>) {
        self.seed_fixing = Some(fixing);
    }

    /// Moves the stored base bounds of a structural variable (later solves
    /// start from these, before any branching).
    pub fn set_base_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.orig_bounds[var] = (lo, hi);
    }

    /// Moves a row's bounds (right-hand-side change) for later solves.
    pub fn set_row_bounds(&mut self, row: usize, lo: f64, hi: f64) {
        self.spx.set_row_bounds(row, lo, hi);
    }

    fn apply_bounds(&mut self, patch: &[(usize, f64, f64)]) {
        for (v, &(lo, hi)) in self.orig_bounds.iter().enumerate() {
            self.spx.set_col_bounds(v, lo, hi);
        }
        for &(v, lo, hi) in patch {
            self.spx.set_col_bounds(v, lo, hi);
        }
    }

    /// Runs the search and returns the best integral solution.
    pub fn solve(&mut self, params: &SolveParams) -> Result<MilpSolution, SolverError> {
        let start = Instant::now();
        let sign = if self.minimize { 1.0 } else { -1.0 };

        struct Node {
            patch: Vec<(usize, f64, f64)>,
            parent_bound: f64, // minimize orientation
        }

        let mut incumbent: Option<(f64, Vec<f64>)> = None;
        // Cutoff acts as a phantom incumbent without an assignment.
        let mut prune_at: Option<f64> = params.cutoff.map(|c| sign * c);
        let mut nodes = 0usize;
        let mut total_pivots = 0usize;
        let mut stack: Vec<Node> = vec![Node { patch: Vec::new(), parent_bound: f64::NEG_INFINITY }];
        let mut hit_limit = false;

        // A known-feasible fixing gives the tree something to prune against
        // from the first node.
        if let Some(fixing) = self.seed_fixing.clone() {
            let patch: Vec<(usize, f64, f64)> = fixing.iter().map(|&(v, x)| (v, x, x)).collect();
            self.apply_bounds(&patch);
            if matches!(self.spx.solve(), LpStatus::Optimal) {
                let fixed_ok = self
                    .binaries
                    .iter()
                    .all(|&(b, _)| (self.spx.current_value(b) - self.spx.current_value(b).round()).abs() <= INT_TOL);
                if fixed_ok {
                    let mut x: Vec<f64> =
                        (0..self.n_vars).map(|j| self.spx.current_value(j)).collect();
                    for &(b, _) in &self.binaries {
                        x[b] = x[b].round();
                    }
                    let obj = sign * self.spx.current_objective();
                    if prune_at.map_or(true, |c| obj < c) {
                        incumbent = Some((obj, x));
                    }
                }
            }
        }

        let threshold = |incumbent: &Option<(f64, Vec<f64>)>, prune_at: &Option<f64>| -> Option<f64> {
            match (incumbent.as_ref().map(|(b, _)| *b), *prune_at) {
                (Some(b), Some(c)) => Some(b.min(c)),
                (Some(b), None) => Some(b),
                (None, Some(c)) => Some(c),
                (None, None) => None,
            }
        };

        while let Some(node) = stack.pop() {
            if start.elapsed().as_secs_f64() > params.time_limit_s || nodes >= params.node_limit {
                hit_limit = true;
                break;
            }
            if let Some(best) = threshold(&incumbent, &prune_at) {
                let slack = (params.rel_gap * best.abs().max(1.0)).max(1e-9);
                if node.parent_bound >= best - slack {
                    continue;
                }
            }
            self.apply_bounds(&node.patch);
            nodes += 1;
            let status = self.spx.solve();
            total_pivots += self.spx.last_iterations();
            if params.verbose && nodes % 50 == 0 {
                eprintln!(
                    "bb: {} nodes, {} pivots, stack {}, incumbent {:?}, patch tail {:?}",
                    nodes,
                    total_pivots,
                    stack.len(),
                    incumbent.as_ref().map(|(v, _)| *v),
                    node.patch
                        .iter()
                        .rev()
                        .take(6)
                        .map(|&(v, lo, _)| format!("{}={}", self.var_names[v], lo))
                        .collect::<Vec<_>>()
                );
            }
            match status {
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => return Err(SolverError::Unbounded),
                LpStatus::IterLimit => return Err(SolverError::IterLimit),
                LpStatus::Optimal => {}
            }
            let node_obj = sign * self.spx.current_objective();
            if let Some(best) = threshold(&incumbent, &prune_at) {
                let slack = (params.rel_gap * best.abs().max(1.0)).max(1e-9);
                if node_obj >= best - slack {
                    continue;
                }
            }
            // Lowest branching class first, most fractional within a class.
            let mut branch: Option<(usize, u8, f64, f64)> = None;
            for &(b, class) in &self.binaries {
                if let Some((_, bc, _, _)) = branch {
                    if class > bc {
                        break; // binaries are sorted by class
                    }
                }
                let v = self.spx.current_value(b);
                let frac = (v - v.round()).abs();
                if frac > INT_TOL {
                    let dist = (v - 0.5).abs();
                    let better = match branch {
                        None => true,
                        Some((bb, bc, bd, _)) => {
                            class < bc || (class == bc && (dist < bd || (dist == bd && b < bb)))
                        }
                    };
                    if better {
                        branch = Some((b, class, dist, v));
                    }
                }
            }
            match branch {
                None => {
                    let mut x: Vec<f64> = (0..self.n_vars).map(|j| self.spx.current_value(j)).collect();
                    for &(b, _) in &self.binaries {
                        x[b] = x[b].round();
                    }
                    if incumbent.as_ref().map_or(true, |(best, _)| node_obj < *best) {
                        incumbent = Some((node_obj, x));
                    }
                }
                Some((b, _, _, frac)) => {
                    let mut up = node.patch.clone();
                    up.push((b, 1.0, 1.0));
                    let mut down = node.patch;
                    down.push((b, 0.0, 0.0));
                    let up_node = Node { patch: up, parent_bound: node_obj };
                    let down_node = Node { patch: down, parent_bound: node_obj };
                    // Dive toward the nearest integer first (pushed last).
                    if frac >= 0.5 {
                        stack.push(down_node);
                        stack.push(up_node);
                    } else {
                        stack.push(up_node);
                        stack.push(down_node);
                    }
                }
            }
        }

        let wall_s = start.elapsed().as_secs_f64();
        match incumbent {
            Some((obj_min, x)) => {
                let bound_min = if hit_limit {
                    stack.iter().map(|n| n.parent_bound).fold(obj_min, f64::min)
                } else {
                    obj_min
                };
                Ok(MilpSolution {
                    status: if hit_limit {
                        SolveStatus::FeasibleLimit
                    } else {
                        SolveStatus::Optimal
                    },
                    objective: sign * obj_min,
                    bound: sign * bound_min,
                    assignment: x,
                    wall_s,
                    nodes,
                })
            }
            None if hit_limit => Err(SolverError::LimitNoIncumbent),
            None => Ok(MilpSolution {
                status: if params.cutoff.is_some() {
                    SolveStatus::NoBetterThanCutoff
                } else {
                    SolveStatus::Infeasible
                },
                objective: f64::NAN,
                bound: f64::NAN,
                assignment: Vec::new(),
                wall_s,
                nodes,
            }),
        }
    }
}

/// Solves a mixed-integer model with the reference backend.
pub fn solve_milp(model: &Model, params: &SolveParams) -> Result<MilpSolution, SolverError> {
    match model.objective {
        _ if model.rows.is_empty() && model.vars.is_empty() => {
            return Ok(MilpSolution {
                status: SolveStatus::Optimal,
                objective: 0.0,
                bound: 0.0,
                assignment: Vec::new(),
                wall_s: 0.0,
                nodes: 0,
            })
        }
        _ => {}
    }
    BranchAndBound::new(model).solve(params)
}

/// Solves a pure LP and returns the primal point together with basic row
/// duals. Errors if any integer variable is declared.
pub fn solve_lp_with_duals(model: &Model) -> Result<(MilpSolution, Vec<f64>), SolverError> {
    if model.has_integers() {
        return Err(SolverError::IntegersPresent);
    }
    let start = Instant::now();
    let lp = crate::simplex::solve_relaxation(model, None);
    match lp.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(SolverError::Infeasible),
        LpStatus::Unbounded => return Err(SolverError::Unbounded),
        LpStatus::IterLimit => return Err(SolverError::IterLimit),
    }
    // Primal/dual agreement audit: rhs-weighted duals plus reduced-cost
    // contributions of nonbasic bounded variables must meet the objective.
    let mut dual_obj: f64 = model
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| lp.duals[i] * r.rhs)
        .sum();
    for j in 0..model.n_vars() {
        if lp.reduced_costs[j].abs() > 1e-9 {
            dual_obj += lp.reduced_costs[j] * lp.x[j];
        }
    }
    debug_assert!(
        (dual_obj - lp.obj).abs() <= FEASIBILITY_TOL * lp.obj.abs().max(1.0),
        "primal {} vs dual {}",
        lp.obj,
        dual_obj
    );
    Ok((
        MilpSolution {
            status: SolveStatus::Optimal,
            objective: lp.obj,
            bound: lp.obj,
            assignment: lp.x,
            wall_s: start.elapsed().as_secs_f64(),
            nodes: 1,
        },
        lp.duals,
    ))
}

/// Checks a finished assignment against the model within the shared
/// feasibility tolerance; used by tests and by debug assertions.
pub fn assignment_feasible(model: &Model, x: &[f64]) -> bool {
    model.max_violation(x) <= FEAS_TOL.max(FEASIBILITY_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, Objective, Sense};

    #[test]
    fn trivial_max_lp() {
        let mut m = Model::new("t", Objective::Maximize);
        let y = m.add_continuous("y", f64::NEG_INFINITY, f64::INFINITY);
        m.set_obj(y, 1.0);
        m.add_row("cap", vec![(y, 1.0)], Sense::Le, 3.0);
        let s = solve_milp(&m, &SolveParams::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-9);
        assert!((s.value(&m, "y") - 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_milp() {
        let mut m = Model::new("t", Objective::Minimize);
        let y = m.add_continuous("y", 0.0, f64::INFINITY);
        m.add_row("neg", vec![(y, 1.0)], Sense::Le, -1.0);
        let s = solve_milp(&m, &SolveParams::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn knapsack_exact() {
        let mut m = Model::new("t", Objective::Maximize);
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        let c = m.add_binary("c");
        m.set_obj(a, 10.0);
        m.set_obj(b, 6.0);
        m.set_obj(c, 4.0);
        m.add_row("cap", vec![(a, 1.0), (b, 1.0), (c, 1.0)], Sense::Le, 2.0);
        let s = solve_milp(&m, &SolveParams::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 16.0).abs() < 1e-9);
        assert_eq!(s.value(&m, "a"), 1.0);
        assert_eq!(s.value(&m, "b"), 1.0);
        assert_eq!(s.value(&m, "c"), 0.0);
    }

    #[test]
    fn fractional_relaxation_forced_to_branch() {
        let mut m = Model::new("t", Objective::Maximize);
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        m.set_obj(a, 1.0);
        m.set_obj(b, 1.0);
        m.add_row("cap", vec![(a, 1.0), (b, 1.0)], Sense::Le, 1.5);
        let s = solve_milp(&m, &SolveParams::default()).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-9);
        assert!((s.objective - s.bound).abs() <= 1e-9);
    }

    #[test]
    fn lp_with_duals_rejects_integers() {
        let mut m = Model::new("t", Objective::Maximize);
        m.add_binary("a");
        assert!(matches!(
            solve_lp_with_duals(&m),
            Err(SolverError::IntegersPresent)
        ));
    }

    #[test]
    fn reusable_tree_with_rhs_updates() {
        // One knapsack, two capacities, same solver object.
        let mut m = Model::new("t", Objective::Maximize);
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        let c = m.add_binary("c");
        m.set_obj(a, 10.0);
        m.set_obj(b, 6.0);
        m.set_obj(c, 4.0);
        m.add_row("cap", vec![(a, 1.0), (b, 1.0), (c, 1.0)], Sense::Le, 2.0);
        let mut bb = BranchAndBound::new(&m);
        let s = bb.solve(&SolveParams::default()).unwrap();
        assert!((s.objective - 16.0).abs() < 1e-9);
        bb.set_row_bounds(0, f64::NEG_INFINITY, 1.0);
        let s = bb.solve(&SolveParams::default()).unwrap();
        assert!((s.objective - 10.0).abs() < 1e-9);
        bb.set_row_bounds(0, f64::NEG_INFINITY, 3.0);
        let s = bb.solve(&SolveParams::default()).unwrap();
        assert!((s.objective - 20.0).abs() < 1e-9);
    }

    #[test]
    fn determinism_same_inputs_same_answer() {
        let mut m = Model::new("t", Objective::Maximize);
        let vars: Vec<_> = (0..8).map(|i| m.add_binary(format!("b{i}"))).collect();
        for (i, &v) in vars.iter().enumerate() {
            m.set_obj(v, 1.0 + (i as f64 % 3.0));
        }
        m.add_row(
            "cap",
            vars.iter().map(|&v| (v, 1.0)).collect(),
            Sense::Le,
            4.0,
        );
        let a = solve_milp(&m, &SolveParams::default()).unwrap();
        let b = solve_milp(&m, &SolveParams::default()).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.assignment, b.assignment);
    }
}
