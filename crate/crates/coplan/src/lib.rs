//! Co-planning of distribution-network line hardening and mobile hydrogen
//! energy resource (MHER) rental under a worst-case service-restoration
//! constraint.
//!
//! The library solves a two-stage robust program: the first stage picks a
//! hardening plan and an MHER rental/pre-allocation plan at minimum cost,
//! subject to the requirement that under every admissible contingency the
//! post-event restoration ratio stays above a target. The contingency set is
//! decision-dependent: hardened lines cannot fail, and the available hydrogen
//! storage of a rented unit is tied to the rental decision.
//!
//! Modules, bottom up:
//! - [`instance`]: problem data, instance file format, validation, the
//!   restoration-ratio metric, and recourse-plan physics checks.
//! - [`model`]: a solver-agnostic linear model (variables, rows, LP export).
//! - [`simplex`]: bounded-variable primal simplex with basic dual solutions.
//! - [`solver`]: the MILP interface (branch and bound over the simplex) and
//!   the LP-with-duals entry point.
//! - [`formulation`]: first-stage and recourse constraint systems, the dual
//!   polytope of the inner operations LP, and product linearization.
//! - [`ddu`]: the decision-dependent uncertainty set, scenario vertex
//!   enumeration, and the optimality blocks embedded in master problems.
//! - [`npccg`]: the nested column-and-constraint-generation driver.
//! - [`oracle`]: exhaustive ground truth for small instances.
//! - [`suites`]: seeded random instances and cross-check suites.

pub mod ddu;
pub mod formulation;
pub mod instance;
pub mod model;
pub mod npccg;
pub mod oracle;
pub mod simplex;
pub mod solver;
pub mod suites;

pub use instance::{
    load_instance, restoration_ratio, validate, FirstStageDecision, InstanceError, Line,
    MherFleet, NetworkInstance, RecoursePlan, Scenario, ValidationReport,
};
pub use npccg::{solve_coplan, solve_worst_case, AlgoConfig, CoPlanSolution, WorstCaseResult};
pub use solver::{solve_lp_with_duals, solve_milp, MilpSolution, SolveParams, SolveStatus};
