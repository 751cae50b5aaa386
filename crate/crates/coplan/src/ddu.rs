//! The decision-dependent uncertainty set: hardened lines cannot fail, and
//! available hydrogen storage tracks the rental decision. This module builds
//! the set as constraint rows, enumerates its scenario vertices, and encodes
//! the worst-scenario optimality systems embedded in master problems.

use crate::formulation::{RecourseTemplate, VuPairSet};
use crate::instance::{FirstStageDecision, NetworkInstance, Scenario};
use crate::model::{Model, Objective, Sense, VarId, VarKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DduError {
    #[error("vertex enumeration cap exceeded: {0} vulnerable lines (cap {1})")]
    LineCap(usize, usize),
    #[error("vertex enumeration cap exceeded: {0} fleet units (cap {1})")]
    FleetCap(usize, usize),
    #[error("worst-scenario block needs a nonempty pair set")]
    EmptyPairSet,
}

/// First-stage inputs to an uncertainty block: fixed numbers or variables of
/// an enclosing master model.
#[derive(Clone, Copy)]
pub enum FirstStage<'a> {
    Fixed(&'a FirstStageDecision),
    Symbolic {
        harden: &'a [VarId],
        rent: &'a [VarId],
    },
}

impl<'a> FirstStage<'a> {
    fn harden_term(&self, v: usize) -> Term {
        match self {
            FirstStage::Fixed(z) => Term::Val(if z.hardened[v] { 1.0 } else { 0.0 }),
            FirstStage::Symbolic { harden, .. } => Term::Var(harden[v]),
        }
    }
    fn rent_term(&self, m: usize) -> Term {
        match self {
            FirstStage::Fixed(z) => Term::Val(if z.rented[m] { 1.0 } else { 0.0 }),
            FirstStage::Symbolic { rent, .. } => Term::Var(rent[m]),
        }
    }
}

enum Term {
    Var(VarId),
    Val(f64),
}

fn push_term(coeffs: &mut Vec<(VarId, f64)>, rhs: &mut f64, term: Term, coef: f64) {
    match term {
        Term::Var(id) => coeffs.push((id, coef)),
        Term::Val(v) => *rhs -= coef * v,
    }
}

/// Scenario variables of an embedded uncertainty block.
#[derive(Debug, Clone)]
pub struct DduVars {
    pub u: Vec<VarId>,
    pub h0: Vec<VarId>,
}

/// Appends the uncertainty-set rows over fresh (u, H0) variables: the
/// damage budget, hardening protection, per-unit storage bands, and the
/// aggregate premium-storage guarantee.
pub fn append_ddu_polytope(
    model: &mut Model,
    inst: &NetworkInstance,
    first_stage: FirstStage,
    relaxed: bool,
    prefix: &str,
) -> DduVars {
    let nv = inst.vulnerable.len();
    let kind = if relaxed { VarKind::Continuous } else { VarKind::Binary };
    let u: Vec<VarId> = (0..nv)
        .map(|v| model.add_var(format!("{prefix}u[{v}]"), kind, 0.0, 1.0, 0.0))
        .collect();
    let h0: Vec<VarId> = (0..inst.n_mhers())
        .map(|m| {
            model.add_continuous(
                format!("{prefix}h0[{m}]"),
                0.0,
                inst.fleet.units[m].h_max_kg,
            )
        })
        .collect();

    model.add_row(
        format!("{prefix}damage_budget"),
        u.iter().map(|&id| (id, 1.0)).collect(),
        Sense::Ge,
        nv as f64 - inst.k as f64,
    );
    for v in 0..nv {
        let mut coeffs = vec![(u[v], 1.0)];
        let mut rhs = 0.0;
        push_term(&mut coeffs, &mut rhs, first_stage.harden_term(v), -1.0);
        model.add_row(format!("{prefix}protected[{v}]"), coeffs, Sense::Ge, rhs);
    }
    for m in 0..inst.n_mhers() {
        let cap = inst.fleet.units[m].h_max_kg;
        let mut lo = vec![(h0[m], 1.0)];
        let mut lo_rhs = 0.0;
        push_term(&mut lo, &mut lo_rhs, first_stage.rent_term(m), -inst.sigma1 * cap);
        model.add_row(format!("{prefix}storage_floor[{m}]"), lo, Sense::Ge, lo_rhs);
        let mut hi = vec![(h0[m], 1.0)];
        let mut hi_rhs = 0.0;
        push_term(&mut hi, &mut hi_rhs, first_stage.rent_term(m), -cap);
        model.add_row(format!("{prefix}storage_cap[{m}]"), hi, Sense::Le, hi_rhs);
    }
    let mut agg: Vec<(VarId, f64)> = Vec::new();
    let mut agg_rhs = 0.0;
    let mut any_premium = false;
    for m in 0..inst.n_mhers() {
        if inst.fleet.units[m].premium {
            any_premium = true;
            agg.push((h0[m], 1.0));
            push_term(
                &mut agg,
                &mut agg_rhs,
                first_stage.rent_term(m),
                -inst.sigma2 * inst.fleet.units[m].h_max_kg,
            );
        }
    }
    if any_premium {
        model.add_row(format!("{prefix}premium_floor"), agg, Sense::Ge, agg_rhs);
    }
    DduVars { u, h0 }
}

/// Stand-alone uncertainty-set model over (u, H0).
pub fn build_ddu_polytope(
    inst: &NetworkInstance,
    z: &FirstStageDecision,
    relaxed: bool,
) -> (Model, DduVars) {
    let mut model = Model::new("ddu", Objective::Minimize);
    let vars = append_ddu_polytope(&mut model, inst, FirstStage::Fixed(z), relaxed, "");
    (model, vars)
}

// ---------------------------------------------------------------------------
// Scenario vertex enumeration
// ---------------------------------------------------------------------------

/// All damage patterns with at most k failures among unhardened lines,
/// crossed with the vertices of the storage polytope. Ordered by damage
/// count, then lexicographically; the storage part is sorted ascending.
pub fn enumerate_scenario_vertices(
    inst: &NetworkInstance,
    z: &FirstStageDecision,
) -> Result<Vec<Scenario>, DduError> {
    let nv = inst.vulnerable.len();
    if nv > inst.solver.max_enum_lines {
        return Err(DduError::LineCap(nv, inst.solver.max_enum_lines));
    }
    if inst.n_mhers() > inst.solver.max_enum_fleet {
        return Err(DduError::FleetCap(inst.n_mhers(), inst.solver.max_enum_fleet));
    }
    let free: Vec<usize> = (0..nv).filter(|&v| !z.hardened[v]).collect();
    let k = (inst.k as usize).min(free.len());
    let mut patterns: Vec<Vec<bool>> = Vec::new();
    for damage in 0..=k {
        let mut chooser = Combinations::new(free.len(), damage);
        while let Some(pick) = chooser.next() {
            let mut intact = vec![true; nv];
            for &i in pick {
                intact[free[i]] = false;
            }
            patterns.push(intact);
        }
    }
    let storage = storage_vertices(inst, z);
    let mut out = Vec::with_capacity(patterns.len() * storage.len());
    for intact in &patterns {
        for h0 in &storage {
            out.push(Scenario { intact: intact.clone(), h0: h0.clone() });
        }
    }
    Ok(out)
}

/// Vertices of the initial-storage polytope for a rental decision: the box
/// of per-unit bands intersected with the aggregate premium floor. Every
/// vertex has at most one coordinate strictly inside its band, and only when
/// the aggregate floor is tight.
pub fn storage_vertices(inst: &NetworkInstance, z: &FirstStageDecision) -> Vec<Vec<f64>> {
    let nm = inst.n_mhers();
    let rented: Vec<usize> = (0..nm).filter(|&m| z.rented[m]).collect();
    let premium: Vec<usize> = rented
        .iter()
        .copied()
        .filter(|&m| inst.fleet.units[m].premium)
        .collect();
    let lo = |m: usize| inst.sigma1 * inst.fleet.units[m].h_max_kg;
    let hi = |m: usize| inst.fleet.units[m].h_max_kg;
    let floor: f64 = premium.iter().map(|&m| inst.sigma2 * hi(m)).sum();

    // Candidate assignments for the premium block.
    let mut prem_points: Vec<Vec<f64>> = Vec::new();
    let np = premium.len();
    for mask in 0..(1u32 << np) {
        let point: Vec<f64> = (0..np)
            .map(|i| if mask >> i & 1 == 1 { hi(premium[i]) } else { lo(premium[i]) })
            .collect();
        if point.iter().sum::<f64>() >= floor - 1e-9 {
            prem_points.push(point);
        }
    }
    for pivot in 0..np {
        for mask in 0..(1u32 << (np - 1)) {
            let mut point = vec![0.0; np];
            let mut rest_sum = 0.0;
            let mut bit = 0;
            for i in 0..np {
                if i == pivot {
                    continue;
                }
                let v = if mask >> bit & 1 == 1 { hi(premium[i]) } else { lo(premium[i]) };
                point[i] = v;
                rest_sum += v;
                bit += 1;
            }
            let v = floor - rest_sum;
            if v > lo(premium[pivot]) + 1e-9 && v < hi(premium[pivot]) - 1e-9 {
                point[pivot] = v;
                prem_points.push(point);
            }
        }
    }
    dedupe_points(&mut prem_points);

    // Non-premium rented coordinates are an independent box.
    let nonprem: Vec<usize> = rented
        .iter()
        .copied()
        .filter(|&m| !inst.fleet.units[m].premium)
        .collect();
    let nq = nonprem.len();
    let mut out = Vec::new();
    for prem in &prem_points {
        for mask in 0..(1u32 << nq) {
            let mut h0 = vec![0.0; nm];
            for (i, &m) in premium.iter().enumerate() {
                h0[m] = prem[i];
            }
            for (i, &m) in nonprem.iter().enumerate() {
                h0[m] = if mask >> i & 1 == 1 { hi(m) } else { lo(m) };
            }
            out.push(h0);
        }
    }
    if out.is_empty() {
        out.push(vec![0.0; nm]);
    }
    dedupe_points(&mut out);
    out
}

fn dedupe_points(points: &mut Vec<Vec<f64>>) {
    points.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b.iter()) {
            match x.partial_cmp(y).unwrap() {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        std::cmp::Ordering::Equal
    });
    points.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-9));
}

/// Plain lexicographic combination iterator over n choose r.
struct Combinations {
    n: usize,
    r: usize,
    idx: Vec<usize>,
    started: bool,
    done: bool,
}

impl Combinations {
    fn new(n: usize, r: usize) -> Self {
        Combinations {
            n,
            r,
            idx: (0..r).collect(),
            started: false,
            done: r > n,
        }
    }
    fn next(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.idx);
        }
        if self.r == 0 {
            self.done = true;
            return None;
        }
        let mut i = self.r;
        loop {
            if i == 0 {
                self.done = true;
                return None;
            }
            i -= 1;
            if self.idx[i] != i + self.n - self.r {
                break;
            }
        }
        self.idx[i] += 1;
        for j in i + 1..self.r {
            self.idx[j] = self.idx[j - 1] + 1;
        }
        Some(&self.idx)
    }
}

/// Brute-force vertex enumeration of the relaxed damage polytope
/// { u in [x, 1]^n : sum(u) >= n - k } by solving every square tight-set
/// system; this is the independent check behind the integrality audit.
pub fn enumerate_relaxed_u_vertices(
    inst: &NetworkInstance,
    z: &FirstStageDecision,
) -> Vec<Vec<f64>> {
    let n = inst.vulnerable.len();
    // Constraint list: 0 = budget row, 1..=n lower bounds, n+1..=2n uppers.
    let n_con = 2 * n + 1;
    let mut verts: Vec<Vec<f64>> = Vec::new();
    let mut chooser = Combinations::new(n_con, n);
    while let Some(pick) = chooser.next() {
        // Assemble the square system.
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n];
        for (row, &c) in pick.iter().enumerate() {
            if c == 0 {
                for col in 0..n {
                    a[row * n + col] = 1.0;
                }
                b[row] = n as f64 - inst.k as f64;
            } else if c <= n {
                let v = c - 1;
                a[row * n + v] = 1.0;
                b[row] = if z.hardened[v] { 1.0 } else { 0.0 };
            } else {
                let v = c - n - 1;
                a[row * n + v] = 1.0;
                b[row] = 1.0;
            }
        }
        if let Some(x) = solve_square(&mut a, &mut b, n) {
            let sum: f64 = x.iter().sum();
            let feasible = sum >= n as f64 - inst.k as f64 - 1e-7
                && (0..n).all(|v| {
                    let lo = if z.hardened[v] { 1.0 } else { 0.0 };
                    x[v] >= lo - 1e-7 && x[v] <= 1.0 + 1e-7
                });
            if feasible {
                verts.push(x);
            }
        }
    }
    dedupe_points(&mut verts);
    verts
}

fn solve_square(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-9 {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    Some((0..n).map(|i| b[i] / a[i * n + i]).collect())
}

// ---------------------------------------------------------------------------
// Worst-scenario optimality block
// ---------------------------------------------------------------------------

/// Variables of an embedded worst-scenario block.
#[derive(Debug, Clone)]
pub struct OuBlockVars {
    pub u: Vec<VarId>,
    pub h0: Vec<VarId>,
    pub eta: VarId,
}

/// Encodes, over fresh scenario variables, the optimality system of
///   min eta  s.t.  eta >= pair_i(u, H0) for every recorded pair,
///                  (u, H0) in the relaxed uncertainty set of (x, z),
/// via stationarity and indicator-linked complementarity. Any feasible point
/// of the block is a worst-case scenario for the pair set at the first stage
/// chosen by the enclosing master. u is declared binary, which is
/// non-binding because the relaxed set has integral u-vertices.
pub fn append_ou_block(
    model: &mut Model,
    inst: &NetworkInstance,
    template: &RecourseTemplate,
    pairs: &VuPairSet,
    first_stage: FirstStage,
    prefix: &str,
) -> Result<OuBlockVars, DduError> {
    if pairs.is_empty() {
        return Err(DduError::EmptyPairSet);
    }
    let nv = inst.vulnerable.len();
    let nm = inst.n_mhers();
    let cap = inst.solver.dual_cap;

    let cuts: Vec<crate::formulation::PairCut> = pairs
        .iter()
        .map(|p| template.pair_cut(&p.mu, &p.upsilon))
        .collect();
    // Affine range of each pair over the scenario box.
    let range = |cut: &crate::formulation::PairCut| -> (f64, f64) {
        let mut lo = cut.constant;
        let mut hi = cut.constant;
        for &c in &cut.u_coef {
            lo += c.min(0.0);
            hi += c.max(0.0);
        }
        for (m, &c) in cut.h0_coef.iter().enumerate() {
            let h = inst.fleet.units[m].h_max_kg;
            lo += (c * h).min(0.0);
            hi += (c * h).max(0.0);
        }
        (lo, hi)
    };
    let ranges: Vec<(f64, f64)> = cuts.iter().map(range).collect();
    let eta_lo = ranges.iter().map(|r| r.0).fold(f64::INFINITY, f64::min) - 1.0;
    let eta_hi = ranges.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max) + 1.0;

    let u: Vec<VarId> = (0..nv).map(|v| model.add_binary(format!("{prefix}u[{v}]"))).collect();
    let h0: Vec<VarId> = (0..nm)
        .map(|m| model.add_continuous(format!("{prefix}h0[{m}]"), 0.0, inst.fleet.units[m].h_max_kg))
        .collect();
    let eta = model.add_continuous(format!("{prefix}eta"), eta_lo, eta_hi);

    let mult = |model: &mut Model, name: String| model.add_continuous(name, 0.0, cap);
    let alpha: Vec<VarId> = (0..pairs.len())
        .map(|i| model.add_continuous(format!("{prefix}alpha[{i}]"), 0.0, 1.0))
        .collect();
    let beta = mult(model, format!("{prefix}beta"));
    let rho: Vec<VarId> = (0..nv).map(|v| mult(model, format!("{prefix}rho[{v}]"))).collect();
    let nu: Vec<VarId> = (0..nv).map(|v| mult(model, format!("{prefix}nu[{v}]"))).collect();
    let th_lo: Vec<VarId> = (0..nm).map(|m| mult(model, format!("{prefix}th_lo[{m}]"))).collect();
    let th_hi: Vec<VarId> = (0..nm).map(|m| mult(model, format!("{prefix}th_hi[{m}]"))).collect();
    let premium: Vec<usize> = (0..nm).filter(|&m| inst.fleet.units[m].premium).collect();
    let tau = if premium.is_empty() {
        None
    } else {
        Some(mult(model, format!("{prefix}tau")))
    };

    // An indicator binary picks which side of each complementarity pair is
    // slack: slack <= M(1-d), multiplier <= cap*d.
    let complement = |model: &mut Model,
                          name: String,
                          slack: Vec<(VarId, f64)>,
                          slack_rhs: f64,
                          slack_cap: f64,
                          multiplier: VarId,
                          mult_cap: f64| {
        let d = model.add_binary(format!("{name}_active"));
        model.set_branch_class(d, 3);
        let mut coeffs = slack;
        coeffs.push((d, slack_cap));
        model.add_row(format!("{name}_slack"), coeffs, Sense::Le, slack_rhs + slack_cap);
        model.add_row(
            format!("{name}_mult"),
            vec![(multiplier, 1.0), (d, -mult_cap)],
            Sense::Le,
            0.0,
        );
    };

    // Pair rows and their complementarity.
    for (i, cut) in cuts.iter().enumerate() {
        let mut coeffs = vec![(eta, 1.0)];
        for v in 0..nv {
            if cut.u_coef[v] != 0.0 {
                coeffs.push((u[v], -cut.u_coef[v]));
            }
        }
        for m in 0..nm {
            if cut.h0_coef[m] != 0.0 {
                coeffs.push((h0[m], -cut.h0_coef[m]));
            }
        }
        model.add_row(format!("{prefix}pair[{i}]"), coeffs.clone(), Sense::Ge, cut.constant);
        let slack_cap = (eta_hi - ranges[i].0).max(1.0) + 1.0;
        complement(
            model,
            format!("{prefix}pair[{i}]"),
            coeffs,
            cut.constant,
            slack_cap,
            alpha[i],
            1.0,
        );
    }
    // Damage budget.
    let budget_coeffs: Vec<(VarId, f64)> = u.iter().map(|&id| (id, 1.0)).collect();
    model.add_row(
        format!("{prefix}damage_budget"),
        budget_coeffs.clone(),
        Sense::Ge,
        nv as f64 - inst.k as f64,
    );
    complement(
        model,
        format!("{prefix}damage_budget"),
        budget_coeffs.iter().map(|&(id, c)| (id, c)).collect(),
        nv as f64 - inst.k as f64,
        inst.k as f64 + 1.0,
        beta,
        cap,
    );
    // With binary u the damage-row slacks are 0/1 quantities, so u itself
    // gates the multipliers exactly and no indicator is needed: rho may be
    // positive only when u equals the protection level, nu only when the
    // line survives.
    for v in 0..nv {
        let mut coeffs = vec![(u[v], 1.0)];
        let mut rhs = 0.0;
        push_term(&mut coeffs, &mut rhs, first_stage.harden_term(v), -1.0);
        model.add_row(format!("{prefix}protected[{v}]"), coeffs, Sense::Ge, rhs);
        let mut link = vec![(rho[v], 1.0), (u[v], cap)];
        let mut link_rhs = cap;
        push_term(&mut link, &mut link_rhs, first_stage.harden_term(v), -cap);
        model.add_row(format!("{prefix}rho_gate[{v}]"), link, Sense::Le, link_rhs);
        model.add_row(
            format!("{prefix}nu_gate[{v}]"),
            vec![(nu[v], 1.0), (u[v], -cap)],
            Sense::Le,
            0.0,
        );
    }
    for m in 0..nm {
        let h_max = inst.fleet.units[m].h_max_kg;
        let mut lo = vec![(h0[m], 1.0)];
        let mut lo_rhs = 0.0;
        push_term(&mut lo, &mut lo_rhs, first_stage.rent_term(m), -inst.sigma1 * h_max);
        model.add_row(format!("{prefix}storage_floor[{m}]"), lo.clone(), Sense::Ge, lo_rhs);
        complement(
            model,
            format!("{prefix}storage_floor[{m}]"),
            lo,
            lo_rhs,
            h_max + 1.0,
            th_lo[m],
            cap,
        );
        let mut hi = vec![(h0[m], -1.0)];
        let mut hi_rhs = 0.0;
        push_term(&mut hi, &mut hi_rhs, first_stage.rent_term(m), h_max);
        // Row: H_max*chi - h0 >= 0.
        model.add_row(format!("{prefix}storage_cap[{m}]"), hi.clone(), Sense::Ge, hi_rhs);
        complement(
            model,
            format!("{prefix}storage_cap[{m}]"),
            hi,
            hi_rhs,
            h_max + 1.0,
            th_hi[m],
            cap,
        );
    }
    if let Some(tau) = tau {
        let mut agg: Vec<(VarId, f64)> = Vec::new();
        let mut agg_rhs = 0.0;
        let mut slack_cap = 1.0;
        for &m in &premium {
            agg.push((h0[m], 1.0));
            push_term(
                &mut agg,
                &mut agg_rhs,
                first_stage.rent_term(m),
                -inst.sigma2 * inst.fleet.units[m].h_max_kg,
            );
            slack_cap += inst.fleet.units[m].h_max_kg;
        }
        model.add_row(format!("{prefix}premium_floor"), agg.clone(), Sense::Ge, agg_rhs);
        complement(model, format!("{prefix}premium_floor"), agg, agg_rhs, slack_cap, tau, cap);
    }

    // Stationarity of the scenario program.
    model.add_row(
        format!("{prefix}stat_eta"),
        alpha.iter().map(|&a| (a, 1.0)).collect(),
        Sense::Eq,
        1.0,
    );
    for v in 0..nv {
        let mut coeffs: Vec<(VarId, f64)> = Vec::new();
        for (i, cut) in cuts.iter().enumerate() {
            if cut.u_coef[v] != 0.0 {
                coeffs.push((alpha[i], cut.u_coef[v]));
            }
        }
        coeffs.push((beta, -1.0));
        coeffs.push((rho[v], -1.0));
        coeffs.push((nu[v], 1.0));
        model.add_row(format!("{prefix}stat_u[{v}]"), coeffs, Sense::Eq, 0.0);
    }
    for m in 0..nm {
        let mut coeffs: Vec<(VarId, f64)> = Vec::new();
        for (i, cut) in cuts.iter().enumerate() {
            if cut.h0_coef[m] != 0.0 {
                coeffs.push((alpha[i], cut.h0_coef[m]));
            }
        }
        coeffs.push((th_lo[m], -1.0));
        coeffs.push((th_hi[m], 1.0));
        if let Some(tau) = tau {
            if inst.fleet.units[m].premium {
                coeffs.push((tau, -1.0));
            }
        }
        model.add_row(format!("{prefix}stat_h0[{m}]"), coeffs, Sense::Eq, 0.0);
    }

    Ok(OuBlockVars { u, h0, eta })
}

/// Auxiliary singleton system pinning the last worst-case damage pattern:
/// strong-duality encoding of  min (a + theta)' u  over the damage rows,
/// where a places a large weight on every line that failed in u_star and
/// theta accumulates how often lines survived across the inner iterates.
/// The system is relaxed automatically (through an overlap indicator) as
/// soon as the master hardens any line that failed in u_star.
pub fn append_ou_prime_block(
    model: &mut Model,
    inst: &NetworkInstance,
    u_vars: &[VarId],
    first_stage: FirstStage,
    u_star: &[bool],
    inner_history: &[Vec<bool>],
    prefix: &str,
) {
    let nv = inst.vulnerable.len();
    let theta: Vec<f64> = (0..nv)
        .map(|v| {
            inner_history
                .iter()
                .map(|u| if u[v] { 0.0 } else { 1.0 })
                .sum()
        })
        .collect();
    let theta_max = theta.iter().fold(0.0f64, |a, &b| a.max(b));
    let m2 = 10.0 * nv as f64 * (1.0 + theta_max);
    let weight: Vec<f64> = (0..nv)
        .map(|v| if u_star[v] { theta[v] } else { m2 + theta[v] })
        .collect();
    let mult_cap = weight.iter().fold(0.0f64, |a, &b| a.max(b)) + 1.0;

    let beta = model.add_continuous(format!("{prefix}aux_beta"), 0.0, mult_cap);
    let rho: Vec<VarId> = (0..nv)
        .map(|v| model.add_continuous(format!("{prefix}aux_rho[{v}]"), 0.0, mult_cap))
        .collect();
    let nu: Vec<VarId> = (0..nv)
        .map(|v| model.add_continuous(format!("{prefix}aux_nu[{v}]"), 0.0, mult_cap))
        .collect();

    // Overlap indicator: 1 as soon as any failed line of u_star is hardened.
    let zeros: Vec<usize> = (0..nv).filter(|&v| !u_star[v]).collect();
    let overlap = model.add_binary(format!("{prefix}aux_overlap"));
    model.set_branch_class(overlap, 3);
    match first_stage {
        FirstStage::Symbolic { harden, .. } => {
            let mut total: Vec<(VarId, f64)> = vec![(overlap, 1.0)];
            for &v in &zeros {
                model.add_row(
                    format!("{prefix}aux_overlap_ge[{v}]"),
                    vec![(overlap, 1.0), (harden[v], -1.0)],
                    Sense::Ge,
                    0.0,
                );
                total.push((harden[v], -1.0));
            }
            model.add_row(format!("{prefix}aux_overlap_le"), total, Sense::Le, 0.0);
        }
        FirstStage::Fixed(z) => {
            let val = if zeros.iter().any(|&v| z.hardened[v]) { 1.0 } else { 0.0 };
            model.add_row(
                format!("{prefix}aux_overlap_fix"),
                vec![(overlap, 1.0)],
                Sense::Eq,
                val,
            );
        }
    }

    // Dual feasibility of the auxiliary program.
    for v in 0..nv {
        model.add_row(
            format!("{prefix}aux_stat[{v}]"),
            vec![(beta, -1.0), (rho[v], -1.0), (nu[v], 1.0)],
            Sense::Eq,
            -weight[v],
        );
    }
    // Strong duality pins u to the auxiliary optimum unless overlap fires:
    // w'u <= (n-k) beta + sum_v x_v rho_v - sum_v nu_v + M * overlap.
    let relax = weight.iter().sum::<f64>() + nv as f64 * mult_cap + 1.0;
    let mut coeffs: Vec<(VarId, f64)> = Vec::new();
    for v in 0..nv {
        if weight[v] != 0.0 {
            coeffs.push((u_vars[v], weight[v]));
        }
        coeffs.push((nu[v], 1.0));
    }
    coeffs.push((beta, -(nv as f64 - inst.k as f64)));
    coeffs.push((overlap, -relax));
    let rhs = 0.0;
    match first_stage {
        FirstStage::Symbolic { harden, .. } => {
            for v in 0..nv {
                // Product x_v * rho_v via an envelope variable.
                let prod = model.add_continuous(format!("{prefix}aux_xr[{v}]"), 0.0, mult_cap);
                model.add_row(
                    format!("{prefix}aux_xr_cap[{v}]"),
                    vec![(prod, 1.0), (harden[v], -mult_cap)],
                    Sense::Le,
                    0.0,
                );
                model.add_row(
                    format!("{prefix}aux_xr_ub[{v}]"),
                    vec![(prod, 1.0), (rho[v], -1.0)],
                    Sense::Le,
                    0.0,
                );
                model.add_row(
                    format!("{prefix}aux_xr_lb[{v}]"),
                    vec![(prod, 1.0), (rho[v], -1.0), (harden[v], -mult_cap)],
                    Sense::Ge,
                    -mult_cap,
                );
                coeffs.push((prod, -1.0));
            }
        }
        FirstStage::Fixed(z) => {
            for v in 0..nv {
                if z.hardened[v] {
                    coeffs.push((rho[v], -1.0));
                }
            }
        }
    }
    model.add_row(format!("{prefix}aux_strong_duality"), coeffs, Sense::Le, rhs);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suites::fixtures;
    use crate::instance::load_instance;

    fn rented_one(inst: &NetworkInstance) -> FirstStageDecision {
        let mut z = FirstStageDecision::all_zero(inst);
        z.rented[0] = true;
        z.preallocation[0] = Some(0);
        z
    }

    #[test]
    fn damage_patterns_count_under_hardening() {
        // 5 vulnerable lines, k=2, one hardened: C(4,0)+C(4,1)+C(4,2) = 11.
        let inst = fixtures::line5_instance();
        let mut z = FirstStageDecision::all_zero(&inst);
        z.hardened[0] = true;
        let scenarios = enumerate_scenario_vertices(&inst, &z).unwrap();
        let mut patterns: Vec<Vec<bool>> = scenarios.iter().map(|s| s.intact.clone()).collect();
        patterns.dedup();
        patterns.sort();
        patterns.dedup();
        assert_eq!(patterns.len(), 11);
        assert!(patterns.iter().all(|p| p[0]));
    }

    #[test]
    fn unrented_unit_has_zero_storage() {
        let inst = load_instance(&fixtures::tri_node_json()).unwrap();
        let z = FirstStageDecision::all_zero(&inst);
        for s in enumerate_scenario_vertices(&inst, &z).unwrap() {
            assert!(s.h0.iter().all(|&h| h == 0.0));
        }
    }

    #[test]
    fn single_premium_interval_vertices() {
        // sigma1=0.7, sigma2=0.9, H=30: band [21, 30] tightens to [27, 30];
        // interval vertices are exactly {27, 30}.
        let inst = fixtures::premium_one_instance(30.0);
        let z = rented_one(&inst);
        let verts = storage_vertices(&inst, &z);
        assert_eq!(verts.len(), 2);
        assert!((verts[0][0] - 27.0).abs() < 1e-9, "{verts:?}");
        assert!((verts[1][0] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn two_premium_units_respect_aggregate_floor() {
        let inst = fixtures::premium_two_instance(30.0, 45.0);
        let mut z = FirstStageDecision::all_zero(&inst);
        z.rented = vec![true, true];
        z.preallocation = vec![Some(0), Some(0)];
        let verts = storage_vertices(&inst, &z);
        // 4 bound patterns filtered by the floor plus the sum-tight mixed
        // vertices; all satisfy the 67.5 kg aggregate floor.
        for v in &verts {
            assert!(v[0] + v[1] >= 67.5 - 1e-9, "{v:?}");
        }
        let expect = vec![vec![22.5, 45.0], vec![30.0, 37.5], vec![30.0, 45.0]];
        assert_eq!(verts.len(), expect.len(), "{verts:?}");
        for (a, b) in verts.iter().zip(expect.iter()) {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9, "{verts:?}");
        }
    }

    #[test]
    fn k_zero_single_pattern() {
        let mut inst = fixtures::line5_instance();
        inst.k = 0;
        let z = FirstStageDecision::all_zero(&inst);
        let scenarios = enumerate_scenario_vertices(&inst, &z).unwrap();
        assert_eq!(scenarios.len(), 1);
        assert!(scenarios[0].intact.iter().all(|&b| b));
    }

    #[test]
    fn relaxed_vertices_are_integral() {
        let inst = fixtures::line5_instance();
        let mut z = FirstStageDecision::all_zero(&inst);
        z.hardened[2] = true;
        let verts = enumerate_relaxed_u_vertices(&inst, &z);
        assert!(!verts.is_empty());
        for v in &verts {
            for &coord in v {
                assert!(
                    (coord - coord.round()).abs() < 1e-7,
                    "fractional vertex coordinate {coord} in {v:?}"
                );
            }
        }
    }

    #[test]
    fn enumeration_cap_respected() {
        let mut inst = fixtures::line5_instance();
        inst.solver.max_enum_lines = 3;
        let z = FirstStageDecision::all_zero(&inst);
        assert!(matches!(
            enumerate_scenario_vertices(&inst, &z),
            Err(DduError::LineCap(5, 3))
        ));
    }

    mod ou_block {
        use super::super::*;
        use crate::formulation::{recourse_template, DualPoint, Upsilon, VuPair, VuPairSet};
        use crate::instance::load_instance;
        use crate::model::Objective;
        use crate::npccg::{extract_extreme_point, inner_subproblem};
        use crate::solver::{solve_milp, SolveParams, SolveStatus};
        use crate::suites::fixtures;

        fn tri_with_rented() -> (NetworkInstance, FirstStageDecision) {
            let inst = load_instance(&fixtures::tri_node_json()).unwrap();
            let mut z = FirstStageDecision::all_zero(&inst);
            z.rented[0] = true;
            z.preallocation[0] = Some(0);
            (inst, z)
        }

        /// One real pair extracted by solving the recourse at a scenario.
        fn real_pair(inst: &NetworkInstance, z: &FirstStageDecision) -> VuPairSet {
            let template = recourse_template(inst);
            let s = Scenario { intact: vec![true, false], h0: vec![27.0] };
            let (ups, _, _) = inner_subproblem(inst, &template, z, &s, &SolveParams::default()).unwrap();
            let mu = extract_extreme_point(inst, &template, z, &s, &ups).unwrap();
            let mut pairs = VuPairSet::new();
            pairs.push(VuPair { upsilon: ups, mu });
            pairs
        }

        #[test]
        fn block_value_matches_direct_scenario_minimum() {
            // Solving the embedded optimality system must land on the same
            // objective as minimizing the pair envelope over the scenario
            // vertices directly, and both min and max over the block agree
            // (every feasible point is optimal).
            let (inst, z) = tri_with_rented();
            let template = recourse_template(&inst);
            let pairs = real_pair(&inst, &z);
            let direct = enumerate_scenario_vertices(&inst, &z)
                .unwrap()
                .iter()
                .map(|s| {
                    pairs
                        .iter()
                        .map(|p| template.dual_objective(&p.mu, &p.upsilon, s))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            for maximize in [false, true] {
                let mut model = Model::new(
                    "ou_probe",
                    if maximize { Objective::Maximize } else { Objective::Minimize },
                );
                let ou = append_ou_block(
                    &mut model,
                    &inst,
                    &template,
                    &pairs,
                    FirstStage::Fixed(&z),
                    "",
                )
                .unwrap();
                model.set_obj(ou.eta, 1.0);
                let sol = solve_milp(&model, &SolveParams::default()).unwrap();
                assert_eq!(sol.status, SolveStatus::Optimal);
                assert!(
                    (sol.objective - direct).abs() <= 1e-6,
                    "block eta {} vs direct {} (maximize {})",
                    sol.objective,
                    direct,
                    maximize
                );
            }
        }

        #[test]
        fn constant_pair_admits_every_scenario() {
            // A pair whose value ignores the scenario leaves the block free
            // to pick any point of the uncertainty set.
            let (inst, z) = tri_with_rented();
            let template = recourse_template(&inst);
            let mut pairs = VuPairSet::new();
            let nb = template.binary_vars.len();
            pairs.push(VuPair {
                upsilon: Upsilon { bits: vec![false; nb] },
                mu: DualPoint {
                    lambda: vec![0.0; template.lambda_rows.len()],
                    pi: vec![0.0; template.pi_rows.len()],
                },
            });
            for probe_up in [true, false] {
                let mut model = Model::new("ou_probe", Objective::Maximize);
                let ou = append_ou_block(
                    &mut model,
                    &inst,
                    &template,
                    &pairs,
                    FirstStage::Fixed(&z),
                    "",
                )
                .unwrap();
                // Push the damage pattern both ways: min and max of sum(u).
                for &u in &ou.u {
                    model.set_obj(u, if probe_up { 1.0 } else { -1.0 });
                }
                let sol = solve_milp(&model, &SolveParams::default()).unwrap();
                assert_eq!(sol.status, SolveStatus::Optimal);
                let total: f64 = ou.u.iter().map(|&u| sol.assignment[u.idx()]).sum();
                if probe_up {
                    assert_eq!(total, inst.vulnerable.len() as f64);
                } else {
                    assert_eq!(total, (inst.vulnerable.len() as f64) - inst.k as f64);
                }
            }
        }

        #[test]
        fn damage_part_integral_without_branching() {
            // On a generic instance the block's damage pattern comes out
            // binary already at the relaxation optimum backing the master.
            let (inst, z) = tri_with_rented();
            let template = recourse_template(&inst);
            let pairs = real_pair(&inst, &z);
            let mut model = Model::new("ou_probe", Objective::Minimize);
            let ou =
                append_ou_block(&mut model, &inst, &template, &pairs, FirstStage::Fixed(&z), "")
                    .unwrap();
            model.set_obj(ou.eta, 1.0);
            let sol = solve_milp(&model, &SolveParams::default()).unwrap();
            for &u in &ou.u {
                let v = sol.assignment[u.idx()];
                assert!((v - v.round()).abs() < 1e-6);
            }
        }

        #[test]
        fn singleton_block_pins_last_damage_pattern() {
            // Without overlap the auxiliary system admits exactly the
            // pattern it was built from.
            let (inst, z) = tri_with_rented();
            let u_star = vec![true, false]; // line 2 failed
            for (hardened, expect_pinned) in [(vec![false, false], true), (vec![false, true], false)]
            {
                let mut zh = z.clone();
                zh.hardened = hardened;
                let mut model = Model::new("aux_probe", Objective::Maximize);
                let vars = append_ddu_polytope(&mut model, &inst, FirstStage::Fixed(&zh), false, "");
                append_ou_prime_block(
                    &mut model,
                    &inst,
                    &vars.u,
                    FirstStage::Fixed(&zh),
                    &u_star,
                    &[vec![true, true]],
                    "",
                );
                // Probe: try to keep the failed line alive.
                model.set_obj(vars.u[1], 1.0);
                let sol = solve_milp(&model, &SolveParams::default()).unwrap();
                assert_eq!(sol.status, SolveStatus::Optimal);
                let survived = sol.assignment[vars.u[1].idx()] > 0.5;
                if expect_pinned {
                    assert!(!survived, "block should pin the failed line down");
                    assert!(sol.assignment[vars.u[0].idx()] > 0.5);
                } else {
                    assert!(survived, "hardening overlap must relax the block");
                }
            }
        }
    }
}
