//! Bounded-variable primal simplex over a dense basis inverse.
//!
//! The computational form keeps every row as an equality `A x - s = 0` with a
//! logical variable `s` carrying the row bounds, so the right-hand side is
//! identically zero and all data lives in bounds. Phase 1 minimizes the sum
//! of bound violations of basic variables with composite costs; phase 2 runs
//! Dantzig pricing with a Bland fallback after degenerate stretches.
//!
//! Bounds are owned by the solver and may be changed between solves: branch
//! and bound fixes binaries and scenario sweeps move row bounds, and both
//! re-solve warmly from the current basis without refactorizing.

use crate::model::{Model, Objective, Sense};

pub const FEAS_TOL: f64 = 1e-7;
const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 400;
const BLAND_AFTER: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free nonbasic pinned at zero.
    FreeZero,
}

/// Snapshot of a basis for cross-model warm starts.
#[derive(Debug, Clone)]
pub struct Basis {
    basis: Vec<usize>,
    state: Vec<ColState>,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    /// Objective in the original model orientation.
    pub obj: f64,
    /// Structural variable values.
    pub x: Vec<f64>,
    /// Row duals in the original orientation: with a maximization primal,
    /// duals of tight `>=` rows are nonpositive and of tight `<=` rows
    /// nonnegative; equality rows are free. Inactive rows carry zero.
    pub duals: Vec<f64>,
    /// Reduced costs of structural variables, original orientation.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    pub basis: Basis,
}

/// Sparse columns of the structural part.
struct Cols {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

pub struct LpForm {
    pub n_struct: usize,
    pub n_rows: usize,
    /// Minimization costs, scaled so the largest magnitude is one.
    cost: Vec<f64>,
    /// Initial bounds of structural variables followed by row logicals.
    lb: Vec<f64>,
    ub: Vec<f64>,
    cols: Cols,
    /// -1 when the original model maximizes (results are mapped back).
    flip: f64,
    /// Multiplier that restores the original cost magnitudes.
    cost_scale: f64,
}

impl LpForm {
    pub fn from_model(model: &Model) -> LpForm {
        let n = model.n_vars();
        let m = model.n_rows();
        let flip = match model.objective {
            Objective::Minimize => 1.0,
            Objective::Maximize => -1.0,
        };
        let mut cost = vec![0.0; n];
        let mut lb = vec![0.0; n + m];
        let mut ub = vec![0.0; n + m];
        for (j, v) in model.vars.iter().enumerate() {
            cost[j] = flip * v.obj;
            lb[j] = v.lb;
            ub[j] = v.ub;
        }
        let cost_scale = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let cost_scale = if cost_scale > 0.0 { cost_scale } else { 1.0 };
        for c in &mut cost {
            *c /= cost_scale;
        }
        let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in model.rows.iter().enumerate() {
            for &(v, c) in &row.coeffs {
                per_col[v.idx()].push((i, c));
            }
            let (rlo, rhi) = match row.sense {
                Sense::Le => (f64::NEG_INFINITY, row.rhs),
                Sense::Ge => (row.rhs, f64::INFINITY),
                Sense::Eq => (row.rhs, row.rhs),
            };
            lb[n + i] = rlo;
            ub[n + i] = rhi;
        }
        let mut ptr = Vec::with_capacity(n + 1);
        let mut idx = Vec::new();
        let mut val = Vec::new();
        ptr.push(0);
        for j in 0..n {
            for &(i, c) in &per_col[j] {
                idx.push(i);
                val.push(c);
            }
            ptr.push(idx.len());
        }
        LpForm {
            n_struct: n,
            n_rows: m,
            cost,
            lb,
            ub,
            cols: Cols { ptr, idx, val },
            flip,
            cost_scale,
        }
    }

    fn n_cols(&self) -> usize {
        self.n_struct + self.n_rows
    }

    /// out += coef * column(j), logicals included.
    fn add_col_into(&self, j: usize, coef: f64, out: &mut [f64]) {
        if j < self.n_struct {
            for k in self.cols.ptr[j]..self.cols.ptr[j + 1] {
                out[self.cols.idx[k]] += coef * self.cols.val[k];
            }
        } else {
            out[j - self.n_struct] -= coef;
        }
    }

    fn dot_col(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n_struct {
            let mut acc = 0.0;
            for k in self.cols.ptr[j]..self.cols.ptr[j + 1] {
                acc += y[self.cols.idx[k]] * self.cols.val[k];
            }
            acc
        } else {
            -y[j - self.n_struct]
        }
    }
}

pub struct Simplex {
    form: LpForm,
    m: usize,
    /// Working bounds (structurals then logicals); mutable between solves.
    lb: Vec<f64>,
    ub: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<ColState>,
    /// Dense basis inverse, column-major (m x m).
    binv: Vec<f64>,
    xb: Vec<f64>,
    xn: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
    degenerate_run: usize,
    pivots_since_refactor: usize,
}

impl Simplex {
    pub fn new(form: LpForm) -> Simplex {
        let m = form.n_rows;
        let n_cols = form.n_cols();
        let lb = form.lb.clone();
        let ub = form.ub.clone();
        let mut s = Simplex {
            form,
            m,
            lb,
            ub,
            basis: Vec::new(),
            state: vec![ColState::AtLower; n_cols],
            binv: vec![0.0; m * m],
            xb: vec![0.0; m],
            xn: vec![0.0; n_cols],
            iterations: 0,
            max_iterations: 400_000,
            degenerate_run: 0,
            pivots_since_refactor: 0,
        };
        s.reset_to_logical_basis();
        s
    }

    pub fn form(&self) -> &LpForm {
        &self.form
    }

    /// Pivot count of the most recent solve.
    pub fn last_iterations(&self) -> usize {
        self.iterations
    }

    pub fn col_bounds(&self, col: usize) -> (f64, f64) {
        (self.lb[col], self.ub[col])
    }

    /// All-logical basis: B = -I, so the inverse is -I directly.
    fn reset_to_logical_basis(&mut self) {
        let m = self.m;
        self.basis = (self.form.n_struct..self.form.n_struct + m).collect();
        for j in 0..self.form.n_cols() {
            self.state[j] = self.default_nonbasic_state(j);
        }
        for (i, &b) in self.basis.clone().iter().enumerate() {
            self.state[b] = ColState::Basic(i);
        }
        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            self.binv[i * m + i] = -1.0;
        }
        self.pivots_since_refactor = 0;
        self.recompute_xb();
    }

    /// Installs a snapshot (refactorizing once); falls back to the logical
    /// basis when the snapshot no longer fits or is singular.
    pub fn install_basis(&mut self, snapshot: &Basis) {
        if snapshot.basis.len() != self.m || snapshot.state.len() != self.form.n_cols() {
            self.reset_to_logical_basis();
            return;
        }
        let saved_basis = std::mem::replace(&mut self.basis, snapshot.basis.clone());
        let saved_state = std::mem::replace(&mut self.state, snapshot.state.clone());
        self.clamp_nonbasic_states();
        if !self.refactorize() {
            self.basis = saved_basis;
            self.state = saved_state;
            self.reset_to_logical_basis();
        }
    }

    /// Changes a column bound (structural variable or row logical). The
    /// basis stays; nonbasic states are re-clamped lazily at solve time.
    pub fn set_col_bounds(&mut self, col: usize, lo: f64, hi: f64) {
        self.lb[col] = lo;
        self.ub[col] = hi;
    }

    /// Bounds of a row logical (for right-hand-side updates).
    pub fn set_row_bounds(&mut self, row: usize, lo: f64, hi: f64) {
        self.set_col_bounds(self.form.n_struct + row, lo, hi);
    }

    pub fn reset_bounds_from_form(&mut self) {
        self.lb.copy_from_slice(&self.form.lb);
        self.ub.copy_from_slice(&self.form.ub);
    }

    fn clamp_nonbasic_states(&mut self) {
        for j in 0..self.form.n_cols() {
            if matches!(self.state[j], ColState::Basic(_)) {
                continue;
            }
            self.state[j] = match self.state[j] {
                ColState::AtUpper if self.ub[j].is_finite() => ColState::AtUpper,
                ColState::AtLower if self.lb[j].is_finite() => ColState::AtLower,
                _ => self.default_nonbasic_state(j),
            };
        }
    }

    fn default_nonbasic_state(&self, j: usize) -> ColState {
        let (lo, hi) = (self.lb[j], self.ub[j]);
        if lo.is_finite() {
            if hi.is_finite() && hi.abs() < lo.abs() {
                ColState::AtUpper
            } else {
                ColState::AtLower
            }
        } else if hi.is_finite() {
            ColState::AtUpper
        } else {
            ColState::FreeZero
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            ColState::AtLower => self.lb[j],
            ColState::AtUpper => self.ub[j],
            ColState::FreeZero => 0.0,
            ColState::Basic(i) => self.xb[i],
        }
    }

    /// Rebuilds the dense inverse by Gauss-Jordan on row-major workspaces;
    /// sparse factor columns make most eliminations skippable. Returns false
    /// when the basis is singular.
    fn refactorize(&mut self) -> bool {
        let m = self.m;
        // mat[r*m + c], one basis column per c.
        let mut mat = vec![0.0; m * m];
        for (pos, &b) in self.basis.iter().enumerate() {
            if b < self.form.n_struct {
                for k in self.form.cols.ptr[b]..self.form.cols.ptr[b + 1] {
                    mat[self.form.cols.idx[k] * m + pos] += self.form.cols.val[k];
                }
            } else {
                mat[(b - self.form.n_struct) * m + pos] -= 1.0;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        let mut row_of = (0..m).collect::<Vec<usize>>();
        for step in 0..m {
            let mut best = step;
            let mut best_val = 0.0;
            for r in step..m {
                let v = mat[row_of[r] * m + step].abs();
                if v > best_val {
                    best_val = v;
                    best = r;
                }
            }
            if best_val < 1e-11 {
                return false;
            }
            row_of.swap(step, best);
            let prow = row_of[step];
            let piv = mat[prow * m + step];
            let inv_piv = 1.0 / piv;
            for c in step..m {
                mat[prow * m + c] *= inv_piv;
            }
            for c in 0..m {
                inv[prow * m + c] *= inv_piv;
            }
            for r in 0..m {
                if r == prow {
                    continue;
                }
                let f = mat[r * m + step];
                if f == 0.0 {
                    continue;
                }
                // Split borrows: the pivot row is disjoint from row r.
                let (mat_pr, mat_r) = split_rows(&mut mat, m, prow, r);
                for c in step..m {
                    mat_r[c] -= f * mat_pr[c];
                }
                let (inv_pr, inv_r) = split_rows(&mut inv, m, prow, r);
                for c in 0..m {
                    inv_r[c] -= f * inv_pr[c];
                }
            }
        }
        // Column-major inverse with basis-position rows.
        for i in 0..m {
            let src = row_of[i];
            for c in 0..m {
                self.binv[c * m + i] = inv[src * m + c];
            }
        }
        self.pivots_since_refactor = 0;
        true
    }

    /// xb = -Binv * (sum of nonbasic columns at their values).
    fn recompute_xb(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.form.n_cols() {
            if matches!(self.state[j], ColState::Basic(_)) {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.xn[j] = v;
            if v != 0.0 {
                self.form.add_col_into(j, v, &mut rhs);
            }
        }
        for i in 0..m {
            let mut acc = 0.0;
            for c in 0..m {
                acc += self.binv[c * m + i] * rhs[c];
            }
            self.xb[i] = -acc;
        }
    }

    /// w = Binv * column(j).
    fn ftran(&self, j: usize, w: &mut [f64]) {
        let m = self.m;
        w.iter_mut().for_each(|v| *v = 0.0);
        if j < self.form.n_struct {
            for k in self.form.cols.ptr[j]..self.form.cols.ptr[j + 1] {
                let r = self.form.cols.idx[k];
                let v = self.form.cols.val[k];
                let col = &self.binv[r * m..(r + 1) * m];
                for i in 0..m {
                    w[i] += v * col[i];
                }
            }
        } else {
            let r = j - self.form.n_struct;
            let col = &self.binv[r * m..(r + 1) * m];
            for i in 0..m {
                w[i] -= col[i];
            }
        }
    }

    /// y = costs_B' * Binv for an arbitrary basic cost vector.
    fn btran(&self, cb: &[f64], y: &mut [f64]) {
        let m = self.m;
        for c in 0..m {
            let col = &self.binv[c * m..(c + 1) * m];
            let mut acc = 0.0;
            for i in 0..m {
                acc += cb[i] * col[i];
            }
            y[c] = acc;
        }
    }

    fn phase1_costs(&self, cb: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (i, &b) in self.basis.iter().enumerate() {
            let x = self.xb[i];
            cb[i] = 0.0;
            if x < self.lb[b] - FEAS_TOL {
                cb[i] = -1.0;
                total += self.lb[b] - x;
            } else if x > self.ub[b] + FEAS_TOL {
                cb[i] = 1.0;
                total += x - self.ub[b];
            }
        }
        total
    }

    fn struct_cost(&self, j: usize) -> f64 {
        if j < self.form.n_struct {
            self.form.cost[j]
        } else {
            0.0
        }
    }

    /// Full solve from the current basis: clamp states, recompute values,
    /// then phase 1 and phase 2.
    pub fn solve(&mut self) -> LpStatus {
        self.clamp_nonbasic_states();
        self.recompute_xb();
        self.iterations = 0;
        self.degenerate_run = 0;
        match self.run_phase(true) {
            LpStatus::Optimal => {}
            s => return s,
        }
        self.run_phase(false)
    }

    fn run_phase(&mut self, phase1: bool) -> LpStatus {
        let m = self.m;
        let mut cb = vec![0.0; m];
        let mut y = vec![0.0; m];
        let mut w = vec![0.0; m];
        loop {
            if self.iterations >= self.max_iterations {
                return LpStatus::IterLimit;
            }
            if phase1 {
                let infeas = self.phase1_costs(&mut cb);
                if infeas <= FEAS_TOL {
                    return LpStatus::Optimal;
                }
            } else {
                for (i, &b) in self.basis.iter().enumerate() {
                    cb[i] = self.struct_cost(b);
                }
            }
            self.btran(&cb, &mut y);
            let bland = self.degenerate_run >= BLAND_AFTER;
            let entering = self.price(phase1, &y, bland);
            let (j, dir) = match entering {
                Some(e) => e,
                None => {
                    // Rule out stale factors before trusting a terminal
                    // verdict from a warm basis.
                    if self.pivots_since_refactor > 0 {
                        self.refactorize();
                        self.recompute_xb();
                        continue;
                    }
                    if phase1 {
                        let infeas = self.phase1_costs(&mut cb);
                        return if infeas <= FEAS_TOL {
                            LpStatus::Optimal
                        } else {
                            LpStatus::Infeasible
                        };
                    }
                    return LpStatus::Optimal;
                }
            };
            self.ftran(j, &mut w);
            match self.step(phase1, j, dir, bland, &w) {
                StepOutcome::Moved => {}
                StepOutcome::Unbounded => {
                    if self.pivots_since_refactor > 0 {
                        self.refactorize();
                        self.recompute_xb();
                        continue;
                    }
                    return if phase1 {
                        LpStatus::Infeasible
                    } else {
                        LpStatus::Unbounded
                    };
                }
            }
            self.iterations += 1;
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactorize();
                self.recompute_xb();
            }
        }
    }

    /// Picks an entering column and its direction (+1 increase, -1 decrease).
    fn price(&self, phase1: bool, y: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.form.n_cols() {
            let st = self.state[j];
            if matches!(st, ColState::Basic(_)) {
                continue;
            }
            if self.ub[j] - self.lb[j] < 1e-12 {
                continue; // fixed
            }
            let c = if phase1 { 0.0 } else { self.struct_cost(j) };
            let d = c - self.form.dot_col(j, y);
            let (eligible, dir) = match st {
                ColState::AtLower => (d < -COST_TOL, 1.0),
                ColState::AtUpper => (d > COST_TOL, -1.0),
                ColState::FreeZero => (d.abs() > COST_TOL, if d > 0.0 { -1.0 } else { 1.0 }),
                ColState::Basic(_) => unreachable!(),
            };
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, dir));
            }
            let score = d.abs();
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn step(&mut self, phase1: bool, j: usize, dir: f64, bland: bool, w: &[f64]) -> StepOutcome {
        let mut t_best = f64::INFINITY;
        let mut leave: Option<(usize, ColState, f64)> = None;
        for i in 0..self.m {
            let b = self.basis[i];
            let delta = -dir * w[i];
            if delta.abs() <= PIVOT_TOL {
                continue;
            }
            let x = self.xb[i];
            let (lo, hi) = (self.lb[b], self.ub[b]);
            let below = x < lo - FEAS_TOL;
            let above = x > hi + FEAS_TOL;
            let (t, side) = if phase1 && below {
                if delta > 0.0 {
                    ((lo - x) / delta, ColState::AtLower)
                } else {
                    continue; // moving further out is priced, not blocking
                }
            } else if phase1 && above {
                if delta < 0.0 {
                    ((hi - x) / delta, ColState::AtUpper)
                } else {
                    continue;
                }
            } else if delta > 0.0 {
                if hi.is_finite() {
                    ((hi - x) / delta, ColState::AtUpper)
                } else {
                    continue;
                }
            } else if lo.is_finite() {
                ((lo - x) / delta, ColState::AtLower)
            } else {
                continue;
            };
            let t = t.max(0.0);
            // Ties go to the largest pivot for stability; under Bland's rule
            // the lowest basis column wins so cycling cannot occur.
            let better = t < t_best - 1e-12
                || (t < t_best + 1e-12
                    && match leave {
                        None => true,
                        Some((pos, _, p)) => {
                            if bland {
                                self.basis[i] < self.basis[pos]
                            } else {
                                w[i].abs() > p
                            }
                        }
                    });
            if better {
                t_best = t;
                leave = Some((i, side, w[i].abs()));
            }
        }
        let span = self.ub[j] - self.lb[j];
        let self_blocks = span.is_finite() && span < t_best;
        if self_blocks {
            let old = self.nonbasic_value(j);
            self.state[j] = match self.state[j] {
                ColState::AtLower => ColState::AtUpper,
                ColState::AtUpper => ColState::AtLower,
                other => other,
            };
            let new = self.nonbasic_value(j);
            let change = new - old;
            for i in 0..self.m {
                self.xb[i] -= change * w[i];
            }
            self.xn[j] = new;
            self.degenerate_run = if span <= 1e-12 { self.degenerate_run + 1 } else { 0 };
            return StepOutcome::Moved;
        }
        let (pos, side, _) = match leave {
            Some(l) => l,
            None => return StepOutcome::Unbounded,
        };
        let t = t_best;
        self.degenerate_run = if t <= 1e-12 { self.degenerate_run + 1 } else { 0 };
        let enter_old = self.nonbasic_value(j);
        for i in 0..self.m {
            self.xb[i] -= dir * t * w[i];
        }
        let leaving = self.basis[pos];
        let leave_val = match side {
            ColState::AtLower => self.lb[leaving],
            ColState::AtUpper => self.ub[leaving],
            _ => unreachable!(),
        };
        self.state[leaving] = side;
        self.xn[leaving] = leave_val;
        self.basis[pos] = j;
        self.state[j] = ColState::Basic(pos);
        self.xb[pos] = enter_old + dir * t;
        // Product-form update of the column-major inverse.
        let m = self.m;
        let piv = w[pos];
        for c in 0..m {
            let col = &mut self.binv[c * m..(c + 1) * m];
            let t0 = col[pos] / piv;
            if t0 == 0.0 {
                continue;
            }
            for i in 0..m {
                col[i] -= w[i] * t0;
            }
            col[pos] = t0;
        }
        self.pivots_since_refactor += 1;
        StepOutcome::Moved
    }

    /// Assembles the result in the original model orientation. A clean
    /// factorization precedes the final numbers when the solve succeeded.
    pub fn result(&mut self, status: LpStatus) -> LpResult {
        if matches!(status, LpStatus::Optimal) && self.pivots_since_refactor > 0 {
            self.refactorize();
            self.recompute_xb();
        }
        let n = self.form.n_struct;
        let m = self.m;
        let mut x = vec![0.0; n];
        for j in 0..n {
            x[j] = match self.state[j] {
                ColState::Basic(i) => self.xb[i],
                _ => self.nonbasic_value(j),
            };
        }
        let cb: Vec<f64> = self.basis.iter().map(|&b| self.struct_cost(b)).collect();
        let mut y = vec![0.0; m];
        self.btran(&cb, &mut y);
        let flip = self.form.flip;
        let scale = self.form.cost_scale;
        let duals: Vec<f64> = y.iter().map(|&v| flip * scale * v).collect();
        let mut reduced = vec![0.0; n];
        for j in 0..n {
            reduced[j] = flip * scale * (self.form.cost[j] - self.form.dot_col(j, &y));
        }
        let obj_min: f64 = (0..n).map(|j| scale * self.form.cost[j] * x[j]).sum();
        LpResult {
            status,
            obj: flip * obj_min,
            x,
            duals,
            reduced_costs: reduced,
            iterations: self.iterations,
            basis: Basis {
                basis: self.basis.clone(),
                state: self.state.clone(),
            },
        }
    }

    /// Objective of the current point in the original orientation (valid
    /// after an optimal solve).
    pub fn current_objective(&self) -> f64 {
        let n = self.form.n_struct;
        let mut obj = 0.0;
        for j in 0..n {
            let x = match self.state[j] {
                ColState::Basic(i) => self.xb[i],
                _ => self.nonbasic_value(j),
            };
            obj += self.form.cost_scale * self.form.cost[j] * x;
        }
        self.form.flip * obj
    }

    /// Value of a structural variable at the current point.
    pub fn current_value(&self, j: usize) -> f64 {
        match self.state[j] {
            ColState::Basic(i) => self.xb[i],
            _ => self.nonbasic_value(j),
        }
    }
}

enum StepOutcome {
    Moved,
    Unbounded,
}

/// Rows (a immutable, b mutable) of a row-major square matrix, a != b.
fn split_rows(data: &mut [f64], m: usize, a: usize, b: usize) -> (&[f64], &mut [f64]) {
    debug_assert_ne!(a, b);
    if a < b {
        let (left, right) = data.split_at_mut(b * m);
        (&left[a * m..a * m + m], &mut right[..m])
    } else {
        let (left, right) = data.split_at_mut(a * m);
        (&right[..m], &mut left[b * m..b * m + m])
    }
}

/// One-shot LP solve of a model (integrality dropped), optionally warm.
pub fn solve_relaxation(model: &Model, warm: Option<&Basis>) -> LpResult {
    let form = LpForm::from_model(model);
    let mut spx = Simplex::new(form);
    if let Some(b) = warm {
        spx.install_basis(b);
    }
    let status = spx.solve();
    spx.result(status)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, Objective, Sense};

    #[test]
    fn max_with_single_row_and_dual() {
        let mut m = Model::new("t", Objective::Maximize);
        let y = m.add_continuous("y", f64::NEG_INFINITY, f64::INFINITY);
        m.set_obj(y, 1.0);
        m.add_row("cap", vec![(y, 1.0)], Sense::Le, 3.0);
        let r = solve_relaxation(&m, None);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.obj - 3.0).abs() < 1e-9);
        assert!((r.x[0] - 3.0).abs() < 1e-9);
        assert!((r.duals[0] - 1.0).abs() < 1e-9, "dual {}", r.duals[0]);
    }

    #[test]
    fn infeasible_detected() {
        let mut m = Model::new("t", Objective::Minimize);
        let y = m.add_continuous("y", 0.0, f64::INFINITY);
        m.add_row("neg", vec![(y, 1.0)], Sense::Le, -1.0);
        let r = solve_relaxation(&m, None);
        assert_eq!(r.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut m = Model::new("t", Objective::Maximize);
        let y = m.add_continuous("y", 0.0, f64::INFINITY);
        m.set_obj(y, 1.0);
        m.add_row("lo", vec![(y, 1.0)], Sense::Ge, 1.0);
        let r = solve_relaxation(&m, None);
        assert_eq!(r.status, LpStatus::Unbounded);
    }

    #[test]
    fn textbook_dense_lp() {
        // max 5a + 4b + 3c st 2a+3b+c<=5, 4a+b+2c<=11, 3a+4b+2c<=8
        let mut m = Model::new("t", Objective::Maximize);
        let a = m.add_continuous("a", 0.0, f64::INFINITY);
        let b = m.add_continuous("b", 0.0, f64::INFINITY);
        let c = m.add_continuous("c", 0.0, f64::INFINITY);
        m.set_obj(a, 5.0);
        m.set_obj(b, 4.0);
        m.set_obj(c, 3.0);
        m.add_row("r1", vec![(a, 2.0), (b, 3.0), (c, 1.0)], Sense::Le, 5.0);
        m.add_row("r2", vec![(a, 4.0), (b, 1.0), (c, 2.0)], Sense::Le, 11.0);
        m.add_row("r3", vec![(a, 3.0), (b, 4.0), (c, 2.0)], Sense::Le, 8.0);
        let r = solve_relaxation(&m, None);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.obj - 13.0).abs() < 1e-9);
        let dual_obj = r.duals[0] * 5.0 + r.duals[1] * 11.0 + r.duals[2] * 8.0;
        assert!((dual_obj - 13.0).abs() < 1e-9);
    }

    #[test]
    fn equality_rows_and_bounded_vars() {
        let mut m = Model::new("t", Objective::Minimize);
        let x = m.add_continuous("x", 0.0, 1.0);
        let y = m.add_continuous("y", 0.0, 3.0);
        m.set_obj(x, 1.0);
        m.set_obj(y, 1.0);
        m.add_row("sum", vec![(x, 1.0), (y, 1.0)], Sense::Eq, 2.0);
        let r = solve_relaxation(&m, None);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.obj - 2.0).abs() < 1e-9);
    }

    #[test]
    fn negative_lower_bounds() {
        let mut m = Model::new("t", Objective::Maximize);
        let x = m.add_continuous("x", -2.0, -1.0);
        m.set_obj(x, 1.0);
        let r = solve_relaxation(&m, None);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.obj + 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_lp_terminates() {
        let mut m = Model::new("t", Objective::Maximize);
        let vars: Vec<_> = (0..6)
            .map(|i| {
                let v = m.add_continuous(format!("x{i}"), 0.0, f64::INFINITY);
                m.set_obj(v, 1.0);
                v
            })
            .collect();
        for i in 0..6 {
            let mut coeffs = vec![(vars[i], 1.0)];
            for j in 0..i {
                coeffs.push((vars[j], 2.0));
            }
            m.add_row(format!("r{i}"), coeffs, Sense::Le, 1.0);
        }
        for i in 0..6 {
            m.add_row(format!("z{i}"), vec![(vars[i], 1.0)], Sense::Ge, 0.0);
        }
        let r = solve_relaxation(&m, None);
        assert_eq!(r.status, LpStatus::Optimal);
    }

    #[test]
    fn warm_resolve_after_bound_change() {
        // max x + y st x + y <= 4, x <= 3, y <= 3; then clamp x to 0.
        let mut m = Model::new("t", Objective::Maximize);
        let x = m.add_continuous("x", 0.0, 3.0);
        let y = m.add_continuous("y", 0.0, 3.0);
        m.set_obj(x, 1.0);
        m.set_obj(y, 1.0);
        m.add_row("sum", vec![(x, 1.0), (y, 1.0)], Sense::Le, 4.0);
        let form = LpForm::from_model(&m);
        let mut spx = Simplex::new(form);
        let s1 = spx.solve();
        assert_eq!(s1, LpStatus::Optimal);
        assert!((spx.current_objective() - 4.0).abs() < 1e-9);
        spx.set_col_bounds(0, 0.0, 0.0);
        let s2 = spx.solve();
        assert_eq!(s2, LpStatus::Optimal);
        assert!((spx.current_objective() - 3.0).abs() < 1e-9);
        // Restore and move the row bound instead.
        spx.set_col_bounds(0, 0.0, 3.0);
        spx.set_row_bounds(0, f64::NEG_INFINITY, 2.0);
        let s3 = spx.solve();
        assert_eq!(s3, LpStatus::Optimal);
        assert!((spx.current_objective() - 2.0).abs() < 1e-9);
    }
}
