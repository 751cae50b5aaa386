//! A solver-agnostic linear model: variable declarations, sparse rows, and an
//! objective. Builders append rows; the solver consumes the finished model.

use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

impl VarId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
    pub obj: f64,
    /// Branching class: lower classes branch first (default 1).
    pub branch_class: u8,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    /// Sparse coefficients; a variable appears at most once per row.
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub objective: Objective,
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    names: HashMap<String, VarId>,
}

impl Model {
    pub fn new(name: impl Into<String>, objective: Objective) -> Self {
        Model {
            name: name.into(),
            objective,
            vars: Vec::new(),
            rows: Vec::new(),
            names: HashMap::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lb: f64,
        ub: f64,
        obj: f64,
    ) -> VarId {
        let name = name.into();
        let id = VarId(self.vars.len() as u32);
        if self.names.insert(name.clone(), id).is_some() {
            panic!("variable {name:?} declared twice");
        }
        let (lb, ub) = match kind {
            VarKind::Binary => (lb.max(0.0), ub.min(1.0)),
            VarKind::Continuous => (lb, ub),
        };
        self.vars.push(Variable {
            name,
            kind,
            lb,
            ub,
            obj,
            branch_class: 1,
        });
        id
    }

    /// Lower classes are branched before higher ones.
    pub fn set_branch_class(&mut self, v: VarId, class: u8) {
        self.vars[v.idx()].branch_class = class;
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0, 0.0)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lb, ub, 0.0)
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.names.get(name).copied()
    }

    pub fn set_obj(&mut self, v: VarId, coef: f64) {
        self.vars[v.idx()].obj = coef;
    }

    pub fn add_obj(&mut self, v: VarId, coef: f64) {
        self.vars[v.idx()].obj += coef;
    }

    pub fn set_bounds(&mut self, v: VarId, lb: f64, ub: f64) {
        self.vars[v.idx()].lb = lb;
        self.vars[v.idx()].ub = ub;
    }

    /// Adds a row, merging repeated variables and dropping zero coefficients.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let mut merged: HashMap<VarId, f64> = HashMap::with_capacity(coeffs.len());
        for (v, c) in coeffs {
            assert!(v.idx() < self.vars.len(), "row references undeclared variable");
            *merged.entry(v).or_insert(0.0) += c;
        }
        let mut coeffs: Vec<(VarId, f64)> = merged
            .into_iter()
            .filter(|&(_, c)| c != 0.0)
            .collect();
        coeffs.sort_by_key(|&(v, _)| v);
        self.rows.push(Row {
            name: name.into(),
            coeffs,
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn has_integers(&self) -> bool {
        self.vars.iter().any(|v| v.kind == VarKind::Binary)
    }

    /// Activity of a row under an assignment.
    pub fn row_activity(&self, row: &Row, x: &[f64]) -> f64 {
        row.coeffs.iter().map(|&(v, c)| c * x[v.idx()]).sum()
    }

    /// Worst violation of rows and bounds under an assignment.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.rows {
            let a = self.row_activity(row, x);
            let viol = match row.sense {
                Sense::Le => a - row.rhs,
                Sense::Ge => row.rhs - a,
                Sense::Eq => (a - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for (v, var) in self.vars.iter().enumerate() {
            worst = worst.max(var.lb - x[v]).max(x[v] - var.ub);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| v.obj * x[i])
            .sum()
    }

    /// LP-format text for debugging; write-only, never parsed back.
    pub fn write_lp(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "\\ {}", self.name);
        let _ = writeln!(
            s,
            "{}",
            match self.objective {
                Objective::Minimize => "Minimize",
                Objective::Maximize => "Maximize",
            }
        );
        let mut obj = String::from(" obj:");
        for v in &self.vars {
            if v.obj != 0.0 {
                let _ = write!(obj, " {:+} {}", v.obj, sanitize(&v.name));
            }
        }
        let _ = writeln!(s, "{obj}");
        let _ = writeln!(s, "Subject To");
        for (i, row) in self.rows.iter().enumerate() {
            let mut line = format!(" r{}_{}:", i, sanitize(&row.name));
            for &(v, c) in &row.coeffs {
                let _ = write!(line, " {:+} {}", c, sanitize(&self.vars[v.idx()].name));
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(s, "{line} {op} {}", row.rhs);
        }
        let _ = writeln!(s, "Bounds");
        for v in &self.vars {
            let lb = if v.lb == f64::NEG_INFINITY { "-inf".to_string() } else { v.lb.to_string() };
            let ub = if v.ub == f64::INFINITY { "+inf".to_string() } else { v.ub.to_string() };
            let _ = writeln!(s, " {} <= {} <= {}", lb, sanitize(&v.name), ub);
        }
        let bins: Vec<&str> = self
            .vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.name.as_str())
            .collect();
        if !bins.is_empty() {
            let _ = writeln!(s, "Binaries");
            let mut line = String::from(" ");
            for b in bins {
                let _ = write!(line, "{} ", sanitize(b));
            }
            let _ = writeln!(s, "{line}");
        }
        let _ = writeln!(s, "End");
        s
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_merge_and_drop_zeros() {
        let mut m = Model::new("t", Objective::Minimize);
        let a = m.add_continuous("a", 0.0, 1.0);
        let b = m.add_continuous("b", 0.0, 1.0);
        m.add_row("r", vec![(a, 1.0), (a, 2.0), (b, 0.0)], Sense::Le, 1.0);
        assert_eq!(m.rows[0].coeffs, vec![(a, 3.0)]);
    }

    #[test]
    #[should_panic(expected = "declared twice")]
    fn duplicate_names_rejected() {
        let mut m = Model::new("t", Objective::Minimize);
        m.add_continuous("a", 0.0, 1.0);
        m.add_continuous("a", 0.0, 1.0);
    }

    #[test]
    fn lp_export_mentions_rows_and_binaries() {
        let mut m = Model::new("t", Objective::Maximize);
        let a = m.add_binary("pick");
        let y = m.add_continuous("y", 0.0, f64::INFINITY);
        m.set_obj(y, 1.0);
        m.add_row("cap", vec![(y, 1.0), (a, -3.0)], Sense::Le, 0.0);
        let lp = m.write_lp();
        assert!(lp.contains("Maximize"));
        assert!(lp.contains("cap"));
        assert!(lp.contains("Binaries"));
    }
}
