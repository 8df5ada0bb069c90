//! A small, solver-agnostic MILP model.
//!
//! Optimization code builds a [`Model`] (variables, linear rows, indicator
//! rows, objective) and hands it to a [`MilpBackend`]. Backends that lack
//! native indicator support receive a big-M lowering whose constants are
//! derived from the variable bounds of the model itself, so every variable
//! that appears in an indicator row must carry finite bounds.

mod highs_backend;
mod lp_format;

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use highs_backend::HighsBackend;

/// Handle to a column of a [`Model`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug)]
pub struct VarDef {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

/// `Σ coef·var + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    terms: Vec<(Var, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    /// Builder-style term addition.
    pub fn with(mut self, var: Var, coef: f64) -> Self {
        self.add(var, coef);
        self
    }

    pub fn add(&mut self, var: Var, coef: f64) {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
    }

    pub fn add_constant(&mut self, value: f64) {
        self.constant += value;
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) {
        for &(v, c) in &other.terms {
            self.add(v, c * scale);
        }
        self.constant += other.constant * scale;
    }

    pub fn terms(&self) -> &[(Var, f64)] {
        &self.terms
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    /// Terms sorted by column with duplicates merged and zeros dropped.
    pub fn merged_terms(&self) -> Vec<(Var, f64)> {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|(v, _)| *v);
        let mut out: Vec<(Var, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match out.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|(_, c)| *c != 0.0);
        out
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * values[v.0]).sum::<f64>()
    }
}

impl From<Var> for LinExpr {
    fn from(v: Var) -> Self {
        LinExpr::new().with(v, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl Cmp {
    fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub name: String,
    pub expr: LinExpr,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// `binary == active_when  ⇒  expr cmp rhs`.
#[derive(Clone, Debug)]
pub struct Indicator {
    pub name: String,
    pub binary: Var,
    pub active_when: bool,
    pub expr: LinExpr,
    pub cmp: Cmp,
    pub rhs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub name: String,
    vars: Vec<VarDef>,
    constraints: Vec<Constraint>,
    indicators: Vec<Indicator>,
    objective: LinExpr,
    sense: Sense,
}

impl Model {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            vars: Vec::new(),
            constraints: Vec::new(),
            indicators: Vec::new(),
            objective: LinExpr::new(),
            sense: Sense::Minimize,
        }
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Var {
        self.push_var(name.into(), lower, upper, VarKind::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Var {
        self.push_var(name.into(), 0.0, 1.0, VarKind::Binary)
    }

    fn push_var(&mut self, name: String, lower: f64, upper: f64, kind: VarKind) -> Var {
        debug_assert!(
            lower <= upper,
            "empty domain for {name}: [{lower}, {upper}]"
        );
        self.vars.push(VarDef {
            name,
            lower,
            upper,
            kind,
        });
        Var(self.vars.len() - 1)
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, expr: LinExpr, cmp: Cmp, rhs: f64) {
        self.constraints.push(Constraint {
            name: name.into(),
            expr,
            cmp,
            rhs,
        });
    }

    pub fn add_indicator(
        &mut self,
        name: impl Into<String>,
        binary: Var,
        active_when: bool,
        expr: LinExpr,
        cmp: Cmp,
        rhs: f64,
    ) {
        debug_assert_eq!(self.vars[binary.0].kind, VarKind::Binary);
        self.indicators.push(Indicator {
            name: name.into(),
            binary,
            active_when,
            expr,
            cmp,
            rhs,
        });
    }

    pub fn set_objective(&mut self, sense: Sense, expr: LinExpr) {
        self.sense = sense;
        self.objective = expr;
    }

    pub fn vars(&self) -> &[VarDef] {
        &self.vars
    }

    pub fn var(&self, v: Var) -> &VarDef {
        &self.vars[v.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn indicators(&self) -> &[Indicator] {
        &self.indicators
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_binaries(&self) -> usize {
        self.vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    /// Interval bounds of `expr` implied by the variable bounds.
    pub fn expr_bounds(&self, expr: &LinExpr) -> (f64, f64) {
        let mut lo = expr.constant;
        let mut hi = expr.constant;
        for (v, c) in expr.merged_terms() {
            let def = &self.vars[v.0];
            if c > 0.0 {
                lo += c * def.lower;
                hi += c * def.upper;
            } else {
                lo += c * def.upper;
                hi += c * def.lower;
            }
        }
        (lo, hi)
    }

    /// Replaces every indicator row with its big-M linearization.
    ///
    /// For `z = 1 ⇒ e ≤ r` the row is `e − r ≤ M·(1 − z)` with
    /// `M = max(e) − r` taken from the variable bounds; `≥` and `=` are
    /// handled symmetrically and `z = 0` triggers swap `(1 − z)` for `z`.
    pub fn lower_indicators(&self) -> Result<Model> {
        let mut out = Model {
            name: self.name.clone(),
            vars: self.vars.clone(),
            constraints: self.constraints.clone(),
            indicators: Vec::new(),
            objective: self.objective.clone(),
            sense: self.sense,
        };
        for ind in &self.indicators {
            let (lo, hi) = self.expr_bounds(&ind.expr);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Solver(format!(
                    "indicator `{}` involves an unbounded variable; big-M undefined",
                    ind.name
                )));
            }
            let want_upper = matches!(ind.cmp, Cmp::Le | Cmp::Eq);
            let want_lower = matches!(ind.cmp, Cmp::Ge | Cmp::Eq);
            if want_upper {
                let m = hi - ind.rhs;
                if m > 0.0 {
                    let mut e = ind.expr.clone();
                    if ind.active_when {
                        // e + M z ≤ r + M
                        e.add(ind.binary, m);
                        out.add_constraint(format!("{}_ub", ind.name), e, Cmp::Le, ind.rhs + m);
                    } else {
                        // e − M z ≤ r
                        e.add(ind.binary, -m);
                        out.add_constraint(format!("{}_ub", ind.name), e, Cmp::Le, ind.rhs);
                    }
                }
            }
            if want_lower {
                let m = ind.rhs - lo;
                if m > 0.0 {
                    let mut e = ind.expr.clone();
                    if ind.active_when {
                        // e − M z ≥ r − M
                        e.add(ind.binary, -m);
                        out.add_constraint(format!("{}_lb", ind.name), e, Cmp::Ge, ind.rhs - m);
                    } else {
                        // e + M z ≥ r
                        e.add(ind.binary, m);
                        out.add_constraint(format!("{}_lb", ind.name), e, Cmp::Ge, ind.rhs);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Copy of the model with every binary fixed to its rounded value in
    /// `values` and relaxed to a continuous column.
    pub fn with_binaries_fixed(&self, values: &[f64]) -> Model {
        let mut out = self.clone();
        for (i, def) in out.vars.iter_mut().enumerate() {
            if def.kind == VarKind::Binary {
                let fixed = if values[i] > 0.5 { 1.0 } else { 0.0 };
                def.kind = VarKind::Continuous;
                def.lower = fixed;
                def.upper = fixed;
            }
        }
        out
    }

    /// Writes the model in CPLEX LP text format.
    pub fn write_lp<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        lp_format::write(self, w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorMode {
    /// Hand indicators to the backend when it supports them, else big-M.
    #[default]
    Indicator,
    /// Always linearize with instance-derived big-M constants.
    Bigm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub time_limit_s: Option<f64>,
    pub mip_rel_gap: f64,
    pub feasibility_tol: f64,
    pub seed: u32,
    pub threads: u32,
    pub indicator_mode: IndicatorMode,
    /// Re-solve the LP with binaries fixed after a MILP solve.
    pub polish: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit_s: None,
            mip_rel_gap: 1e-6,
            feasibility_tol: 1e-9,
            seed: 0,
            threads: 1,
            indicator_mode: IndicatorMode::Indicator,
            polish: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Limit,
    Failed,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
}

impl Solution {
    pub fn failed(status: SolveStatus) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn eval(&self, expr: &LinExpr) -> f64 {
        expr.eval(&self.values)
    }
}

/// The boundary a solver implementation must provide.
pub trait MilpBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn supports_indicators(&self) -> bool {
        false
    }

    /// Solves `model`. Indicator rows are only passed when
    /// [`supports_indicators`](Self::supports_indicators) is true.
    fn solve_model(&self, model: &Model, opts: &SolveOptions) -> Solution;
}

/// Solves `model` on `backend`, lowering indicators when needed and
/// polishing MILP solutions with a fixed-binary LP re-solve.
pub fn solve(model: &Model, backend: &dyn MilpBackend, opts: &SolveOptions) -> Result<Solution> {
    let native = opts.indicator_mode == IndicatorMode::Indicator && backend.supports_indicators();
    let prepared: Cow<'_, Model> = if model.indicators.is_empty() || native {
        Cow::Borrowed(model)
    } else {
        Cow::Owned(model.lower_indicators()?)
    };
    let sol = backend.solve_model(&prepared, opts);
    if sol.is_optimal() && opts.polish && prepared.num_binaries() > 0 {
        let fixed = prepared.with_binaries_fixed(&sol.values);
        let lp = backend.solve_model(&fixed, opts);
        if lp.is_optimal() {
            return Ok(lp);
        }
        log::debug!(
            "{}: polish re-solve returned {:?}; keeping MILP point",
            model.name,
            lp.status
        );
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knapsack() -> (Model, Var, Var, Var) {
        // max 5a + 4b + 3c  s.t. 2a + 3b + c ≤ 5, 4a + b + 2c ≤ 11, 3a + 4b + 2c ≤ 8
        let mut m = Model::new("knap");
        let a = m.add_continuous("a", 0.0, f64::INFINITY);
        let b = m.add_continuous("b", 0.0, f64::INFINITY);
        let c = m.add_continuous("c", 0.0, f64::INFINITY);
        m.add_constraint(
            "r1",
            LinExpr::new().with(a, 2.0).with(b, 3.0).with(c, 1.0),
            Cmp::Le,
            5.0,
        );
        m.add_constraint(
            "r2",
            LinExpr::new().with(a, 4.0).with(b, 1.0).with(c, 2.0),
            Cmp::Le,
            11.0,
        );
        m.add_constraint(
            "r3",
            LinExpr::new().with(a, 3.0).with(b, 4.0).with(c, 2.0),
            Cmp::Le,
            8.0,
        );
        m.set_objective(
            Sense::Maximize,
            LinExpr::new().with(a, 5.0).with(b, 4.0).with(c, 3.0),
        );
        (m, a, b, c)
    }

    #[test]
    fn lp_textbook_optimum() {
        let (m, a, b, c) = knapsack();
        let sol = solve(&m, &HighsBackend, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 13.0).abs() < 1e-9);
        assert!((sol.value(a) - 2.0).abs() < 1e-9);
        assert!(sol.value(b).abs() < 1e-9);
        assert!((sol.value(c) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_is_a_status() {
        let mut m = Model::new("inf");
        let x = m.add_continuous("x", 0.0, 1.0);
        m.add_constraint("r", LinExpr::from(x), Cmp::Ge, 2.0);
        let sol = solve(&m, &HighsBackend, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn empty_model_is_optimal() {
        let mut m = Model::new("empty");
        m.set_objective(Sense::Minimize, LinExpr::constant(4.5));
        let sol = solve(&m, &HighsBackend, &SolveOptions::default()).unwrap();
        assert!(sol.is_optimal());
        assert_eq!(sol.objective, 4.5);
    }

    #[test]
    fn indicator_lowering_switches_rows() {
        // max x + y,  z=1 ⇒ x ≤ 1,  z=0 ⇒ y ≤ 2,  x,y ∈ [0,10],  x ≥ 3 forces z=0
        let mut m = Model::new("ind");
        let x = m.add_continuous("x", 0.0, 10.0);
        let y = m.add_continuous("y", 0.0, 10.0);
        let z = m.add_binary("z");
        m.add_indicator("i1", z, true, LinExpr::from(x), Cmp::Le, 1.0);
        m.add_indicator("i0", z, false, LinExpr::from(y), Cmp::Le, 2.0);
        m.set_objective(Sense::Maximize, LinExpr::new().with(x, 1.0).with(y, 1.0));
        let sol = solve(&m, &HighsBackend, &SolveOptions::default()).unwrap();
        // z=1 → 1 + 10 = 11 ; z=0 → 10 + 2 = 12
        assert!((sol.objective - 12.0).abs() < 1e-9);
        assert!(sol.value(z) < 0.5);
        m.add_constraint("force", LinExpr::from(y), Cmp::Ge, 5.0);
        let sol = solve(&m, &HighsBackend, &SolveOptions::default()).unwrap();
        assert!((sol.objective - 11.0).abs() < 1e-9);
        assert!(sol.value(z) > 0.5);
    }

    #[test]
    fn equality_indicator_lowering() {
        let mut m = Model::new("eq");
        let x = m.add_continuous("x", -5.0, 5.0);
        let z = m.add_binary("z");
        m.add_indicator("fix", z, true, LinExpr::from(x), Cmp::Eq, 2.5);
        m.add_constraint("pick", LinExpr::from(z), Cmp::Eq, 1.0);
        m.set_objective(Sense::Maximize, LinExpr::from(x));
        let lowered = m.lower_indicators().unwrap();
        assert_eq!(lowered.constraints().len(), 3);
        let sol = solve(&m, &HighsBackend, &SolveOptions::default()).unwrap();
        assert!((sol.value(x) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn unbounded_indicator_rejected() {
        let mut m = Model::new("bad");
        let x = m.add_continuous("x", 0.0, f64::INFINITY);
        let z = m.add_binary("z");
        m.add_indicator("i", z, true, LinExpr::from(x), Cmp::Le, 1.0);
        assert!(m.lower_indicators().is_err());
    }

    #[test]
    fn merged_terms_combine_duplicates() {
        let mut m = Model::new("dup");
        let x = m.add_continuous("x", 0.0, 1.0);
        let y = m.add_continuous("y", 0.0, 1.0);
        let e = LinExpr::new()
            .with(y, 1.0)
            .with(x, 2.0)
            .with(y, -1.0)
            .with(x, 0.5);
        assert_eq!(e.merged_terms(), vec![(x, 2.5)]);
        assert_eq!(m.expr_bounds(&e), (0.0, 2.5));
    }
}
