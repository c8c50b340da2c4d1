//! Backend-agnostic mixed-integer linear models.
//!
//! A [`LinearModel`] is built once by a single writer and then handed to
//! [`solve`] together with any [`SolverBackend`]. Whatever the backend says,
//! an "optimal" answer is re-checked here against every bound, integrality
//! requirement and labelled constraint before it is returned.

mod expr;
mod highs_backend;
mod lp_format;
mod piecewise;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use expr::{LinExpr, VarId};
pub use highs_backend::HighsBackend;
pub use lp_format::export_lp;
pub use piecewise::{add_piecewise_quadratic, PiecewiseQuadratic};

/// Absolute tolerance of the post-solve re-check.
pub const RECHECK_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("variable name `{0}` is already used")]
    DuplicateVariable(String),
    #[error("constraint label `{0}` is already used")]
    DuplicateLabel(String),
    #[error("`{0}` is not a valid LP identifier")]
    InvalidName(String),
    #[error("variable `{name}` has empty bounds [{lower}, {upper}]")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("expression references unknown variable #{0}")]
    UnknownVariable(usize),
    #[error("invalid piecewise approximation: {0}")]
    InvalidPiecewise(String),
    #[error("expression {0} is unbounded, cannot derive a big-M")]
    UnboundedExpression(String),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("solver backend failed: {0}")]
    Backend(String),
    #[error("solver limit reached without a feasible incumbent")]
    LimitWithoutIncumbent,
    #[error("backend reported optimal but `{label}` is violated by {violation:e}")]
    RecheckFailed { label: String, violation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    /// Amount by which `lhs (rel) rhs` is violated; zero when satisfied.
    pub fn violation(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Relation::Le => (lhs - rhs).max(0.0),
            Relation::Ge => (rhs - lhs).max(0.0),
            Relation::Eq => (lhs - rhs).abs(),
        }
    }
}

/// `Σ coef·var (relation) rhs`, with the expression's constant folded into `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[v.0]).sum()
    }
}

/// A minimization MILP.
#[derive(Debug, Clone, Default)]
pub struct LinearModel {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: LinExpr,
    var_index: HashMap<String, VarId>,
    labels: HashMap<String, usize>,
}

impl PartialEq for LinearModel {
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables
            && self.constraints == other.constraints
            && self.objective.merged_terms() == other.objective.merged_terms()
            && self.objective.constant_part() == other.objective.constant_part()
    }
}

fn is_lp_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

impl LinearModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> Result<VarId, ModelError> {
        let name = name.into();
        if !is_lp_identifier(&name) {
            return Err(ModelError::InvalidName(name));
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        if !(lower <= upper) {
            return Err(ModelError::InvalidBounds { name, lower, upper });
        }
        if self.var_index.contains_key(&name) {
            return Err(ModelError::DuplicateVariable(name));
        }
        let id = VarId(self.variables.len());
        self.var_index.insert(name.clone(), id);
        self.variables.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        Ok(id)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Result<VarId, ModelError> {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> Result<VarId, ModelError> {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    /// Adds `expr (relation) rhs`; the expression's constant moves to the right-hand side.
    pub fn add_constraint(
        &mut self,
        label: impl Into<String>,
        expr: LinExpr,
        relation: Relation,
        rhs: f64,
    ) -> Result<(), ModelError> {
        let label = label.into();
        if !is_lp_identifier(&label) {
            return Err(ModelError::InvalidName(label));
        }
        if self.labels.contains_key(&label) {
            return Err(ModelError::DuplicateLabel(label));
        }
        self.check_vars(&expr)?;
        self.labels.insert(label.clone(), self.constraints.len());
        self.constraints.push(Constraint {
            label,
            terms: expr.merged_terms(),
            relation,
            rhs: rhs - expr.constant_part(),
        });
        Ok(())
    }

    fn check_vars(&self, expr: &LinExpr) -> Result<(), ModelError> {
        match expr.terms().iter().find(|(v, _)| v.0 >= self.variables.len()) {
            Some((v, _)) => Err(ModelError::UnknownVariable(v.0)),
            None => Ok(()),
        }
    }

    pub fn set_objective(&mut self, expr: LinExpr) -> Result<(), ModelError> {
        self.check_vars(&expr)?;
        self.objective = expr;
        Ok(())
    }

    pub fn add_to_objective(&mut self, expr: LinExpr) -> Result<(), ModelError> {
        self.check_vars(&expr)?;
        self.objective += expr;
        Ok(())
    }

    /// Pins a variable to `value` by collapsing its bounds.
    pub fn fix(&mut self, var: VarId, value: f64) {
        let v = &mut self.variables[var.0];
        v.lower = value;
        v.upper = value;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.variables[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, var: VarId) -> &Variable {
        &self.variables[var.0]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.var_index.get(name).copied()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, label: &str) -> Option<&Constraint> {
        self.labels.get(label).map(|&i| &self.constraints[i])
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn count_labels_with_prefix(&self, prefix: &str) -> usize {
        self.constraints.iter().filter(|c| c.label.starts_with(prefix)).count()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty() && self.constraints.is_empty()
    }

    /// Interval `[min, max]` of `expr` over the variable box.
    pub fn expr_bounds(&self, expr: &LinExpr) -> (f64, f64) {
        let (mut lo, mut hi) = (expr.constant_part(), expr.constant_part());
        for (v, c) in expr.merged_terms() {
            let var = &self.variables[v.0];
            let (a, b) = (c * var.lower, c * var.upper);
            lo += a.min(b);
            hi += a.max(b);
        }
        (lo, hi)
    }

    /// Finite bounds of `expr`, or an error naming `what`.
    pub fn finite_bounds(&self, expr: &LinExpr, what: &str) -> Result<(f64, f64), ModelError> {
        let (lo, hi) = self.expr_bounds(expr);
        if lo.is_finite() && hi.is_finite() {
            Ok((lo, hi))
        } else {
            Err(ModelError::UnboundedExpression(what.to_string()))
        }
    }

    /// Largest violation of any bound, integrality or constraint under `values`,
    /// with the offending name. `None` when everything holds within `tol`.
    pub fn worst_violation(&self, values: &[f64], tol: f64) -> Option<(String, f64)> {
        let mut worst: Option<(String, f64)> = None;
        let mut note = |name: &str, amount: f64| {
            if amount > tol && worst.as_ref().map_or(true, |(_, w)| amount > *w) {
                worst = Some((name.to_string(), amount));
            }
        };
        for (var, &x) in self.variables.iter().zip(values) {
            note(&var.name, (var.lower - x).max(x - var.upper).max(0.0));
            if var.kind == VarKind::Binary {
                note(&var.name, (x - x.round()).abs());
            }
        }
        for c in &self.constraints {
            note(&c.label, c.relation.violation(c.lhs(values), c.rhs));
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveLimits {
    pub time_limit_s: f64,
    /// Relative MIP gap at which the search stops.
    pub mip_gap: f64,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self {
            time_limit_s: 120.0,
            mip_gap: 1e-4,
        }
    }
}

/// What a backend hands back; objective excludes the model's constant term.
#[derive(Debug, Clone)]
pub struct RawSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Option<Vec<f64>>,
    pub mip_gap: f64,
}

/// Narrow solver boundary: load a model, run it, report status and values.
pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, model: &LinearModel, limits: &SolveLimits) -> Result<RawSolution, SolveError>;
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective_value: f64,
    values: Option<Vec<f64>>,
    pub mip_gap: f64,
    pub wall_time: Duration,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Value of `var`; `None` unless the solve is optimal.
    pub fn value(&self, var: VarId) -> Option<f64> {
        self.values.as_ref().map(|v| v[var.0])
    }

    pub fn values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    /// Variable name to value, for optimal solves.
    pub fn assignment<'m>(&self, model: &'m LinearModel) -> Option<HashMap<&'m str, f64>> {
        let values = self.values.as_ref()?;
        Some(
            model
                .variables()
                .iter()
                .zip(values)
                .map(|(v, x)| (v.name.as_str(), *x))
                .collect(),
        )
    }

    pub fn eval(&self, expr: &LinExpr) -> Option<f64> {
        self.values.as_ref().map(|v| expr.evaluate(v))
    }
}

/// Solves `model` with `backend` and re-checks an optimal answer.
pub fn solve(model: &LinearModel, backend: &dyn SolverBackend, limits: &SolveLimits) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    if model.variables.is_empty() {
        let infeasible = model.constraints.iter().any(|c| c.relation.violation(0.0, c.rhs) > RECHECK_TOL);
        return Ok(SolveResult {
            status: if infeasible { SolveStatus::Infeasible } else { SolveStatus::Optimal },
            objective_value: model.objective.constant_part(),
            values: (!infeasible).then(Vec::new),
            mip_gap: 0.0,
            wall_time: start.elapsed(),
        });
    }
    let raw = backend.solve(model, limits)?;
    let mut values = None;
    let mut objective_value = raw.objective + model.objective.constant_part();
    if raw.status == SolveStatus::Optimal {
        let mut x = raw
            .values
            .ok_or_else(|| SolveError::Backend("optimal status without primal values".into()))?;
        for (var, xi) in model.variables.iter().zip(x.iter_mut()) {
            // Snap into the box and onto integers; the re-check below sees the snapped point.
            if var.kind == VarKind::Binary {
                *xi = xi.round();
            }
            *xi = xi.clamp(var.lower, var.upper);
        }
        if let Some((label, violation)) = model.worst_violation(&x, RECHECK_TOL) {
            return Err(SolveError::RecheckFailed { label, violation });
        }
        objective_value = model.objective.evaluate(&x);
        values = Some(x);
    } else if raw.status == SolveStatus::Limit && !raw.objective.is_finite() {
        return Err(SolveError::LimitWithoutIncumbent);
    }
    Ok(SolveResult {
        status: raw.status,
        objective_value,
        values,
        mip_gap: raw.mip_gap,
        wall_time: start.elapsed(),
    })
}

/// Rows that must give way for an infeasible `model` to become feasible.
///
/// Solves the elastic copy where every row gets a non-negative slack in each
/// direction it can be violated, minimizing total slack. Returns the labels
/// with positive slack and the amount, largest first; empty when `model` is
/// feasible after all.
pub fn diagnose_infeasibility(
    model: &LinearModel,
    backend: &dyn SolverBackend,
    limits: &SolveLimits,
) -> Result<Vec<(String, f64)>, SolveError> {
    let mut elastic = LinearModel {
        variables: model.variables.clone(),
        var_index: model.var_index.clone(),
        ..LinearModel::default()
    };
    let mut slacks = Vec::new();
    let mut objective = LinExpr::new();
    for (k, con) in model.constraints.iter().enumerate() {
        let mut expr = LinExpr::new();
        for &(v, c) in &con.terms {
            expr.add_term(v, c);
        }
        let mut slack = |sign: f64, expr: &mut LinExpr| -> Result<(), SolveError> {
            let s = elastic
                .continuous(format!("elastic_{k}_{}", if sign > 0.0 { "up" } else { "dn" }), 0.0, f64::INFINITY)?;
            expr.add_term(s, sign);
            objective.add_term(s, 1.0);
            slacks.push((k, s));
            Ok(())
        };
        match con.relation {
            Relation::Le => slack(-1.0, &mut expr)?,
            Relation::Ge => slack(1.0, &mut expr)?,
            Relation::Eq => {
                slack(1.0, &mut expr)?;
                slack(-1.0, &mut expr)?;
            }
        }
        elastic
            .add_constraint(con.label.clone(), expr, con.relation, con.rhs)?;
    }
    elastic.set_objective(objective)?;
    let result = solve(&elastic, backend, limits)?;
    let Some(x) = result.values() else {
        return Err(SolveError::Backend(format!("elastic model ended with {:?}", result.status)));
    };
    let mut out: Vec<(String, f64)> = Vec::new();
    for (k, s) in slacks {
        let amount = x[s.index()];
        if amount > RECHECK_TOL {
            match out.last_mut() {
                Some((label, total)) if *label == model.constraints[k].label => *total += amount,
                _ => out.push((model.constraints[k].label.clone(), amount)),
            }
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(out)
}
