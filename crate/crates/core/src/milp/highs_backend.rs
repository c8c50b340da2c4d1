use highs::{HighsModelStatus, RowProblem, Sense};

use super::{LinearModel, RawSolution, Relation, SolveError, SolveLimits, SolveStatus, SolverBackend, VarKind};

/// The open-source HiGHS engine.
///
/// After a MIP solve the binaries are rounded, fixed, and the remaining LP is
/// re-solved so the continuous values are exact for the chosen integer point
/// rather than carrying the MIP's integrality slack.
#[derive(Debug, Clone)]
pub struct HighsBackend {
    pub threads: Option<i32>,
    pub polish: bool,
}

impl Default for HighsBackend {
    fn default() -> Self {
        Self {
            threads: None,
            polish: true,
        }
    }
}

impl HighsBackend {
    fn build(&self, model: &LinearModel, fixed_integers: Option<&[f64]>) -> RowProblem {
        let mut pb = RowProblem::default();
        let mut obj = vec![0.0; model.variables().len()];
        for (v, c) in model.objective().merged_terms() {
            obj[v.index()] = c;
        }
        let cols: Vec<_> = model
            .variables()
            .iter()
            .zip(&obj)
            .enumerate()
            .map(|(i, (var, &c))| match (var.kind, fixed_integers) {
                (VarKind::Binary, Some(x)) => {
                    let v = x[i].round();
                    pb.add_column(c, v..=v)
                }
                (VarKind::Binary, None) => pb.add_integer_column(c, var.lower..=var.upper),
                (VarKind::Continuous, _) => pb.add_column(c, var.lower..=var.upper),
            })
            .collect();
        for con in model.constraints() {
            let row = con.terms.iter().map(|(v, c)| (cols[v.index()], *c));
            match con.relation {
                Relation::Le => pb.add_row(..=con.rhs, row),
                Relation::Ge => pb.add_row(con.rhs.., row),
                Relation::Eq => pb.add_row(con.rhs..=con.rhs, row),
            }
        }
        pb
    }

    fn run(&self, pb: RowProblem, limits: &SolveLimits) -> Result<highs::SolvedModel, SolveError> {
        let mut m = pb
            .try_optimise(Sense::Minimise)
            .map_err(|s| SolveError::Backend(format!("{s:?}")))?;
        m.make_quiet();
        m.set_option("time_limit", limits.time_limit_s);
        m.set_option("mip_rel_gap", limits.mip_gap);
        m.set_option("primal_feasibility_tolerance", 1e-9);
        m.set_option("mip_feasibility_tolerance", 1e-9);
        if let Some(t) = self.threads {
            m.set_option("threads", t);
        }
        m.try_solve().map_err(|s| SolveError::Backend(format!("{s:?}")))
    }
}

impl SolverBackend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, model: &LinearModel, limits: &SolveLimits) -> Result<RawSolution, SolveError> {
        let solved = self.run(self.build(model, None), limits)?;
        let status = match solved.status() {
            HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded => SolveStatus::Unbounded,
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ObjectiveBound
            | HighsModelStatus::ObjectiveTarget => SolveStatus::Limit,
            other => return Err(SolveError::Backend(format!("HiGHS status {other:?}"))),
        };
        let gap = if model.num_binaries() > 0 { solved.mip_gap() } else { 0.0 };
        if status != SolveStatus::Optimal {
            let objective = if status == SolveStatus::Limit {
                solved.objective_value()
            } else {
                f64::NAN
            };
            return Ok(RawSolution {
                status,
                objective,
                values: None,
                mip_gap: gap,
            });
        }
        let mut values = solved.get_solution().columns().to_vec();
        let mut objective = solved.objective_value();
        if self.polish && model.num_binaries() > 0 {
            let lp = self.run(self.build(model, Some(&values)), limits)?;
            if lp.status() == HighsModelStatus::Optimal {
                values = lp.get_solution().columns().to_vec();
                objective = lp.objective_value();
            }
        }
        Ok(RawSolution {
            status,
            objective,
            values: Some(values),
            mip_gap: gap,
        })
    }
}
