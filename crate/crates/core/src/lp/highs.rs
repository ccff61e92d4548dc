use highs::{HighsModelStatus, RowProblem, Sense};

use super::{Cmp, LinearProgram, LpError, LpSolution, LpSolver};

/// Adapter over the HiGHS dual simplex, run single-threaded so results are
/// reproducible.
#[derive(Clone, Copy, Debug, Default)]
pub struct HighsSolver;

impl HighsSolver {
    fn run(lp: &LinearProgram, presolve: bool) -> Result<(HighsModelStatus, Vec<f64>), LpError> {
        let mut pb = RowProblem::default();
        let cols: Vec<_> = (0..lp.num_vars())
            .map(|j| {
                let (lo, hi) = lp.bounds(j);
                pb.add_column(lp.objective()[j], lo..=hi)
            })
            .collect();
        for c in lp.constraints() {
            let (lo, hi) = match c.cmp {
                Cmp::Le => (f64::NEG_INFINITY, c.rhs),
                Cmp::Ge => (c.rhs, f64::INFINITY),
                Cmp::Eq => (c.rhs, c.rhs),
            };
            let row: Vec<_> = c.coeffs.iter().map(|&(j, a)| (cols[j], a)).collect();
            pb.add_row(lo..=hi, row);
        }
        let mut model = pb.optimise(Sense::Minimise);
        model.make_quiet();
        model.set_option("threads", 1);
        model.set_option("random_seed", 0);
        model.set_option("presolve", if presolve { "on" } else { "off" });
        let solved = model
            .try_solve()
            .map_err(|e| LpError::NumericalFailure(format!("HiGHS: {e:?}")))?;
        let status = solved.status();
        let values = if status == HighsModelStatus::Optimal {
            solved.get_solution().columns().to_vec()
        } else {
            Vec::new()
        };
        Ok((status, values))
    }
}

impl LpSolver for HighsSolver {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        if lp.num_vars() == 0 {
            // HiGHS rejects empty models; rows without variables are 0 (cmp) rhs.
            return if lp.max_violation(&[]) <= super::FEASIBILITY_TOL {
                Ok(LpSolution {
                    objective: 0.0,
                    values: Vec::new(),
                })
            } else {
                Err(LpError::Infeasible)
            };
        }
        let (mut status, mut values) = Self::run(lp, true)?;
        if status == HighsModelStatus::UnboundedOrInfeasible {
            (status, values) = Self::run(lp, false)?;
        }
        match status {
            HighsModelStatus::Optimal => Ok(LpSolution {
                objective: lp.objective_value(&values),
                values,
            }),
            HighsModelStatus::Infeasible => Err(LpError::Infeasible),
            HighsModelStatus::Unbounded => Err(LpError::Unbounded),
            other => Err(LpError::NumericalFailure(format!("HiGHS status {other:?}"))),
        }
    }
}
