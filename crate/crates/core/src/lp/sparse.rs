use minilp::{ComparisonOp, OptimizationDirection, Problem};

use super::{Cmp, LinearProgram, LpError, LpSolution, LpSolver};

/// Adapter over the `minilp` sparse revised simplex.
#[derive(Clone, Copy, Debug, Default)]
pub struct SparseSimplex;

impl LpSolver for SparseSimplex {
    fn name(&self) -> &'static str {
        "sparse-minilp"
    }

    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = (0..lp.num_vars())
            .map(|j| {
                let (lo, hi) = lp.bounds(j);
                problem.add_var(lp.objective()[j], (lo, hi))
            })
            .collect();
        for c in lp.constraints() {
            let op = match c.cmp {
                Cmp::Le => ComparisonOp::Le,
                Cmp::Ge => ComparisonOp::Ge,
                Cmp::Eq => ComparisonOp::Eq,
            };
            let expr: Vec<_> = c.coeffs.iter().map(|&(j, a)| (vars[j], a)).collect();
            problem.add_constraint(expr.as_slice(), op, c.rhs);
        }
        match problem.solve() {
            Ok(sol) => {
                let values: Vec<f64> = vars.iter().map(|&v| sol[v]).collect();
                // minilp occasionally reports an unbounded ray as an
                // "optimal" point at infinity.
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(LpError::Unbounded);
                }
                Ok(LpSolution {
                    objective: lp.objective_value(&values),
                    values,
                })
            }
            Err(minilp::Error::Infeasible) => Err(LpError::Infeasible),
            Err(minilp::Error::Unbounded) => Err(LpError::Unbounded),
        }
    }
}
