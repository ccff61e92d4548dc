//! Linear programs and the solvers behind them.
//!
//! [`LinearProgram`] is a solver-neutral model (minimize `c·x` over bounded
//! variables and sparse rows). Three [`LpSolver`] implementations are
//! provided: [`DenseSimplex`], a self-contained two-phase tableau simplex
//! using Bland's rule; [`SparseSimplex`], an adapter over the `minilp`
//! revised simplex; and [`HighsSolver`], an adapter over HiGHS. [`AutoSolver`]
//! picks the dense solver for small programs and HiGHS otherwise.

mod dense;
mod highs;
mod sparse;

pub use self::highs::HighsSolver;
pub use dense::DenseSimplex;
pub use sparse::SparseSimplex;

use thiserror::Error;

pub const FEASIBILITY_TOL: f64 = 1e-6;
pub const OPTIMALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("infeasible")]
    Infeasible,
    #[error("unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with the given objective coefficient and bounds;
    /// `upper` may be `f64::INFINITY`.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        debug_assert!(lower.is_finite() && lower <= upper);
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.constraints.push(Constraint { coeffs, cmp, rhs });
    }

    /// Tightens the upper bound of `var` to `min(current, upper)`.
    pub fn tighten_upper(&mut self, var: usize, upper: f64) {
        if upper < self.upper[var] {
            self.upper[var] = upper.max(self.lower[var]);
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any bound or row by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match c.cmp {
                Cmp::Le => lhs - c.rhs,
                Cmp::Ge => c.rhs - lhs,
                Cmp::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub objective: f64,
    pub values: Vec<f64>,
}

pub trait LpSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError>;
}

/// Dense simplex for programs whose tableau has at most `dense_cells` entries,
/// HiGHS otherwise.
#[derive(Clone, Copy, Debug)]
pub struct AutoSolver {
    pub dense_cells: usize,
}

impl Default for AutoSolver {
    fn default() -> Self {
        AutoSolver { dense_cells: 40_000 }
    }
}

impl LpSolver for AutoSolver {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let rows = lp.num_constraints() + lp.upper.iter().filter(|u| u.is_finite()).count();
        let cols = lp.num_vars() + rows;
        if rows * cols <= self.dense_cells {
            DenseSimplex::default().solve(lp)
        } else {
            HighsSolver.solve(lp)
        }
    }
}
