use super::{Cmp, LinearProgram, LpError, LpSolution, LpSolver};

/// Two-phase tableau simplex with Bland's anti-cycling rule.
#[derive(Clone, Copy, Debug)]
pub struct DenseSimplex {
    pub pivot_tol: f64,
    pub max_iterations: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex {
            pivot_tol: 1e-9,
            max_iterations: 200_000,
        }
    }
}

struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.data[r * self.width + self.width - 1]
    }

    fn pivot(&mut self, pr: usize, pc: usize, cost: &mut [f64]) {
        let w = self.width;
        let inv = 1.0 / self.data[pr * w + pc];
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[pc];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
            }
        }
        let f = cost[pc];
        if f != 0.0 {
            for (v, p) in cost.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
        }
        self.basis[pr] = pc;
    }
}

impl DenseSimplex {
    /// Runs simplex iterations on `cost` (reduced costs, last entry holds the
    /// negated objective) over columns `< active_cols`.
    fn iterate(&self, t: &mut Tableau, cost: &mut [f64], active_cols: usize) -> Result<(), LpError> {
        for _ in 0..self.max_iterations {
            let entering = (0..active_cols).find(|&c| cost[c] < -self.pivot_tol);
            let Some(pc) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..t.rows {
                let a = t.at(r, pc);
                if a > self.pivot_tol {
                    let ratio = t.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || ((ratio - lratio).abs() <= 1e-12 && t.basis[r] < t.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            t.pivot(pr, pc, cost);
        }
        Err(LpError::NumericalFailure(format!(
            "simplex exceeded {} iterations",
            self.max_iterations
        )))
    }
}

impl LpSolver for DenseSimplex {
    fn name(&self) -> &'static str {
        "dense-bland"
    }

    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let n = lp.num_vars();
        // Shift every variable to x' = x - lower >= 0, then rows become
        // a·x' (cmp) rhs - a·lower; finite upper bounds become extra rows.
        let mut rows: Vec<(Vec<(usize, f64)>, Cmp, f64)> = Vec::new();
        for c in lp.constraints() {
            let shift: f64 = c.coeffs.iter().map(|&(j, a)| a * lp.lower[j]).sum();
            rows.push((c.coeffs.clone(), c.cmp, c.rhs - shift));
        }
        for j in 0..n {
            if lp.upper[j].is_finite() {
                rows.push((vec![(j, 1.0)], Cmp::Le, lp.upper[j] - lp.lower[j]));
            }
        }
        let m = rows.len();
        let slack_count = rows.iter().filter(|r| r.1 != Cmp::Eq).count();

        // Normalize to nonnegative rhs and decide which rows need artificials.
        let mut needs_art = vec![false; m];
        let mut slack_sign = vec![0.0; m];
        for (r, row) in rows.iter_mut().enumerate() {
            let mut sign = match row.1 {
                Cmp::Le => 1.0,
                Cmp::Ge => -1.0,
                Cmp::Eq => 0.0,
            };
            if row.2 < 0.0 {
                for (_, a) in row.0.iter_mut() {
                    *a = -*a;
                }
                row.2 = -row.2;
                sign = -sign;
            }
            slack_sign[r] = sign;
            needs_art[r] = sign <= 0.0;
        }
        let art_count = needs_art.iter().filter(|&&b| b).count();
        let art_start = n + slack_count;
        let width = art_start + art_count + 1;

        let mut t = Tableau {
            rows: m,
            width,
            data: vec![0.0; m * width],
            basis: vec![0; m],
        };
        let mut slack_col = n;
        let mut art_col = art_start;
        for (r, row) in rows.iter().enumerate() {
            for &(j, a) in &row.0 {
                t.data[r * width + j] += a;
            }
            t.data[r * width + width - 1] = row.2;
            if row.1 != Cmp::Eq {
                t.data[r * width + slack_col] = slack_sign[r];
                if !needs_art[r] {
                    t.basis[r] = slack_col;
                }
                slack_col += 1;
            }
            if needs_art[r] {
                t.data[r * width + art_col] = 1.0;
                t.basis[r] = art_col;
                art_col += 1;
            }
        }

        // Phase 1: minimize the sum of artificials.
        if art_count > 0 {
            let mut cost = vec![0.0; width];
            for c in art_start..art_start + art_count {
                cost[c] = 1.0;
            }
            for r in 0..m {
                if t.basis[r] >= art_start {
                    for c in 0..width {
                        cost[c] -= t.at(r, c);
                    }
                }
            }
            self.iterate(&mut t, &mut cost, art_start + art_count)?;
            if -cost[width - 1] > 1e-7 {
                return Err(LpError::Infeasible);
            }
            // Drive remaining (zero-level) artificials out of the basis.
            let mut r = 0;
            while r < t.rows {
                if t.basis[r] >= art_start {
                    match (0..art_start).find(|&c| t.at(r, c).abs() > self.pivot_tol) {
                        Some(c) => {
                            t.pivot(r, c, &mut cost);
                            r += 1;
                        }
                        None => {
                            // Redundant row.
                            let w = t.width;
                            t.data.drain(r * w..(r + 1) * w);
                            t.basis.remove(r);
                            t.rows -= 1;
                        }
                    }
                } else {
                    r += 1;
                }
            }
        }

        // Phase 2 over structural and slack columns.
        let mut cost = vec![0.0; width];
        cost[..n].copy_from_slice(lp.objective());
        for r in 0..t.rows {
            let b = t.basis[r];
            let f = cost[b];
            if f != 0.0 {
                for c in 0..width {
                    cost[c] -= f * t.at(r, c);
                }
            }
        }
        self.iterate(&mut t, &mut cost, art_start)?;

        let mut values = lp.lower.clone();
        for r in 0..t.rows {
            let b = t.basis[r];
            if b < n {
                values[b] += t.rhs(r).max(0.0);
            }
        }
        Ok(LpSolution {
            objective: lp.objective_value(&values),
            values,
        })
    }
}
