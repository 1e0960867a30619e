//! Dense two-phase simplex for `min cᵀx  s.t.  Ax = b, x ≥ 0`.
//!
//! Pivoting follows Bland's rule, so the method terminates on degenerate
//! problems. The dual solution `y = c_Bᵀ B⁻¹` is read off the artificial
//! columns, and both primal and dual feasibility are re-checked against the
//! original data after the solve.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct StandardForm {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl StandardForm {
    pub fn rows(&self) -> usize {
        self.a.len()
    }

    pub fn cols(&self) -> usize {
        self.c.len()
    }

    fn validate(&self) -> Result<()> {
        if self.b.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                left: self.b.len(),
                right: self.rows(),
            });
        }
        for row in &self.a {
            if row.len() != self.cols() {
                return Err(Error::DimensionMismatch {
                    left: row.len(),
                    right: self.cols(),
                });
            }
        }
        let finite = self
            .a
            .iter()
            .flatten()
            .chain(&self.b)
            .chain(&self.c)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite LP coefficient".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub max_pivots: usize,
    pub pivot_tolerance: f64,
    /// Phase-one objective above which the problem is declared infeasible.
    pub feasibility_tolerance: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_pivots: 50_000,
            pivot_tolerance: 1e-12,
            feasibility_tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `cᵀx − bᵀy`
    pub duality_gap: f64,
    /// `max |Ax − b|` together with the most negative entry of `x`.
    pub primal_residual: f64,
    /// `max (Aᵀy − c)₊`
    pub dual_infeasibility: f64,
    pub pivots: usize,
}

#[derive(Clone, Debug)]
pub enum LpOutcome {
    Optimal(LpSolution),
    PivotLimit { pivots: usize },
}

struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n: usize,
    m: usize,
    pivots: usize,
}

enum Step {
    Optimal,
    Pivoted,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.n + self.m]
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let mut d = cost[j];
        for (row, &bi) in self.t.iter().zip(&self.basis) {
            d -= cost[bi] * row[j];
        }
        d
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let width = self.n + self.m + 1;
        let p = self.t[r][col];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for k in 0..width {
                    row[k] -= f * pivot_row[k];
                }
            }
        }
        self.basis[r] = col;
        self.pivots += 1;
    }

    fn step(&mut self, cost: &[f64], allowed: usize, tol: f64) -> Step {
        let entering = (0..allowed).find(|&j| {
            !self.basis.contains(&j) && self.reduced_cost(cost, j) < -tol.max(1e-11)
        });
        let Some(col) = entering else {
            return Step::Optimal;
        };
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..self.m {
            let a = self.t[i][col];
            if a > tol {
                let ratio = self.rhs(i) / a;
                let better = match best {
                    None => true,
                    Some((r, _, b)) => {
                        ratio < r - 1e-15 || (ratio <= r + 1e-15 && self.basis[i] < b)
                    }
                };
                if better {
                    best = Some((ratio, i, self.basis[i]));
                }
            }
        }
        match best {
            None => Step::Unbounded,
            Some((_, r, _)) => {
                self.pivot(r, col);
                Step::Pivoted
            }
        }
    }
}

pub fn solve(lp: &StandardForm, options: &SimplexOptions) -> Result<LpOutcome> {
    lp.validate()?;
    let (m, n) = (lp.rows(), lp.cols());
    let signs: Vec<f64> = lp.b.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
    let t = (0..m)
        .map(|i| {
            let mut row = vec![0.0; n + m + 1];
            for j in 0..n {
                row[j] = signs[i] * lp.a[i][j];
            }
            row[n + i] = 1.0;
            row[n + m] = signs[i] * lp.b[i];
            row
        })
        .collect();
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
        n,
        m,
        pivots: 0,
    };
    let tol = options.pivot_tolerance;

    let mut phase_one = vec![0.0; n + m];
    phase_one[n..].iter_mut().for_each(|c| *c = 1.0);
    loop {
        if tab.pivots >= options.max_pivots {
            return Ok(LpOutcome::PivotLimit { pivots: tab.pivots });
        }
        match tab.step(&phase_one, n + m, tol) {
            Step::Optimal => break,
            Step::Pivoted => {}
            Step::Unbounded => unreachable!("phase one is bounded below by zero"),
        }
    }
    let infeasibility: f64 = (0..m)
        .filter(|&i| tab.basis[i] >= n)
        .map(|i| tab.rhs(i))
        .sum();
    if infeasibility > options.feasibility_tolerance {
        return Err(Error::Infeasible);
    }
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab.t[i][j].abs() > 1e-9 && !tab.basis.contains(&j)) {
                tab.pivot(i, j);
            }
        }
    }

    let mut cost = lp.c.clone();
    cost.extend(std::iter::repeat_n(0.0, m));
    loop {
        if tab.pivots >= options.max_pivots {
            return Ok(LpOutcome::PivotLimit { pivots: tab.pivots });
        }
        match tab.step(&cost, n, tol) {
            Step::Optimal => break,
            Step::Pivoted => {}
            Step::Unbounded => return Err(Error::Unbounded),
        }
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.rhs(i);
        }
    }
    let y: Vec<f64> = (0..m)
        .map(|i| {
            signs[i]
                * (0..m)
                    .map(|k| cost[tab.basis[k]] * tab.t[k][n + i])
                    .sum::<f64>()
        })
        .collect();
    Ok(LpOutcome::Optimal(certify(lp, x, y, tab.pivots)))
}

/// Evaluates a primal/dual pair against the original problem data.
pub fn certify(lp: &StandardForm, x: Vec<f64>, y: Vec<f64>, pivots: usize) -> LpSolution {
    let primal_objective: f64 = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    let dual_objective: f64 = lp.b.iter().zip(&y).map(|(b, y)| b * y).sum();
    let mut primal_residual = x.iter().fold(0.0f64, |m, &v| m.max(-v));
    for (row, b) in lp.a.iter().zip(&lp.b) {
        let ax: f64 = row.iter().zip(&x).map(|(a, x)| a * x).sum();
        primal_residual = primal_residual.max((ax - b).abs());
    }
    let mut dual_infeasibility = 0.0f64;
    for j in 0..lp.cols() {
        let aty: f64 = (0..lp.rows()).map(|i| lp.a[i][j] * y[i]).sum();
        dual_infeasibility = dual_infeasibility.max(aty - lp.c[j]);
    }
    LpSolution {
        duality_gap: primal_objective - dual_objective,
        x,
        y,
        primal_objective,
        dual_objective,
        primal_residual,
        dual_infeasibility,
        pivots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(lp: &StandardForm) -> LpSolution {
        match solve(lp, &SimplexOptions::default()).unwrap() {
            LpOutcome::Optimal(s) => s,
            LpOutcome::PivotLimit { .. } => panic!("pivot limit"),
        }
    }

    #[test]
    fn small_problem() {
        // min -x1 - 2x2  s.t. x1 + x2 + s1 = 4, x1 + 3x2 + s2 = 6
        let lp = StandardForm {
            a: vec![vec![1.0, 1.0, 1.0, 0.0], vec![1.0, 3.0, 0.0, 1.0]],
            b: vec![4.0, 6.0],
            c: vec![-1.0, -2.0, 0.0, 0.0],
        };
        let s = optimal(&lp);
        assert!((s.primal_objective + 5.0).abs() < 1e-12);
        assert!((s.x[0] - 3.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!(s.duality_gap.abs() < 1e-12);
        assert!(s.dual_infeasibility < 1e-12 && s.primal_residual < 1e-12);
    }

    #[test]
    fn negative_rhs_and_redundant_row() {
        // x1 - x2 = -1 written twice; min x1 + x2
        let lp = StandardForm {
            a: vec![vec![1.0, -1.0], vec![2.0, -2.0]],
            b: vec![-1.0, -2.0],
            c: vec![1.0, 1.0],
        };
        let s = optimal(&lp);
        assert!((s.primal_objective - 1.0).abs() < 1e-12);
        assert!(s.duality_gap.abs() < 1e-12);
        assert!(s.dual_infeasibility < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let infeasible = StandardForm {
            a: vec![vec![1.0, 1.0]],
            b: vec![-1.0],
            c: vec![0.0, 0.0],
        };
        assert!(matches!(
            solve(&infeasible, &SimplexOptions::default()),
            Err(Error::Infeasible)
        ));
        let unbounded = StandardForm {
            a: vec![vec![1.0, -1.0]],
            b: vec![0.0],
            c: vec![-1.0, 0.0],
        };
        assert!(matches!(
            solve(&unbounded, &SimplexOptions::default()),
            Err(Error::Unbounded)
        ));
    }

    #[test]
    fn pivot_limit_is_reported() {
        let lp = StandardForm {
            a: vec![vec![1.0, 1.0]],
            b: vec![1.0],
            c: vec![1.0, 2.0],
        };
        let opts = SimplexOptions {
            max_pivots: 0,
            ..SimplexOptions::default()
        };
        assert!(matches!(solve(&lp, &opts).unwrap(), LpOutcome::PivotLimit { pivots: 0 }));
    }
}
