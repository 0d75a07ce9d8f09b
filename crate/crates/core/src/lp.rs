//! Dense linear-programming feasibility: decide whether `Ax = b` admits
//! `x ≥ 0`, returning a basic feasible solution or a Farkas certificate.
//!
//! The engine is a phase-1 primal simplex with Bland's rule on a dense
//! tableau. The systems solved here are tiny (at most a few dozen columns
//! and ~16 rows), so robustness beats sparsity: rows and columns are
//! scaled to unit ∞-norm before solving, the basic solution is polished
//! by one step of iterative refinement with a compensated residual, and
//! infeasibility verdicts can be double-checked through an explicit dual
//! vector `v` with `vᵀA ≤ 0`, `vᵀb > 0`.

use crate::numeric::{comp_sum, solve_refined, CompensatedSum};
use crate::{Error, Result};

/// Absolute feasibility tolerance on the scaled residual.
pub const FEAS_TOL: f64 = 1e-9;

/// Entries below this are not acceptable pivots.
pub const PIVOT_TOL: f64 = 1e-11;

/// Equality-constrained nonnegative feasibility system `Ax = b`, `x ≥ 0`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    n_rows: usize,
    n_cols: usize,
    matrix: Vec<f64>,
    rhs: Vec<f64>,
}

impl LpProblem {
    /// Build a problem from a row-major matrix.
    pub fn new(n_rows: usize, n_cols: usize, matrix: Vec<f64>, rhs: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidArgument("LP needs n_rows, n_cols >= 1".into()));
        }
        if matrix.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                actual: matrix.len(),
            });
        }
        if rhs.len() != n_rows {
            return Err(Error::DimensionMismatch {
                expected: n_rows,
                actual: rhs.len(),
            });
        }
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("constraint matrix"));
        }
        if !rhs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        Ok(Self {
            n_rows,
            n_cols,
            matrix,
            rhs,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.n_cols + col]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `‖Ax − b‖_∞` evaluated with compensated dot products.
    pub fn residual_inf_norm(&self, x: &[f64]) -> f64 {
        (0..self.n_rows)
            .map(|i| {
                let mut acc = CompensatedSum::new();
                for j in 0..self.n_cols {
                    acc.add(self.entry(i, j) * x[j]);
                }
                acc.add(-self.rhs[i]);
                acc.value().abs()
            })
            .fold(0.0, f64::max)
    }
}

/// A basic feasible solution: at most `n_rows` strictly positive entries.
#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Nonnegative solution vector.
    pub x: Vec<f64>,
    /// Indices of the basic (structural) columns, size ≤ `n_rows`.
    pub basis: Vec<usize>,
    /// `‖Ax − b‖_∞` on the original (unscaled) data.
    pub residual_norm: f64,
}

/// Verdict of [`solve_feasibility`].
#[derive(Debug, Clone)]
pub enum Feasibility {
    Feasible(LpSolution),
    Infeasible,
}

impl Feasibility {
    pub fn solution(&self) -> Option<&LpSolution> {
        match self {
            Feasibility::Feasible(s) => Some(s),
            Feasibility::Infeasible => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

/// Decide feasibility of `Ax = b`, `x ≥ 0`.
///
/// Rank-deficient systems are handled by the artificial variables: a
/// dependent row whose right-hand side is consistently reproduced ends
/// with its artificial basic at zero, anything else drives the phase-1
/// objective positive and the verdict is infeasible.
pub fn solve_feasibility(problem: &LpProblem) -> Result<Feasibility> {
    Ok(match run_phase1(problem)? {
        Phase1Outcome::Feasible(solution) => Feasibility::Feasible(solution),
        Phase1Outcome::Infeasible { .. } => Feasibility::Infeasible,
    })
}

/// Produce a Farkas-style dual vector proving infeasibility: `v` with
/// `vᵀA ≤ tol` entrywise and `vᵀb > 0`. Returns `None` when the problem
/// is feasible or the certificate cannot be verified numerically.
pub fn certify_infeasible(problem: &LpProblem) -> Result<Option<Vec<f64>>> {
    match run_phase1(problem)? {
        Phase1Outcome::Feasible(_) => Ok(None),
        Phase1Outcome::Infeasible { farkas } => {
            let scale = farkas.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale == 0.0 {
                return Ok(None);
            }
            let v: Vec<f64> = farkas.iter().map(|vi| vi / scale).collect();
            Ok(verify_farkas(problem, &v).then_some(v))
        }
    }
}

fn verify_farkas(problem: &LpProblem, v: &[f64]) -> bool {
    let vb = comp_sum((0..problem.n_rows).map(|i| v[i] * problem.rhs[i]));
    if vb <= 0.0 {
        return false;
    }
    for j in 0..problem.n_cols {
        let col_norm = (0..problem.n_rows)
            .map(|i| problem.entry(i, j).abs())
            .fold(0.0, f64::max);
        let va = comp_sum((0..problem.n_rows).map(|i| v[i] * problem.entry(i, j)));
        if va > 1e-8 * col_norm.max(1.0) {
            return false;
        }
    }
    true
}

enum Phase1Outcome {
    Feasible(LpSolution),
    Infeasible { farkas: Vec<f64> },
}

/// Phase-1 tableau on the row/column-scaled copy of the problem.
struct Tableau {
    m: usize,
    n: usize,
    /// m × (n + m): scaled structural columns followed by artificials.
    rows: Vec<f64>,
    rhs: Vec<f64>,
    /// Reduced costs of the phase-1 objective (minimize Σ artificials).
    obj: Vec<f64>,
    obj_val: f64,
    basis: Vec<usize>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.n + self.m
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.width() + j]
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let w = self.width();
        let pivot = self.rows[r * w + s];
        for j in 0..w {
            self.rows[r * w + j] /= pivot;
        }
        self.rhs[r] /= pivot;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let factor = self.rows[i * w + s];
            if factor == 0.0 {
                continue;
            }
            for j in 0..w {
                self.rows[i * w + j] -= factor * self.rows[r * w + j];
            }
            self.rows[i * w + s] = 0.0;
            self.rhs[i] -= factor * self.rhs[r];
            if self.rhs[i].abs() < 1e-15 {
                self.rhs[i] = 0.0;
            }
        }
        let factor = self.obj[s];
        if factor != 0.0 {
            for j in 0..w {
                self.obj[j] -= factor * self.rows[r * w + j];
            }
            self.obj[s] = 0.0;
            // The entering variable takes the value rhs[r]; the phase-1
            // objective moves by its (negative) reduced cost times that.
            self.obj_val += factor * self.rhs[r];
        }
        self.basis[r] = s;
    }
}

fn run_phase1(problem: &LpProblem) -> Result<Phase1Outcome> {
    let m = problem.n_rows;
    let n = problem.n_cols;

    // Row scaling carries the sign flip that makes the rhs nonnegative.
    let mut row_scale = vec![1.0f64; m];
    for i in 0..m {
        let mag = (0..n)
            .map(|j| problem.entry(i, j).abs())
            .fold(problem.rhs[i].abs(), f64::max);
        let mag = if mag == 0.0 { 1.0 } else { mag };
        row_scale[i] = if problem.rhs[i] < 0.0 { -1.0 / mag } else { 1.0 / mag };
    }
    let mut scaled = vec![0.0f64; m * n];
    let mut rhs = vec![0.0f64; m];
    for i in 0..m {
        for j in 0..n {
            scaled[i * n + j] = problem.entry(i, j) * row_scale[i];
        }
        rhs[i] = problem.rhs[i] * row_scale[i];
    }
    let mut col_scale = vec![1.0f64; n];
    for j in 0..n {
        let mag = (0..m).map(|i| scaled[i * n + j].abs()).fold(0.0, f64::max);
        if mag > 0.0 {
            col_scale[j] = 1.0 / mag;
            for i in 0..m {
                scaled[i * n + j] *= col_scale[j];
            }
        }
    }

    let w = n + m;
    let mut rows = vec![0.0f64; m * w];
    for i in 0..m {
        rows[i * w..i * w + n].copy_from_slice(&scaled[i * n..(i + 1) * n]);
        rows[i * w + n + i] = 1.0;
    }
    let mut obj = vec![0.0f64; w];
    for (j, slot) in obj.iter_mut().enumerate().take(n) {
        *slot = -comp_sum((0..m).map(|i| rows[i * w + j]));
    }
    let obj_val = comp_sum(rhs.iter().copied());
    let mut tab = Tableau {
        m,
        n,
        rows,
        rhs,
        obj,
        obj_val,
        basis: (n..n + m).collect(),
    };

    let max_pivots = 200 * (m + n) + 1000;
    for _ in 0..max_pivots {
        // Bland: entering column is the lowest index with negative
        // reduced cost, leaving row breaks ratio ties by basis index.
        let Some(entering) = (0..tab.width()).find(|&j| tab.obj[j] < -PIVOT_TOL) else {
            return Ok(finish(problem, tab, &row_scale, &col_scale));
        };
        let mut leaving: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = tab.at(i, entering);
            if a > PIVOT_TOL {
                let ratio = tab.rhs[i] / a;
                let better = match leaving {
                    None => true,
                    Some((best_row, best_ratio)) => {
                        ratio < best_ratio - 1e-15
                            || (ratio <= best_ratio + 1e-15
                                && tab.basis[i] < tab.basis[best_row])
                    }
                };
                if better {
                    leaving = Some((i, ratio));
                }
            }
        }
        let Some((leaving, _)) = leaving else {
            // Phase-1 objective is bounded below by zero, so an unbounded
            // ray only appears through numerical breakdown.
            return Err(Error::InvalidArgument(
                "phase-1 simplex detected an unbounded direction".into(),
            ));
        };
        tab.pivot(leaving, entering);
    }
    Err(Error::InvalidArgument("simplex pivot limit exceeded".into()))
}

fn finish(
    problem: &LpProblem,
    mut tab: Tableau,
    row_scale: &[f64],
    col_scale: &[f64],
) -> Phase1Outcome {
    let (m, n) = (tab.m, tab.n);
    if tab.obj_val > FEAS_TOL {
        // Simplex multipliers y_i = 1 − (reduced cost of artificial i),
        // mapped back through the signed row scaling.
        let farkas: Vec<f64> = (0..m)
            .map(|i| (1.0 - tab.obj[n + i]) * row_scale[i])
            .collect();
        return Phase1Outcome::Infeasible { farkas };
    }

    // Drive leftover artificials out of the basis where a structural
    // pivot exists; rows without one are redundant and contribute x = 0.
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(s) = (0..n).find(|&j| tab.at(r, j).abs() > PIVOT_TOL) {
                tab.pivot(r, s);
            }
        }
    }

    let mut x = vec![0.0f64; n];
    let mut basis: Vec<usize> = Vec::new();
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs[r].max(0.0);
            basis.push(tab.basis[r]);
        }
    }
    basis.sort_unstable();
    for (j, xj) in x.iter_mut().enumerate() {
        *xj *= col_scale[j];
    }

    // Polish a full-rank basis against the unscaled data.
    if basis.len() == m {
        let mut bmat = vec![0.0f64; m * m];
        for (bi, &j) in basis.iter().enumerate() {
            for i in 0..m {
                bmat[i * m + bi] = problem.entry(i, j);
            }
        }
        if let Some(xb) = solve_refined(&bmat, m, problem.rhs(), 1e-300) {
            if xb.iter().all(|&v| v >= -FEAS_TOL) {
                let mut refined = vec![0.0f64; n];
                for (bi, &j) in basis.iter().enumerate() {
                    refined[j] = xb[bi].max(0.0);
                }
                if problem.residual_inf_norm(&refined) <= problem.residual_inf_norm(&x) {
                    x = refined;
                }
            }
        }
    }

    let residual_norm = problem.residual_inf_norm(&x);
    Phase1Outcome::Feasible(LpSolution {
        x,
        basis,
        residual_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(rows: &[&[f64]], rhs: &[f64]) -> LpProblem {
        let n_rows = rows.len();
        let n_cols = rows[0].len();
        let matrix: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        LpProblem::new(n_rows, n_cols, matrix, rhs.to_vec()).unwrap()
    }

    #[test]
    fn identity_system() {
        let p = problem(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]], &[1.0, 2.0, 0.0]);
        let sol = solve_feasibility(&p).unwrap();
        let sol = sol.solution().expect("feasible");
        assert_eq!(sol.x, vec![1.0, 2.0, 0.0]);
        assert!(sol.residual_norm <= FEAS_TOL);
    }

    #[test]
    fn negative_rhs_single_row_infeasible() {
        let p = problem(&[&[1.0, 1.0]], &[-1.0]);
        assert!(!solve_feasibility(&p).unwrap().is_feasible());
        let v = certify_infeasible(&p).unwrap().expect("certificate");
        assert_eq!(v.len(), 1);
        assert!(v[0] < 0.0);
    }

    #[test]
    fn two_row_system_returns_basic_solution() {
        let p = problem(&[&[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0]], &[1.0, 1.0]);
        let sol = solve_feasibility(&p).unwrap();
        let sol = sol.solution().expect("feasible");
        assert!(p.residual_inf_norm(&sol.x) <= FEAS_TOL);
        let positives = sol.x.iter().filter(|&&v| v > 0.0).count();
        assert!(positives <= 2, "not basic: {:?}", sol.x);
        // Hand enumeration of the candidate bases gives exactly these.
        let near = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(
            near(&sol.x, &[1.0, 0.0, 1.0]) || near(&sol.x, &[0.0, 1.0, 0.0]),
            "unexpected vertex {:?}",
            sol.x
        );
    }

    #[test]
    fn inconsistent_duplicate_rows() {
        let p = problem(&[&[1.0, 0.0], &[1.0, 0.0]], &[0.0, 1.0]);
        assert!(!solve_feasibility(&p).unwrap().is_feasible());
        let v = certify_infeasible(&p).unwrap().expect("certificate");
        let va0 = v[0] + v[1];
        let vb = v[1];
        assert!(va0.abs() <= 1e-9);
        assert!(vb > 0.0);
    }

    #[test]
    fn consistent_duplicate_rows_are_dropped() {
        let p = problem(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]], &[1.0, 1.0, 2.0]);
        let sol = solve_feasibility(&p).unwrap();
        let sol = sol.solution().expect("feasible");
        assert!(p.residual_inf_norm(&sol.x) <= FEAS_TOL);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn certify_returns_none_on_feasible() {
        let p = problem(&[&[1.0, 0.0], &[0.0, 1.0]], &[1.0, 1.0]);
        assert!(certify_infeasible(&p).unwrap().is_none());
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(LpProblem::new(2, 2, vec![1.0; 3], vec![0.0; 2]).is_err());
        assert!(LpProblem::new(2, 2, vec![1.0; 4], vec![0.0; 3]).is_err());
        assert!(LpProblem::new(1, 1, vec![f64::NAN], vec![0.0]).is_err());
        assert!(LpProblem::new(1, 1, vec![1.0], vec![f64::INFINITY]).is_err());
        assert!(LpProblem::new(0, 1, vec![], vec![]).is_err());
    }

    #[test]
    fn zero_columns_stay_out_of_the_basis() {
        let p = problem(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]], &[2.0, 3.0]);
        let sol = solve_feasibility(&p).unwrap();
        let sol = sol.solution().unwrap();
        assert_eq!(sol.x[0], 0.0);
        assert!((sol.x[1] - 2.0).abs() < 1e-12);
        assert!((sol.x[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn badly_scaled_rows_still_solve() {
        // Rows spanning ten orders of magnitude.
        let p = problem(
            &[&[1.0e6, 1.0e6, 0.0], &[0.0, 1.0e-4, 1.0e-4]],
            &[2.0e6, 3.0e-4],
        );
        let sol = solve_feasibility(&p).unwrap();
        let sol = sol.solution().expect("feasible");
        assert!(p.residual_inf_norm(&sol.x) <= 1e-9 * 1.0e6);
        assert!(sol.x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn degenerate_rhs_entry() {
        let p = problem(&[&[1.0, 1.0], &[1.0, -1.0]], &[1.0, 1.0]);
        let sol = solve_feasibility(&p).unwrap();
        let sol = sol.solution().expect("feasible");
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!(sol.x[1].abs() < 1e-12);
    }
}
