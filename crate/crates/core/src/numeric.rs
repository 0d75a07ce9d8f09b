//! Small dense numeric kernels shared across the crate: compensated
//! summation, dot products, and an LU solver with iterative refinement.
//!
//! Order-condition rows contain entries as large as `k^p`, so plain
//! left-to-right accumulation would lose the low-order bits that the
//! residual checks depend on. All moment sums and residuals therefore go
//! through Neumaier's compensated summation.

/// Neumaier (improved Kahan) compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of an iterator of terms.
pub fn comp_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

/// Compensated dot product `aᵀb`.
pub fn comp_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    comp_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Integer power `base^exp` by repeated multiplication.
///
/// Exact whenever the true value fits in 53 bits, which covers every
/// moment entry `j^i` used by the supported (k, p) ranges.
#[inline]
pub fn int_pow(base: f64, exp: usize) -> f64 {
    let mut out = 1.0;
    for _ in 0..exp {
        out *= base;
    }
    out
}

/// Dense LU factorization with partial pivoting, for the small square
/// systems that appear in basis solves and implicit Newton steps.
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    pivots: Vec<usize>,
}

impl LuFactors {
    /// Factorize a row-major `n × n` matrix. Returns `None` when a pivot
    /// falls below `tiny` (numerically singular).
    pub fn factorize(matrix: &[f64], n: usize, tiny: f64) -> Option<Self> {
        debug_assert_eq!(matrix.len(), n * n);
        let mut lu = matrix.to_vec();
        let mut pivots = vec![0usize; n];
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_abs = lu[col * n + col].abs();
            for row in col + 1..n {
                let a = lu[row * n + col].abs();
                if a > pivot_abs {
                    pivot_abs = a;
                    pivot_row = row;
                }
            }
            if pivot_abs <= tiny {
                return None;
            }
            pivots[col] = pivot_row;
            if pivot_row != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot_row * n + j);
                }
            }
            let diag = lu[col * n + col];
            for row in col + 1..n {
                let factor = lu[row * n + col] / diag;
                lu[row * n + col] = factor;
                for j in col + 1..n {
                    lu[row * n + j] -= factor * lu[col * n + j];
                }
            }
        }
        Some(Self { n, lu, pivots })
    }

    /// Solve `Ax = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for col in 0..n {
            b.swap(col, self.pivots[col]);
            let bc = b[col];
            for row in col + 1..n {
                b[row] -= self.lu[row * n + col] * bc;
            }
        }
        for col in (0..n).rev() {
            b[col] /= self.lu[col * n + col];
            let bc = b[col];
            for row in 0..col {
                b[row] -= self.lu[row * n + col] * bc;
            }
        }
    }
}

/// Solve `Ax = b` with one step of iterative refinement using a
/// compensated residual, which keeps the final residual near the
/// rounding floor of the row magnitudes.
pub fn solve_refined(matrix: &[f64], n: usize, b: &[f64], tiny: f64) -> Option<Vec<f64>> {
    let lu = LuFactors::factorize(matrix, n, tiny)?;
    let mut x = b.to_vec();
    lu.solve(&mut x);
    let mut residual: Vec<f64> = (0..n)
        .map(|i| {
            let mut acc = CompensatedSum::new();
            acc.add(b[i]);
            for j in 0..n {
                acc.add(-matrix[i * n + j] * x[j]);
            }
            acc.value()
        })
        .collect();
    lu.solve(&mut residual);
    for (xi, di) in x.iter_mut().zip(&residual) {
        *xi += di;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_bits() {
        // 1 + 1e16 - 1e16 loses the 1 in naive double accumulation order.
        let naive = (1.0f64 + 1e16) - 1e16;
        assert_eq!(naive, 0.0);
        assert_eq!(comp_sum([1.0, 1e16, -1e16]), 1.0);
    }

    #[test]
    fn int_pow_matches_powi() {
        for base in 0..12 {
            for exp in 0..8 {
                assert_eq!(int_pow(base as f64, exp), (base as f64).powi(exp as i32));
            }
        }
        assert_eq!(int_pow(3.0, 0), 1.0);
        assert_eq!(int_pow(0.0, 0), 1.0);
    }

    #[test]
    fn lu_solves_small_system() {
        let a = [4.0, 1.0, 2.0, 1.0, 3.0, 0.0, 2.0, 0.0, 5.0];
        let b = [7.0, 4.0, 7.0];
        let x = solve_refined(&a, 3, &b, 1e-300).unwrap();
        for (i, row) in a.chunks(3).enumerate() {
            let r: f64 = row.iter().zip(&x).map(|(aij, xj)| aij * xj).sum::<f64>() - b[i];
            assert!(r.abs() < 1e-12, "row {i} residual {r}");
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(LuFactors::factorize(&a, 2, 1e-12).is_none());
    }
}
