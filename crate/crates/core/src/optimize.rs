//! Search for optimal SSP methods by bisection on the SSP coefficient.
//!
//! For a candidate coefficient `r`, the order conditions combined with the
//! monotonicity slacks `γ_j = α_j − r·β_j − r̃·β̃_j` form a linear
//! feasibility system in the nonnegative unknowns `(γ, β, β̃)` (or
//! `(γ, β, β̂)` for additive and IMEX families). Feasibility is monotone
//! in `r` — a feasible point at `r` yields one at any smaller `r` by
//! growing the slacks — so the supremum is found by bisection, with each
//! probe answered by the phase-1 simplex in [`crate::lp`].
//!
//! Methods of order at least two have SSP coefficient at most 2, which
//! pins the initial bracket; first-order implicit families can be
//! unbounded and use geometric bracket expansion with a cap instead.

use crate::lp::{solve_feasibility, Feasibility, LpProblem, LpSolution};
use crate::method::{
    moment_vector, moment_vector_perturbed, ssp_coefficient_pair, Family, MethodTable,
    MomentVector, PerturbSign, SspCertificate, SspPair, MAX_K,
};
use crate::numeric::int_pow;
use crate::{Error, Result};
use rayon::prelude::*;

/// Default absolute bisection tolerance on `r`.
pub const BISECT_TOL: f64 = 1e-6;

/// Cap for geometric bracket expansion; hitting it means the coefficient
/// is unbounded for practical purposes.
pub const R_CAP: f64 = 1e6;

/// Entries at or below this count as zero in support counts.
pub const NONZERO_TOL: f64 = 1e-10;

/// Upper bracket for families of order ≥ 2 (coefficient bound 2 plus a
/// safety margin).
const R_HI_SECOND_ORDER: f64 = 2.1;

/// An optimal method found by bisection, with its SSP certificate.
#[derive(Debug, Clone)]
pub struct OptimalMethodResult {
    pub method: MethodTable,
    /// Certificate at the method's own SSP coefficient: `r` here is the
    /// exact coefficient of the reconstructed coefficients, which lies
    /// within the final bisection bracket.
    pub certificate: SspCertificate,
    pub family: Family,
    pub k: usize,
    pub p: usize,
    pub y: f64,
    /// Final bracket width `r_hi − r_lo`.
    pub bisection_gap: f64,
    /// Positive entries among `(γ, β, β_second)` at the optimum.
    pub nonzero_count: usize,
    /// Raw basic solution of the last feasible probe.
    pub lp_solution: LpSolution,
}

impl OptimalMethodResult {
    /// The SSP coefficient `C(y)`.
    pub fn r(&self) -> f64 {
        self.certificate.r
    }

    /// The second coefficient `y·C(y)`.
    pub fn r_second(&self) -> f64 {
        self.certificate.r_second
    }
}

/// One point of a region scan: `(y, C_{k,p}(y), y·C_{k,p}(y))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSample {
    pub y: f64,
    pub c: f64,
    pub c_second: f64,
}

/// Assemble the feasibility system for perturbed (and classical) methods.
///
/// Unknowns are ordered `(γ_0..γ_{k-1}, β_0..β_k, β̃_0..β̃_k)`, so
/// `n_cols = 3k + 2`; the `p + 1` rows are the moment equations with
/// right-hand side `a_k`, with `r̃ = y·r` substituted throughout. The
/// explicit flag zeroes the `β_k` and `β̃_k` columns.
pub fn build_perturbed_lp(
    k: usize,
    p: usize,
    y: f64,
    r: f64,
    explicit_flag: bool,
) -> Result<LpProblem> {
    validate_search_args(k, p, y, r)?;
    let n_rows = p + 1;
    let n_cols = 3 * k + 2;
    let r_tilde = y * r;
    let mut matrix = vec![0.0f64; n_rows * n_cols];
    for i in 0..n_rows {
        for j in 0..k {
            let a = int_pow(j as f64, i);
            let a_prime = prime_entry(j, i);
            // γ_j column: a_j
            matrix[i * n_cols + j] = a;
            // β_j column: r·a_j + a'_j
            matrix[i * n_cols + k + j] = r * a + a_prime;
            // β̃_j column: r̃·a_j − a'_j
            matrix[i * n_cols + 2 * k + 1 + j] = r_tilde * a - a_prime;
        }
        let a_prime_k = prime_entry(k, i);
        if !explicit_flag {
            matrix[i * n_cols + 2 * k] = a_prime_k;
            matrix[i * n_cols + 3 * k + 1] = -a_prime_k;
        }
    }
    let rhs: Vec<f64> = (0..n_rows).map(|i| int_pow(k as f64, i)).collect();
    LpProblem::new(n_rows, n_cols, matrix, rhs)
}

/// Assemble the feasibility system for additive methods.
///
/// Unknowns are `(γ, β, β̂)` with `n_cols = 3k + 2`. Both order-condition
/// sets are imposed simultaneously; the zeroth-order row appears once, so
/// there are `2p + 1` rows.
pub fn build_additive_lp(
    k: usize,
    p: usize,
    y: f64,
    r: f64,
    explicit_flag: bool,
) -> Result<LpProblem> {
    validate_search_args(k, p, y, r)?;
    let n_rows = 2 * p + 1;
    let n_cols = 3 * k + 2;
    let r_hat = y * r;
    let mut matrix = vec![0.0f64; n_rows * n_cols];
    let mut rhs = vec![0.0f64; n_rows];
    // Rows 0..=p carry the F-side conditions, rows p+1.. the F̂-side
    // conditions for orders 1..=p.
    for row in 0..n_rows {
        let (i, f_side) = if row <= p { (row, true) } else { (row - p, false) };
        for j in 0..k {
            let a = int_pow(j as f64, i);
            let a_prime = prime_entry(j, i);
            matrix[row * n_cols + j] = a;
            matrix[row * n_cols + k + j] = r * a + if f_side { a_prime } else { 0.0 };
            matrix[row * n_cols + 2 * k + 1 + j] = r_hat * a + if f_side { 0.0 } else { a_prime };
        }
        if !explicit_flag {
            let a_prime_k = prime_entry(k, i);
            if f_side {
                matrix[row * n_cols + 2 * k] = a_prime_k;
            } else {
                matrix[row * n_cols + 3 * k + 1] = a_prime_k;
            }
        }
        rhs[row] = int_pow(k as f64, i);
    }
    LpProblem::new(n_rows, n_cols, matrix, rhs)
}

/// Assemble the feasibility system for IMEX methods: explicit weights `β`
/// (`β_k = 0` removed), implicit weights `β̂_0..β̂_k`.
///
/// Unknowns are `(γ_0..γ_{k-1}, β_0..β_{k-1}, β̂_0..β̂_k)` with
/// `n_cols = 3k + 1`. The `p + 1` combined order rows are followed by the
/// `p` coupling rows `Σ_{j<k}(β_j − β̂_j)·j^i − β̂_k·k^i = 0`, `i < p`.
pub fn build_imex_lp(k: usize, p: usize, y: f64, r: f64) -> Result<LpProblem> {
    validate_search_args(k, p, y, r)?;
    let n_rows = 2 * p + 1;
    let n_cols = 3 * k + 1;
    let r_hat = y * r;
    let mut matrix = vec![0.0f64; n_rows * n_cols];
    let mut rhs = vec![0.0f64; n_rows];
    for i in 0..=p {
        for j in 0..k {
            let a = int_pow(j as f64, i);
            matrix[i * n_cols + j] = a;
            matrix[i * n_cols + k + j] = r * a + prime_entry(j, i);
            matrix[i * n_cols + 2 * k + j] = r_hat * a;
        }
        rhs[i] = int_pow(k as f64, i);
    }
    for i in 0..p {
        let row = p + 1 + i;
        for j in 0..k {
            let a = int_pow(j as f64, i);
            matrix[row * n_cols + k + j] = a;
            matrix[row * n_cols + 2 * k + j] = -a;
        }
        matrix[row * n_cols + 3 * k] = -int_pow(k as f64, i);
    }
    LpProblem::new(n_rows, n_cols, matrix, rhs)
}

fn prime_entry(j: usize, i: usize) -> f64 {
    if i == 0 {
        0.0
    } else {
        i as f64 * int_pow(j as f64, i - 1)
    }
}

fn validate_search_args(k: usize, p: usize, y: f64, r: f64) -> Result<()> {
    if k == 0 || k > MAX_K {
        return Err(Error::InvalidArgument(format!("k must be in 1..={MAX_K}, got {k}")));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("order p must be >= 1".into()));
    }
    if !y.is_finite() || y < 0.0 {
        return Err(Error::InvalidArgument(format!("y must be finite and >= 0, got {y}")));
    }
    if !r.is_finite() || r < 0.0 {
        return Err(Error::InvalidArgument(format!("r must be finite and >= 0, got {r}")));
    }
    Ok(())
}

fn family_lp(family: Family, k: usize, p: usize, y: f64, r: f64, explicit: bool) -> Result<LpProblem> {
    Ok(match family {
        Family::Classical => {
            let lp = build_perturbed_lp(k, p, 0.0, r, explicit)?;
            zero_columns(&lp, &(2 * k + 1..3 * k + 2).collect::<Vec<_>>())
        }
        Family::Perturbed => build_perturbed_lp(k, p, y, r, explicit)?,
        Family::Additive => build_additive_lp(k, p, y, r, explicit)?,
        Family::Imex => build_imex_lp(k, p, y, r)?,
    })
}

fn probe(family: Family, k: usize, p: usize, y: f64, r: f64, explicit: bool) -> Result<Feasibility> {
    solve_feasibility(&family_lp(family, k, p, y, r, explicit)?)
}

fn zero_columns(lp: &LpProblem, cols: &[usize]) -> LpProblem {
    let n_rows = lp.n_rows();
    let n_cols = lp.n_cols();
    let mut matrix = vec![0.0f64; n_rows * n_cols];
    for i in 0..n_rows {
        for j in 0..n_cols {
            matrix[i * n_cols + j] = if cols.contains(&j) { 0.0 } else { lp.entry(i, j) };
        }
    }
    LpProblem::new(n_rows, n_cols, matrix, lp.rhs().to_vec()).expect("same dimensions")
}

/// Greedily shrink the positive support of a feasible basic solution by
/// forcing small entries to zero and re-solving at the same `r`.
///
/// A probe just below the optimum typically lands on a vertex whose
/// slack variables carry leftovers of size O(bisection gap); the optimal
/// support itself is stable in `r`, so the restricted system stays
/// feasible once those leftovers are dropped.
fn polish_support(lp: &LpProblem, mut best: LpSolution) -> Result<LpSolution> {
    let mut banned: Vec<usize> = Vec::new();
    loop {
        let mut candidates: Vec<(f64, usize)> = best
            .x
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v > 0.0)
            .map(|(j, &v)| (v, j))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut dropped = false;
        for &(_, j) in &candidates {
            banned.push(j);
            let restricted = zero_columns(lp, &banned);
            match solve_feasibility(&restricted)? {
                Feasibility::Feasible(sol) => {
                    best = sol;
                    dropped = true;
                    break;
                }
                Feasibility::Infeasible => {
                    banned.pop();
                }
            }
        }
        if !dropped {
            break;
        }
    }
    best.residual_norm = lp.residual_inf_norm(&best.x);
    Ok(best)
}

/// Find the optimal method of the given family at ratio `y` with the
/// default bisection tolerance. `Ok(None)` means no SSP method exists
/// (the supremum over feasible `r` is zero); classical searches ignore
/// `y`, IMEX searches ignore `explicit_flag`.
pub fn optimal_method(
    family: Family,
    k: usize,
    p: usize,
    y: f64,
    explicit_flag: bool,
) -> Result<Option<OptimalMethodResult>> {
    optimal_method_with_tol(family, k, p, y, explicit_flag, BISECT_TOL)
}

/// [`optimal_method`] with an explicit bisection tolerance.
pub fn optimal_method_with_tol(
    family: Family,
    k: usize,
    p: usize,
    y: f64,
    explicit_flag: bool,
    bisect_tol: f64,
) -> Result<Option<OptimalMethodResult>> {
    if !(bisect_tol.is_finite() && bisect_tol > 0.0) {
        return Err(Error::InvalidArgument("bisection tolerance must be positive".into()));
    }
    validate_search_args(k, p, y, 0.0)?;

    let mut best: Option<(f64, LpSolution)> = match probe(family, k, p, y, 0.0, explicit_flag)? {
        Feasibility::Feasible(sol) => Some((0.0, sol)),
        Feasibility::Infeasible => return Ok(None),
    };

    // Bracket: order ≥ 2 caps the coefficient at 2; otherwise expand
    // geometrically until an infeasible r is found.
    let mut r_lo = 0.0f64;
    let mut r_hi = if p >= 2 { R_HI_SECOND_ORDER } else { 1.0 };
    loop {
        match probe(family, k, p, y, r_hi, explicit_flag)? {
            Feasibility::Feasible(sol) => {
                r_lo = r_hi;
                best = Some((r_hi, sol));
                r_hi *= 2.0;
                if r_hi > R_CAP {
                    return Err(Error::BracketCapHit { r_cap: R_CAP });
                }
            }
            Feasibility::Infeasible => break,
        }
    }

    while r_hi - r_lo > bisect_tol {
        let mid = 0.5 * (r_lo + r_hi);
        match probe(family, k, p, y, mid, explicit_flag)? {
            Feasibility::Feasible(sol) => {
                r_lo = mid;
                best = Some((mid, sol));
            }
            Feasibility::Infeasible => r_hi = mid,
        }
    }

    if r_lo <= 0.0 {
        // Feasible only at r = 0: the method exists but is not SSP.
        return Ok(None);
    }
    let (mut r, solution) = best.expect("bisection kept a feasible solution");
    let mut solution =
        polish_support(&family_lp(family, k, p, y, r, explicit_flag)?, solution)?;

    // Walk the vertex up to the optimum, switching bases where the
    // current one degenerates, as in a parametric simplex.
    for _ in 0..64 {
        let Some((r_star, x_star)) =
            refine_at_optimum(family, k, p, y, explicit_flag, &solution.basis, r, r_hi)
        else {
            break;
        };
        let advanced = r_star > r + 1e-12 * r.max(1.0);
        solution.x = x_star;
        r = r_star;
        if !advanced {
            break;
        }
        match probe(family, k, p, y, r, explicit_flag)? {
            Feasibility::Feasible(fresh) => {
                solution = polish_support(&family_lp(family, k, p, y, r, explicit_flag)?, fresh)?;
            }
            Feasibility::Infeasible => break,
        }
    }
    let result = reconstruct(family, k, p, y, r, r_hi - r_lo, solution)?;
    Ok(Some(result))
}

/// Slide the last feasible vertex up to the optimum along its own basis.
///
/// For a fixed basis the basic solution `x_B(r) = B(r)⁻¹·a_k` is a smooth
/// function of `r`, nonnegative at the last feasible probe and with a
/// negative component at the infeasible bracket end (otherwise that probe
/// would have been feasible). Root-finding on its minimum component gives
/// the exact coefficient where the vertex hits the boundary of the
/// nonnegative orthant — the component that vanishes there is what drops
/// the positive support to `p` at the optimum.
fn refine_at_optimum(
    family: Family,
    k: usize,
    p: usize,
    y: f64,
    explicit: bool,
    basis: &[usize],
    r_lo: f64,
    r_hi: f64,
) -> Option<(f64, Vec<f64>)> {
    let m = family_lp(family, k, p, y, r_lo, explicit).ok()?.n_rows();
    if basis.len() != m {
        return None;
    }
    let solve_basis = |r: f64| -> Option<Vec<f64>> {
        let lp = family_lp(family, k, p, y, r, explicit).ok()?;
        let mut bmat = vec![0.0f64; m * m];
        for (bi, &col) in basis.iter().enumerate() {
            for i in 0..m {
                bmat[i * m + bi] = lp.entry(i, col);
            }
        }
        crate::numeric::solve_refined(&bmat, m, lp.rhs(), 1e-250)
    };
    let min_entry = |x: &[f64]| x.iter().copied().fold(f64::INFINITY, f64::min);

    let x = solve_basis(r_lo)?;
    if min_entry(&x) < -1e-9 {
        return None;
    }
    let mut lo = r_lo;
    let mut hi = r_hi;
    let mut best = x;
    match solve_basis(r_hi) {
        Some(xh) if min_entry(&xh) >= 0.0 => return None,
        _ => {}
    }
    while hi - lo > 1e-13 * lo.max(1.0) {
        let mid = 0.5 * (lo + hi);
        match solve_basis(mid) {
            Some(xm) if min_entry(&xm) >= 0.0 => {
                lo = mid;
                best = xm;
            }
            _ => hi = mid,
        }
    }
    let lp = family_lp(family, k, p, y, lo, explicit).ok()?;
    let mut full = vec![0.0f64; lp.n_cols()];
    for (bi, &col) in basis.iter().enumerate() {
        full[col] = best[bi].max(0.0);
    }
    Some((lo, full))
}

/// Rebuild the coefficient table from an LP solution at feasible `r` via
/// `α_j = γ_j + r·β_j + r̃·β̃_j`, then re-certify the fixed table. The
/// certificate's coefficient is the exact SSP coefficient of the
/// reconstructed method, at least as large as the probed `r`.
fn reconstruct(
    family: Family,
    k: usize,
    p: usize,
    y: f64,
    r: f64,
    bisection_gap: f64,
    solution: LpSolution,
) -> Result<OptimalMethodResult> {
    let x = &solution.x;
    let (beta, beta_second): (Vec<f64>, Vec<f64>) = match family {
        Family::Imex => {
            let mut beta: Vec<f64> = x[k..2 * k].to_vec();
            beta.push(0.0);
            (beta, x[2 * k..3 * k + 1].to_vec())
        }
        Family::Classical => (x[k..2 * k + 1].to_vec(), vec![0.0; k + 1]),
        _ => (x[k..2 * k + 1].to_vec(), x[2 * k + 1..3 * k + 2].to_vec()),
    };
    let gamma = &x[0..k];
    let y_eff = if family == Family::Classical { 0.0 } else { y };
    let alpha: Vec<f64> = (0..k)
        .map(|j| gamma[j] + r * beta[j] + y_eff * r * beta_second[j])
        .collect();
    let explicit = beta[k] == 0.0 && beta_second[k] == 0.0;
    let method = MethodTable::new(family, alpha, beta, beta_second, explicit)?;

    let certificate = match ssp_coefficient_pair(&method, y)? {
        SspPair::Finite(cert) => cert,
        // The probe at r_hi was infeasible, so the coefficient of any
        // feasible table is finite; fall back to the probed r if the
        // re-evaluation degenerates numerically.
        _ => SspCertificate {
            r,
            r_second: y * r,
            y,
            gamma: gamma.to_vec(),
        },
    };
    let nonzero_count = count_positive(&certificate.gamma)
        + count_positive(method.beta())
        + count_positive(method.beta_second());
    Ok(OptimalMethodResult {
        method,
        certificate,
        family,
        k,
        p,
        y,
        bisection_gap,
        nonzero_count,
        lp_solution: solution,
    })
}

fn count_positive(values: &[f64]) -> usize {
    values.iter().filter(|&&v| v > NONZERO_TOL).count()
}

/// Scan `C_{k,p}(y)` over a strictly increasing nonnegative grid.
/// Grid points where no SSP method exists contribute `c = 0`.
pub fn region_scan(
    family: Family,
    k: usize,
    p: usize,
    y_grid: &[f64],
    explicit_flag: bool,
) -> Result<Vec<RegionSample>> {
    if y_grid.is_empty() {
        return Err(Error::InvalidArgument("y grid must be nonempty".into()));
    }
    if y_grid.iter().any(|y| !y.is_finite() || *y < 0.0) {
        return Err(Error::InvalidArgument("y grid must be nonnegative".into()));
    }
    if y_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("y grid must be strictly increasing".into()));
    }
    y_grid
        .par_iter()
        .map(|&y| {
            let c = optimal_method(family, k, p, y, explicit_flag)?
                .map(|res| res.r())
                .unwrap_or(0.0);
            Ok(RegionSample {
                y,
                c,
                c_second: y * c,
            })
        })
        .collect()
}

/// Check the support bound on an optimal method: at most `p` positive
/// entries (threshold [`NONZERO_TOL`]) among `(γ, β, β̃)` for classical
/// and perturbed families, or among `(δ, β)` with `δ_j = α_j − C·β_j`
/// for additive and IMEX families.
pub fn verify_nonzero_bound(result: &OptimalMethodResult) -> bool {
    let support = match result.family {
        Family::Classical | Family::Perturbed => {
            count_positive(&result.certificate.gamma)
                + count_positive(result.method.beta())
                + count_positive(result.method.beta_second())
        }
        Family::Additive | Family::Imex => {
            let c = result.certificate.r;
            let delta: Vec<f64> = result
                .method
                .alpha()
                .iter()
                .zip(result.method.beta())
                .map(|(a, b)| a - c * b)
                .collect();
            count_positive(&delta) + count_positive(result.method.beta())
        }
    };
    support <= result.p
}

/// Check that an optimal additive method is equivalent to one with
/// `β̂ = β`: keeping `α`, set `β̂ := β` and re-derive the slacks
/// `γ_j = α_j − r(1 + y)·β_j`; the rewrite succeeds when all slacks are
/// nonnegative, which also re-establishes feasibility at the same `r`.
pub fn verify_additive_beta_equality(result: &OptimalMethodResult) -> Result<bool> {
    if result.family != Family::Additive {
        return Err(Error::InvalidArgument(
            "beta-equality verification applies to additive results".into(),
        ));
    }
    let r = result.certificate.r;
    let y = result.y;
    let ok = result
        .method
        .alpha()
        .iter()
        .zip(result.method.beta())
        .all(|(a, b)| a - r * (1.0 + y) * b >= -1e-8);
    Ok(ok)
}

/// Verdict of the optimal-method uniqueness test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Uniqueness {
    Unique,
    /// The sign condition failed or the configuration is degenerate; the
    /// criterion is sufficient but not necessary, so nothing follows.
    Inconclusive,
}

/// Sufficient uniqueness test for an optimal perturbed method.
///
/// Builds the `(p+1) × (p+1)` determinant whose first `p` columns are the
/// moment vectors of the active (positive) coefficients at the optimum
/// and whose last column is a test vector `v`; the optimum is unique when
/// the determinant has one strict sign over every inactive choice of `v`.
/// Requires positive support of size exactly `p`.
pub fn uniqueness_test(result: &OptimalMethodResult) -> Result<Uniqueness> {
    if result.family != Family::Perturbed {
        return Err(Error::InvalidArgument(
            "uniqueness test applies to perturbed results".into(),
        ));
    }
    let (k, p) = (result.k, result.p);
    let c = result.certificate.r;
    let c_tilde = result.certificate.r_second;
    if c <= 0.0 || c_tilde <= 0.0 {
        return Ok(Uniqueness::Inconclusive);
    }
    let x_up = 1.0 / c;
    let x_down = 1.0 / c_tilde;

    let gamma_active: Vec<usize> = support_indices(&result.certificate.gamma);
    let beta_active: Vec<usize> = support_indices(result.method.beta());
    let tilde_active: Vec<usize> = support_indices(result.method.beta_second());
    let support = gamma_active.len() + beta_active.len() + tilde_active.len();
    if support != p {
        return Err(Error::SupportSizeMismatch {
            expected: p,
            actual: support,
        });
    }

    let mut active: Vec<MomentVector> = Vec::with_capacity(p);
    active.extend(gamma_active.iter().map(|&i| moment_vector(i, p)));
    active.extend(
        beta_active
            .iter()
            .map(|&j| moment_vector_perturbed(j, p, PerturbSign::Plus, x_up, k)),
    );
    active.extend(
        tilde_active
            .iter()
            .map(|&l| moment_vector_perturbed(l, p, PerturbSign::Minus, x_down, k)),
    );

    let mut sign = 0.0f64;
    let mut test = |v: MomentVector| -> Option<Uniqueness> {
        let det = normalized_det(&active, &v, p);
        if det.abs() <= 1e-9 {
            return Some(Uniqueness::Inconclusive);
        }
        if sign == 0.0 {
            sign = det.signum();
        } else if det.signum() != sign {
            return Some(Uniqueness::Inconclusive);
        }
        None
    };

    for i in 0..k {
        if !gamma_active.contains(&i) {
            if let Some(verdict) = test(moment_vector(i, p)) {
                return Ok(verdict);
            }
        }
    }
    for j in 0..=k {
        if !beta_active.contains(&j) {
            if let Some(verdict) = test(moment_vector_perturbed(j, p, PerturbSign::Plus, x_up, k)) {
                return Ok(verdict);
            }
        }
    }
    for l in 0..=k {
        if !tilde_active.contains(&l) {
            if let Some(verdict) =
                test(moment_vector_perturbed(l, p, PerturbSign::Minus, x_down, k))
            {
                return Ok(verdict);
            }
        }
    }
    Ok(Uniqueness::Unique)
}

fn support_indices(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > NONZERO_TOL)
        .map(|(i, _)| i)
        .collect()
}

/// Determinant of `[active…, v]` with every column scaled to unit ∞-norm.
fn normalized_det(active: &[MomentVector], v: &MomentVector, p: usize) -> f64 {
    let n = p + 1;
    let mut m = vec![0.0f64; n * n];
    for (col, vec) in active.iter().chain(std::iter::once(v)).enumerate() {
        let norm = vec
            .entries()
            .iter()
            .fold(0.0f64, |acc, e| acc.max(e.abs()))
            .max(f64::MIN_POSITIVE);
        for (row, &e) in vec.entries().iter().enumerate() {
            m[row * n + col] = e / norm;
        }
    }
    det_in_place(&mut m, n)
}

fn det_in_place(m: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0f64;
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_abs = m[col * n + col].abs();
        for row in col + 1..n {
            let a = m[row * n + col].abs();
            if a > pivot_abs {
                pivot_abs = a;
                pivot_row = row;
            }
        }
        if pivot_abs == 0.0 {
            return 0.0;
        }
        if pivot_row != col {
            for j in 0..n {
                m.swap(col * n + j, pivot_row * n + j);
            }
            det = -det;
        }
        let diag = m[col * n + col];
        det *= diag;
        for row in col + 1..n {
            let factor = m[row * n + col] / diag;
            for j in col + 1..n {
                m[row * n + j] -= factor * m[col * n + j];
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::solve_feasibility;

    #[test]
    fn perturbed_lp_row0_decouples_beta_at_r_zero() {
        let lp = build_perturbed_lp(2, 2, 1.0, 0.0, true).unwrap();
        assert_eq!(lp.n_cols(), 8);
        assert_eq!(lp.n_rows(), 3);
        // Row 0 reads γ_0 + γ_1 = 1.
        assert_eq!(lp.entry(0, 0), 1.0);
        assert_eq!(lp.entry(0, 1), 1.0);
        for j in 2..8 {
            assert_eq!(lp.entry(0, j), 0.0, "col {j}");
        }
        assert_eq!(lp.rhs()[0], 1.0);
    }

    #[test]
    fn perturbed_lp_forward_euler_point() {
        // k=1, p=1, y=0, r=1, explicit: γ_0 = 0, β_0 = 1 is feasible.
        let lp = build_perturbed_lp(1, 1, 0.0, 1.0, true).unwrap();
        let sol = solve_feasibility(&lp).unwrap();
        let sol = sol.solution().expect("feasible");
        assert!((sol.x[1] - 1.0).abs() < 1e-12, "beta_0 = {}", sol.x[1]);
        assert!(sol.x[0].abs() < 1e-12, "gamma_0 = {}", sol.x[0]);
    }

    #[test]
    fn perturbed_lp_k2_feasible_at_half_infeasible_above() {
        // C_{2,2}(1) = 1/2 exactly.
        let lp = build_perturbed_lp(2, 2, 1.0, 0.5, true).unwrap();
        assert!(solve_feasibility(&lp).unwrap().is_feasible());
        let lp = build_perturbed_lp(2, 2, 1.0, 0.5 + 1e-4, true).unwrap();
        assert!(!solve_feasibility(&lp).unwrap().is_feasible());
    }

    #[test]
    fn optimal_classical_forward_euler() {
        let res = optimal_method(Family::Classical, 1, 1, 0.0, true)
            .unwrap()
            .expect("exists");
        assert!((res.r() - 1.0).abs() <= 2.0 * BISECT_TOL, "r = {}", res.r());
        assert!(verify_nonzero_bound(&res));
    }

    #[test]
    fn optimal_classical_2_2_does_not_exist() {
        assert!(optimal_method(Family::Classical, 2, 2, 0.0, true)
            .unwrap()
            .is_none());
    }

    #[test]
    fn optimal_classical_4_2() {
        let res = optimal_method(Family::Classical, 4, 2, 0.0, true)
            .unwrap()
            .expect("exists");
        assert!((res.r() - 2.0 / 3.0).abs() <= 1e-5, "r = {}", res.r());
    }

    #[test]
    fn optimal_perturbed_2_2_reference_values() {
        // Closed form: C_{2,2}(y) = (−3 + √(9 + 16y)) / (4y).
        for (y, expect) in [
            (4.0, (73.0f64.sqrt() - 3.0) / 16.0),
            (1.0, 0.5),
            (25.0 / 32.0, ((21.5f64).sqrt() - 3.0) * 8.0 / 25.0),
        ] {
            let res = optimal_method(Family::Perturbed, 2, 2, y, true)
                .unwrap()
                .expect("exists");
            assert!(
                (res.r() - expect).abs() <= 3.0 * BISECT_TOL,
                "y = {y}: r = {}, expected {expect}",
                res.r()
            );
            assert!(res.bisection_gap <= BISECT_TOL);
            assert!(crate::method::satisfies_order(&res.method, 2).unwrap());
        }
    }

    #[test]
    fn optimal_perturbed_alpha_sums_to_one() {
        let res = optimal_method(Family::Perturbed, 3, 2, 2.0, true)
            .unwrap()
            .expect("exists");
        assert!((res.method.alpha_sum() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn additive_matches_classical_scaled() {
        // C_additive(y)·(1 + y) = C_classical.
        let classical = optimal_method(Family::Classical, 4, 2, 0.0, true)
            .unwrap()
            .expect("exists")
            .r();
        for y in [0.5, 1.0, 2.0] {
            let res = optimal_method(Family::Additive, 4, 2, y, true)
                .unwrap()
                .expect("exists");
            assert!(
                (res.r() * (1.0 + y) - classical).abs() <= 3e-6,
                "y = {y}: {} vs {classical}",
                res.r() * (1.0 + y)
            );
            assert!(verify_additive_beta_equality(&res).unwrap(), "y = {y}");
        }
    }

    #[test]
    fn additive_one_step_coefficient_splits_between_parts() {
        // The only one-step first-order additive method is forward Euler
        // on both parts, with C(y) = 1/(1+y).
        for y in [0.0, 1.0, 3.0] {
            let res = optimal_method(Family::Additive, 1, 1, y, true)
                .unwrap()
                .expect("exists");
            assert!(
                (res.r() - 1.0 / (1.0 + y)).abs() <= 2.0 * BISECT_TOL,
                "y = {y}: r = {}",
                res.r()
            );
        }
        let lp = build_additive_lp(1, 1, 0.0, 1.0, true).unwrap();
        assert!(solve_feasibility(&lp).unwrap().is_feasible());
        let lp = build_additive_lp(1, 1, 1.0, 1.0, true).unwrap();
        assert!(!solve_feasibility(&lp).unwrap().is_feasible());
    }

    #[test]
    fn imex_one_step_first_order_is_euler_pair() {
        // For y > 0 the only feasible point at r = 1 pairs forward Euler
        // on F with backward Euler on F̂.
        for y in [1.0, 7.5] {
            let lp = build_imex_lp(1, 1, y, 1.0).unwrap();
            let sol = solve_feasibility(&lp).unwrap();
            let sol = sol.solution().expect("feasible");
            assert!(sol.x[0].abs() < 1e-10, "gamma_0");
            assert!((sol.x[1] - 1.0).abs() < 1e-10, "beta_0");
            assert!(sol.x[2].abs() < 1e-10, "bhat_0");
            assert!((sol.x[3] - 1.0).abs() < 1e-10, "bhat_1");
        }
        // At y = 0 the split of β̂ between the old and new state is free;
        // any vertex with β_0 = 1, γ_0 = 0, β̂_0 + β̂_1 = 1 is valid.
        let lp = build_imex_lp(1, 1, 0.0, 1.0).unwrap();
        let sol = solve_feasibility(&lp).unwrap();
        let sol = sol.solution().expect("feasible");
        assert!(sol.x[0].abs() < 1e-10);
        assert!((sol.x[1] - 1.0).abs() < 1e-10);
        assert!((sol.x[2] + sol.x[3] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn imex_one_step_second_order_does_not_exist() {
        assert!(optimal_method(Family::Imex, 1, 2, 1.0, true).unwrap().is_none());
        let lp = build_imex_lp(1, 2, 1.0, 0.0).unwrap();
        assert!(!solve_feasibility(&lp).unwrap().is_feasible());
    }

    #[test]
    fn imex_three_step_second_order_has_positive_coefficient() {
        let res = optimal_method(Family::Imex, 3, 2, 1.0, true)
            .unwrap()
            .expect("exists");
        assert!(res.r() > 1e-4, "r = {}", res.r());
        // Reconstructed table satisfies both order-condition sets.
        assert!(crate::method::satisfies_order(&res.method, 2).unwrap());
        assert_eq!(res.method.beta()[3], 0.0);
    }

    #[test]
    fn bracket_cap_for_unbounded_implicit() {
        // Backward Euler family: first order, implicit, unbounded C.
        let err = optimal_method(Family::Classical, 1, 1, 0.0, false).unwrap_err();
        assert!(matches!(err, Error::BracketCapHit { .. }));
    }

    #[test]
    fn region_scan_is_monotone_for_perturbed() {
        let grid = [0.5, 1.0, 2.0, 4.0];
        let samples = region_scan(Family::Perturbed, 2, 2, &grid, true).unwrap();
        assert_eq!(samples.len(), 4);
        for w in samples.windows(2) {
            assert!(w[1].c <= w[0].c + 1e-9);
            assert!(w[1].c_second >= w[0].c_second - 1e-9);
        }
        assert!((samples[1].c - 0.5).abs() < 1e-4);
    }

    #[test]
    fn region_scan_rejects_bad_grids() {
        assert!(region_scan(Family::Perturbed, 2, 2, &[], true).is_err());
        assert!(region_scan(Family::Perturbed, 2, 2, &[1.0, 1.0], true).is_err());
        assert!(region_scan(Family::Perturbed, 2, 2, &[-1.0, 1.0], true).is_err());
    }

    #[test]
    fn nonzero_bound_on_perturbed_optima() {
        for (k, p, y) in [(2, 2, 1.0), (2, 2, 4.0), (6, 4, 1.0)] {
            let res = optimal_method(Family::Perturbed, k, p, y, true)
                .unwrap()
                .expect("exists");
            assert!(
                verify_nonzero_bound(&res),
                "(k={k}, p={p}, y={y}): support too large"
            );
        }
    }

    #[test]
    fn uniqueness_requires_support_p() {
        let res = optimal_method(Family::Perturbed, 2, 2, 1.0, true)
            .unwrap()
            .expect("exists");
        match uniqueness_test(&res) {
            Ok(_) => {}
            Err(Error::SupportSizeMismatch { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
        // Classical results are rejected outright.
        let classical = optimal_method(Family::Classical, 4, 2, 0.0, true)
            .unwrap()
            .expect("exists");
        assert!(uniqueness_test(&classical).is_err());
    }
}
