//! Coefficient algebra for multistep method tables.
//!
//! A `k`-step method advances `u_n = Σ α_j u_{n-k+j} + Δt Σ w_j·(rhs terms)`
//! where the weight layout depends on the family:
//!
//! - `Classical`:  `+ β_j F`
//! - `Perturbed`:  `+ β_j F − β̃_j F̃`   (downwind operator enters negated)
//! - `Additive`/`Imex`: `+ β_j F + β̂_j F̂`
//!
//! History weights `α_0..α_{k-1}` pair with states oldest-first, so `α_0`
//! multiplies `u_{n-k}`. The `beta` arrays have `k+1` entries; index `k`
//! is the implicit weight on the new state.
//!
//! This module evaluates order-condition residuals and SSP coefficients
//! for *fixed* tables and provides the constructive transformations
//! between perturbed and classical forms. The coefficient search itself
//! lives in [`crate::optimize`].

use crate::numeric::{comp_sum, int_pow, CompensatedSum};
use crate::{Error, Result};

/// Absolute acceptance threshold for order-condition residuals.
pub const ORDER_TOL: f64 = 1e-10;

/// Largest supported number of steps.
pub const MAX_K: usize = 64;

/// Magnitudes below this are flushed to exact zero before sign-sensitive
/// checks; solver output can carry noise at this scale.
pub const ZERO_FLUSH: f64 = 1e-13;

#[inline]
pub(crate) fn flush(x: f64) -> f64 {
    if x.abs() < ZERO_FLUSH {
        0.0
    } else {
        x
    }
}

/// Method family, fixing which weight arrays are meaningful and with what
/// sign they enter the step formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Classical,
    Perturbed,
    Additive,
    /// Additive with explicit `β` (`β_k = 0`) and implicit `β̂`.
    Imex,
}

impl Family {
    /// Second-operator weights enter the step with this sign.
    pub(crate) fn second_sign(self) -> f64 {
        match self {
            Family::Perturbed => -1.0,
            _ => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Classical => "classical",
            Family::Perturbed => "perturbed",
            Family::Additive => "additive",
            Family::Imex => "imex",
        }
    }
}

/// Coefficient container for a `k`-step method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodTable {
    k: usize,
    family: Family,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    beta_second: Vec<f64>,
    explicit_flag: bool,
}

impl MethodTable {
    /// Build a table, validating array lengths and structural invariants.
    pub fn new(
        family: Family,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        beta_second: Vec<f64>,
        explicit_flag: bool,
    ) -> Result<Self> {
        let k = alpha.len();
        if k == 0 {
            return Err(Error::InvalidTable("alpha must have k >= 1 entries".into()));
        }
        if k > MAX_K {
            return Err(Error::InvalidTable(format!("k = {k} exceeds supported cap {MAX_K}")));
        }
        if beta.len() != k + 1 {
            return Err(Error::InvalidTable(format!(
                "beta must have k+1 = {} entries, got {}",
                k + 1,
                beta.len()
            )));
        }
        if beta_second.len() != k + 1 {
            return Err(Error::InvalidTable(format!(
                "beta_second must have k+1 = {} entries, got {}",
                k + 1,
                beta_second.len()
            )));
        }
        let finite = alpha
            .iter()
            .chain(&beta)
            .chain(&beta_second)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidTable("coefficients must be finite".into()));
        }
        if family == Family::Classical && beta_second.iter().any(|&b| b != 0.0) {
            return Err(Error::InvalidTable(
                "classical tables must have all-zero beta_second".into(),
            ));
        }
        if explicit_flag && (beta[k] != 0.0 || beta_second[k] != 0.0) {
            return Err(Error::InvalidTable(
                "explicit tables require beta[k] = beta_second[k] = 0".into(),
            ));
        }
        if family == Family::Imex && beta[k] != 0.0 {
            return Err(Error::InvalidTable("imex tables require beta[k] = 0".into()));
        }
        Ok(Self {
            k,
            family,
            alpha,
            beta,
            beta_second,
            explicit_flag,
        })
    }

    /// Classical table (`beta_second` implicitly zero).
    pub fn classical(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let k = alpha.len();
        let explicit = beta.last() == Some(&0.0);
        Self::new(Family::Classical, alpha, beta, vec![0.0; k + 1], explicit)
    }

    /// Perturbed table with upwind weights `beta` and downwind weights `beta_second`.
    pub fn perturbed(alpha: Vec<f64>, beta: Vec<f64>, beta_tilde: Vec<f64>) -> Result<Self> {
        let explicit = beta.last() == Some(&0.0) && beta_tilde.last() == Some(&0.0);
        Self::new(Family::Perturbed, alpha, beta, beta_tilde, explicit)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta_second(&self) -> &[f64] {
        &self.beta_second
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit_flag
    }

    /// `Σ α_j`; equals 1 within tolerance for any consistent method.
    pub fn alpha_sum(&self) -> f64 {
        comp_sum(self.alpha.iter().copied())
    }

    /// Builtin two-step, second-order downwind reference table
    /// (`α = (1/2, 1/2)`, `β = (0, 7/4, 0)`, `β̃ = (1/4, 0, 0)`).
    pub fn dlmm32() -> Self {
        Self::perturbed(
            vec![0.5, 0.5],
            vec![0.0, 1.75, 0.0],
            vec![0.25, 0.0, 0.0],
        )
        .expect("builtin table")
    }

    /// Builtin non-canonical perturbed representation of the same
    /// underlying method as [`MethodTable::dlmm32`]
    /// (`β = (1/4, 2, 0)`, `β̃ = (1/2, 1/4, 0)`).
    pub fn plmm32() -> Self {
        Self::perturbed(
            vec![0.5, 0.5],
            vec![0.25, 2.0, 0.0],
            vec![0.5, 0.25, 0.0],
        )
        .expect("builtin table")
    }

    /// Builtin classical two-step, second-order table with a negative
    /// weight (`β = (-1/4, 7/4, 0)`); its SSP coefficient is zero.
    pub fn lmm32() -> Self {
        Self::classical(vec![0.5, 0.5], vec![-0.25, 1.75, 0.0]).expect("builtin table")
    }
}

/// SSP coefficient pair `(r, r̃) = (C, y·C)` together with the slack
/// coefficients witnessing the monotonicity conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SspCertificate {
    /// SSP coefficient `C` (the candidate `r`).
    pub r: f64,
    /// Second coefficient `y·C` (downwind `C̃` or stiff-part `Ĉ`).
    pub r_second: f64,
    /// Ratio of forward Euler radii `Δt_FE / Δt_FE_second`.
    pub y: f64,
    /// Slacks `γ_j = α_j − r·β_j − r_second·β_second_j`, all nonnegative.
    pub gamma: Vec<f64>,
}

/// Outcome of evaluating the SSP coefficient of a fixed table.
///
/// The unbounded case is kept as a distinct marker so that no float
/// infinity enters downstream arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub enum SspPair {
    /// Negative weights, a negative history weight, or an empty feasible
    /// set: the method is not SSP and its coefficient is zero.
    Zero,
    Finite(SspCertificate),
    /// Every history index has zero total weight, so no ratio constrains
    /// `r` and the coefficient is unbounded.
    Unbounded,
}

impl SspPair {
    /// Coefficient as a plain number for reporting; the unbounded marker
    /// maps to `None`.
    pub fn value(&self) -> Option<f64> {
        match self {
            SspPair::Zero => Some(0.0),
            SspPair::Finite(cert) => Some(cert.r),
            SspPair::Unbounded => None,
        }
    }

    pub fn certificate(&self) -> Option<&SspCertificate> {
        match self {
            SspPair::Finite(cert) => Some(cert),
            _ => None,
        }
    }
}

/// Evaluate the SSP coefficient pair of a fixed table at ratio `y`.
///
/// For nonnegative weights this is `C(y) = min_j α_j / (β_j + y·β_second_j)`
/// over history indices with positive denominator. Any negative weight,
/// negative `α_j`, or zero `α_j` facing a positive denominator yields
/// [`SspPair::Zero`]; when every denominator vanishes the coefficient is
/// unbounded.
pub fn ssp_coefficient_pair(method: &MethodTable, y: f64) -> Result<SspPair> {
    if !y.is_finite() || y < 0.0 {
        return Err(Error::InvalidArgument(format!("y must be finite and >= 0, got {y}")));
    }
    let k = method.k;
    for j in 0..=k {
        if flush(method.beta[j]) < 0.0 || flush(method.beta_second[j]) < 0.0 {
            return Ok(SspPair::Zero);
        }
    }
    let mut r = f64::INFINITY;
    let mut argmin = None;
    for j in 0..k {
        let alpha = flush(method.alpha[j]);
        if alpha < 0.0 {
            return Ok(SspPair::Zero);
        }
        let denom = flush(method.beta[j]) + y * flush(method.beta_second[j]);
        if denom > 0.0 {
            if alpha == 0.0 {
                return Ok(SspPair::Zero);
            }
            let ratio = alpha / denom;
            if ratio < r {
                r = ratio;
                argmin = Some(j);
            }
        }
    }
    let Some(argmin) = argmin else {
        return Ok(SspPair::Unbounded);
    };
    let mut gamma: Vec<f64> = (0..k)
        .map(|j| method.alpha[j] - r * method.beta[j] - y * r * method.beta_second[j])
        .collect();
    gamma[argmin] = 0.0;
    Ok(SspPair::Finite(SspCertificate {
        r,
        r_second: y * r,
        y,
        gamma,
    }))
}

/// Order-condition residuals up to order `p` (left side minus right side).
///
/// Classical and perturbed tables yield `p+1` residuals, where index `i`
/// is the order-`i` condition with effective weights `β − β̃`. Additive
/// tables yield `2p+1`: the `F`-side conditions for orders `0..=p`
/// followed by the `F̂`-side conditions for orders `1..=p` (the zeroth
/// condition does not involve the weights).
pub fn order_residuals(method: &MethodTable, p: usize) -> Result<Vec<f64>> {
    if p < 1 {
        return Err(Error::InvalidArgument("order p must be >= 1".into()));
    }
    let effective: Vec<f64> = match method.family {
        Family::Classical => method.beta.clone(),
        Family::Perturbed => method
            .beta
            .iter()
            .zip(&method.beta_second)
            .map(|(b, bt)| b - bt)
            .collect(),
        Family::Additive | Family::Imex => method.beta.clone(),
    };
    let mut out = side_residuals(&method.alpha, &effective, method.k, p);
    if matches!(method.family, Family::Additive | Family::Imex) {
        let second = side_residuals(&method.alpha, &method.beta_second, method.k, p);
        out.extend_from_slice(&second[1..]);
    }
    Ok(out)
}

/// Residuals of `Σ α_j j^i + i Σ w_j j^{i-1} = k^i` for `i = 0..=p`.
fn side_residuals(alpha: &[f64], weights: &[f64], k: usize, p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(p + 1);
    out.push(comp_sum(alpha.iter().copied()) - 1.0);
    for i in 1..=p {
        let mut acc = CompensatedSum::new();
        for (j, &a) in alpha.iter().enumerate() {
            acc.add(a * int_pow(j as f64, i));
        }
        for (j, &w) in weights.iter().enumerate() {
            acc.add(w * i as f64 * int_pow(j as f64, i - 1));
        }
        acc.add(-int_pow(k as f64, i));
        out.push(acc.value());
    }
    out
}

/// Largest residual magnitude, for order acceptance checks.
pub fn max_order_residual(method: &MethodTable, p: usize) -> Result<f64> {
    Ok(order_residuals(method, p)?
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs())))
}

/// A method satisfies order `p` when every residual is within [`ORDER_TOL`].
pub fn satisfies_order(method: &MethodTable, p: usize) -> Result<bool> {
    Ok(max_order_residual(method, p)? <= ORDER_TOL)
}

/// Collapse a perturbed table onto its underlying classical method,
/// `β̆_j = β_j − β̃_j`. Order residuals are preserved exactly.
pub fn to_underlying(method: &MethodTable) -> Result<MethodTable> {
    if method.family != Family::Perturbed {
        return Err(Error::InvalidTable(format!(
            "to_underlying requires a perturbed table, got {}",
            method.family.as_str()
        )));
    }
    let beta: Vec<f64> = method
        .beta
        .iter()
        .zip(&method.beta_second)
        .map(|(b, bt)| b - bt)
        .collect();
    let explicit = beta[method.k] == 0.0;
    MethodTable::new(
        Family::Classical,
        method.alpha.clone(),
        beta,
        vec![0.0; method.k + 1],
        explicit,
    )
    .map(|mut t| {
        t.explicit_flag = explicit;
        t
    })
}

/// Rewrite a perturbed table so that `β_j · β̃_j = 0` for every `j`,
/// keeping the same underlying method:
/// `β*_j = max(β_j − β̃_j, 0)`, `β̃*_j = max(β̃_j − β_j, 0)`.
///
/// For any `y ≥ 0` the output's SSP coefficient is at least the input's.
pub fn canonicalize_downwind(method: &MethodTable) -> Result<MethodTable> {
    if method.family != Family::Perturbed {
        return Err(Error::InvalidTable(format!(
            "canonicalize_downwind requires a perturbed table, got {}",
            method.family.as_str()
        )));
    }
    if method
        .beta
        .iter()
        .chain(&method.beta_second)
        .any(|&b| flush(b) < 0.0)
    {
        return Err(Error::InvalidTable(
            "canonicalize_downwind requires nonnegative weights".into(),
        ));
    }
    let k = method.k;
    let mut beta = vec![0.0; k + 1];
    let mut beta_tilde = vec![0.0; k + 1];
    for j in 0..=k {
        let b = flush(method.beta[j]);
        let bt = flush(method.beta_second[j]);
        beta[j] = flush((b - bt).max(0.0));
        beta_tilde[j] = flush((bt - b).max(0.0));
    }
    let explicit = beta[k] == 0.0 && beta_tilde[k] == 0.0;
    MethodTable::new(Family::Perturbed, method.alpha.clone(), beta, beta_tilde, explicit)
}

/// Moment vector `a_j = (1, j, j², …, j^p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    entries: Vec<f64>,
}

impl MomentVector {
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Sign selector for the perturbed moment vectors `b±_j(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbSign {
    Plus,
    Minus,
}

impl PerturbSign {
    fn factor(self) -> f64 {
        match self {
            PerturbSign::Plus => 1.0,
            PerturbSign::Minus => -1.0,
        }
    }
}

/// `a_j = (1, j, j², …, j^p)`.
pub fn moment_vector(j: usize, p: usize) -> MomentVector {
    assert!(p >= 1, "moment vectors need p >= 1");
    MomentVector {
        entries: (0..=p).map(|i| int_pow(j as f64, i)).collect(),
    }
}

/// Derivative vector `a'_j = (0, 1, 2j, …, p·j^{p-1})`.
pub fn moment_vector_prime(j: usize, p: usize) -> MomentVector {
    assert!(p >= 1, "moment vectors need p >= 1");
    let mut entries = Vec::with_capacity(p + 1);
    entries.push(0.0);
    for i in 1..=p {
        entries.push(i as f64 * int_pow(j as f64, i - 1));
    }
    MomentVector { entries }
}

/// `b±_j(x) = a_j ± x·a'_j` for `j < k`, and `±x·a'_k` for `j = k`.
pub fn moment_vector_perturbed(
    j: usize,
    p: usize,
    sign: PerturbSign,
    x: f64,
    k: usize,
) -> MomentVector {
    assert!(j <= k, "index j = {j} out of range for k = {k}");
    assert!(x.is_finite(), "x must be finite");
    let s = sign.factor();
    let prime = moment_vector_prime(j, p);
    if j == k {
        MomentVector {
            entries: prime.entries.iter().map(|&d| s * x * d).collect(),
        }
    } else {
        let base = moment_vector(j, p);
        MomentVector {
            entries: base
                .entries
                .iter()
                .zip(&prime.entries)
                .map(|(a, d)| a + s * x * d)
                .collect(),
        }
    }
}
