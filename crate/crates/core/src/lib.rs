//! Optimal strong-stability-preserving (SSP) linear multistep methods.
//!
//! A linear multistep method preserves a monotonicity bound
//! `‖u_n‖ ≤ max{‖u_{n-1}‖, …, ‖u_{n-k}‖}` whenever the right-hand side
//! satisfies a forward Euler condition and the step size stays below
//! `C · Δt_FE`, where `C` is the method's SSP coefficient. This crate
//! finds methods with the largest possible `C` for several families:
//!
//! - **classical** methods using a single operator `F`;
//! - **perturbed (downwind)** methods using an upwind operator `F` and a
//!   downwind operator `F̃` with *distinct* forward Euler radii;
//! - **additive** methods splitting the right-hand side as `F + F̂`;
//! - **IMEX** methods treating `F` explicitly and `F̂` implicitly.
//!
//! The search is a bisection on the candidate coefficient `r`, where each
//! probe is a dense linear-programming feasibility problem built from the
//! order conditions ([`optimize`], [`lp`]). Fixed coefficient tables can be
//! evaluated and transformed directly ([`method`]), and the resulting
//! methods can be run on the bundled test problems ([`problems`]) with
//! monotonicity measurement ([`integrate`]).

pub mod integrate;
pub mod lp;
pub mod method;
pub mod numeric;
pub mod optimize;
pub mod problems;

use std::fmt;

/// Errors shared by all modules of this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A coefficient table violates a structural requirement
    /// (array lengths, family, sign constraints, step-count cap).
    InvalidTable(String),
    /// An operation argument is out of range (order < 1, empty grid, …).
    InvalidArgument(String),
    /// An LP input contains NaN or infinite entries.
    NonFinite(&'static str),
    /// Matrix/vector dimensions disagree.
    DimensionMismatch { expected: usize, actual: usize },
    /// Bisection bracket expansion hit the cap; the SSP coefficient is
    /// unbounded or larger than the cap.
    BracketCapHit { r_cap: f64 },
    /// Newton iteration for an implicit step failed to converge.
    NewtonDivergence { residual: f64 },
    /// The uniqueness test requires positive support of size exactly `p`.
    SupportSizeMismatch { expected: usize, actual: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidTable(msg) => write!(f, "invalid method table: {msg}"),
            Self::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Self::NonFinite(what) => write!(f, "non-finite entries in {what}"),
            Self::DimensionMismatch { expected, actual } => {
                write!(f, "dimension mismatch: expected {expected}, got {actual}")
            }
            Self::BracketCapHit { r_cap } => {
                write!(f, "SSP coefficient unbounded (bracket capped at {r_cap})")
            }
            Self::NewtonDivergence { residual } => {
                write!(f, "Newton iteration diverged (last residual {residual:.3e})")
            }
            Self::SupportSizeMismatch { expected, actual } => {
                write!(f, "positive support has size {actual}, expected {expected}")
            }
        }
    }
}

impl std::error::Error for Error {}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
