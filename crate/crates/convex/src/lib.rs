//! Small dense convex solvers.
//!
//! Two entry points cover the program shapes needed by the resource
//! orchestration engine:
//!
//! - [`solve_lp`]: Mehrotra predictor-corrector interior point method for
//!   programs whose constraints are all linear.
//! - [`solve_smooth`]: log-barrier path following with damped Newton steps for
//!   programs with smooth convex inequality constraints. A phase-I problem is
//!   solved first when the start point is not strictly feasible.
//!
//! Both report a KKT residual (see [`kkt_residual`]) alongside the solution.

mod barrier;
mod kkt;
mod linalg;
mod lp;
mod program;

pub use barrier::solve_smooth;
pub use kkt::{kkt_residual, KktParts};
pub use lp::solve_lp;
pub use program::{
    Constraint, ConstraintBody, ConstraintKind, ConvexProgram, LinearConstraint, Relation,
    SmoothConvex, SparseVec,
};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("variable {index} has lower bound above upper bound")]
    EmptyBox { index: usize },
    #[error("program has non-linear constraints; use solve_smooth")]
    NotLinear,
    #[error("invalid solver options: {0}")]
    InvalidOptions(&'static str),
    #[error("start point has non-finite constraint values")]
    NonFiniteStart,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Primal feasibility tolerance.
    pub feasibility_tol: f64,
    /// Optimality tolerance applied to the KKT residual and duality gap.
    pub optimality_tol: f64,
    /// Initial barrier weight `t`.
    pub barrier_t0: f64,
    /// Barrier weight growth factor per outer iteration.
    pub barrier_mu: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            feasibility_tol: 1e-8,
            optimality_tol: 1e-6,
            barrier_t0: 1.0,
            barrier_mu: 20.0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.feasibility_tol > 0.0) || !(self.optimality_tol > 0.0) {
            return Err(SolverError::InvalidOptions("tolerances must be positive"));
        }
        if !(self.barrier_mu > 1.0) {
            return Err(SolverError::InvalidOptions("barrier growth factor must exceed 1"));
        }
        if !(self.barrier_t0 > 0.0) {
            return Err(SolverError::InvalidOptions("initial barrier weight must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidOptions("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    MaxIter,
    Infeasible,
    Unbounded,
}

/// Lagrange multipliers in the sign convention `c + Σ λ_i ∇g_i - λ_lo + λ_up = 0`.
///
/// Inequality and bound multipliers are non-negative; equality multipliers are
/// free.
#[derive(Debug, Clone, Default)]
pub struct Multipliers {
    pub constraints: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(program: &ConvexProgram) -> Self {
        let n = program.dim();
        Self {
            constraints: vec![0.0; program.constraints.len()],
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: Status,
    pub kkt_residual: f64,
    pub multipliers: Multipliers,
    pub iterations: usize,
    /// Dual objective, when the method produces one (LP only).
    pub dual_objective: Option<f64>,
    /// Objective after each outer barrier iteration (empty for LP).
    pub barrier_path: Vec<f64>,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}
