//! Problem description shared by the LP and barrier solvers.
//!
//! A [`ConvexProgram`] minimizes a linear objective `c^T x` over a box
//! `lower <= x <= upper` and a list of constraints. Each constraint is either
//! linear (`a^T x <= b` or `a^T x = b`) or a smooth convex function
//! `f(x) <= 0` that can report its value, gradient and Hessian.

use nalgebra::DMatrix;

use crate::SolverError;

/// Sparse vector as `(index, value)` pairs. Indices may repeat; repeated
/// entries are summed.
pub type SparseVec = Vec<(usize, f64)>;

/// A twice-differentiable convex function used as `f(x) <= 0`.
pub trait SmoothConvex: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> SparseVec;

    /// Adds `scale * ∇²f(x)` into `hess`.
    fn add_hessian(&self, x: &[f64], scale: f64, hess: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    LessEq,
    Equal,
}

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub coeffs: SparseVec,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn le(coeffs: SparseVec, rhs: f64) -> Self {
        Self {
            coeffs,
            relation: Relation::LessEq,
            rhs,
        }
    }

    pub fn eq(coeffs: SparseVec, rhs: f64) -> Self {
        Self {
            coeffs,
            relation: Relation::Equal,
            rhs,
        }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// `a^T x - b`; for `<=` rows this is the constraint function.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.lhs(x) - self.rhs
    }
}

/// Constraint body, tagged by kind.
pub enum ConstraintBody {
    Linear(LinearConstraint),
    SmoothConvex(Box<dyn SmoothConvex>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Linear,
    SmoothConvex,
}

pub struct Constraint {
    pub label: String,
    pub body: ConstraintBody,
}

impl Constraint {
    pub fn linear(label: impl Into<String>, c: LinearConstraint) -> Self {
        Self {
            label: label.into(),
            body: ConstraintBody::Linear(c),
        }
    }

    pub fn smooth(label: impl Into<String>, f: impl SmoothConvex + 'static) -> Self {
        Self {
            label: label.into(),
            body: ConstraintBody::SmoothConvex(Box::new(f)),
        }
    }

    pub fn kind(&self) -> ConstraintKind {
        match self.body {
            ConstraintBody::Linear(_) => ConstraintKind::Linear,
            ConstraintBody::SmoothConvex(_) => ConstraintKind::SmoothConvex,
        }
    }

    pub fn is_equality(&self) -> bool {
        matches!(
            &self.body,
            ConstraintBody::Linear(LinearConstraint {
                relation: Relation::Equal,
                ..
            })
        )
    }

    /// Constraint function value: `a^T x - b` or `f(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.body {
            ConstraintBody::Linear(l) => l.residual(x),
            ConstraintBody::SmoothConvex(f) => f.value(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> SparseVec {
        match &self.body {
            ConstraintBody::Linear(l) => l.coeffs.clone(),
            ConstraintBody::SmoothConvex(f) => f.gradient(x),
        }
    }

    /// Amount by which `x` violates this constraint (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.value(x);
        if self.is_equality() {
            v.abs()
        } else {
            v.max(0.0)
        }
    }
}

impl std::fmt::Debug for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Constraint")
            .field("label", &self.label)
            .field("kind", &self.kind())
            .finish()
    }
}

/// `minimize c^T x` subject to box bounds and constraints.
#[derive(Debug)]
pub struct ConvexProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl ConvexProgram {
    /// Program with `n` variables, zero objective, no bounds.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            constraints: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn is_lp(&self) -> bool {
        self.constraints
            .iter()
            .all(|c| c.kind() == ConstraintKind::Linear)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Number of finite variable bounds.
    pub fn bound_count(&self) -> usize {
        self.lower.iter().filter(|l| l.is_finite()).count()
            + self.upper.iter().filter(|u| u.is_finite()).count()
    }

    /// Largest violation over constraints and bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&xi, (&l, &u))| (l - xi).max(xi - u).max(0.0))
            .fold(0.0, f64::max);
        self.constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(bounds, f64::max)
    }

    pub fn check(&self) -> Result<(), SolverError> {
        let n = self.dim();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(SolverError::DimensionMismatch {
                what: "bounds",
                expected: n,
                found: self.lower.len().min(self.upper.len()),
            });
        }
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l > u {
                return Err(SolverError::EmptyBox { index: j });
            }
        }
        for c in &self.constraints {
            if let ConstraintBody::Linear(l) = &c.body {
                if let Some(&(j, _)) = l.coeffs.iter().find(|(j, _)| *j >= n) {
                    return Err(SolverError::DimensionMismatch {
                        what: "constraint coefficient index",
                        expected: n,
                        found: j + 1,
                    });
                }
            }
        }
        Ok(())
    }
}
