use crate::{ConvexProgram, Multipliers};

/// The three components of the KKT residual, each as a max-norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktParts {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl KktParts {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

/// Max-norm KKT residual of `(x, multipliers)` for `program`.
///
/// Stationarity is `‖c + Σ λ_i ∇g_i(x) - λ_lo + λ_up‖∞`, primal is the largest
/// constraint or bound violation, complementarity is `max |λ_i g_i(x)|` over
/// inequalities and finite bounds.
pub fn kkt_residual(program: &ConvexProgram, x: &[f64], multipliers: &Multipliers) -> f64 {
    kkt_parts(program, x, multipliers).max()
}

pub(crate) fn kkt_parts(program: &ConvexProgram, x: &[f64], m: &Multipliers) -> KktParts {
    let n = program.dim();
    let mut grad = program.objective.clone();
    let mut complementarity: f64 = 0.0;
    for (c, &lambda) in program.constraints.iter().zip(&m.constraints) {
        if lambda != 0.0 {
            for (j, g) in c.gradient(x) {
                grad[j] += lambda * g;
            }
        }
        if !c.is_equality() {
            complementarity = complementarity.max((lambda * c.value(x)).abs());
        }
    }
    for j in 0..n {
        let lo = m.lower.get(j).copied().unwrap_or(0.0);
        let up = m.upper.get(j).copied().unwrap_or(0.0);
        grad[j] += up - lo;
        if lo != 0.0 && program.lower[j].is_finite() {
            complementarity = complementarity.max((lo * (x[j] - program.lower[j])).abs());
        }
        if up != 0.0 && program.upper[j].is_finite() {
            complementarity = complementarity.max((up * (program.upper[j] - x[j])).abs());
        }
    }
    KktParts {
        stationarity: grad.iter().fold(0.0, |a, g| a.max(g.abs())),
        primal: program.max_violation(x),
        complementarity,
    }
}
