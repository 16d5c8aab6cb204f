//! Log-barrier path following for programs with smooth convex constraints.
//!
//! Minimizes `t cᵀx - Σ log(-f_i(x))` with damped Newton steps for an
//! increasing sequence of `t`. Linear equalities enter the Newton system
//! directly. If the start point is not strictly feasible a phase-I problem
//! `min r s.t. f_i(x) <= r` is solved first.

use nalgebra::{DMatrix, DVector};

use crate::kkt::kkt_parts;
use crate::linalg::{add_outer, inf_norm, solve_kkt};
use crate::program::{ConstraintBody, Relation, SparseVec};
use crate::{ConvexProgram, Multipliers, Solution, SolveOptions, SolverError, Status};

const ARMIJO: f64 = 0.01;
const BACKTRACK: f64 = 0.5;
const MAX_OUTER: usize = 100;
const DIVERGED: f64 = 1e12;
/// A single Newton step moves at most this multiple of `1 + ‖x‖∞`.
const STEP_CAP: f64 = 10.0;
/// Phase I stops once every constraint is below this margin.
const PHASE1_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
enum Row {
    Con(usize),
    Lower(usize),
    Upper(usize),
}

/// Inequality system seen by the Newton iterations. In phase I every row is
/// shifted by the extra variable `r` stored last in `x`.
struct Barrier<'a> {
    program: &'a ConvexProgram,
    rows: Vec<Row>,
    phase1: bool,
    objective: Vec<f64>,
    eq: Option<(DMatrix<f64>, Vec<usize>, DVector<f64>)>,
}

impl<'a> Barrier<'a> {
    fn new(
        program: &'a ConvexProgram,
        phase1: bool,
        eq: Option<(DMatrix<f64>, Vec<usize>, DVector<f64>)>,
    ) -> Self {
        let n = program.dim();
        let mut rows: Vec<Row> = program
            .constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_equality())
            .map(|(i, _)| Row::Con(i))
            .collect();
        for j in 0..n {
            if program.lower[j].is_finite() {
                rows.push(Row::Lower(j));
            }
            if program.upper[j].is_finite() {
                rows.push(Row::Upper(j));
            }
        }
        let objective = if phase1 {
            let mut c = vec![0.0; n + 1];
            c[n] = 1.0;
            c
        } else {
            program.objective.clone()
        };
        let eq = eq.map(|(a, idx, rhs)| {
            if phase1 {
                let mut a1 = DMatrix::zeros(a.nrows(), n + 1);
                a1.view_mut((0, 0), (a.nrows(), n)).copy_from(&a);
                (a1, idx, rhs)
            } else {
                (a, idx, rhs)
            }
        });
        Self {
            program,
            rows,
            phase1,
            objective,
            eq,
        }
    }

    fn dim(&self) -> usize {
        self.objective.len()
    }

    fn shift(&self, x: &[f64]) -> f64 {
        if self.phase1 {
            x[self.program.dim()]
        } else {
            0.0
        }
    }

    fn value(&self, row: Row, x: &[f64]) -> f64 {
        let v = match row {
            Row::Con(i) => self.program.constraints[i].value(x),
            Row::Lower(j) => self.program.lower[j] - x[j],
            Row::Upper(j) => x[j] - self.program.upper[j],
        };
        v - self.shift(x)
    }

    fn gradient(&self, row: Row, x: &[f64]) -> SparseVec {
        let mut g = match row {
            Row::Con(i) => self.program.constraints[i].gradient(x),
            Row::Lower(j) => vec![(j, -1.0)],
            Row::Upper(j) => vec![(j, 1.0)],
        };
        if self.phase1 {
            g.push((self.program.dim(), -1.0));
        }
        g
    }

    fn add_curvature(&self, row: Row, x: &[f64], scale: f64, h: &mut DMatrix<f64>) {
        if let Row::Con(i) = row {
            if let ConstraintBody::SmoothConvex(f) = &self.program.constraints[i].body {
                f.add_hessian(x, scale, h);
            }
        }
    }

    /// Barrier value, or `None` outside the strict interior.
    fn phi(&self, t: f64, x: &[f64]) -> Option<f64> {
        let mut v = t * self.objective.iter().zip(x).map(|(c, x)| c * x).sum::<f64>();
        for &row in &self.rows {
            let f = self.value(row, x);
            if !(f < 0.0) {
                return None;
            }
            v -= (-f).ln();
        }
        v.is_finite().then_some(v)
    }

    fn max_value(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|&r| self.value(r, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Centered {
    x: Vec<f64>,
    nu: Vec<f64>,
    steps: usize,
    stopped_early: bool,
    diverged: bool,
}

/// Damped Newton centering at weight `t`.
fn center(
    b: &Barrier<'_>,
    t: f64,
    mut x: Vec<f64>,
    max_steps: usize,
    stat_tol: f64,
    stop: &dyn Fn(&[f64]) -> bool,
) -> Centered {
    let n = b.dim();
    let mut nu = vec![0.0; b.eq.as_ref().map_or(0, |(a, _, _)| a.nrows())];
    let mut steps = 0;
    while steps < max_steps {
        steps += 1;
        let mut grad: Vec<f64> = b.objective.iter().map(|c| t * c).collect();
        let mut hess = DMatrix::zeros(n, n);
        for &row in &b.rows {
            let f = b.value(row, &x);
            let inv = 1.0 / (-f);
            let g = b.gradient(row, &x);
            for &(j, v) in &g {
                grad[j] += inv * v;
            }
            add_outer(&mut hess, &g, inv * inv);
            b.add_curvature(row, &x, inv, &mut hess);
        }
        let r1 = DVector::from_iterator(n, grad.iter().map(|g| -g));
        let eq_residual;
        let (a, r2) = match &b.eq {
            Some((a, _, rhs)) => {
                eq_residual = rhs - a * DVector::from_column_slice(&x);
                (Some(a), Some(&eq_residual))
            }
            None => (None, None),
        };
        let Some((dx, dy)) = solve_kkt(&hess, a, &r1, r2) else {
            break;
        };
        nu = dy.data.as_vec().clone();
        let slope: f64 = grad.iter().zip(dx.iter()).map(|(g, d)| g * d).sum();
        // H dx = -(grad + Aᵀν), so this is the scaled stationarity residual
        let stationarity = (&hess * &dx).amax() / t;
        if stationarity <= stat_tol || -slope / 2.0 <= 1e-16 {
            break;
        }
        let phi0 = b.phi(t, &x).unwrap_or(f64::INFINITY);
        let cap = STEP_CAP * (1.0 + inf_norm(&x)) / dx.amax();
        let mut alpha: f64 = cap.min(1.0);
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(x, d)| x + alpha * d).collect();
            if let Some(v) = b.phi(t, &trial) {
                if v <= phi0 + ARMIJO * alpha * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            alpha *= BACKTRACK;
        }
        let Some(next) = accepted else {
            break;
        };
        x = next;
        if stop(&x) {
            return Centered {
                x,
                nu,
                steps,
                stopped_early: true,
                diverged: false,
            };
        }
        if inf_norm(&x) > DIVERGED {
            return Centered {
                x,
                nu,
                steps,
                stopped_early: false,
                diverged: true,
            };
        }
    }
    Centered {
        x,
        nu,
        steps,
        stopped_early: false,
        diverged: false,
    }
}

struct PathResult {
    x: Vec<f64>,
    t: f64,
    nu: Vec<f64>,
    iterations: usize,
    diverged: bool,
    path: Vec<f64>,
}

fn follow_path(
    b: &Barrier<'_>,
    x0: Vec<f64>,
    opts: &SolveOptions,
    stop: &dyn Fn(&[f64]) -> bool,
) -> PathResult {
    let m = b.rows.len().max(1) as f64;
    let mut t = opts.barrier_t0;
    let mut x = x0;
    let mut iterations = 0;
    let mut nu = Vec::new();
    let mut path = Vec::new();
    for outer in 0..MAX_OUTER {
        let c = center(b, t, x, opts.max_iterations, opts.optimality_tol * 1e-2, stop);
        iterations += c.steps;
        x = c.x;
        nu = c.nu;
        path.push(b.objective.iter().zip(&x).map(|(c, x)| c * x).sum());
        if c.stopped_early || c.diverged {
            return PathResult {
                x,
                t,
                nu,
                iterations,
                diverged: c.diverged,
                path,
            };
        }
        if m / t <= opts.optimality_tol || outer + 1 == MAX_OUTER {
            break;
        }
        t *= opts.barrier_mu;
    }
    PathResult {
        x,
        t,
        nu,
        iterations,
        diverged: false,
        path,
    }
}

fn equality_system(program: &ConvexProgram) -> Option<(DMatrix<f64>, Vec<usize>, Vec<f64>)> {
    let idx: Vec<usize> = program
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_equality())
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return None;
    }
    let n = program.dim();
    let mut a = DMatrix::zeros(idx.len(), n);
    let mut rhs = Vec::with_capacity(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        if let ConstraintBody::Linear(l) = &program.constraints[i].body {
            debug_assert_eq!(l.relation, Relation::Equal);
            for &(j, v) in &l.coeffs {
                a[(r, j)] += v;
            }
            rhs.push(l.rhs);
        }
    }
    Some((a, idx, rhs))
}

/// Minimum-norm correction of `x` onto `Ax = b`.
fn project_onto(a: &DMatrix<f64>, rhs: &[f64], x: &mut [f64]) {
    let xv = DVector::from_column_slice(x);
    let r = DVector::from_column_slice(rhs) - a * &xv;
    if r.amax() == 0.0 {
        return;
    }
    let aat = a * a.transpose();
    if let Some(w) = aat.lu().solve(&r) {
        let dx = a.transpose() * w;
        for (xi, d) in x.iter_mut().zip(dx.iter()) {
            *xi += d;
        }
    }
}

/// Moves `x` a little inside the box so bound rows are strictly satisfied.
fn shift_into_box(program: &ConvexProgram, x: &mut [f64]) {
    for j in 0..x.len() {
        let (l, u) = (program.lower[j], program.upper[j]);
        let eps = if l.is_finite() && u.is_finite() {
            1e-6 * (u - l)
        } else {
            1e-6 * (1.0 + x[j].abs())
        };
        if l.is_finite() && x[j] < l + eps {
            x[j] = l + eps;
        }
        if u.is_finite() && x[j] > u - eps {
            x[j] = u - eps;
        }
        if l.is_finite() && u.is_finite() && l == u {
            x[j] = l;
        }
    }
}

/// Solves `program` from `x_start` with the log-barrier method.
///
/// The start point does not need to be feasible. Linear equality rows must be
/// consistent; fixed variables (`lower == upper`) are not supported by the
/// barrier and report `Infeasible`.
pub fn solve_smooth(
    program: &ConvexProgram,
    x_start: &[f64],
    opts: &SolveOptions,
) -> Result<Solution, SolverError> {
    opts.validate()?;
    program.check()?;
    let n = program.dim();
    if x_start.len() != n {
        return Err(SolverError::DimensionMismatch {
            what: "start point",
            expected: n,
            found: x_start.len(),
        });
    }
    let eq = equality_system(program);
    let mut x = x_start.to_vec();
    shift_into_box(program, &mut x);
    if let Some((a, _, rhs)) = &eq {
        project_onto(a, rhs, &mut x);
    }
    let eq_pair = eq
        .as_ref()
        .map(|(a, idx, rhs)| (a.clone(), idx.clone(), DVector::from_column_slice(rhs)));

    let main = Barrier::new(program, false, eq_pair.clone());
    let start_max = main.max_value(&x);
    if !start_max.is_finite() && !main.rows.is_empty() {
        return Err(SolverError::NonFiniteStart);
    }
    let mut iterations = 0;
    if !(start_max < 0.0) {
        let p1 = Barrier::new(program, true, eq_pair);
        let mut x1 = x.clone();
        x1.push(start_max + 1.0);
        let stop = |z: &[f64]| main.max_value(&z[..n]) < -PHASE1_MARGIN;
        let res = follow_path(&p1, x1, opts, &stop);
        iterations += res.iterations;
        x = res.x[..n].to_vec();
        if !(main.max_value(&x) < 0.0) {
            return Ok(Solution {
                objective: program.objective_value(&x),
                kkt_residual: kkt_parts(program, &x, &Multipliers::zeros(program)).max(),
                multipliers: Multipliers::zeros(program),
                x,
                status: Status::Infeasible,
                iterations,
                dual_objective: None,
                barrier_path: Vec::new(),
            });
        }
    }

    let res = follow_path(&main, x, opts, &|_| false);
    iterations += res.iterations;
    let mut x = res.x;
    for j in 0..n {
        x[j] = x[j].clamp(program.lower[j], program.upper[j]);
    }
    let mut mult = Multipliers::zeros(program);
    for &row in &main.rows {
        let lambda = 1.0 / (res.t * -main.value(row, &x));
        match row {
            Row::Con(i) => mult.constraints[i] = lambda,
            Row::Lower(j) => mult.lower[j] = lambda,
            Row::Upper(j) => mult.upper[j] = lambda,
        }
    }
    if let Some((_, idx, _)) = &main.eq {
        for (k, &i) in idx.iter().enumerate() {
            mult.constraints[i] = res.nu.get(k).copied().unwrap_or(0.0) / res.t;
        }
    }
    let kkt = kkt_parts(program, &x, &mult).max();
    let status = if res.diverged {
        Status::Unbounded
    } else if kkt <= opts.optimality_tol && program.max_violation(&x) <= opts.feasibility_tol {
        Status::Optimal
    } else {
        Status::MaxIter
    };
    Ok(Solution {
        objective: program.objective_value(&x),
        x,
        status,
        kkt_residual: kkt,
        multipliers: mult,
        iterations,
        dual_objective: None,
        barrier_path: res.path,
    })
}
