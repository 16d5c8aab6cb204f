//! Mehrotra predictor-corrector interior point method for dense LPs.
//!
//! Works on the form `min cᵀx s.t. Ax = b, Gx + s = h, s >= 0`, where `G`
//! stacks the `<=` rows and the finite variable bounds. Infeasible starts are
//! allowed. Primal infeasibility and unboundedness are detected from the
//! normalized iterates once they diverge.

use nalgebra::{DMatrix, DVector};

use crate::kkt::kkt_parts;
use crate::linalg::{add_outer, inf_norm, solve_kkt};
use crate::program::{ConstraintBody, Relation, SparseVec};
use crate::{ConvexProgram, Multipliers, Solution, SolveOptions, SolverError, Status};

#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Constraint(usize),
    Lower(usize),
    Upper(usize),
}

struct Standard {
    c: Vec<f64>,
    a: DMatrix<f64>,
    b: Vec<f64>,
    eq_origin: Vec<usize>,
    g: Vec<SparseVec>,
    h: Vec<f64>,
    in_origin: Vec<RowOrigin>,
}

impl Standard {
    fn from_program(program: &ConvexProgram) -> Result<Self, SolverError> {
        let n = program.dim();
        let mut eq_rows = Vec::new();
        let mut b = Vec::new();
        let mut eq_origin = Vec::new();
        let mut g = Vec::new();
        let mut h = Vec::new();
        let mut in_origin = Vec::new();
        for (idx, c) in program.constraints.iter().enumerate() {
            let ConstraintBody::Linear(lin) = &c.body else {
                return Err(SolverError::NotLinear);
            };
            match lin.relation {
                Relation::Equal => {
                    eq_rows.push(lin.coeffs.clone());
                    b.push(lin.rhs);
                    eq_origin.push(idx);
                }
                Relation::LessEq => {
                    g.push(lin.coeffs.clone());
                    h.push(lin.rhs);
                    in_origin.push(RowOrigin::Constraint(idx));
                }
            }
        }
        for j in 0..n {
            if program.lower[j].is_finite() {
                g.push(vec![(j, -1.0)]);
                h.push(-program.lower[j]);
                in_origin.push(RowOrigin::Lower(j));
            }
            if program.upper[j].is_finite() {
                g.push(vec![(j, 1.0)]);
                h.push(program.upper[j]);
                in_origin.push(RowOrigin::Upper(j));
            }
        }
        let mut a = DMatrix::zeros(eq_rows.len(), n);
        for (i, row) in eq_rows.iter().enumerate() {
            for &(j, v) in row {
                a[(i, j)] += v;
            }
        }
        Ok(Self {
            c: program.objective.clone(),
            a,
            b,
            eq_origin,
            g,
            h,
            in_origin,
        })
    }

    fn g_mul(&self, x: &[f64]) -> Vec<f64> {
        self.g
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    fn gt_mul(&self, z: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (row, &zi) in self.g.iter().zip(z) {
            for &(j, v) in row {
                out[j] += v * zi;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest `α` keeping `v + α dv >= 0` (infinite when nothing blocks).
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&vi, &d)| -vi / d)
        .fold(f64::INFINITY, f64::min)
}

/// Solves a program whose constraints are all linear.
pub fn solve_lp(program: &ConvexProgram, opts: &SolveOptions) -> Result<Solution, SolverError> {
    opts.validate()?;
    program.check()?;
    let std = Standard::from_program(program)?;
    let n = program.dim();
    let p = std.b.len();
    let m = std.h.len();

    let mut x: Vec<f64> = (0..n)
        .map(|j| {
            let (l, u) = (program.lower[j], program.upper[j]);
            match (l.is_finite(), u.is_finite()) {
                (true, true) => 0.5 * (l + u),
                (true, false) => l + 1.0,
                (false, true) => u - 1.0,
                (false, false) => 0.0,
            }
        })
        .collect();
    let gx = std.g_mul(&x);
    let mut s: Vec<f64> = gx.iter().zip(&std.h).map(|(g, h)| (h - g).max(1.0)).collect();
    let mut z = vec![1.0; m];
    let mut y = vec![0.0; p];

    let c_norm = inf_norm(&std.c);
    let b_norm = inf_norm(&std.b).max(inf_norm(&std.h));
    let inner_tol = opts.optimality_tol * 1e-3;
    let a_t = std.a.transpose();
    let a_opt = (p > 0).then_some(&std.a);

    let mut status = Status::MaxIter;
    let mut iterations = 0;
    for iter in 0..opts.max_iterations {
        iterations = iter + 1;
        let gx = std.g_mul(&x);
        let gtz = std.gt_mul(&z, n);
        let aty = if p > 0 { (&a_t * DVector::from_column_slice(&y)).data.as_vec().clone() } else { vec![0.0; n] };
        let ax = if p > 0 { (&std.a * DVector::from_column_slice(&x)).data.as_vec().clone() } else { vec![] };
        let rd: Vec<f64> = (0..n).map(|j| std.c[j] + aty[j] + gtz[j]).collect();
        let rp: Vec<f64> = ax.iter().zip(&std.b).map(|(ax, b)| ax - b).collect();
        let rg: Vec<f64> = (0..m).map(|i| gx[i] + s[i] - std.h[i]).collect();
        let gap = dot(&s, &z);
        let mu = if m > 0 { gap / m as f64 } else { 0.0 };
        let pobj = dot(&std.c, &x);

        let pres = inf_norm(&rp).max(inf_norm(&rg));
        let dres = inf_norm(&rd);
        if pres <= opts.feasibility_tol * (1.0 + b_norm)
            && dres <= inner_tol * (1.0 + c_norm)
            && gap <= inner_tol * (1.0 + pobj.abs())
        {
            status = Status::Optimal;
            break;
        }

        if iter > 5 {
            if let Some(st) = detect_divergence(&std, &x, &y, &z, n) {
                status = st;
                break;
            }
        }

        let mut hmat = DMatrix::zeros(n, n);
        for (i, row) in std.g.iter().enumerate() {
            add_outer(&mut hmat, row, z[i] / s[i]);
        }

        let solve_dir = |rsz: &[f64]| -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
            let tmp: Vec<f64> = (0..m).map(|i| (z[i] * rg[i] - rsz[i]) / s[i]).collect();
            let gt_tmp = std.gt_mul(&tmp, n);
            let r1 = DVector::from_iterator(n, (0..n).map(|j| -rd[j] - gt_tmp[j]));
            let r2 = DVector::from_iterator(p, rp.iter().map(|v| -v));
            let (dx, dy) = solve_kkt(&hmat, a_opt, &r1, (p > 0).then_some(&r2))?;
            let dx = dx.data.as_vec().clone();
            let gdx = std.g_mul(&dx);
            let dz: Vec<f64> = (0..m).map(|i| z[i] / s[i] * gdx[i] + tmp[i]).collect();
            let ds: Vec<f64> = (0..m).map(|i| -rg[i] - gdx[i]).collect();
            Some((dx, dy.data.as_vec().clone(), dz, ds))
        };

        let rsz_aff: Vec<f64> = (0..m).map(|i| s[i] * z[i]).collect();
        let Some((_, _, dz_aff, ds_aff)) = solve_dir(&rsz_aff) else {
            break;
        };
        let ap = max_step(&s, &ds_aff).min(1.0);
        let ad = max_step(&z, &dz_aff).min(1.0);
        let sigma = if m > 0 && mu > 0.0 {
            let mu_aff = (0..m)
                .map(|i| (s[i] + ap * ds_aff[i]) * (z[i] + ad * dz_aff[i]))
                .sum::<f64>()
                / m as f64;
            (mu_aff / mu).powi(3).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let rsz: Vec<f64> = (0..m)
            .map(|i| s[i] * z[i] + ds_aff[i] * dz_aff[i] - sigma * mu)
            .collect();
        let Some((dx, dy, dz, ds)) = solve_dir(&rsz) else {
            break;
        };
        let ap = (0.99 * max_step(&s, &ds)).min(1.0);
        let ad = (0.99 * max_step(&z, &dz)).min(1.0);
        for j in 0..n {
            x[j] += ap * dx[j];
        }
        for i in 0..m {
            s[i] += ap * ds[i];
            z[i] += ad * dz[i];
        }
        for i in 0..p {
            y[i] += ad * dy[i];
        }
    }

    let mut mult = Multipliers::zeros(program);
    for (i, &idx) in std.eq_origin.iter().enumerate() {
        mult.constraints[idx] = y[i];
    }
    for (i, origin) in std.in_origin.iter().enumerate() {
        match *origin {
            RowOrigin::Constraint(idx) => mult.constraints[idx] = z[i],
            RowOrigin::Lower(j) => mult.lower[j] = z[i],
            RowOrigin::Upper(j) => mult.upper[j] = z[i],
        }
    }
    let parts = kkt_parts(program, &x, &mult);
    let kkt = parts.max();
    if status == Status::Optimal && kkt > opts.optimality_tol {
        status = Status::MaxIter;
    }
    let dual = -dot(&std.b, &y) - dot(&std.h, &z);
    Ok(Solution {
        objective: program.objective_value(&x),
        x,
        status,
        kkt_residual: kkt,
        multipliers: mult,
        iterations,
        dual_objective: Some(dual),
        barrier_path: Vec::new(),
    })
}

/// Farkas-style checks on diverging iterates.
fn detect_divergence(std: &Standard, x: &[f64], y: &[f64], z: &[f64], n: usize) -> Option<Status> {
    const BIG: f64 = 1e8;
    const TOL: f64 = 1e-6;
    let dual_norm = inf_norm(y).max(inf_norm(z));
    if dual_norm > BIG {
        let yb: Vec<f64> = y.iter().map(|v| v / dual_norm).collect();
        let zb: Vec<f64> = z.iter().map(|v| v / dual_norm).collect();
        let mut r = std.gt_mul(&zb, n);
        if !yb.is_empty() {
            let aty = std.a.transpose() * DVector::from_column_slice(&yb);
            for j in 0..n {
                r[j] += aty[j];
            }
        }
        if inf_norm(&r) <= TOL && dot(&std.b, &yb) + dot(&std.h, &zb) < -TOL {
            return Some(Status::Infeasible);
        }
    }
    let xn = inf_norm(x);
    if xn > BIG {
        let d: Vec<f64> = x.iter().map(|v| v / xn).collect();
        let ad_ok = if std.b.is_empty() {
            true
        } else {
            let ad = &std.a * DVector::from_column_slice(&d);
            ad.amax() <= TOL
        };
        let gd_ok = std.g_mul(&d).iter().all(|&v| v <= TOL);
        if ad_ok && gd_ok && dot(&std.c, &d) < -TOL {
            return Some(Status::Unbounded);
        }
    }
    None
}
