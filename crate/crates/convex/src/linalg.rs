use nalgebra::{DMatrix, DVector};

/// Solves `[H Aᵀ; A 0] [dx; dy] = [r1; r2]` for a symmetric positive
/// semidefinite `H`. Returns `None` if the system is numerically singular.
///
/// Without equality rows the system is solved by Cholesky, with a growing
/// diagonal shift when `H` is only semidefinite.
pub(crate) fn solve_kkt(
    h: &DMatrix<f64>,
    a: Option<&DMatrix<f64>>,
    r1: &DVector<f64>,
    r2: Option<&DVector<f64>>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(1e-300, f64::max);
    match a {
        None => {
            let mut shift = 0.0;
            for _ in 0..8 {
                let mut m = h.clone();
                if shift > 0.0 {
                    for i in 0..n {
                        m[(i, i)] += shift;
                    }
                }
                if let Some(ch) = m.cholesky() {
                    let x = ch.solve(r1);
                    if x.iter().all(|v| v.is_finite()) {
                        return Some((x, DVector::zeros(0)));
                    }
                }
                shift = if shift == 0.0 { scale * 1e-14 } else { shift * 100.0 };
            }
            None
        }
        Some(a) => {
            let p = a.nrows();
            let mut k = DMatrix::zeros(n + p, n + p);
            k.view_mut((0, 0), (n, n)).copy_from(h);
            k.view_mut((n, 0), (p, n)).copy_from(a);
            k.view_mut((0, n), (n, p)).copy_from(&a.transpose());
            let reg = scale * 1e-14;
            for i in 0..n {
                k[(i, i)] += reg;
            }
            let mut rhs = DVector::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(r1);
            if let Some(r2) = r2 {
                rhs.rows_mut(n, p).copy_from(r2);
            }
            let sol = k.lu().solve(&rhs)?;
            if !sol.iter().all(|v| v.is_finite()) {
                return None;
            }
            Some((sol.rows(0, n).into_owned(), sol.rows(n, p).into_owned()))
        }
    }
}

/// Adds `w * g gᵀ` for a sparse `g` into `h`.
pub(crate) fn add_outer(h: &mut DMatrix<f64>, g: &[(usize, f64)], w: f64) {
    for &(i, gi) in g {
        let wi = w * gi;
        for &(j, gj) in g {
            h[(i, j)] += wi * gj;
        }
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}
