use crate::error::{Error, Result};
use crate::numerics::Mat;

const MAX_SWEEPS: usize = 100;
const OFF_TOL: f64 = 1e-12;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns. Each eigenvector is signed so that its
/// largest-magnitude entry (first one on ties) is nonnegative.
pub fn eig_sym(m: &Mat) -> Result<(Vec<f64>, Mat)> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let scale = m.data().iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    if m.max_asymmetry() > 1e-9 * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {:e})",
            m.max_asymmetry()
        )));
    }
    if !m.all_finite() {
        return Err(Error::numeric("matrix has non-finite entries"));
    }

    let mut a = m.clone();
    let mut v = Mat::identity(n);
    let tol = OFF_TOL * m.frobenius_norm().max(1.0);

    let mut converged = off_diagonal_norm(&a) < tol;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_SWEEPS {
            return Err(Error::numeric(format!(
                "Jacobi did not converge in {MAX_SWEEPS} sweeps (off-diagonal {:e})",
                off_diagonal_norm(&a)
            )));
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweep += 1;
        converged = off_diagonal_norm(&a) < tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigvals: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.col_vec(src);
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| {
                if x.abs() > best.1 {
                    (i, x.abs())
                } else {
                    best
                }
            })
            .0;
        if col[pivot] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        for (i, x) in col.into_iter().enumerate() {
            vecs[(i, dst)] = x;
        }
    }
    Ok((eigvals, vecs))
}

fn off_diagonal_norm(a: &Mat) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Annihilates `a[p][q]` with a two-sided rotation and accumulates it into `v`.
fn rotate(a: &mut Mat, v: &mut Mat, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}
