use crate::error::{dim_err, Error, Result};

/// Convergence threshold on the off-diagonal Frobenius norm, relative to
/// the Frobenius norm of the whole matrix.
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

fn off_norm(m: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[i * n + j] * m[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Eigenvalues of the symmetric row-major `n×n` matrix `m` by cyclic Jacobi
/// rotations, sweeping `(p, q)` in row order. `m` is overwritten with the
/// (nearly) diagonal result.
pub fn symmetric_eigvals(m: &mut [f64], n: usize) -> Result<Vec<f64>> {
    if m.len() != n * n {
        return Err(dim_err("jacobi", format!("{} entries for n = {n}", m.len())));
    }
    for i in 0..n {
        for j in 0..i {
            if m[i * n + j] != m[j * n + i] {
                return Err(Error::Contract("jacobi needs a symmetric matrix".into()));
            }
        }
    }
    let total = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = JACOBI_TOL * total;
    let mut sweeps = 0;
    while off_norm(m, n) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::Numeric(format!(
                "jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m[p * n + p], m[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // M ← Jᵀ M J with J the rotation in the (p, q) plane.
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
            }
        }
    }
    Ok((0..n).map(|i| m[i * n + i]).collect())
}
