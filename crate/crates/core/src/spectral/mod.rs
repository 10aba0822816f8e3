//! Eigenvalue spectra of the linearized CTAN dynamics, forward-Euler
//! amplification factors and perturbation-growth experiments.

mod jacobi;
mod verify;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::{CtanConfig, CtanParams};
use crate::tensor::Tensor;

pub use jacobi::{symmetric_eigvals, JACOBI_MAX_SWEEPS, JACOBI_TOL};
pub use verify::{verify_suite, Check, VerifyOptions, VerifyReport};

/// Largest `|A + Aᵀ|` row sum accepted as anti-symmetric.
pub const ANTISYM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumMethod {
    /// Jacobi on the symmetric square of an anti-symmetric matrix.
    AntisymSquare,
    /// Hessenberg reduction followed by shifted QR on a general real matrix.
    SimilarityReduce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub matrix_dim: usize,
    pub method: SpectrumMethod,
}

impl Spectrum {
    pub fn max_abs_re(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.re.abs()).fold(0.0, f64::max)
    }

    /// Largest distance from an eigenvalue's conjugate to the nearest
    /// eigenvalue.
    pub fn conjugate_gap(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| {
                self.eigenvalues
                    .iter()
                    .map(|m| (l.conj() - m).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn to_dmatrix(t: &Tensor) -> Result<DMatrix<f64>> {
    if t.rank() != 2 {
        return Err(dim_err("spectrum", format!("matrix expected, got {:?}", t.shape())));
    }
    Ok(DMatrix::from_row_slice(t.rows(), t.cols(), t.data()))
}

fn square(t: &Tensor) -> Result<usize> {
    if t.rank() != 2 || t.rows() != t.cols() {
        return Err(dim_err(
            "spectrum",
            format!("square matrix expected, got {:?}", t.shape()),
        ));
    }
    Ok(t.rows())
}

/// `max_i Σ_j |a_ij + a_ji|`.
pub fn asymmetry(a: &Tensor) -> Result<f64> {
    let d = square(a)?;
    Ok((0..d)
        .map(|i| (0..d).map(|j| (a.get2(i, j) + a.get2(j, i)).abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Eigenvalues `±i√(−μ)` of an anti-symmetric matrix, from the eigenvalues
/// `μ` of its symmetric negative semi-definite square.
pub fn antisym_eigvals(a: &Tensor) -> Result<Spectrum> {
    let d = square(a)?;
    let skew = asymmetry(a)?;
    if !(skew < ANTISYM_TOL) {
        return Err(Error::Contract(format!(
            "matrix is not anti-symmetric (|A + Aᵀ|∞ = {skew:e})"
        )));
    }
    let mut sq = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            sq[i * d + j] = (0..d).map(|k| a.get2(i, k) * a.get2(k, j)).sum();
        }
    }
    let mut mu = symmetric_eigvals(&mut sq, d)?;
    mu.sort_by(|x, y| x.total_cmp(y));
    let mut eig = Vec::with_capacity(d);
    for pair in mu.chunks(2) {
        if pair.len() == 2 {
            let b = (-(pair[0] + pair[1]) / 2.0).max(0.0).sqrt();
            eig.push(Complex64::new(0.0, b));
            eig.push(Complex64::new(0.0, -b));
        } else {
            eig.push(Complex64::new(0.0, 0.0));
        }
    }
    Ok(Spectrum {
        eigenvalues: eig,
        matrix_dim: d,
        method: SpectrumMethod::AntisymSquare,
    })
}

/// Eigenvalues of an arbitrary real square matrix.
pub fn general_eigvals(m: &Tensor) -> Result<Spectrum> {
    let d = square(m)?;
    if !m.is_finite() {
        return Err(Error::Numeric("non-finite matrix entry".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(to_dmatrix(m)?, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numeric("shifted QR iteration did not converge".into()))?;
    Ok(Spectrum {
        eigenvalues: schur.complex_eigenvalues().iter().copied().collect(),
        matrix_dim: d,
        method: SpectrumMethod::SimilarityReduce,
    })
}

/// `diag(D)·(A − γI)`, the Jacobian of one CTAN step with respect to its
/// input, where `D` holds the activation derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianSpec {
    pub diag: Vec<f64>,
    /// Anti-symmetric part `W − Wᵀ`.
    pub a: Tensor,
    pub gamma: f64,
}

impl JacobianSpec {
    pub fn validate(&self) -> Result<usize> {
        let d = square(&self.a)?;
        if self.diag.len() != d {
            return Err(dim_err(
                "jacobian",
                format!("{} scales for a {d}×{d} matrix", self.diag.len()),
            ));
        }
        if let Some(bad) = self.diag.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Contract(format!("scaling entries must be positive, got {bad}")));
        }
        Ok(d)
    }

    /// The Jacobian itself, `D(A − γI)`.
    pub fn matrix(&self) -> Result<Tensor> {
        let d = self.validate()?;
        let mut m = Tensor::zeros(&[d, d]);
        for i in 0..d {
            for j in 0..d {
                let shift = if i == j { self.gamma } else { 0.0 };
                m.set2(i, j, self.diag[i] * (self.a.get2(i, j) - shift));
            }
        }
        Ok(m)
    }

    /// Real-part interval every eigenvalue must lie in:
    /// `[−γ·max D, −γ·min D]`.
    pub fn bendixson_interval(&self) -> (f64, f64) {
        let max = self.diag.iter().copied().fold(f64::MIN, f64::max);
        let min = self.diag.iter().copied().fold(f64::MAX, f64::min);
        (-self.gamma * max, -self.gamma * min)
    }
}

/// Spectrum of `D(A − γI)`, computed on the similar matrix
/// `D^½(A − γI)D^½`. Its anti-symmetric part `D^½AD^½` goes through
/// [`antisym_eigvals`]; a shift that stays a multiple of the identity is
/// added exactly, anything else goes to the general solver.
pub fn jacobian_spectrum(spec: &JacobianSpec) -> Result<Spectrum> {
    let d = spec.validate()?;
    if asymmetry(&spec.a)? >= ANTISYM_TOL {
        return Err(Error::Contract("A must be anti-symmetric".into()));
    }
    let root: Vec<f64> = spec.diag.iter().map(|x| x.sqrt()).collect();
    let mut s = Tensor::zeros(&[d, d]);
    for i in 0..d {
        for j in 0..d {
            s.set2(i, j, spec.a.get2(i, j) * (root[i] * root[j]));
        }
    }
    let uniform = spec.diag.iter().all(|&x| x == spec.diag[0]);
    if spec.gamma == 0.0 || uniform {
        let mut out = antisym_eigvals(&s)?;
        let shift = spec.gamma * spec.diag[0];
        if spec.gamma != 0.0 {
            for l in &mut out.eigenvalues {
                l.re -= shift;
            }
        }
        return Ok(out);
    }
    for i in 0..d {
        s.set2(i, i, s.get2(i, i) - spec.gamma * spec.diag[i]);
    }
    general_eigvals(&s)
}

/// `|1 + ελ|`, the per-step gain of forward Euler along an eigendirection.
pub fn euler_amplification(lambda: Complex64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Contract(format!("step size must be positive, got {epsilon}")));
    }
    Ok((Complex64::new(1.0, 0.0) + lambda * epsilon).norm())
}

/// How a perturbation of the initial state is propagated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthMode {
    /// Identity activation and no aggregation: `δh ← δh + ε(A − γI)δh`.
    Linear,
    /// Tangent dynamics of the tanh update along the trajectory started at
    /// zero with the model bias and no aggregation.
    Tangent,
}

/// `‖δh^ℓ‖₂` for `ℓ = 0..=steps` under repeated Euler steps with the
/// model's transition matrix.
pub fn perturbation_growth(
    config: &CtanConfig,
    params: &CtanParams,
    steps: usize,
    delta0: &[f64],
    mode: GrowthMode,
) -> Result<Vec<f64>> {
    let d = config.dim;
    if delta0.len() != d || params.w.shape() != [d, d] {
        return Err(dim_err(
            "perturbation_growth",
            format!("dim {d}, perturbation {}", delta0.len()),
        ));
    }
    let w = &params.w;
    let a: Vec<f64> = (0..d * d)
        .map(|k| {
            let (i, j) = (k / d, k % d);
            w.get2(i, j) - w.get2(j, i) - if i == j { config.gamma } else { 0.0 }
        })
        .collect();
    let mv = |x: &[f64]| -> Vec<f64> { (0..d).map(|i| (0..d).map(|j| a[i * d + j] * x[j]).sum()).collect() };
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let eps = config.epsilon;
    let mut delta = delta0.to_vec();
    let mut h = vec![0.0; d];
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(norm(&delta));
    for _ in 0..steps {
        let ad = mv(&delta);
        match mode {
            GrowthMode::Linear => {
                for (x, y) in delta.iter_mut().zip(&ad) {
                    *x += eps * y;
                }
            }
            GrowthMode::Tangent => {
                let ah = mv(&h);
                for i in 0..d {
                    let s = (ah[i] + params.b.data()[i]).tanh();
                    delta[i] += eps * (1.0 - s * s) * ad[i];
                    h[i] += eps * s;
                }
            }
        }
        trace.push(norm(&delta));
    }
    Ok(trace)
}
