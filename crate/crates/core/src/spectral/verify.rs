//! The numerical certification suite behind the `verify` command.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{CtanConfig, CtanParams};
use crate::spectral::{
    antisym_eigvals, asymmetry, euler_amplification, general_eigvals, perturbation_growth, GrowthMode, JacobianSpec,
};
use crate::tensor::Tensor;

/// Required shrink factor of a perturbation under the shifted dynamics.
pub const DECAY_RATIO: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    /// Matrix `i` of the random ensemble is drawn from seed `seed + i`.
    pub seed: u64,
    pub count: usize,
    pub dim: usize,
    pub gammas: Vec<f64>,
    /// Steps of the perturbation-growth experiments.
    pub steps: usize,
    /// Negative control: build `W + Wᵀ` where `W − Wᵀ` belongs.
    pub symmetric_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 100,
            dim: 16,
            gammas: vec![0.01, 0.1, 0.5, 1.0],
            steps: 1000,
            symmetric_fault: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Worst amount by which the checked bound was exceeded (0 when it
    /// always held).
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct Acc {
    name: &'static str,
    tolerance: f64,
    worst: f64,
}

impl Acc {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
        }
    }

    fn see(&mut self, v: f64) {
        // NaN counts as the worst possible outcome.
        self.worst = if v.is_nan() { f64::INFINITY } else { self.worst.max(v) };
    }

    fn finish(self) -> Check {
        let worst = if self.worst.is_finite() { self.worst } else { f64::MAX };
        Check {
            name: self.name.to_string(),
            max_violation: worst,
            tolerance: self.tolerance,
            pass: worst <= self.tolerance,
        }
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, d: usize, bound: f64) -> Tensor {
    Tensor::uniform(&[d, d], bound, rng)
}

/// `W − Wᵀ − γI`, or `W + Wᵀ − γI` under the injected fault.
fn transition(w: &Tensor, gamma: f64, fault: bool) -> Tensor {
    let d = w.rows();
    let mut a = Tensor::zeros(&[d, d]);
    for i in 0..d {
        for j in 0..d {
            let t = if fault { w.get2(j, i) } else { -w.get2(j, i) };
            a.set2(i, j, w.get2(i, j) + t - if i == j { gamma } else { 0.0 });
        }
    }
    a
}

fn sorted_im(eig: &[Complex64]) -> Vec<f64> {
    let mut v: Vec<f64> = eig.iter().map(|l| l.im).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Runs every spectral and stability check on a seeded random ensemble.
pub fn verify_suite(opts: &VerifyOptions) -> Result<VerifyReport> {
    const TOL: f64 = 1e-9;
    let d = opts.dim;
    let fault = opts.symmetric_fault;
    let mut re_antisym = Acc::new("antisym_real_parts", TOL);
    let mut agree = Acc::new("antisym_structured_agreement", TOL);
    let mut shift = Acc::new("shift_real_parts", TOL);
    let mut scaled = Acc::new("scaled_real_parts", TOL);
    let mut bendixson = Acc::new("bendixson_containment", TOL);
    let mut conj = Acc::new("conjugate_pairing", TOL);

    for i in 0..opts.count {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
        let w = uniform_matrix(&mut rng, d, 1.0);
        let diag: Vec<f64> = (0..d).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let a = transition(&w, 0.0, fault);

        let general = general_eigvals(&a)?;
        re_antisym.see(general.max_abs_re());
        conj.see(general.conjugate_gap());
        match antisym_eigvals(&a) {
            Ok(structured) => {
                let diff = sorted_im(&structured.eigenvalues)
                    .iter()
                    .zip(sorted_im(&general.eigenvalues))
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                agree.see(diff);
            }
            Err(_) => agree.see(asymmetry(&a)?),
        }

        for &g in &opts.gammas {
            let s = general_eigvals(&transition(&w, g, fault))?;
            for l in &s.eigenvalues {
                shift.see((l.re + g).abs());
            }
            conj.see(s.conjugate_gap());
        }

        let scaled_spec = JacobianSpec {
            diag: diag.clone(),
            a: a.clone(),
            gamma: 0.0,
        };
        let s = general_eigvals(&scaled_spec.matrix()?)?;
        scaled.see(s.max_abs_re());
        conj.see(s.conjugate_gap());

        for &g in opts.gammas.iter().filter(|&&g| g > 0.0) {
            let spec = JacobianSpec {
                diag: diag.clone(),
                a: a.clone(),
                gamma: g,
            };
            let (lo, hi) = spec.bendixson_interval();
            let s = general_eigvals(&spec.matrix()?)?;
            for l in &s.eigenvalues {
                bendixson.see((lo - l.re).max(l.re - hi).max(0.0));
            }
            conj.see(s.conjugate_gap());
        }
    }

    // Forward Euler on the imaginary axis always amplifies.
    let mut axis = Acc::new("euler_imaginary_axis", 0.0);
    for &eps in &[1.0, 0.5, 0.1, 0.01] {
        for k in -40..=40 {
            if k == 0 {
                continue;
            }
            let b = (k as f64 / 4.0).powi(3) * 1e-2;
            let gain = euler_amplification(Complex64::new(0.0, b), eps)?;
            axis.see(if gain > 1.0 {
                0.0
            } else {
                1.0 - gain + f64::MIN_POSITIVE
            });
        }
    }

    // Perturbations: 8×8 transitions with small weights.
    let mut growth = Acc::new("linear_growth_nondecreasing", 0.0);
    let mut decay = Acc::new("shifted_decay", 0.0);
    for i in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(10_000 + i));
        let cfg = CtanConfig {
            dim: 8,
            epsilon: 1.0,
            gamma: 0.0,
            ..CtanConfig::default()
        };
        let mut params = CtanParams::zeros(&cfg);
        params.w = uniform_matrix(&mut rng, 8, 0.1);
        let delta0: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let trace = perturbation_growth(&cfg, &params, opts.steps, &delta0, GrowthMode::Linear)?;
        for pair in trace.windows(2) {
            growth.see((pair[0] - pair[1]).max(0.0) / pair[0]);
        }
        let shifted = CtanConfig { gamma: 0.5, ..cfg };
        let trace = perturbation_growth(&shifted, &params, opts.steps, &delta0, GrowthMode::Linear)?;
        decay.see((trace[trace.len() - 1] / trace[0] - DECAY_RATIO).max(0.0));
    }

    let checks = [re_antisym, agree, shift, scaled, bendixson, conj, axis, growth, decay]
        .into_iter()
        .map(Acc::finish)
        .collect();
    Ok(VerifyReport { checks })
}
