use ctan_core::model::{CtanConfig, CtanParams};
use ctan_core::spectral::{
    antisym_eigvals, euler_amplification, general_eigvals, jacobian_spectrum, perturbation_growth, verify_suite,
    GrowthMode, JacobianSpec, SpectrumMethod, VerifyOptions,
};
use ctan_core::Tensor;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Characteristic polynomial coefficients `c_0..=c_n` (monic, `c_n = 1`)
/// by the Faddeev–LeVerrier recursion.
fn char_poly(a: &Tensor) -> Vec<f64> {
    let n = a.rows();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut m = vec![0.0; n * n];
    for k in 1..=n {
        // M_k = A·M_{k-1} + c_{n-k+1}·I
        let mut next = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                next[i * n + j] = (0..n).map(|p| a.get2(i, p) * m[p * n + j]).sum::<f64>();
            }
            next[i * n + i] += c[n - k + 1];
        }
        m = next;
        let mut tr = 0.0;
        for i in 0..n {
            tr += (0..n).map(|p| a.get2(i, p) * m[p * n + i]).sum::<f64>();
        }
        c[n - k] = -tr / k as f64;
    }
    c
}

fn horner(c: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &ck in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + ck;
    }
    (p, dp)
}

/// All roots of the monic polynomial by Aberth–Ehrlich iteration, then a
/// few Newton steps per root.
fn poly_roots(c: &[f64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let radius = 1.0 + c[..n].iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius * 0.5, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64))
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, dp) = horner(c, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let s: Complex64 = (0..n).filter(|&j| j != i).map(|j| 1.0 / (z[i] - z[j])).sum();
            let w = ratio / (1.0 - ratio * s);
            z[i] -= w;
            moved = moved.max(w.norm());
        }
        if moved < 1e-15 {
            break;
        }
    }
    for r in &mut z {
        for _ in 0..3 {
            let (p, dp) = horner(c, *r);
            if dp.norm() > 0.0 {
                *r -= p / dp;
            }
        }
    }
    z
}

/// Largest distance from each computed eigenvalue to its nearest oracle
/// root, and vice versa.
fn match_gap(a: &[Complex64], b: &[Complex64]) -> f64 {
    let one = |x: &[Complex64], y: &[Complex64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

fn antisym(rng: &mut ChaCha8Rng, d: usize) -> Tensor {
    let w = Tensor::uniform(&[d, d], 1.0, rng);
    let mut a = Tensor::zeros(&[d, d]);
    for i in 0..d {
        for j in 0..d {
            a.set2(i, j, w.get2(i, j) - w.get2(j, i));
        }
    }
    a
}

#[test]
fn oracle_sanity_on_known_polynomial() {
    // (z − 1)(z − 2)(z² + 4)
    let c = char_poly(
        &Tensor::matrix(
            4,
            4,
            vec![1., 0., 0., 0., 0., 2., 0., 0., 0., 0., 0., 2., 0., 0., -2., 0.],
        )
        .unwrap(),
    );
    assert_eq!(c, vec![8.0, -12.0, 6.0, -3.0, 1.0]);
    let roots = poly_roots(&c);
    let want = [1.0, 2.0].map(|x| Complex64::new(x, 0.0));
    let want = [want[0], want[1], Complex64::new(0.0, 2.0), Complex64::new(0.0, -2.0)];
    assert!(match_gap(&roots, &want) < 1e-12);
}

#[test]
fn block_rotations_give_known_frequencies() {
    let bs = [0.5, 1.75];
    let mut a = Tensor::zeros(&[5, 5]);
    for (k, b) in bs.iter().enumerate() {
        a.set2(2 * k, 2 * k + 1, *b);
        a.set2(2 * k + 1, 2 * k, -b);
    }
    let s = antisym_eigvals(&a).unwrap();
    let want = [0.0, 0.5, -0.5, 1.75, -1.75].map(|b| Complex64::new(0.0, b));
    assert!(match_gap(&s.eigenvalues, &want) < 1e-14);
    assert_eq!(s.eigenvalues.len(), 5);
}

#[test]
fn antisym_spectrum_matches_polynomial_roots_and_qr() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = antisym(&mut rng, 8);
        let s = antisym_eigvals(&a).unwrap();
        assert!(s.eigenvalues.iter().all(|l| l.re == 0.0));
        let roots = poly_roots(&char_poly(&a));
        assert!(match_gap(&s.eigenvalues, &roots) < 1e-9, "seed {seed}");
        let qr = general_eigvals(&a).unwrap();
        assert_eq!(qr.method, SpectrumMethod::SimilarityReduce);
        assert!(match_gap(&s.eigenvalues, &qr.eigenvalues) < 1e-9, "seed {seed}");
    }
}

#[test]
fn unit_scaling_is_the_plain_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = antisym(&mut rng, 6);
    let spec = JacobianSpec {
        diag: vec![1.0; 6],
        a: a.clone(),
        gamma: 0.0,
    };
    assert_eq!(jacobian_spectrum(&spec).unwrap(), antisym_eigvals(&a).unwrap());

    let shifted = JacobianSpec { gamma: 0.1, ..spec };
    let s = jacobian_spectrum(&shifted).unwrap();
    assert!(s.eigenvalues.iter().all(|l| l.re == -0.1));
}

#[test]
fn diagonal_scaling_keeps_spectrum_imaginary() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let a = antisym(&mut rng, 8);
        let diag: Vec<f64> = (0..8).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let spec = JacobianSpec { diag, a, gamma: 0.0 };
        let roots = poly_roots(&char_poly(&spec.matrix().unwrap()));
        let max_re = roots.iter().map(|r| r.re.abs()).fold(0.0, f64::max);
        assert!(max_re < 1e-9, "seed {seed}: {max_re:e}");
        let s = jacobian_spectrum(&spec).unwrap();
        assert!(match_gap(&s.eigenvalues, &roots) < 1e-9);
    }
}

#[test]
fn shifted_scaled_spectrum_matches_oracle_and_bendixson() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let a = antisym(&mut rng, 8);
        let diag: Vec<f64> = (0..8).map(|_| 1.0 - rng.gen::<f64>()).collect();
        for gamma in [0.01, 0.1, 0.5, 1.0] {
            let spec = JacobianSpec {
                diag: diag.clone(),
                a: a.clone(),
                gamma,
            };
            let s = jacobian_spectrum(&spec).unwrap();
            assert_eq!(s.eigenvalues.len(), 8);
            let roots = poly_roots(&char_poly(&spec.matrix().unwrap()));
            assert!(match_gap(&s.eigenvalues, &roots) < 1e-9, "seed {seed} gamma {gamma}");
            let (lo, hi) = spec.bendixson_interval();
            for l in &s.eigenvalues {
                assert!(l.re >= lo - 1e-9 && l.re <= hi + 1e-9, "{l} outside [{lo}, {hi}]");
            }
            assert!(s.conjugate_gap() < 1e-9);
        }
    }
}

fn small_weights(seed: u64) -> (CtanConfig, CtanParams, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = CtanConfig {
        dim: 8,
        epsilon: 1.0,
        gamma: 0.0,
        ..CtanConfig::default()
    };
    let mut p = CtanParams::zeros(&cfg);
    p.w = Tensor::uniform(&[8, 8], 0.1, &mut rng);
    let delta: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (cfg, p, delta)
}

#[test]
fn unshifted_linear_perturbations_never_shrink() {
    for seed in 0..5 {
        let (cfg, p, delta) = small_weights(seed);
        let trace = perturbation_growth(&cfg, &p, 1000, &delta, GrowthMode::Linear).unwrap();
        assert_eq!(trace.len(), 1001);
        assert!(trace.windows(2).all(|w| w[1] >= w[0]), "seed {seed}");
    }
}

#[test]
fn shifted_perturbations_decay_at_the_predicted_rate() {
    for seed in 0..5 {
        let (cfg, p, delta) = small_weights(seed);
        let cfg = CtanConfig { gamma: 0.5, ..cfg };
        // Spectral radius of I + ε(A − γI) is max √((1 − εγ)² + ε²b²).
        let mut a = Tensor::zeros(&[8, 8]);
        for i in 0..8 {
            for j in 0..8 {
                a.set2(i, j, p.w.get2(i, j) - p.w.get2(j, i));
            }
        }
        let bmax = antisym_eigvals(&a)
            .unwrap()
            .eigenvalues
            .iter()
            .map(|l| l.im.abs())
            .fold(0.0, f64::max);
        let rho = (0.25 + bmax * bmax).sqrt();
        assert!(rho < 1.0);
        let trace = perturbation_growth(&cfg, &p, 1000, &delta, GrowthMode::Linear).unwrap();
        assert!(trace[1000] < 1e-3 * trace[0]);
        // The map is normal, so the norm shrinks at least geometrically.
        for (l, n) in trace.iter().enumerate().step_by(50) {
            assert!(*n <= trace[0] * rho.powi(l as i32) * (1.0 + 1e-9));
        }
    }
}

#[test]
fn tangent_mode_with_small_weights_stays_bounded() {
    let (cfg, p, delta) = small_weights(9);
    let trace = perturbation_growth(&cfg, &p, 200, &delta, GrowthMode::Tangent).unwrap();
    assert!(trace.iter().all(|x| x.is_finite()));
    let linear = perturbation_growth(&cfg, &p, 200, &delta, GrowthMode::Linear).unwrap();
    // tanh' ≤ 1 can only damp the linear gain.
    assert!(trace[200] <= linear[200] * (1.0 + 1e-12));
}

#[test]
fn default_suite_passes_and_symmetric_fault_is_caught() {
    let opts = VerifyOptions {
        count: 10,
        ..VerifyOptions::default()
    };
    let report = verify_suite(&opts).unwrap();
    for c in &report.checks {
        assert!(c.pass, "{c:?}");
        assert!(c.max_violation < 1e-9);
    }
    let faulty = verify_suite(&VerifyOptions {
        symmetric_fault: true,
        ..opts
    })
    .unwrap();
    assert!(!faulty.all_pass());
    let failed: Vec<_> = faulty
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    assert!(failed.contains(&"antisym_real_parts"), "{failed:?}");
}

proptest! {
    #[test]
    fn imaginary_axis_always_amplifies(b in prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64], eps in 1e-2..1.0f64) {
        prop_assert!(euler_amplification(Complex64::new(0.0, b), eps).unwrap() > 1.0);
    }

    #[test]
    fn real_spectra_close_under_conjugation(seed in 0u64..5000, d in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Tensor::uniform(&[d, d], 1.0, &mut rng);
        let s = general_eigvals(&m).unwrap();
        prop_assert_eq!(s.eigenvalues.len(), d);
        prop_assert!(s.conjugate_gap() < 1e-9);
    }
}
