use klmc_core::kernel::KernelCoefficients;
use klmc_core::oracle::{klmc2_transition, klmc_transition, lmc_stationary_variance};
use klmc_core::rng::{fill_normals, NoiseStream};
use klmc_core::sampler::{
    euler_maruyama_substep, exact_gaussian_kinetic_step, fine_grid_integrate, kinetic_propagator,
    klmc2_step, klmc2_step_with_normals, klmc_step, klmc_step_with_normals, lmc_step,
    run_chain, run_chains, Algorithm, ExactGaussianKernel, GaussianIncrements, InitSpec,
    KineticState, ReplayIncrements, SamplerConfig,
};
use klmc_core::target::{Constants, DiagonalQuadraticTarget, TargetModel};
use nalgebra::{DVector, Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Gradient `b` everywhere, zero Hessian.
struct LinearPatch {
    b: DVector<f64>,
}

impl TargetModel for LinearPatch {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn constants(&self) -> Constants {
        Constants { m: 1.0, big_m: 1.0, m2: 0.0 }
    }
    fn grad(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.b.clone()
    }
    fn hvp(&self, x: &DVector<f64>, _v: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::zeros(x.len()))
    }
    fn has_hessian(&self) -> bool {
        true
    }
}

/// Checks sample mean and covariance of 2-d draws against a Gaussian law,
/// each within `z` standard errors.
fn assert_moments(samples: &[Vector2<f64>], mean: Vector2<f64>, cov: Matrix2<f64>, z: f64) {
    let n = samples.len() as f64;
    let m = samples.iter().sum::<Vector2<f64>>() / n;
    let mut s = Matrix2::zeros();
    for x in samples {
        let d = x - m;
        s += d * d.transpose();
    }
    s /= n - 1.0;
    for i in 0..2 {
        let se = (cov[(i, i)] / n).sqrt();
        assert!((m[i] - mean[i]).abs() <= z * se, "mean[{i}] {} vs {} (se {se})", m[i], mean[i]);
    }
    for i in 0..2 {
        for j in i..2 {
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n).sqrt();
            assert!(
                (s[(i, j)] - cov[(i, j)]).abs() <= z * se,
                "cov[{i}{j}] {} vs {} (se {se})",
                s[(i, j)],
                cov[(i, j)]
            );
        }
    }
}

#[test]
fn runs_are_bitwise_reproducible() {
    let t = DiagonalQuadraticTarget::new(vec![1.0, 4.0]).unwrap();
    for alg in [Algorithm::Lmc, Algorithm::Klmc, Algorithm::Klmc2, Algorithm::ExactGaussian, Algorithm::FineGrid] {
        let mut cfg = SamplerConfig::new(alg, 5f64.sqrt(), 0.05, 50, 1234);
        cfg.init.theta0 = Some(vec![1.0, -1.0]);
        let a = run_chain(&cfg, &t).unwrap();
        let b = run_chain(&cfg, &t).unwrap();
        assert_eq!(a, b, "{alg}");
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
    }
}

#[test]
fn distinct_streams_give_distinct_chains() {
    let t = DiagonalQuadraticTarget::isotropic(2, 1.0).unwrap();
    let cfg = SamplerConfig::new(Algorithm::Klmc, 2f64.sqrt(), 0.1, 3, 7);
    let chains = run_chains(&cfg, &t, 4).unwrap();
    for i in 0..4 {
        for j in (i + 1)..4 {
            assert_ne!(chains[i].states[0].v, chains[j].states[0].v);
            assert_ne!(chains[i].states[1], chains[j].states[1]);
        }
    }
    let mut other = cfg.clone();
    other.stream = 1;
    assert_ne!(run_chain(&cfg, &t).unwrap(), run_chain(&other, &t).unwrap());
}

#[test]
fn klmc_first_step_is_noise_transform() {
    let t = DiagonalQuadraticTarget::isotropic(2, 1.0).unwrap();
    let mut cfg = SamplerConfig::new(Algorithm::Klmc, 2f64.sqrt(), 0.1, 1, 99);
    cfg.init.zero_velocity = true;
    let traj = run_chain(&cfg, &t).unwrap();
    let c = KernelCoefficients::new(cfg.gamma, cfg.h).unwrap();
    let mut z = [0.0; 4];
    fill_normals(&mut NoiseStream::new(99, 0).at(1), &mut z);
    let l = c.chol_klmc;
    for i in 0..2 {
        let v = l[(0, 0)] * z[i];
        let th = l[(1, 0)] * z[i] + l[(1, 1)] * z[2 + i];
        assert_eq!(traj.states[1].v[i], v);
        assert_eq!(traj.states[1].theta[i], th);
    }
}

#[test]
fn csv_layout() {
    let t = DiagonalQuadraticTarget::isotropic(2, 1.0).unwrap();
    let cfg = SamplerConfig::new(Algorithm::Klmc, 2f64.sqrt(), 0.1, 2, 1);
    let mut out = Vec::new();
    run_chain(&cfg, &t).unwrap().write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,theta_1,theta_2,v_1,v_2");
    assert_eq!(lines.count(), 3);
}

#[test]
fn lmc_stationary_variance_matches_fixed_point() {
    let t = DiagonalQuadraticTarget::isotropic(1, 1.0).unwrap();
    let h = 0.01;
    let expected = lmc_stationary_variance(h, 1.0);
    assert!(((1.0 - h).powi(2) * expected + 2.0 * h - expected).abs() < 1e-15);
    let n = 20_000;
    let mut samples = Vec::with_capacity(n);
    for c in 0..n {
        let mut rng = NoiseStream::for_chain(5, 0, c as u64).at(1);
        let mut theta = DVector::from_element(1, 0.0);
        for _ in 0..1500 {
            theta = lmc_step(&t, &theta, h, &mut rng);
        }
        samples.push(theta[0]);
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let se = expected * (2.0 / (nf - 1.0)).sqrt();
    assert!((var - expected).abs() <= 4.0 * se, "{var} vs {expected}");
}

#[test]
fn klmc_one_step_covariance_matches_linear_recursion() {
    let t = DiagonalQuadraticTarget::isotropic(1, 1.0).unwrap();
    let c = KernelCoefficients::new(2f64.sqrt(), 0.2).unwrap();
    let trans = klmc_transition(&c, 1.0);
    let (_, cov) = trans.propagate(&Vector2::zeros(), &Matrix2::identity());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples: Vec<Vector2<f64>> = (0..50_000)
        .map(|_| {
            let mut init = [0.0; 2];
            fill_normals(&mut rng, &mut init);
            let s = KineticState::new(DVector::from_element(1, init[1]), DVector::from_element(1, init[0])).unwrap();
            let out = klmc_step(&t, &s, &c, &mut rng);
            Vector2::new(out.v[0], out.theta[0])
        })
        .collect();
    assert_moments(&samples, Vector2::zeros(), cov, 4.0);
}

#[test]
fn klmc_long_run_matches_lyapunov_fixed_point() {
    let lambdas = [1.0, 4.0];
    let t = DiagonalQuadraticTarget::new(lambdas.to_vec()).unwrap();
    let cfg = SamplerConfig::new(Algorithm::Klmc, 5f64.sqrt(), 0.1, 400, 21);
    let mut thin = cfg.clone();
    thin.thin = 400;
    let chains = run_chains(&thin, &t, 4000).unwrap();
    let c = KernelCoefficients::new(cfg.gamma, cfg.h).unwrap();
    for (i, &l) in lambdas.iter().enumerate() {
        let stat = klmc_transition(&c, l).stationary_cov().unwrap();
        let samples: Vec<Vector2<f64>> = chains
            .iter()
            .map(|tr| {
                let s = tr.last().unwrap();
                Vector2::new(s.v[i], s.theta[i])
            })
            .collect();
        assert_moments(&samples, Vector2::zeros(), stat, 4.0);
    }
}

#[test]
fn klmc2_equals_klmc_without_curvature() {
    let model = LinearPatch { b: DVector::from_vec(vec![0.3, -1.2, 0.7]) };
    let c = KernelCoefficients::new(1.3, 0.05).unwrap();
    let stream = NoiseStream::new(77, 3);
    let mut a = KineticState::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), DVector::from_vec(vec![0.1, 0.0, -0.1])).unwrap();
    let mut b = a.clone();
    for k in 1..=10_000u64 {
        a = klmc_step(&model, &a, &c, &mut stream.at(k));
        b = klmc2_step(&model, &b, &c, &mut stream.at(k)).unwrap();
        let scale = 1.0 + a.theta.amax() + a.v.amax();
        assert!((&a.theta - &b.theta).amax() <= 1e-12 * scale);
        assert!((&a.v - &b.v).amax() <= 1e-12 * scale);
    }
}

#[test]
fn klmc2_deterministic_map_matches_hand_assembly() {
    let lambdas = [0.5, 2.0, 9.0];
    let t = DiagonalQuadraticTarget::new(lambdas.to_vec()).unwrap();
    let c = KernelCoefficients::new(1.7, 0.2).unwrap();
    let s = KineticState::new(DVector::from_vec(vec![1.0, -0.5, 0.25]), DVector::from_vec(vec![-1.0, 0.3, 2.0])).unwrap();
    let out = klmc2_step_with_normals(&t, &s, &c, &[0.0; 12]).unwrap();
    for (i, &l) in lambdas.iter().enumerate() {
        let a = Matrix2::new(
            c.psi0 - c.phi2 * l,
            -c.psi1 * l,
            c.psi1 - c.phi3 * l,
            1.0 - c.psi2 * l,
        );
        let x = a * Vector2::new(s.v[i], s.theta[i]);
        assert!((out.v[i] - x[0]).abs() < 1e-14);
        assert!((out.theta[i] - x[1]).abs() < 1e-14);
    }
    let lin = klmc_step_with_normals(&t, &s, &c, &[0.0; 6]);
    assert_ne!(lin, out);
}

#[test]
fn klmc2_one_step_covariance_matches_linear_recursion() {
    let t = DiagonalQuadraticTarget::isotropic(1, 2.0).unwrap();
    let c = KernelCoefficients::new(2.0, 0.3).unwrap();
    let trans = klmc2_transition(&c, 2.0);
    let start = Vector2::new(0.5, -1.0);
    let (mean, cov) = trans.propagate(&start, &Matrix2::zeros());
    let s = KineticState::new(DVector::from_element(1, start[1]), DVector::from_element(1, start[0])).unwrap();
    let stream = NoiseStream::new(4, 4);
    let samples: Vec<Vector2<f64>> = (0..50_000u64)
        .map(|k| {
            let out = klmc2_step(&t, &s, &c, &mut stream.at(k)).unwrap();
            Vector2::new(out.v[0], out.theta[0])
        })
        .collect();
    assert_moments(&samples, mean, cov, 4.0);
}

/// `exp(hA)` through the eigendecomposition of `A` (distinct eigenvalues).
fn propagator_by_eigen(gamma: f64, lambda: f64, h: f64) -> Matrix2<f64> {
    let disc = (gamma * gamma - 4.0 * lambda).sqrt();
    let (r1, r2) = ((-gamma + disc) / 2.0, (-gamma - disc) / 2.0);
    // eigenvector of [[−γ, −λ], [1, 0]] for root r is (r, 1)
    let v = Matrix2::new(r1, r2, 1.0, 1.0);
    let d = Matrix2::new((r1 * h).exp(), 0.0, 0.0, (r2 * h).exp());
    v * d * v.try_inverse().unwrap()
}

#[test]
fn exact_mean_propagation() {
    let (g, l, h) = (4.0, 1.0, 0.5);
    let e = kinetic_propagator(g, l, h);
    let oracle = propagator_by_eigen(g, l, h);
    assert!((e - oracle).amax() < 1e-14);
    let a = nalgebra::Matrix2::new(-g, -l, 1.0, 0.0);
    assert!((e - (a * h).exp()).amax() < 1e-13);
    for &(g, l) in &[(1.0, 1.0), (2.0, 1.0), (0.3, 5.0)] {
        let a = nalgebra::Matrix2::new(-g, -l, 1.0, 0.0);
        assert!((kinetic_propagator(g, l, 0.7) - (a * 0.7).exp()).amax() < 1e-13);
    }
    let k = ExactGaussianKernel::new(&[l], g, h).unwrap();
    let s = KineticState::new(DVector::from_element(1, 1.0), DVector::from_element(1, 0.0)).unwrap();
    let out = k.step_with_normals(&s, &[0.0, 0.0]);
    let x = oracle * Vector2::new(0.0, 1.0);
    assert!((out.v[0] - x[0]).abs() < 1e-14 && (out.theta[0] - x[1]).abs() < 1e-14);
}

#[test]
fn exact_step_long_horizon_velocity_is_standard() {
    let lambdas = [1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = KineticState::new(DVector::from_element(1, 3.0), DVector::from_element(1, -2.0)).unwrap();
    let k = ExactGaussianKernel::new(&lambdas, 3.0, 60.0).unwrap();
    let cov = k.covariances[0];
    assert!((cov[(0, 0)] - 1.0).abs() < 1e-10);
    assert!((cov[(1, 1)] - 1.0).abs() < 1e-10);
    assert!(cov[(0, 1)].abs() < 1e-10);
    let out = exact_gaussian_kinetic_step(&lambdas, &s, 3.0, 60.0, &mut rng).unwrap();
    assert!(out.is_finite());
}

#[test]
fn fine_grid_mean_converges_to_exact_at_first_order() {
    let lambdas = [1.0, 3.0];
    let t = DiagonalQuadraticTarget::new(lambdas.to_vec()).unwrap();
    let gamma = 1.5;
    let s = KineticState::new(DVector::from_vec(vec![1.0, -1.0]), DVector::from_vec(vec![0.5, 0.2])).unwrap();
    let err = |delta: f64| {
        let n = (1.0 / delta).round() as usize;
        let zeros = vec![DVector::zeros(2); n];
        let mut noise = ReplayIncrements::new(&zeros, 1.0);
        let out = fine_grid_integrate(&t, &s, gamma, 1.0, 1.0, delta, &mut noise).unwrap();
        let mut e: f64 = 0.0;
        for (i, &l) in lambdas.iter().enumerate() {
            let x = kinetic_propagator(gamma, l, 1.0) * Vector2::new(s.v[i], s.theta[i]);
            e = e.max((out.v[i] - x[0]).abs()).max((out.theta[i] - x[1]).abs());
        }
        e
    };
    let (e1, e2) = (err(1e-3), err(1e-4));
    assert!(e1 <= 5.0 * 1e-3, "{e1}");
    assert!(e2 <= 5.0 * 1e-4, "{e2}");
    let ratio = e1 / e2;
    assert!(ratio > 8.0 && ratio < 12.0, "ratio {ratio}");
}

#[test]
fn fine_grid_free_velocity_relaxes_to_standard_normal() {
    let model = LinearPatch { b: DVector::zeros(1) };
    let n = 4000;
    let vs: Vec<f64> = (0..n)
        .map(|c| {
            let mut rng = NoiseStream::for_chain(8, 0, c as u64).at(0);
            let mut noise = GaussianIncrements::new(&mut rng);
            let s = KineticState::at_rest(DVector::zeros(1));
            fine_grid_integrate(&model, &s, 1.0, 1.0, 10.0, 0.01, &mut noise).unwrap().v[0]
        })
        .collect();
    let nf = n as f64;
    let var = vs.iter().map(|v| v * v).sum::<f64>() / nf;
    // Euler–Maruyama OU variance 2γδ/(1−(1−γδ)²) at γδ = 0.01
    let expected = 0.02 / (1.0 - 0.99f64.powi(2));
    assert!((expected - 1.0).abs() < 0.01);
    assert!((var - expected).abs() <= 4.0 * expected * (2.0 / nf).sqrt(), "{var}");
}

#[test]
fn euler_maruyama_substep_is_explicit_update() {
    let t = DiagonalQuadraticTarget::new(vec![2.0]).unwrap();
    let s = KineticState::new(DVector::from_element(1, 1.0), DVector::from_element(1, 0.5)).unwrap();
    let dw = DVector::from_element(1, 0.1);
    let out = euler_maruyama_substep(&t, &s, 1.5, 2.0, 0.01, &dw);
    let v = 0.5 - (1.5 * 0.5 + 2.0 * 2.0 * 1.0) * 0.01 + (2.0f64 * 1.5 * 2.0).sqrt() * 0.1;
    assert!((out.v[0] - v).abs() < 1e-15);
    assert_eq!(out.theta[0], 1.0 + 0.5 * 0.01);
}

#[test]
fn time_rescaling_maps_paths() {
    let t = DiagonalQuadraticTarget::new(vec![1.0, 2.5]).unwrap();
    let (gamma, u): (f64, f64) = (2.0, 4.0);
    let su = u.sqrt();
    let delta = 1e-3;
    let horizon = 2.0;
    let s0 = KineticState::new(DVector::from_vec(vec![1.0, -0.5]), DVector::from_vec(vec![0.4, 0.8])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut noise = GaussianIncrements::recording(&mut rng);
    let orig = fine_grid_integrate(&t, &s0, gamma, u, horizon / su, delta / su, &mut noise).unwrap();
    let incs = noise.into_record();
    let bar0 = KineticState::new(s0.theta.clone(), &s0.v / su).unwrap();
    let mut replay = ReplayIncrements::new(&incs, u.powf(0.25));
    let bar = fine_grid_integrate(&t, &bar0, gamma / su, 1.0, horizon, delta, &mut replay).unwrap();
    assert!((&bar.theta - &orig.theta).amax() < 1e-10);
    assert!((&bar.v - &orig.v / su).amax() < 1e-10);
}

#[test]
fn fine_grid_algorithm_in_chain() {
    let t = DiagonalQuadraticTarget::isotropic(1, 1.0).unwrap();
    let mut cfg = SamplerConfig::new(Algorithm::FineGrid, 1.0, 0.1, 5, 2);
    cfg.substep = Some(0.01);
    cfg.init = InitSpec { theta0: Some(vec![2.0]), zero_velocity: true };
    let traj = run_chain(&cfg, &t).unwrap();
    assert_eq!(traj.len(), 6);
}
