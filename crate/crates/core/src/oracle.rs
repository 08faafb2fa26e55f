//! Exact moment oracles for the samplers on diagonal quadratic targets.
//!
//! On `f(θ) = ½ Σ λᵢ θᵢ²` every sampler is a per-coordinate linear-Gaussian
//! recursion `x' = A x + ε`, `ε ~ N(0, Q)`, on `x = (v, θ)`. Its law stays
//! Gaussian, its moments propagate in closed form, and its stationary
//! covariance solves the discrete Lyapunov equation `S = A S Aᵀ + Q`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x4};

use crate::error::{Error, Result};
use crate::kernel::KernelCoefficients;
use crate::sampler::{Algorithm, ExactGaussianKernel};

/// Solves `S = A S Aᵀ + Q` through the Kronecker system
/// `(I − A⊗A) vec(S) = vec(Q)`.
pub fn discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.nrows(),
        });
    }
    let system = DMatrix::<f64>::identity(n * n, n * n) - a.kronecker(a);
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidArgument("transition is not stable".into()))?;
    let s = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(0.5 * (&s + s.transpose()))
}

/// Per-coordinate linear recursion on `(v, θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTransition {
    pub a: Matrix2<f64>,
    pub q: Matrix2<f64>,
}

impl LinearTransition {
    pub fn propagate(&self, mean: &nalgebra::Vector2<f64>, cov: &Matrix2<f64>) -> (nalgebra::Vector2<f64>, Matrix2<f64>) {
        (self.a * mean, self.a * cov * self.a.transpose() + self.q)
    }

    pub fn stationary_cov(&self) -> Result<Matrix2<f64>> {
        let a = DMatrix::from_iterator(2, 2, self.a.iter().copied());
        let q = DMatrix::from_iterator(2, 2, self.q.iter().copied());
        let s = discrete_lyapunov(&a, &q)?;
        Ok(Matrix2::from_iterator(s.iter().copied()))
    }

    /// Spectral radius of `A`; the recursion is stable iff it is below one.
    pub fn spectral_radius(&self) -> f64 {
        let tr = self.a.trace();
        let det = self.a.determinant();
        let disc = tr * tr / 4.0 - det;
        if disc >= 0.0 {
            let r = disc.sqrt();
            (tr / 2.0 + r).abs().max((tr / 2.0 - r).abs())
        } else {
            det.abs().sqrt()
        }
    }
}

/// KLMC on curvature `λ`.
pub fn klmc_transition(coeffs: &KernelCoefficients, lambda: f64) -> LinearTransition {
    let a = Matrix2::new(
        coeffs.psi0,
        -coeffs.psi1 * lambda,
        coeffs.psi1,
        1.0 - coeffs.psi2 * lambda,
    );
    LinearTransition {
        a,
        q: coeffs.sigma_klmc,
    }
}

/// KLMC2 on curvature `λ` (the Hessian is exactly `λ`).
pub fn klmc2_transition(coeffs: &KernelCoefficients, lambda: f64) -> LinearTransition {
    let a = Matrix2::new(
        coeffs.psi0 - coeffs.phi2 * lambda,
        -coeffs.psi1 * lambda,
        coeffs.psi1 - coeffs.phi3 * lambda,
        1.0 - coeffs.psi2 * lambda,
    );
    // noise (ξ¹ − λξ³, ξ² − λξ⁴)
    let t = Matrix2x4::new(1.0, 0.0, -lambda, 0.0, 0.0, 1.0, 0.0, -lambda);
    LinearTransition {
        a,
        q: t * coeffs.sigma_klmc2 * t.transpose(),
    }
}

/// LMC on curvature `λ`, embedded in `(v, θ)` with a frozen velocity.
pub fn lmc_transition(h: f64, lambda: f64) -> LinearTransition {
    LinearTransition {
        a: Matrix2::new(0.0, 0.0, 0.0, 1.0 - h * lambda),
        q: Matrix2::new(0.0, 0.0, 0.0, 2.0 * h),
    }
}

/// Stationary LMC variance on curvature `λ`: the fixed point of
/// `σ² = (1 − hλ)² σ² + 2h`.
pub fn lmc_stationary_variance(h: f64, lambda: f64) -> f64 {
    let r = 1.0 - h * lambda;
    2.0 * h / (1.0 - r * r)
}

/// Per-coordinate transitions of `algorithm` on a diagonal quadratic.
pub fn transitions(
    algorithm: Algorithm,
    lambdas: &[f64],
    gamma: f64,
    h: f64,
) -> Result<Vec<LinearTransition>> {
    match algorithm {
        Algorithm::Lmc => Ok(lambdas.iter().map(|&l| lmc_transition(h, l)).collect()),
        Algorithm::Klmc => {
            let c = KernelCoefficients::new(gamma, h)?;
            Ok(lambdas.iter().map(|&l| klmc_transition(&c, l)).collect())
        }
        Algorithm::Klmc2 => {
            let c = KernelCoefficients::new(gamma, h)?;
            Ok(lambdas.iter().map(|&l| klmc2_transition(&c, l)).collect())
        }
        Algorithm::ExactGaussian => {
            let k = ExactGaussianKernel::new(lambdas, gamma, h)?;
            Ok(k
                .propagators
                .iter()
                .zip(&k.covariances)
                .map(|(a, q)| LinearTransition { a: *a, q: *q })
                .collect())
        }
        Algorithm::FineGrid => Err(Error::Unsupported(
            "no closed-form transition for the fine-grid integrator".into(),
        )),
    }
}

/// `W₂` between the position marginal `N(m, diag(s))` and `N(0, diag(1/λ))`.
fn position_w2(means: &[f64], vars: &[f64], lambdas: &[f64]) -> f64 {
    means
        .iter()
        .zip(vars)
        .zip(lambdas)
        .map(|((m, s), l)| {
            let d = s.max(0.0).sqrt() - (1.0 / l).sqrt();
            m * m + d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Exact stationary bias `W₂(ν_∞, π)` of `algorithm` on a diagonal quadratic.
pub fn stationary_w2_bias(algorithm: Algorithm, lambdas: &[f64], gamma: f64, h: f64) -> Result<f64> {
    let trans = transitions(algorithm, lambdas, gamma, h)?;
    let mut vars = Vec::with_capacity(lambdas.len());
    for t in &trans {
        if t.spectral_radius() >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "{algorithm} is unstable at h = {h}"
            )));
        }
        vars.push(t.stationary_cov()?[(1, 1)]);
    }
    Ok(position_w2(&vec![0.0; lambdas.len()], &vars, lambdas))
}

/// Exact trace `W₂(ν_k, π)`, `k = 0..=steps`, for a chain started at
/// `v₀ ~ N(0, I)` (or zero) and the point mass `θ₀`.
pub fn exact_w2_trace(
    algorithm: Algorithm,
    lambdas: &[f64],
    gamma: f64,
    h: f64,
    theta0: &[f64],
    zero_velocity: bool,
    steps: usize,
) -> Result<Vec<f64>> {
    let trans = transitions(algorithm, lambdas, gamma, h)?;
    let v_var = if zero_velocity || algorithm == Algorithm::Lmc { 0.0 } else { 1.0 };
    let mut means: Vec<_> = theta0
        .iter()
        .map(|&t| nalgebra::Vector2::new(0.0, t))
        .collect();
    let mut covs = vec![Matrix2::new(v_var, 0.0, 0.0, 0.0); lambdas.len()];
    let mut out = Vec::with_capacity(steps + 1);
    let snapshot = |means: &[nalgebra::Vector2<f64>], covs: &[Matrix2<f64>]| {
        let m: Vec<f64> = means.iter().map(|x| x[1]).collect();
        let s: Vec<f64> = covs.iter().map(|c| c[(1, 1)]).collect();
        position_w2(&m, &s, lambdas)
    };
    out.push(snapshot(&means, &covs));
    for _ in 0..steps {
        for ((t, m), c) in trans.iter().zip(means.iter_mut()).zip(covs.iter_mut()) {
            let (nm, nc) = t.propagate(m, c);
            *m = nm;
            *c = nc;
        }
        out.push(snapshot(&means, &covs));
    }
    Ok(out)
}
