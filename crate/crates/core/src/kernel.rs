//! Scalar kernels ψ₀, ψ₁, ψ₂, φ₂, φ₃ and the exact per-coordinate noise
//! covariances of the KLMC and KLMC2 updates.
//!
//! With `x = γt` every kernel is `γ^{-d}` times a dimensionless
//! exponential polynomial in `x`:
//!
//! ```text
//! ψ₀ = e^{-x}                 d = 0
//! ψ₁ = 1 - e^{-x}             d = 1
//! ψ₂ = x - 1 + e^{-x}         d = 2
//! φ₂ = 1 - e^{-x} - x e^{-x}  d = 2
//! φ₃ = x - 2 + 2e^{-x} + x e^{-x}   d = 3
//! ```
//!
//! The closed forms cancel catastrophically for small `x`, so below
//! [`SERIES_CUTOFF`] the kernels and covariance entries are summed from
//! their Taylor series `ψ_k = t^k Σ (-x)^n/(n+k)!`,
//! `φ_k = t^k Σ (n+1)(-x)^n/(n+k)!`.

use nalgebra::{DMatrix, Matrix2, Matrix4};

use crate::error::{ensure, Error, Result};
use crate::linalg::chol_factor;

/// Below this value of γt the Taylor series is used.
pub const SERIES_CUTOFF: f64 = 1.0;

const MAX_SERIES_TERMS: usize = 60;

fn check_args(t: f64, gamma: f64) -> Result<()> {
    ensure(t.is_finite() && t >= 0.0, || {
        format!("time must be finite and non-negative, got {t}")
    })?;
    ensure(gamma.is_finite() && gamma > 0.0, || {
        format!("friction must be finite and positive, got {gamma}")
    })
}

/// The five kernels in covariance order `[ψ₀, ψ₁, φ₂, φ₃]` plus ψ₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    Psi(u32),
    Phi(u32),
}

impl Kernel {
    fn order(self) -> u32 {
        match self {
            Kernel::Psi(k) | Kernel::Phi(k) => k,
        }
    }

    /// Series coefficient of `(-x)^n` after factoring out `t^k`.
    fn series_coef(self, n: usize) -> f64 {
        let k = self.order() as usize;
        let inv_fact = 1.0 / factorial(n + k);
        match self {
            Kernel::Psi(_) => inv_fact,
            Kernel::Phi(_) => (n as f64 + 1.0) * inv_fact,
        }
    }

    /// Dimensionless closed form as `(coef, power of s, decay rate)` terms.
    fn exp_poly(self) -> &'static [(f64, i32, i32)] {
        match self {
            Kernel::Psi(0) => &[(1.0, 0, 1)],
            Kernel::Psi(1) => &[(1.0, 0, 0), (-1.0, 0, 1)],
            Kernel::Psi(2) => &[(1.0, 1, 0), (-1.0, 0, 0), (1.0, 0, 1)],
            Kernel::Phi(2) => &[(1.0, 0, 0), (-1.0, 0, 1), (-1.0, 1, 1)],
            Kernel::Phi(3) => &[(1.0, 1, 0), (-2.0, 0, 0), (2.0, 0, 1), (1.0, 1, 1)],
            _ => unreachable!("unsupported kernel"),
        }
    }

    fn eval(self, t: f64, gamma: f64) -> f64 {
        let x = gamma * t;
        let k = self.order() as i32;
        if x < SERIES_CUTOFF {
            let mut sum = 0.0;
            let mut pow = 1.0;
            for n in 0..MAX_SERIES_TERMS {
                let term = self.series_coef(n) * pow;
                sum += term;
                if term.abs() <= 1e-18 * sum.abs() {
                    break;
                }
                pow *= -x;
            }
            return t.powi(k) * sum;
        }
        let e = (-x).exp();
        let em1 = (-x).exp_m1();
        let dimless = match self {
            Kernel::Psi(0) => e,
            Kernel::Psi(1) => -em1,
            Kernel::Psi(2) => x + em1,
            Kernel::Phi(2) => -em1 - x * e,
            Kernel::Phi(3) => x + 2.0 * em1 + x * e,
            _ => unreachable!("unsupported kernel"),
        };
        dimless / gamma.powi(k)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// ψ_k(t) for k ∈ {0, 1, 2}: `ψ₀ = e^{-γt}`, `ψ_{k+1} = ∫₀ᵗ ψ_k`.
pub fn psi(k: u32, t: f64, gamma: f64) -> Result<f64> {
    check_args(t, gamma)?;
    if k > 2 {
        return Err(Error::InvalidArgument(format!("psi order {k} not in 0..=2")));
    }
    Ok(Kernel::Psi(k).eval(t, gamma))
}

/// φ_k(t) for k ∈ {2, 3}: `φ_{k+1}(t) = ∫₀ᵗ e^{-γ(t-s)} ψ_k(s) ds`.
pub fn phi(k: u32, t: f64, gamma: f64) -> Result<f64> {
    check_args(t, gamma)?;
    if !(2..=3).contains(&k) {
        return Err(Error::InvalidArgument(format!("phi order {k} not in 2..=3")));
    }
    Ok(Kernel::Phi(k).eval(t, gamma))
}

const COV_KERNELS: [Kernel; 4] = [
    Kernel::Psi(0),
    Kernel::Psi(1),
    Kernel::Phi(2),
    Kernel::Phi(3),
];

/// `∫₀ˣ sʲ e^{-ks} ds`.
fn exp_moment(j: i32, k: i32, x: f64) -> f64 {
    if k == 0 {
        return x.powi(j + 1) / (j + 1) as f64;
    }
    let kf = k as f64;
    let kx = kf * x;
    let mut partial = 0.0;
    let mut term = 1.0;
    for i in 0..=j {
        if i > 0 {
            term *= kx / i as f64;
        }
        partial += term;
    }
    factorial(j as usize) / kf.powi(j + 1) * (1.0 - (-kx).exp() * partial)
}

/// `∫₀ʰ a(t) b(t) dt` for two covariance kernels.
fn product_integral(a: Kernel, b: Kernel, h: f64, gamma: f64) -> f64 {
    let x = gamma * h;
    let da = a.order() as i32;
    let db = b.order() as i32;
    if x < SERIES_CUTOFF {
        // ∫₀ʰ t^{da+db} Σ_n (-γt)^n c_n dt with c the Cauchy product.
        let deg = da + db;
        let mut sum = 0.0;
        let mut pow = 1.0;
        for n in 0..MAX_SERIES_TERMS {
            let conv: f64 = (0..=n)
                .map(|i| a.series_coef(i) * b.series_coef(n - i))
                .sum();
            let term = conv * pow / (n as i32 + deg + 1) as f64;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            pow *= -x;
        }
        return h.powi(deg + 1) * sum;
    }
    let mut dimless = 0.0;
    for &(ca, ja, ka) in a.exp_poly() {
        for &(cb, jb, kb) in b.exp_poly() {
            dimless += ca * cb * exp_moment(ja + jb, ka + kb, x);
        }
    }
    dimless / gamma.powi(da + db + 1)
}

/// Σ̄ = 2γ·∫₀ʰ [ψ₀ ψ₁ φ₂ φ₃]ᵀ[ψ₀ ψ₁ φ₂ φ₃] dt.
pub fn klmc2_noise_cov(h: f64, gamma: f64) -> Result<Matrix4<f64>> {
    check_args(h, gamma)?;
    ensure(h > 0.0, || format!("step size must be positive, got {h}"))?;
    let mut out = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..=i {
            let v = 2.0 * gamma * product_integral(COV_KERNELS[i], COV_KERNELS[j], h, gamma);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Σ = 2γ·∫₀ʰ [ψ₀ ψ₁]ᵀ[ψ₀ ψ₁] dt; the leading block of [`klmc2_noise_cov`].
pub fn klmc_noise_cov(h: f64, gamma: f64) -> Result<Matrix2<f64>> {
    Ok(klmc2_noise_cov(h, gamma)?.fixed_view::<2, 2>(0, 0).into_owned())
}

/// Precomputed kernel values and noise factors for a fixed (γ, h).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCoefficients {
    pub gamma: f64,
    pub h: f64,
    pub psi0: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub phi2: f64,
    pub phi3: f64,
    /// Velocity/position noise covariance, ordered (v, θ).
    pub sigma_klmc: Matrix2<f64>,
    /// Ordered (ξ⁽¹⁾, ξ⁽²⁾, ξ⁽³⁾, ξ⁽⁴⁾) ↔ (ψ₀, ψ₁, φ₂, φ₃).
    pub sigma_klmc2: Matrix4<f64>,
    pub chol_klmc: Matrix2<f64>,
    pub chol_klmc2: Matrix4<f64>,
}

impl KernelCoefficients {
    pub fn new(gamma: f64, h: f64) -> Result<Self> {
        check_args(h, gamma)?;
        ensure(h > 0.0, || format!("step size must be positive, got {h}"))?;
        let sigma_klmc2 = klmc2_noise_cov(h, gamma)?;
        let sigma_klmc = sigma_klmc2.fixed_view::<2, 2>(0, 0).into_owned();
        let l4 = chol_factor(&DMatrix::from_iterator(4, 4, sigma_klmc2.iter().copied()))?;
        let l2 = chol_factor(&DMatrix::from_iterator(2, 2, sigma_klmc.iter().copied()))?;
        Ok(Self {
            gamma,
            h,
            psi0: Kernel::Psi(0).eval(h, gamma),
            psi1: Kernel::Psi(1).eval(h, gamma),
            psi2: Kernel::Psi(2).eval(h, gamma),
            phi2: Kernel::Phi(2).eval(h, gamma),
            phi3: Kernel::Phi(3).eval(h, gamma),
            sigma_klmc,
            sigma_klmc2,
            chol_klmc: Matrix2::from_iterator(l2.iter().copied()),
            chol_klmc2: Matrix4::from_iterator(l4.iter().copied()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn psi_at_zero() {
        assert_eq!(psi(0, 0.0, 3.0).unwrap(), 1.0);
        assert_eq!(psi(1, 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(phi(2, 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn psi1_small_argument() {
        let t = 1e-6;
        let v = psi(1, t, 0.5).unwrap();
        assert!(rel(v, t) < 1e-6);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(psi(0, -1.0, 1.0).is_err());
        assert!(psi(0, 1.0, 0.0).is_err());
        assert!(psi(3, 1.0, 1.0).is_err());
        assert!(phi(1, 1.0, 1.0).is_err());
        assert!(klmc_noise_cov(0.0, 1.0).is_err());
    }

    #[test]
    fn phi2_closed_form_value() {
        // (ψ₁(1) - e^{-1}) / γ at γ = 1
        let expected = (1.0 - (-1.0f64).exp()) - (-1.0f64).exp();
        assert!(rel(phi(2, 1.0, 1.0).unwrap(), expected) < 1e-15);
    }

    #[test]
    fn series_and_closed_form_overlap() {
        for &x in &[0.3f64, 0.6, 0.9, 0.99, 1.01, 1.5] {
            let gamma: f64 = 2.0;
            let t = x / gamma;
            for kern in [Kernel::Psi(1), Kernel::Psi(2), Kernel::Phi(2), Kernel::Phi(3)] {
                let e = (-x).exp();
                let em1 = (-x).exp_m1();
                let closed = match kern {
                    Kernel::Psi(1) => -em1 / gamma,
                    Kernel::Psi(2) => (x + em1) / gamma.powi(2),
                    Kernel::Phi(2) => (-em1 - x * e) / gamma.powi(2),
                    Kernel::Phi(3) => (x + 2.0 * em1 + x * e) / gamma.powi(3),
                    _ => unreachable!(),
                };
                assert!(rel(kern.eval(t, gamma), closed) < 1e-12, "{kern:?} x={x}");
            }
        }
    }

    #[test]
    fn velocity_variance_is_exact_ou() {
        for &(h, g) in &[(0.1, 2.0), (1e-5, 1.0), (3.0, 0.7), (50.0, 5.0)] {
            let s = klmc_noise_cov(h, g).unwrap();
            let expected = -(-2.0 * g * h).exp_m1();
            assert!(rel(s[(0, 0)], expected) < 1e-12, "h={h} g={g}");
        }
    }

    #[test]
    fn stationary_velocity_limit() {
        let s = klmc_noise_cov(100.0, 10.0).unwrap();
        assert!((s[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn leading_block_is_bit_identical() {
        for &(h, g) in &[(1e-4, 1.0), (0.05, 3.0), (1.0, 10.0)] {
            let c = KernelCoefficients::new(g, h).unwrap();
            let lead = c.sigma_klmc2.fixed_view::<2, 2>(0, 0).into_owned();
            assert_eq!(lead, c.sigma_klmc);
            let lead_l = c.chol_klmc2.fixed_view::<2, 2>(0, 0).into_owned();
            assert_eq!(lead_l, c.chol_klmc);
        }
    }

    #[test]
    fn phi2_matches_convolution_quadrature() {
        let (t, g) = (0.7, 1.3);
        let q = integrate(|s| (-g * (t - s)).exp() * psi(1, s, g).unwrap(), 0.0, t).unwrap();
        assert!(rel(phi(2, t, g).unwrap(), q) < 1e-12);
    }
}
