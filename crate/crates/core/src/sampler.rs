//! Discrete samplers (LMC, KLMC, KLMC2), the exact kinetic transition for
//! diagonal quadratic targets, and an Euler–Maruyama integrator of the
//! continuous kinetic diffusion.
//!
//! Every step consumes its standard normals column-major from a `p × K`
//! block: column 0 for all coordinates, then column 1, and so on. KLMC uses
//! `K = 2`, KLMC2 `K = 4`, so under a shared counter-based stream the first
//! `2p` normals of a KLMC2 step are exactly the normals of the KLMC step.

use std::io::Write;

use log::warn;
use nalgebra::{DVector, Matrix2, SMatrix};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::kernel::KernelCoefficients;
use crate::quadrature;
use crate::rng::{fill_normals, NoiseStream};
use crate::target::TargetModel;

/// Velocity/position pair `(v, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub theta: DVector<f64>,
    pub v: DVector<f64>,
}

impl KineticState {
    pub fn new(theta: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        if theta.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: v.len(),
            });
        }
        Ok(Self { theta, v })
    }

    pub fn at_rest(theta: DVector<f64>) -> Self {
        let v = DVector::zeros(theta.len());
        Self { theta, v }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// `X = Z Lᵀ` for a `p × K` block `Z` stored column-major in `z`. Only the
/// lower triangle of `L` is read, so column `a` of `X` depends on columns
/// `0..=a` of `Z` alone.
fn correlate<const K: usize>(chol: &SMatrix<f64, K, K>, z: &[f64], p: usize) -> Vec<DVector<f64>> {
    (0..K)
        .map(|a| {
            DVector::from_fn(p, |i, _| {
                let mut acc = 0.0;
                for b in 0..=a {
                    acc += chol[(a, b)] * z[b * p + i];
                }
                acc
            })
        })
        .collect()
}

/// One Langevin Monte Carlo step `θ − h∇f(θ) + √(2h) z`.
pub fn lmc_step<R: Rng + ?Sized>(
    model: &dyn TargetModel,
    theta: &DVector<f64>,
    h: f64,
    rng: &mut R,
) -> DVector<f64> {
    let p = theta.len();
    let mut z = vec![0.0; p];
    fill_normals(rng, &mut z);
    lmc_step_with_normals(model, theta, h, &z)
}

pub fn lmc_step_with_normals(
    model: &dyn TargetModel,
    theta: &DVector<f64>,
    h: f64,
    z: &[f64],
) -> DVector<f64> {
    let g = model.grad(theta);
    let scale = (2.0 * h).sqrt();
    theta - g * h + DVector::from_column_slice(z) * scale
}

/// One KLMC step. Draws `2p` normals.
pub fn klmc_step<R: Rng + ?Sized>(
    model: &dyn TargetModel,
    state: &KineticState,
    coeffs: &KernelCoefficients,
    rng: &mut R,
) -> KineticState {
    let mut z = vec![0.0; 2 * state.dim()];
    fill_normals(rng, &mut z);
    klmc_step_with_normals(model, state, coeffs, &z)
}

/// KLMC step driven by an explicit column-major `p × 2` normal block.
pub fn klmc_step_with_normals(
    model: &dyn TargetModel,
    state: &KineticState,
    coeffs: &KernelCoefficients,
    z: &[f64],
) -> KineticState {
    let p = state.dim();
    let g = model.grad(&state.theta);
    let xi = correlate(&coeffs.chol_klmc, z, p);
    let v = (&state.v * coeffs.psi0 - &g * coeffs.psi1) + &xi[0];
    let theta = ((&state.theta + &state.v * coeffs.psi1) - &g * coeffs.psi2) + &xi[1];
    KineticState { theta, v }
}

/// One second-order KLMC step. Draws `4p` normals and uses three
/// Hessian-vector products; the Hessian is never formed.
pub fn klmc2_step<R: Rng + ?Sized>(
    model: &dyn TargetModel,
    state: &KineticState,
    coeffs: &KernelCoefficients,
    rng: &mut R,
) -> Result<KineticState> {
    if !model.has_hessian() {
        return Err(Error::Unsupported(
            "KLMC2 needs Hessian-vector products".into(),
        ));
    }
    let mut z = vec![0.0; 4 * state.dim()];
    fill_normals(rng, &mut z);
    klmc2_step_with_normals(model, state, coeffs, &z)
}

pub fn klmc2_step_with_normals(
    model: &dyn TargetModel,
    state: &KineticState,
    coeffs: &KernelCoefficients,
    z: &[f64],
) -> Result<KineticState> {
    let p = state.dim();
    let unsupported = || Error::Unsupported("KLMC2 needs Hessian-vector products".into());
    let g = model.grad(&state.theta);
    let xi = correlate(&coeffs.chol_klmc2, z, p);
    let hv = model.hvp(&state.theta, &state.v).ok_or_else(unsupported)?;
    let h_xi3 = model.hvp(&state.theta, &xi[2]).ok_or_else(unsupported)?;
    let h_xi4 = model.hvp(&state.theta, &xi[3]).ok_or_else(unsupported)?;
    let v = ((&state.v * coeffs.psi0 - &g * coeffs.psi1) - &hv * coeffs.phi2) + (&xi[0] - h_xi3);
    let theta = (((&state.theta + &state.v * coeffs.psi1) - &g * coeffs.psi2) - &hv * coeffs.phi3)
        + (&xi[1] - h_xi4);
    Ok(KineticState { theta, v })
}

/// `exp(tA)` for `A = [[-γ, -λ], [1, 0]]` acting on `(v, θ)`.
///
/// With `μ² = γ²/4 − λ`, `exp(tA) = e^{-γt/2} [c(t) I + s(t)(A + γ/2 I)]`
/// where `(c, s)` is `(cosh μt, sinh(μt)/μ)`, `(1, t)` or
/// `(cos ωt, sin(ωt)/ω)` with `ω² = −μ²` in the over-, critically and
/// under-damped regimes.
pub fn kinetic_propagator(gamma: f64, lambda: f64, t: f64) -> Matrix2<f64> {
    let half = 0.5 * gamma;
    let disc = half * half - lambda;
    let (c, s) = if disc > 0.0 {
        let mu = disc.sqrt();
        // e^{-γt/2}cosh(μt) and e^{-γt/2}sinh(μt)/μ without overflow
        let ep = ((mu - half) * t).exp();
        let em = ((-mu - half) * t).exp();
        (0.5 * (ep + em), 0.5 * (ep - em) / mu)
    } else if disc == 0.0 {
        let d = (-half * t).exp();
        (d, t * d)
    } else {
        let omega = (-disc).sqrt();
        let d = (-half * t).exp();
        (d * (omega * t).cos(), d * (omega * t).sin() / omega)
    };
    let shifted = Matrix2::new(-half, -lambda, 1.0, half);
    Matrix2::identity() * c + shifted * s
}

/// Exact one-step transition of the linear kinetic diffusion on a diagonal
/// quadratic target, precomputed per coordinate.
#[derive(Debug, Clone)]
pub struct ExactGaussianKernel {
    pub gamma: f64,
    pub h: f64,
    pub propagators: Vec<Matrix2<f64>>,
    pub covariances: Vec<Matrix2<f64>>,
    pub factors: Vec<Matrix2<f64>>,
}

impl ExactGaussianKernel {
    pub fn new(lambdas: &[f64], gamma: f64, h: f64) -> Result<Self> {
        ensure(gamma > 0.0 && gamma.is_finite(), || {
            format!("friction must be positive, got {gamma}")
        })?;
        ensure(h > 0.0 && h.is_finite(), || {
            format!("step size must be positive, got {h}")
        })?;
        let mut propagators = Vec::with_capacity(lambdas.len());
        let mut covariances = Vec::with_capacity(lambdas.len());
        let mut factors = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            ensure(lambda > 0.0, || format!("curvature must be positive, got {lambda}"))?;
            let cov = exact_transition_covariance(gamma, lambda, h)?;
            let dyn_cov = nalgebra::DMatrix::from_iterator(2, 2, cov.iter().copied());
            let l = crate::linalg::chol_factor(&dyn_cov)?;
            propagators.push(kinetic_propagator(gamma, lambda, h));
            covariances.push(cov);
            factors.push(Matrix2::from_iterator(l.iter().copied()));
        }
        Ok(Self {
            gamma,
            h,
            propagators,
            covariances,
            factors,
        })
    }

    pub fn step<R: Rng + ?Sized>(&self, state: &KineticState, rng: &mut R) -> KineticState {
        let mut z = vec![0.0; 2 * state.dim()];
        fill_normals(rng, &mut z);
        self.step_with_normals(state, &z)
    }

    pub fn step_with_normals(&self, state: &KineticState, z: &[f64]) -> KineticState {
        let p = state.dim();
        let mut v = DVector::zeros(p);
        let mut theta = DVector::zeros(p);
        for i in 0..p {
            let e = &self.propagators[i];
            let l = &self.factors[i];
            let (vi, ti) = (state.v[i], state.theta[i]);
            v[i] = e[(0, 0)] * vi + e[(0, 1)] * ti + l[(0, 0)] * z[i];
            theta[i] = e[(1, 0)] * vi + e[(1, 1)] * ti + l[(1, 0)] * z[i] + l[(1, 1)] * z[p + i];
        }
        KineticState { theta, v }
    }
}

/// `∫₀ʰ exp(sA) diag(2γ, 0) exp(sAᵀ) ds` by adaptive Gauss–Legendre.
pub fn exact_transition_covariance(gamma: f64, lambda: f64, h: f64) -> Result<Matrix2<f64>> {
    let mut out = [0.0; 3];
    quadrature::integrate_vec(
        |s, o| {
            let e = kinetic_propagator(gamma, lambda, s);
            let (a, b) = (e[(0, 0)], e[(1, 0)]);
            o[0] = 2.0 * gamma * a * a;
            o[1] = 2.0 * gamma * a * b;
            o[2] = 2.0 * gamma * b * b;
        },
        0.0,
        h,
        &mut out,
    )?;
    Ok(Matrix2::new(out[0], out[1], out[1], out[2]))
}

/// Exact kinetic transition over time `h` for a diagonal quadratic target.
pub fn exact_gaussian_kinetic_step<R: Rng + ?Sized>(
    lambdas: &[f64],
    state: &KineticState,
    gamma: f64,
    h: f64,
    rng: &mut R,
) -> Result<KineticState> {
    if lambdas.len() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: lambdas.len(),
            got: state.dim(),
        });
    }
    Ok(ExactGaussianKernel::new(lambdas, gamma, h)?.step(state, rng))
}

/// Source of Brownian increments `W_{t+dt} − W_t` for the fine-grid
/// integrator.
pub trait BrownianSource {
    fn next_increment(&mut self, dt: f64, out: &mut DVector<f64>);
}

/// Draws `√dt·z` from a generator and optionally records every increment.
pub struct GaussianIncrements<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    record: Option<Vec<DVector<f64>>>,
}

impl<'a, R: Rng + ?Sized> GaussianIncrements<'a, R> {
    pub fn new(rng: &'a mut R) -> Self {
        Self { rng, record: None }
    }

    pub fn recording(rng: &'a mut R) -> Self {
        Self {
            rng,
            record: Some(Vec::new()),
        }
    }

    pub fn into_record(self) -> Vec<DVector<f64>> {
        self.record.unwrap_or_default()
    }
}

impl<R: Rng + ?Sized> BrownianSource for GaussianIncrements<'_, R> {
    fn next_increment(&mut self, dt: f64, out: &mut DVector<f64>) {
        fill_normals(self.rng, out.as_mut_slice());
        *out *= dt.sqrt();
        if let Some(rec) = self.record.as_mut() {
            rec.push(out.clone());
        }
    }
}

/// Replays recorded increments multiplied by `scale`. Panics when the
/// record is exhausted.
pub struct ReplayIncrements<'a> {
    increments: &'a [DVector<f64>],
    scale: f64,
    cursor: usize,
}

impl<'a> ReplayIncrements<'a> {
    pub fn new(increments: &'a [DVector<f64>], scale: f64) -> Self {
        Self {
            increments,
            scale,
            cursor: 0,
        }
    }
}

impl BrownianSource for ReplayIncrements<'_> {
    fn next_increment(&mut self, _dt: f64, out: &mut DVector<f64>) {
        let inc = &self.increments[self.cursor];
        self.cursor += 1;
        out.copy_from(inc);
        *out *= self.scale;
    }
}

/// One Euler–Maruyama substep of
/// `dV = −(γV + u∇f(L))dt + √(2γu) dW`, `dL = V dt`.
pub fn euler_maruyama_substep(
    model: &dyn TargetModel,
    state: &KineticState,
    gamma: f64,
    u: f64,
    dt: f64,
    dw: &DVector<f64>,
) -> KineticState {
    let g = model.grad(&state.theta);
    let v = &state.v - (&state.v * gamma + g * u) * dt + dw * (2.0 * gamma * u).sqrt();
    let theta = &state.theta + &state.v * dt;
    KineticState { theta, v }
}

/// Number of substeps and their exact length for a horizon.
pub fn substep_grid(total_time: f64, substep: f64) -> Result<(usize, f64)> {
    ensure(total_time >= 0.0 && total_time.is_finite(), || {
        format!("total time must be finite and non-negative, got {total_time}")
    })?;
    ensure(substep > 0.0 && substep.is_finite(), || {
        format!("substep must be positive, got {substep}")
    })?;
    let n = (total_time / substep).round() as usize;
    if n == 0 {
        return Ok((0, 0.0));
    }
    Ok((n, total_time / n as f64))
}

/// Euler–Maruyama path of the kinetic diffusion with inverse mass `u`.
pub fn fine_grid_integrate(
    model: &dyn TargetModel,
    state: &KineticState,
    gamma: f64,
    u: f64,
    total_time: f64,
    substep: f64,
    noise: &mut dyn BrownianSource,
) -> Result<KineticState> {
    ensure(gamma > 0.0 && u > 0.0, || {
        format!("friction and inverse mass must be positive, got {gamma}, {u}")
    })?;
    let (n, dt) = substep_grid(total_time, substep)?;
    let mut s = state.clone();
    let mut dw = DVector::zeros(state.dim());
    for _ in 0..n {
        noise.next_increment(dt, &mut dw);
        s = euler_maruyama_substep(model, &s, gamma, u, dt, &dw);
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Algorithm {
    Lmc,
    Klmc,
    Klmc2,
    ExactGaussian,
    FineGrid,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Algorithm::Lmc => "LMC",
            Algorithm::Klmc => "KLMC",
            Algorithm::Klmc2 => "KLMC2",
            Algorithm::ExactGaussian => "EXACT_GAUSSIAN",
            Algorithm::FineGrid => "FINE_GRID",
        };
        f.write_str(s)
    }
}

/// Initial law: point mass at θ₀ for the position, standard normal (or zero)
/// velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InitSpec {
    /// Defaults to the model's minimizer.
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    /// Start at zero velocity instead of `N(0, I)`.
    #[serde(default)]
    pub zero_velocity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    #[serde(default = "one")]
    pub u: f64,
    pub h: f64,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default = "one_usize")]
    pub thin: usize,
    /// Euler–Maruyama substep for `FINE_GRID`; defaults to `h/10`.
    #[serde(default)]
    pub substep: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl SamplerConfig {
    pub fn new(algorithm: Algorithm, gamma: f64, h: f64, steps: usize, seed: u64) -> Self {
        Self {
            algorithm,
            gamma,
            u: 1.0,
            h,
            steps,
            seed,
            stream: 0,
            init: InitSpec::default(),
            thin: 1,
            substep: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.h > 0.0 && self.h.is_finite(), || {
            format!("h must be positive, got {}", self.h)
        })?;
        ensure(self.gamma > 0.0 && self.gamma.is_finite(), || {
            format!("gamma must be positive, got {}", self.gamma)
        })?;
        ensure(self.u > 0.0 && self.u.is_finite(), || {
            format!("u must be positive, got {}", self.u)
        })?;
        ensure(self.thin >= 1, || "thin must be at least 1".into())?;
        if let Some(s) = self.substep {
            ensure(s > 0.0 && s <= self.h, || {
                format!("substep must lie in (0, h], got {s}")
            })?;
        }
        Ok(())
    }

    /// Caveats about the convergence guarantees for this configuration on `model`.
    pub fn warnings(&self, model: &dyn TargetModel) -> Vec<String> {
        let c = model.constants();
        let p = model.dim() as f64;
        let mut out = Vec::new();
        match self.algorithm {
            Algorithm::Klmc => {
                let cap = c.m / (4.0 * self.gamma * c.big_m);
                if self.h > cap {
                    out.push(format!(
                        "h = {} exceeds the KLMC step-size cap m/(4γM) = {cap}",
                        self.h
                    ));
                }
            }
            Algorithm::Klmc2 => {
                let mut cap = c.m / (5.0 * self.gamma * c.big_m);
                if c.m2 > 0.0 {
                    cap = cap.min(c.m / (4.0 * (5.0 * p).sqrt() * c.m2));
                }
                if self.h > cap {
                    out.push(format!(
                        "h = {} exceeds the KLMC2 step-size cap m/(5γM) ∧ m/(4√(5p)M₂) = {cap}",
                        self.h
                    ));
                }
            }
            _ => {}
        }
        if matches!(self.algorithm, Algorithm::Klmc | Algorithm::Klmc2) {
            let floor = (c.m + c.big_m).sqrt();
            if self.gamma < floor {
                out.push(format!(
                    "γ = {} violates γ ≥ √(m+M) = {floor}",
                    self.gamma
                ));
            }
        }
        out
    }
}

/// Thinned chain snapshots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub step_index: Vec<usize>,
    pub states: Vec<KineticState>,
}

impl Trajectory {
    fn push(&mut self, k: usize, s: &KineticState) {
        debug_assert!(self.step_index.last().is_none_or(|&last| last < k));
        self.step_index.push(k);
        self.states.push(s.clone());
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&KineticState> {
        self.states.last()
    }

    /// CSV with header `step, theta_1..theta_p, v_1..v_p`. Floats use the
    /// shortest representation that round-trips.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let p = self.states.first().map_or(0, |s| s.dim());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string()];
        header.extend((1..=p).map(|i| format!("theta_{i}")));
        header.extend((1..=p).map(|i| format!("v_{i}")));
        w.write_record(&header)?;
        for (k, s) in self.step_index.iter().zip(&self.states) {
            let mut row = vec![k.to_string()];
            row.extend(s.theta.iter().map(|x| x.to_string()));
            row.extend(s.v.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Initial state for a chain: θ₀ from the config (or the minimizer) and
/// `v₀ ~ N(0, I)` drawn from counter 0 of the stream.
pub fn initial_state(
    config: &SamplerConfig,
    model: &dyn TargetModel,
    stream: &NoiseStream,
) -> Result<KineticState> {
    let p = model.dim();
    let theta = match &config.init.theta0 {
        Some(t) => {
            if t.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: t.len(),
                });
            }
            DVector::from_column_slice(t)
        }
        None => model.minimizer().unwrap_or_else(|| DVector::zeros(p)),
    };
    let mut v = DVector::zeros(p);
    if !config.init.zero_velocity && config.algorithm != Algorithm::Lmc {
        fill_normals(&mut stream.at(0), v.as_mut_slice());
    }
    Ok(KineticState { theta, v })
}

/// Per-algorithm stepping state shared across a chain.
enum Stepper {
    Lmc,
    Klmc(KernelCoefficients),
    Klmc2(KernelCoefficients),
    Exact(ExactGaussianKernel),
    FineGrid { substep: f64 },
}

impl Stepper {
    fn new(config: &SamplerConfig, model: &dyn TargetModel) -> Result<Self> {
        Ok(match config.algorithm {
            Algorithm::Lmc => Stepper::Lmc,
            Algorithm::Klmc => Stepper::Klmc(KernelCoefficients::new(config.gamma, config.h)?),
            Algorithm::Klmc2 => {
                if !model.has_hessian() {
                    return Err(Error::Unsupported(
                        "KLMC2 needs Hessian-vector products".into(),
                    ));
                }
                Stepper::Klmc2(KernelCoefficients::new(config.gamma, config.h)?)
            }
            Algorithm::ExactGaussian => {
                let lambdas = model.diagonal_curvatures().ok_or_else(|| {
                    Error::Unsupported("exact Gaussian transition needs a diagonal quadratic target".into())
                })?;
                Stepper::Exact(ExactGaussianKernel::new(lambdas, config.gamma, config.h)?)
            }
            Algorithm::FineGrid => Stepper::FineGrid {
                substep: config.substep.unwrap_or(config.h / 10.0),
            },
        })
    }

    fn step(
        &self,
        config: &SamplerConfig,
        model: &dyn TargetModel,
        state: &KineticState,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<KineticState> {
        Ok(match self {
            Stepper::Lmc => KineticState {
                theta: lmc_step(model, &state.theta, config.h, rng),
                v: state.v.clone(),
            },
            Stepper::Klmc(c) => klmc_step(model, state, c, rng),
            Stepper::Klmc2(c) => klmc2_step(model, state, c, rng)?,
            Stepper::Exact(k) => k.step(state, rng),
            Stepper::FineGrid { substep } => {
                let mut noise = GaussianIncrements::new(rng);
                fine_grid_integrate(model, state, config.gamma, config.u, config.h, *substep, &mut noise)?
            }
        })
    }
}

/// Runs one chain on the stream `(config.seed, config.stream)`.
pub fn run_chain(config: &SamplerConfig, model: &dyn TargetModel) -> Result<Trajectory> {
    run_chain_on(config, model, &NoiseStream::new(config.seed, config.stream))
}

/// Runs one chain on an explicit stream. Step `k` reads counter `k`.
pub fn run_chain_on(
    config: &SamplerConfig,
    model: &dyn TargetModel,
    stream: &NoiseStream,
) -> Result<Trajectory> {
    config.validate()?;
    for w in config.warnings(model) {
        warn!("{w}");
    }
    let stepper = Stepper::new(config, model)?;
    let mut state = initial_state(config, model, stream)?;
    let mut traj = Trajectory::default();
    traj.push(0, &state);
    for k in 1..=config.steps {
        let mut rng = stream.at(k as u64);
        state = stepper.step(config, model, &state, &mut rng)?;
        if !state.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "chain diverged at step {k}; reduce h"
            )));
        }
        if k % config.thin == 0 || k == config.steps {
            traj.push(k, &state);
        }
    }
    Ok(traj)
}

/// Runs `n_chains` independent chains; chain `c` uses the stream split from
/// `(config.stream, c)`. Results are ordered by chain index.
pub fn run_chains(
    config: &SamplerConfig,
    model: &dyn TargetModel,
    n_chains: usize,
) -> Result<Vec<Trajectory>> {
    (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let stream = NoiseStream::for_chain(config.seed, config.stream, c as u64);
            run_chain_on(config, model, &stream)
        })
        .collect()
}
