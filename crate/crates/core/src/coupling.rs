//! Contraction-rate laboratory for the kinetic diffusion.
//!
//! Two copies of the diffusion driven by the same Brownian path, started at
//! the same velocity, differ by a process that solves
//! `d/dt (ΔV, ΔL) = [[−γ, −H_t], [I, 0]] (ΔV, ΔL)`. For quadratic `f` the
//! matrix is constant and the difference is deterministic.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::{fill_normals, NoiseStream};
use crate::sampler::{euler_maruyama_substep, substep_grid, KineticState};
use crate::target::TargetModel;

/// Piecewise optimal contraction rate in the position/velocity W₂ bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionPrediction {
    pub gamma: f64,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub v_opt: f64,
    pub beta: f64,
    pub alpha: f64,
}

/// Prefactor `√(2((γ−v)² + v²)) / (γ − 2v)` of the bound at `v`.
pub fn bound_prefactor(v: f64, gamma: f64) -> f64 {
    (2.0 * ((gamma - v).powi(2) + v * v)).sqrt() / (gamma - 2.0 * v)
}

/// Rate delivered by the bound at `v ∈ [0, γ/2)`:
/// `−[(v² − m) ∨ (M − (γ−v)²)] / (γ − 2v)`.
pub fn bound_rate(v: f64, gamma: f64, m: f64, big_m: f64) -> f64 {
    -((v * v - m).max(big_m - (gamma - v).powi(2))) / (gamma - 2.0 * v)
}

/// Closed-form optimum of [`bound_rate`] over `v`.
pub fn predicted_rate(gamma: f64, m: f64, big_m: f64) -> Result<ContractionPrediction> {
    ensure(gamma > 0.0 && gamma.is_finite(), || format!("gamma must be positive, got {gamma}"))?;
    ensure(m > 0.0 && m <= big_m, || format!("need 0 < m <= M, got m={m}, M={big_m}"))?;
    let g2 = gamma * gamma;
    if g2 <= big_m {
        return Err(Error::NoContraction {
            gamma_sq: g2,
            big_m,
        });
    }
    let (v_opt, beta) = if g2 <= m + big_m {
        (0.0, (g2 - big_m) / gamma)
    } else if g2 < 3.0 * m + big_m {
        let root = (2.0 * (m + big_m) - g2).sqrt();
        (0.5 * (gamma - root), 0.5 * gamma - (big_m - m) / (2.0 * root))
    } else {
        let v = 0.5 * (gamma - (g2 - 4.0 * m).sqrt());
        (v, v)
    };
    Ok(ContractionPrediction {
        gamma,
        m,
        big_m,
        v_opt,
        beta,
        alpha: bound_prefactor(v_opt, gamma),
    })
}

/// Numerical maximum of [`bound_rate`] over `[0, γ/2)`: dense scan, then
/// golden-section refinement around the best grid point.
pub fn numeric_best_rate(gamma: f64, m: f64, big_m: f64) -> (f64, f64) {
    let hi = 0.5 * gamma * (1.0 - 1e-12);
    let n = 4000;
    let f = |v: f64| bound_rate(v, gamma, m, big_m);
    let (mut best_i, mut best) = (0, f(0.0));
    for i in 1..=n {
        let val = f(hi * i as f64 / n as f64);
        if val > best {
            best = val;
            best_i = i;
        }
    }
    let step = hi / n as f64;
    let mut a = (best_i as f64 - 1.0).max(0.0) * step;
    let mut b = ((best_i as f64 + 1.0) * step).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    for _ in 0..200 {
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
    }
    let v = 0.5 * (a + b);
    let candidates = [(best_i as f64 * step, best), (v, f(v))];
    candidates
        .into_iter()
        .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
}

/// `−max Re λ` of `[[−γ, −λ], [1, 0]]`.
pub fn eigen_rate_oracle(gamma: f64, lambda: f64) -> f64 {
    let disc = gamma * gamma - 4.0 * lambda;
    if disc >= 0.0 {
        0.5 * (gamma - disc.sqrt())
    } else {
        0.5 * gamma
    }
}

/// Least-squares fit of `log d(t) ≈ c − rate·t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    /// RMS residual of the fit in log space.
    pub residual: f64,
    pub n_points: usize,
}

/// Fits the decay rate on samples with `t ∈ [t_from, ∞)`.
pub fn fit_decay_rate(times: &[f64], log_distance: &[f64], t_from: f64) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(log_distance)
        .filter(|(t, y)| **t >= t_from && y.is_finite())
        .map(|(t, y)| (*t, *y))
        .collect();
    let n = pts.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "only {n} usable points in the fitting window"
        )));
    }
    let nf = n as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - tm) * (y - ym)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - tm) * (t - tm)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let ss: f64 = pts
        .iter()
        .map(|(t, y)| (y - intercept - slope * t).powi(2))
        .sum();
    Ok(RateFit {
        rate: -slope,
        intercept,
        residual: (ss / nf).sqrt(),
        n_points: n,
    })
}

/// Numerical settings for [`difference_ode_rate_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferenceOdeOptions {
    /// RK4 step; defaults to `min(1e-3, 0.05/γ, 0.05/√λmax)`.
    pub dt: Option<f64>,
    /// Number of evenly spaced samples of the log distance.
    pub n_samples: usize,
    pub residual_threshold: f64,
}

impl Default for DifferenceOdeOptions {
    fn default() -> Self {
        Self {
            dt: None,
            n_samples: 600,
            residual_threshold: 1e-3,
        }
    }
}

/// Decay trace and fitted rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    pub times: Vec<f64>,
    /// `log ‖L_t − L'_t‖` (position difference).
    pub log_distance: Vec<f64>,
    pub fit: RateFit,
}

/// Default initial position difference: unit entries on the coordinates of
/// smallest curvature.
pub fn slow_direction(lambdas: &[f64]) -> Vec<f64> {
    let min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    lambdas.iter().map(|&l| if l == min { 1.0 } else { 0.0 }).collect()
}

/// Measured decay rate of the coupled difference on a diagonal quadratic.
pub fn difference_ode_rate(lambdas: &[f64], gamma: f64, t_max: f64) -> Result<DecayTrace> {
    difference_ode_rate_with(
        lambdas,
        gamma,
        t_max,
        &slow_direction(lambdas),
        DifferenceOdeOptions::default(),
    )
}

/// RK4 integration of the difference ODE from `(ΔV, ΔL) = (0, init)`;
/// the rate is fitted on `t ∈ [2t_max/3, t_max]`.
pub fn difference_ode_rate_with(
    lambdas: &[f64],
    gamma: f64,
    t_max: f64,
    init_position_diff: &[f64],
    opts: DifferenceOdeOptions,
) -> Result<DecayTrace> {
    ensure(!lambdas.is_empty() && lambdas.iter().all(|&l| l > 0.0), || {
        "curvatures must be positive".into()
    })?;
    ensure(init_position_diff.len() == lambdas.len(), || {
        "initial difference has wrong dimension".into()
    })?;
    ensure(gamma > 0.0 && t_max > 0.0, || "gamma and t_max must be positive".into())?;
    let lmax = lambdas.iter().copied().fold(0.0, f64::max);
    let dt_target = opts.dt.unwrap_or(1e-3f64.min(0.05 / gamma).min(0.05 / lmax.sqrt()));
    let n_samples = opts.n_samples.max(3);
    let steps_per_sample = ((t_max / n_samples as f64) / dt_target).ceil().max(1.0) as usize;
    let dt = t_max / (n_samples * steps_per_sample) as f64;

    let p = lambdas.len();
    let mut dv = vec![0.0; p];
    let mut dl = init_position_diff.to_vec();
    let mut times = Vec::with_capacity(n_samples + 1);
    let mut logd = Vec::with_capacity(n_samples + 1);
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt().ln();
    times.push(0.0);
    logd.push(norm(&dl));
    for s in 1..=n_samples {
        for _ in 0..steps_per_sample {
            for i in 0..p {
                let (v, l) = rk4_linear(dv[i], dl[i], gamma, lambdas[i], dt);
                dv[i] = v;
                dl[i] = l;
            }
        }
        times.push(s as f64 * steps_per_sample as f64 * dt);
        logd.push(norm(&dl));
    }
    let fit = fit_decay_rate(&times, &logd, 2.0 * t_max / 3.0)?;
    if fit.residual > opts.residual_threshold {
        return Err(Error::NotAsymptotic {
            residual: fit.residual,
            threshold: opts.residual_threshold,
        });
    }
    Ok(DecayTrace {
        times,
        log_distance: logd,
        fit,
    })
}

/// One RK4 step of `v' = −γv − λl`, `l' = v`.
fn rk4_linear(v: f64, l: f64, gamma: f64, lambda: f64, dt: f64) -> (f64, f64) {
    let f = |v: f64, l: f64| (-gamma * v - lambda * l, v);
    let (k1v, k1l) = f(v, l);
    let (k2v, k2l) = f(v + 0.5 * dt * k1v, l + 0.5 * dt * k1l);
    let (k3v, k3l) = f(v + 0.5 * dt * k2v, l + 0.5 * dt * k2l);
    let (k4v, k4l) = f(v + dt * k3v, l + dt * k3l);
    (
        v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        l + dt / 6.0 * (k1l + 2.0 * k2l + 2.0 * k3l + k4l),
    )
}

/// Settings for [`coupled_stochastic_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledOptions {
    /// Record the squared distance every this many substeps.
    pub record_every: usize,
    pub residual_threshold: f64,
    pub bootstrap_resamples: usize,
    /// Size of the initial position offset.
    pub offset: f64,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        Self {
            record_every: 50,
            residual_threshold: 1e-3,
            bootstrap_resamples: 200,
            offset: 1.0,
        }
    }
}

/// Result of a synchronous-coupling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRate {
    pub times: Vec<f64>,
    pub mean_sq_distance: Vec<f64>,
    pub fit: RateFit,
    /// Bootstrap standard error of the rate over pairs.
    pub std_error: f64,
}

impl CoupledRate {
    pub fn rate(&self) -> f64 {
        self.fit.rate
    }

    /// `log √(mean squared distance)`.
    pub fn log_distance(&self) -> Vec<f64> {
        self.mean_sq_distance.iter().map(|d| 0.5 * d.ln()).collect()
    }
}

/// Unit direction of least curvature at the minimizer (first coordinate
/// when the model has no Hessian).
pub fn initial_offset_direction(model: &dyn TargetModel) -> DVector<f64> {
    let p = model.dim();
    let mut e1 = DVector::zeros(p);
    e1[0] = 1.0;
    if let Some(lambdas) = model.diagonal_curvatures() {
        return DVector::from_vec(slow_direction(lambdas)).normalize();
    }
    let Some(x0) = model.minimizer() else {
        return e1;
    };
    let mut hess = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut ej = DVector::zeros(p);
        ej[j] = 1.0;
        match model.hvp(&x0, &ej) {
            Some(col) => hess.set_column(j, &col),
            None => return e1,
        }
    }
    let hess = 0.5 * (&hess + hess.transpose());
    let eig = hess.symmetric_eigen();
    let imin = eig.eigenvalues.imin();
    eig.eigenvectors.column(imin).into_owned()
}

/// Squared position distance of one synchronously coupled pair, recorded
/// every `record_every` substeps (index 0 is the initial offset).
pub fn coupled_pair_trace(
    model: &dyn TargetModel,
    gamma: f64,
    h_fine: f64,
    t_max: f64,
    record_every: usize,
    offset: f64,
    stream: &NoiseStream,
) -> Result<Vec<f64>> {
    let (n, dt) = substep_grid(t_max, h_fine)?;
    let p = model.dim();
    let c = model.constants();
    let center = model.minimizer().unwrap_or_else(|| DVector::zeros(p));
    let mut rng = stream.at(0);
    let mut z = vec![0.0; 2 * p];
    fill_normals(&mut rng, &mut z);
    let v0 = DVector::from_column_slice(&z[..p]);
    let theta0 = &center + DVector::from_column_slice(&z[p..]) / c.m.sqrt();
    let dir = initial_offset_direction(model);
    let mut a = KineticState::new(theta0.clone(), v0.clone())?;
    let mut b = KineticState::new(theta0 + dir * offset, v0)?;
    let mut out = Vec::with_capacity(n / record_every.max(1) + 1);
    out.push((&a.theta - &b.theta).norm_squared());
    let mut dw = DVector::zeros(p);
    let mut noise_rng = stream.at(1);
    for k in 1..=n {
        fill_normals(&mut noise_rng, dw.as_mut_slice());
        dw *= dt.sqrt();
        a = euler_maruyama_substep(model, &a, gamma, 1.0, dt, &dw);
        b = euler_maruyama_substep(model, &b, gamma, 1.0, dt, &dw);
        if k % record_every == 0 {
            out.push((&a.theta - &b.theta).norm_squared());
        }
    }
    Ok(out)
}

fn fit_mean_trace(times: &[f64], traces: &[&Vec<f64>], t_from: f64) -> Result<(Vec<f64>, RateFit)> {
    let len = traces[0].len();
    let mean: Vec<f64> = (0..len)
        .map(|i| traces.iter().map(|t| t[i]).sum::<f64>() / traces.len() as f64)
        .collect();
    let logd: Vec<f64> = mean.iter().map(|d| 0.5 * d.ln()).collect();
    let fit = fit_decay_rate(times, &logd, t_from)?;
    Ok((mean, fit))
}

/// Runs `n_pairs` synchronously coupled Euler–Maruyama pairs (pair `j` on
/// the stream split from `(stream, j)`), averages the squared position
/// distance, and fits its decay rate on `[2t_max/3, t_max]`.
pub fn coupled_stochastic_rate(
    model: &dyn TargetModel,
    gamma: f64,
    h_fine: f64,
    t_max: f64,
    n_pairs: usize,
    seed: u64,
    stream: u64,
    opts: CoupledOptions,
) -> Result<CoupledRate> {
    ensure(n_pairs >= 1, || "need at least one pair".into())?;
    ensure(opts.record_every >= 1, || "record_every must be positive".into())?;
    let (n, dt) = substep_grid(t_max, h_fine)?;
    let traces: Vec<Vec<f64>> = (0..n_pairs)
        .into_par_iter()
        .map(|j| {
            let s = NoiseStream::for_chain(seed, stream, j as u64);
            coupled_pair_trace(model, gamma, h_fine, t_max, opts.record_every, opts.offset, &s)
        })
        .collect::<Result<_>>()?;
    let times: Vec<f64> = (0..traces[0].len())
        .map(|i| (i * opts.record_every) as f64 * dt)
        .collect();
    debug_assert!(times.last().copied().unwrap_or(0.0) <= n as f64 * dt + 1e-12);
    let t_from = 2.0 * t_max / 3.0;
    let refs: Vec<&Vec<f64>> = traces.iter().collect();
    let (mean, mut fit) = fit_mean_trace(&times, &refs, t_from)?;
    // rate of the distance is half the rate of the squared distance
    if fit.residual > opts.residual_threshold {
        return Err(Error::NotAsymptotic {
            residual: fit.residual,
            threshold: opts.residual_threshold,
        });
    }
    let std_error = if n_pairs < 2 {
        f64::NAN
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB007_5742);
        let mut rates = Vec::with_capacity(opts.bootstrap_resamples);
        for _ in 0..opts.bootstrap_resamples {
            let sample: Vec<&Vec<f64>> = (0..n_pairs)
                .map(|_| &traces[rng.random_range(0..n_pairs)])
                .collect();
            rates.push(fit_mean_trace(&times, &sample, t_from)?.1.rate);
        }
        let m = rates.iter().sum::<f64>() / rates.len() as f64;
        (rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (rates.len() as f64 - 1.0)).sqrt()
    };
    fit.n_points = fit.n_points.max(1);
    Ok(CoupledRate {
        times,
        mean_sq_distance: mean,
        fit,
        std_error,
    })
}

/// Summary written next to a coupling trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionSummary {
    pub gamma: f64,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub beta_predicted: f64,
    pub beta_measured: f64,
    pub residual: f64,
}

/// Decay CSV with columns `t, mean_sq_distance, log_distance`.
pub fn write_decay_csv<W: std::io::Write>(times: &[f64], mean_sq_distance: &[f64], writer: W) -> Result<()> {
    ensure(times.len() == mean_sq_distance.len(), || "trace lengths differ".into())?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "mean_sq_distance", "log_distance"])?;
    for (t, d) in times.iter().zip(mean_sq_distance) {
        w.write_record([t.to_string(), d.to_string(), (0.5 * d.ln()).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

impl DecayTrace {
    /// Squared position distance at each sample time.
    pub fn mean_sq_distance(&self) -> Vec<f64> {
        self.log_distance.iter().map(|l| (2.0 * l).exp()).collect()
    }
}
