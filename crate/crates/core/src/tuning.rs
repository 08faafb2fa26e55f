//! Closed-form step sizes, iteration counts and error bounds.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

fn positive(name: &str, x: f64) -> Result<()> {
    ensure(x.is_finite() && x > 0.0, || format!("{name} must be positive, got {x}"))
}

/// KLMC step size `m/(4M√(m+M)) ∧ 0.94ε/(ϰ√(2p))`.
pub fn klmc_step_size(m: f64, big_m: f64, p: usize, epsilon: f64) -> Result<f64> {
    positive("m", m)?;
    positive("M", big_m)?;
    positive("epsilon", epsilon)?;
    ensure(p > 0, || "dimension must be positive".into())?;
    ensure(m <= big_m, || format!("need m <= M, got {m} > {big_m}"))?;
    let kappa = big_m / m;
    let first = m / (4.0 * big_m * (m + big_m).sqrt());
    let second = 0.94 * epsilon / (kappa * (2.0 * p as f64).sqrt());
    Ok(first.min(second))
}

fn log_factor(epsilon: f64, w2_init: f64) -> f64 {
    (24.0 * w2_init / epsilon).ln()
}

fn clamp_count(x: f64) -> u64 {
    if x <= 0.0 {
        0
    } else {
        x.ceil() as u64
    }
}

/// Right-hand side of the KLMC iteration count, before rounding:
/// `√(m+M)/(0.75m) · (4M√(m+M)/m ∨ ϰ√(2p)/(0.94ε)) · log(24 W₂(ν₀,π)/ε)`.
pub fn klmc_iterations_real(m: f64, big_m: f64, p: usize, epsilon: f64, w2_init: f64) -> Result<f64> {
    let h = klmc_step_size(m, big_m, p, epsilon)?;
    positive("w2_init", w2_init)?;
    let gamma = (m + big_m).sqrt();
    Ok(gamma / (0.75 * m * h) * log_factor(epsilon, w2_init))
}

/// Smallest integer satisfying the KLMC iteration count, clamped at 0.
pub fn klmc_iterations(m: f64, big_m: f64, p: usize, epsilon: f64, w2_init: f64) -> Result<u64> {
    Ok(clamp_count(klmc_iterations_real(m, big_m, p, epsilon, w2_init)?))
}

/// Simplified KLMC count `3ϰ^{3/2} (16ϰ ∨ p/(mε²))^{1/2} log(24 W₂/ε)`,
/// written in terms of `scale = p/(mε²)`.
pub fn klmc_iterations_simplified(kappa: f64, scale: f64, w2_over_eps: f64) -> f64 {
    3.0 * kappa.powf(1.5) * (16.0 * kappa).max(scale).sqrt() * (24.0 * w2_over_eps).ln()
}

/// LMC count `2ϰ (1 ∨ 2.18 p/(mε²)) log(24 W₂/ε)` in terms of `scale`.
pub fn lmc_iterations_simplified(kappa: f64, scale: f64, w2_over_eps: f64) -> f64 {
    2.0 * kappa * (2.18 * scale).max(1.0) * (24.0 * w2_over_eps).ln()
}

/// Smallest integer satisfying the LMC iteration count, clamped at 0.
pub fn lmc_iterations(m: f64, p: usize, epsilon: f64, kappa: f64, w2_init: f64) -> Result<u64> {
    positive("m", m)?;
    positive("epsilon", epsilon)?;
    positive("kappa", kappa)?;
    positive("w2_init", w2_init)?;
    let scale = p as f64 / (m * epsilon * epsilon);
    Ok(clamp_count(lmc_iterations_simplified(kappa, scale, w2_init / epsilon)))
}

/// KLMC2 step-size cap `m/(5γM) ∧ m/(4√(5p)M₂)`; the second branch is
/// dropped when `M₂ = 0`.
pub fn klmc2_step_cap(m: f64, big_m: f64, m2: f64, p: usize, gamma: f64) -> Result<f64> {
    positive("m", m)?;
    positive("M", big_m)?;
    positive("gamma", gamma)?;
    ensure(m2 >= 0.0 && m2.is_finite(), || format!("M2 must be non-negative, got {m2}"))?;
    let first = m / (5.0 * gamma * big_m);
    if m2 == 0.0 {
        return Ok(first);
    }
    Ok(first.min(m / (4.0 * (5.0 * p as f64).sqrt() * m2)))
}

/// KLMC step-size cap `m/(4γM)`.
pub fn klmc_step_cap(m: f64, big_m: f64, gamma: f64) -> f64 {
    m / (4.0 * gamma * big_m)
}

/// γ = √(m+M).
pub fn optimal_gamma(m: f64, big_m: f64) -> Result<f64> {
    positive("m", m)?;
    ensure(m <= big_m, || format!("need m <= M, got {m} > {big_m}"))?;
    Ok((m + big_m).sqrt())
}

/// One entry of a theoretical W₂ bound trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub k: u64,
    pub transient: f64,
    pub bias: f64,
    /// Exponential-tail term; zero for the first-order bound.
    pub tail: f64,
    /// Set when (γ, h) violate the hypotheses of the bound.
    pub hypotheses_violated: bool,
}

impl BoundEntry {
    pub fn total(&self) -> f64 {
        self.transient + self.bias + self.tail
    }
}

pub type BoundTrace = Vec<BoundEntry>;

/// Parameters shared by both bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub h: f64,
    pub gamma: f64,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub m2: f64,
    pub p: usize,
    pub w2_init: f64,
}

/// `√2 (1 − 0.75mh/γ)^k W₂(ν₀,π) + Mh√(2p)/m`.
pub fn klmc_bound(k: u64, b: &BoundParams) -> BoundEntry {
    let violated = b.h > klmc_step_cap(b.m, b.big_m, b.gamma) || b.gamma < (b.m + b.big_m).sqrt();
    let rate = 1.0 - 0.75 * b.m * b.h / b.gamma;
    BoundEntry {
        k,
        transient: 2f64.sqrt() * rate.powf(k as f64) * b.w2_init,
        bias: b.big_m * b.h * (2.0 * b.p as f64).sqrt() / b.m,
        tail: 0.0,
        hypotheses_violated: violated,
    }
}

/// `√2 (1 − mh/(4γ))^k W₂(ν₀,π) + 2h²M₂p/m + h²M√(2Mp)/m + (8M/m) h·tail`,
/// with `tail = e^{-p/2}`, or `e^{-m²/(160 M₂² h²)}` when `sharp_tail`.
pub fn klmc2_bound(k: u64, b: &BoundParams, sharp_tail: bool) -> BoundEntry {
    let p = b.p as f64;
    let cap = klmc2_step_cap(b.m, b.big_m, b.m2, b.p, b.gamma).unwrap_or(0.0);
    let violated = b.h > cap || b.gamma < (b.m + b.big_m).sqrt();
    let rate = 1.0 - b.m * b.h / (4.0 * b.gamma);
    let h2 = b.h * b.h;
    let tail_factor = if sharp_tail {
        if b.m2 == 0.0 {
            0.0
        } else {
            (-b.m * b.m / (160.0 * b.m2 * b.m2 * h2)).exp()
        }
    } else {
        (-p / 2.0).exp()
    };
    BoundEntry {
        k,
        transient: 2f64.sqrt() * rate.powf(k as f64) * b.w2_init,
        bias: 2.0 * h2 * b.m2 * p / b.m + h2 * b.big_m * (2.0 * b.big_m * p).sqrt() / b.m,
        tail: 8.0 * b.big_m / b.m * b.h * tail_factor,
        hypotheses_violated: violated,
    }
}

pub fn klmc_bound_trace(ks: impl IntoIterator<Item = u64>, b: &BoundParams) -> BoundTrace {
    ks.into_iter().map(|k| klmc_bound(k, b)).collect()
}

pub fn klmc2_bound_trace(ks: impl IntoIterator<Item = u64>, b: &BoundParams, sharp_tail: bool) -> BoundTrace {
    ks.into_iter().map(|k| klmc2_bound(k, b, sharp_tail)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Regime {
    Lmc,
    Klmc,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Lmc => "LMC",
            Regime::Klmc => "KLMC",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeDecision {
    pub winner: Regime,
    pub k_lmc: f64,
    pub k_klmc: f64,
}

/// Picks the method with the smaller simplified iteration count. LMC wins
/// only when strictly cheaper.
pub fn regime_classify(kappa: f64, scale: f64, w2_init_over_eps: f64) -> Result<RegimeDecision> {
    positive("kappa", kappa)?;
    positive("scale", scale)?;
    positive("w2_init_over_eps", w2_init_over_eps)?;
    let k_lmc = lmc_iterations_simplified(kappa, scale, w2_init_over_eps);
    let k_klmc = klmc_iterations_simplified(kappa, scale, w2_init_over_eps);
    let winner = if k_lmc < k_klmc { Regime::Lmc } else { Regime::Klmc };
    Ok(RegimeDecision {
        winner,
        k_lmc,
        k_klmc,
    })
}

/// One cell of the region sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionCell {
    pub log10_scale: f64,
    pub log10_kappa: f64,
    #[serde(rename = "K_lmc")]
    pub k_lmc: f64,
    #[serde(rename = "K_klmc")]
    pub k_klmc: f64,
    pub winner: Regime,
}

/// Sweeps a `n_scale × n_kappa` log-spaced grid.
pub fn region_sweep(
    log10_scale: (f64, f64),
    log10_kappa: (f64, f64),
    n_scale: usize,
    n_kappa: usize,
    w2_init_over_eps: f64,
) -> Result<Vec<RegionCell>> {
    ensure(n_scale >= 2 && n_kappa >= 2, || "need at least two grid points per axis".into())?;
    let lerp = |(lo, hi): (f64, f64), i: usize, n: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n_scale * n_kappa);
    for j in 0..n_kappa {
        let lk = lerp(log10_kappa, j, n_kappa);
        for i in 0..n_scale {
            let ls = lerp(log10_scale, i, n_scale);
            let d = regime_classify(10f64.powf(lk), 10f64.powf(ls), w2_init_over_eps)?;
            out.push(RegionCell {
                log10_scale: ls,
                log10_kappa: lk,
                k_lmc: d.k_lmc,
                k_klmc: d.k_klmc,
                winner: d.winner,
            });
        }
    }
    Ok(out)
}

/// Region CSV with columns `log10_scale, log10_kappa, K_lmc, K_klmc, winner`.
pub fn write_region_csv<W: std::io::Write>(cells: &[RegionCell], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}
