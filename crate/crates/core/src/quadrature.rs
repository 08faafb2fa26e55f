//! Gauss–Legendre quadrature with node doubling.
//!
//! Every integrand in this crate is an entire function on a short interval,
//! so a fixed high-order rule converges spectrally. The adaptive driver starts
//! at [`BASE_NODES`] and doubles until two successive estimates agree.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

pub const BASE_NODES: usize = 200;
pub const MAX_NODES: usize = 6400;
pub const REL_TOL: f64 = 1e-13;

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            weights[i] = w;
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Cached rule with `n` nodes.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(GaussLegendre::new(n)))
            .clone()
    }

    /// Integrates `f` over [a, b] with this fixed rule.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Integrates a vector-valued integrand; `f(t, out)` must fill `out`.
    pub fn integrate_into<F: FnMut(f64, &mut [f64])>(
        &self,
        mut f: F,
        a: f64,
        b: f64,
        out: &mut [f64],
    ) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut buf = vec![0.0; out.len()];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            f(mid + half * x, &mut buf);
            for (o, v) in out.iter_mut().zip(&buf) {
                *o += w * v;
            }
        }
        out.iter_mut().for_each(|o| *o *= half);
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive scalar integral: 200 nodes, doubled until successive estimates
/// differ by less than [`REL_TOL`] relative.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    let mut out = [0.0];
    integrate_vec(|t, o| o[0] = f(t), a, b, &mut out)?;
    Ok(out[0])
}

/// Adaptive vector integral. Convergence is judged per component, with an
/// absolute floor at round-off level of the largest component.
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    out: &mut [f64],
) -> Result<()> {
    let mut n = BASE_NODES;
    let mut prev = vec![0.0; out.len()];
    GaussLegendre::cached(n).integrate_into(&mut f, a, b, &mut prev);
    let mut last_change = f64::INFINITY;
    while n < MAX_NODES {
        n *= 2;
        GaussLegendre::cached(n).integrate_into(&mut f, a, b, out);
        let scale = out.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let floor = 1e-15 * scale + f64::MIN_POSITIVE;
        let converged = out
            .iter()
            .zip(&prev)
            .all(|(x, y)| (x - y).abs() <= REL_TOL * x.abs() + floor);
        last_change = out
            .iter()
            .zip(&prev)
            .map(|(x, y)| (x - y).abs() / (x.abs() + floor))
            .fold(0.0, f64::max);
        if converged {
            return Ok(());
        }
        prev.copy_from_slice(out);
    }
    Err(Error::QuadratureDiverged {
        nodes: n,
        change: last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 7, 200, 800] {
            let rule = GaussLegendre::new(n);
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} sum={s}");
        }
    }

    #[test]
    fn exact_for_polynomials() {
        let rule = GaussLegendre::new(5);
        // degree 9 is integrated exactly by a 5-point rule
        let v = rule.integrate(|x| x.powi(9) + x.powi(8), 0.0, 1.0);
        assert!((v - (0.1 + 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn adaptive_matches_exponential() {
        let v = integrate(|t| (-3.0 * t).exp(), 0.0, 2.0).unwrap();
        let exact = (1.0 - (-6.0f64).exp()) / 3.0;
        assert!(((v - exact) / exact).abs() < 1e-14);
    }
}
