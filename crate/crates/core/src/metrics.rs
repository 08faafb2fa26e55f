//! Wasserstein-2 distances and streaming moments.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::sym_sqrt;
use crate::target::DiagonalQuadraticTarget;

/// Eigenvalues below `-SQRT_TOLERANCE · trace` are treated as genuine
/// indefiniteness; the rest are clipped at zero.
pub const SQRT_TOLERANCE: f64 = 1e-10;

/// Mean and covariance of a (possibly empirical) Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// 0 for analytic summaries.
    pub n_samples: u64,
}

impl GaussianSummary {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if cov.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: cov.nrows(),
            });
        }
        Ok(Self {
            mean,
            cov,
            n_samples: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// W₂ value together with a flag telling whether a slightly negative
/// eigenvalue was clipped on the way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2 {
    pub distance: f64,
    pub repaired: bool,
}

/// Closed-form (Bures) W₂ between two Gaussians:
/// `‖μa−μb‖² + tr(Σa + Σb − 2(Σa^{½} Σb Σa^{½})^{½})`.
pub fn gaussian_w2_detail(a: &GaussianSummary, b: &GaussianSummary) -> Result<W2> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let (ra, clip_a) = sym_sqrt(&a.cov, SQRT_TOLERANCE)?;
    let (_, clip_b) = sym_sqrt(&b.cov, SQRT_TOLERANCE)?;
    let inner = &ra * &b.cov * &ra;
    let (cross, clip_c) = sym_sqrt(&inner, SQRT_TOLERANCE)?;
    let mean_sq = (&a.mean - &b.mean).norm_squared();
    let bures = a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    Ok(W2 {
        distance: (mean_sq + bures.max(0.0)).sqrt(),
        repaired: clip_a || clip_b || clip_c,
    })
}

pub fn gaussian_w2(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    Ok(gaussian_w2_detail(a, b)?.distance)
}

/// Exact W₂ between two equal-size empirical measures on the line. Inputs
/// need not be sorted.
pub fn empirical_w2_1d(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.len() != samples_b.len() {
        return Err(Error::DimensionMismatch {
            expected: samples_a.len(),
            got: samples_b.len(),
        });
    }
    if samples_a.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let mut a = samples_a.to_vec();
    let mut b = samples_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    let ss: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / n).sqrt())
}

/// Single-pass mean and centered second moment (Welford / Chan).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn push(&mut self, x: &DVector<f64>) {
        self.count += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = &other.mean - &self.mean;
        self.mean += &delta * (nb / n);
        self.m2 += &other.m2 + &delta * delta.transpose() * (na * nb / n);
        self.count += other.count;
    }

    /// Inverse of [`merge`](Self::merge): removes a sub-stream that was
    /// previously merged in.
    pub fn unmerge(&self, part: &MomentAccumulator) -> Result<MomentAccumulator> {
        if part.count > self.count {
            return Err(Error::InvalidArgument("removing more samples than held".into()));
        }
        if part.count == self.count {
            return Ok(MomentAccumulator::new(self.dim()));
        }
        if part.count == 0 {
            return Ok(self.clone());
        }
        let n = self.count as f64;
        let nb = part.count as f64;
        let na = n - nb;
        let mean = (&self.mean * n - &part.mean * nb) / na;
        let delta = &part.mean - &mean;
        let m2 = &self.m2 - &part.m2 - &delta * delta.transpose() * (na * nb / n);
        Ok(MomentAccumulator {
            count: self.count - part.count,
            mean,
            m2,
        })
    }

    /// Unbiased sample covariance; zero for fewer than two samples.
    pub fn covariance(&self) -> DMatrix<f64> {
        if self.count < 2 {
            return DMatrix::zeros(self.dim(), self.dim());
        }
        let c = &self.m2 / (self.count as f64 - 1.0);
        0.5 * (&c + c.transpose())
    }

    pub fn summary(&self) -> GaussianSummary {
        GaussianSummary {
            mean: self.mean.clone(),
            cov: self.covariance(),
            n_samples: self.count,
        }
    }
}

/// Plug-in W₂ with its jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluginW2 {
    pub distance: f64,
    pub std_error: f64,
    pub repaired: bool,
}

fn target_summary(target: &DiagonalQuadraticTarget) -> GaussianSummary {
    let (mean, cov) = target.target_gaussian();
    GaussianSummary {
        mean,
        cov,
        n_samples: 0,
    }
}

/// W₂ between the moment-matched Gaussian of `acc` and the exact target law.
pub fn plugin_w2(acc: &MomentAccumulator, target: &DiagonalQuadraticTarget) -> Result<W2> {
    let p = target.lambdas().len();
    if acc.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: acc.dim(),
        });
    }
    gaussian_w2_detail(&acc.summary(), &target_summary(target))
}

/// Plug-in W₂ over the union of `groups`, with a delete-one-group jackknife
/// standard error. Pass one accumulator per sample for the ordinary
/// jackknife.
pub fn plugin_w2_to_target(
    groups: &[MomentAccumulator],
    target: &DiagonalQuadraticTarget,
) -> Result<PluginW2> {
    let p = target.lambdas().len();
    let mut total = MomentAccumulator::new(p);
    for g in groups {
        total.merge(g);
    }
    if total.count() < p as u64 + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples, got {}",
            p + 1,
            total.count()
        )));
    }
    let full = plugin_w2(&total, target)?;
    let used: Vec<&MomentAccumulator> = groups.iter().filter(|g| g.count() > 0).collect();
    let g = used.len();
    let mut repaired = full.repaired;
    let std_error = if g < 2 {
        f64::NAN
    } else {
        let mut loo = Vec::with_capacity(g);
        for grp in &used {
            let rest = total.unmerge(grp)?;
            let w = plugin_w2(&rest, target)?;
            repaired |= w.repaired;
            loo.push(w.distance);
        }
        let mean = loo.iter().sum::<f64>() / g as f64;
        let ss: f64 = loo.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss * (g as f64 - 1.0) / g as f64).sqrt()
    };
    Ok(PluginW2 {
        distance: full.distance,
        std_error,
        repaired,
    })
}

/// W₂ between the point mass at `theta0` and `N(0, I_p)`: `√(‖θ₀‖² + p)`.
pub fn point_mass_to_standard_normal(theta0: &[f64]) -> f64 {
    (theta0.iter().map(|x| x * x).sum::<f64>() + theta0.len() as f64).sqrt()
}

/// W₂ between the point mass at `theta0` and `N(0, diag(1/λ))`.
pub fn point_mass_to_target(theta0: &[f64], target: &DiagonalQuadraticTarget) -> f64 {
    theta0
        .iter()
        .zip(target.lambdas())
        .map(|(x, l)| x * x + 1.0 / l)
        .sum::<f64>()
        .sqrt()
}
