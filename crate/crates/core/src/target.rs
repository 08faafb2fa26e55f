//! Potentials `f` with `π ∝ e^{-f}` and their convexity constants.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `m I ⪯ ∇²f ⪯ M I`, and `∇²f` is `m2`-Lipschitz in spectral norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub m2: f64,
}

impl Constants {
    /// Condition number M/m.
    pub fn kappa(&self) -> f64 {
        self.big_m / self.m
    }
}

/// A smooth strongly convex potential.
pub trait TargetModel: Send + Sync {
    fn dim(&self) -> usize;

    fn constants(&self) -> Constants;

    /// `f(x)` up to an additive constant, when available.
    fn value(&self, _x: &DVector<f64>) -> Option<f64> {
        None
    }

    /// `∇f(x)`. Callers guarantee `x.len() == self.dim()`.
    fn grad(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `∇²f(x)·v`, or `None` for gradient-only models.
    fn hvp(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn has_hessian(&self) -> bool {
        false
    }

    fn minimizer(&self) -> Option<DVector<f64>> {
        None
    }

    /// Per-coordinate curvatures when the model is a diagonal quadratic.
    fn diagonal_curvatures(&self) -> Option<&[f64]> {
        None
    }
}

fn check_dim(model: &dyn TargetModel, x: &DVector<f64>) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Dimension-checked gradient.
pub fn gradient(model: &dyn TargetModel, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(model, x)?;
    Ok(model.grad(x))
}

/// Dimension-checked Hessian-vector product.
pub fn hessian_vector_product(
    model: &dyn TargetModel,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(model, x)?;
    check_dim(model, v)?;
    model
        .hvp(x, v)
        .ok_or_else(|| Error::Unsupported("model has no second-order information".into()))
}

/// Returns `(m, M, m2, kappa)`.
pub fn constants(model: &dyn TargetModel) -> (f64, f64, f64, f64) {
    let c = model.constants();
    (c.m, c.big_m, c.m2, c.kappa())
}

/// `f(x) = ½ Σ λᵢ xᵢ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalQuadraticTarget {
    lambdas: Vec<f64>,
}

impl DiagonalQuadraticTarget {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidArgument("need at least one curvature".into()));
        }
        if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "curvatures must be positive and finite, got {bad}"
            )));
        }
        Ok(Self { lambdas })
    }

    /// Standard Gaussian in dimension `p`.
    pub fn isotropic(p: usize, lambda: f64) -> Result<Self> {
        Self::new(vec![lambda; p])
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Target law `N(0, diag(1/λ))` as (mean, covariance).
    pub fn target_gaussian(&self) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.lambdas.len();
        let var = DVector::from_iterator(p, self.lambdas.iter().map(|l| 1.0 / l));
        (DVector::zeros(p), DMatrix::from_diagonal(&var))
    }
}

impl TargetModel for DiagonalQuadraticTarget {
    fn dim(&self) -> usize {
        self.lambdas.len()
    }

    fn constants(&self) -> Constants {
        let m = self.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        let big_m = self.lambdas.iter().copied().fold(0.0, f64::max);
        Constants { m, big_m, m2: 0.0 }
    }

    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        Some(
            0.5 * x
                .iter()
                .zip(&self.lambdas)
                .map(|(xi, l)| l * xi * xi)
                .sum::<f64>(),
        )
    }

    fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().zip(&self.lambdas).map(|(xi, l)| l * xi))
    }

    fn hvp(&self, _x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_iterator(
            v.len(),
            v.iter().zip(&self.lambdas).map(|(vi, l)| l * vi),
        ))
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn minimizer(&self) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.lambdas.len()))
    }

    fn diagonal_curvatures(&self) -> Option<&[f64]> {
        Some(&self.lambdas)
    }
}

/// Bound on `|σ''|` for the logistic sigmoid, attained at `±ln(2+√3)`.
pub const SIGMOID_SECOND_DERIVATIVE_BOUND: f64 = 0.096_225_044_864_937_63;

/// Bayesian logistic regression with a Gaussian prior of precision τ:
/// `f(θ) = Σᵢ [log(1 + e^{xᵢᵀθ}) − yᵢ xᵢᵀθ] + τ‖θ‖²/2`.
#[derive(Debug, Clone)]
pub struct LogisticRegressionTarget {
    design: DMatrix<f64>,
    labels: DVector<f64>,
    prior_precision: f64,
    constants: Constants,
    minimizer: DVector<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticRegressionTarget {
    pub fn new(design: DMatrix<f64>, labels: Vec<f64>, prior_precision: f64) -> Result<Self> {
        let (n, p) = design.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidArgument("empty design matrix".into()));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        if !(prior_precision.is_finite() && prior_precision > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "prior precision must be positive, got {prior_precision}"
            )));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        let gram = design.transpose() * &design;
        let lambda_max = gram
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(0.0, f64::max);
        let m2 = SIGMOID_SECOND_DERIVATIVE_BOUND
            * design
                .row_iter()
                .map(|r| r.norm().powi(3))
                .sum::<f64>();
        let constants = Constants {
            m: prior_precision,
            big_m: prior_precision + lambda_max / 4.0,
            m2,
        };
        let mut target = Self {
            design,
            labels: DVector::from_vec(labels),
            prior_precision,
            constants,
            minimizer: DVector::zeros(p),
        };
        target.minimizer = target.newton_minimizer();
        Ok(target)
    }

    /// Loads `(features..., label)` rows and standardizes every feature
    /// column to zero mean and unit variance.
    pub fn from_csv(path: impl AsRef<Path>, prior_precision: f64) -> Result<Self> {
        let (design, labels) = load_dataset(path)?;
        Self::new(standardize(design), labels, prior_precision)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn prior_precision(&self) -> f64 {
        self.prior_precision
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let z = &self.design * x;
        let w = z.map(|zi| {
            let s = sigmoid(zi);
            s * (1.0 - s)
        });
        let weighted = DMatrix::from_fn(self.design.nrows(), self.design.ncols(), |i, j| {
            w[i] * self.design[(i, j)]
        });
        let p = self.design.ncols();
        self.design.transpose() * weighted + DMatrix::identity(p, p) * self.prior_precision
    }

    fn newton_minimizer(&self) -> DVector<f64> {
        let p = self.design.ncols();
        let mut x = DVector::zeros(p);
        for _ in 0..100 {
            let g = self.grad(&x);
            if g.norm() < 1e-13 * (1.0 + x.norm()) {
                break;
            }
            let step = match self.hessian(&x).cholesky() {
                Some(ch) => ch.solve(&g),
                None => g.clone() / self.constants.big_m,
            };
            let f0 = self.value(&x).unwrap_or(0.0);
            let mut t = 1.0;
            loop {
                let cand = &x - &step * t;
                if self.value(&cand).unwrap_or(f64::INFINITY) <= f0 || t < 1e-10 {
                    x = cand;
                    break;
                }
                t *= 0.5;
            }
        }
        x
    }
}

impl TargetModel for LogisticRegressionTarget {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn constants(&self) -> Constants {
        self.constants
    }

    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        let z = &self.design * x;
        let nll: f64 = z
            .iter()
            .zip(self.labels.iter())
            .map(|(zi, yi)| softplus(*zi) - yi * zi)
            .sum();
        Some(nll + 0.5 * self.prior_precision * x.norm_squared())
    }

    fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let z = &self.design * x;
        let resid = DVector::from_iterator(
            z.len(),
            z.iter().zip(self.labels.iter()).map(|(zi, yi)| sigmoid(*zi) - yi),
        );
        self.design.transpose() * resid + x * self.prior_precision
    }

    fn hvp(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        let z = &self.design * x;
        let xv = &self.design * v;
        let weighted = DVector::from_iterator(
            z.len(),
            z.iter().zip(xv.iter()).map(|(zi, ui)| {
                let s = sigmoid(*zi);
                s * (1.0 - s) * ui
            }),
        );
        Some(self.design.transpose() * weighted + v * self.prior_precision)
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn minimizer(&self) -> Option<DVector<f64>> {
        Some(self.minimizer.clone())
    }
}

/// Reads a comma-separated dataset whose final column is a 0/1 label. A
/// header row is detected (and skipped) when its first field is not numeric.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Dataset(format!("line {}: {e}", line + 1)))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => rows.push(vals),
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::Dataset(format!("line {}: {e}", line + 1)));
            }
        }
    }
    let Some(first) = rows.first() else {
        return Err(Error::Dataset(format!("{}: no data rows", path.display())));
    };
    let width = first.len();
    if width < 2 {
        return Err(Error::Dataset("need at least one feature and a label".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::Dataset(format!(
            "row {} has {} fields, expected {width}",
            i + 1,
            r.len()
        )));
    }
    let p = width - 1;
    let design = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let labels: Vec<f64> = rows.iter().map(|r| r[p]).collect();
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Dataset("label column must contain only 0 and 1".into()));
    }
    Ok((design, labels))
}

/// Centers every column and scales it to unit (population) variance.
/// Constant columns are only centered.
pub fn standardize(mut design: DMatrix<f64>) -> DMatrix<f64> {
    let n = design.nrows() as f64;
    for mut col in design.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
    design
}
