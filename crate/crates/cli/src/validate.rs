//! Config checks. Validation reads the config and dataset but never
//! mutates or writes anything.

use klmc_core::sampler::InitSpec;
use klmc_core::target::{DiagonalQuadraticTarget, LogisticRegressionTarget, TargetModel};
use klmc_core::tuning::optimal_gamma;
use klmc_core::{Algorithm, SamplerConfig};
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Warning,
    Error,
}

/// One finding, tied to a dotted config field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub level: Level,
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.level {
            Level::Warning => "warning",
            Level::Error => "error",
        };
        write!(f, "{tag}: {}: {}", self.field, self.message)
    }
}

/// The built target model.
pub enum Target {
    Quadratic(DiagonalQuadraticTarget),
    Logistic(LogisticRegressionTarget),
}

impl Target {
    pub fn build(spec: &TargetSpec) -> klmc_core::Result<Self> {
        Ok(match spec {
            TargetSpec::Quadratic { lambdas } => Target::Quadratic(DiagonalQuadraticTarget::new(lambdas.clone())?),
            TargetSpec::Isotropic { dim, lambda } => {
                Target::Quadratic(DiagonalQuadraticTarget::isotropic(*dim, *lambda)?)
            }
            TargetSpec::Logistic { dataset, prior_precision } => {
                Target::Logistic(LogisticRegressionTarget::from_csv(dataset, *prior_precision)?)
            }
        })
    }

    pub fn model(&self) -> &dyn TargetModel {
        match self {
            Target::Quadratic(t) => t,
            Target::Logistic(t) => t,
        }
    }

    pub fn quadratic(&self) -> Option<&DiagonalQuadraticTarget> {
        match self {
            Target::Quadratic(t) => Some(t),
            Target::Logistic(_) => None,
        }
    }
}

/// Sampler settings resolved against the target; `gamma` defaults to
/// `√(m+M)`.
pub fn sampler_config(cfg: &ExperimentConfig, model: &dyn TargetModel, seed: u64) -> klmc_core::Result<SamplerConfig> {
    let s = &cfg.sampler;
    let c = model.constants();
    let gamma = match s.gamma {
        Some(g) => g,
        None => optimal_gamma(c.m, c.big_m)?,
    };
    let mut sc = SamplerConfig::new(s.algorithm, gamma, s.h, s.steps, seed);
    sc.u = s.u;
    sc.thin = s.thin;
    sc.substep = s.substep;
    sc.init = InitSpec {
        theta0: s.theta0.clone(),
        zero_velocity: s.zero_velocity,
    };
    Ok(sc)
}

struct Collector(Vec<Diagnostic>);

impl Collector {
    fn error(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Diagnostic {
            level: Level::Error,
            field: field.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Diagnostic {
            level: Level::Warning,
            field: field.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, field: &str, x: f64) {
        if !(x.is_finite() && x > 0.0) {
            self.error(field, format!("must be positive and finite, got {x}"));
        }
    }
}

/// All errors and caveats for running `cfg` as `kind`. Empty iff the run
/// needs no caveats.
pub fn validate(cfg: &ExperimentConfig, kind: ExperimentKind) -> Vec<Diagnostic> {
    let mut d = Collector(Vec::new());
    if let Some(e) = cfg.experiment {
        if e != kind {
            d.error("experiment", format!("config is for `{e}` but the `{kind}` subcommand was used"));
        }
    }
    if let TargetSpec::Logistic { dataset, .. } = &cfg.target {
        if !dataset.exists() {
            d.error("target.dataset", format!("{} does not exist", dataset.display()));
            return d.0;
        }
    }
    let target = match Target::build(&cfg.target) {
        Ok(t) => t,
        Err(e) => {
            d.error("target", e.to_string());
            return d.0;
        }
    };
    let model = target.model();
    let c = model.constants();
    let needs_sampler = matches!(kind, ExperimentKind::Sample | ExperimentKind::Converge);
    if needs_sampler {
        check_sampler(cfg, model, &mut d);
        if cfg.metrics.n_chains < 3 {
            d.error("metrics.n_chains", "need at least 3 chains for moment estimates");
        }
    }
    match kind {
        ExperimentKind::Converge | ExperimentKind::Order if target.quadratic().is_none() => {
            d.error("target", format!("`{kind}` needs a quadratic target (exact oracle)"));
        }
        ExperimentKind::Order => {
            if cfg.order.hs.len() < 2 {
                d.error("order.hs", "need at least two step sizes");
            }
            for (i, &h) in cfg.order.hs.iter().enumerate() {
                d.positive(&format!("order.hs[{i}]"), h);
            }
            for a in &cfg.order.algorithms {
                if !matches!(a, Algorithm::Lmc | Algorithm::Klmc | Algorithm::Klmc2) {
                    d.error("order.algorithms", format!("{a} has no discrete stationary bias"));
                }
            }
            if let Some(g) = cfg.sampler.gamma {
                d.positive("sampler.gamma", g);
            }
        }
        ExperimentKind::Contraction => {
            let s = &cfg.contraction;
            d.positive("contraction.t_max", s.t_max);
            d.positive("contraction.h_fine", s.h_fine);
            if s.record_every == 0 {
                d.error("contraction.record_every", "must be at least 1");
            }
            if s.n_pairs == 0 {
                d.error("contraction.n_pairs", "must be at least 1");
            }
            if let Some(gs) = &s.gammas {
                for (i, &g) in gs.iter().enumerate() {
                    d.positive(&format!("contraction.gammas[{i}]"), g);
                    if g * g <= c.big_m {
                        d.warn(
                            &format!("contraction.gammas[{i}]"),
                            format!("γ² = {} ≤ M = {}: no contraction guarantee", g * g, c.big_m),
                        );
                    }
                }
            }
        }
        ExperimentKind::Tune => {
            let t = &cfg.tune;
            d.positive("tune.epsilon", t.epsilon);
            let m = t.m.unwrap_or(c.m);
            let big_m = t.big_m.unwrap_or(c.big_m);
            d.positive("tune.m", m);
            d.positive("tune.M", big_m);
            if m > big_m {
                d.error("tune.m", format!("need m ≤ M, got {m} > {big_m}"));
            }
            if let Some(w) = t.w2_init {
                d.positive("tune.w2_init", w);
            }
            if t.p == Some(0) {
                d.error("tune.p", "must be at least 1");
            }
        }
        ExperimentKind::Regions => {
            let r = &cfg.regions;
            if r.n_scale < 2 || r.n_kappa < 2 {
                d.error("regions", "need at least two grid points per axis");
            }
            if r.log10_kappa.0 < 0.0 {
                d.error("regions.log10_kappa", "condition numbers are at least 1");
            }
            if r.w2_over_eps <= 1.0 / 24.0 {
                d.error("regions.w2_over_eps", "must exceed 1/24 for positive iteration counts");
            }
        }
        _ => {}
    }
    d.0
}

fn check_sampler(cfg: &ExperimentConfig, model: &dyn TargetModel, d: &mut Collector) {
    let s = &cfg.sampler;
    if let Some(t) = &s.theta0 {
        if t.len() != model.dim() {
            d.error(
                "sampler.theta0",
                format!("has {} entries but the target has dimension {}", t.len(), model.dim()),
            );
        }
    }
    if s.steps == 0 {
        d.error("sampler.steps", "must be at least 1");
    }
    if s.algorithm == Algorithm::Klmc2 && !model.has_hessian() {
        d.error("sampler.algorithm", "KLMC2 needs Hessian-vector products");
    }
    if s.algorithm == Algorithm::ExactGaussian && model.diagonal_curvatures().is_none() {
        d.error("sampler.algorithm", "EXACT_GAUSSIAN needs a quadratic target");
    }
    let sc = match sampler_config(cfg, model, 0) {
        Ok(sc) => sc,
        Err(e) => {
            d.error("sampler", e.to_string());
            return;
        }
    };
    if let Err(e) = sc.validate() {
        d.error("sampler", e.to_string());
        return;
    }
    for w in sc.warnings(model) {
        let field = if w.starts_with('γ') { "sampler.gamma" } else { "sampler.h" };
        d.warn(field, w);
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.level == Level::Error)
}
