//! The six experiment types. Each writes its CSV traces into `out` and
//! returns a JSON summary plus the artifact names.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use klmc_core::coupling::{
    coupled_stochastic_rate, difference_ode_rate_with, predicted_rate, slow_direction, write_decay_csv,
    ContractionSummary, CoupledOptions, DifferenceOdeOptions,
};
use klmc_core::metrics::{plugin_w2_to_target, point_mass_to_target, MomentAccumulator};
use klmc_core::oracle::{exact_w2_trace, stationary_w2_bias};
use klmc_core::sampler::{run_chains, Trajectory};
use klmc_core::target::TargetModel;
use klmc_core::tuning::{
    klmc2_bound, klmc2_step_cap, klmc_bound, klmc_iterations, klmc_iterations_real, klmc_step_cap,
    klmc_step_size, lmc_iterations, optimal_gamma, region_sweep, regime_classify, write_region_csv,
    BoundEntry, BoundParams,
};
use klmc_core::Algorithm;
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::validate::{sampler_config, Target};

pub struct Outcome {
    pub summary: Value,
    pub artifacts: Vec<String>,
}

type Res<T> = Result<T, CliError>;

fn csv_writer(out: &Path, name: &str) -> Res<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(out.join(name))?)))
}

/// Formats an optional float; missing values become empty cells.
fn cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// JSON number, or `null` when not finite.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig, seed: u64, out: &Path) -> Res<Outcome> {
    let target = Target::build(&cfg.target)?;
    match kind {
        ExperimentKind::Sample => sample(cfg, &target, seed, out),
        ExperimentKind::Converge => converge(cfg, &target, seed, out),
        ExperimentKind::Order => order(cfg, &target, out),
        ExperimentKind::Contraction => contraction(cfg, &target, seed, out),
        ExperimentKind::Tune => tune(cfg, &target, out),
        ExperimentKind::Regions => regions(cfg, out),
    }
}

fn sample(cfg: &ExperimentConfig, target: &Target, seed: u64, out: &Path) -> Res<Outcome> {
    let model = target.model();
    let sc = sampler_config(cfg, model, seed)?;
    let chains = run_chains(&sc, model, cfg.metrics.n_chains)?;
    let p = model.dim();
    let mut w = csv_writer(out, "chains.csv")?;
    let mut header = vec!["chain".to_string(), "step".to_string()];
    header.extend((1..=p).map(|i| format!("theta_{i}")));
    header.extend((1..=p).map(|i| format!("v_{i}")));
    w.write_record(&header)?;
    for (c, traj) in chains.iter().enumerate() {
        for (k, s) in traj.step_index.iter().zip(&traj.states) {
            let mut row = vec![c.to_string(), k.to_string()];
            row.extend(s.theta.iter().map(|x| x.to_string()));
            row.extend(s.v.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    let last = final_groups(&chains, p);
    let mut all = MomentAccumulator::new(p);
    for g in &last {
        all.merge(g);
    }
    let mut summary = json!({
        "algorithm": sc.algorithm,
        "gamma": sc.gamma,
        "h": sc.h,
        "steps": sc.steps,
        "n_chains": chains.len(),
        "final_mean": all.mean().as_slice(),
        "final_covariance": all.covariance().row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
    });
    if let Some(q) = target.quadratic() {
        let w2 = plugin_w2_to_target(&last, q)?;
        summary["final_w2_plugin"] = num(w2.distance);
        summary["final_w2_std_error"] = num(w2.std_error);
    }
    Ok(Outcome {
        summary,
        artifacts: vec!["chains.csv".into()],
    })
}

fn groups_at(chains: &[Trajectory], i: usize, p: usize) -> Vec<MomentAccumulator> {
    chains
        .iter()
        .map(|c| {
            let mut a = MomentAccumulator::new(p);
            a.push(&c.states[i].theta);
            a
        })
        .collect()
}

fn final_groups(chains: &[Trajectory], p: usize) -> Vec<MomentAccumulator> {
    groups_at(chains, chains[0].len() - 1, p)
}

fn bound_params(cfg: &ExperimentConfig, model: &dyn TargetModel, gamma: f64, w2_init: f64) -> BoundParams {
    let c = model.constants();
    BoundParams {
        h: cfg.sampler.h,
        gamma,
        m: c.m,
        big_m: c.big_m,
        m2: c.m2,
        p: model.dim(),
        w2_init,
    }
}

fn bound_at(alg: Algorithm, k: u64, b: &BoundParams, sharp_tail: bool) -> Option<BoundEntry> {
    match alg {
        Algorithm::Klmc => Some(klmc_bound(k, b)),
        Algorithm::Klmc2 => Some(klmc2_bound(k, b, sharp_tail)),
        _ => None,
    }
}

fn converge(cfg: &ExperimentConfig, target: &Target, seed: u64, out: &Path) -> Res<Outcome> {
    let q = target.quadratic().ok_or_else(|| CliError::Config("converge needs a quadratic target".into()))?;
    let model = target.model();
    let p = model.dim();
    let sc = sampler_config(cfg, model, seed)?;
    let theta0 = sc.init.theta0.clone().unwrap_or_else(|| vec![0.0; p]);
    let w2_init = point_mass_to_target(&theta0, q);
    let b = bound_params(cfg, model, sc.gamma, w2_init);
    let exact = exact_w2_trace(sc.algorithm, q.lambdas(), sc.gamma, sc.h, &theta0, sc.init.zero_velocity, sc.steps).ok();
    let chains = run_chains(&sc, model, cfg.metrics.n_chains)?;
    let mut w = csv_writer(out, "converge.csv")?;
    w.write_record([
        "step",
        "w2_plugin",
        "w2_std_error",
        "w2_exact",
        "bound_transient",
        "bound_bias",
        "bound_tail",
        "bound_total",
    ])?;
    let mut max_excess = f64::NEG_INFINITY;
    let mut violated = false;
    let mut last = None;
    for (i, &k) in chains[0].step_index.iter().enumerate() {
        let est = plugin_w2_to_target(&groups_at(&chains, i, p), q)?;
        let bound = bound_at(sc.algorithm, k as u64, &b, cfg.metrics.sharp_tail);
        if let Some(e) = &bound {
            max_excess = max_excess.max((est.distance - e.total()) / est.std_error.max(f64::MIN_POSITIVE));
            violated |= e.hypotheses_violated;
        }
        w.write_record([
            k.to_string(),
            est.distance.to_string(),
            est.std_error.to_string(),
            cell(exact.as_ref().map(|t| t[k])),
            cell(bound.map(|e| e.transient)),
            cell(bound.map(|e| e.bias)),
            cell(bound.map(|e| e.tail)),
            cell(bound.map(|e| e.total())),
        ])?;
        last = Some(est);
    }
    w.flush()?;
    let last = last.expect("trajectories always hold the initial state");
    let stationary = stationary_w2_bias(sc.algorithm, q.lambdas(), sc.gamma, sc.h).ok();
    Ok(Outcome {
        summary: json!({
            "algorithm": sc.algorithm,
            "gamma": sc.gamma,
            "h": sc.h,
            "steps": sc.steps,
            "n_chains": chains.len(),
            "w2_init": w2_init,
            "final_w2_plugin": num(last.distance),
            "final_w2_std_error": num(last.std_error),
            "stationary_w2_exact": stationary.map(num),
            "max_excess_over_bound_in_se": num(max_excess),
            "bound_hypotheses_violated": violated,
        }),
        artifacts: vec!["converge.csv".into()],
    })
}

fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    sxy / sxx
}

fn order(cfg: &ExperimentConfig, target: &Target, out: &Path) -> Res<Outcome> {
    let q = target.quadratic().ok_or_else(|| CliError::Config("order needs a quadratic target".into()))?;
    let c = q.constants();
    let gamma = match cfg.sampler.gamma {
        Some(g) => g,
        None => optimal_gamma(c.m, c.big_m)?,
    };
    let mut w = csv_writer(out, "order.csv")?;
    w.write_record(["algorithm", "h", "stationary_w2_bias"])?;
    let mut slopes = serde_json::Map::new();
    for &alg in &cfg.order.algorithms {
        let mut pts = Vec::new();
        for &h in &cfg.order.hs {
            let bias = stationary_w2_bias(alg, q.lambdas(), gamma, h).ok();
            if let Some(b) = bias.filter(|b| *b > 0.0) {
                pts.push((h, b));
            }
            w.write_record([alg.to_string(), h.to_string(), cell(bias)])?;
        }
        let slope = if pts.len() >= 2 { log_slope(&pts) } else { f64::NAN };
        slopes.insert(alg.to_string(), num(slope));
    }
    w.flush()?;
    Ok(Outcome {
        summary: json!({ "gamma": gamma, "log_log_slopes": slopes }),
        artifacts: vec!["order.csv".into()],
    })
}

fn contraction(cfg: &ExperimentConfig, target: &Target, seed: u64, out: &Path) -> Res<Outcome> {
    let s = &cfg.contraction;
    let model = target.model();
    let c = model.constants();
    let gammas = s.gammas.clone().unwrap_or_else(|| {
        let mut g = vec![(c.m + c.big_m).sqrt(), (3.0 * c.m + c.big_m).sqrt(), 2.0 * c.big_m.sqrt()];
        // the last two coincide when m = M
        g.dedup();
        g
    });
    let mut rows = Vec::new();
    let mut artifacts = vec!["contraction.csv".to_string()];
    let mut notes = Vec::new();
    for (i, &gamma) in gammas.iter().enumerate() {
        let beta_predicted = predicted_rate(gamma, c.m, c.big_m).map_or(f64::NAN, |p| p.beta);
        // fit regardless of residual; the residual is reported alongside
        let (times, sq, rate, residual, se) = match target.quadratic() {
            Some(q) => {
                let opts = DifferenceOdeOptions {
                    residual_threshold: f64::INFINITY,
                    ..DifferenceOdeOptions::default()
                };
                let t = difference_ode_rate_with(q.lambdas(), gamma, s.t_max, &slow_direction(q.lambdas()), opts)?;
                let sq = t.mean_sq_distance();
                (t.times, sq, t.fit.rate, t.fit.residual, 0.0)
            }
            None => {
                let opts = CoupledOptions {
                    record_every: s.record_every,
                    residual_threshold: f64::INFINITY,
                    ..CoupledOptions::default()
                };
                let r = coupled_stochastic_rate(model, gamma, s.h_fine, s.t_max, s.n_pairs, seed, i as u64, opts)?;
                (r.times, r.mean_sq_distance, r.fit.rate, r.fit.residual, r.std_error)
            }
        };
        if residual > s.residual_threshold {
            notes.push(format!(
                "γ = {gamma}: log-distance not linear on the fitting window (residual {residual:.3e})"
            ));
        }
        let name = format!("decay_{i}.csv");
        write_decay_csv(&times, &sq, BufWriter::new(File::create(out.join(&name))?))?;
        artifacts.push(name);
        rows.push((
            ContractionSummary {
                gamma,
                m: c.m,
                big_m: c.big_m,
                beta_predicted,
                beta_measured: rate,
                residual,
            },
            se,
            residual <= s.residual_threshold,
        ));
    }
    let mut w = csv_writer(out, "contraction.csv")?;
    w.write_record(["gamma", "m", "M", "beta_predicted", "beta_measured", "residual", "std_error", "asymptotic"])?;
    for (r, se, ok) in &rows {
        w.write_record([
            r.gamma.to_string(),
            r.m.to_string(),
            r.big_m.to_string(),
            r.beta_predicted.to_string(),
            r.beta_measured.to_string(),
            r.residual.to_string(),
            se.to_string(),
            ok.to_string(),
        ])?;
    }
    w.flush()?;
    let table: Vec<Value> = rows
        .iter()
        .map(|(r, se, ok)| {
            json!({
                "gamma": r.gamma,
                "beta_predicted": num(r.beta_predicted),
                "beta_measured": num(r.beta_measured),
                "residual": num(r.residual),
                "std_error": num(*se),
                "asymptotic": ok,
            })
        })
        .collect();
    Ok(Outcome {
        summary: json!({ "m": c.m, "M": c.big_m, "rates": table, "notes": notes }),
        artifacts,
    })
}

fn tune(cfg: &ExperimentConfig, target: &Target, out: &Path) -> Res<Outcome> {
    let t = &cfg.tune;
    let model = target.model();
    let c = model.constants();
    let m = t.m.unwrap_or(c.m);
    let big_m = t.big_m.unwrap_or(c.big_m);
    let m2 = t.m2.unwrap_or(c.m2);
    let p = t.p.unwrap_or(model.dim());
    let w2_init = match t.w2_init {
        Some(w) => w,
        None => {
            let center = model.minimizer().unwrap_or_else(|| DVector::zeros(model.dim()));
            let theta0 = cfg.sampler.theta0.as_ref().map_or_else(|| center.clone(), |v| DVector::from_column_slice(v));
            ((theta0 - center).norm_squared() + p as f64 / m).sqrt()
        }
    };
    let eps = t.epsilon;
    let gamma = optimal_gamma(m, big_m)?;
    let h = klmc_step_size(m, big_m, p, eps)?;
    let k = klmc_iterations(m, big_m, p, eps, w2_init)?;
    let k_real = klmc_iterations_real(m, big_m, p, eps, w2_init)?;
    let k_lmc = lmc_iterations(m, p, eps, big_m / m, w2_init)?;
    let regime = regime_classify(big_m / m, p as f64 / (m * eps * eps), w2_init / eps).ok();
    let b = BoundParams { h, gamma, m, big_m, m2, p, w2_init };
    let mut w = csv_writer(out, "tune.csv")?;
    w.write_record(["step", "transient", "bias", "tail", "total"])?;
    let n = 100u64.min(k.max(1));
    for i in 0..=n {
        let e = klmc_bound(k * i / n, &b);
        w.write_record([e.k.to_string(), e.transient.to_string(), e.bias.to_string(), e.tail.to_string(), e.total().to_string()])?;
    }
    w.flush()?;
    Ok(Outcome {
        summary: json!({
            "m": m,
            "M": big_m,
            "m2": m2,
            "p": p,
            "epsilon": eps,
            "w2_init": w2_init,
            "gamma": gamma,
            "klmc_step_size": h,
            "klmc_step_cap": klmc_step_cap(m, big_m, gamma),
            "klmc2_step_cap": klmc2_step_cap(m, big_m, m2, p, gamma)?,
            "klmc_iterations": k,
            "klmc_iterations_real": k_real,
            "lmc_iterations": k_lmc,
            "bound_at_k": klmc_bound(k, &b).total(),
            "regime": regime,
        }),
        artifacts: vec!["tune.csv".into()],
    })
}

fn regions(cfg: &ExperimentConfig, out: &Path) -> Res<Outcome> {
    let r = &cfg.regions;
    let cells = region_sweep(r.log10_scale, r.log10_kappa, r.n_scale, r.n_kappa, r.w2_over_eps)?;
    write_region_csv(&cells, BufWriter::new(File::create(out.join("regions.csv"))?))?;
    let klmc = cells.iter().filter(|c| c.winner == klmc_core::tuning::Regime::Klmc).count();
    Ok(Outcome {
        summary: json!({ "cells": cells.len(), "klmc_cells": klmc, "lmc_cells": cells.len() - klmc }),
        artifacts: vec!["regions.csv".into()],
    })
}
