//! Batch entry point: dispatches a validated config to the simulation
//! harness, the estimators, the prior audit or the asymptotics experiments,
//! and writes every output atomically under the output directory.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{nvar_experiment, run_rate_experiment};
use crate::competitors::{bdml_estimate_chains, fit_method, EstimateSummary, Method};
use crate::config::{ExperimentConfig, Mode};
use crate::dataset_io::load_dataset;
use crate::dgp::SimDesign;
use crate::error::{Error, Result};
use crate::harness::{report_markdown, run_grid, to_csv, write_atomic, write_report};
use crate::prior_audit::{induced_alpha_prior, prior_selection_bias, SbModel, SbPrior, SigmaXSpec};
use crate::rng::{derive_seed, label_hash};
use crate::stats::{log_log_slope, mean, quantile_sorted, sorted_copy, std_dev};

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for a runtime failure.
pub const EXIT_RUNTIME: i32 = 1;
/// Exit code for a usage or configuration error.
pub const EXIT_USAGE: i32 = 2;

/// What a run produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub mode: &'static str,
    pub out: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Exit code for an error under the stable contract.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

/// Machine-readable form of an error.
pub fn error_json(err: &Error) -> Value {
    let mut body = json!({ "kind": err.kind(), "message": err.to_string() });
    if let Error::Config { key, .. } = err {
        body["key"] = json!(key);
    }
    json!({ "error": body })
}

struct Writer {
    out: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(name);
        write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        self.put(name, &to_csv(rows)?)
    }
}

/// Validates the config and runs its mode.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let mode = config.mode.ok_or_else(|| {
        Error::config(
            "mode",
            "no mode given; use simulate, estimate, prior-audit or asymptotics",
        )
    })?;
    let mut w = Writer {
        out: config.out.clone(),
        files: Vec::new(),
    };
    w.json("config.json", config)?;
    let summary = match mode {
        Mode::Simulate => simulate(config, &mut w)?,
        Mode::Estimate => estimate(config, &mut w)?,
        Mode::PriorAudit => prior_audit(config, &mut w)?,
        Mode::Asymptotics => asymptotics(config, &mut w)?,
    };
    w.json("summary.json", &summary)?;
    Ok(RunOutcome {
        mode: mode.as_str(),
        out: w.out,
        files: w.files,
        summary,
    })
}

fn simulate(config: &ExperimentConfig, w: &mut Writer) -> Result<Value> {
    let report = match run_grid(&config.grid()) {
        Ok(r) => r,
        Err(Error::TooManyFailures {
            failed,
            total,
            report,
        }) => {
            // Keep the partial results for inspection before failing.
            write_report(&report, &w.out, true)?;
            return Err(Error::TooManyFailures {
                failed,
                total,
                report,
            });
        }
        Err(e) => return Err(e),
    };
    write_report(&report, &w.out, config.save_draws)?;
    w.files.push(w.out.join("report.csv"));
    w.files.push(w.out.join("report.md"));
    if config.save_draws {
        w.files.push(w.out.join("draws").join("replications.csv"));
    }
    Ok(json!({
        "mode": "simulate",
        "rows": report.rows,
        "failures": report.failures(),
        "table": report_markdown(&report),
    }))
}

#[derive(Serialize)]
struct EstimateRow {
    method: Method,
    point: f64,
    interval_lo: f64,
    interval_hi: f64,
    level: f64,
    rhat: Option<f64>,
}

fn estimate(config: &ExperimentConfig, w: &mut Writer) -> Result<Value> {
    let spec = config
        .dataset
        .as_ref()
        .ok_or_else(|| Error::config("dataset", "estimate mode needs a dataset"))?;
    let (data, ingestion) = load_dataset(&spec.path, &spec.outcome, &spec.treatment)?;
    let settings = config.fit_settings();
    let estimates = config
        .methods
        .iter()
        .map(|&m| {
            let seed = derive_seed(&[config.seed, label_hash(m.label())]);
            match m {
                Method::BdmlBasic | Method::BdmlHier if config.chains > 1 => bdml_estimate_chains(
                    &data,
                    m == Method::BdmlHier,
                    &settings,
                    config.chains,
                    seed,
                ),
                _ => fit_method(m, &data, &settings, seed),
            }
        })
        .collect::<Result<Vec<EstimateSummary>>>()?;
    let rows: Vec<EstimateRow> = estimates
        .iter()
        .map(|e| EstimateRow {
            method: e.method,
            point: e.point,
            interval_lo: e.interval_lo,
            interval_hi: e.interval_hi,
            level: e.level,
            rhat: e.diagnostics.get("rhat").and_then(Value::as_f64),
        })
        .collect();
    w.csv("estimates.csv", &rows)?;
    Ok(json!({
        "mode": "estimate",
        "dataset": spec.path,
        "ingestion": ingestion,
        "estimates": estimates,
    }))
}

#[derive(Serialize)]
struct SbRow {
    model: SbModel,
    p: usize,
    mean: f64,
    sd: f64,
    q05: f64,
    q95: f64,
}

#[derive(Serialize)]
struct SbDraw {
    model: SbModel,
    p: usize,
    draw: usize,
    sb: f64,
}

fn prior_audit(config: &ExperimentConfig, w: &mut Writer) -> Result<Value> {
    let pa = &config.prior_audit;
    let mut rows = Vec::new();
    let mut draws_out = Vec::new();
    let mut slopes = Vec::new();
    for model in [SbModel::Naive, SbModel::Bdml] {
        let mut sds = Vec::new();
        for &p in &pa.p_grid {
            let prior = SbPrior {
                nu0: pa.nu0,
                sigma0: pa.sigma0,
                ..SbPrior::reference(p)
            };
            let sb = prior_selection_bias(
                model,
                &prior,
                p,
                &SigmaXSpec::Identity,
                pa.draws,
                config.seed,
            )?;
            let sorted = sorted_copy(&sb);
            let sd = std_dev(&sb);
            sds.push(sd);
            rows.push(SbRow {
                model,
                p,
                mean: mean(&sb),
                sd,
                q05: quantile_sorted(&sorted, 0.05),
                q95: quantile_sorted(&sorted, 0.95),
            });
            if config.save_draws {
                draws_out.extend(sb.iter().enumerate().map(|(draw, &v)| SbDraw {
                    model,
                    p,
                    draw,
                    sb: v,
                }));
            }
        }
        let pf: Vec<f64> = pa.p_grid.iter().map(|&p| p as f64).collect();
        let (slope, slope_se) = log_log_slope(&pf, &sds);
        slopes.push(json!({ "model": model, "slope": slope, "slope_se": slope_se }));
    }
    w.csv("sb_dispersion.csv", &rows)?;
    if config.save_draws {
        w.csv("sb_samples.csv", &draws_out)?;
    }
    let induced = induced_alpha_prior(pa.nu0, &pa.sigma0)?;
    Ok(json!({
        "mode": "prior-audit",
        "draws": pa.draws,
        "dispersion": rows,
        "slopes": slopes,
        "induced_alpha_prior": induced,
    }))
}

#[derive(Serialize)]
struct RateCsvRow {
    n: usize,
    p: usize,
    tau: f64,
    method: &'static str,
    bias: f64,
    se: f64,
    nvar: f64,
    prediction: Option<f64>,
}

fn asymptotics(config: &ExperimentConfig, w: &mut Writer) -> Result<Value> {
    let report = run_rate_experiment(&config.rate_experiment(), config.workers)?;
    let rows: Vec<RateCsvRow> = report
        .rows
        .iter()
        .map(|r| RateCsvRow {
            n: r.n,
            p: r.p,
            tau: r.tau,
            method: r.method.label(),
            bias: r.mean_bias,
            se: r.mc_se,
            nvar: r.nvar,
            prediction: r.prediction,
        })
        .collect();
    w.csv("rates.csv", &rows)?;
    w.csv("rate_gaps.csv", &report.gaps)?;
    let slopes: Vec<Value> = report
        .slopes
        .iter()
        .map(|(m, s, se)| json!({ "method": m.label(), "slope": s, "slope_se": se }))
        .collect();
    let mut summary = json!({
        "mode": "asymptotics",
        "gaps": report.gaps,
        "bias_slopes": slopes,
    });
    if let Some(nv) = &config.asymptotics.nvar {
        let mut design = SimDesign::with_size(nv.n, nv.p, 1.0);
        design.seed = config.seed;
        let nrows = nvar_experiment(
            &design,
            &nv.methods,
            nv.reps,
            &config.fit_settings(),
            config.workers,
        )?;
        w.csv("nvar.csv", &nrows)?;
        summary["nvar"] = json!(nrows);
    }
    Ok(summary)
}
