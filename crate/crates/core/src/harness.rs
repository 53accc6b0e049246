//! Replication engine: every method on fresh draws of the reference design
//! across a grid of outcome noise levels, summarised by RMSE, coverage and
//! average interval width.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::competitors::{fit_method, EstimateSummary, FitSettings, Method};
use crate::dgp::{generate_replication, SimDesign};
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::{derive_seed, label_hash};

/// Replication failures tolerated before a run is aborted.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Anything that turns a dataset into a point estimate and interval for α.
pub trait Estimator: Sync {
    fn label(&self) -> String;
    fn fit(&self, data: &Dataset, seed: u64) -> Result<EstimateSummary>;
}

/// A library method with fixed settings.
#[derive(Debug, Clone, Copy)]
pub struct MethodEstimator {
    pub method: Method,
    pub settings: FitSettings,
}

impl Estimator for MethodEstimator {
    fn label(&self) -> String {
        self.method.label().to_string()
    }

    fn fit(&self, data: &Dataset, seed: u64) -> Result<EstimateSummary> {
        fit_method(self.method, data, &self.settings, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n: usize,
    pub p: usize,
    pub sigma_eps: Vec<f64>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub master_seed: u64,
    pub settings: FitSettings,
    pub workers: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 200,
            p: 100,
            sigma_eps: vec![1.0, 2.0, 4.0],
            methods: Method::TABLE.to_vec(),
            reps: 200,
            master_seed: 0,
            settings: FitSettings::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub sigma_eps: f64,
    pub n: usize,
    pub p: usize,
    pub coverage: f64,
    pub rmse: f64,
    pub avg_width: f64,
    pub reps: usize,
    pub failures: usize,
    pub mc_se_coverage: f64,
}

/// One fit of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub method: String,
    pub sigma_eps: f64,
    pub rep: usize,
    pub truth: f64,
    pub point: Option<f64>,
    pub interval_lo: Option<f64>,
    pub interval_hi: Option<f64>,
    pub covered: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub rows: Vec<ReportRow>,
    pub replications: Vec<ReplicationRecord>,
}

impl SimReport {
    pub fn row(&self, method: &str, sigma_eps: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.sigma_eps == sigma_eps)
    }

    pub fn failures(&self) -> usize {
        self.replications
            .iter()
            .filter(|r| r.error.is_some())
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub coverage: f64,
    pub width: f64,
}

/// RMSE of the points, share of intervals containing `truth` (endpoints
/// count as covered) and mean interval width.
pub fn metrics(points: &[f64], intervals: &[(f64, f64)], truth: f64) -> Result<Metrics> {
    if points.is_empty() {
        return Err(Error::invalid("metrics need at least one replication"));
    }
    if points.len() != intervals.len() {
        return Err(Error::Dimension {
            what: "intervals",
            expected: points.len(),
            got: intervals.len(),
        });
    }
    let k = points.len() as f64;
    let rmse = (points.iter().map(|p| (p - truth).powi(2)).sum::<f64>() / k).sqrt();
    let covered = intervals
        .iter()
        .filter(|(lo, hi)| *lo <= truth && truth <= *hi)
        .count();
    let width = intervals.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / k;
    Ok(Metrics {
        rmse,
        coverage: covered as f64 / k,
        width,
    })
}

/// Design seed of one noise level: shared by every method, so methods are
/// compared on the same data.
pub fn design_seed(master: u64, sigma_eps: f64) -> u64 {
    derive_seed(&[master, sigma_eps.to_bits()])
}

/// Seed of one method's fit of one replication.
pub fn fit_seed(master: u64, label: &str, sigma_eps: f64, rep: usize) -> u64 {
    derive_seed(&[master, label_hash(label), sigma_eps.to_bits(), rep as u64])
}

pub fn run_grid(config: &GridConfig) -> Result<SimReport> {
    let estimators: Vec<MethodEstimator> = config
        .methods
        .iter()
        .map(|&method| MethodEstimator {
            method,
            settings: config.settings,
        })
        .collect();
    let refs: Vec<&dyn Estimator> = estimators.iter().map(|e| e as &dyn Estimator).collect();
    run_grid_with(config, &refs)
}

/// Runs `estimators` instead of `config.methods`.
pub fn run_grid_with(config: &GridConfig, estimators: &[&dyn Estimator]) -> Result<SimReport> {
    if config.reps == 0 || estimators.is_empty() || config.sigma_eps.is_empty() {
        return Err(Error::invalid(
            "grid needs reps >= 1, a method and a noise level",
        ));
    }
    let designs: Vec<SimDesign> = config
        .sigma_eps
        .iter()
        .map(|&s| {
            let mut d = SimDesign::with_size(config.n, config.p, s);
            d.seed = design_seed(config.master_seed, s);
            d.validate().map(|_| d)
        })
        .collect::<Result<_>>()?;
    let labels: Vec<String> = estimators.iter().map(|e| e.label()).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    // one task per (noise level, replication); every method fits the same draw
    let tasks: Vec<(usize, usize)> = (0..designs.len())
        .flat_map(|s| (0..config.reps).map(move |r| (s, r)))
        .collect();
    let results: Vec<Vec<ReplicationRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, rep)| {
                let design = &designs[s];
                let sigma = design.sigma_eps;
                let generated = generate_replication(design, rep as u64);
                estimators
                    .iter()
                    .zip(&labels)
                    .map(|(est, label)| {
                        let record = |truth, fit: Result<EstimateSummary>| match fit {
                            Ok(e) => ReplicationRecord {
                                method: label.clone(),
                                sigma_eps: sigma,
                                rep,
                                truth,
                                point: Some(e.point),
                                interval_lo: Some(e.interval_lo),
                                interval_hi: Some(e.interval_hi),
                                covered: Some(e.covers(truth)),
                                error: None,
                            },
                            Err(err) => ReplicationRecord {
                                method: label.clone(),
                                sigma_eps: sigma,
                                rep,
                                truth,
                                point: None,
                                interval_lo: None,
                                interval_hi: None,
                                covered: None,
                                error: Some(err.to_string()),
                            },
                        };
                        match &generated {
                            Ok((data, truth)) => {
                                let seed = fit_seed(config.master_seed, label, sigma, rep);
                                record(truth.alpha, est.fit(data, seed))
                            }
                            Err(e) => record(design.alpha, Err(Error::invalid(e.to_string()))),
                        }
                    })
                    .collect()
            })
            .collect()
    });

    let mut replications = Vec::with_capacity(results.len() * estimators.len());
    for k in 0..labels.len() {
        for task in &results {
            replications.push(task[k].clone());
        }
    }
    let mut rows = Vec::new();
    for label in &labels {
        for (s, design) in designs.iter().enumerate() {
            let recs: Vec<&ReplicationRecord> = replications
                .iter()
                .filter(|r| &r.method == label && r.sigma_eps == config.sigma_eps[s])
                .collect();
            let ok: Vec<&&ReplicationRecord> = recs.iter().filter(|r| r.error.is_none()).collect();
            let failures = recs.len() - ok.len();
            let points: Vec<f64> = ok
                .iter()
                .map(|r| r.point.expect("successful fit"))
                .collect();
            let intervals: Vec<(f64, f64)> = ok
                .iter()
                .map(|r| {
                    (
                        r.interval_lo.expect("successful fit"),
                        r.interval_hi.expect("successful fit"),
                    )
                })
                .collect();
            let m = if ok.is_empty() {
                Metrics {
                    rmse: f64::NAN,
                    coverage: f64::NAN,
                    width: f64::NAN,
                }
            } else {
                metrics(&points, &intervals, design.alpha)?
            };
            let k = ok.len().max(1) as f64;
            rows.push(ReportRow {
                method: label.clone(),
                sigma_eps: design.sigma_eps,
                n: design.n,
                p: design.p,
                coverage: m.coverage,
                rmse: m.rmse,
                avg_width: m.width,
                reps: config.reps,
                failures,
                mc_se_coverage: (m.coverage * (1.0 - m.coverage) / k).sqrt(),
            });
        }
    }
    let report = SimReport { rows, replications };
    let failed = report.failures();
    let total = report.replications.len();
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total,
            report: Box::new(report),
        });
    }
    Ok(report)
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// CSV serialisation of any row type.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::invalid(format!("csv serialisation: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid(format!("csv serialisation: {e}")))
}

/// Markdown table in the layout Method, σ_ε, n, p, Coverage, RMSE, Avg. Width.
pub fn report_markdown(report: &SimReport) -> String {
    let mut s = String::from("| Method | σ_ε | n | p | Coverage | RMSE | Avg. Width |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.2} | {:.2} | {:.2} |",
            r.method, r.sigma_eps, r.n, r.p, r.coverage, r.rmse, r.avg_width
        );
    }
    let failed = report.failures();
    if failed > 0 {
        let _ = writeln!(
            s,
            "\n{failed} replication fits failed; see draws/replications.csv."
        );
    }
    s
}

/// Writes `report.csv`, `report.md` and, if asked, `draws/replications.csv` under `dir`.
pub fn write_report(report: &SimReport, dir: &Path, with_draws: bool) -> Result<()> {
    write_atomic(&dir.join("report.csv"), &to_csv(&report.rows)?)?;
    write_atomic(&dir.join("report.md"), report_markdown(report).as_bytes())?;
    if with_draws {
        write_atomic(
            &dir.join("draws").join("replications.csv"),
            &to_csv(&report.replications)?,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Stub;

    impl Estimator for Stub {
        fn label(&self) -> String {
            "stub".into()
        }

        fn fit(&self, _: &Dataset, _: u64) -> Result<EstimateSummary> {
            Ok(EstimateSummary {
                method: Method::Ols,
                point: 2.0,
                interval_lo: 1.0,
                interval_hi: 3.0,
                level: 0.95,
                diagnostics: Default::default(),
            })
        }
    }

    struct Flaky(AtomicUsize, usize);

    impl Estimator for Flaky {
        fn label(&self) -> String {
            "flaky".into()
        }

        fn fit(&self, data: &Dataset, seed: u64) -> Result<EstimateSummary> {
            // the first `self.1` calls fail
            if self.0.fetch_add(1, Ordering::Relaxed) < self.1 {
                return Err(Error::DegenerateData("synthetic failure".into()));
            }
            Stub.fit(data, seed)
        }
    }

    fn small() -> GridConfig {
        GridConfig {
            n: 30,
            p: 5,
            sigma_eps: vec![1.0],
            reps: 40,
            ..Default::default()
        }
    }

    #[test]
    fn metrics_hand_values() {
        let m = metrics(&[1.0, 3.0], &[(1.9, 2.1), (3.0, 4.0)], 2.0).unwrap();
        assert!((m.rmse - 1.0).abs() < 1e-15);
        assert_eq!(m.coverage, 0.5);
        assert!((m.width - 0.6).abs() < 1e-12);
        let m = metrics(&[2.0], &[(2.0, 2.0)], 2.0).unwrap();
        assert_eq!((m.rmse, m.coverage, m.width), (0.0, 1.0, 0.0));
        assert!(metrics(&[], &[], 2.0).is_err());
    }

    #[test]
    fn stub_estimator_gives_exact_metrics() {
        let r = run_grid_with(&small(), &[&Stub]).unwrap();
        let row = r.row("stub", 1.0).unwrap();
        assert_eq!(
            (row.rmse, row.coverage, row.avg_width, row.reps),
            (0.0, 1.0, 2.0, 40)
        );
        assert_eq!(row.mc_se_coverage, 0.0);
    }

    #[test]
    fn single_rep_single_method() {
        let cfg = GridConfig {
            reps: 1,
            methods: vec![Method::Ols],
            ..small()
        };
        let r = run_grid(&cfg).unwrap();
        let rec = &r.replications[0];
        let row = &r.rows[0];
        assert!((row.rmse - (rec.point.unwrap() - 2.0).abs()).abs() < 1e-15);
        assert_eq!(row.coverage, if rec.covered.unwrap() { 1.0 } else { 0.0 });
        assert!(
            (row.avg_width - (rec.interval_hi.unwrap() - rec.interval_lo.unwrap())).abs() < 1e-15
        );
    }

    #[test]
    fn failures_are_recorded_then_abort() {
        let tolerated = Flaky(AtomicUsize::new(0), 2);
        let r = run_grid_with(&small(), &[&tolerated, &Stub]).unwrap();
        assert_eq!(r.failures(), 2);
        let row = r.row("flaky", 1.0).unwrap();
        assert_eq!((row.failures, row.reps, row.coverage), (2, 40, 1.0));
        let many = Flaky(AtomicUsize::new(0), 3);
        match run_grid_with(&small(), &[&many]) {
            Err(Error::TooManyFailures {
                failed,
                total,
                report,
            }) => {
                assert_eq!(total, 40);
                assert_eq!(failed, 3);
                assert_eq!(report.failures(), failed);
                assert!(report.replications.iter().any(|r| r.error.is_some()));
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn worker_count_does_not_change_report() {
        let cfg = GridConfig {
            methods: vec![Method::Ols, Method::FdmlSplit],
            reps: 6,
            settings: FitSettings {
                chain: crate::bayes_lm::ChainSettings::new(200, 50).unwrap(),
                ..Default::default()
            },
            ..small()
        };
        let a = run_grid(&cfg).unwrap();
        let b = run_grid(&GridConfig {
            workers: 3,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(to_csv(&a.rows).unwrap(), to_csv(&b.rows).unwrap());
        assert_eq!(a.replications, b.replications);
    }

    #[test]
    fn report_files_written() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_grid_with(&small(), &[&Stub]).unwrap();
        write_report(&r, dir.path(), true).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert!(csv.starts_with(
            "method,sigma_eps,n,p,coverage,rmse,avg_width,reps,failures,mc_se_coverage"
        ));
        assert_eq!(csv.lines().count(), 2);
        let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
        assert!(md.contains("| stub | 1 | 30 | 5 | 1.00 | 0.00 | 2.00 |"));
        assert!(dir.path().join("draws/replications.csv").exists());
    }
}
