use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::{json, Value};

use super::output::{describe, sha256_hex, write_json, write_rows, Manifest, ManifestCell, Row};
use super::{AnticoncentrationConfig, AuditSmoothConfig, Experiment, GaussianPairConfig, RunConfig};
use crate::anticoncentration::{
    common_sigma, gaussian_max_expectations, gaussian_pair_comparison, levy_bound, levy_concentration, log_log_slope,
    square_sum_anticoncentration, GaussianPairSpec,
};
use crate::bootstrap::{approx_stat_experiment, coverage_experiment};
use crate::error::{Error, Result};
use crate::experiments::{
    diverging_kappa_experiment, functional_comparison, rho_d_square_experiment, rho_kappa_experiment, ExperimentReport,
};
use crate::order_stats::{KappaSpec, Statistic};
use crate::randgen::CovarianceModel;
use crate::rng::{stream, tag, SeedKey};
use crate::smooth::{derivative_bound_audit, lipschitz_check, AuditOptions, SmoothingParam};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// In-memory result of one run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub rows: Vec<Row>,
    /// Full experiment report as JSON.
    pub report: Value,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn opt_se(se: f64) -> Option<f64> {
    se.is_finite().then_some(se)
}

fn decay_rows(r: &ExperimentReport) -> Vec<Row> {
    let mut rows: Vec<Row> = r
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| Row {
            experiment: r.kind.clone(),
            cell: i,
            n: Some(c.n),
            p: Some(c.p),
            index: Some(c.index),
            param: c.regime.label.clone(),
            metric: "ks".into(),
            estimate: c.estimate,
            mc_se: Some(c.mc_se),
            reference: Some(c.noise_floor),
            regime_lhs: Some(c.regime.lhs),
            regime_flag: Some(c.regime.holds),
            pass: None,
            seed: c.seed,
        })
        .collect();
    let base = rows.len();
    for (j, l) in r.ladders.iter().enumerate() {
        rows.push(Row {
            experiment: r.kind.clone(),
            cell: base + j,
            p: Some(l.p),
            param: "ladder".into(),
            metric: "log_log_slope".into(),
            estimate: l.slope.unwrap_or(f64::NAN),
            pass: Some(l.nonincreasing),
            seed: r.spec.seed,
            ..Row::default()
        });
    }
    rows
}

/// Runs the experiment in the current rayon pool and collects its rows.
pub fn execute(config: &RunConfig) -> Result<RunOutcome> {
    let config = &config.with_seed(config.seed);
    config.validate()?;
    let seed = config.seed;
    let kind = config.experiment.kind().to_string();
    match &config.experiment {
        Experiment::RhoKappa(s) | Experiment::RhoD(s) | Experiment::Diverging(s) => {
            let r = match &config.experiment {
                Experiment::RhoKappa(_) => rho_kappa_experiment(s)?,
                Experiment::RhoD(_) => rho_d_square_experiment(s)?,
                _ => diverging_kappa_experiment(s)?,
            };
            Ok(RunOutcome {
                rows: decay_rows(&r),
                report: to_value(&r)?,
            })
        }
        Experiment::Coverage(c) => {
            let r = coverage_experiment(&c.generator, &c.settings, seed)?;
            let rows = r
                .rows
                .iter()
                .enumerate()
                .map(|(i, row)| Row {
                    experiment: kind.clone(),
                    cell: i,
                    n: Some(c.settings.n),
                    p: Some(c.generator.p),
                    index: Some(r.kappa),
                    param: format!("alpha={}", row.alpha),
                    metric: "coverage".into(),
                    estimate: row.coverage,
                    mc_se: Some(row.mc_se),
                    reference: Some(row.alpha),
                    pass: Some(row.lemma_holds),
                    seed,
                    ..Row::default()
                })
                .collect();
            Ok(RunOutcome {
                rows,
                report: to_value(&r)?,
            })
        }
        Experiment::ApproxCoverage(c) => {
            let r = approx_stat_experiment(&c.approx, &c.generator, &c.settings, seed)?;
            let mut rows = Vec::new();
            let base = Row {
                experiment: kind.clone(),
                n: Some(c.settings.n),
                p: Some(c.generator.p),
                index: Some(r.coverage.kappa),
                seed,
                ..Row::default()
            };
            for row in &r.rows {
                let param = format!("alpha={}", row.alpha);
                rows.push(Row {
                    cell: rows.len(),
                    param: param.clone(),
                    metric: "coverage".into(),
                    estimate: row.coverage,
                    mc_se: Some(row.mc_se),
                    reference: Some(row.alpha),
                    pass: Some(row.ordering_holds),
                    ..base.clone()
                });
                rows.push(Row {
                    cell: rows.len(),
                    param,
                    metric: "degradation".into(),
                    estimate: row.degradation,
                    reference: Some(row.exact_coverage),
                    ..base.clone()
                });
            }
            for (metric, rate, holds, reference) in [
                ("ap1_rate", r.ap1_rate, r.ap1_holds, c.approx.zeta2),
                ("ap2_rate", r.ap2_rate, r.ap2_holds, c.approx.zeta2),
            ] {
                rows.push(Row {
                    cell: rows.len(),
                    param: format!("zeta1={}", c.approx.zeta1),
                    metric: metric.into(),
                    estimate: rate,
                    reference: Some(reference),
                    pass: Some(holds),
                    ..base.clone()
                });
            }
            Ok(RunOutcome {
                rows,
                report: to_value(&r)?,
            })
        }
        Experiment::Anticoncentration(a) => anticoncentration(a, seed),
        Experiment::GaussianPair(g) => gaussian_pair(g, seed),
        Experiment::Functional(f) => {
            let r = functional_comparison(f)?;
            let rows = vec![
                Row {
                    experiment: kind.clone(),
                    cell: 0,
                    n: Some(f.n),
                    p: Some(f.generator.p),
                    index: Some(r.index),
                    param: r.g.clone(),
                    metric: "difference".into(),
                    estimate: r.difference,
                    mc_se: Some(r.mc_se),
                    reference: Some(r.bound_scale * r.bound),
                    regime_lhs: Some(r.gate_value),
                    regime_flag: Some(r.in_regime),
                    pass: None,
                    seed: r.seed,
                },
                Row {
                    experiment: kind.clone(),
                    cell: 1,
                    n: Some(f.n),
                    p: Some(f.generator.p),
                    index: Some(r.index),
                    param: r.g.clone(),
                    metric: "ratio".into(),
                    estimate: r.ratio,
                    seed: r.seed,
                    ..Row::default()
                },
            ];
            Ok(RunOutcome {
                rows,
                report: to_value(&r)?,
            })
        }
        Experiment::AuditSmooth(a) => audit_smooth(a, seed),
    }
}

fn cell_seed(master: u64, cell: usize) -> u64 {
    SeedKey::new(master).path(&[cell as u64]).value()
}

fn anticoncentration(a: &AnticoncentrationConfig, master: u64) -> Result<RunOutcome> {
    let model = CovarianceModel::new(a.covariance.clone(), a.p)?;
    let sigma = common_sigma(&model)
        .ok_or_else(|| Error::capability("the Lévy bound needs a model with equal variances"))?;
    let mut rows = Vec::new();
    let mut report = serde_json::Map::new();
    let maxes_seed = cell_seed(master, 0);
    let maxes = gaussian_max_expectations(&model, a.draws, maxes_seed)?;
    let base = Row {
        experiment: "anticoncentration".into(),
        p: Some(a.p),
        ..Row::default()
    };
    let mut levy = Vec::new();
    for (ki, &k) in a.kappas.iter().enumerate() {
        let seed = cell_seed(master, 1 + ki);
        let est = levy_concentration(&model, Statistic::KthLargest { kappa: k }, &a.epsilons, a.draws, seed)?;
        for e in &est {
            let bound = levy_bound(k, e.epsilon, maxes.a_p, sigma);
            rows.push(Row {
                cell: rows.len(),
                index: Some(k),
                param: format!("epsilon={}", e.epsilon),
                metric: "levy".into(),
                estimate: e.value,
                mc_se: Some(e.mc_se),
                reference: Some(bound),
                pass: Some(e.value <= bound + 3.0 * e.mc_se),
                seed,
                ..base.clone()
            });
        }
        let eps: Vec<f64> = est.iter().map(|e| e.epsilon).collect();
        let vals: Vec<f64> = est.iter().map(|e| e.value).collect();
        rows.push(Row {
            cell: rows.len(),
            index: Some(k),
            param: "epsilon ladder".into(),
            metric: "levy_slope".into(),
            estimate: log_log_slope(&eps, &vals).unwrap_or(f64::NAN),
            seed,
            ..base.clone()
        });
        levy.push(json!({ "kappa": k, "seed": seed, "estimates": est }));
    }
    report.insert("levy".into(), Value::Array(levy));
    report.insert("sigma".into(), json!(sigma));

    let dims = if a.maxima_dims.is_empty() { vec![a.p] } else { a.maxima_dims.clone() };
    let mut maxima = Vec::new();
    for (di, &p) in dims.iter().enumerate() {
        let (m, seed) = if p == a.p {
            (maxes, maxes_seed)
        } else {
            let seed = cell_seed(master, 1000 + di);
            let mdl = CovarianceModel::new(a.covariance.clone(), p)?;
            (gaussian_max_expectations(&mdl, a.draws, seed)?, seed)
        };
        for (metric, est, se, bound) in [
            ("a_p", m.a_p, m.a_p_se, m.a_bound),
            ("abar_p", m.abar_p, m.abar_p_se, m.abar_bound),
        ] {
            rows.push(Row {
                cell: rows.len(),
                p: Some(p),
                param: "maximal inequality".into(),
                metric: metric.into(),
                estimate: est,
                mc_se: Some(se),
                reference: Some(bound),
                pass: Some(est <= bound + 3.0 * se),
                seed,
                ..base.clone()
            });
        }
        maxima.push(json!({ "p": p, "seed": seed, "estimate": m }));
    }
    report.insert("maxima".into(), Value::Array(maxima));

    if let Some(sq) = &a.square_sum {
        let seed = cell_seed(master, 2000);
        let r = square_sum_anticoncentration(&model, sq.d, &sq.epsilons, a.draws, seed, sq.eigen_floor, sq.constant)?;
        for pt in &r.points {
            rows.push(Row {
                cell: rows.len(),
                index: Some(sq.d),
                param: format!("epsilon={}", pt.epsilon),
                metric: "window_mass".into(),
                estimate: pt.estimate,
                mc_se: Some(pt.mc_se),
                reference: Some(pt.bound),
                pass: Some(pt.within_bound),
                seed,
                ..base.clone()
            });
        }
        rows.push(Row {
            cell: rows.len(),
            index: Some(sq.d),
            param: "epsilon ladder".into(),
            metric: "window_slope".into(),
            estimate: r.slope.unwrap_or(f64::NAN),
            seed,
            ..base.clone()
        });
        report.insert("square_sum".into(), to_value(&r)?);
    }
    Ok(RunOutcome {
        rows,
        report: Value::Object(report),
    })
}

fn gaussian_pair(g: &GaussianPairConfig, master: u64) -> Result<RunOutcome> {
    let u = CovarianceModel::new(g.sigma_u.clone(), g.p)?;
    let v = CovarianceModel::new(g.sigma_v.clone(), g.p)?;
    let pair = GaussianPairSpec::new(u, v)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (ki, &k) in g.kappas.iter().enumerate() {
        let seed = cell_seed(master, ki);
        let r = gaussian_pair_comparison(&pair, &KappaSpec::fixed(k), &g.scales, g.draws, seed)?;
        let base = Row {
            experiment: "gaussian_pair".into(),
            p: Some(g.p),
            index: Some(k),
            seed,
            ..Row::default()
        };
        for pt in &r.ladder {
            rows.push(Row {
                cell: rows.len(),
                param: format!("sigma_gap={}", pt.sigma_gap),
                metric: "ks".into(),
                estimate: pt.ks,
                mc_se: opt_se(pt.ks_se),
                reference: Some(pt.bound_shape),
                ..base.clone()
            });
        }
        rows.push(Row {
            cell: rows.len(),
            param: "gap ladder".into(),
            metric: "log_log_slope".into(),
            estimate: r.slope.unwrap_or(f64::NAN),
            pass: Some(r.strictly_decreasing),
            ..base.clone()
        });
        reports.push(json!({ "seed": seed, "report": r }));
    }
    Ok(RunOutcome {
        rows,
        report: Value::Array(reports),
    })
}

fn audit_smooth(a: &AuditSmoothConfig, master: u64) -> Result<RunOutcome> {
    let kappas: Vec<usize> = if a.kappas.is_empty() {
        (1..=a.p.div_ceil(2).min(a.p - 1)).collect()
    } else {
        a.kappas.clone()
    };
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut cell = 0usize;
    for &k in &kappas {
        for &b in &a.betas {
            let beta = SmoothingParam::new(b)?;
            let seed = cell_seed(master, cell);
            cell += 1;
            let mut rng = stream(seed, &[tag::DATA]);
            let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..a.lipschitz_pairs)
                .map(|_| {
                    let x: Vec<f64> = (0..a.p).map(|_| normal()).collect();
                    let z: Vec<f64> = x.iter().map(|v| v + 0.5 * normal()).collect();
                    (x, z)
                })
                .collect();
            let lip = lipschitz_check(&pairs, k, beta, 0.0)?;
            let base = Row {
                experiment: "audit_smooth".into(),
                p: Some(a.p),
                index: Some(k),
                seed,
                ..Row::default()
            };
            rows.push(Row {
                cell: rows.len(),
                param: format!("beta={b}"),
                metric: "lipschitz_ratio".into(),
                estimate: lip.max_ratio,
                reference: Some(1.0),
                pass: Some(lip.violations == 0),
                ..base.clone()
            });
            let points: Vec<Vec<f64>> =
                (0..a.points).map(|_| (0..a.p).map(|_| 3.0 * normal()).collect()).collect();
            for g in &a.functionals {
                let opts = AuditOptions {
                    slack: a.slack,
                    ..AuditOptions::default()
                };
                for x in &points {
                    let r = derivative_bound_audit(x, k, beta, g, &opts)?;
                    let param = format!("beta={b};g={}", g.label());
                    rows.push(Row {
                        cell: rows.len(),
                        param: param.clone(),
                        metric: "second_sum".into(),
                        estimate: r.second_sum,
                        reference: Some(r.second_bound),
                        pass: Some(r.second_pass),
                        ..base.clone()
                    });
                    rows.push(Row {
                        cell: rows.len(),
                        param,
                        metric: "third_sum".into(),
                        estimate: r.third_sum,
                        reference: Some(r.third_bound),
                        pass: Some(r.third_pass),
                        ..base.clone()
                    });
                    reports.push(to_value(&r)?);
                }
            }
        }
    }
    Ok(RunOutcome {
        rows,
        report: Value::Array(reports),
    })
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Validates, runs with `threads` workers (all cores when `None`) and writes
/// `results.csv`, `summary.json` and `manifest.json` into `out_dir`.
pub fn run_config(config: &RunConfig, raw: &str, threads: Option<usize>, out_dir: &Path) -> Result<Manifest> {
    let config = &config.with_seed(config.seed);
    config.validate()?;
    let started = unix_now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::capability(format!("cannot start worker pool: {e}")))?;
    let workers = pool.current_num_threads();
    let outcome = pool.install(|| execute(config))?;
    fs::create_dir_all(out_dir)?;
    write_rows(&out_dir.join(RESULTS_FILE), &outcome.rows)?;
    write_json(
        &out_dir.join(SUMMARY_FILE),
        &json!({
            "experiment": config.experiment.kind(),
            "seed": config.seed,
            "config": config,
            "report": outcome.report,
        }),
    )?;
    let mut cells: Vec<ManifestCell> = outcome
        .rows
        .iter()
        .map(|r| ManifestCell {
            cell: r.cell,
            seed: r.seed,
        })
        .collect();
    cells.dedup();
    let mut manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: config.experiment.kind().into(),
        config_sha256: sha256_hex(raw.as_bytes()),
        master_seed: config.seed,
        threads: workers,
        started_unix: started,
        finished_unix: 0.0,
        cells,
        files: describe(out_dir, &[RESULTS_FILE, SUMMARY_FILE])?,
    };
    manifest.finished_unix = unix_now();
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Output directory: flag, then config, then `./out`.
pub fn resolve_out_dir(flag: Option<PathBuf>, config: &RunConfig) -> PathBuf {
    flag.or_else(|| config.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}
