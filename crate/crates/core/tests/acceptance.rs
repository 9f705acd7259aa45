//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines always
//! reach the console.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use topk_ga::anticoncentration::{
    gaussian_max_expectations, gaussian_pair_comparison, levy_bound, levy_concentration, log_log_slope,
    square_sum_anticoncentration, GaussianPairSpec,
};
use topk_ga::bootstrap::{approx_stat_experiment, coverage_experiment, ApproxStatSpec, CoverageSettings, Transform};
use topk_ga::experiments::{
    nonincreasing_within, rho_d_square_experiment, rho_kappa_experiment, statistic_cell, DecayExperimentSpec,
    RegimeKnobs, ZMode,
};
use topk_ga::harness::{run_config, Experiment, RunConfig, RESULTS_FILE};
use topk_ga::order_stats::{kth_largest, square_sum_top_d, top_k_sum, KappaSpec, Statistic};
use topk_ga::randgen::{CovarianceKind, CovarianceModel, Family, GeneratorSpec};
use topk_ga::smooth::{
    capacity, default_tolerance, derivative_bound_audit, grad_smooth_topk_sum, lipschitz_check, smooth_kth,
    smooth_kth_state, smooth_topk_sum, AuditOptions, SmoothingParam, TestFunctional,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_vec(rng: &mut ChaCha8Rng, p: usize, scale: f64) -> Vec<f64> {
    (0..p).map(|_| scale * normal(rng)).collect()
}

fn ac1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let betas = [1.0, 10.0, 100.0];
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    for cell in 0..1000 {
        let p: usize = rng.random_range(3..=64);
        let kappa = rng.random_range(1..=p.div_ceil(2));
        let b = betas[cell % 3];
        let beta = SmoothingParam::new(b).unwrap();
        let x = random_vec(&mut rng, p, 3.0);
        let slack = 1e-9 + 10.0 * default_tolerance(p);
        let r = capacity(p, kappa).unwrap().value / b;
        let gap = top_k_sum(&x, kappa).unwrap() - smooth_topk_sum(&x, kappa, beta).unwrap().value;
        let f_gap = (smooth_kth(&x, kappa, beta).unwrap() - kth_largest(&x, kappa).unwrap()).abs();
        let ok = gap >= -slack && gap <= r + slack && f_gap <= r + slack;
        failures += (!ok) as usize;
        worst = worst.max((gap.max(f_gap) - r) / r.max(1e-300));
    }
    verdict(
        failures == 0,
        format!("1000 cells, {failures} violations, max (gap - R/β)/(R/β) = {worst:.3e}"),
    )
}

fn ac2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let betas = [1.0, 10.0, 100.0];
    let (mut max_rel, mut max_sum_err, mut min_comp) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut alpha_ok = true;
    for i in 0..100 {
        let p: usize = rng.random_range(3..=40);
        let kappa = rng.random_range(1..=p.div_ceil(2));
        let b = betas[i % 3];
        let beta = SmoothingParam::new(b).unwrap();
        let x = random_vec(&mut rng, p, 2.0);
        let g = grad_smooth_topk_sum(&x, kappa, beta).unwrap();
        let h = 1e-4 / b;
        let mut err = 0.0f64;
        for j in 0..p {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (smooth_topk_sum(&xp, kappa, beta).unwrap().value - smooth_topk_sum(&xm, kappa, beta).unwrap().value)
                / (2.0 * h);
            err = err.max((fd - g[j]).abs());
        }
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        max_rel = max_rel.max(err / gnorm);
        let st = smooth_kth_state(&x, kappa, beta).unwrap();
        let grad_f = st.gradient();
        max_sum_err = max_sum_err.max((grad_f.iter().sum::<f64>() - 1.0).abs());
        min_comp = grad_f.iter().cloned().fold(min_comp, f64::min);
        if let Some(lower) = &st.lower {
            alpha_ok &= st.upper.alpha < lower.alpha;
        }
    }
    verdict(
        max_rel <= 1e-5 && max_sum_err <= 1e-8 && min_comp >= -1e-12 && alpha_ok,
        format!(
            "max rel FD error {max_rel:.2e}, max |Σ∂F - 1| {max_sum_err:.2e}, min ∂F {min_comp:.2e}, α ordering {alpha_ok}"
        ),
    )
}

fn ac3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut lip_viol = 0;
    let mut max_ratio = 0.0f64;
    for _ in 0..1000 {
        let p: usize = rng.random_range(3..=30);
        let kappa = rng.random_range(1..=p.div_ceil(2));
        let beta = SmoothingParam::new([1.0, 10.0, 100.0][rng.random_range(0..3)]).unwrap();
        let x = random_vec(&mut rng, p, 2.0);
        let z: Vec<f64> = x.iter().map(|v| v + normal(&mut rng)).collect();
        let r = lipschitz_check(&[(x, z)], kappa, beta, 0.0).unwrap();
        lip_viol += r.violations;
        max_ratio = max_ratio.max(r.max_ratio);
    }
    let opts = AuditOptions::default();
    let (mut audits, mut audit_fail) = (0, 0);
    let mut worst = 0.0f64;
    for b in [1.0, 10.0] {
        let beta = SmoothingParam::new(b).unwrap();
        for g in [TestFunctional::Linear, TestFunctional::sine()] {
            for kappa in 1..=3 {
                for _ in 0..10 {
                    let x = random_vec(&mut rng, 5, 1.0 / b);
                    let r = derivative_bound_audit(&x, kappa, beta, &g, &opts).unwrap();
                    audits += 1;
                    audit_fail += (!(r.second_pass && r.third_pass)) as usize;
                    worst = worst.max(r.second_sum / r.second_bound).max(r.third_sum / r.third_bound);
                }
            }
        }
    }
    verdict(
        lip_viol == 0 && audit_fail == 0,
        format!(
            "Lipschitz: {lip_viol} violations, max ratio {max_ratio:.4}; derivative audits: {audit_fail}/{audits} failed, max sum/bound {worst:.3} (slack {})",
            opts.slack
        ),
    )
}

fn subsets(p: usize, k: usize) -> impl Iterator<Item = u32> {
    (0u32..(1 << p)).filter(move |m| m.count_ones() as usize == k)
}

fn ac4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut mismatches = 0;
    let mut checks = 0;
    for _ in 0..200 {
        let p: usize = rng.random_range(1..=12);
        // dyadic grid: every subset sum is exact, so equality is meaningful
        let x: Vec<f64> = (0..p).map(|_| rng.random_range(-64i32..=64) as f64 / 8.0).collect();
        for k in 1..=p.min(6) {
            let brute = subsets(p, k)
                .map(|m| (0..p).filter(|j| m >> j & 1 == 1).map(|j| x[j]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            let brute_sq = subsets(p, k)
                .map(|m| (0..p).filter(|j| m >> j & 1 == 1).map(|j| x[j] * x[j]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            mismatches += (top_k_sum(&x, k).unwrap() != brute) as usize;
            mismatches += (square_sum_top_d(&x, k).unwrap() != brute_sq) as usize;
            checks += 2;
        }
    }
    verdict(mismatches == 0, format!("{checks} exhaustive comparisons, {mismatches} mismatches"))
}

fn decay_spec(
    family: Family,
    covariance: CovarianceKind,
    p: usize,
    n_ladder: Vec<usize>,
    kappa: Option<usize>,
    d: Option<usize>,
    seed: u64,
) -> DecayExperimentSpec {
    DecayExperimentSpec {
        generator: GeneratorSpec::new(family, covariance, p, 0),
        n_ladder,
        p_ladder: vec![],
        kappa: kappa.map(KappaSpec::fixed),
        d,
        mc_reps: 2000,
        z_mode: ZMode::Population,
        regime: RegimeKnobs::default(),
        seed,
    }
}

fn ac5() -> Verdict {
    let ceiling = 1.5 * 1.36 * (2.0f64 / 2000.0).sqrt();
    let ladder = vec![50, 200, 800];
    let rk = rho_kappa_experiment(&decay_spec(
        Family::Gaussian,
        CovarianceKind::Equicorrelated { rho: 0.2 },
        50,
        ladder.clone(),
        Some(3),
        None,
        505,
    ))
    .unwrap();
    let rd =
        rho_d_square_experiment(&decay_spec(Family::Gaussian, CovarianceKind::Identity, 20, ladder, None, Some(2), 506))
            .unwrap();
    let max = rk.max_estimate().max(rd.max_estimate());
    let cells: Vec<String> = rk.cells.iter().chain(&rd.cells).map(|c| format!("{:.4}", c.estimate)).collect();
    verdict(
        max <= ceiling,
        format!("ρ̂ cells [{}], max {max:.4} vs ceiling {ceiling:.4}", cells.join(", ")),
    )
}

fn ac6_config() -> RunConfig {
    RunConfig {
        experiment: Experiment::RhoKappa(decay_spec(
            Family::Rademacher,
            CovarianceKind::Equicorrelated { rho: 0.2 },
            50,
            vec![50, 200, 800],
            Some(3),
            None,
            0,
        )),
        seed: 606,
        out_dir: None,
    }
}

fn read_rho(dir: &Path) -> Vec<(usize, f64, f64)> {
    let mut rdr = csv::Reader::from_path(dir.join(RESULTS_FILE)).unwrap();
    rdr.deserialize::<topk_ga::harness::Row>()
        .map(|r| r.unwrap())
        .filter(|r| r.metric == "ks")
        .map(|r| (r.n.unwrap(), r.estimate, r.mc_se.unwrap()))
        .collect()
}

fn ac6(dir: &Path) -> Verdict {
    let config = ac6_config();
    let raw = serde_json::to_string(&config).unwrap();
    run_config(&config, &raw, None, dir).unwrap();
    let cells = read_rho(dir);
    let nonincreasing = cells
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + 2.0 * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt());
    let last = cells.last().unwrap().1;
    let shown: Vec<String> = cells.iter().map(|(n, e, s)| format!("n={n}: {e:.4}±{s:.4}")).collect();
    verdict(
        nonincreasing && last <= 0.05,
        format!("{}; nonincreasing {nonincreasing}, ρ̂(800) = {last:.4} ≤ 0.05", shown.join(", ")),
    )
}

fn coverage_setup() -> (GeneratorSpec, CoverageSettings) {
    let gen = GeneratorSpec::new(Family::Rademacher, CovarianceKind::Identity, 100, 0);
    let mut settings = CoverageSettings::new(200, KappaSpec::fixed(2), vec![0.90, 0.95]);
    settings.replicates = 500;
    settings.mc_reps = 1000;
    (gen, settings)
}

const COVERAGE_SEED: u64 = 707;

fn ac7() -> (Verdict, Vec<f64>) {
    let (gen, settings) = coverage_setup();
    let r = coverage_experiment(&gen, &settings, COVERAGE_SEED).unwrap();
    let errs: Vec<String> = r
        .rows
        .iter()
        .map(|row| format!("α={}: coverage {:.3} (err {:.3})", row.alpha, row.coverage, row.coverage_error))
        .collect();
    (
        verdict(r.max_coverage_error() <= 0.03, errs.join(", ")),
        r.rows.iter().map(|row| row.coverage).collect(),
    )
}

fn ac8(base: &[f64]) -> Verdict {
    let (gen, settings) = coverage_setup();
    let mut pass = true;
    let mut lines = Vec::new();
    for (label, transform) in [("shift", Transform::Shift { delta: 0.01 }), ("noisy", Transform::Noisy)] {
        let spec = ApproxStatSpec {
            zeta1: 0.01,
            zeta2: 0.01,
            transform,
            c3: 1.0,
        };
        let r = approx_stat_experiment(&spec, &gen, &settings, COVERAGE_SEED).unwrap();
        for (row, b) in r.rows.iter().zip(base) {
            let same_cells = row.exact_coverage == *b;
            pass &= row.degradation <= 0.02 && same_cells;
            lines.push(format!(
                "{label} α={}: {:.3} vs {:.3} (degradation {:+.3})",
                row.alpha, row.coverage, row.exact_coverage, row.degradation
            ));
        }
    }
    verdict(pass, lines.join(", "))
}

fn ac9() -> Verdict {
    let model = CovarianceModel::new(CovarianceKind::Equicorrelated { rho: 0.3 }, 100).unwrap();
    let draws = 200_000;
    let a_p = gaussian_max_expectations(&model, draws, 900).unwrap().a_p;
    let eps = [0.01, 0.05];
    let mut pass = true;
    let mut lines = Vec::new();
    for (i, kappa) in [1usize, 3].into_iter().enumerate() {
        let est = levy_concentration(&model, Statistic::KthLargest { kappa }, &eps, draws, 901 + i as u64).unwrap();
        for e in &est {
            let bound = levy_bound(kappa, e.epsilon, a_p, 1.0);
            pass &= e.value <= bound + 3.0 * e.mc_se;
            lines.push(format!("κ={kappa} ε={}: {:.4} ≤ {bound:.3}", e.epsilon, e.value));
        }
        let slope = log_log_slope(&eps, &est.iter().map(|e| e.value).collect::<Vec<_>>()).unwrap();
        pass &= (0.8..=1.2).contains(&slope);
        lines.push(format!("κ={kappa} slope {slope:.3}"));
    }
    verdict(pass, lines.join(", "))
}

fn ac10() -> Verdict {
    let mut pass = true;
    let mut lines = Vec::new();
    for (i, p) in [10usize, 100, 1000].into_iter().enumerate() {
        let m = gaussian_max_expectations(&CovarianceModel::identity(p), 100_000, 1000 + i as u64).unwrap();
        pass &= m.within_bounds(3.0);
        lines.push(format!(
            "p={p}: a_p {:.3} ≤ {:.3}, ā_p {:.3} ≤ {:.3}",
            m.a_p, m.a_bound, m.abar_p, m.abar_bound
        ));
    }
    let two = gaussian_max_expectations(&CovarianceModel::identity(2), 400_000, 1010).unwrap();
    let target = 1.0 / std::f64::consts::PI.sqrt();
    let ok2 = (two.a_p - target).abs() <= 3.0 * two.a_p_se;
    pass &= ok2;
    lines.push(format!("p=2: a_p {:.4} vs 1/√π {target:.4} (se {:.4})", two.a_p, two.a_p_se));
    verdict(pass, lines.join(", "))
}

fn ac11() -> Verdict {
    let p = 100;
    let pair = GaussianPairSpec::new(
        CovarianceModel::new(CovarianceKind::Equicorrelated { rho: 0.1 }, p).unwrap(),
        CovarianceModel::identity(p),
    )
    .unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for (i, kappa) in [1usize, 3].into_iter().enumerate() {
        let r = gaussian_pair_comparison(&pair, &KappaSpec::fixed(kappa), &[1.0, 0.1, 0.01], 50_000, 1100 + i as u64)
            .unwrap();
        let slope = r.slope.unwrap_or(f64::NAN);
        pass &= r.strictly_decreasing && (0.3..=1.1).contains(&slope);
        let ks: Vec<String> = r.ladder.iter().map(|l| format!("{:.4}", l.ks)).collect();
        lines.push(format!(
            "κ={kappa}: KS [{}] at Σ-gap [0.1, 0.01, 0.001], strictly decreasing {}, slope {slope:.3}",
            ks.join(", "),
            r.strictly_decreasing
        ));
    }
    verdict(pass, lines.join("; "))
}

fn ac12() -> Verdict {
    let spec = decay_spec(Family::Uniform, CovarianceKind::Identity, 20, vec![100, 400, 1600], None, Some(2), 1200);
    let r = rho_d_square_experiment(&spec).unwrap();
    let nonincreasing = nonincreasing_within(&r.cells);
    let last = r.cells.last().unwrap().estimate;
    let cells: Vec<String> = r.cells.iter().map(|c| format!("{:.4}", c.estimate)).collect();

    let model = CovarianceModel::identity(20);
    let window = square_sum_anticoncentration(&model, 2, &[0.05, 0.1, 0.2], 200_000, 1201, 0.0, 1.0).unwrap();
    let slope = window.slope.unwrap_or(f64::NAN);

    let gen = spec.generator.build().unwrap();
    let (sq, sq_se) = statistic_cell(&gen, 400, Statistic::SquareSumTop { d: 1 }, 2000, 1202).unwrap();
    let (kk, kk_se) = statistic_cell(&gen, 400, Statistic::KthLargestOfSquares { kappa: 1 }, 2000, 1203).unwrap();
    let joint = (sq_se.powi(2) + kk_se.powi(2)).sqrt();
    let cross = (sq - kk).abs() <= 2.0 * joint;

    verdict(
        nonincreasing && last <= 0.06 && (0.8..=1.2).contains(&slope) && cross,
        format!(
            "ρ̂_d [{}], nonincreasing {nonincreasing}, final {last:.4} ≤ 0.06; window slope {slope:.3}; d=1 {sq:.4} vs κ=1 of squares {kk:.4} (2·joint se {:.4})",
            cells.join(", "),
            2.0 * joint
        ),
    )
}

fn ac13(reference: &Path, scratch: &Path) -> Verdict {
    let config = ac6_config();
    let raw = serde_json::to_string(&config).unwrap();
    let want = std::fs::read(reference.join(RESULTS_FILE)).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for threads in [1usize, 3, 8] {
        let dir = scratch.join(format!("t{threads}"));
        run_config(&config, &raw, Some(threads), &dir).unwrap();
        let same = std::fs::read(dir.join(RESULTS_FILE)).unwrap() == want;
        pass &= same;
        lines.push(format!("{threads} threads: {}", if same { "identical" } else { "DIFFERENT" }));
    }
    verdict(pass, format!("criterion-6 CSV rerun: {}", lines.join(", ")))
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let ac6_dir = scratch.path().join("ac6");
    let mut coverage_base = Vec::new();
    let mut results: Vec<(&str, Duration, Duration, Verdict)> = Vec::new();
    let mut run = |id: &'static str, limit_s: u64, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let line = (id, t.elapsed(), Duration::from_secs(limit_s), v);
        let (id, el, lim, v) = &line;
        let ok = v.pass && el <= lim;
        println!(
            "{id} {} [{:.1}s / {}s] {}",
            if ok { "PASS" } else { "FAIL" },
            el.as_secs_f64(),
            lim.as_secs(),
            v.detail
        );
        results.push(line);
    };
    run("AC1", 10, &mut ac1);
    run("AC2", 10, &mut ac2);
    run("AC3", 60, &mut ac3);
    run("AC4", 10, &mut ac4);
    run("AC5", 120, &mut ac5);
    run("AC6", 300, &mut || ac6(&ac6_dir));
    run("AC7", 600, &mut || {
        let (v, base) = ac7();
        coverage_base = base;
        v
    });
    let base = coverage_base.clone();
    run("AC8", 600, &mut || ac8(&base));
    run("AC9", 120, &mut ac9);
    run("AC10", 60, &mut ac10);
    run("AC11", 180, &mut ac11);
    run("AC12", 300, &mut ac12);
    run("AC13", 300, &mut || ac13(&ac6_dir, scratch.path()));

    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, el, lim, v)| !(v.pass && el <= lim))
        .map(|(id, ..)| *id)
        .collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
