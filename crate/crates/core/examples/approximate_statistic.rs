//! Coverage when the statistic is only approximately the κ-th largest
//! coordinate, next to the exact-statistic coverage on the same draws.

use topk_ga::bootstrap::{approx_stat_experiment, ApproxStatSpec, CoverageSettings, Transform};
use topk_ga::order_stats::KappaSpec;
use topk_ga::randgen::{CovarianceKind, Family, GeneratorSpec};

fn main() -> topk_ga::Result<()> {
    let gen = GeneratorSpec::new(Family::Uniform, CovarianceKind::Ar1 { rho: 0.4 }, 30, 0);
    let mut settings = CoverageSettings::new(100, KappaSpec::fixed(2), vec![0.9]);
    settings.mc_reps = 300;
    settings.replicates = 300;
    settings.z_reps = 20_000;
    for transform in [Transform::Shift { delta: 0.02 }, Transform::Noisy] {
        let spec = ApproxStatSpec {
            zeta1: 0.02,
            zeta2: 0.05,
            transform: transform.clone(),
            c3: 1.0,
        };
        let r = approx_stat_experiment(&spec, &gen, &settings, 9)?;
        let row = &r.rows[0];
        println!(
            "{transform:?}: coverage {:.3} vs exact {:.3}, P(|T-T_κ|>ζ₁) = {:.3}, penalty {:.4}",
            row.coverage, row.exact_coverage, r.ap1_rate, r.penalty
        );
    }
    Ok(())
}
