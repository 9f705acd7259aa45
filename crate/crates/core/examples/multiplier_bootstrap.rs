//! Conditional multiplier-bootstrap quantile for one data set, then the
//! coverage of that quantile over repeated data sets.

use topk_ga::bootstrap::{coverage_experiment, gaussian_quantile, multiplier_replicates, CoverageSettings};
use topk_ga::order_stats::KappaSpec;
use topk_ga::randgen::{rescaled_sum, sample_data, AnalogCovariance, CovarianceKind, Family, GeneratorSpec};

fn main() -> topk_ga::Result<()> {
    let gen = GeneratorSpec::new(Family::Rademacher, CovarianceKind::Identity, 40, 1);
    let kappa = KappaSpec::fixed(2);
    let data = sample_data(&gen, 150)?;
    let t = rescaled_sum(&data);
    let run = multiplier_replicates(&data, &kappa, 500, 2)?;
    let c_w = run.quantile(0.95)?.value;
    let c_z = gaussian_quantile(AnalogCovariance::Population(gen.build()?.model()), &kappa, 0.95, 20_000, 3)?.value;
    println!("T_κ = {:.4}, c_W(0.95) = {c_w:.4}, c_Z(0.95) = {c_z:.4}", topk_ga::order_stats::kth_largest(&t, 2)?);

    let mut settings = CoverageSettings::new(150, kappa, vec![0.9, 0.95]);
    settings.mc_reps = 300;
    settings.replicates = 300;
    settings.z_reps = 20_000;
    let r = coverage_experiment(&gen, &settings, 4)?;
    for row in &r.rows {
        println!(
            "α = {}: coverage {:.3} ± {:.3}, ρ̂_⊖ {:.3}",
            row.alpha, row.coverage, row.mc_se, row.rho_ominus
        );
    }
    Ok(())
}
