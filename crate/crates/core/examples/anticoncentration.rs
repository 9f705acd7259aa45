//! Lévy concentration of the κ-th largest Gaussian coordinate and the
//! Gaussian maximal inequality.

use topk_ga::anticoncentration::{gaussian_max_expectations, levy_bound, levy_concentration};
use topk_ga::order_stats::Statistic;
use topk_ga::randgen::{CovarianceKind, CovarianceModel};

fn main() -> topk_ga::Result<()> {
    let model = CovarianceModel::new(CovarianceKind::Equicorrelated { rho: 0.3 }, 100)?;
    let maxes = gaussian_max_expectations(&model, 50_000, 1)?;
    println!(
        "a_p = {:.3} (√(2 ln p) = {:.3}), ā_p = {:.3} (2√ln p = {:.3})",
        maxes.a_p, maxes.a_bound, maxes.abar_p, maxes.abar_bound
    );
    for kappa in [1, 3] {
        let est = levy_concentration(&model, Statistic::KthLargest { kappa }, &[0.01, 0.05, 0.1], 50_000, 2)?;
        for e in est {
            println!(
                "κ = {kappa}, ε = {:<4}: L̂ = {:.4} ± {:.4}, bound {:.3}",
                e.epsilon,
                e.value,
                e.mc_se,
                levy_bound(kappa, e.epsilon, maxes.a_p, 1.0)
            );
        }
    }
    Ok(())
}
