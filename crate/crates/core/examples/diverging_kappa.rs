//! κ growing with the dimension, κ = ⌊Λ p^{1-λ}⌋ ∧ ⌊(p+1)/2⌋.

use topk_ga::experiments::{diverging_kappa_experiment, DecayExperimentSpec, RegimeKnobs, ZMode};
use topk_ga::order_stats::KappaSpec;
use topk_ga::randgen::{CovarianceKind, Family, GeneratorSpec};

fn main() -> topk_ga::Result<()> {
    let spec = DecayExperimentSpec {
        generator: GeneratorSpec::new(Family::Rademacher, CovarianceKind::Identity, 16, 0),
        n_ladder: vec![50, 200],
        p_ladder: vec![16, 64, 256],
        kappa: Some(KappaSpec::diverging(1.0, 0.5)),
        d: None,
        mc_reps: 800,
        z_mode: ZMode::Population,
        regime: RegimeKnobs::default(),
        seed: 21,
    };
    for c in diverging_kappa_experiment(&spec)?.cells {
        println!(
            "p = {:>3}, κ = {:>2}, n = {:>3}: ρ̂ = {:.4} ± {:.4}, S' lhs {:.3e} ({})",
            c.p, c.index, c.n, c.estimate, c.mc_se, c.regime.lhs, c.regime.label
        );
    }
    Ok(())
}
