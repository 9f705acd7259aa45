//! Square sum of the d largest coordinates: Gaussian approximation and
//! window-mass anti-concentration.

use topk_ga::anticoncentration::square_sum_anticoncentration;
use topk_ga::experiments::{rho_d_square_experiment, DecayExperimentSpec, RegimeKnobs, ZMode};
use topk_ga::randgen::{CovarianceKind, CovarianceModel, Family, GeneratorSpec};

fn main() -> topk_ga::Result<()> {
    let spec = DecayExperimentSpec {
        generator: GeneratorSpec::new(Family::Uniform, CovarianceKind::Identity, 20, 0),
        n_ladder: vec![50, 200, 800],
        p_ladder: vec![],
        kappa: None,
        d: Some(2),
        mc_reps: 1000,
        z_mode: ZMode::Population,
        regime: RegimeKnobs::default(),
        seed: 3,
    };
    for c in rho_d_square_experiment(&spec)?.cells {
        println!("n = {:>4}: ρ̂_d = {:.4} ± {:.4}  [{}]", c.n, c.estimate, c.mc_se, c.regime.label);
    }
    let w = square_sum_anticoncentration(&CovarianceModel::identity(20), 2, &[0.05, 0.1, 0.2], 100_000, 4, 0.0, 1.0)?;
    for pt in &w.points {
        println!("ε = {}: window mass {:.4} ± {:.4}", pt.epsilon, pt.estimate, pt.mc_se);
    }
    println!("slope {:?}", w.slope);
    Ok(())
}
