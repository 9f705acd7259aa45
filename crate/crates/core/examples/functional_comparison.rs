//! E g(F_κ(X)) - E g(F_κ(Y)) for g = sin, with the plug-in bound term.

use topk_ga::experiments::{functional_comparison, FunctionalSpec};
use topk_ga::randgen::{CovarianceKind, Family, GeneratorSpec};
use topk_ga::smooth::TestFunctional;

fn main() -> topk_ga::Result<()> {
    for n in [100, 400, 1600] {
        let spec = FunctionalSpec {
            generator: GeneratorSpec::new(Family::Rademacher, CovarianceKind::Identity, 20, 0),
            n,
            kappa: Some(2),
            d: None,
            g: TestFunctional::sine(),
            beta: None,
            u: None,
            gamma: 0.05,
            mc_reps: 4000,
            seed: 8,
        };
        let r = functional_comparison(&spec)?;
        println!(
            "n = {n:>4}: diff {:+.4} ± {:.4}, κ³D_n {:.3}, gate {:.3} ({})",
            r.difference,
            r.mc_se,
            r.bound_scale * r.bound,
            r.gate_value,
            if r.in_regime { "in regime" } else { "out of regime" }
        );
    }
    Ok(())
}
