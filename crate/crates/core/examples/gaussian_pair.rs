//! Distance between κ-th largest coordinates of two Gaussian vectors as
//! their covariances approach each other.

use topk_ga::anticoncentration::{gaussian_pair_comparison, GaussianPairSpec};
use topk_ga::order_stats::KappaSpec;
use topk_ga::randgen::{CovarianceKind, CovarianceModel};

fn main() -> topk_ga::Result<()> {
    let p = 60;
    let pair = GaussianPairSpec::new(
        CovarianceModel::new(CovarianceKind::Equicorrelated { rho: 0.1 }, p)?,
        CovarianceModel::identity(p),
    )?;
    let r = gaussian_pair_comparison(&pair, &KappaSpec::fixed(2), &[1.0, 0.3, 0.1, 0.03], 20_000, 5)?;
    for l in &r.ladder {
        println!("Σ gap {:.4}: KS {:.4} ± {:.4} (shape {:.3})", l.sigma_gap, l.ks, l.ks_se, l.bound_shape);
    }
    println!("slope {:?}, strictly decreasing {}", r.slope, r.strictly_decreasing);
    Ok(())
}
