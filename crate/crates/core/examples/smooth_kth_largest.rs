//! Entropic smoothing of the κ-th largest coordinate: value, gradient and
//! the sandwich against the exact order statistic.

use topk_ga::order_stats::{kth_largest, top_k_sum};
use topk_ga::smooth::{capacity, grad_smooth_kth, smooth_kth, smooth_topk_sum, SmoothingParam};

fn main() -> topk_ga::Result<()> {
    let x = [0.3, -1.2, 2.5, 0.9, 2.4, -0.1, 1.7];
    let kappa = 2;
    let r = capacity(x.len(), kappa)?;
    println!("x = {x:?}, κ = {kappa}, R = {:.4} (≤ 2κ ln p = {:.4})", r.value, r.log_bound());
    println!("exact x_[κ] = {}, S_κ = {}", kth_largest(&x, kappa)?, top_k_sum(&x, kappa)?);
    for b in [1.0, 10.0, 100.0] {
        let beta = SmoothingParam::new(b)?;
        let f = smooth_topk_sum(&x, kappa, beta)?;
        let grad: Vec<String> = grad_smooth_kth(&x, kappa, beta)?.iter().map(|g| format!("{g:.3}")).collect();
        println!(
            "β = {b:>5}: f_κ = {:.6}  F_κ = {:.6}  α = {:.4}  ∇F = [{}]",
            f.value,
            smooth_kth(&x, kappa, beta)?,
            f.alpha,
            grad.join(", ")
        );
    }
    Ok(())
}
