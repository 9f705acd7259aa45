//! Plug-in moment summaries, truncation, the moment-growth probe and the
//! B_n estimate for a heavy-ish tailed sample.

use topk_ga::randgen::{
    estimate_bn, moment_summary, sample_data, subweibull_probe, truncate, u_bound_shape, CovarianceKind, Envelope,
    Family, GeneratorSpec, MomentOptions, OrliczModulus,
};

fn main() -> topk_ga::Result<()> {
    let gen = GeneratorSpec::new(Family::CenteredExponential, CovarianceKind::Ar1 { rho: 0.5 }, 25, 7);
    let data = sample_data(&gen, 400)?;
    let s = moment_summary(&data, &[2.0, 3.0, 4.0], &[0.1, 0.05], &MomentOptions::default())?;
    println!("M₂ = {:.3}, M₃ = {:.3}, M₄ = {:.3}", s.m2, s.m3, s.m4);
    for (u, phi) in &s.phi_of_u {
        println!("φ̂({u}) = {phi:.4}");
    }
    for (g, u) in &s.u_of_gamma {
        println!("û({g}) = {u:.3}");
    }
    let cut = truncate(&data, 3.0)?;
    println!("truncated at u = 3: M₄ {:.3} → {:.3}", s.m4, topk_ga::randgen::moments::moment_bound(&cut, 4.0));
    let probe = subweibull_probe(data.as_slice(), 1.0, 6)?;
    println!("K̂₂ (ς = 1) = {:.3}", probe.k2_hat);
    let shape = u_bound_shape(&OrliczModulus::Exponential { b: 1.0, d: 1.0 }, 400, 25, 0.05)?;
    println!("u(γ) bound shape = {shape:.3}");
    println!("B̂_n: E.1 {:.3}, E.2 {:.3}", estimate_bn(&data, Envelope::E1), estimate_bn(&data, Envelope::E2));
    Ok(())
}
