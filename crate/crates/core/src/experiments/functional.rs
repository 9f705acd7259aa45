//! Smooth-functional comparison `Ê g(F_κ(β,X)) - Ê g(F_κ(β,Y))` next to
//! the plug-in bound terms `D_n` and `D̂_n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randgen::{
    moment_summary, subweibull_probe, Family, Generator, GeneratorSpec, MomentOptions, SampleMatrix,
};
use crate::rng::{stream, tag, SeedKey};
use crate::smooth::{smooth_kth, smooth_topk_sum, SmoothingParam, TestFunctional};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub generator: GeneratorSpec,
    pub n: usize,
    #[serde(default)]
    pub kappa: Option<usize>,
    /// Square-sum order; the comparison then uses `f_d` on squared coordinates.
    #[serde(default)]
    pub d: Option<usize>,
    pub g: TestFunctional,
    /// `ln(p) n^{1/8}` when absent.
    #[serde(default)]
    pub beta: Option<SmoothingParam>,
    /// Truncation level; `û(γ)` when absent.
    #[serde(default)]
    pub u: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub mc_reps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_gamma() -> f64 {
    0.05
}

/// Plug-in ingredients of the bound terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub p: usize,
    pub beta: f64,
    pub gamma: f64,
    pub m2: f64,
    pub m3: f64,
    pub phi: f64,
    pub g_norms: [f64; 4],
}

/// `n^{-1/2}(G₃+G₂β+G₁β²)M₃³ + (G₂+βG₁)M₂²φ(u) + G₁M₂φ(u)√ln(p/γ) + G₀γ`.
pub fn d_n(b: &BoundInputs) -> f64 {
    let [g0, g1, g2, g3] = b.g_norms;
    let (beta, n, p) = (b.beta, b.n as f64, b.p as f64);
    (g3 + g2 * beta + g1 * beta * beta) * b.m3.powi(3) / n.sqrt()
        + (g2 + beta * g1) * b.m2 * b.m2 * b.phi
        + g1 * b.m2 * b.phi * (p / b.gamma).ln().sqrt()
        + g0 * b.gamma
}

/// The square-sum analog with moment-growth constant `K₂` and order `d`.
pub fn d_n_hat(b: &BoundInputs, k2: f64, d: usize) -> f64 {
    let [g0, g1, g2, g3] = b.g_norms;
    let (beta, n, p, d) = (b.beta, b.n as f64, b.p as f64, d as f64);
    let k = k2 + 1.0 / beta;
    g0 * b.gamma
        + g1 * k2 * p * b.m2 * b.phi * (p / b.gamma).ln().sqrt()
        + b.m2 * b.m2 * b.phi * (g2 * p * p * k * k + g1 * d + g1 * d * beta * p * p * k * k)
        + b.m3.powi(3) / n.sqrt()
            * (g3 * p.powi(3) * k.powi(3)
                + g2 * d * beta * k.powi(3)
                + g2 * p * k
                + g1 * d * beta * p * k
                + g1 * d * beta * beta * p.powi(3) * k.powi(3))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub statistic: String,
    pub index: usize,
    pub g: String,
    pub mean_x: f64,
    pub mean_y: f64,
    pub difference: f64,
    pub mc_se: f64,
    pub u: f64,
    /// `2√2 u M₂ β / √n`.
    pub gate_value: f64,
    pub u_of_gamma: f64,
    pub in_regime: bool,
    pub inputs: BoundInputs,
    /// `D_n` for κ runs, `D̂_n` for square-sum runs.
    pub bound: f64,
    /// `κ³` for κ runs, 1 for square-sum runs.
    pub bound_scale: f64,
    pub k2_hat: Option<f64>,
    /// `|difference| / (bound_scale · bound)`; the constant stays symbolic.
    pub ratio: f64,
    /// Moments, `φ` and `u(γ)` are sample estimates, maximised over a
    /// data pilot and a Gaussian pilot.
    pub plug_in_note: String,
    pub seed: u64,
}

#[derive(Clone, Copy)]
enum Target {
    Kth(usize),
    Square(usize),
}

impl Target {
    fn eval(self, x: &mut [f64], beta: SmoothingParam) -> f64 {
        match self {
            Target::Kth(k) => smooth_kth(x, k, beta).unwrap_or(f64::NAN),
            Target::Square(d) => {
                x.iter_mut().for_each(|v| *v *= *v);
                if d == x.len() {
                    x.iter().sum()
                } else {
                    smooth_topk_sum(x, d, beta).map(|s| s.value).unwrap_or(f64::NAN)
                }
            }
        }
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var)
}

fn subweibull_order(family: &Family) -> f64 {
    match family {
        Family::CenteredExponential | Family::StudentT { .. } => 1.0,
        _ => 2.0,
    }
}

fn probe_k2(pilots: &[&SampleMatrix], varsigma: f64) -> Result<f64> {
    let mut k2 = 0.0f64;
    for m in pilots {
        let count = m.as_slice().len();
        let q_max = ((count / 100).max(1) as f64).log2().floor().min(8.0) as u32;
        if q_max < 2 {
            return Err(Error::capability(format!(
                "pilot of {count} entries is too small to estimate K₂; need at least 400"
            )));
        }
        k2 = k2.max(subweibull_probe(m.as_slice(), varsigma, q_max)?.k2_hat);
    }
    Ok(k2)
}

impl FunctionalSpec {
    fn target(&self) -> Result<Target> {
        let p = self.generator.p;
        match (self.kappa, self.d) {
            (Some(k), None) if k >= 1 && k <= p.div_ceil(2) && k < p => Ok(Target::Kth(k)),
            (Some(k), None) => Err(Error::config(
                "kappa",
                format!("κ = {k} must lie in 1..=⌊(p+1)/2⌋ = {}", p.div_ceil(2)),
            )),
            (None, Some(d)) if d >= 1 && d <= p => Ok(Target::Square(d)),
            (None, Some(d)) => Err(Error::config("d", format!("d = {d} must lie in 1..={p}"))),
            _ => Err(Error::config("kappa", "set exactly one of kappa or d")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.target()?;
        if self.n == 0 {
            return Err(Error::config("n", "sample size must be positive"));
        }
        if self.mc_reps < 2 {
            return Err(Error::config("mc_reps", "at least two reps per side are required"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma", format!("γ = {} must lie in (0, 1)", self.gamma)));
        }
        if let Some(u) = self.u {
            if !(u > 0.0 && u.is_finite()) {
                return Err(Error::config("u", format!("u = {u} must be positive")));
            }
        }
        if self.g.sup_norms().iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("g = {} needs finite G₀..G₃", self.g.label())));
        }
        Ok(())
    }
}

pub fn functional_comparison(spec: &FunctionalSpec) -> Result<FunctionalReport> {
    spec.validate()?;
    let target = spec.target()?;
    let gen = spec.generator.build()?;
    let p = gen.dim();
    let g_norms = spec.g.sup_norms();
    let beta = spec.beta.unwrap_or_else(|| SmoothingParam::default_for(spec.n, p));
    let seed = SeedKey::new(spec.seed).path(&[p as u64, spec.n as u64]).value();

    let x_vals: Vec<f64> = (0..spec.mc_reps)
        .into_par_iter()
        .map_init(
            || vec![0.0; p],
            |x, r| {
                gen.sample_rescaled_sum(spec.n, &mut stream(seed, &[tag::DATA, r as u64]), x);
                spec.g.eval(target.eval(x, beta))
            },
        )
        .collect();
    let y_vals = crate::randgen::gaussian_statistic_draws(gen.model(), spec.mc_reps, seed, |y| {
        spec.g.eval(target.eval(y, beta))
    });
    if x_vals.iter().chain(&y_vals).any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            message: "smoothed statistic failed to converge on a Monte Carlo draw".into(),
            residual: f64::NAN,
        });
    }
    let (mx, vx) = mean_var(&x_vals);
    let (my, vy) = mean_var(&y_vals);

    let pilot_x = gen.sample(spec.n, &mut stream(seed, &[tag::PILOT, 0]));
    let gauss: Generator = GeneratorSpec {
        family: Family::Gaussian,
        ..spec.generator.clone()
    }
    .build()?;
    let pilot_y = gauss.sample(spec.n, &mut stream(seed, &[tag::PILOT, 1]));
    let opts = MomentOptions {
        seed,
        ..MomentOptions::default()
    };
    let probe_u = [1.0];
    let sx = moment_summary(&pilot_x, &probe_u, &[spec.gamma], &opts)?;
    let sy = moment_summary(&pilot_y, &probe_u, &[spec.gamma], &opts)?;
    let u_of_gamma = sx.u(spec.gamma).unwrap().max(sy.u(spec.gamma).unwrap());
    let u = spec.u.unwrap_or(u_of_gamma);
    let sx = moment_summary(&pilot_x, &[u], &[spec.gamma], &opts)?;
    let sy = moment_summary(&pilot_y, &[u], &[spec.gamma], &opts)?;
    let inputs = BoundInputs {
        n: spec.n,
        p,
        beta: beta.get(),
        gamma: spec.gamma,
        m2: sx.m2.max(sy.m2),
        m3: sx.m3.max(sy.m3),
        phi: sx.phi(u).unwrap().max(sy.phi(u).unwrap()),
        g_norms,
    };
    let gate_value = 2.0 * 2f64.sqrt() * u * inputs.m2 * inputs.beta / (spec.n as f64).sqrt();
    let (bound, bound_scale, k2_hat, statistic, index) = match target {
        Target::Kth(k) => (d_n(&inputs), (k as f64).powi(3), None, format!("F_{k}"), k),
        Target::Square(d) => {
            let k2 = probe_k2(&[&pilot_x, &pilot_y], subweibull_order(gen.family()))?;
            (d_n_hat(&inputs, k2, d), 1.0, Some(k2), format!("f_{d}(x²)"), d)
        }
    };
    let difference = mx - my;
    Ok(FunctionalReport {
        statistic,
        index,
        g: spec.g.label(),
        mean_x: mx,
        mean_y: my,
        difference,
        mc_se: (vx / x_vals.len() as f64 + vy / y_vals.len() as f64).sqrt(),
        u,
        gate_value,
        u_of_gamma,
        in_regime: gate_value <= 1.0 && u >= u_of_gamma,
        ratio: difference.abs() / (bound_scale * bound),
        inputs,
        bound,
        bound_scale,
        k2_hat,
        plug_in_note: "M₂, M₃, φ(u), u(γ) and K₂ are sample estimates from one data pilot and one Gaussian pilot of size n".into(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randgen::CovarianceKind;

    fn spec(family: Family, n: usize) -> FunctionalSpec {
        FunctionalSpec {
            generator: GeneratorSpec::new(family, CovarianceKind::Identity, 10, 0),
            n,
            kappa: Some(2),
            d: None,
            g: TestFunctional::sine(),
            beta: None,
            u: None,
            gamma: 0.05,
            mc_reps: 2000,
            seed: 3,
        }
    }

    #[test]
    fn gaussian_difference_within_noise() {
        let r = functional_comparison(&spec(Family::Gaussian, 50)).unwrap();
        assert!(r.difference.abs() <= 3.0 * r.mc_se, "{r:?}");
        assert!(r.bound > 0.0 && r.ratio.is_finite());
    }

    #[test]
    fn square_variant_reports_k2() {
        let mut s = spec(Family::Uniform, 200);
        s.kappa = None;
        s.d = Some(2);
        s.mc_reps = 200;
        let r = functional_comparison(&s).unwrap();
        assert!(r.k2_hat.unwrap() > 0.0);
        assert_eq!(r.bound_scale, 1.0);
    }

    #[test]
    fn doubling_beta_moves_only_beta_terms() {
        let b = BoundInputs {
            n: 400,
            p: 20,
            beta: 2.0,
            gamma: 0.1,
            m2: 1.0,
            m3: 1.2,
            phi: 0.05,
            g_norms: [1.0, 1.0, 1.0, 1.0],
        };
        let b2 = BoundInputs { beta: 4.0, ..b.clone() };
        // difference isolates n^{-1/2}(G₂Δβ + G₁Δβ²)M₃³ + G₁Δβ M₂²φ
        let expect = (2.0 + 12.0) * 1.2f64.powi(3) / 20.0 + 2.0 * 0.05;
        assert!((d_n(&b2) - d_n(&b) - expect).abs() < 1e-12);
    }

    #[test]
    fn unbounded_g_is_rejected() {
        let mut s = spec(Family::Gaussian, 50);
        s.g = TestFunctional::Linear;
        assert!(matches!(functional_comparison(&s), Err(Error::Domain(_))));
    }
}
