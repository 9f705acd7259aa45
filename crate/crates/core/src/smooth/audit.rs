//! Finite-difference audits of the derivative bounds for `m = g ∘ F_κ`.
//!
//! The bounding functions `U_jk`, `U_jkl` are only known through their
//! sums, so the audit checks the summed absolute derivatives:
//!
//! ```text
//! Σ_jk  |∂_j∂_k m|      ≤ 4κ²G₂ + 4κG₁β
//! Σ_jkl |∂_j∂_k∂_l m|   ≤ 8κ³G₃ + 12κ²G₂β + 14κG₁β²
//! ```
//!
//! Second derivatives come from central differences of the analytic
//! gradient `g'(F)π`; third derivatives from central differences of the
//! analytic Hessian `g''(F)ππᵀ + g'(F)∇²F`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{hessian_from_state, smooth_kth, smooth_kth_state, SmoothingParam};
use crate::error::{Error, Result};

/// Largest dimension the tensor audit accepts.
pub const MAX_AUDIT_DIM: usize = 12;

/// A three-times differentiable scalar test function with known sup norms
/// `G_m = sup_t |g^(m)(t)|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunctional {
    /// `g(t) = t`; `G₀` is infinite.
    Linear,
    /// `g(t) = sin(freq · t + phase)`; `G_m = freq^m`.
    Sine { freq: f64, phase: f64 },
}

impl TestFunctional {
    pub fn sine() -> Self {
        TestFunctional::Sine {
            freq: 1.0,
            phase: 0.0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunctional::Linear => "t".into(),
            TestFunctional::Sine { freq, phase } => format!("sin({freq}t+{phase})"),
        }
    }

    /// `[G₀, G₁, G₂, G₃]`.
    pub fn sup_norms(&self) -> [f64; 4] {
        match *self {
            TestFunctional::Linear => [f64::INFINITY, 1.0, 0.0, 0.0],
            TestFunctional::Sine { freq, .. } => {
                let a = freq.abs();
                [1.0, a, a * a, a * a * a]
            }
        }
    }

    /// `g^(order)(t)` for `order <= 3`.
    pub fn derivative(&self, order: usize, t: f64) -> f64 {
        match *self {
            TestFunctional::Linear => match order {
                0 => t,
                1 => 1.0,
                _ => 0.0,
            },
            TestFunctional::Sine { freq, phase } => {
                let u = freq * t + phase;
                let a = freq.powi(order as i32);
                match order % 4 {
                    0 => a * u.sin(),
                    1 => a * u.cos(),
                    2 => -a * u.sin(),
                    _ => -a * u.cos(),
                }
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.derivative(0, t)
    }
}

/// Right-hand side of the second-derivative sum bound.
pub fn second_derivative_bound(kappa: usize, beta: f64, g: &TestFunctional) -> f64 {
    let [_, g1, g2, _] = g.sup_norms();
    let k = kappa as f64;
    4.0 * k * k * g2 + 4.0 * k * g1 * beta
}

/// Right-hand side of the third-derivative sum bound.
pub fn third_derivative_bound(kappa: usize, beta: f64, g: &TestFunctional) -> f64 {
    let [_, g1, g2, g3] = g.sup_norms();
    let k = kappa as f64;
    8.0 * k.powi(3) * g3 + 12.0 * k * k * g2 * beta + 14.0 * k * g1 * beta * beta
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    /// Multiplicative slack on the bounds absorbing discretisation error.
    pub slack: f64,
    /// Pairs `(x, z)` for the Lipschitz check.
    #[serde(default)]
    pub lipschitz_pairs: Vec<(Vec<f64>, Vec<f64>)>,
    /// Direction `w` for the stability diagnostic; rescaled so that
    /// `‖w‖_∞ β = 1`. Defaults to an alternating sign pattern.
    #[serde(default)]
    pub stability_direction: Option<Vec<f64>>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            slack: 1.15,
            lipschitz_pairs: Vec::new(),
            stability_direction: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    /// `max |F(x) - F(z)| / ‖x - z‖_∞` over pairs with `x ≠ z`.
    pub max_ratio: f64,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub kappa: usize,
    pub beta: f64,
    pub functional: String,
    pub second_sum: f64,
    pub second_bound: f64,
    pub second_pass: bool,
    pub third_sum: f64,
    pub third_bound: f64,
    pub third_pass: bool,
    /// Largest entrywise gap between the analytic Hessian of `m` and its
    /// finite-difference estimate.
    pub hessian_fd_gap: f64,
    /// `Σ|∂²m|(x + τw) / Σ|∂²m|(x)` for `τ ∈ {0.5, 1}`; reported, not
    /// asserted (the comparison constants are unspecified).
    pub stability_ratios: Vec<f64>,
    pub lipschitz: Option<LipschitzReport>,
    pub slack: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.second_pass && self.third_pass && self.lipschitz.as_ref().is_none_or(|l| l.violations == 0)
    }
}

fn fd_step(xj: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + xj.abs())
}

fn grad_m(x: &[f64], kappa: usize, beta: SmoothingParam, g: &TestFunctional) -> Result<Vec<f64>> {
    let st = smooth_kth_state(x, kappa, beta)?;
    let d1 = g.derivative(1, st.value);
    Ok(st.gradient().into_iter().map(|pj| d1 * pj).collect())
}

/// Analytic Hessian of `m = g ∘ F_κ`.
pub fn hessian_m(
    x: &[f64],
    kappa: usize,
    beta: SmoothingParam,
    g: &TestFunctional,
) -> Result<DMatrix<f64>> {
    let st = smooth_kth_state(x, kappa, beta)?;
    let pi = st.gradient();
    let hf = hessian_from_state(x, &st);
    let (d1, d2) = (g.derivative(1, st.value), g.derivative(2, st.value));
    let p = x.len();
    Ok(DMatrix::from_fn(p, p, |j, k| d2 * pi[j] * pi[k] + d1 * hf[(j, k)]))
}

fn second_sum_fd(
    x: &[f64],
    kappa: usize,
    beta: SmoothingParam,
    g: &TestFunctional,
) -> Result<DMatrix<f64>> {
    let p = x.len();
    let mut h = DMatrix::zeros(p, p);
    let mut probe = x.to_vec();
    for k in 0..p {
        let step = fd_step(x[k]);
        probe[k] = x[k] + step;
        let plus = grad_m(&probe, kappa, beta, g)?;
        probe[k] = x[k] - step;
        let minus = grad_m(&probe, kappa, beta, g)?;
        probe[k] = x[k];
        for j in 0..p {
            h[(j, k)] = (plus[j] - minus[j]) / (2.0 * step);
        }
    }
    Ok(h)
}

fn third_sum_fd(x: &[f64], kappa: usize, beta: SmoothingParam, g: &TestFunctional) -> Result<f64> {
    let p = x.len();
    let mut total = 0.0;
    let mut probe = x.to_vec();
    for l in 0..p {
        let step = fd_step(x[l]);
        probe[l] = x[l] + step;
        let plus = hessian_m(&probe, kappa, beta, g)?;
        probe[l] = x[l] - step;
        let minus = hessian_m(&probe, kappa, beta, g)?;
        probe[l] = x[l];
        total += (plus - minus).iter().map(|v| v.abs()).sum::<f64>() / (2.0 * step);
    }
    Ok(total)
}

/// Checks `|F_κ(x) - F_κ(z)| ≤ ‖x - z‖_∞` on each pair. A violation is
/// counted only beyond the rounding of the two subtractions (four ulps of
/// the largest operand) plus `tol`.
pub fn lipschitz_check(
    pairs: &[(Vec<f64>, Vec<f64>)],
    kappa: usize,
    beta: SmoothingParam,
    tol: f64,
) -> Result<LipschitzReport> {
    let mut max_ratio = 0.0f64;
    let mut violations = 0;
    for (x, z) in pairs {
        if x.len() != z.len() {
            return Err(Error::domain("Lipschitz pair dimensions differ"));
        }
        let gap = x
            .iter()
            .zip(z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let (fx, fz) = (smooth_kth(x, kappa, beta)?, smooth_kth(z, kappa, beta)?);
        let diff = (fx - fz).abs();
        let scale = x.iter().chain(z).fold(fx.abs().max(fz.abs()), |m, v| m.max(v.abs()));
        if diff > gap + 4.0 * f64::EPSILON * scale + tol {
            violations += 1;
        }
        if gap > 0.0 {
            max_ratio = max_ratio.max(diff / gap);
        }
    }
    Ok(LipschitzReport {
        pairs: pairs.len(),
        max_ratio,
        violations,
    })
}

/// Audits the derivative-sum bounds of `g ∘ F_κ` at `x`.
pub fn derivative_bound_audit(
    x: &[f64],
    kappa: usize,
    beta: SmoothingParam,
    g: &TestFunctional,
    opts: &AuditOptions,
) -> Result<AuditReport> {
    let p = x.len();
    if p > MAX_AUDIT_DIM {
        return Err(Error::capability(format!(
            "derivative audit is limited to p ≤ {MAX_AUDIT_DIM} (got {p})"
        )));
    }
    let b = beta.get();

    let fd_hessian = second_sum_fd(x, kappa, beta, g)?;
    let analytic = hessian_m(x, kappa, beta, g)?;
    let hessian_fd_gap = (&fd_hessian - &analytic).amax();
    let second_sum: f64 = fd_hessian.iter().map(|v| v.abs()).sum();
    let third_sum = third_sum_fd(x, kappa, beta, g)?;

    let second_bound = second_derivative_bound(kappa, b, g);
    let third_bound = third_derivative_bound(kappa, b, g);

    let direction = match &opts.stability_direction {
        Some(w) if w.len() == p => w.clone(),
        Some(_) => return Err(Error::domain("stability direction has wrong dimension")),
        None => (0..p).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect(),
    };
    let wmax = direction.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut stability_ratios = Vec::new();
    if wmax > 0.0 && second_sum > 0.0 {
        for tau in [0.5, 1.0] {
            let shifted: Vec<f64> = x
                .iter()
                .zip(&direction)
                .map(|(xj, wj)| xj + tau * wj / (wmax * b))
                .collect();
            let s = analytic_abs_sum(&shifted, kappa, beta, g)?;
            stability_ratios.push(s / second_sum);
        }
    }

    let lipschitz = if opts.lipschitz_pairs.is_empty() {
        None
    } else {
        Some(lipschitz_check(
            &opts.lipschitz_pairs,
            kappa,
            beta,
            10.0 * super::default_tolerance(p),
        )?)
    };

    Ok(AuditReport {
        kappa,
        beta: b,
        functional: g.label(),
        second_sum,
        second_bound,
        second_pass: second_sum <= opts.slack * second_bound,
        third_sum,
        third_bound,
        third_pass: third_sum <= opts.slack * third_bound,
        hessian_fd_gap,
        stability_ratios,
        lipschitz,
        slack: opts.slack,
    })
}

fn analytic_abs_sum(x: &[f64], kappa: usize, beta: SmoothingParam, g: &TestFunctional) -> Result<f64> {
    Ok(hessian_m(x, kappa, beta, g)?.iter().map(|v| v.abs()).sum())
}
