//! Entropic smoothing of top-κ sums and of the κ-th largest coordinate.
//!
//! `S_s(x)` is the support function of the capped simplex
//! `Q_s = {u ∈ [0,1]^p : Σ u_j = s}`. Subtracting `β⁻¹ r(u)`, with `r` the
//! double-sided entropy shifted to vanish at the uniform point, gives the
//! smooth lower approximation
//!
//! ```text
//! f_s(β, x) = max_{u ∈ Q_s} { xᵀu - β⁻¹ r(u) },   f_s ≤ S_s ≤ f_s + R_{p,s}/β
//! ```
//!
//! whose maximiser is `v_j = 1/(1 + e^{β(α_s - x_j)})` for the unique
//! multiplier `α_s` with `Σ v_j = s`. The κ-th largest coordinate is
//! approximated by `F_κ = f_κ - f_{κ-1}` (with `f_0 = 0`).

pub mod audit;
pub mod solver;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use audit::{
    derivative_bound_audit, lipschitz_check, AuditOptions, AuditReport, LipschitzReport,
    TestFunctional,
};
pub use solver::{default_tolerance, sigmoid, softplus, solve_alpha};

/// Inverse temperature `β > 0`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SmoothingParam(f64);

impl SmoothingParam {
    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(SmoothingParam(beta))
        } else {
            Err(Error::domain(format!("β = {beta} must be positive and finite")))
        }
    }

    /// Experiment default `β = ln(p) · n^{1/8}`.
    pub fn default_for(n: usize, p: usize) -> Self {
        SmoothingParam((p.max(2) as f64).ln() * (n.max(1) as f64).powf(0.125))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SmoothingParam {
    type Error = Error;

    fn try_from(beta: f64) -> Result<Self> {
        SmoothingParam::new(beta)
    }
}

impl From<SmoothingParam> for f64 {
    fn from(b: SmoothingParam) -> f64 {
        b.0
    }
}

fn xlnx(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

/// `R_{p,s} = p ln p - s ln s - (p-s) ln(p-s)`; zero for `s ∈ {0, p}`.
pub(crate) fn capacity_value(p: usize, s: usize) -> f64 {
    debug_assert!(s <= p);
    xlnx(p as f64) - xlnx(s as f64) - xlnx((p - s) as f64)
}

/// The smoothing error budget `R_{p,κ}` together with its two closed-form
/// upper bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropicCapacity {
    pub p: usize,
    pub kappa: usize,
    pub value: f64,
}

impl EntropicCapacity {
    /// `2 κ ln p`.
    pub fn log_bound(&self) -> f64 {
        2.0 * self.kappa as f64 * (self.p as f64).ln()
    }

    /// `p ln 2`.
    pub fn linear_bound(&self) -> f64 {
        self.p as f64 * std::f64::consts::LN_2
    }
}

pub fn capacity(p: usize, kappa: usize) -> Result<EntropicCapacity> {
    if kappa == 0 || kappa >= p {
        return Err(Error::domain(format!("κ = {kappa} must lie in 1..{p}")));
    }
    Ok(EntropicCapacity {
        p,
        kappa,
        value: capacity_value(p, kappa),
    })
}

/// Smoothing state at the optimum of the entropic top-s problem.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothTopK {
    pub beta: f64,
    pub kappa: usize,
    pub alpha: f64,
    pub weights: Vec<f64>,
    pub value: f64,
    /// `|Σ_j v_j - s|` at the returned multiplier.
    pub residual: f64,
}

fn check_input(x: &[f64], s: usize) -> Result<()> {
    let p = x.len();
    if s == 0 || s >= p {
        return Err(Error::domain(format!("index {s} must lie in 1..{p}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("x must be finite"));
    }
    Ok(())
}

/// `f_s(β, x)` with its multiplier and weights.
pub fn smooth_topk_sum(x: &[f64], s: usize, beta: SmoothingParam) -> Result<SmoothTopK> {
    check_input(x, s)?;
    let b = beta.get();
    let p = x.len();
    let alpha = solve_alpha(x, s, b, default_tolerance(p))?;

    let mut weights = Vec::with_capacity(p);
    let mut linear = 0.0;
    let mut entropy = 0.0;
    let mut total = 0.0;
    for &xj in x {
        let z = b * (xj - alpha);
        let v = sigmoid(z);
        let w = sigmoid(-z);
        // ln v = -softplus(-z), ln(1 - v) = -softplus(z)
        entropy -= v * softplus(-z) + w * softplus(z);
        linear += xj * v;
        total += v;
        weights.push(v);
    }
    let r = entropy + capacity_value(p, s);
    Ok(SmoothTopK {
        beta: b,
        kappa: s,
        alpha,
        weights,
        value: linear - r / b,
        residual: (total - s as f64).abs(),
    })
}

/// Smoothed κ-th largest coordinate with the two top-s states it is built
/// from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothKth {
    pub value: f64,
    pub upper: SmoothTopK,
    /// State for `s = κ - 1`; `None` when κ = 1 (`f_0 = 0`).
    pub lower: Option<SmoothTopK>,
}

impl SmoothKth {
    /// `π_j = ∂_j F_κ = v_{j,κ} - v_{j,κ-1}`.
    pub fn gradient(&self) -> Vec<f64> {
        match &self.lower {
            None => self.upper.weights.clone(),
            Some(lo) => self
                .upper
                .weights
                .iter()
                .zip(&lo.weights)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

pub fn smooth_kth_state(x: &[f64], kappa: usize, beta: SmoothingParam) -> Result<SmoothKth> {
    check_input(x, kappa)?;
    let upper = smooth_topk_sum(x, kappa, beta)?;
    let lower = if kappa > 1 {
        Some(smooth_topk_sum(x, kappa - 1, beta)?)
    } else {
        None
    };
    let value = upper.value - lower.as_ref().map_or(0.0, |l| l.value);
    Ok(SmoothKth {
        value,
        upper,
        lower,
    })
}

/// `F_κ(β, x) = f_κ(β, x) - f_{κ-1}(β, x)`.
pub fn smooth_kth(x: &[f64], kappa: usize, beta: SmoothingParam) -> Result<f64> {
    Ok(smooth_kth_state(x, kappa, beta)?.value)
}

/// `∇_x f_s(β, x) = v_{·,s}`.
pub fn grad_smooth_topk_sum(x: &[f64], s: usize, beta: SmoothingParam) -> Result<Vec<f64>> {
    Ok(smooth_topk_sum(x, s, beta)?.weights)
}

/// `∇_x F_κ(β, x)`, a point of the probability simplex.
///
/// Fails with a numeric error if the multipliers come out in the wrong
/// order (`α_κ < α_{κ-1}` must hold).
pub fn grad_smooth_kth(x: &[f64], kappa: usize, beta: SmoothingParam) -> Result<Vec<f64>> {
    let state = smooth_kth_state(x, kappa, beta)?;
    if let Some(lo) = &state.lower {
        if !(state.upper.alpha < lo.alpha) {
            return Err(Error::Numeric {
                message: format!(
                    "multipliers out of order: α_κ = {} ≥ α_(κ-1) = {}",
                    state.upper.alpha, lo.alpha
                ),
                residual: state.upper.residual.max(lo.residual),
            });
        }
    }
    Ok(state.gradient())
}

/// Jacobian of the weights, `J[j][k] = ∂_k v_j = δ_jk γ_j - γ_j γ_k / Σ_l γ_l`
/// with `γ_j = β v_j (1 - v_j)`. Symmetric, rows sum to zero.
pub fn weight_jacobian(x: &[f64], s: usize, beta: SmoothingParam) -> Result<DMatrix<f64>> {
    let state = smooth_topk_sum(x, s, beta)?;
    Ok(jacobian_from_state(x, &state))
}

pub(crate) fn jacobian_from_state(x: &[f64], state: &SmoothTopK) -> DMatrix<f64> {
    let p = x.len();
    let b = state.beta;
    let gamma: Vec<f64> = x
        .iter()
        .map(|&xj| b * solver::sigmoid_slope(b * (xj - state.alpha)))
        .collect();
    let total: f64 = gamma.iter().sum();
    DMatrix::from_fn(p, p, |j, k| {
        let diag = if j == k { gamma[j] } else { 0.0 };
        if total > 0.0 {
            diag - gamma[j] * gamma[k] / total
        } else {
            diag
        }
    })
}

/// Hessian of `F_κ`: `J_κ - J_{κ-1}`.
pub fn hessian_smooth_kth(x: &[f64], kappa: usize, beta: SmoothingParam) -> Result<DMatrix<f64>> {
    let state = smooth_kth_state(x, kappa, beta)?;
    Ok(hessian_from_state(x, &state))
}

pub(crate) fn hessian_from_state(x: &[f64], state: &SmoothKth) -> DMatrix<f64> {
    let upper = jacobian_from_state(x, &state.upper);
    match &state.lower {
        None => upper,
        Some(lo) => upper - jacobian_from_state(x, lo),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta(b: f64) -> SmoothingParam {
        SmoothingParam::new(b).unwrap()
    }

    #[test]
    fn capacity_closed_forms() {
        let ln2 = std::f64::consts::LN_2;
        assert!((capacity(2, 1).unwrap().value - 2.0 * ln2).abs() < 1e-15);
        assert!((capacity(4, 2).unwrap().value - 4.0 * ln2).abs() < 1e-15);
        assert!(capacity(4, 4).is_err());
        assert!(capacity(4, 0).is_err());
    }

    #[test]
    fn capacity_p10_k3() {
        // 10 ln 10 - 3 ln 3 - 7 ln 7, evaluated independently with high
        // precision: 6.108643020548934...
        let v = capacity(10, 3).unwrap().value;
        assert!((v - 6.108_643_020_548_935).abs() < 1e-12, "{v}");
        // it is also the entropy-scaled count: R = p H(s/p) in nats
        let q: f64 = 0.3;
        let h = -(q * q.ln() + (1.0 - q) * (1.0 - q).ln());
        assert!((v - 10.0 * h).abs() < 1e-12);
    }

    #[test]
    fn capacity_bounds_and_monotonicity() {
        for p in 2..200usize {
            let mut prev = 0.0;
            for k in 1..p {
                let c = capacity(p, k).unwrap();
                assert!(c.value >= 0.0);
                assert!(c.value <= c.log_bound() + 1e-12);
                assert!(c.value <= c.linear_bound() + 1e-12);
                if k <= (p + 1) / 2 {
                    assert!(prev <= c.value + 1e-12);
                }
                prev = c.value;
            }
        }
    }

    #[test]
    fn zero_vector_has_zero_value_and_uniform_weights() {
        for p in 2..8usize {
            for s in 1..p {
                let st = smooth_topk_sum(&vec![0.0; p], s, beta(3.0)).unwrap();
                assert!(st.value.abs() < 1e-14, "value {}", st.value);
                for w in &st.weights {
                    assert!((w - s as f64 / p as f64).abs() < 1e-14);
                }
            }
        }
        let g = grad_smooth_kth(&[0.0; 5], 2, beta(2.0)).unwrap();
        for gj in g {
            assert!((gj - 0.2).abs() < 1e-14);
        }
        assert_eq!(smooth_kth(&[0.0; 5], 3, beta(2.0)).unwrap().abs() < 1e-14, true);
    }

    #[test]
    fn small_example_sandwich() {
        let x = [3.0, 1.0, 2.0];
        let r = capacity(3, 2).unwrap().value;
        let f = smooth_topk_sum(&x, 2, beta(100.0)).unwrap().value;
        assert!(f <= 5.0 && f >= 5.0 - r / 100.0);
        let big = smooth_kth(&x, 2, beta(1000.0)).unwrap();
        assert!((big - 2.0).abs() <= r / 1000.0);
    }

    #[test]
    fn value_matches_dual_form() {
        // f_s = s α + β⁻¹ Σ softplus(β(x_j - α)) - R/β, evaluated independently
        let x = [0.3, -1.2, 2.5, 0.0, 1.1, -0.4];
        for &b in &[0.5, 4.0, 60.0] {
            for s in 1..6 {
                let st = smooth_topk_sum(&x, s, beta(b)).unwrap();
                let dual = s as f64 * st.alpha
                    + x.iter().map(|&xj| softplus(b * (xj - st.alpha))).sum::<f64>() / b
                    - capacity_value(6, s) / b;
                // the identity assumes Σv = s exactly
                let allow = 1e-12 + 2.0 * st.alpha.abs() * st.residual;
                assert!((st.value - dual).abs() <= allow, "b={b} s={s} gap={} allow={allow}", (st.value - dual).abs());
            }
        }
    }

    #[test]
    fn translation_equivariance() {
        let x = [0.3, -1.2, 2.5, 0.0, 1.1];
        let c = 7.25;
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        for s in 1..5 {
            let a = smooth_topk_sum(&x, s, beta(5.0)).unwrap().value;
            let b = smooth_topk_sum(&shifted, s, beta(5.0)).unwrap().value;
            assert!((b - a - s as f64 * c).abs() < 1e-11);
            let fa = smooth_kth(&x, s, beta(5.0)).unwrap();
            let fb = smooth_kth(&shifted, s, beta(5.0)).unwrap();
            assert!((fb - fa - c).abs() < 1e-11);
        }
    }

    #[test]
    fn multiplier_decreasing_in_s() {
        let x = [0.3, -1.2, 2.5, 0.0, 1.1, 0.9, -3.0];
        let alphas: Vec<f64> = (1..7)
            .map(|s| smooth_topk_sum(&x, s, beta(2.0)).unwrap().alpha)
            .collect();
        for w in alphas.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn jacobian_symmetric_cases() {
        let p = 5;
        let b = 4.0;
        let j = weight_jacobian(&[0.0; 5], 2, beta(b)).unwrap();
        let v: f64 = 2.0 / 5.0;
        let gamma = b * v * (1.0 - v);
        for r in 0..p {
            for c in 0..p {
                let expect = if r == c {
                    gamma * (1.0 - 1.0 / p as f64)
                } else {
                    -gamma / p as f64
                };
                assert!((j[(r, c)] - expect).abs() < 1e-14);
            }
            let row: f64 = (0..p).map(|c| j[(r, c)]).sum();
            assert!(row.abs() < 1e-9 * b);
        }
    }

    #[test]
    fn kappa_one_has_no_lower_state() {
        let st = smooth_kth_state(&[1.0, 2.0, 3.0], 1, beta(1.0)).unwrap();
        assert!(st.lower.is_none());
        assert_eq!(st.value, st.upper.value);
    }

    #[test]
    fn smoothing_param_validation() {
        assert!(SmoothingParam::new(0.0).is_err());
        assert!(SmoothingParam::new(f64::INFINITY).is_err());
        let b: SmoothingParam = serde_json::from_str("2.5").unwrap();
        assert_eq!(b.get(), 2.5);
        assert!(serde_json::from_str::<SmoothingParam>("-1.0").is_err());
        let d = SmoothingParam::default_for(256, 100);
        assert!((d.get() - 100f64.ln() * 2.0).abs() < 1e-12);
    }
}
