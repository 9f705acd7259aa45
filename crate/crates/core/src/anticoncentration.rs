//! Monte Carlo checks of anti-concentration, the Gaussian maximal
//! inequality and Gaussian-to-Gaussian comparison.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::order_stats::{KappaSpec, Statistic};
use crate::randgen::{gaussian_statistic_draws, CovarianceKind, CovarianceModel};
use crate::rng::{stream, tag};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevyEstimate {
    pub epsilon: f64,
    /// `sup_x P̂(|ξ - x| ≤ ε)`.
    pub value: f64,
    /// Centre of the heaviest window.
    pub center_star: f64,
    pub draws: usize,
    pub mc_se: f64,
}

/// Largest number of sorted points inside a closed window of the given
/// width, with the window's left end.
fn max_window(sorted: &[f64], width: f64) -> (usize, f64) {
    let mut best = (0usize, sorted.first().copied().unwrap_or(0.0));
    let mut hi = 0usize;
    for (lo, &left) in sorted.iter().enumerate() {
        if hi < lo {
            hi = lo;
        }
        while hi < sorted.len() && sorted[hi] <= left + width {
            hi += 1;
        }
        if hi - lo > best.0 {
            best = (hi - lo, left);
        }
    }
    best
}

fn binomial_se(v: f64, n: usize) -> f64 {
    (v * (1.0 - v) / n as f64).sqrt()
}

/// Lévy concentration of an empirical sample: the heaviest window of width
/// `2ε` over the sorted draws.
pub fn levy_from_draws(draws: &[f64], eps_list: &[f64]) -> Result<Vec<LevyEstimate>> {
    if draws.is_empty() {
        return Err(Error::domain("at least one draw is required"));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::domain(format!("ε = {e} must be positive")));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    Ok(eps_list
        .iter()
        .map(|&eps| {
            let (count, left) = max_window(&sorted, 2.0 * eps);
            let value = count as f64 / n as f64;
            LevyEstimate {
                epsilon: eps,
                value,
                center_star: left + eps,
                draws: n,
                mc_se: binomial_se(value, n),
            }
        })
        .collect())
}

/// `L̂(stat(Y), ε)` for `Y ~ N(0, Σ)`.
pub fn levy_concentration(
    model: &CovarianceModel,
    stat: Statistic,
    eps_list: &[f64],
    draws: usize,
    seed: u64,
) -> Result<Vec<LevyEstimate>> {
    stat.validate(model.dim())?;
    if draws == 0 {
        return Err(Error::domain("draws must be positive"));
    }
    let values = gaussian_statistic_draws(model, draws, seed, |y| stat.eval_in_place(y));
    levy_from_draws(&values, eps_list)
}

/// `4κε(a_p + 1)/σ` for an equal-variance model.
pub fn levy_bound(kappa: usize, eps: f64, a_p: f64, sigma: f64) -> f64 {
    4.0 * kappa as f64 * eps * (a_p + 1.0) / sigma
}

/// Common standard deviation when all variances agree.
pub fn common_sigma(model: &CovarianceModel) -> Option<f64> {
    let sd = model.std_devs();
    let first = sd[0];
    sd.iter().all(|&s| (s - first).abs() <= 1e-12 * first.max(1.0)).then_some(first)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxExpectations {
    /// `Ê max_j Y_j/σ_j`.
    pub a_p: f64,
    pub a_p_se: f64,
    /// `Ê max_j |Y_j|/σ_j`.
    pub abar_p: f64,
    pub abar_p_se: f64,
    /// `√(2 ln p)`.
    pub a_bound: f64,
    /// `2 √(ln p)`.
    pub abar_bound: f64,
    pub draws: usize,
}

impl MaxExpectations {
    /// Both maximal inequalities within `k` standard errors.
    pub fn within_bounds(&self, k: f64) -> bool {
        self.a_p <= self.a_bound + k * self.a_p_se && self.abar_p <= self.abar_bound + k * self.abar_p_se
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo `a_p` and `ā_p` for `Y ~ N(0, Σ)`.
pub fn gaussian_max_expectations(model: &CovarianceModel, draws: usize, seed: u64) -> Result<MaxExpectations> {
    if draws < 2 {
        return Err(Error::domain("at least two draws are needed for a standard error"));
    }
    let sd = model.std_devs();
    if sd.iter().any(|&s| s <= 0.0) {
        return Err(Error::domain("every coordinate needs a positive variance"));
    }
    let inv: Vec<f64> = sd.iter().map(|s| 1.0 / s).collect();
    let pairs: Vec<(f64, f64)> = {
        let p = model.dim();
        (0..draws)
            .into_par_iter()
            .map_init(
                || (vec![0.0; p], Vec::with_capacity(p)),
                |(y, scratch), r| {
                    let mut rng = stream(seed, &[tag::GAUSSIAN, r as u64]);
                    model.sample_gaussian(&mut rng, y, scratch);
                    y.iter().zip(&inv).fold((f64::NEG_INFINITY, 0.0f64), |(mx, ma), (v, w)| {
                        let z = v * w;
                        (mx.max(z), ma.max(z.abs()))
                    })
                },
            )
            .collect()
    };
    let (maxes, abs_maxes): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (a_p, a_p_se) = mean_se(&maxes);
    let (abar_p, abar_p_se) = mean_se(&abs_maxes);
    let lp = (model.dim() as f64).ln();
    Ok(MaxExpectations {
        a_p,
        a_p_se,
        abar_p,
        abar_p_se,
        a_bound: (2.0 * lp).sqrt(),
        abar_bound: 2.0 * lp.sqrt(),
        draws,
    })
}

/// Shared-input Gaussian sampling: `common` and `z` are reused across
/// models so that draws under different covariances are coupled.
fn coupled_sample(model: &CovarianceModel, common: f64, z: &[f64], out: &mut [f64]) {
    match *model.kind() {
        CovarianceKind::Identity => out.copy_from_slice(z),
        CovarianceKind::Equicorrelated { rho } if rho >= 0.0 => {
            let (a, b) = (rho.sqrt() * common, (1.0 - rho).sqrt());
            for (o, zi) in out.iter_mut().zip(z) {
                *o = a + b * zi;
            }
        }
        _ => model.apply_factor(z, out),
    }
}

/// `draws × models.len()` statistic values from coupled Gaussian draws;
/// entry `[m][r]` is draw `r` under model `m`.
fn coupled_statistic_draws(models: &[CovarianceModel], stat: Statistic, draws: usize, seed: u64) -> Vec<Vec<f64>> {
    let p = models[0].dim();
    let rows: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map_init(
            || (vec![0.0; p], vec![0.0; p]),
            |(z, y), r| {
                let mut rng = stream(seed, &[tag::PAIR_U, r as u64]);
                let common: f64 = rng.sample(StandardNormal);
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                models
                    .iter()
                    .map(|m| {
                        coupled_sample(m, common, z, y);
                        stat.eval_in_place(y)
                    })
                    .collect()
            },
        )
        .collect();
    (0..models.len()).map(|k| rows.iter().map(|r| r[k]).collect()).collect()
}

/// Kolmogorov distance between two empirical laws built from paired draws,
/// and a standard error from the paired indicator difference at the
/// maximising threshold.
fn paired_ks(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_unstable_by(f64::total_cmp);
    sb.sort_unstable_by(f64::total_cmp);
    let n = sa.len();
    let (mut i, mut j) = (0usize, 0usize);
    let (mut sup, mut arg) = (0.0f64, f64::NEG_INFINITY);
    while i < n || j < n {
        let t = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < n && sa[i] <= t {
            i += 1;
        }
        while j < n && sb[j] <= t {
            j += 1;
        }
        let d = (i as f64 - j as f64).abs() / n as f64;
        if d > sup {
            sup = d;
            arg = t;
        }
    }
    let disagree = a.iter().zip(b).filter(|(x, y)| (**x <= arg) != (**y <= arg)).count() as f64 / n as f64;
    let se = ((disagree - sup * sup).max(0.0) / n as f64).sqrt();
    (sup, se)
}

/// Least-squares slope of `ln y` on `ln x` over points with `y > 0`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Two Gaussian laws to compare.
#[derive(Clone, Debug)]
pub struct GaussianPairSpec {
    pub sigma_u: CovarianceModel,
    pub sigma_v: CovarianceModel,
}

impl GaussianPairSpec {
    pub fn new(sigma_u: CovarianceModel, sigma_v: CovarianceModel) -> Result<Self> {
        if sigma_u.dim() != sigma_v.dim() {
            return Err(Error::domain("the two covariances must share a dimension"));
        }
        Ok(GaussianPairSpec { sigma_u, sigma_v })
    }

    /// `max_{j,k} |Σ^U_jk - Σ^V_jk|`.
    pub fn sigma_gap(&self) -> f64 {
        (self.sigma_u.matrix() - self.sigma_v.matrix()).amax()
    }

    /// Smallest and largest `Σ^V_jj`.
    pub fn variance_range(&self) -> (f64, f64) {
        let m = self.sigma_v.matrix();
        (0..m.nrows())
            .map(|j| m[(j, j)])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairLadderPoint {
    pub scale: f64,
    pub sigma_gap: f64,
    pub ks: f64,
    pub ks_se: f64,
    /// `κ² Σ^{1/3} {1 ∨ ā_p² ∨ ln(1/Σ)}^{1/3} ln^{1/3} p` with unit constant.
    pub bound_shape: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub kappa: usize,
    pub p: usize,
    pub draws: usize,
    pub sigma_gap: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub a_p_hat: f64,
    pub abar_p_hat: f64,
    pub ladder: Vec<PairLadderPoint>,
    pub slope: Option<f64>,
    /// Every step down the ladder lowers the distance by more than twice
    /// the joint standard error.
    pub strictly_decreasing: bool,
}

pub const DEFAULT_GAP_LADDER: [f64; 3] = [1.0, 0.1, 0.01];

/// Compares `U_[κ]` with `V_[κ]` along `Σ^V + t(Σ^U - Σ^V)` for each `t`
/// in `scales`. All ladder points use the same normal inputs, so the
/// differences between ladder points are not swamped by sampling noise.
pub fn gaussian_pair_comparison(
    pair: &GaussianPairSpec,
    kappa: &KappaSpec,
    scales: &[f64],
    draws: usize,
    seed: u64,
) -> Result<PairReport> {
    let p = pair.sigma_v.dim();
    let k = kappa.validate(p)?;
    if draws < 2 || scales.is_empty() {
        return Err(Error::domain("need at least two draws and one ladder point"));
    }
    if let Some(t) = scales.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::domain(format!("ladder scale {t} must lie in (0, 1]")));
    }
    let (sigma_min, sigma_max) = pair.variance_range();
    if !(sigma_min > 0.0) {
        return Err(Error::capability("the comparison needs min_j Σ^V_jj > 0"));
    }
    let mut models = vec![pair.sigma_v.clone()];
    for &t in scales {
        models.push(pair.sigma_v.interpolate(&pair.sigma_u, t)?);
    }
    let stat = Statistic::KthLargest { kappa: k };
    let columns = coupled_statistic_draws(&models, stat, draws, seed);
    let maxes = gaussian_max_expectations(&pair.sigma_v, draws, seed ^ tag::PAIR_V)?;
    let gap = pair.sigma_gap();
    let lp = (p as f64).ln();
    let ladder: Vec<PairLadderPoint> = scales
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (ks, ks_se) = paired_ks(&columns[i + 1], &columns[0]);
            let g = t * gap;
            let inner = 1f64.max(maxes.abar_p.powi(2)).max((1.0 / g).ln());
            PairLadderPoint {
                scale: t,
                sigma_gap: g,
                ks,
                ks_se,
                bound_shape: (k * k) as f64 * g.cbrt() * inner.cbrt() * lp.cbrt(),
            }
        })
        .collect();
    let gaps: Vec<f64> = ladder.iter().map(|l| l.sigma_gap).collect();
    let kss: Vec<f64> = ladder.iter().map(|l| l.ks).collect();
    let mut order: Vec<&PairLadderPoint> = ladder.iter().collect();
    order.sort_by(|a, b| b.sigma_gap.total_cmp(&a.sigma_gap));
    let strictly_decreasing = order
        .windows(2)
        .all(|w| w[0].ks - w[1].ks > 2.0 * (w[0].ks_se.powi(2) + w[1].ks_se.powi(2)).sqrt());
    Ok(PairReport {
        kappa: k,
        p,
        draws,
        sigma_gap: gap,
        sigma_min,
        sigma_max,
        a_p_hat: maxes.a_p,
        abar_p_hat: maxes.abar_p,
        slope: log_log_slope(&gaps, &kss),
        strictly_decreasing,
        ladder,
    })
}

/// `ln C(p, d)`.
pub fn ln_binomial(p: usize, d: usize) -> f64 {
    let d = d.min(p - d);
    (0..d).map(|i| ((p - i) as f64 / (i + 1) as f64).ln()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowPoint {
    pub epsilon: f64,
    /// `sup_y P̂(y < S²_d(Y) ≤ y + ε)`.
    pub estimate: f64,
    pub mc_se: f64,
    pub bound: f64,
    pub within_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareSumReport {
    pub d: usize,
    pub p: usize,
    pub draws: usize,
    pub lambda_d: f64,
    pub lambda_d_minus_1: f64,
    pub ln_binomial: f64,
    pub constant: f64,
    pub points: Vec<WindowPoint>,
    pub slope: Option<f64>,
}

/// Checks the eigenvalue preconditions and returns `(λ_(d), λ_(d-1))`.
/// For `d = 1` the count requirement is capped at `p` and `λ_(1)` stands
/// in for the missing `λ_(0)`.
pub fn square_sum_eigen_gate(model: &CovarianceModel, d: usize, floor: f64) -> Result<(f64, f64)> {
    let p = model.dim();
    if d == 0 || d > p {
        return Err(Error::domain(format!("d = {d} must lie in 1..={p}")));
    }
    let spec = model.spectrum();
    let tol = 1e-10 * spec.last().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE) * p as f64;
    let positive = spec.iter().filter(|&&l| l > tol).count();
    let need = (p + 2 - d).min(p);
    if positive < need {
        return Err(Error::capability(format!(
            "covariance has {positive} positive eigenvalues; the square-sum bound needs {need}"
        )));
    }
    let lam_d = spec[d - 1];
    let lam_dm1 = if d >= 2 { spec[d - 2] } else { spec[0] };
    let idx = if d >= 2 { d - 1 } else { 1 };
    if !(lam_dm1 > tol) || lam_dm1 < floor {
        return Err(Error::capability(format!(
            "eigenvalue λ_({idx}) = {lam_dm1:e} is below the floor {floor:e}"
        )));
    }
    Ok((lam_d, lam_dm1))
}

/// Window mass of `S²_d(Y)` against `C(p,d) ε / √(λ_(d) λ_(d-1))` times
/// `constant`.
pub fn square_sum_anticoncentration(
    model: &CovarianceModel,
    d: usize,
    eps_list: &[f64],
    draws: usize,
    seed: u64,
    eigen_floor: f64,
    constant: f64,
) -> Result<SquareSumReport> {
    let (lam_d, lam_dm1) = square_sum_eigen_gate(model, d, eigen_floor)?;
    if draws == 0 || eps_list.is_empty() {
        return Err(Error::domain("need draws and at least one ε"));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::domain(format!("ε = {e} must be positive")));
    }
    let stat = Statistic::SquareSumTop { d };
    let mut values = gaussian_statistic_draws(model, draws, seed, |y| stat.eval_in_place(y));
    values.sort_unstable_by(f64::total_cmp);
    let lnb = ln_binomial(model.dim(), d);
    let scale = (lnb - 0.5 * (lam_d.ln() + lam_dm1.ln())).exp() * constant;
    let points: Vec<WindowPoint> = eps_list
        .iter()
        .map(|&eps| {
            let (count, _) = max_window(&values, eps);
            let estimate = count as f64 / draws as f64;
            let mc_se = binomial_se(estimate, draws);
            let bound = scale * eps;
            WindowPoint {
                epsilon: eps,
                estimate,
                mc_se,
                bound,
                within_bound: estimate <= bound + 3.0 * mc_se,
            }
        })
        .collect();
    let eps: Vec<f64> = points.iter().map(|w| w.epsilon).collect();
    let est: Vec<f64> = points.iter().map(|w| w.estimate).collect();
    Ok(SquareSumReport {
        d,
        p: model.dim(),
        draws,
        lambda_d: lam_d,
        lambda_d_minus_1: lam_dm1,
        ln_binomial: lnb,
        constant,
        slope: log_log_slope(&eps, &est),
        points,
    })
}
