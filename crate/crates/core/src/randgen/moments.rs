use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SampleMatrix;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Default number of row-resampling replicates behind `û(γ)`.
pub const DEFAULT_U_REPLICATES: usize = 200;

/// Plug-in moment summary of a sample matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    /// `(u, φ̂(u))` in grid order.
    pub phi_of_u: Vec<(f64, f64)>,
    /// `(γ, û(γ))` in grid order.
    pub u_of_gamma: Vec<(f64, f64)>,
    /// `max_{j,k} |Ê[x_j x_k] - Σ_jk|` when a reference was supplied.
    pub delta: Option<f64>,
}

impl MomentSummary {
    pub fn phi(&self, u: f64) -> Option<f64> {
        self.phi_of_u.iter().find(|(v, _)| *v == u).map(|(_, f)| *f)
    }

    pub fn u(&self, gamma: f64) -> Option<f64> {
        self.u_of_gamma.iter().find(|(g, _)| *g == gamma).map(|(_, u)| *u)
    }
}

#[derive(Clone, Debug)]
pub struct MomentOptions<'a> {
    pub replicates: usize,
    pub seed: u64,
    /// Population second-moment matrix for `Δ`.
    pub reference: Option<&'a DMatrix<f64>>,
}

impl Default for MomentOptions<'_> {
    fn default() -> Self {
        MomentOptions {
            replicates: DEFAULT_U_REPLICATES,
            seed: 0,
            reference: None,
        }
    }
}

/// Per-column `Ē[x²_{·j}]`; rejects a column with zero second moment.
pub fn column_second_moments(m: &SampleMatrix) -> Result<Vec<f64>> {
    let mut s = vec![0.0; m.p()];
    for r in m.rows() {
        for (a, v) in s.iter_mut().zip(r) {
            *a += v * v;
        }
    }
    let n = m.n() as f64;
    s.iter_mut().for_each(|a| *a /= n);
    if let Some(j) = s.iter().position(|&a| a <= 0.0) {
        return Err(Error::domain(format!(
            "column {j} has zero second moment; the variance floor Ē[x²] ≥ c₁ > 0 fails"
        )));
    }
    Ok(s)
}

/// `M_m = max_j (Ē|x_{·j}|^m)^{1/m}`.
pub fn moment_bound(m: &SampleMatrix, order: f64) -> f64 {
    let mut acc = vec![0.0; m.p()];
    for r in m.rows() {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v.abs().powf(order);
        }
    }
    let n = m.n() as f64;
    acc.into_iter()
        .map(|a| (a / n).powf(1.0 / order))
        .fold(0.0, f64::max)
}

/// `φ̂(u)`: the smallest φ with `Ē[x² 1{|x| > u √Ē x²}] ≤ φ² Ē x²`,
/// maximised over columns.
pub fn phi_hat(m: &SampleMatrix, second: &[f64], u: f64) -> f64 {
    let mut tail = vec![0.0; m.p()];
    for r in m.rows() {
        for (j, v) in r.iter().enumerate() {
            if v.abs() > u * second[j].sqrt() {
                tail[j] += v * v;
            }
        }
    }
    let n = m.n() as f64;
    tail.iter()
        .zip(second)
        .map(|(t, s)| (t / n / s).sqrt())
        .fold(0.0, f64::max)
}

/// `max_{i,j} |x_ij| / √Ē x²_{·j}` for each row `i`.
fn row_envelopes(m: &SampleMatrix, second: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = second.iter().map(|s| 1.0 / s.sqrt()).collect();
    m.rows()
        .map(|r| r.iter().zip(&inv).map(|(v, w)| v.abs() * w).fold(0.0, f64::max))
        .collect()
}

/// Resampled replicates of `max_{i,j} |x_ij| / √Ē x²_{·j}`, sorted.
fn envelope_replicates(m: &SampleMatrix, second: &[f64], replicates: usize, seed: u64) -> Vec<f64> {
    let env = row_envelopes(m, second);
    let n = env.len();
    let mut out: Vec<f64> = (0..replicates)
        .map(|b| {
            let mut rng = stream(seed, &[tag::RESAMPLE, b as u64]);
            (0..n).map(|_| env[rng.random_range(0..n)]).fold(0.0, f64::max)
        })
        .collect();
    out.sort_unstable_by(f64::total_cmp);
    out
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!("γ = {gamma} must lie in (0, 1)")));
    }
    Ok(())
}

/// `max_{j,k} |Ê[x_j x_k] - Σ_jk|`.
pub fn delta(m: &SampleMatrix, reference: &DMatrix<f64>) -> Result<f64> {
    if reference.nrows() != m.p() || reference.ncols() != m.p() {
        return Err(Error::domain("reference covariance dimension does not match the data"));
    }
    column_second_moments(m)?;
    Ok((m.second_moment() - reference).amax())
}

pub fn moment_summary(
    m: &SampleMatrix,
    u_grid: &[f64],
    gamma_grid: &[f64],
    opts: &MomentOptions<'_>,
) -> Result<MomentSummary> {
    if u_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::domain("u and γ grids must be nonempty"));
    }
    if let Some(u) = u_grid.iter().find(|u| !(**u > 0.0 && u.is_finite())) {
        return Err(Error::domain(format!("truncation level u = {u} must be positive")));
    }
    for &g in gamma_grid {
        check_gamma(g)?;
    }
    if opts.replicates == 0 {
        return Err(Error::domain("resampling replicates must be positive"));
    }
    let second = column_second_moments(m)?;
    let phi_of_u = u_grid.iter().map(|&u| (u, phi_hat(m, &second, u))).collect();
    let reps = envelope_replicates(m, &second, opts.replicates, opts.seed);
    let b = reps.len();
    let u_of_gamma = gamma_grid
        .iter()
        .map(|&g| {
            let k = (((1.0 - g) * b as f64) - 1e-12 * b as f64).ceil().clamp(1.0, b as f64) as usize;
            (g, reps[k - 1])
        })
        .collect();
    let delta = opts.reference.map(|r| delta(m, r)).transpose()?;
    Ok(MomentSummary {
        m2: moment_bound(m, 2.0),
        m3: moment_bound(m, 3.0),
        m4: moment_bound(m, 4.0),
        phi_of_u,
        u_of_gamma,
        delta,
    })
}

/// Truncated and recentred copy:
/// `x̃_ij = x_ij 1{|x_ij| ≤ u √Ē x²_{·j}} - Ē[x_{·j} 1{…}]`, with the
/// centring expectation replaced by its sample mean.
pub fn truncate(m: &SampleMatrix, u: f64) -> Result<SampleMatrix> {
    if !(u > 0.0) {
        return Err(Error::domain("truncation level must be positive"));
    }
    let second = column_second_moments(m)?;
    let cut: Vec<f64> = second.iter().map(|s| u * s.sqrt()).collect();
    let p = m.p();
    let mut data: Vec<f64> = m
        .as_slice()
        .iter()
        .enumerate()
        .map(|(idx, &v)| if v.abs() <= cut[idx % p] { v } else { 0.0 })
        .collect();
    let mut mean = vec![0.0; p];
    for r in data.chunks_exact(p) {
        for (a, v) in mean.iter_mut().zip(r) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m.n() as f64);
    for r in data.chunks_exact_mut(p) {
        for (v, a) in r.iter_mut().zip(&mean) {
            *v -= a;
        }
    }
    Ok(SampleMatrix::from_raw(data, m.n(), p))
}

/// Young–Orlicz modulus with the constants `B` (second-moment bound) and
/// `D` (envelope scale) of the upper-function bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrliczModulus {
    /// `h(v) = v^q`, `q ≥ 1`.
    Power { q: f64, b: f64, d: f64 },
    /// `h(v) = e^v - 1`.
    Exponential { b: f64, d: f64 },
}

impl OrliczModulus {
    fn validate(&self) -> Result<()> {
        let (b, d) = match *self {
            OrliczModulus::Power { q, b, d } => {
                if !(q >= 1.0 && q.is_finite()) {
                    return Err(Error::domain(format!("power modulus needs q ≥ 1 (got {q})")));
                }
                (b, d)
            }
            OrliczModulus::Exponential { b, d } => (b, d),
        };
        if !(b > 0.0 && d > 0.0 && b.is_finite() && d.is_finite()) {
            return Err(Error::domain("modulus constants B and D must be positive"));
        }
        Ok(())
    }

    pub fn h(&self, v: f64) -> f64 {
        match *self {
            OrliczModulus::Power { q, .. } => v.powf(q),
            OrliczModulus::Exponential { .. } => v.exp_m1(),
        }
    }

    pub fn h_inv(&self, t: f64) -> f64 {
        match *self {
            OrliczModulus::Power { q, .. } => t.powf(1.0 / q),
            OrliczModulus::Exponential { .. } => t.ln_1p(),
        }
    }

    fn constants(&self) -> (f64, f64) {
        match *self {
            OrliczModulus::Power { b, d, .. } | OrliczModulus::Exponential { b, d } => (b, d),
        }
    }
}

/// `max{D h⁻¹(n/γ), B √ln(pn/γ)}`: the upper-function bound with its
/// unknown constant set to one.
pub fn u_bound_shape(modulus: &OrliczModulus, n: usize, p: usize, gamma: f64) -> Result<f64> {
    modulus.validate()?;
    check_gamma(gamma)?;
    let (b, d) = modulus.constants();
    let (n, p) = (n as f64, p as f64);
    Ok((d * modulus.h_inv(n / gamma)).max(b * (p * n / gamma).ln().sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubWeibullProbe {
    pub varsigma: f64,
    pub k2_hat: f64,
    /// `(Ê|ξ|^q)^{1/q} / q^{1/ς}` for `q = 1..=q_max`.
    pub ratios: Vec<f64>,
}

/// Fits the moment-growth constant `K₂` in `‖ξ‖_q ≤ K₂ q^{1/ς}`.
pub fn subweibull_probe(samples: &[f64], varsigma: f64, q_max: u32) -> Result<SubWeibullProbe> {
    if !(1.0..=2.0).contains(&varsigma) {
        return Err(Error::domain(format!("ς = {varsigma} must lie in [1, 2]")));
    }
    if q_max < 2 {
        return Err(Error::domain("q_max must be at least 2"));
    }
    let need = 100usize.saturating_mul(1usize.checked_shl(q_max).unwrap_or(usize::MAX));
    if samples.len() < need {
        return Err(Error::capability(format!(
            "{} samples cannot stabilise moments up to q = {q_max}; need at least {need}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("samples must be finite"));
    }
    let n = samples.len() as f64;
    let ratios: Vec<f64> = (1..=q_max)
        .map(|q| {
            let q = q as f64;
            let mom = samples.iter().map(|v| v.abs().powf(q)).sum::<f64>() / n;
            mom.powf(1.0 / q) / q.powf(1.0 / varsigma)
        })
        .collect();
    Ok(SubWeibullProbe {
        varsigma,
        k2_hat: ratios.iter().cloned().fold(0.0, f64::max),
        ratios,
    })
}

/// Moment-envelope condition used to label a regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// Exponential-moment envelope.
    E1,
    /// Fourth-moment envelope on the row maximum.
    E2,
}

impl Envelope {
    pub fn label(self) -> &'static str {
        match self {
            Envelope::E1 => "E.1",
            Envelope::E2 => "E.2",
        }
    }

    /// Power of `B_n` in the matching growth condition.
    pub fn bn_power(self) -> i32 {
        match self {
            Envelope::E1 => 2,
            Envelope::E2 => 4,
        }
    }
}

/// Sample analog of the envelope condition's left-hand side at `B`.
pub fn envelope_lhs(m: &SampleMatrix, env: Envelope, b: f64) -> f64 {
    let p = m.p();
    let n = m.n() as f64;
    let (mut m3, mut m4, mut tail) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    let mut row_max = 0.0;
    for r in m.rows() {
        let mut mx = 0.0f64;
        for (j, v) in r.iter().enumerate() {
            let a = v.abs();
            m3[j] += a * a * a / b;
            m4[j] += a * a * a * a / (b * b);
            if env == Envelope::E1 {
                tail[j] += (a / b).exp();
            }
            mx = mx.max(a);
        }
        row_max += (mx / b).powi(4);
    }
    let max_of = |v: &[f64]| v.iter().map(|a| a / n).fold(0.0, f64::max);
    let poly = max_of(&m3).max(max_of(&m4));
    match env {
        Envelope::E1 => poly + max_of(&tail),
        Envelope::E2 => poly + row_max / n,
    }
}

/// Smallest `B_n ≥ 1` for which the sample analog of the envelope condition
/// is at most 4, found by bisection on the decreasing left-hand side.
pub fn estimate_bn(m: &SampleMatrix, env: Envelope) -> f64 {
    let ok = |b: f64| envelope_lhs(m, env, b) <= 4.0;
    if ok(1.0) {
        return 1.0;
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    while !ok(hi) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-9 * hi {
            break;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randgen::{sample_data, CovarianceKind, Family, GeneratorSpec};

    fn data(family: Family, p: usize, n: usize, seed: u64) -> SampleMatrix {
        sample_data(&GeneratorSpec::new(family, CovarianceKind::Identity, p, seed), n).unwrap()
    }

    #[test]
    fn constant_magnitude_columns_have_no_truncation_loss() {
        let m = data(Family::Rademacher, 5, 500, 1);
        let s = moment_summary(&m, &[0.5, 1.0 + 1e-9, 2.0], &[0.1], &MomentOptions::default()).unwrap();
        assert_eq!(s.phi(0.5), Some(1.0));
        assert_eq!(s.phi(1.0 + 1e-9), Some(0.0));
        assert_eq!(s.phi(2.0), Some(0.0));
        assert!((s.m2 - 1.0).abs() < 1e-12 && (s.m4 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_column_is_rejected() {
        let m = SampleMatrix::new(vec![0.0; 30], 10, 3).unwrap();
        let err = moment_summary(&m, &[1.0], &[0.1], &MomentOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Domain(ref s) if s.contains("second moment")));
        assert!(delta(&m, &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn summary_shape_properties() {
        let m = data(Family::StudentT { df: 6.0 }, 8, 2000, 2);
        let us = [0.5, 1.0, 2.0, 3.0, 5.0, 8.0];
        let gs = [0.01, 0.05, 0.1, 0.5, 0.9];
        let s = moment_summary(&m, &us, &gs, &MomentOptions::default()).unwrap();
        assert!(s.m2 <= s.m3 && s.m3 <= s.m4);
        assert!(s.phi_of_u.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(s.u_of_gamma.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(s.delta.is_none());
        assert!(moment_summary(&m, &us, &[1.0], &MomentOptions::default()).is_err());
        assert!(moment_summary(&m, &[0.0], &gs, &MomentOptions::default()).is_err());
    }

    #[test]
    fn bounded_family_phi_vanishes_beyond_bound() {
        let m = data(Family::Uniform, 4, 3000, 3);
        let second = column_second_moments(&m).unwrap();
        let smin = second.iter().cloned().fold(f64::INFINITY, f64::min).sqrt();
        let u = 3f64.sqrt() / smin + 1e-9;
        assert_eq!(phi_hat(&m, &second, u), 0.0);
    }

    #[test]
    fn delta_concentrates_for_gaussian_data() {
        let (n, p) = (10_000, 10);
        let m = data(Family::Gaussian, p, n, 4);
        let d = delta(&m, &DMatrix::identity(p, p)).unwrap();
        assert!(d <= 4.0 * ((p as f64).ln() / n as f64).sqrt(), "Δ = {d}");
    }

    #[test]
    fn truncated_columns_are_centred() {
        let m = data(Family::CenteredExponential, 6, 4000, 5);
        let t = truncate(&m, 2.0).unwrap();
        for j in 0..6 {
            let col = t.column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64).sqrt();
            assert!(mean.abs() <= 2.0 * sd / (col.len() as f64).sqrt());
        }
    }

    #[test]
    fn u_bound_shape_closed_forms() {
        let pw = OrliczModulus::Power { q: 4.0, b: 1.0, d: 1.0 };
        let v = u_bound_shape(&pw, 10_000, 100, 0.1).unwrap();
        let expect = (1e5f64).powf(0.25).max((1e7f64).ln().sqrt());
        assert!((v - expect).abs() < 1e-12);
        let ex = OrliczModulus::Exponential { b: 1.0, d: 1.0 };
        assert!((ex.h_inv(3.0) - 4f64.ln()).abs() < 1e-15);
        assert!((ex.h(ex.h_inv(2.5)) - 2.5).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for g in [0.01, 0.1, 0.5, 0.9, 0.999] {
            let v = u_bound_shape(&ex, 1000, 50, g).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!(u_bound_shape(&OrliczModulus::Power { q: 0.5, b: 1.0, d: 1.0 }, 10, 10, 0.1).is_err());
        assert!(u_bound_shape(&ex, 10, 10, 1.0).is_err());
    }

    #[test]
    fn subweibull_probes() {
        let z = data(Family::Gaussian, 3, 30_000, 6).column(0);
        let probe = subweibull_probe(&z, 2.0, 8).unwrap();
        assert!(probe.k2_hat <= 1.5);
        assert_eq!(subweibull_probe(&vec![0.0; 1000], 2.0, 3).unwrap().k2_hat, 0.0);
        let e = data(Family::CenteredExponential, 3, 30_000, 7).column(0);
        let probe = subweibull_probe(&e, 1.0, 8).unwrap();
        assert!(probe.k2_hat.is_finite() && probe.k2_hat < 2.0);
        assert!(matches!(subweibull_probe(&z[..1000], 2.0, 8), Err(Error::Capability(_))));
        assert!(subweibull_probe(&z, 0.5, 4).is_err());
    }

    #[test]
    fn bn_estimate_makes_condition_hold() {
        let m = data(Family::BoundedScaled { bound: Some(4.0) }, 5, 4000, 8);
        for env in [Envelope::E1, Envelope::E2] {
            let b = estimate_bn(&m, env);
            assert!(b >= 1.0);
            assert!(envelope_lhs(&m, env, b) <= 4.0);
            if b > 1.0 {
                assert!(envelope_lhs(&m, env, b * 0.999) > 4.0 - 1e-6);
            }
        }
    }
}
