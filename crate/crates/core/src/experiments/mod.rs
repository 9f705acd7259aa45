//! Monte Carlo Kolmogorov-distance experiments between a statistic of the
//! rescaled sum `X` and the same statistic of its Gaussian analog.

pub mod functional;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use functional::{d_n, d_n_hat, functional_comparison, FunctionalReport, FunctionalSpec};

use crate::anticoncentration::{log_log_slope, square_sum_eigen_gate};
use crate::error::{Error, Result};
use crate::order_stats::{ks_noise_floor, ks_two_sample, ks_standard_error, KappaSpec, Statistic};
use crate::randgen::{
    estimate_bn, gaussian_statistic_draws, AnalogCovariance, CovarianceModel, Envelope, Family, Generator,
    GeneratorSpec,
};
use crate::rng::{stream, tag, SeedKey};

/// Covariance used for the Gaussian side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMode {
    /// The generator's population covariance.
    #[default]
    Population,
    /// `Σ̂` from one pilot sample of size `n`.
    PlugIn,
}

/// Knobs of the growth-condition bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeKnobs {
    /// Moment envelope; chosen from the family when absent.
    #[serde(default)]
    pub envelope: Option<Envelope>,
    /// `C₂` in `C₂ n^{-c₂}`.
    #[serde(default = "one")]
    pub c2_const: f64,
    /// `c₂` in `C₂ n^{-c₂}`.
    #[serde(default = "default_c2_exp")]
    pub c2_exp: f64,
    /// `B_n`; estimated from a pilot sample when absent.
    #[serde(default)]
    pub bn: Option<f64>,
    /// Floor on `λ_(d-1)` for square-sum cells.
    #[serde(default)]
    pub eigen_floor: f64,
}

fn one() -> f64 {
    1.0
}

fn default_c2_exp() -> f64 {
    0.25
}

impl Default for RegimeKnobs {
    fn default() -> Self {
        RegimeKnobs {
            envelope: None,
            c2_const: 1.0,
            c2_exp: default_c2_exp(),
            bn: None,
            eigen_floor: 0.0,
        }
    }
}

impl RegimeKnobs {
    fn envelope_for(&self, family: &Family) -> Envelope {
        self.envelope.unwrap_or(match family {
            Family::StudentT { .. } => Envelope::E2,
            _ => Envelope::E1,
        })
    }
}

/// Which growth condition a cell is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegimeKind {
    /// `B_n^k (ln pn)^7 / n`.
    Fixed,
    /// `p^{24(1-λ)} B_n^k (ln pn)^7 / n`.
    Diverging { growth: f64 },
    /// `p^{8((b+d) ∨ 3)} B_n^k (ln pn)^7 / n`.
    SquareSum { b: f64, d: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeCheck {
    pub label: String,
    pub bn: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates the growth condition of the labelled regime at `(n, p)`.
pub fn regime_check(kind: RegimeKind, env: Envelope, bn: f64, n: usize, p: usize, knobs: &RegimeKnobs) -> RegimeCheck {
    let (nf, pf) = (n as f64, p as f64);
    let core = bn.powi(env.bn_power()) * (pf * nf).ln().powi(7) / nf;
    let (prefactor, suffix) = match kind {
        RegimeKind::Fixed => (1.0, ""),
        RegimeKind::Diverging { growth } => (pf.powf(24.0 * growth), "'"),
        RegimeKind::SquareSum { b, d } => (pf.powf(8.0 * (b + d as f64).max(3.0)), "''"),
    };
    let lhs = prefactor * core;
    let rhs = knobs.c2_const * nf.powf(-knobs.c2_exp);
    let idx = match env {
        Envelope::E1 => 1,
        Envelope::E2 => 2,
    };
    RegimeCheck {
        label: format!("{}+S.{idx}{suffix}", env.label()),
        bn,
        lhs,
        rhs,
        holds: lhs <= rhs,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayExperimentSpec {
    pub generator: GeneratorSpec,
    pub n_ladder: Vec<usize>,
    /// Dimensions to run; `[generator.p]` when empty.
    #[serde(default)]
    pub p_ladder: Vec<usize>,
    #[serde(default)]
    pub kappa: Option<KappaSpec>,
    /// Square-sum order; mutually exclusive with `kappa`.
    #[serde(default)]
    pub d: Option<usize>,
    pub mc_reps: usize,
    #[serde(default)]
    pub z_mode: ZMode,
    #[serde(default)]
    pub regime: RegimeKnobs,
    #[serde(default)]
    pub seed: u64,
}

impl DecayExperimentSpec {
    pub fn dims(&self) -> Vec<usize> {
        if self.p_ladder.is_empty() {
            vec![self.generator.p]
        } else {
            self.p_ladder.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ladder.is_empty() {
            return Err(Error::config("n_ladder", "at least one sample size is required"));
        }
        if self.n_ladder[0] == 0 || self.n_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("n_ladder", "sample sizes must be positive and strictly increasing"));
        }
        if self.mc_reps < 2 {
            return Err(Error::config("mc_reps", "at least two reps per side are required"));
        }
        let dims = self.dims();
        if dims.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("p_ladder", "dimensions must be strictly increasing"));
        }
        match (self.kappa, self.d) {
            (Some(_), Some(_)) => return Err(Error::config("d", "set either kappa or d, not both")),
            (None, None) => return Err(Error::config("kappa", "one of kappa or d is required")),
            _ => {}
        }
        for &p in &dims {
            if p < 3 {
                return Err(Error::config("p", format!("dimension {p} must be at least 3")));
            }
            if let Some(k) = &self.kappa {
                k.validate(p)?;
            }
            if let Some(d) = self.d {
                if d == 0 || d > p {
                    return Err(Error::config("d", format!("d = {d} must lie in 1..={p}")));
                }
            }
        }
        if !(self.regime.c2_const > 0.0 && self.regime.c2_exp.is_finite()) {
            return Err(Error::config("regime", "C₂ must be positive and c₂ finite"));
        }
        if let Some(b) = self.regime.bn {
            if !(b >= 1.0 && b.is_finite()) {
                return Err(Error::config("regime.bn", "B_n must be at least 1"));
            }
        }
        Ok(())
    }
}

/// One `(n, p)` cell of a decay experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub p: usize,
    /// κ or d.
    pub index: usize,
    pub statistic: String,
    pub estimate: f64,
    pub mc_se: f64,
    pub noise_floor: f64,
    pub regime: RegimeCheck,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderSummary {
    pub p: usize,
    /// Fitted slope of `ln ρ̂` on `ln n`.
    pub slope: Option<f64>,
    /// `ρ̂(n_{i+1}) ≤ ρ̂(n_i) + 2·joint SE` along the ladder.
    pub nonincreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub cells: Vec<CellResult>,
    pub ladders: Vec<LadderSummary>,
    pub spec: DecayExperimentSpec,
}

impl ExperimentReport {
    pub fn cell(&self, n: usize, p: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.n == n && c.p == p)
    }

    pub fn max_estimate(&self) -> f64 {
        self.cells.iter().map(|c| c.estimate).fold(0.0, f64::max)
    }
}

/// Per-cell seed, keyed by the cell's coordinates so that adding cells
/// leaves existing ones unchanged.
pub fn cell_seed(master: u64, n: usize, p: usize, index: usize) -> u64 {
    SeedKey::new(master).path(&[p as u64, n as u64, index as u64]).value()
}

/// `reps` draws of `stat(X)` for fresh samples of size `n`.
pub fn statistic_draws_x(gen: &Generator, n: usize, stat: Statistic, reps: usize, seed: u64) -> Vec<f64> {
    let p = gen.dim();
    (0..reps)
        .into_par_iter()
        .map_init(
            || vec![0.0; p],
            |x, r| {
                let mut rng = stream(seed, &[tag::DATA, r as u64]);
                gen.sample_rescaled_sum(n, &mut rng, x);
                stat.eval_in_place(x)
            },
        )
        .collect()
}

/// Two-sample KS estimate and its standard error for an arbitrary
/// statistic at one `(n, p)` cell, against the population Gaussian analog.
pub fn statistic_cell(gen: &Generator, n: usize, stat: Statistic, reps: usize, seed: u64) -> Result<(f64, f64)> {
    stat.validate(gen.dim())?;
    if reps < 2 || n == 0 {
        return Err(Error::config("mc_reps", "need n ≥ 1 and at least two reps per side"));
    }
    let mut x = statistic_draws_x(gen, n, stat, reps, seed);
    let mut z = gaussian_statistic_draws(gen.model(), reps, seed, |y| stat.eval_in_place(y));
    Ok((ks_two_sample(&mut x, &mut z), ks_standard_error(reps, reps)))
}

fn gaussian_side_model(gen: &Generator, mode: ZMode, n: usize, seed: u64) -> Result<CovarianceModel> {
    match mode {
        ZMode::Population => Ok(gen.model().clone()),
        ZMode::PlugIn => {
            let pilot = gen.sample(n, &mut stream(seed, &[tag::PILOT]));
            AnalogCovariance::PlugIn(&pilot).model()
        }
    }
}

fn pilot_bn(gen: &Generator, env: Envelope, n: usize, seed: u64) -> f64 {
    let pilot = gen.sample(n, &mut stream(seed, &[tag::PILOT, 1]));
    estimate_bn(&pilot, env)
}

/// `b` with `λ_(d-1) = p^{-b}` (zero when `λ_(d-1) ≥ 1`).
fn eigen_exponent(model: &CovarianceModel, d: usize, floor: f64) -> Result<f64> {
    let (_, lam) = square_sum_eigen_gate(model, d, floor)?;
    let p = model.dim() as f64;
    Ok((-lam.ln() / p.ln()).max(0.0))
}

fn run_decay(spec: &DecayExperimentSpec, kind: &str) -> Result<ExperimentReport> {
    spec.validate()?;
    let env = spec.regime.envelope_for(&spec.generator.family);
    let mut cells = Vec::new();
    let mut ladders = Vec::new();
    for p in spec.dims() {
        let gen = spec.generator.with_dim(p).build()?;
        let (stat, regime_kind) = match (spec.kappa, spec.d) {
            (Some(k), _) => {
                let kappa = k.validate(p)?;
                let rk = if k.is_diverging() {
                    RegimeKind::Diverging { growth: k.growth_exponent() }
                } else {
                    RegimeKind::Fixed
                };
                (Statistic::KthLargest { kappa }, rk)
            }
            (None, Some(d)) => {
                let b = eigen_exponent(gen.model(), d, spec.regime.eigen_floor)?;
                (Statistic::SquareSumTop { d }, RegimeKind::SquareSum { b, d })
            }
            (None, None) => unreachable!("validated"),
        };
        let mut row = Vec::new();
        for &n in &spec.n_ladder {
            let seed = cell_seed(spec.seed, n, p, stat.index());
            let mut x = statistic_draws_x(&gen, n, stat, spec.mc_reps, seed);
            let z_model = gaussian_side_model(&gen, spec.z_mode, n, seed)?;
            let mut z = gaussian_statistic_draws(&z_model, spec.mc_reps, seed, |y| stat.eval_in_place(y));
            let estimate = ks_two_sample(&mut x, &mut z);
            let bn = spec.regime.bn.unwrap_or_else(|| pilot_bn(&gen, env, n, seed));
            row.push(CellResult {
                n,
                p,
                index: stat.index(),
                statistic: stat.label(),
                estimate,
                mc_se: ks_standard_error(x.len(), z.len()),
                noise_floor: ks_noise_floor(x.len(), z.len()),
                regime: regime_check(regime_kind, env, bn, n, p, &spec.regime),
                seed,
            });
        }
        let ns: Vec<f64> = row.iter().map(|c| c.n as f64).collect();
        let est: Vec<f64> = row.iter().map(|c| c.estimate).collect();
        ladders.push(LadderSummary {
            p,
            slope: log_log_slope(&ns, &est),
            nonincreasing: nonincreasing_within(&row),
        });
        cells.extend(row);
    }
    Ok(ExperimentReport {
        kind: kind.into(),
        cells,
        ladders,
        spec: spec.clone(),
    })
}

/// Whether estimates never rise by more than two joint standard errors.
pub fn nonincreasing_within(cells: &[CellResult]) -> bool {
    cells
        .windows(2)
        .all(|w| w[1].estimate <= w[0].estimate + 2.0 * (w[0].mc_se.powi(2) + w[1].mc_se.powi(2)).sqrt())
}

/// `ρ̂_κ` along the `n` (and `p`) ladders.
pub fn rho_kappa_experiment(spec: &DecayExperimentSpec) -> Result<ExperimentReport> {
    if spec.kappa.is_none() {
        return Err(Error::config("kappa", "rho_kappa needs a kappa specification"));
    }
    run_decay(spec, "rho_kappa")
}

/// `ρ̂_d` for the square sum `S²_d` along the `n` ladder.
pub fn rho_d_square_experiment(spec: &DecayExperimentSpec) -> Result<ExperimentReport> {
    if spec.d.is_none() {
        return Err(Error::config("d", "rho_d needs a square-sum order d"));
    }
    run_decay(spec, "rho_d")
}

/// `ρ̂_κ` with `κ = ⌊Λ p^{1-λ}⌋ ∧ ⌊(p+1)/2⌋` along a `p × n` ladder.
pub fn diverging_kappa_experiment(spec: &DecayExperimentSpec) -> Result<ExperimentReport> {
    match spec.kappa {
        Some(k) if k.is_diverging() => run_decay(spec, "diverging"),
        _ => Err(Error::config("kappa", "the diverging experiment needs kappa.mode = diverging")),
    }
}
