//! Run configuration, experiment catalog and orchestration behind the
//! `topk-ga` binary.

mod output;
mod run;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use output::{Manifest, ManifestCell, ManifestFile, Row};
pub use run::{execute, resolve_out_dir, run_config, RunOutcome, MANIFEST_FILE, RESULTS_FILE, SUMMARY_FILE};

use crate::bootstrap::{ApproxStatSpec, CoverageSettings};
use crate::error::{Error, Result};
use crate::experiments::{DecayExperimentSpec, FunctionalSpec};
use crate::order_stats::KappaSpec;
use crate::randgen::{CovarianceKind, CovarianceModel, GeneratorSpec};
use crate::smooth::TestFunctional;

/// Gaussian-side anti-concentration block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnticoncentrationConfig {
    pub covariance: CovarianceKind,
    pub p: usize,
    pub kappas: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub draws: usize,
    /// Dimensions for the maximal-inequality check; `[p]` when empty.
    #[serde(default)]
    pub maxima_dims: Vec<usize>,
    #[serde(default)]
    pub square_sum: Option<SquareSumBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareSumBlock {
    pub d: usize,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub eigen_floor: f64,
    #[serde(default = "one")]
    pub constant: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPairConfig {
    pub p: usize,
    pub sigma_u: CovarianceKind,
    pub sigma_v: CovarianceKind,
    pub kappas: Vec<usize>,
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    pub draws: usize,
}

fn default_scales() -> Vec<f64> {
    crate::anticoncentration::DEFAULT_GAP_LADDER.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub generator: GeneratorSpec,
    pub settings: CoverageSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxCoverageConfig {
    pub generator: GeneratorSpec,
    pub settings: CoverageSettings,
    pub approx: ApproxStatSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSmoothConfig {
    pub p: usize,
    /// Every admissible κ when empty.
    #[serde(default)]
    pub kappas: Vec<usize>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_functionals")]
    pub functionals: Vec<TestFunctional>,
    /// Random points per (κ, β, g) cell.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_pairs")]
    pub lipschitz_pairs: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_betas() -> Vec<f64> {
    vec![1.0, 10.0]
}
fn default_functionals() -> Vec<TestFunctional> {
    vec![TestFunctional::Linear, TestFunctional::sine()]
}
fn default_points() -> usize {
    5
}
fn default_pairs() -> usize {
    200
}
fn default_slack() -> f64 {
    1.15
}

/// One experiment, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    RhoKappa(DecayExperimentSpec),
    RhoD(DecayExperimentSpec),
    Coverage(CoverageConfig),
    ApproxCoverage(ApproxCoverageConfig),
    Anticoncentration(AnticoncentrationConfig),
    GaussianPair(GaussianPairConfig),
    Functional(FunctionalSpec),
    Diverging(DecayExperimentSpec),
    AuditSmooth(AuditSmoothConfig),
}

pub struct CatalogEntry {
    pub kind: &'static str,
    pub exercises: &'static str,
    pub summary: &'static str,
}

pub const CATALOG: [CatalogEntry; 9] = [
    CatalogEntry {
        kind: "rho_kappa",
        exercises: "Theorem: Gaussian Approximation",
        summary: "KS distance between T_κ and Z_κ along an n ladder",
    },
    CatalogEntry {
        kind: "rho_d",
        exercises: "Theorem: Gaussian Approximation for square sums",
        summary: "KS distance between S²_d(X) and S²_d(Y) along an n ladder",
    },
    CatalogEntry {
        kind: "coverage",
        exercises: "Theorem: Validity of Multiplier Bootstrap",
        summary: "coverage of the multiplier-bootstrap quantile",
    },
    CatalogEntry {
        kind: "approx_coverage",
        exercises: "Theorem: Validity of Multiplier Bootstrap for Approximate High-Dimensional Means",
        summary: "coverage under a perturbed statistic with (ζ₁, ζ₂) control",
    },
    CatalogEntry {
        kind: "anticoncentration",
        exercises: "Proposition: Anti-Concentration; Lemma: Gaussian Maximal Inequality",
        summary: "Lévy concentration of Y_[κ], a_p and ā_p, square-sum window mass",
    },
    CatalogEntry {
        kind: "gaussian_pair",
        exercises: "Proposition: Comparison of Distributions",
        summary: "KS distance between U_[κ] and V_[κ] on a covariance-gap ladder",
    },
    CatalogEntry {
        kind: "functional",
        exercises: "Proposition: Comparison of Gaussian to Non-Gaussian",
        summary: "E g(F_κ(X)) - E g(F_κ(Y)) next to the plug-in D_n",
    },
    CatalogEntry {
        kind: "diverging",
        exercises: "Theorem: Gaussian Approximation Possibly Diverging κ",
        summary: "KS distance with κ growing along a p ladder",
    },
    CatalogEntry {
        kind: "audit_smooth",
        exercises: "Lemma: Bounds on Derivatives of g ∘ F_κ; Lemma: Lipschitz Property of F_κ",
        summary: "finite-difference derivative and Lipschitz audits of the smoothed κ-th largest",
    },
];

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::RhoKappa(_) => "rho_kappa",
            Experiment::RhoD(_) => "rho_d",
            Experiment::Coverage(_) => "coverage",
            Experiment::ApproxCoverage(_) => "approx_coverage",
            Experiment::Anticoncentration(_) => "anticoncentration",
            Experiment::GaussianPair(_) => "gaussian_pair",
            Experiment::Functional(_) => "functional",
            Experiment::Diverging(_) => "diverging",
            Experiment::AuditSmooth(_) => "audit_smooth",
        }
    }
}

/// A single run: one experiment plus run-level knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Master seed; overrides any seed inside the experiment block.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn config_error(field: &str, e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::config(field, m),
        other => other,
    }
}

fn check(cond: bool, field: &str, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(field, msg))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(json_field(&e), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::from_json(&text)?, text))
    }

    /// Copy with the master seed pushed into the experiment block.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        match &mut c.experiment {
            Experiment::RhoKappa(s) | Experiment::RhoD(s) | Experiment::Diverging(s) => s.seed = seed,
            Experiment::Functional(s) => s.seed = seed,
            _ => {}
        }
        c
    }

    /// Full validation without running any Monte Carlo work.
    pub fn validate(&self) -> Result<()> {
        match &self.experiment {
            Experiment::RhoKappa(s) => {
                check(s.kappa.is_some(), "kappa", "rho_kappa needs a kappa specification")?;
                validate_decay(s)
            }
            Experiment::RhoD(s) => {
                check(s.d.is_some(), "d", "rho_d needs a square-sum order d")?;
                validate_decay(s)
            }
            Experiment::Diverging(s) => {
                check(
                    s.kappa.is_some_and(|k| k.is_diverging()),
                    "kappa",
                    "the diverging experiment needs kappa.mode = diverging",
                )?;
                validate_decay(s)
            }
            Experiment::Coverage(c) => {
                let g = c.generator.build().map_err(|e| config_error("generator", e))?;
                c.settings.validate(g.dim()).map(|_| ()).map_err(|e| config_error("settings", e))
            }
            Experiment::ApproxCoverage(c) => {
                let g = c.generator.build().map_err(|e| config_error("generator", e))?;
                c.settings.validate(g.dim()).map_err(|e| config_error("settings", e))?;
                c.approx.validate().map_err(|e| config_error("approx", e))
            }
            Experiment::Anticoncentration(a) => {
                CovarianceModel::new(a.covariance.clone(), a.p).map_err(|e| config_error("covariance", e))?;
                check(!a.kappas.is_empty(), "kappas", "at least one κ is required")?;
                for &k in &a.kappas {
                    KappaSpec::fixed(k).validate(a.p)?;
                }
                check(
                    !a.epsilons.is_empty() && a.epsilons.iter().all(|e| *e > 0.0 && e.is_finite()),
                    "epsilons",
                    "window half-widths must be positive",
                )?;
                check(a.draws >= 2, "draws", "at least two draws are required")?;
                check(a.maxima_dims.iter().all(|&p| p >= 2), "maxima_dims", "dimensions must be at least 2")?;
                if let Some(sq) = &a.square_sum {
                    check(sq.d >= 1 && sq.d <= a.p, "square_sum.d", format!("d must lie in 1..={}", a.p))?;
                    check(
                        !sq.epsilons.is_empty() && sq.epsilons.iter().all(|e| *e > 0.0),
                        "square_sum.epsilons",
                        "window widths must be positive",
                    )?;
                }
                Ok(())
            }
            Experiment::GaussianPair(g) => {
                let u = CovarianceModel::new(g.sigma_u.clone(), g.p).map_err(|e| config_error("sigma_u", e))?;
                let v = CovarianceModel::new(g.sigma_v.clone(), g.p).map_err(|e| config_error("sigma_v", e))?;
                crate::anticoncentration::GaussianPairSpec::new(u, v).map_err(|e| config_error("sigma_u", e))?;
                check(!g.kappas.is_empty(), "kappas", "at least one κ is required")?;
                for &k in &g.kappas {
                    KappaSpec::fixed(k).validate(g.p)?;
                }
                check(
                    !g.scales.is_empty() && g.scales.iter().all(|t| *t > 0.0 && *t <= 1.0),
                    "scales",
                    "ladder scales must lie in (0, 1]",
                )?;
                check(g.draws >= 2, "draws", "at least two draws are required")
            }
            Experiment::Functional(f) => {
                f.generator.build().map_err(|e| config_error("generator", e))?;
                f.validate().map_err(|e| config_error("g", e))
            }
            Experiment::AuditSmooth(a) => {
                check(
                    a.p >= 3 && a.p <= crate::smooth::audit::MAX_AUDIT_DIM,
                    "p",
                    format!("audits need 3 ≤ p ≤ {}", crate::smooth::audit::MAX_AUDIT_DIM),
                )?;
                for &k in &a.kappas {
                    KappaSpec::fixed(k).validate(a.p)?;
                }
                check(
                    !a.betas.is_empty() && a.betas.iter().all(|b| *b > 0.0 && b.is_finite()),
                    "betas",
                    "β values must be positive",
                )?;
                check(!a.functionals.is_empty(), "functionals", "at least one test functional is required")?;
                check(a.points >= 1, "points", "at least one audit point is required")?;
                check(a.slack >= 1.0, "slack", "slack factor must be at least 1")
            }
        }
    }
}

fn validate_decay(s: &DecayExperimentSpec) -> Result<()> {
    s.validate()?;
    for p in s.dims() {
        s.generator.with_dim(p).build().map_err(|e| config_error("generator", e))?;
    }
    Ok(())
}

/// Best-effort field name from a serde error message.
fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for key in ["missing field `", "unknown field `", "unknown variant `"] {
        if let Some(i) = msg.find(key) {
            let rest = &msg[i + key.len()..];
            if let Some(j) = rest.find('`') {
                return rest[..j].to_string();
            }
        }
    }
    "<json>".into()
}

/// Exit status for the binary: 2 for configuration problems, 3 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Json(_) => 2,
        _ => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_covers_every_kind() {
        let kinds: Vec<&str> = CATALOG.iter().map(|c| c.kind).collect();
        assert_eq!(kinds.len(), 9);
        let mut sorted = kinds.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), kinds.len());
        assert!(CATALOG
            .iter()
            .any(|c| c.kind == "coverage" && c.exercises.contains("Validity of Multiplier Bootstrap")));
    }

    #[test]
    fn kappa_bound_violation_is_config_error() {
        let text = r#"{
            "experiment": {
                "kind": "rho_kappa",
                "generator": {"family": "gaussian", "covariance": {"kind": "identity"}, "p": 5},
                "n_ladder": [10],
                "kappa": {"mode": "fixed", "kappa": 4},
                "mc_reps": 10
            }
        }"#;
        let c = RunConfig::from_json(text).unwrap();
        let e = c.validate().unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("⌊(p+1)/2⌋"), "{e}");
    }

    #[test]
    fn unknown_kind_names_variant() {
        let e = RunConfig::from_json(r#"{"experiment": {"kind": "nope"}}"#).unwrap_err();
        assert!(matches!(e, Error::Config { ref field, .. } if field == "nope"), "{e:?}");
    }
}
