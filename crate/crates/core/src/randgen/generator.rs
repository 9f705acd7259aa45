use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::{CovarianceKind, CovarianceModel, SampleMatrix};
use crate::error::{Error, Result};
use crate::rng::{stream, tag, StreamRng};

/// Marginal family of the standardized scalars that get mixed by the
/// covariance factor. Every family is centered with unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    Uniform,
    /// `Exp(1) - 1`.
    CenteredExponential,
    /// Student t rescaled to unit variance; `df > 4`.
    StudentT {
        #[serde(default = "default_df")]
        df: f64,
    },
    /// Three-point law on `{-B, 0, B}` with `P(±B) = 1/(2B²)`, so `|x| ≤ B`
    /// with unit variance. `B` defaults to `(ln p)²`.
    BoundedScaled {
        #[serde(default)]
        bound: Option<f64>,
    },
}

fn default_df() -> f64 {
    8.0
}

impl Family {
    pub fn label(&self) -> String {
        match self {
            Family::Gaussian => "gaussian".into(),
            Family::Rademacher => "rademacher".into(),
            Family::Uniform => "uniform".into(),
            Family::CenteredExponential => "centered_exponential".into(),
            Family::StudentT { df } => format!("student_t({df})"),
            Family::BoundedScaled { bound } => match bound {
                Some(b) => format!("bounded_scaled({b})"),
                None => "bounded_scaled".into(),
            },
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Family::Gaussian)
    }

    /// Whether the law is symmetric about zero.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, Family::CenteredExponential)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: Family,
    pub covariance: CovarianceKind,
    pub p: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(family: Family, covariance: CovarianceKind, p: usize, seed: u64) -> Self {
        GeneratorSpec {
            family,
            covariance,
            p,
            seed,
        }
    }

    /// Same family and covariance at another dimension.
    pub fn with_dim(&self, p: usize) -> Self {
        GeneratorSpec { p, ..self.clone() }
    }

    pub fn build(&self) -> Result<Generator> {
        if self.p < 3 {
            return Err(Error::domain(format!("dimension p = {} must be at least 3", self.p)));
        }
        let scalar = match &self.family {
            Family::Gaussian => Scalar::Gaussian,
            Family::Rademacher => Scalar::Rademacher,
            Family::Uniform => Scalar::Uniform,
            Family::CenteredExponential => Scalar::Exponential,
            Family::StudentT { df } => {
                if !(*df > 4.0 && df.is_finite()) {
                    return Err(Error::domain(format!(
                        "student_t needs df > 4 for finite fourth moments (got {df})"
                    )));
                }
                let dist = StudentT::new(*df).map_err(|e| Error::domain(e.to_string()))?;
                Scalar::StudentT(dist, ((df - 2.0) / df).sqrt())
            }
            Family::BoundedScaled { bound } => {
                let b = bound.unwrap_or_else(|| default_bound(self.p));
                if !(b >= 1.0 && b.is_finite()) {
                    return Err(Error::domain(format!("bounded_scaled bound {b} must be ≥ 1")));
                }
                Scalar::ThreePoint(b, 1.0 / (b * b))
            }
        };
        let model = CovarianceModel::new(self.covariance.clone(), self.p)?;
        Ok(Generator {
            family: self.family.clone(),
            scalar,
            model,
        })
    }
}

/// Default bound `(ln p)²` for the bounded family.
pub fn default_bound(p: usize) -> f64 {
    let l = (p as f64).ln();
    (l * l).max(1.0)
}

#[derive(Clone, Debug)]
enum Scalar {
    Gaussian,
    Rademacher,
    Uniform,
    Exponential,
    StudentT(StudentT<f64>, f64),
    /// bound, total mass on ±bound
    ThreePoint(f64, f64),
}

impl Scalar {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Scalar::Gaussian => rng.sample(StandardNormal),
            Scalar::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Scalar::Uniform => (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
            Scalar::Exponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            Scalar::StudentT(d, scale) => d.sample(rng) * scale,
            Scalar::ThreePoint(b, mass) => {
                let u: f64 = rng.random();
                if u < 0.5 * mass {
                    *b
                } else if u < *mass {
                    -*b
                } else {
                    0.0
                }
            }
        }
    }
}

/// A validated generator: family plus instantiated covariance model.
#[derive(Clone, Debug)]
pub struct Generator {
    family: Family,
    scalar: Scalar,
    model: CovarianceModel,
}

impl Generator {
    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Bound on `|x_ij|` before mixing, when the family has one.
    pub fn scalar_bound(&self) -> Option<f64> {
        match self.scalar {
            Scalar::Rademacher => Some(1.0),
            Scalar::Uniform => Some(3f64.sqrt()),
            Scalar::ThreePoint(b, _) => Some(b),
            _ => None,
        }
    }

    /// Standardized scalars for one observation, before mixing.
    pub fn draw_standardized<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = self.scalar.draw(rng);
        }
    }

    /// `n` i.i.d. rows `x_i = L ε_i`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SampleMatrix {
        let p = self.dim();
        let mut data = vec![0.0; n * p];
        let identity = matches!(self.model.kind(), CovarianceKind::Identity);
        let mut eps = vec![0.0; p];
        for row in data.chunks_exact_mut(p) {
            if identity {
                self.draw_standardized(rng, row);
            } else {
                self.draw_standardized(rng, &mut eps);
                self.model.apply_factor(&eps, row);
            }
        }
        SampleMatrix::from_raw(data, n, p)
    }

    /// Draws `n` rows and returns only their rescaled sum, without keeping
    /// the matrix around.
    pub fn sample_rescaled_sum<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, out: &mut [f64]) {
        let p = self.dim();
        let identity = matches!(self.model.kind(), CovarianceKind::Identity);
        let mut eps = vec![0.0; p];
        let mut row = vec![0.0; p];
        out.iter_mut().for_each(|o| *o = 0.0);
        for _ in 0..n {
            if identity {
                self.draw_standardized(rng, &mut row);
            } else {
                self.draw_standardized(rng, &mut eps);
                self.model.apply_factor(&eps, &mut row);
            }
            for (o, r) in out.iter_mut().zip(&row) {
                *o += r;
            }
        }
        let scale = 1.0 / (n as f64).sqrt();
        out.iter_mut().for_each(|o| *o *= scale);
    }
}

/// `n` observations from `spec`, deterministic in `spec.seed`.
pub fn sample_data(spec: &GeneratorSpec, n: usize) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::domain("sample size must be positive"));
    }
    let g = spec.build()?;
    Ok(g.sample(n, &mut data_stream(spec.seed)))
}

fn data_stream(seed: u64) -> StreamRng {
    stream(seed, &[tag::DATA])
}
