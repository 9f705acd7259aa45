use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parametric description of a covariance matrix. Everything except
/// `Explicit` can be instantiated at any dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceKind {
    Identity,
    /// Unit diagonal, every off-diagonal entry `rho`.
    Equicorrelated { rho: f64 },
    /// `Σ_jk = rho^|j-k|`.
    Ar1 { rho: f64 },
    Explicit { matrix: Vec<Vec<f64>> },
}

impl CovarianceKind {
    pub fn label(&self) -> String {
        match self {
            CovarianceKind::Identity => "identity".into(),
            CovarianceKind::Equicorrelated { rho } => format!("equicorrelated({rho})"),
            CovarianceKind::Ar1 { rho } => format!("ar1({rho})"),
            CovarianceKind::Explicit { matrix } => format!("explicit({}x{})", matrix.len(), matrix.len()),
        }
    }
}

/// A `p × p` positive semidefinite covariance with a lower-triangular
/// factor and its ascending spectrum, both computed on first use.
#[derive(Clone, Debug)]
pub struct CovarianceModel {
    kind: CovarianceKind,
    matrix: DMatrix<f64>,
    factor: OnceLock<DMatrix<f64>>,
    spectrum: OnceLock<Vec<f64>>,
    repaired: bool,
}

/// Relative tolerance for the semidefinite check and the factor roundtrip.
const ROUNDTRIP_TOL: f64 = 1e-10;

impl CovarianceModel {
    pub fn new(kind: CovarianceKind, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::domain("covariance dimension must be positive"));
        }
        let matrix = match &kind {
            CovarianceKind::Identity => DMatrix::identity(p, p),
            CovarianceKind::Equicorrelated { rho } => {
                let lower = if p > 1 { -1.0 / (p as f64 - 1.0) } else { -1.0 };
                if !(rho.is_finite() && *rho >= lower && *rho <= 1.0) {
                    return Err(Error::domain(format!(
                        "equicorrelation {rho} must lie in [{lower}, 1] at p = {p}"
                    )));
                }
                DMatrix::from_fn(p, p, |j, k| if j == k { 1.0 } else { *rho })
            }
            CovarianceKind::Ar1 { rho } => {
                if !(rho.is_finite() && rho.abs() < 1.0) {
                    return Err(Error::domain(format!("AR(1) coefficient {rho} must satisfy |ρ| < 1")));
                }
                DMatrix::from_fn(p, p, |j, k| rho.powi((j as i32 - k as i32).abs()))
            }
            CovarianceKind::Explicit { matrix } => {
                if matrix.len() != p || matrix.iter().any(|r| r.len() != p) {
                    return Err(Error::domain(format!("explicit covariance must be {p} x {p}")));
                }
                let m = DMatrix::from_fn(p, p, |j, k| matrix[j][k]);
                return Self::from_matrix(m);
            }
        };
        Ok(CovarianceModel {
            kind,
            matrix,
            factor: OnceLock::new(),
            spectrum: OnceLock::new(),
            repaired: false,
        })
    }

    pub fn identity(p: usize) -> Self {
        Self::new(CovarianceKind::Identity, p).expect("identity is always valid")
    }

    /// Wraps an explicit matrix after checking symmetry and
    /// semidefiniteness.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let p = matrix.nrows();
        if p == 0 || matrix.ncols() != p {
            return Err(Error::domain("covariance must be a non-empty square matrix"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("covariance entries must be finite"));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        for j in 0..p {
            for k in 0..j {
                if (matrix[(j, k)] - matrix[(k, j)]).abs() > ROUNDTRIP_TOL * scale {
                    return Err(Error::domain(format!("covariance is not symmetric at ({j}, {k})")));
                }
            }
        }
        let spectrum = ascending_eigenvalues(&matrix);
        if spectrum[0] < -ROUNDTRIP_TOL * scale * p as f64 {
            return Err(Error::domain(format!(
                "covariance is not positive semidefinite (smallest eigenvalue {:e})",
                spectrum[0]
            )));
        }
        let rows = (0..p).map(|j| (0..p).map(|k| matrix[(j, k)]).collect()).collect();
        let model = CovarianceModel {
            kind: CovarianceKind::Explicit { matrix: rows },
            matrix,
            factor: OnceLock::new(),
            spectrum: OnceLock::new(),
            repaired: false,
        };
        let _ = model.spectrum.set(spectrum);
        Ok(model)
    }

    /// Plug-in model for an empirical second-moment matrix, which may be
    /// singular when `p > n`. If the semidefinite Cholesky factor does not
    /// reproduce the matrix, eigenvalues are floored at
    /// `1e-12 · trace / p` and the factor is rebuilt from the repaired
    /// spectrum; only null directions are affected.
    pub fn from_empirical(matrix: DMatrix<f64>) -> Result<Self> {
        let model = Self::from_matrix(matrix)?;
        if let Some(l) = semidefinite_cholesky(&model.matrix) {
            if roundtrip_ok(&model.matrix, &l) {
                let _ = model.factor.set(l);
                return Ok(model);
            }
        }
        let p = model.dim();
        let floor = 1e-12 * model.matrix.trace() / p as f64;
        let eig = SymmetricEigen::new(model.matrix.clone());
        let mut lambda = eig.eigenvalues.clone();
        lambda.iter_mut().for_each(|l| *l = l.max(floor));
        let repaired = &eig.eigenvectors
            * DMatrix::from_diagonal(&lambda)
            * eig.eigenvectors.transpose();
        let repaired = (&repaired + repaired.transpose()) * 0.5;
        let l = semidefinite_cholesky(&repaired).ok_or_else(|| Error::Numeric {
            message: "factorization failed after eigenvalue repair".into(),
            residual: floor,
        })?;
        Ok(CovarianceModel {
            kind: model.kind,
            matrix: model.matrix,
            factor: OnceLock::from(l),
            spectrum: OnceLock::new(),
            repaired: true,
        })
    }

    pub fn kind(&self) -> &CovarianceKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Whether the factor came from the eigenvalue-floor repair.
    pub fn repaired(&self) -> bool {
        self.repaired
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ`.
    pub fn factor(&self) -> &DMatrix<f64> {
        self.factor.get_or_init(|| {
            semidefinite_cholesky(&self.matrix)
                .expect("validated covariance admits a semidefinite factor")
        })
    }

    /// Eigenvalues `λ_(1) ≤ … ≤ λ_(p)`.
    pub fn spectrum(&self) -> &[f64] {
        self.spectrum.get_or_init(|| match &self.kind {
            CovarianceKind::Identity => vec![1.0; self.dim()],
            CovarianceKind::Equicorrelated { rho } => {
                let p = self.dim();
                let mut s = vec![1.0 - rho; p.saturating_sub(1)];
                s.push(1.0 + (p as f64 - 1.0) * rho);
                s.sort_unstable_by(f64::total_cmp);
                s
            }
            _ => ascending_eigenvalues(&self.matrix),
        })
    }

    /// Per-coordinate standard deviations `σ_j`.
    pub fn std_devs(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.matrix[(j, j)].max(0.0).sqrt()).collect()
    }

    /// Fills `out` with one draw of `N(0, Σ)`. Identity, nonnegative
    /// equicorrelation and AR(1) use their O(p) representations; other
    /// models multiply by the factor (`scratch` holds the standard normals).
    pub fn sample_gaussian<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], scratch: &mut Vec<f64>) {
        let p = self.dim();
        debug_assert_eq!(out.len(), p);
        match self.kind {
            CovarianceKind::Identity => {
                for o in out.iter_mut() {
                    *o = rng.sample(StandardNormal);
                }
            }
            CovarianceKind::Equicorrelated { rho } if rho >= 0.0 => {
                let common: f64 = rng.sample(StandardNormal);
                let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
                let shared = a * common;
                for o in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = shared + b * z;
                }
            }
            CovarianceKind::Ar1 { rho } => {
                let b = (1.0 - rho * rho).sqrt();
                let mut prev: f64 = rng.sample(StandardNormal);
                out[0] = prev;
                for o in out.iter_mut().skip(1) {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = rho * prev + b * z;
                    *o = prev;
                }
            }
            _ => {
                scratch.clear();
                scratch.extend((0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
                self.apply_factor(scratch, out);
            }
        }
    }

    /// `out = L z`.
    pub fn apply_factor(&self, z: &[f64], out: &mut [f64]) {
        let l = self.factor();
        let p = self.dim();
        for j in 0..p {
            let mut acc = 0.0;
            for k in 0..=j {
                acc += l[(j, k)] * z[k];
            }
            out[j] = acc;
        }
    }

    /// `Σ^V + t (Σ^U - Σ^V)` as an explicit model.
    pub fn interpolate(&self, other: &CovarianceModel, t: f64) -> Result<CovarianceModel> {
        if self.dim() != other.dim() {
            return Err(Error::domain("interpolated covariances must share a dimension"));
        }
        match (&self.kind, &other.kind) {
            (CovarianceKind::Equicorrelated { rho: a }, CovarianceKind::Equicorrelated { rho: b }) => {
                Self::new(CovarianceKind::Equicorrelated { rho: a + t * (b - a) }, self.dim())
            }
            (CovarianceKind::Identity, CovarianceKind::Equicorrelated { rho }) => {
                Self::new(CovarianceKind::Equicorrelated { rho: t * rho }, self.dim())
            }
            (CovarianceKind::Equicorrelated { rho }, CovarianceKind::Identity) => {
                Self::new(CovarianceKind::Equicorrelated { rho: (1.0 - t) * rho }, self.dim())
            }
            _ => Self::from_matrix(&self.matrix + (&other.matrix - &self.matrix) * t),
        }
    }
}

fn ascending_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    v.sort_unstable_by(f64::total_cmp);
    v
}

fn roundtrip_ok(a: &DMatrix<f64>, l: &DMatrix<f64>) -> bool {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    (l * l.transpose() - a).amax() <= ROUNDTRIP_TOL * scale
}

/// Cholesky factorisation that tolerates zero pivots: a pivot within
/// `1e-12 · p · max diag` of zero yields a zero column. Returns `None` on a
/// clearly negative pivot.
pub(crate) fn semidefinite_cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let p = a.nrows();
    let max_diag = (0..p).map(|j| a[(j, j)].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * p as f64 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return None;
        }
        if d <= tol {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}
