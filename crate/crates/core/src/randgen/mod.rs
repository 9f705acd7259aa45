//! Data generation: covariance models, observation families, the rescaled
//! sum and its Gaussian analog, and plug-in moment summaries.

pub mod covariance;
pub mod generator;
pub mod moments;

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use covariance::{CovarianceKind, CovarianceModel};
pub use generator::{default_bound, sample_data, Family, Generator, GeneratorSpec};
pub use moments::{
    delta, estimate_bn, moment_summary, subweibull_probe, truncate, u_bound_shape, Envelope,
    MomentOptions, MomentSummary, OrliczModulus, SubWeibullProbe,
};

use crate::error::{Error, Result};
use crate::order_stats::Vector;
use crate::rng::{stream, tag};

/// `n × p` observation block, row-major, one observation per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    data: Vec<f64>,
    n: usize,
    p: usize,
}

impl SampleMatrix {
    pub fn new(data: Vec<f64>, n: usize, p: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("sample matrix needs at least one row"));
        }
        if p < 3 {
            return Err(Error::domain(format!("dimension p = {p} must be at least 3")));
        }
        if data.len() != n * p {
            return Err(Error::domain(format!(
                "data length {} does not match {n} × {p}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("sample matrix entries must be finite"));
        }
        Ok(SampleMatrix { data, n, p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::domain("rows have unequal lengths"));
        }
        Self::new(rows.concat(), n, p)
    }

    pub(crate) fn from_raw(data: Vec<f64>, n: usize, p: usize) -> Self {
        debug_assert_eq!(data.len(), n * p);
        SampleMatrix { data, n, p }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.p)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> SampleMatrix {
        SampleMatrix::from_raw(self.data.iter().map(|v| v * c).collect(), self.n, self.p)
    }

    /// Reorders columns: column `j` of the result is column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<SampleMatrix> {
        let mut seen = vec![false; self.p];
        if perm.len() != self.p || perm.iter().any(|&k| k >= self.p || std::mem::replace(&mut seen[k], true)) {
            return Err(Error::domain("not a permutation of the columns"));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for r in self.rows() {
            data.extend(perm.iter().map(|&k| r[k]));
        }
        Ok(SampleMatrix::from_raw(data, self.n, self.p))
    }

    /// Second-moment matrix `n⁻¹ Σ_i x_i x_iᵀ`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut m = DMatrix::<f64>::zeros(p, p);
        for r in self.rows() {
            for j in 0..p {
                let rj = r[j];
                for k in 0..=j {
                    m[(j, k)] += rj * r[k];
                }
            }
        }
        let inv = 1.0 / self.n as f64;
        for j in 0..p {
            for k in 0..=j {
                let v = m[(j, k)] * inv;
                m[(j, k)] = v;
                m[(k, j)] = v;
            }
        }
        m
    }

    /// Writes a header of column indices followed by one line per row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record((0..self.p).map(|j| j.to_string()))?;
        for r in self.rows() {
            wr.write_record(r.iter().map(|v| format!("{v:e}")))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<SampleMatrix> {
        let mut rd = csv::Reader::from_reader(r);
        let p = rd.headers()?.len();
        let mut data = Vec::new();
        let mut n = 0;
        for rec in rd.records() {
            let rec = rec?;
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::domain(format!("row {n}: `{field}` is not a number")))?;
                data.push(v);
            }
            n += 1;
        }
        SampleMatrix::new(data, n, p)
    }
}

/// `X_j = n^{-1/2} Σ_i x_ij`.
pub fn rescaled_sum(m: &SampleMatrix) -> Vector {
    let mut out = vec![0.0; m.p()];
    for r in m.rows() {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    let scale = 1.0 / (m.n() as f64).sqrt();
    out.iter_mut().for_each(|o| *o *= scale);
    Vector::new(out).expect("finite entries give a finite sum")
}

/// Which covariance the Gaussian analog uses.
#[derive(Clone, Debug)]
pub enum AnalogCovariance<'a> {
    /// `Σ̂ = n⁻¹ Σ_i x_i x_iᵀ` from the data.
    PlugIn(&'a SampleMatrix),
    /// A known population covariance.
    Population(&'a CovarianceModel),
}

impl AnalogCovariance<'_> {
    pub fn model(&self) -> Result<CovarianceModel> {
        match self {
            AnalogCovariance::PlugIn(m) => CovarianceModel::from_empirical(m.second_moment()),
            AnalogCovariance::Population(c) => Ok((*c).clone()),
        }
    }
}

/// `reps` draws of `Y ~ N(0, Σ)`, replicate `r` on its own stream.
pub fn gaussian_analog(source: AnalogCovariance<'_>, reps: usize, seed: u64) -> Result<Vec<Vector>> {
    if reps == 0 {
        return Err(Error::domain("reps must be positive"));
    }
    let model = source.model()?;
    let p = model.dim();
    let mut scratch = Vec::with_capacity(p);
    Ok((0..reps)
        .map(|r| {
            let mut rng = stream(seed, &[tag::GAUSSIAN, r as u64]);
            let mut y = vec![0.0; p];
            model.sample_gaussian(&mut rng, &mut y, &mut scratch);
            Vector::new(y).expect("gaussian draws are finite")
        })
        .collect())
}

/// `reps` draws of `stat(Y)` with `Y ~ N(0, Σ)`, on the same per-replicate
/// streams as [`gaussian_analog`]; computed in parallel, returned in
/// replicate order.
pub fn gaussian_statistic_draws<F>(model: &CovarianceModel, reps: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&mut [f64]) -> f64 + Sync,
{
    let p = model.dim();
    (0..reps)
        .into_par_iter()
        .map_init(
            || (vec![0.0; p], Vec::with_capacity(p)),
            |(y, scratch), r| {
                let mut rng = stream(seed, &[tag::GAUSSIAN, r as u64]);
                model.sample_gaussian(&mut rng, y, scratch);
                stat(y)
            },
        )
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
        let (mut sum, mut c) = (0.0f64, 0.0f64);
        for v in values {
            let t = sum + v;
            if sum.abs() >= v.abs() {
                c += (sum - t) + v;
            } else {
                c += (v - t) + sum;
            }
            sum = t;
        }
        sum + c
    }

    #[test]
    fn rescaled_sum_basics() {
        let one = SampleMatrix::from_rows(&[vec![1.0, -2.0, 3.5]]).unwrap();
        assert_eq!(&*rescaled_sum(&one), &[1.0, -2.0, 3.5]);
        let zero = SampleMatrix::new(vec![0.0; 12], 4, 3).unwrap();
        assert!(rescaled_sum(&zero).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rescaled_sum_matches_compensated_oracle() {
        let spec = GeneratorSpec::new(Family::CenteredExponential, CovarianceKind::Identity, 7, 3);
        let m = sample_data(&spec, 5000).unwrap();
        let x = rescaled_sum(&m);
        for j in 0..7 {
            let oracle = neumaier((0..m.n()).map(|i| m.get(i, j))) / (m.n() as f64).sqrt();
            assert!((x[j] - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn sample_matrix_validation() {
        assert!(SampleMatrix::new(vec![0.0; 4], 2, 2).is_err());
        assert!(SampleMatrix::new(vec![0.0; 5], 2, 3).is_err());
        assert!(SampleMatrix::new(vec![f64::NAN, 0.0, 0.0], 1, 3).is_err());
        assert!(SampleMatrix::new(vec![], 0, 3).is_err());
    }

    #[test]
    fn gaussian_identity_covariance_recovered() {
        let spec = GeneratorSpec::new(Family::Gaussian, CovarianceKind::Identity, 3, 17);
        let m = sample_data(&spec, 100_000).unwrap();
        let s = m.second_moment();
        for j in 0..3 {
            for k in 0..3 {
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((s[(j, k)] - target).abs() < 0.02);
            }
        }
    }

    #[test]
    fn analog_of_orthonormal_design_is_standard() {
        // rows ±√n e_j give Σ̂ = I exactly
        let p = 4;
        let n = 8;
        let mut rows = Vec::new();
        for i in 0..n {
            let mut r = vec![0.0; p];
            r[i % p] = if i < p { 2.0 } else { -2.0 };
            rows.push(r);
        }
        let m = SampleMatrix::from_rows(&rows).unwrap();
        let s = m.second_moment();
        assert!((s - DMatrix::<f64>::identity(p, p)).amax() < 1e-15);
        let ys = gaussian_analog(AnalogCovariance::PlugIn(&m), 100_000, 5).unwrap();
        for j in 0..p {
            let var = ys.iter().map(|y| y[j] * y[j]).sum::<f64>() / ys.len() as f64;
            assert!((var - 1.0).abs() < 0.05);
        }
        let again = gaussian_analog(AnalogCovariance::PlugIn(&m), 10, 5).unwrap();
        assert_eq!(&*again[3], &*ys[3]);
        let model = AnalogCovariance::PlugIn(&m).model().unwrap();
        let firsts = gaussian_statistic_draws(&model, 10, 5, |y| y[0]);
        assert!(firsts.iter().zip(&again).all(|(a, y)| *a == y[0]));
        assert!(gaussian_analog(AnalogCovariance::PlugIn(&m), 0, 5).is_err());
    }

    #[test]
    fn rank_deficient_plug_in_is_repaired() {
        let spec = GeneratorSpec::new(Family::Gaussian, CovarianceKind::Identity, 10, 1);
        let m = sample_data(&spec, 4).unwrap();
        let model = AnalogCovariance::PlugIn(&m).model().unwrap();
        let ys = gaussian_analog(AnalogCovariance::PlugIn(&m), 3, 2).unwrap();
        assert_eq!(ys.len(), 3);
        assert_eq!(model.dim(), 10);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let spec = GeneratorSpec::new(Family::StudentT { df: 6.0 }, CovarianceKind::Ar1 { rho: 0.3 }, 5, 4);
        let m = sample_data(&spec, 20).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("0,1,2,3,4\n"));
        let back = SampleMatrix::read_csv(&buf[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn column_permutation() {
        let m = SampleMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let q = m.permute_columns(&[2, 0, 1]).unwrap();
        assert_eq!(q.row(1), &[6.0, 4.0, 5.0]);
        assert!(m.permute_columns(&[0, 0, 1]).is_err());
    }
}
