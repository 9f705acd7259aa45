//! Exact (non-smooth) order-statistic functionals and two-sample
//! Kolmogorov distance.
//!
//! These are the reference values every smoothed or simulated quantity in
//! the crate is checked against. Coordinates are ordered with
//! `f64::total_cmp`; NaN is rejected when a [`Vector`] or [`EmpiricalCdf`]
//! is built.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite point of `R^p`, `p >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::domain("vector must have at least one coordinate"));
        }
        if let Some(j) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::domain(format!("coordinate {j} is not finite")));
        }
        Ok(Vector(coords))
    }

    pub fn zeros(p: usize) -> Result<Self> {
        Self::new(vec![0.0; p])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

/// How the order-statistic index is chosen.
///
/// `Fixed` pins κ. `Diverging` lets κ grow with the dimension as
/// `κ(p) = ⌊Λ p^(1-λ)⌋ ∧ ⌊(p+1)/2⌋`, which keeps `κ/p <= Λ p^(-λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum KappaSpec {
    Fixed { kappa: usize },
    Diverging { scale: f64, exponent: f64 },
}

impl KappaSpec {
    pub fn fixed(kappa: usize) -> Self {
        KappaSpec::Fixed { kappa }
    }

    pub fn diverging(scale: f64, exponent: f64) -> Self {
        KappaSpec::Diverging { scale, exponent }
    }

    pub fn is_diverging(&self) -> bool {
        matches!(self, KappaSpec::Diverging { .. })
    }

    /// The growth exponent `1 - λ` used by the diverging-κ rates; zero in
    /// fixed mode.
    pub fn growth_exponent(&self) -> f64 {
        match *self {
            KappaSpec::Fixed { .. } => 0.0,
            KappaSpec::Diverging { exponent, .. } => 1.0 - exponent,
        }
    }

    /// κ to use at dimension `p`.
    pub fn kappa_for(&self, p: usize) -> usize {
        match *self {
            KappaSpec::Fixed { kappa } => kappa,
            KappaSpec::Diverging { scale, exponent } => {
                let raw = (scale * (p as f64).powf(1.0 - exponent)).floor();
                let raw = if raw.is_finite() && raw > 0.0 { raw as usize } else { 0 };
                raw.min(max_kappa(p)).max(1)
            }
        }
    }

    /// Checks the standing assumption `1 <= κ <= ⌊(p+1)/2⌋` and, in
    /// diverging mode, `κ/p <= Λ p^(-λ)`.
    pub fn validate(&self, p: usize) -> Result<usize> {
        if let KappaSpec::Diverging { scale, exponent } = *self {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::config("kappa.scale", "Λ must be positive and finite"));
            }
            // λ = 1 is admitted as the degenerate constant-κ edge.
            if !(0.0..=1.0).contains(&exponent) {
                return Err(Error::config("kappa.exponent", "λ must lie in [0, 1]"));
            }
        }
        let kappa = self.kappa_for(p);
        if kappa == 0 {
            return Err(Error::config("kappa", "κ must be at least 1"));
        }
        if kappa > max_kappa(p) {
            return Err(Error::config(
                "kappa",
                format!(
                    "κ = {kappa} exceeds ⌊(p+1)/2⌋ = {} for p = {p}; the order-statistic \
                     index must satisfy the standing assumption κ ≤ ⌊(p+1)/2⌋",
                    max_kappa(p)
                ),
            ));
        }
        if let KappaSpec::Diverging { scale, exponent } = *self {
            let ratio = kappa as f64 / p as f64;
            if ratio > scale * (p as f64).powf(-exponent) * (1.0 + 1e-12) {
                return Err(Error::config(
                    "kappa",
                    format!("κ/p = {ratio} exceeds Λ p^(-λ) at p = {p}"),
                ));
            }
        }
        Ok(kappa)
    }
}

/// Largest admissible κ at dimension `p`.
pub fn max_kappa(p: usize) -> usize {
    (p + 1) / 2
}

fn check_index(p: usize, k: usize, what: &str) -> Result<()> {
    if k == 0 || k > p {
        return Err(Error::domain(format!("{what} = {k} must lie in 1..={p}")));
    }
    Ok(())
}

fn descending(a: &f64, b: &f64) -> std::cmp::Ordering {
    b.total_cmp(a)
}

/// `x_[κ]`, the κ-th largest coordinate (`x_[1] >= ... >= x_[p]`).
pub fn kth_largest(v: &[f64], kappa: usize) -> Result<f64> {
    check_index(v.len(), kappa, "κ")?;
    let mut buf = v.to_vec();
    Ok(kth_largest_in_place(&mut buf, kappa))
}

/// Selection on a scratch buffer; reorders `buf`. `kappa` must be in range.
pub(crate) fn kth_largest_in_place(buf: &mut [f64], kappa: usize) -> f64 {
    let (_, kth, _) = buf.select_nth_unstable_by(kappa - 1, descending);
    *kth
}

/// `S_κ(x)`: sum of the κ largest coordinates, with `S_0 = 0`.
pub fn top_k_sum(v: &[f64], kappa: usize) -> Result<f64> {
    if kappa == 0 {
        return Ok(0.0);
    }
    check_index(v.len(), kappa, "κ")?;
    let mut buf = v.to_vec();
    Ok(top_k_sum_in_place(&mut buf, kappa))
}

pub(crate) fn top_k_sum_in_place(buf: &mut [f64], kappa: usize) -> f64 {
    if kappa < buf.len() {
        buf.select_nth_unstable_by(kappa - 1, descending);
    }
    let mut top = buf[..kappa].to_vec();
    // fixed summation order so the result does not depend on the selection
    top.sort_unstable_by(descending);
    top.iter().sum()
}

/// `S²_d(x)`: the largest sum of `d` squared coordinates.
pub fn square_sum_top_d(v: &[f64], d: usize) -> Result<f64> {
    check_index(v.len(), d, "d")?;
    let mut sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    Ok(top_k_sum_in_place(&mut sq, d))
}

/// Empirical distribution of a finite sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("empirical CDF needs at least one value"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::domain("empirical CDF values must not be NaN"));
        }
        values.sort_unstable_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted: values })
    }

    pub fn count(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    /// `F̂(t) = #{x_i <= t} / n`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.sorted.partition_point(|&x| x <= t);
        k as f64 / self.count() as f64
    }
}

/// Two-sample Kolmogorov distance `sup_t |F̂_a(t) - F̂_b(t)|`.
///
/// Both step functions are evaluated right after every jump of the merged
/// grid; the left limit at a jump is the value at the previous grid point,
/// so both sides of each jump are covered.
pub fn ks_distance(a: &EmpiricalCdf, b: &EmpiricalCdf) -> f64 {
    ks_distance_sorted(&a.sorted, &b.sorted)
}

pub(crate) fn ks_distance_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup = 0.0f64;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    sup
}

/// Sorts a sample in place and returns the two-sample KS distance to
/// another (also sorted in place).
pub(crate) fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    ks_distance_sorted(a, b)
}

/// Conservative Monte Carlo standard error of a two-sample KS estimate:
/// the pointwise bound `sqrt(F(1-F)(1/n_a + 1/n_b))` at `F = 1/2`.
pub fn ks_standard_error(n_a: usize, n_b: usize) -> f64 {
    0.5 * (1.0 / n_a as f64 + 1.0 / n_b as f64).sqrt()
}

/// Asymptotic 95% two-sample noise floor `1.36 sqrt(1/n_a + 1/n_b)`.
pub fn ks_noise_floor(n_a: usize, n_b: usize) -> f64 {
    1.36 * (1.0 / n_a as f64 + 1.0 / n_b as f64).sqrt()
}

/// A symmetric functional of a p-vector evaluated in the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    /// `x_[κ]`.
    KthLargest { kappa: usize },
    /// `S²_d(x)`.
    SquareSumTop { d: usize },
    /// `x_[κ]` applied to the squared coordinates.
    KthLargestOfSquares { kappa: usize },
}

impl Statistic {
    pub fn label(&self) -> String {
        match self {
            Statistic::KthLargest { kappa } => format!("kth_largest({kappa})"),
            Statistic::SquareSumTop { d } => format!("square_sum_top({d})"),
            Statistic::KthLargestOfSquares { kappa } => format!("kth_largest_of_squares({kappa})"),
        }
    }

    /// The order index κ or d.
    pub fn index(&self) -> usize {
        match *self {
            Statistic::KthLargest { kappa } | Statistic::KthLargestOfSquares { kappa } => kappa,
            Statistic::SquareSumTop { d } => d,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        check_index(p, self.index(), "order index")
    }

    /// Evaluates on a scratch buffer, which is overwritten.
    pub fn eval_in_place(&self, buf: &mut [f64]) -> f64 {
        match *self {
            Statistic::KthLargest { kappa } => kth_largest_in_place(buf, kappa),
            Statistic::SquareSumTop { d } => {
                buf.iter_mut().for_each(|v| *v *= *v);
                top_k_sum_in_place(buf, d)
            }
            Statistic::KthLargestOfSquares { kappa } => {
                buf.iter_mut().for_each(|v| *v *= *v);
                kth_largest_in_place(buf, kappa)
            }
        }
    }

    pub fn eval(&self, v: &[f64]) -> Result<f64> {
        self.validate(v.len())?;
        Ok(self.eval_in_place(&mut v.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_desc(v: &[f64]) -> Vec<f64> {
        let mut s = v.to_vec();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    }

    #[test]
    fn kth_largest_by_hand() {
        assert_eq!(kth_largest(&[3.0, 1.0, 2.0], 2).unwrap(), 2.0);
        assert_eq!(kth_largest(&[5.0, 5.0, 5.0], 3).unwrap(), 5.0);
        assert_eq!(kth_largest(&[-1.0], 1).unwrap(), -1.0);
    }

    #[test]
    fn index_out_of_range_is_domain_error() {
        assert!(matches!(kth_largest(&[1.0, 2.0], 0), Err(Error::Domain(_))));
        assert!(matches!(kth_largest(&[1.0, 2.0], 3), Err(Error::Domain(_))));
        assert!(matches!(top_k_sum(&[1.0, 2.0], 3), Err(Error::Domain(_))));
        assert!(matches!(square_sum_top_d(&[1.0], 2), Err(Error::Domain(_))));
    }

    #[test]
    fn top_k_sum_by_hand() {
        assert_eq!(top_k_sum(&[3.0, 1.0, 2.0], 2).unwrap(), 5.0);
        assert_eq!(top_k_sum(&[3.0, 1.0, 2.0], 0).unwrap(), 0.0);
        assert_eq!(top_k_sum(&[3.0, 1.0, 2.0], 3).unwrap(), 6.0);
    }

    #[test]
    fn square_sum_by_hand() {
        assert_eq!(square_sum_top_d(&[3.0, -1.0, 2.0], 2).unwrap(), 13.0);
        assert_eq!(square_sum_top_d(&[0.0; 6], 4).unwrap(), 0.0);
    }

    #[test]
    fn vector_rejects_nan_and_empty() {
        assert!(Vector::new(vec![]).is_err());
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![1.0, f64::INFINITY]).is_err());
        assert_eq!(Vector::new(vec![1.0, 2.0]).unwrap().dim(), 2);
    }

    #[test]
    fn kth_largest_matches_full_sort() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = rng.random_range(1..30);
            // coarse grid so ties occur
            let v: Vec<f64> = (0..p).map(|_| rng.random_range(-5..5) as f64 * 0.5).collect();
            let s = sorted_desc(&v);
            for k in 1..=p {
                assert_eq!(kth_largest(&v, k).unwrap(), s[k - 1]);
            }
        }
    }

    #[test]
    fn ks_by_hand() {
        let a = EmpiricalCdf::new(vec![0.0, 0.0, 0.0]).unwrap();
        let b = EmpiricalCdf::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(ks_distance(&a, &b), 1.0);
        assert_eq!(ks_distance(&a, &a), 0.0);
        let a = EmpiricalCdf::new(vec![1.0, 2.0]).unwrap();
        let b = EmpiricalCdf::new(vec![2.0, 3.0]).unwrap();
        assert_eq!(ks_distance(&a, &b), 0.5);
        assert_eq!(ks_distance(&b, &a), 0.5);
    }

    #[test]
    fn ks_counts_ties_on_both_sides() {
        // both jump at 1; only the grid point itself separates them
        let a = EmpiricalCdf::new(vec![1.0, 1.0, 1.0, 5.0]).unwrap();
        let b = EmpiricalCdf::new(vec![0.0, 1.0, 5.0, 5.0]).unwrap();
        // F_a(1) = 3/4, F_b(1) = 1/2; F_a(0) = 0, F_b(0) = 1/4
        assert_eq!(ks_distance(&a, &b), 0.25);
    }

    #[test]
    fn statistic_selector() {
        let v = [3.0, -4.0, 2.0];
        assert_eq!(Statistic::KthLargest { kappa: 2 }.eval(&v).unwrap(), 2.0);
        assert_eq!(Statistic::SquareSumTop { d: 2 }.eval(&v).unwrap(), 25.0);
        assert_eq!(Statistic::KthLargestOfSquares { kappa: 1 }.eval(&v).unwrap(), 16.0);
        assert_eq!(
            Statistic::KthLargestOfSquares { kappa: 1 }.eval(&v).unwrap(),
            Statistic::SquareSumTop { d: 1 }.eval(&v).unwrap()
        );
        assert!(Statistic::SquareSumTop { d: 4 }.eval(&v).is_err());
    }

    #[test]
    fn empty_cdf_rejected() {
        assert!(matches!(EmpiricalCdf::new(vec![]), Err(Error::Domain(_))));
        assert!(EmpiricalCdf::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn ecdf_eval_is_right_continuous() {
        let f = EmpiricalCdf::new(vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert_eq!(f.eval(0.5), 0.0);
        assert_eq!(f.eval(2.0), 0.75);
        assert_eq!(f.eval(1.999), 0.25);
        assert_eq!(f.eval(4.0), 1.0);
    }

    #[test]
    fn kappa_spec_validation() {
        assert_eq!(KappaSpec::fixed(3).validate(5).unwrap(), 3);
        assert!(matches!(
            KappaSpec::fixed(4).validate(6),
            Err(Error::Config { .. })
        ));
        assert!(KappaSpec::fixed(0).validate(6).is_err());
        let div = KappaSpec::diverging(1.0, 0.5);
        assert_eq!(div.kappa_for(16), 4);
        assert_eq!(div.kappa_for(64), 8);
        assert_eq!(div.kappa_for(256), 16);
        assert_eq!(div.validate(256).unwrap(), 16);
        // λ = 1 degenerates to a constant κ = ⌊Λ⌋
        let flat = KappaSpec::diverging(3.0, 1.0);
        assert_eq!(flat.kappa_for(10), 3);
        assert_eq!(flat.kappa_for(1000), 3);
        // capped by ⌊(p+1)/2⌋
        assert_eq!(KappaSpec::diverging(10.0, 0.0).kappa_for(9), 5);
        assert!(KappaSpec::diverging(0.01, 0.5).validate(16).is_err());
    }
}
