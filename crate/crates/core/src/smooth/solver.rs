use crate::error::{Error, Result};

/// Iteration budget for the safeguarded Newton/bisection loop.
const MAX_ITER: usize = 400;

/// Default constraint-residual tolerance `1e-12 * p`.
pub fn default_tolerance(p: usize) -> f64 {
    1e-12 * p as f64
}

/// Logistic function `1 / (1 + e^{-z})` without overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    if z >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `σ(z)(1 - σ(z))`.
#[inline]
pub fn sigmoid_slope(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Constraint map `α ↦ Σ_j σ(β(x_j - α)) - s` and its derivative.
fn constraint(x: &[f64], s: f64, beta: f64, alpha: f64) -> (f64, f64) {
    let mut sum = 0.0;
    let mut slope = 0.0;
    for &xj in x {
        let z = beta * (xj - alpha);
        sum += sigmoid(z);
        slope += sigmoid_slope(z);
    }
    (sum - s, -beta * slope)
}

/// Finds the multiplier `α_s(β, x)` with `Σ_j 1/(1 + e^{β(α - x_j)}) = s`.
///
/// The constraint map is strictly decreasing in α, and at
/// `α = min x - β⁻¹ ln(s/(p-s))` every weight is at least `s/p` while at
/// `α = max x - β⁻¹ ln(s/(p-s))` every weight is at most `s/p`, so that
/// interval brackets the unique root. Inside it a Newton step is taken when
/// it stays in the bracket and shrinks the residual fast enough, otherwise
/// the bracket is bisected.
pub fn solve_alpha(x: &[f64], s: usize, beta: f64, tol: f64) -> Result<f64> {
    let p = x.len();
    if s == 0 || s >= p {
        return Err(Error::domain(format!("s = {s} must lie in 1..{p}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain("β must be positive and finite"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("solver tolerance must be positive"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("x must be finite"));
    }

    let (lo_x, hi_x) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let logit = (s as f64 / (p - s) as f64).ln();
    let mut lo = lo_x - logit / beta;
    let mut hi = hi_x - logit / beta;
    if lo_x == hi_x {
        return Ok(lo);
    }

    let s = s as f64;
    let mut alpha = 0.5 * (lo + hi);
    let (mut h, mut dh) = constraint(x, s, beta, alpha);
    let mut step_old = hi - lo;
    let mut step = step_old;
    let mut best = (h.abs(), alpha);

    for _ in 0..MAX_ITER {
        if h.abs() <= tol {
            return Ok(alpha);
        }
        if h > 0.0 {
            lo = alpha;
        } else {
            hi = alpha;
        }
        let newton_ok = dh < 0.0 && {
            let cand = alpha - h / dh;
            cand > lo && cand < hi && (2.0 * h).abs() <= (step_old * dh).abs()
        };
        step_old = step;
        if newton_ok {
            step = h / dh;
            alpha -= step;
        } else {
            step = 0.5 * (hi - lo);
            alpha = lo + step;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
            // bracket collapsed to adjacent floats: the best attainable root
            let (hh, _) = constraint(x, s, beta, alpha);
            if hh.abs() < best.0 {
                best = (hh.abs(), alpha);
            }
            if best.0 <= tol.max(1e-6) {
                return Ok(best.1);
            }
            return Err(Error::Numeric {
                message: "multiplier bracket collapsed before reaching tolerance".into(),
                residual: best.0,
            });
        }
        let (hn, dn) = constraint(x, s, beta, alpha);
        h = hn;
        dh = dn;
        if h.abs() < best.0 {
            best = (h.abs(), alpha);
        }
    }
    Err(Error::Numeric {
        message: format!("multiplier solver exceeded {MAX_ITER} iterations"),
        residual: best.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(x: &[f64], s: usize, beta: f64, alpha: f64) -> f64 {
        constraint(x, s as f64, beta, alpha).0.abs()
    }

    #[test]
    fn symmetric_zero_vector() {
        for &beta in &[0.1, 1.0, 37.0] {
            let a = solve_alpha(&[0.0; 4], 2, beta, 1e-12).unwrap();
            assert_eq!(a, 0.0);
        }
    }

    #[test]
    fn constant_vector_closed_form() {
        for p in 2..9usize {
            for s in 1..p {
                let c = 1.75;
                let beta = 3.0;
                let a = solve_alpha(&vec![c; p], s, beta, 1e-12).unwrap();
                let expect = c + ((p as f64 / s as f64) - 1.0).ln() / beta;
                assert!((a - expect).abs() < 1e-14, "p={p} s={s}");
            }
        }
    }

    #[test]
    fn random_vectors_converge_inside_bracket() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = rng.random_range(2..40);
            let s = rng.random_range(1..p);
            let beta = 10.0;
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
            let tol = default_tolerance(p);
            let a = solve_alpha(&x, s, beta, tol).unwrap();
            assert!(residual(&x, s, beta, a) <= tol);
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let slack = (2.0 * p as f64).ln() / beta;
            // the map is decreasing: positive residual at the left end,
            // negative at the right end
            assert!(constraint(&x, s as f64, beta, lo - slack).0 >= 0.0);
            assert!(constraint(&x, s as f64, beta, hi + slack).0 <= 0.0);
            assert!(a >= lo - slack && a <= hi + slack);
        }
    }

    #[test]
    fn large_beta_and_spread() {
        let x = [1e3, -1e3, 0.5, 0.25, 0.0, -7.0];
        for &beta in &[1e-3, 1.0, 1e3, 1e5] {
            for s in 1..6 {
                let a = solve_alpha(&x, s, beta, default_tolerance(6)).unwrap();
                assert!(residual(&x, s, beta, a) <= 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_alpha(&[1.0, 2.0], 0, 1.0, 1e-9).is_err());
        assert!(solve_alpha(&[1.0, 2.0], 2, 1.0, 1e-9).is_err());
        assert!(solve_alpha(&[1.0, 2.0], 1, 0.0, 1e-9).is_err());
        assert!(solve_alpha(&[1.0, 2.0], 1, 1.0, 0.0).is_err());
        assert!(solve_alpha(&[1.0, f64::NAN], 1, 1.0, 1e-9).is_err());
    }

    #[test]
    fn stable_primitives() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(0.3) + sigmoid(-0.3) - 1.0).abs() < 1e-16);
        assert_eq!(softplus(800.0), 800.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
        assert!(softplus(-800.0) >= 0.0);
        assert!((sigmoid_slope(0.0) - 0.25).abs() < 1e-16);
    }
}
