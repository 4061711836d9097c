//! Bracketed scalar root finding.
//!
//! Every scalar equation in this crate is monotone (or convex with a single
//! sign change) in its unknown, so plain bisection on a sign-changing bracket
//! is enough. The bracket may be grown geometrically first.

use crate::error::{Error, Result};

/// Relative interval width at which bisection stops.
pub const REL_TOL: f64 = 1e-13;
/// Iteration cap for bisection and for bracket expansion.
pub const MAX_ITER: usize = 200;

/// Bisect `f` on `[lo, hi]`, which must bracket a sign change.
///
/// Returns the midpoint of the final interval. Stops when the interval width
/// is at most `rel_tol * |mid|`, when `f` hits zero exactly, or when the
/// interval no longer shrinks in floating point.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::RootNotFound("bracket does not contain a sign change"));
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * mid.abs() || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Find the root of a function that is negative to the left of its (unique)
/// positive root and positive to the right, starting from a positive guess.
///
/// The bracket is grown by halving the lower end and doubling the upper end.
pub fn positive_root<F>(mut f: F, guess: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(guess > 0.0 && guess.is_finite()) {
        return Err(Error::RootNotFound("initial guess must be positive and finite"));
    }
    let mut lo = guess;
    let mut hi = guess;
    let mut steps = 0;
    while f(lo) > 0.0 {
        lo *= 0.5;
        steps += 1;
        if steps > MAX_ITER * 5 || lo == 0.0 {
            return Err(Error::RootNotFound("no negative value found below guess"));
        }
    }
    steps = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > MAX_ITER * 5 || !hi.is_finite() {
            return Err(Error::RootNotFound("no positive value found above guess"));
        }
    }
    bisect(f, lo, hi, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, REL_TOL).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bisect_rejects_bad_bracket() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, REL_TOL).is_err());
    }

    #[test]
    fn positive_root_expands_both_ways() {
        let r = positive_root(|x| x - 1e6, 1.0, REL_TOL).unwrap();
        assert!((r / 1e6 - 1.0).abs() < 1e-12);
        let r = positive_root(|x| x - 1e-6, 1.0, REL_TOL).unwrap();
        assert!((r / 1e-6 - 1.0).abs() < 1e-12);
    }
}
