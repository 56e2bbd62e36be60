//! Modified Bessel functions of the second kind, orders 0 and 1.
//!
//! For `x <= 2` the ascending series in `I_0`, `I_1` and digamma values is
//! summed directly. For `x > 2` the scaled values `e^x K_0(x)` and
//! `e^x K_1(x)` come from Temme's form of Steed's continued fraction, which
//! converges in a few dozen iterations at `x = 2` and faster beyond. Both
//! branches reach ~1e-15 relative accuracy.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 2.0;
const MAX_ITER: usize = 10_000;

fn check_arg(x: f64) -> Result<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("x", x, "Bessel K requires x > 0"))
    }
}

/// `(K_0(x), K_1(x))` from the ascending series; only used for `x <= 2`.
fn ascending(x: f64) -> (f64, f64) {
    let y = 0.25 * x * x;
    let log_half = (0.5 * x).ln();

    // order 0: K0 = -(ln(x/2) + gamma) I0 + sum H_k y^k / (k!)^2
    let (mut term, mut harmonic) = (1.0, 0.0);
    let (mut i0, mut s0) = (0.0, 0.0);
    // order 1: K1 = 1/x + ln(x/2) I1 - (x/4) sum (psi(k+1) + psi(k+2)) y^k / (k! (k+1)!)
    let mut term1 = 1.0;
    let (mut i1, mut s1) = (0.0, 0.0);
    for k in 0..MAX_ITER {
        let kf = k as f64;
        i0 += term;
        s0 += harmonic * term;
        let next_harmonic = harmonic + 1.0 / (kf + 1.0);
        i1 += term1;
        s1 += (harmonic + next_harmonic - 2.0 * EULER_GAMMA) * term1;
        if term < 1e-17 * i0 && term1 < 1e-17 * i1 {
            break;
        }
        term *= y / ((kf + 1.0) * (kf + 1.0));
        term1 *= y / ((kf + 1.0) * (kf + 2.0));
        harmonic = next_harmonic;
    }
    let k0 = -(log_half + EULER_GAMMA) * i0 + s0;
    let k1 = 1.0 / x + log_half * (0.5 * x * i1) - 0.25 * x * s1;
    (k0, k1)
}

/// `(e^x K_0(x), e^x K_1(x))` by Steed's continued fraction (order mu = 0).
fn continued_fraction_scaled(x: f64) -> (f64, f64) {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let (mut q1, mut q2) = (0.0, 1.0);
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    let h = a1 * h;
    let k0e = (PI / (2.0 * x)).sqrt() / s;
    let k1e = k0e * (x + 0.5 - h) / x;
    (k0e, k1e)
}

fn pair_scaled(x: f64) -> (f64, f64) {
    if x.is_infinite() {
        (0.0, 0.0)
    } else if x <= SERIES_LIMIT {
        let (k0, k1) = ascending(x);
        let ex = x.exp();
        (k0 * ex, k1 * ex)
    } else {
        continued_fraction_scaled(x)
    }
}

fn pair(x: f64) -> (f64, f64) {
    if x <= SERIES_LIMIT {
        ascending(x)
    } else {
        let (k0e, k1e) = pair_scaled(x);
        let emx = (-x).exp();
        (k0e * emx, k1e * emx)
    }
}

/// `K_0(x)`. Underflows to zero above `x ~ 745`.
pub fn bessel_k0(x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok(pair(x).0)
}

/// `K_1(x)`. Underflows to zero above `x ~ 745`.
pub fn bessel_k1(x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok(pair(x).1)
}

/// Exponentially scaled `e^x K_0(x)`; finite for every `x > 0`.
pub fn bessel_k0e(x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok(pair_scaled(x).0)
}

/// Exponentially scaled `e^x K_1(x)`.
pub fn bessel_k1e(x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok(pair_scaled(x).1)
}

/// Leading large-argument form `sqrt(pi / (2x)) e^{-x}` shared by `K_0`
/// and `K_1`. Relative error is about `1/(8x)` against `K_0` and `3/(8x)`
/// against `K_1`.
pub fn asymptotic_k(x: f64) -> Result<f64> {
    check_arg(x)?;
    Ok((PI / (2.0 * x)).sqrt() * (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_values() {
        // Independent quadrature of the integral representations (see
        // tests/special_oracles.rs) gives these to 13+ digits.
        assert_relative_eq!(bessel_k0(1.0).unwrap(), 0.421_024_438_240_708_3, max_relative = 1e-13);
        assert_relative_eq!(bessel_k1(1.0).unwrap(), 0.601_907_230_197_234_6, max_relative = 1e-13);
        assert_relative_eq!(bessel_k0(2.0).unwrap(), 0.113_893_872_749_533_4, max_relative = 1e-13);
        assert_relative_eq!(bessel_k1(2.0).unwrap(), 0.139_865_881_816_522_4, max_relative = 1e-13);
        assert_relative_eq!(bessel_k0(5.0).unwrap(), 3.691_098_334_042_594e-3, max_relative = 1e-13);
        assert_relative_eq!(bessel_k1(5.0).unwrap(), 4.044_613_445_452_164e-3, max_relative = 1e-13);
    }

    #[test]
    fn branches_meet_at_two() {
        let below = ascending(2.0);
        let above = continued_fraction_scaled(2.0);
        let e2 = 2.0f64.exp();
        assert_relative_eq!(below.0 * e2, above.0, max_relative = 1e-14);
        assert_relative_eq!(below.1 * e2, above.1, max_relative = 1e-14);
    }

    #[test]
    fn small_argument_limit() {
        for &x in &[1e-3, 1e-5, 1e-8] {
            let k1 = bessel_k1(x).unwrap();
            assert_relative_eq!(x * k1, 1.0, max_relative = 10.0 * x);
            // K0 ~ -ln(x/2) - gamma
            assert_relative_eq!(bessel_k0(x).unwrap(), -(0.5 * x).ln() - EULER_GAMMA, max_relative = x);
        }
    }

    #[test]
    fn large_argument_limit() {
        for &x in &[50.0, 200.0, 700.0] {
            let asym = (PI / (2.0 * x)).sqrt();
            assert_relative_eq!(bessel_k0e(x).unwrap(), asym, max_relative = 0.2 / x);
            assert_relative_eq!(bessel_k1e(x).unwrap(), asym, max_relative = 0.5 / x);
        }
        assert_eq!(bessel_k0(800.0).unwrap(), 0.0);
        assert!(bessel_k0e(1e6).unwrap() > 0.0);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(bessel_k0(0.0).is_err());
        assert!(bessel_k1(-1.0).is_err());
        assert!(bessel_k0(f64::NAN).is_err());
        assert!(asymptotic_k(0.0).is_err());
    }

    #[test]
    fn asymptote_accuracy_depends_on_argument() {
        let rel = |x: f64, k: f64| (asymptotic_k(x).unwrap() / k - 1.0).abs();
        assert!(rel(10.0, bessel_k0(10.0).unwrap()) < 0.02);
        // about 9.5% at x = 1: the asymptote is unusable there
        assert!(rel(1.0, bessel_k0(1.0).unwrap()) > 0.09);
        assert!(rel(10.0, bessel_k1(10.0).unwrap()) < 0.05);
    }

    #[test]
    fn positive_and_decreasing() {
        let mut prev = (f64::INFINITY, f64::INFINITY);
        let mut x = 1e-3;
        while x < 700.0 {
            let cur = (bessel_k0(x).unwrap(), bessel_k1(x).unwrap());
            assert!(cur.0 > 0.0 && cur.1 > 0.0, "x = {x}");
            assert!(cur.0 < prev.0 && cur.1 < prev.1, "x = {x}");
            assert!(cur.1 > cur.0);
            prev = cur;
            x *= 1.07;
        }
    }
}
