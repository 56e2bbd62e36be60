//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Finite intervals start as a single segment. A semi-infinite interval
//! `[a, inf)` is mapped to `[0, 1)` by `x = a + t / (1 - t)`, and the unit
//! interval is pre-split at `t = 2^-k` and `t = 1 - 2^-k` (`k = 1..30`) so
//! that integrands concentrated anywhere in `x ~ 1e-9 .. 1e9` are seen by
//! the first pass. The segment with the largest error is bisected until
//! the summed error meets `max(abs_tol, rel_tol * |I|)`.
//!
//! Kronrod nodes never touch the segment endpoints, so integrable endpoint
//! singularities are fine. The error of a segment is `|K15 - G7|` without
//! QUADPACK's rescaling, which overestimates and costs extra bisections.

// QUADPACK node and weight tables, kept digit for digit
#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const DYADIC_DEPTH: i32 = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Bisections allowed beyond the initial partition.
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        let spec = QuadratureSpec {
            abs_tol,
            rel_tol,
            max_subdivisions,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Relative-only tolerance (absolute tolerance pinned to the smallest
    /// normal f64), for integrals whose magnitude is far from 1.
    pub fn relative(rel_tol: f64) -> Self {
        QuadratureSpec {
            abs_tol: f64::MIN_POSITIVE,
            rel_tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) {
            return Err(Error::invalid("abs_tol", self.abs_tol, "must be positive"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol", self.rel_tol, "must be positive"));
        }
        if self.max_subdivisions < 10 {
            return Err(Error::invalid(
                "max_subdivisions",
                self.max_subdivisions as f64,
                "must be at least 10",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).abs();
    Segment { lo, hi, value, error }
}

/// `integrate` that also reports the error bound and evaluation count.
pub fn integrate_estimate<F>(f: F, lower: f64, upper: f64, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    spec.validate()?;
    if !lower.is_finite() {
        return Err(Error::invalid("lower", lower, "lower limit must be finite"));
    }
    if upper.is_nan() || upper < lower {
        return Err(Error::invalid("upper", upper, "upper limit must be >= lower"));
    }
    if upper == lower {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if upper.is_infinite() {
        let mapped = |t: f64| {
            let s = 1.0 - t;
            f(lower + t / s) / (s * s)
        };
        let mut breaks = Vec::with_capacity(2 * DYADIC_DEPTH as usize + 2);
        breaks.push(0.0);
        breaks.extend((1..=DYADIC_DEPTH).rev().map(|k| 2f64.powi(-k)));
        breaks.extend((2..=DYADIC_DEPTH).map(|k| 1.0 - 2f64.powi(-k)));
        breaks.push(1.0);
        adapt(&mapped, &breaks, spec)
    } else {
        adapt(&f, &[lower, upper], spec)
    }
}

/// Integrates `f` over `[lower, upper]`; `upper` may be `f64::INFINITY`.
///
/// Fails with `NonConvergence` (carrying the best estimate and its error
/// bound) when the tolerance is not met within `max_subdivisions`.
pub fn integrate<F>(f: F, lower: f64, upper: f64, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_estimate(f, lower, upper, spec).map(|e| e.value)
}

fn adapt<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], spec: &QuadratureSpec) -> Result<Estimate> {
    let mut heap: BinaryHeap<Segment> = breaks.windows(2).map(|w| kronrod(f, w[0], w[1])).collect();
    let mut evaluations = 15 * heap.len();
    let mut splits = 0;
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::NonConvergence {
                estimate: value,
                error_bound: error,
            });
        }
        if error <= spec.abs_tol.max(spec.rel_tol * value.abs()) {
            return Ok(Estimate {
                value,
                error,
                evaluations,
            });
        }
        let worst = *heap.peek().expect("at least one segment");
        let mid = 0.5 * (worst.lo + worst.hi);
        let exhausted = splits >= spec.max_subdivisions || mid <= worst.lo || mid >= worst.hi;
        if exhausted {
            return Err(Error::NonConvergence {
                estimate: value,
                error_bound: error,
            });
        }
        heap.pop();
        heap.push(kronrod(f, worst.lo, mid));
        heap.push(kronrod(f, mid, worst.hi));
        evaluations += 30;
        splits += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_interval_length() {
        let k: f64 = 2.0 * WGK[..7].iter().sum::<f64>() + WGK[7];
        let g: f64 = 2.0 * WG[..3].iter().sum::<f64>() + WG[3];
        assert_relative_eq!(k, 2.0, max_relative = 1e-15);
        assert_relative_eq!(g, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn single_rule_exact_for_polynomials() {
        // K15 integrates degree <= 22 exactly, G7 degree <= 13.
        for deg in 0..=22 {
            let seg = kronrod(&|x: f64| x.powi(deg), 0.0, 1.0);
            assert_relative_eq!(seg.value, 1.0 / (deg as f64 + 1.0), max_relative = 1e-14);
            if deg <= 13 {
                assert!(seg.error < 1e-14, "deg {deg}: {}", seg.error);
            }
        }
    }

    #[test]
    fn exponential_on_half_line() {
        let v = integrate(|x| (-x).exp(), 0.0, f64::INFINITY, &QuadratureSpec::default()).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn shifted_lower_limit() {
        let v = integrate(|x| (-x).exp(), 3.0, f64::INFINITY, &QuadratureSpec::default()).unwrap();
        assert_relative_eq!(v, (-3.0f64).exp(), max_relative = 1e-11);
    }

    #[test]
    fn endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2
        let v = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, &QuadratureSpec::default()).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn far_out_mass_is_found() {
        // Gaussian bump centred at 1e6 with width 2e5
        let f = |x: f64| (-((x - 1e6) / 2e5).powi(2)).exp();
        let v = integrate(f, 0.0, f64::INFINITY, &QuadratureSpec::relative(1e-10)).unwrap();
        assert_relative_eq!(v, 2e5 * std::f64::consts::PI.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn non_convergence_reports_best_estimate() {
        let spec = QuadratureSpec::new(1e-300, 1e-300, 10).unwrap();
        match integrate(|x: f64| x.sin() * 100.0, 0.0, 200.0, &spec) {
            Err(Error::NonConvergence { estimate, error_bound }) => {
                assert!(estimate.is_finite());
                assert!(error_bound > 0.0);
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::new(0.0, 1e-10, 100).is_err());
        assert!(QuadratureSpec::new(1e-12, -1.0, 100).is_err());
        assert!(QuadratureSpec::new(1e-12, 1e-10, 9).is_err());
        assert!(integrate(|x| x, 1.0, 0.0, &QuadratureSpec::default()).is_err());
        assert_eq!(integrate(|x| x, 1.0, 1.0, &QuadratureSpec::default()).unwrap(), 0.0);
    }

    #[test]
    fn deterministic() {
        let spec = QuadratureSpec::default();
        let f = |x: f64| (-x * x).exp() * (3.0 * x).cos();
        let a = integrate_estimate(f, 0.0, f64::INFINITY, &spec).unwrap();
        let b = integrate_estimate(f, 0.0, f64::INFINITY, &spec).unwrap();
        assert_eq!(a, b);
    }
}
