//! Mean received power and path loss for the three stochastic-ray models.
//!
//! With a deterministic per-collision loss `L` dB and `xi = L ln(10) / 10`,
//! the mean received power at distance `r` is
//!
//! ```text
//! P(r) = P_T * sum_{i >= 1} exp(-xi i) Q_i(r)
//! ```
//!
//! and is evaluated by four routes:
//!
//! * [`Route::Series`]: the sum itself, truncated with a rigorous tail bound.
//! * [`Route::Integral`]: the sum replaced by `int_1^inf dx`, by quadrature.
//! * [`Route::ClosedForm`]: the integral from 0 in closed form; `K_0` for
//!   random walks, a Laplace approximation for `beta = 1/2`, `K_1` for
//!   `beta = 1`.
//! * [`Route::Asymptotic`]: the closed forms with `K_nu` replaced by its
//!   leading large-argument term.
//!
//! Everything is computed as `ln P` internally so that large distances do
//! not underflow before conversion to dB. Path loss is
//! `PL = -10 log10(P / P_T)`.

use std::f64::consts::{LN_10, PI};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::mean_obstacle_spacing;
use crate::rays::RayModel;
use crate::special::{bessel_k0e, bessel_k1e, integrate, QuadratureSpec};

/// Default relative tail tolerance for [`mean_power_series`].
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Smallest Bessel (or Laplace) argument at which the asymptotic route is
/// considered inside its regime.
pub const ASYMPTOTIC_MIN_ARGUMENT: f64 = 5.0;

const MAX_SERIES_TERMS: u64 = 50_000_000;
const TYPICAL_LOSS_DB: (f64, f64) = (2.0, 10.0);

/// `xi = L ln(10) / 10`: per-collision loss on the natural-log scale.
pub fn xi_from_reflection_loss(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0 && loss_db.is_finite()) {
        return Err(Error::invalid("L", loss_db, "reflection loss must be >= 0 dB"));
    }
    Ok(loss_db * LN_10 / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    cell_side: f64,
    open_prob: f64,
    reflection_loss_db: f64,
    transmit_power: f64,
}

impl ChannelParams {
    /// Channel with `P_T = 1`. Logs a warning when `L` falls outside the
    /// usual 2..10 dB band.
    pub fn new(cell_side: f64, open_prob: f64, reflection_loss_db: f64) -> Result<Self> {
        let params = Self::build(cell_side, open_prob, reflection_loss_db, 1.0)?;
        if !params.reflection_loss_is_typical() {
            log::warn!(
                "reflection loss {reflection_loss_db} dB is outside the typical {}..{} dB range",
                TYPICAL_LOSS_DB.0,
                TYPICAL_LOSS_DB.1
            );
        }
        Ok(params)
    }

    fn build(a: f64, p: f64, loss: f64, pt: f64) -> Result<Self> {
        mean_obstacle_spacing(a, p)?;
        xi_from_reflection_loss(loss)?;
        if !(pt > 0.0 && pt.is_finite()) {
            return Err(Error::invalid("P_T", pt, "transmit power must be positive"));
        }
        Ok(ChannelParams {
            cell_side: a,
            open_prob: p,
            reflection_loss_db: loss,
            transmit_power: pt,
        })
    }

    pub fn with_transmit_power(self, watts: f64) -> Result<Self> {
        Self::build(self.cell_side, self.open_prob, self.reflection_loss_db, watts)
    }

    /// Same channel with another `L`; no range warning (used by fitting).
    pub fn with_reflection_loss(self, loss_db: f64) -> Result<Self> {
        Self::build(self.cell_side, self.open_prob, loss_db, self.transmit_power)
    }

    pub fn with_cell_side(self, a: f64) -> Result<Self> {
        Self::build(a, self.open_prob, self.reflection_loss_db, self.transmit_power)
    }

    pub fn with_open_prob(self, p: f64) -> Result<Self> {
        Self::build(self.cell_side, p, self.reflection_loss_db, self.transmit_power)
    }

    pub fn cell_side(&self) -> f64 {
        self.cell_side
    }

    pub fn open_prob(&self) -> f64 {
        self.open_prob
    }

    pub fn reflection_loss_db(&self) -> f64 {
        self.reflection_loss_db
    }

    pub fn transmit_power(&self) -> f64 {
        self.transmit_power
    }

    /// Always derived from `L`, never stored.
    pub fn xi(&self) -> f64 {
        self.reflection_loss_db * LN_10 / 10.0
    }

    /// Mean obstacle spacing `a / sqrt(1 - p)`.
    pub fn d_bar(&self) -> f64 {
        self.cell_side / (1.0 - self.open_prob).sqrt()
    }

    pub fn reflection_loss_is_typical(&self) -> bool {
        (TYPICAL_LOSS_DB.0..=TYPICAL_LOSS_DB.1).contains(&self.reflection_loss_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Series,
    Integral,
    ClosedForm,
    Asymptotic,
}

impl Route {
    pub const ALL: [Route; 4] = [Route::Series, Route::Integral, Route::ClosedForm, Route::Asymptotic];

    pub fn tag(&self) -> &'static str {
        match self {
            Route::Series => "series",
            Route::Integral => "integral",
            Route::ClosedForm => "closed",
            Route::Asymptotic => "asymptotic",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Route::ALL
            .into_iter()
            .find(|r| r.tag() == s)
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("unknown route {s:?} (expected series, integral, closed, asymptotic)"),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerResult {
    pub r: f64,
    pub model: RayModel,
    pub route: Route,
    /// Linear received power in watts.
    pub power: f64,
    pub path_loss_db: f64,
    /// False only for the asymptotic route below [`ASYMPTOTIC_MIN_ARGUMENT`].
    pub in_regime: bool,
}

impl PowerResult {
    fn from_ln(r: f64, model: RayModel, route: Route, ln_power: f64, params: &ChannelParams) -> Result<Self> {
        let path_loss_db = -10.0 * ln_power / LN_10;
        let power = params.transmit_power * ln_power.exp();
        if !(power > 0.0) {
            return Err(Error::Underflow { r, path_loss_db });
        }
        Ok(PowerResult {
            r,
            model,
            route,
            power,
            path_loss_db,
            in_regime: true,
        })
    }
}

fn check_far_field(r: f64) -> Result<()> {
    if r > 1.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::FarFieldViolation { r })
    }
}

fn check_damped(params: &ChannelParams) -> Result<()> {
    if params.xi() > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("L", params.reflection_loss_db, "route requires L > 0"))
    }
}

/// `ln Q_x(r)` for a continuous collision index `x`.
fn ln_density(model: RayModel, r: f64, d_bar: f64, x: f64) -> f64 {
    match model {
        RayModel::RandomWalk => {
            let d2 = d_bar * d_bar * x;
            -(PI * d2).ln() - r * r / d2
        }
        RayModel::Generic { beta } => {
            let d = d_bar * x.powf(beta);
            (2.0 / (PI * d * d)).ln() - 2.0 * r / d
        }
    }
}

/// Collision index at which `i -> Q_i(r)` peaks (where `D_i = r`).
fn density_mode(model: RayModel, r: f64, d_bar: f64) -> f64 {
    (r / d_bar).powf(1.0 / model.beta())
}

/// Truncated sum `sum_i exp(-xi i) Q_i(r)`.
///
/// Past the peak of `Q_i(r)` in `i`, consecutive terms shrink by at least
/// `exp(-xi)`, so the remainder after term `t_n` is at most
/// `t_n e^{-xi} / (1 - e^{-xi})`. Summation stops once that bound drops
/// below `tail_tol` times the partial sum.
pub fn mean_power_series(r: f64, model: RayModel, params: &ChannelParams, tail_tol: f64) -> Result<PowerResult> {
    check_far_field(r)?;
    if !(tail_tol > 0.0) {
        return Err(Error::invalid("tail_tol", tail_tol, "must be positive"));
    }
    let xi = params.xi();
    if !(xi > 0.0) {
        return Err(Error::SeriesNonConvergence { terms: 0, xi });
    }
    let d_bar = params.d_bar();
    let mode = density_mode(model, r, d_bar);
    let ln_tail_factor = -xi - (-(-xi).exp_m1()).ln();
    let ln_tol = tail_tol.ln();

    // running log-sum-exp: sum = exp(shift) * scaled
    let (mut shift, mut scaled) = (f64::NEG_INFINITY, 0.0);
    for i in 1..=MAX_SERIES_TERMS {
        let x = i as f64;
        let ln_term = -xi * x + ln_density(model, r, d_bar, x);
        if ln_term > shift {
            scaled = scaled * (shift - ln_term).exp() + 1.0;
            shift = ln_term;
        } else {
            scaled += (ln_term - shift).exp();
        }
        if x >= mode && ln_term + ln_tail_factor < ln_tol + shift + scaled.ln() {
            let ln_sum = shift + scaled.ln();
            return PowerResult::from_ln(r, model, Route::Series, ln_sum, params);
        }
    }
    Err(Error::SeriesNonConvergence {
        terms: MAX_SERIES_TERMS,
        xi,
    })
}

/// Lower limit of the continuous collision index in [`Route::Integral`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerLimit {
    /// `x = 1`, the first collision (equivalently `y = d_bar` in spacing units).
    FirstCollision,
    /// `x = 0`, the limit under which the closed forms are exact.
    Zero,
}

/// `int_lower^inf exp(-xi x) Q_x(r) dx` by adaptive quadrature, starting at
/// the first collision.
pub fn mean_power_integral(r: f64, model: RayModel, params: &ChannelParams) -> Result<PowerResult> {
    mean_power_integral_from(r, model, params, LowerLimit::FirstCollision)
}

pub fn mean_power_integral_from(
    r: f64,
    model: RayModel,
    params: &ChannelParams,
    lower: LowerLimit,
) -> Result<PowerResult> {
    check_far_field(r)?;
    check_damped(params)?;
    let xi = params.xi();
    let d_bar = params.d_bar();
    let lo = match lower {
        LowerLimit::FirstCollision => 1.0,
        LowerLimit::Zero => 0.0,
    };
    let ln_integrand = |x: f64| -xi * x + ln_density(model, r, d_bar, x);
    // Scale by the integrand's log-peak so that its maximum is O(1).
    let beta = model.beta();
    let peak = match model {
        RayModel::RandomWalk => r / (d_bar * xi.sqrt()),
        RayModel::Generic { beta } => (2.0 * r * beta / (xi * d_bar)).powf(1.0 / (beta + 1.0)),
    }
    .max(lo);
    let shift = ln_integrand(peak);
    let f = |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            (ln_integrand(x) - shift).exp()
        }
    };
    debug_assert!(beta > 0.0);
    let value = integrate(f, lo, f64::INFINITY, &QuadratureSpec::relative(1e-11))?;
    PowerResult::from_ln(r, model, Route::Integral, value.ln() + shift, params)
}

/// Integral route from both lower limits, with the relative gap
/// `P_first / P_zero - 1` that the closed forms ignore.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralPair {
    pub first_collision: PowerResult,
    pub from_zero: PowerResult,
    pub truncation_gap: f64,
}

pub fn mean_power_integral_pair(r: f64, model: RayModel, params: &ChannelParams) -> Result<IntegralPair> {
    let first_collision = mean_power_integral_from(r, model, params, LowerLimit::FirstCollision)?;
    let from_zero = mean_power_integral_from(r, model, params, LowerLimit::Zero)?;
    Ok(IntegralPair {
        first_collision,
        from_zero,
        truncation_gap: first_collision.power / from_zero.power - 1.0,
    })
}

fn generic_beta(model: RayModel) -> Result<Option<bool>> {
    match model {
        RayModel::RandomWalk => Ok(None),
        RayModel::Generic { beta: 0.5 } => Ok(Some(false)),
        RayModel::Generic { beta: 1.0 } => Ok(Some(true)),
        RayModel::Generic { beta } => Err(Error::UnsupportedBeta { beta }),
    }
}

/// Laplace point `y0 = (a^2 r / ((1 - p) xi))^{1/3}` of the `beta = 1/2`
/// integrand `exp(-(1 - p) xi y^2 / a^2 - 2 r / y) / y`, in metres.
pub fn laplace_point(r: f64, params: &ChannelParams) -> f64 {
    let a = params.cell_side;
    (a * a * r / ((1.0 - params.open_prob) * params.xi())).cbrt()
}

/// Argument of the large-argument expansion behind [`Route::Asymptotic`]:
/// the `K_0` argument for random walks, the `K_1` argument for
/// `beta = 1`, and the Laplace exponent `3 r / y0` for `beta = 1/2`.
pub fn asymptotic_argument(r: f64, model: RayModel, params: &ChannelParams) -> Result<f64> {
    let (a, q, xi) = (params.cell_side, 1.0 - params.open_prob, params.xi());
    Ok(match generic_beta(model)? {
        None => 2.0 * r * (xi * q).sqrt() / a,
        Some(false) => 3.0 * r / laplace_point(r, params),
        Some(true) => 2.0 * (2.0 * q.sqrt() * xi * r / a).sqrt(),
    })
}

fn ln_laplace_half(r: f64, params: &ChannelParams) -> f64 {
    let (a, q, xi) = (params.cell_side, 1.0 - params.open_prob, params.xi());
    let y0 = laplace_point(r, params);
    (4.0 / (a * y0)).ln() + 0.5 * (q / (3.0 * PI * xi)).ln() - 3.0 * r / y0
}

/// Closed forms of the integral from zero.
///
/// * random walk: `2(1-p)/(pi a^2) K_0(2 r sqrt(xi (1-p)) / a)`, exact;
/// * `beta = 1/2`: Laplace's method about `y0`,
///   `4/(a y0) sqrt((1-p)/(3 pi xi)) exp(-3 r / y0)`;
/// * `beta = 1`: `2 sqrt(2 xi)/pi (sqrt(1-p)/a)^{3/2} r^{-1/2} K_1(z)` with
///   `z = 2 sqrt(2 sqrt(1-p) xi r / a)`, exact.
pub fn mean_power_closed(r: f64, model: RayModel, params: &ChannelParams) -> Result<PowerResult> {
    let kind = generic_beta(model)?;
    check_far_field(r)?;
    check_damped(params)?;
    let (a, q, xi) = (params.cell_side, 1.0 - params.open_prob, params.xi());
    let z = asymptotic_argument(r, model, params)?;
    let ln_p = match kind {
        None => (2.0 * q / (PI * a * a)).ln() + bessel_k0e(z)?.ln() - z,
        Some(false) => ln_laplace_half(r, params),
        Some(true) => {
            (2.0 * (2.0 * xi).sqrt() / PI).ln() + 1.5 * (q.sqrt() / a).ln() - 0.5 * r.ln() + bessel_k1e(z)?.ln() - z
        }
    };
    PowerResult::from_ln(r, model, Route::ClosedForm, ln_p, params)
}

/// Closed forms with `K_nu(z) ~ sqrt(pi / (2 z)) e^{-z}`:
///
/// * random walk: `(1-p)^{3/4} xi^{-1/4} / (a sqrt(pi a r)) e^{-z}`;
/// * `beta = 1`: `(2 xi)^{1/4}/sqrt(pi) (sqrt(1-p)/a)^{5/4} r^{-3/4} e^{-z}`;
/// * `beta = 1/2`: the Laplace form is already asymptotic and is returned
///   unchanged.
///
/// Below [`ASYMPTOTIC_MIN_ARGUMENT`] the value is still returned, with
/// `in_regime = false`.
pub fn mean_power_asymptotic(r: f64, model: RayModel, params: &ChannelParams) -> Result<PowerResult> {
    let kind = generic_beta(model)?;
    check_far_field(r)?;
    check_damped(params)?;
    let (a, q, xi) = (params.cell_side, 1.0 - params.open_prob, params.xi());
    let z = asymptotic_argument(r, model, params)?;
    let ln_p = match kind {
        None => 0.75 * q.ln() - 0.25 * xi.ln() - (a * (PI * a * r).sqrt()).ln() - z,
        Some(false) => ln_laplace_half(r, params),
        Some(true) => 0.25 * (2.0 * xi).ln() - 0.5 * PI.ln() + 1.25 * (q.sqrt() / a).ln() - 0.75 * r.ln() - z,
    };
    let mut result = PowerResult::from_ln(r, model, Route::Asymptotic, ln_p, params)?;
    result.in_regime = z >= ASYMPTOTIC_MIN_ARGUMENT;
    Ok(result)
}

/// Dispatches to the route's evaluator.
pub fn mean_power(r: f64, model: RayModel, params: &ChannelParams, route: Route) -> Result<PowerResult> {
    match route {
        Route::Series => mean_power_series(r, model, params, DEFAULT_TAIL_TOL),
        Route::Integral => mean_power_integral(r, model, params),
        Route::ClosedForm => mean_power_closed(r, model, params),
        Route::Asymptotic => mean_power_asymptotic(r, model, params),
    }
}

/// Evaluates a strictly increasing grid of distances in parallel; results
/// come back in grid order.
pub fn path_loss_curve(
    r_grid: &[f64],
    model: RayModel,
    params: &ChannelParams,
    route: Route,
) -> Result<Vec<PowerResult>> {
    if let Some(&bad) = r_grid.iter().find(|&&r| !(r > 1.0)) {
        return Err(Error::FarFieldViolation { r: bad });
    }
    if let Some(w) = r_grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("r_grid", w[1], "grid must be strictly increasing"));
    }
    r_grid
        .par_iter()
        .map(|&r| mean_power(r, model, params, route))
        .collect()
}

/// CSV header for [`curve_to_csv`].
pub const CURVE_CSV_HEADER: &str = "r_m,model,route,power_linear,path_loss_db";

/// Curve rows as CSV, with header.
pub fn curve_to_csv(results: &[PowerResult]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for p in results {
        out.push_str(&curve_row(p));
    }
    out
}

/// One CSV row (newline-terminated).
pub fn curve_row(p: &PowerResult) -> String {
    format!("{},{},{},{:e},{}\n", p.r, p.model, p.route, p.power, p.path_loss_db)
}

/// `n` points from `start` to `stop`, linear or log-spaced.
pub fn distance_grid(start: f64, stop: f64, count: usize, log_spaced: bool) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::invalid("r-count", count as f64, "need at least 2 points"));
    }
    if !(start > 0.0 && stop > start) {
        return Err(Error::invalid("r-stop", stop, "need 0 < r-start < r-stop"));
    }
    let n = (count - 1) as f64;
    Ok((0..count)
        .map(|k| {
            let t = k as f64 / n;
            if k == count - 1 {
                stop
            } else if log_spaced {
                start * (stop / start).powf(t)
            } else {
                start + (stop - start) * t
            }
        })
        .collect())
}
