//! Spatial densities of stochastic rays after `i` collisions.
//!
//! Two maximum-entropy families share the scale `D_i = d * i^beta`, where
//! `d` is the mean obstacle spacing:
//!
//! * exponential, constrained by the radial mean `E[r] = D_i`:
//!   `Q_i(r) = 2 / (pi D_i^2) * exp(-2 r / D_i)`
//! * Gaussian, constrained by `E[r^2] = D_i^2`:
//!   `Q_i(r) = 1 / (pi D_i^2) * exp(-r^2 / D_i^2)`
//!
//! The Gaussian family with `beta = 1/2` is the diffusion kernel of a 2D
//! random walk with step `d`, hence the name [`RayModel::RandomWalk`].
//! Densities are per unit area; integrate them against `r dr dtheta`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayModel {
    /// Gaussian density with `D_i = d sqrt(i)`.
    RandomWalk,
    /// Exponential density with `D_i = d i^beta`.
    Generic { beta: f64 },
}

impl RayModel {
    pub const GENERIC_HALF: RayModel = RayModel::Generic { beta: 0.5 };
    pub const GENERIC_ONE: RayModel = RayModel::Generic { beta: 1.0 };

    /// The three models with closed-form path loss.
    pub const ALL: [RayModel; 3] = [RayModel::RandomWalk, Self::GENERIC_HALF, Self::GENERIC_ONE];

    pub fn generic(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(RayModel::Generic { beta })
        } else {
            Err(Error::invalid("beta", beta, "must be positive"))
        }
    }

    /// Anomaly exponent used for `D_i`; random walks diffuse with 1/2.
    pub fn beta(&self) -> f64 {
        match *self {
            RayModel::RandomWalk => 0.5,
            RayModel::Generic { beta } => beta,
        }
    }

    /// Density after `i` collisions at radius `r`, given spacing `d_bar`.
    pub fn density(&self, r: f64, d_bar: f64, i: CollisionIndex) -> Result<f64> {
        let d_i = mean_travel_distance(d_bar, i, self.beta())?;
        let point = PolarPoint::new(r, 0.0)?;
        match self {
            RayModel::RandomWalk => pdf_random_walk(point, d_i),
            RayModel::Generic { .. } => pdf_generic(point, d_i),
        }
    }

    /// Short tag used in CSV output and on the command line.
    pub fn tag(&self) -> String {
        match *self {
            RayModel::RandomWalk => "rw".into(),
            RayModel::Generic { beta: 0.5 } => "g05".into(),
            RayModel::Generic { beta: 1.0 } => "g10".into(),
            RayModel::Generic { beta } => format!("g{beta}"),
        }
    }
}

impl fmt::Display for RayModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for RayModel {
    type Err = Error;

    /// Accepts `rw`, `g05`, `g10`, or `g<beta>` such as `g0.75`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rw" | "random-walk" => Ok(RayModel::RandomWalk),
            "g05" => Ok(Self::GENERIC_HALF),
            "g10" => Ok(Self::GENERIC_ONE),
            other => other
                .strip_prefix('g')
                .and_then(|b| b.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("unknown model {other:?} (expected rw, g05, g10)"),
                })
                .and_then(RayModel::generic),
        }
    }
}

/// Number of collisions (re-radiations) a ray has undergone; at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CollisionIndex(u32);

impl CollisionIndex {
    pub fn new(i: u32) -> Result<Self> {
        if i == 0 {
            Err(Error::invalid("i", 0.0, "collision index starts at 1"))
        } else {
            Ok(CollisionIndex(i))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    pub r: f64,
    pub theta: f64,
}

impl PolarPoint {
    /// `theta` is reduced to `[0, 2 pi)`.
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(r >= 0.0) {
            return Err(Error::invalid("r", r, "radius must be non-negative"));
        }
        Ok(PolarPoint {
            r,
            theta: theta.rem_euclid(2.0 * PI),
        })
    }
}

/// `D_i = d_bar * i^beta`.
pub fn mean_travel_distance(d_bar: f64, i: CollisionIndex, beta: f64) -> Result<f64> {
    if !(d_bar > 0.0) {
        return Err(Error::invalid("d_bar", d_bar, "must be positive"));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid("beta", beta, "must be positive"));
    }
    Ok(d_bar * f64::from(i.get()).powf(beta))
}

fn check_scale(d_i: f64) -> Result<()> {
    if d_i > 0.0 && d_i.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("D_i", d_i, "must be positive"))
    }
}

/// Exponential density `2 / (pi D^2) exp(-2 r / D)`; radial mean `D`.
pub fn pdf_generic(point: PolarPoint, d_i: f64) -> Result<f64> {
    check_scale(d_i)?;
    Ok(2.0 / (PI * d_i * d_i) * (-2.0 * point.r / d_i).exp())
}

/// Gaussian density `1 / (pi D^2) exp(-r^2 / D^2)`; radial second moment `D^2`.
pub fn pdf_random_walk(point: PolarPoint, d_i: f64) -> Result<f64> {
    check_scale(d_i)?;
    let d2 = d_i * d_i;
    Ok((-point.r * point.r / d2).exp() / (PI * d2))
}

/// Evaluates the diffusion kernel `1/(4 pi D t) exp(-r^2 / (4 D t))` with
/// `D t = d_bar^2 i / 4` (left) next to [`pdf_random_walk`] with
/// `D_i = d_bar sqrt(i)` (right). The two agree to rounding.
pub fn random_walk_equivalence(r: f64, d_bar: f64, i: CollisionIndex) -> Result<(f64, f64)> {
    if !(d_bar > 0.0) {
        return Err(Error::invalid("d_bar", d_bar, "must be positive"));
    }
    let point = PolarPoint::new(r, 0.0)?;
    let dt = 0.25 * d_bar * d_bar * f64::from(i.get());
    let lhs = (-r * r / (4.0 * dt)).exp() / (4.0 * PI * dt);
    let rhs = pdf_random_walk(point, mean_travel_distance(d_bar, i, 0.5)?)?;
    Ok((lhs, rhs))
}

/// `Q_i(r)` for `i = 1..=i_max`.
pub fn collision_profile(r: f64, model: RayModel, d_bar: f64, i_max: u32) -> Result<Vec<(u32, f64)>> {
    if !(r > 0.0) {
        return Err(Error::invalid("r", r, "must be positive"));
    }
    if i_max == 0 {
        return Err(Error::invalid("i_max", 0.0, "must be at least 1"));
    }
    (1..=i_max)
        .map(|i| Ok((i, model.density(r, d_bar, CollisionIndex(i))?)))
        .collect()
}

/// CSV with header `i,q_i`.
pub fn profile_to_csv(profile: &[(u32, f64)]) -> String {
    let mut out = String::from("i,q_i\n");
    for (i, q) in profile {
        out.push_str(&format!("{i},{q:e}\n"));
    }
    out
}
