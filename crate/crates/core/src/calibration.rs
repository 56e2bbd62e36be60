//! Environment-to-parameter mapping, RMS scoring against measurements,
//! sensitivity sweeps and a one-parameter fit of the reflection loss.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::path_loss::{mean_power, ChannelParams, Route};
use crate::rays::RayModel;

pub const MEASUREMENT_CSV_HEADER: &str = "distance_m,path_loss_db";

/// Measured path loss at a set of distances, with an optional reference
/// distance at which predictions are pinned to the data before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    points: Vec<(f64, f64)>,
    calibration_ref_m: Option<f64>,
}

impl MeasurementSet {
    pub fn new(points: Vec<(f64, f64)>, calibration_ref_m: Option<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewPoints(points.len()));
        }
        for &(d, pl) in &points {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid("distance_m", d, "distances must be positive"));
            }
            if !pl.is_finite() {
                return Err(Error::invalid("path_loss_db", pl, "path loss must be finite"));
            }
        }
        if let Some(r) = calibration_ref_m {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::invalid("ref", r, "reference distance must be positive"));
            }
        }
        Ok(MeasurementSet {
            points,
            calibration_ref_m,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn calibration_ref_m(&self) -> Option<f64> {
        self.calibration_ref_m
    }

    pub fn distances(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn path_losses(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    /// Measured path loss at the reference distance: the point itself if
    /// present, otherwise linear interpolation between its neighbours.
    pub fn reference_path_loss(&self) -> Result<Option<f64>> {
        let Some(r) = self.calibration_ref_m else {
            return Ok(None);
        };
        let mut sorted = self.points.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(&(_, pl)) = sorted.iter().find(|p| p.0 == r) {
            return Ok(Some(pl));
        }
        sorted
            .windows(2)
            .find(|w| w[0].0 < r && r < w[1].0)
            .map(|w| {
                let t = (r - w[0].0) / (w[1].0 - w[0].0);
                Some(w[0].1 + t * (w[1].1 - w[0].1))
            })
            .ok_or(Error::ReferenceOutOfRange(r))
    }

    pub fn to_csv(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MeasurementSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = self.calibration_ref_m {
            writeln!(f, "# ref={r}")?;
        }
        writeln!(f, "{MEASUREMENT_CSV_HEADER}")?;
        for (d, pl) in &self.points {
            writeln!(f, "{d},{pl}")?;
        }
        Ok(())
    }
}

impl FromStr for MeasurementSet {
    type Err = Error;

    /// Parses `distance_m,path_loss_db` CSV. Blank lines are skipped;
    /// `#` lines are comments, except `# ref=<metres>`.
    fn from_str(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { line, message };
        let mut reference = None;
        let mut header_seen = false;
        let mut points = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(value) = comment.trim().strip_prefix("ref=") {
                    let r = value
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| err(line_no, format!("bad reference distance {value:?}")))?;
                    reference = Some(r);
                }
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") != MEASUREMENT_CSV_HEADER {
                    return Err(err(
                        line_no,
                        format!("expected header {MEASUREMENT_CSV_HEADER:?}, got {line:?}"),
                    ));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(err(line_no, format!("expected 2 fields, got {}", fields.len())));
            }
            let d = fields[0]
                .parse::<f64>()
                .map_err(|_| err(line_no, format!("bad distance {:?}", fields[0])))?;
            let pl = fields[1]
                .parse::<f64>()
                .map_err(|_| err(line_no, format!("bad path loss {:?}", fields[1])))?;
            if !(d > 0.0 && d.is_finite() && pl.is_finite()) {
                return Err(err(line_no, format!("invalid point ({d}, {pl})")));
            }
            points.push((d, pl));
        }
        if !header_seen {
            return Err(err(0, "missing header".into()));
        }
        MeasurementSet::new(points, reference)
    }
}

/// Coarse description of a site: the fraction of ground covered by
/// obstacles and, if known, the mean gap between them.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentDescription {
    pub obstacle_area_fraction: f64,
    pub mean_obstacle_gap_m: Option<f64>,
    pub region_note: String,
}

/// `(a, p)` for an environment. `p` is the open fraction, `1 - obstacle
/// fraction`; `a = gap * sqrt(1 - p)` when the gap is known, otherwise
/// `cell_side` must be given.
pub fn derive_lattice_params(env: &EnvironmentDescription, cell_side: Option<f64>) -> Result<(f64, f64)> {
    let q = env.obstacle_area_fraction;
    if !(0.0..1.0).contains(&q) {
        return Err(Error::invalid("obstacle_area_fraction", q, "must lie in [0, 1)"));
    }
    let p = 1.0 - q;
    let a = match (env.mean_obstacle_gap_m, cell_side) {
        (Some(gap), _) => {
            if !(gap > 0.0 && gap.is_finite()) {
                return Err(Error::invalid("mean_obstacle_gap_m", gap, "must be positive"));
            }
            gap * q.sqrt()
        }
        (None, Some(a)) => a,
        (None, None) => return Err(Error::MissingSpacing),
    };
    Ok((a, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    Sub6GHz,
    MmWave,
}

impl FromStr for BandKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sub6" | "sub6ghz" => Ok(BandKind::Sub6GHz),
            "mmwave" => Ok(BandKind::MmWave),
            _ => Err(Error::Parse {
                line: 0,
                message: format!("unknown band {s:?} (expected sub6 or mmwave)"),
            }),
        }
    }
}

/// Recommended reflection-loss range in dB.
///
/// Random walks start from 2.5..4.5 dB below 6 GHz and 5..7 dB at
/// millimetre waves. Each step to a flatter model (`beta = 1/2`, then
/// `beta = 1`) shifts the range up by 1 dB at the low end and 2 dB at the
/// high end. Ranges are clipped to 2..10 dB.
pub fn suggest_reflection_loss(model: RayModel, band: BandKind) -> (f64, f64) {
    let (low, high): (f64, f64) = match band {
        BandKind::Sub6GHz => (2.5, 4.5),
        BandKind::MmWave => (5.0, 7.0),
    };
    let steps = match model {
        RayModel::RandomWalk => 0.0f64,
        RayModel::Generic { beta } if beta <= 0.5 => 1.0,
        RayModel::Generic { .. } => 2.0,
    };
    ((low + steps).clamp(2.0, 10.0), (high + 2.0 * steps).clamp(2.0, 10.0))
}

/// `sqrt(mean((measured - predicted)^2))` in dB.
pub fn rms_error(measured: &MeasurementSet, predicted: &[f64]) -> Result<f64> {
    if measured.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            measured: measured.len(),
            predicted: predicted.len(),
        });
    }
    let ss: f64 = measured
        .points
        .iter()
        .zip(predicted)
        .map(|(&(_, m), &p)| (m - p) * (m - p))
        .sum();
    Ok((ss / measured.len() as f64).sqrt())
}

/// Predicted path loss at every measured distance. With a reference
/// distance the curve is shifted so that it matches the measurement there.
pub fn predict_at(
    measured: &MeasurementSet,
    model: RayModel,
    params: &ChannelParams,
    route: Route,
) -> Result<Vec<f64>> {
    let mut predicted = measured
        .points
        .iter()
        .map(|&(d, _)| mean_power(d, model, params, route).map(|p| p.path_loss_db))
        .collect::<Result<Vec<_>>>()?;
    if let (Some(r), Some(pl_ref)) = (measured.calibration_ref_m, measured.reference_path_loss()?) {
        let offset = pl_ref - mean_power(r, model, params, route)?.path_loss_db;
        predicted.iter_mut().for_each(|p| *p += offset);
    }
    Ok(predicted)
}

/// RMS error of the (reference-calibrated) prediction.
pub fn score(measured: &MeasurementSet, model: RayModel, params: &ChannelParams, route: Route) -> Result<f64> {
    rms_error(measured, &predict_at(measured, model, params, route)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParameter {
    CellSide,
    OpenProb,
    ReflectionLoss,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 3] = [
        SweepParameter::CellSide,
        SweepParameter::OpenProb,
        SweepParameter::ReflectionLoss,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            SweepParameter::CellSide => "a",
            SweepParameter::OpenProb => "p",
            SweepParameter::ReflectionLoss => "L",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub parameter: SweepParameter,
    /// +1 or -1.
    pub sign: i8,
    pub value: f64,
    pub path_loss_db: Vec<f64>,
    /// Largest `|PL - PL_base|` over the grid.
    pub max_abs_deviation_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTable {
    pub r_grid: Vec<f64>,
    pub base: Vec<f64>,
    pub curves: Vec<SweepCurve>,
}

impl SensitivityTable {
    /// Largest deviation over both signs for one parameter.
    pub fn max_deviation(&self, parameter: SweepParameter) -> f64 {
        self.curves
            .iter()
            .filter(|c| c.parameter == parameter)
            .map(|c| c.max_abs_deviation_db)
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r_m,base_db");
        for c in &self.curves {
            out.push_str(&format!(
                ",{}{}_db",
                c.parameter.tag(),
                if c.sign > 0 { "+" } else { "-" }
            ));
        }
        out.push('\n');
        for (k, r) in self.r_grid.iter().enumerate() {
            out.push_str(&format!("{r},{}", self.base[k]));
            for c in &self.curves {
                out.push_str(&format!(",{}", c.path_loss_db[k]));
            }
            out.push('\n');
        }
        out
    }
}

fn curve(r_grid: &[f64], model: RayModel, params: &ChannelParams, route: Route) -> Result<Vec<f64>> {
    r_grid
        .par_iter()
        .map(|&r| mean_power(r, model, params, route).map(|p| p.path_loss_db))
        .collect()
}

/// Path loss with each of `a`, `p`, `L` perturbed by `+-delta_fraction`
/// of its base value, one at a time.
pub fn sensitivity_sweep(
    base: &ChannelParams,
    model: RayModel,
    r_grid: &[f64],
    delta_fraction: f64,
    route: Route,
) -> Result<SensitivityTable> {
    if !(0.0..1.0).contains(&delta_fraction) {
        return Err(Error::invalid("delta_fraction", delta_fraction, "must lie in [0, 1)"));
    }
    let base_curve = curve(r_grid, model, base, route)?;
    let mut curves = Vec::with_capacity(6);
    for parameter in SweepParameter::ALL {
        for sign in [1i8, -1] {
            let s = 1.0 + sign as f64 * delta_fraction;
            let params = match parameter {
                SweepParameter::CellSide => base.with_cell_side(base.cell_side() * s),
                SweepParameter::OpenProb => base.with_open_prob(base.open_prob() * s),
                SweepParameter::ReflectionLoss => base.with_reflection_loss(base.reflection_loss_db() * s),
            }?;
            let value = match parameter {
                SweepParameter::CellSide => params.cell_side(),
                SweepParameter::OpenProb => params.open_prob(),
                SweepParameter::ReflectionLoss => params.reflection_loss_db(),
            };
            let path_loss_db = curve(r_grid, model, &params, route)?;
            let max_abs_deviation_db = path_loss_db
                .iter()
                .zip(&base_curve)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            curves.push(SweepCurve {
                parameter,
                sign,
                value,
                path_loss_db,
                max_abs_deviation_db,
            });
        }
    }
    Ok(SensitivityTable {
        r_grid: r_grid.to_vec(),
        base: base_curve,
        curves,
    })
}

/// Grid step of the coarse scan in [`fit_reflection_loss`], dB.
pub const FIT_GRID_STEP_DB: f64 = 0.1;
pub const FIT_L_BOUNDS: (f64, f64) = (0.5, 20.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub model: RayModel,
    pub l_best: f64,
    pub sigma_best: f64,
}

/// Best `L` in `l_range` by RMS error: a 0.1 dB scan, then golden-section
/// refinement around the best grid point. Ties go to the smaller `L`.
pub fn fit_reflection_loss(
    measured: &MeasurementSet,
    model: RayModel,
    cell_side: f64,
    open_prob: f64,
    l_range: (f64, f64),
    route: Route,
) -> Result<FitResult> {
    let (lo, hi) = l_range;
    if !(lo >= FIT_L_BOUNDS.0 && hi <= FIT_L_BOUNDS.1) {
        return Err(Error::invalid(
            "L_range",
            if lo < FIT_L_BOUNDS.0 { lo } else { hi },
            "must lie within [0.5, 20] dB",
        ));
    }
    if !(hi >= lo) {
        return Err(Error::invalid("L_range", hi, "empty range"));
    }
    let base = ChannelParams::new(cell_side, open_prob, lo)?;
    let sigma = |l: f64| -> Result<f64> { score(measured, model, &base.with_reflection_loss(l)?, route) };

    let steps = ((hi - lo) / FIT_GRID_STEP_DB).round() as usize;
    let mut grid: Vec<f64> = (0..=steps)
        .map(|k| lo + k as f64 * FIT_GRID_STEP_DB)
        .filter(|&l| l < hi)
        .collect();
    grid.push(hi);
    let scores = grid.par_iter().map(|&l| sigma(l)).collect::<Result<Vec<_>>>()?;
    let (mut k_best, mut s_best) = (0, scores[0]);
    for (k, &s) in scores.iter().enumerate() {
        if s < s_best {
            k_best = k;
            s_best = s;
        }
    }
    let mut l_best = grid[k_best];

    let (mut a, mut b) = (grid[k_best.saturating_sub(1)], grid[(k_best + 1).min(grid.len() - 1)]);
    if b > a {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
        let (mut fc, mut fd) = (sigma(c)?, sigma(d)?);
        for _ in 0..200 {
            if b - a < 1e-12 {
                break;
            }
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = sigma(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = sigma(d)?;
            }
        }
        let l_ref = 0.5 * (a + b);
        let s_ref = sigma(l_ref)?;
        if s_ref < s_best {
            l_best = l_ref;
            s_best = s_ref;
        }
    }
    Ok(FitResult {
        model,
        l_best,
        sigma_best: s_best,
    })
}
