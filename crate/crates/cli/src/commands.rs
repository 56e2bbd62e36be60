use std::fmt::Write as _;
use std::path::Path;

use perc_channel::calibration::{fit_reflection_loss, score, FitResult, MeasurementSet};
use perc_channel::lattice::{classify_regime, generate_lattice, mean_obstacle_spacing, LatticeSpec};
use perc_channel::monte_carlo::{
    empirical_power_profile, power_estimates_to_csv, Annulus, LossModel, Medium, PowerEstimate, SimConfig,
};
use perc_channel::path_loss::{
    asymptotic_argument, curve_row, mean_power, mean_power_asymptotic, mean_power_closed, mean_power_integral,
    mean_power_integral_from, mean_power_series, path_loss_curve, ChannelParams, LowerLimit, Route, CURVE_CSV_HEADER,
    DEFAULT_TAIL_TOL,
};
use perc_channel::rays::RayModel;

use crate::config::{MediumKind, RunConfig};
use crate::CliError;

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes `body` to the configured output (stdout when unset) and the
/// summary to stdout, or to stderr when stdout carries the body.
fn emit(cfg: &RunConfig, body: &str, summary: &str) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            print!("{summary}");
        }
        None => {
            print!("{body}");
            eprint!("{summary}");
        }
    }
    Ok(())
}

fn measurements(cfg: &RunConfig) -> Result<Option<MeasurementSet>, CliError> {
    cfg.measurements
        .as_deref()
        .map(|p| read(p)?.parse::<MeasurementSet>().map_err(|e| config_at(p, e)))
        .transpose()
}

fn config_at(path: &Path, e: perc_channel::Error) -> CliError {
    match e {
        perc_channel::Error::Parse { .. } => CliError::Config(format!("{}: {e}", path.display())),
        other => other.into(),
    }
}

pub fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let calibration = match measurements(cfg)? {
        Some(m) => {
            let reference = cfg.reference.or(m.calibration_ref_m()).ok_or_else(|| {
                CliError::Config("calibrating to measurements needs a reference distance (`ref`)".into())
            })?;
            let pinned = MeasurementSet::new(m.points().to_vec(), Some(reference))?;
            let pl_ref = pinned.reference_path_loss()?.expect("reference is set");
            Some((pinned, reference, pl_ref))
        }
        None => None,
    };

    let mut csv = format!("{CURVE_CSV_HEADER}\n");
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "{:<6} {:<10} {:>6} {:>12} {:>12} {:>9} {:>9}",
        "model", "route", "L_dB", "PL_first_dB", "PL_last_dB", "monotone", "rms_dB"
    );
    for &model in &cfg.models {
        let params = cfg.params(model)?;
        for &route in &cfg.routes {
            let mut curve = path_loss_curve(&grid, model, &params, route)?;
            let mut rms = None;
            if let Some((m, r_ref, pl_ref)) = &calibration {
                let shift = pl_ref - mean_power(*r_ref, model, &params, route)?.path_loss_db;
                for p in &mut curve {
                    p.path_loss_db += shift;
                    p.power *= 10f64.powf(-shift / 10.0);
                }
                rms = Some(score(m, model, &params, route)?);
            }
            for p in &curve {
                csv.push_str(&curve_row(p));
            }
            let monotone = curve.windows(2).all(|w| w[1].path_loss_db > w[0].path_loss_db);
            let _ = writeln!(
                summary,
                "{:<6} {:<10} {:>6.2} {:>12.2} {:>12.2} {:>9} {:>9}",
                model.tag(),
                route.tag(),
                params.reflection_loss_db(),
                curve[0].path_loss_db,
                curve[curve.len() - 1].path_loss_db,
                if monotone { "yes" } else { "NO" },
                rms.map_or("-".to_string(), |s| format!("{s:.3}")),
            );
        }
    }
    if let Some((_, r_ref, _)) = &calibration {
        let _ = writeln!(summary, "curves calibrated at r = {r_ref} m");
    }
    emit(cfg, &csv, &summary)
}

struct Check {
    name: String,
    measured: Option<f64>,
    tolerance: f64,
    note: String,
}

impl Check {
    fn passed(&self) -> bool {
        self.measured.is_none_or(|m| m <= self.tolerance)
    }
}

fn rel(x: f64, y: f64) -> f64 {
    (x / y - 1.0).abs()
}

fn fold_max(gaps: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    gaps.fold(None, |acc, (gap, r)| match acc {
        Some((g, _)) if g >= gap => acc,
        _ => Some((gap, r)),
    })
}

fn route_checks(model: RayModel, params: &ChannelParams, grid: &[f64]) -> Result<Vec<Check>, CliError> {
    let tag = model.tag();
    let mut checks = Vec::new();
    let closed: Vec<f64> = grid
        .iter()
        .map(|&r| mean_power_closed(r, model, params).map(|p| p.power))
        .collect::<Result<_, _>>()?;

    // closed form against the integral from zero
    let exact = model != RayModel::GENERIC_HALF;
    let mut gaps = Vec::new();
    for (k, &r) in grid.iter().enumerate() {
        let q = mean_power_integral_from(r, model, params, LowerLimit::Zero)?.power;
        gaps.push((rel(closed[k], q), r));
    }
    let worst = fold_max(gaps.into_iter());
    checks.push(Check {
        name: format!("{tag} closed vs integral from 0"),
        measured: worst.map(|w| w.0),
        tolerance: if exact { 1e-6 } else { 0.05 },
        note: worst.map_or(String::new(), |w| format!("worst at r = {:.1}", w.1)),
    });

    // large-argument form where its argument is at least 5
    if exact {
        let mut gaps = Vec::new();
        for (k, &r) in grid.iter().enumerate() {
            let a = mean_power_asymptotic(r, model, params)?;
            if a.in_regime {
                gaps.push((rel(a.power, closed[k]), r));
            }
        }
        let worst = fold_max(gaps.into_iter());
        let z = worst.map(|w| asymptotic_argument(w.1, model, params)).transpose()?;
        checks.push(Check {
            name: format!("{tag} asymptotic vs closed (z >= 5)"),
            measured: worst.map(|w| w.0),
            tolerance: if model == RayModel::RandomWalk { 0.02 } else { 0.05 },
            note: match (worst, z) {
                (Some(w), Some(z)) => format!("worst at r = {:.1} (z = {z:.2})", w.1),
                _ => "no point in regime".into(),
            },
        });
    }

    // truncated sum against the integral from the first collision
    let mut gaps = Vec::new();
    for &r in grid {
        let s = mean_power_series(r, model, params, DEFAULT_TAIL_TOL)?;
        if s.path_loss_db < 150.0 {
            gaps.push((rel(s.power, mean_power_integral(r, model, params)?.power), r));
        }
    }
    let worst = fold_max(gaps.into_iter());
    checks.push(Check {
        name: format!("{tag} series vs integral (PL < 150 dB)"),
        measured: worst.map(|w| w.0),
        tolerance: 0.05,
        note: worst.map_or("no point below 150 dB".into(), |w| format!("worst at r = {:.1}", w.1)),
    });
    Ok(checks)
}

fn default_collisions(xi: f64) -> u32 {
    // keeps every collision whose weight exceeds e^-30
    ((30.0 / xi).ceil() as u32).clamp(50, 5000)
}

fn walk_check(cfg: &RunConfig) -> Result<(Vec<Check>, String), CliError> {
    let params = cfg.params(RayModel::RandomWalk)?;
    let d_bar = params.d_bar();
    let collisions = cfg.collisions.unwrap_or_else(|| default_collisions(params.xi()));
    let sim = SimConfig::new(
        cfg.rays,
        collisions,
        cfg.seed,
        LossModel::Deterministic {
            loss_db: params.reflection_loss_db(),
        },
    )?;
    let annuli = [4.0, 6.0, 8.0, 10.0]
        .iter()
        .map(|k| Annulus::new(k * d_bar, 0.2 * d_bar))
        .collect::<Result<Vec<_>, _>>()?;
    let est = empirical_power_profile(&Medium::FreeWalk { step: d_bar }, (0.0, 0.0), &annuli, &sim)?;
    let mut checks = Vec::new();
    let mut table = format!(
        "{:>10} {:>13} {:>11} {:>13} {:>7}\n",
        "r_m", "mc_power", "std_error", "series", "z"
    );
    for e in &est {
        let s = mean_power_series(e.r, RayModel::RandomWalk, &params, DEFAULT_TAIL_TOL)?.power;
        let z = (e.power - s) / e.std_error;
        let _ = writeln!(
            table,
            "{:>10.1} {:>13.5e} {:>11.3e} {:>13.5e} {:>7.2}",
            e.r, e.power, e.std_error, s, z
        );
        checks.push(Check {
            name: format!("walk vs series at r = {:.1} (|z|)", e.r),
            measured: Some(z.abs()),
            tolerance: 1.96,
            note: format!("{} rays, {collisions} collisions", cfg.rays),
        });
    }
    Ok((checks, table))
}

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let mut checks = Vec::new();
    for &model in &cfg.models {
        checks.extend(route_checks(model, &cfg.params(model)?, &grid)?);
    }
    let mut report = String::new();
    if cfg.mc {
        let (mc, table) = walk_check(cfg)?;
        checks.extend(mc);
        report.push_str(&table);
    }
    let mut lines = String::new();
    for c in &checks {
        let _ = writeln!(
            lines,
            "{} {:<44} {:>11} (tol {:.0e}) {}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.measured.map_or("n/a".into(), |m| format!("{m:.3e}")),
            c.tolerance,
            c.note
        );
    }
    lines.push_str(&report);
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let _ = writeln!(lines, "{} of {} checks passed", checks.len() - failed, checks.len());
    match &cfg.out {
        Some(path) => std::fs::write(path, &lines).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => print!("{lines}"),
    }
    if failed > 0 {
        return Err(CliError::Check(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

/// Reads `r_m,model,route,...` rows of a predict CSV, keeping those that
/// match `select` (`model` or `model:route`).
fn curve_as_measurements(text: &str, select: Option<&str>) -> Result<MeasurementSet, CliError> {
    let (want_model, want_route) = match select {
        None => (None, None),
        Some(s) => {
            let (m, r) = s.split_once(':').map_or((s, None), |(m, r)| (m, Some(r)));
            (Some(m.parse::<RayModel>()?), r.map(str::parse::<Route>).transpose()?)
        }
    };
    let mut points = Vec::new();
    let mut curves: Vec<(String, String)> = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| CliError::Config(format!("line {}: {what}", k + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(bad(&format!("expected 5 fields, got {}", f.len())));
        }
        let model = f[1]
            .parse::<RayModel>()
            .map_err(|_| bad(&format!("bad model {:?}", f[1])))?;
        let route = f[2]
            .parse::<Route>()
            .map_err(|_| bad(&format!("bad route {:?}", f[2])))?;
        if want_model.is_some_and(|m| m != model) || want_route.is_some_and(|r| r != route) {
            continue;
        }
        let r = f[0]
            .parse::<f64>()
            .map_err(|_| bad(&format!("bad distance {:?}", f[0])))?;
        let pl = f[4]
            .parse::<f64>()
            .map_err(|_| bad(&format!("bad path loss {:?}", f[4])))?;
        let key = (f[1].to_string(), f[2].to_string());
        if !curves.contains(&key) {
            curves.push(key);
        }
        points.push((r, pl));
    }
    match curves.len() {
        0 => Err(CliError::Config("no curve matches --select".into())),
        1 => Ok(MeasurementSet::new(points, None)?),
        n => Err(CliError::Config(format!(
            "file holds {n} curves; pick one with --select model[:route]"
        ))),
    }
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg
        .measurements
        .as_deref()
        .ok_or_else(|| CliError::Config("fit needs a measurement file (--data)".into()))?;
    let text = read(path)?;
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    let data = if first == Some(CURVE_CSV_HEADER) {
        curve_as_measurements(&text, cfg.select.as_deref()).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?
    } else {
        text.parse::<MeasurementSet>().map_err(|e| config_at(path, e))?
    };

    let mut fits: Vec<FitResult> = cfg
        .models
        .iter()
        .map(|&m| fit_reflection_loss(&data, m, cfg.a, cfg.p, cfg.l_range, Route::ClosedForm))
        .collect::<Result<_, _>>()?;
    fits.sort_by(|x, y| x.sigma_best.total_cmp(&y.sigma_best));

    let mut summary = format!("{:<6} {:>9} {:>12}\n", "model", "L_best_dB", "sigma_dB");
    let mut csv = String::from("distance_m,measured_db,model,l_best_db,predicted_db\n");
    for f in &fits {
        let _ = writeln!(
            summary,
            "{:<6} {:>9.4} {:>12.4e}",
            f.model.tag(),
            f.l_best,
            f.sigma_best
        );
        let params = ChannelParams::new(cfg.a, cfg.p, f.l_best)?;
        let predicted = perc_channel::calibration::predict_at(&data, f.model, &params, Route::ClosedForm)?;
        for (&(r, pl), pred) in data.points().iter().zip(predicted) {
            let _ = writeln!(csv, "{r},{pl},{},{},{pred}", f.model.tag(), f.l_best);
        }
    }
    match &cfg.out {
        Some(out) => {
            std::fs::write(out, &csv).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
            print!("{summary}");
        }
        None => print!("{summary}"),
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let loss = cfg.loss();
    let loss_model = if cfg.loss_spread > 0.0 {
        LossModel::PerCollision {
            low_db: loss - cfg.loss_spread,
            high_db: loss + cfg.loss_spread,
        }
    } else {
        LossModel::Deterministic { loss_db: loss }
    };
    let d_bar = mean_obstacle_spacing(cfg.a, cfg.p)?;
    let xi = perc_channel::path_loss::xi_from_reflection_loss(loss)?;
    let collisions = cfg.collisions.unwrap_or_else(|| default_collisions(xi));
    let sim = SimConfig::new(cfg.rays, collisions, cfg.seed, loss_model)?;
    let width = cfg.width.unwrap_or(cfg.a);
    let annuli = cfg
        .grid()?
        .into_iter()
        .map(|r| Annulus::new(r, width))
        .collect::<Result<Vec<_>, _>>()?;

    let estimates: Vec<PowerEstimate> = match cfg.medium {
        MediumKind::Lattice => {
            let lat = generate_lattice(&LatticeSpec::new(cfg.a, cfg.p, cfg.n, cfg.seed)?)?;
            let source =
                lat.nearest_open_to_center()
                    .ok_or(CliError::Domain(perc_channel::Error::InsufficientSamples {
                        got: 0,
                        needed: 1,
                    }))?;
            empirical_power_profile(&Medium::Lattice(&lat), source, &annuli, &sim)?
        }
        MediumKind::Walk => empirical_power_profile(&Medium::FreeWalk { step: d_bar }, (0.0, 0.0), &annuli, &sim)?,
    };

    let mut summary = format!("{:>9} {:>10} {:>8}", "r_m", "mc_PL_dB", "hits");
    for m in RayModel::ALL {
        let _ = write!(summary, " {:>9}", format!("{}_dB", m.tag()));
    }
    summary.push('\n');
    let params = ChannelParams::new(cfg.a, cfg.p, loss)?;
    for e in &estimates {
        let mc = if e.power > 0.0 {
            format!("{:.2}", -10.0 * e.power.log10())
        } else {
            "-".into()
        };
        let _ = write!(summary, "{:>9.1} {mc:>10} {:>8}", e.r, e.hits);
        for m in RayModel::ALL {
            let _ = write!(summary, " {:>9.2}", mean_power_closed(e.r, m, &params)?.path_loss_db);
        }
        summary.push('\n');
    }
    let _ = writeln!(
        summary,
        "{} rays, {collisions} collisions, escaped {}",
        cfg.rays,
        estimates.first().map_or(0, |e| e.escaped)
    );
    emit(cfg, &power_estimates_to_csv(&estimates), &summary)
}

pub fn lattice(cfg: &RunConfig) -> Result<(), CliError> {
    let lat = generate_lattice(&LatticeSpec::new(cfg.a, cfg.p, cfg.n, cfg.seed)?)?;
    let regime = classify_regime(cfg.p);
    let summary = format!(
        "{n} x {n} cells of {a} m, open fraction {f:.4}, {r:?} (p_c = {pc}), d_bar = {d:.3} m\n",
        n = cfg.n,
        a = cfg.a,
        f = lat.open_fraction(),
        r = regime.regime,
        pc = regime.threshold,
        d = mean_obstacle_spacing(cfg.a, cfg.p)?,
    );
    emit(cfg, &lat.to_text(), &summary)
}
