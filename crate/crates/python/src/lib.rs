use perc_channel::calibration::{self, MeasurementSet};
use perc_channel::lattice::{self, LatticeSpec};
use perc_channel::monte_carlo::{self, Annulus, LossModel, Medium, SimConfig};
use perc_channel::path_loss::{self, ChannelParams, Route};
use perc_channel::rays::RayModel;
use perc_channel::special;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: perc_channel::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn model(tag: &str) -> PyResult<RayModel> {
    tag.parse().map_err(err)
}

fn route(tag: &str) -> PyResult<Route> {
    tag.parse().map_err(err)
}

fn params(a: f64, p: f64, loss_db: f64, pt: f64) -> PyResult<ChannelParams> {
    ChannelParams::new(a, p, loss_db)
        .and_then(|c| c.with_transmit_power(pt))
        .map_err(err)
}

/// Mean received power at `r`: `(power_w, path_loss_db, in_regime)`.
#[pyfunction]
#[pyo3(signature = (r, model_tag="rw", a=20.0, p=0.7, loss_db=3.0, route_tag="closed", pt=1.0))]
fn mean_power(
    r: f64,
    model_tag: &str,
    a: f64,
    p: f64,
    loss_db: f64,
    route_tag: &str,
    pt: f64,
) -> PyResult<(f64, f64, bool)> {
    let res =
        path_loss::mean_power(r, model(model_tag)?, &params(a, p, loss_db, pt)?, route(route_tag)?).map_err(err)?;
    Ok((res.power, res.path_loss_db, res.in_regime))
}

/// Path loss in dB on a strictly increasing grid.
#[pyfunction]
#[pyo3(signature = (r_grid, model_tag="rw", a=20.0, p=0.7, loss_db=3.0, route_tag="closed"))]
fn path_loss_curve(
    r_grid: Vec<f64>,
    model_tag: &str,
    a: f64,
    p: f64,
    loss_db: f64,
    route_tag: &str,
) -> PyResult<Vec<f64>> {
    let curve = path_loss::path_loss_curve(
        &r_grid,
        model(model_tag)?,
        &params(a, p, loss_db, 1.0)?,
        route(route_tag)?,
    )
    .map_err(err)?;
    Ok(curve.into_iter().map(|c| c.path_loss_db).collect())
}

#[pyfunction]
fn mean_obstacle_spacing(a: f64, p: f64) -> PyResult<f64> {
    lattice::mean_obstacle_spacing(a, p).map_err(err)
}

/// Lattice as rows of booleans (true = open).
#[pyfunction]
#[pyo3(signature = (a, p, n, seed=0))]
fn generate_lattice(a: f64, p: f64, n: usize, seed: u64) -> PyResult<Vec<Vec<bool>>> {
    let lat = lattice::generate_lattice(&LatticeSpec::new(a, p, n, seed).map_err(err)?).map_err(err)?;
    Ok((0..n).map(|r| (0..n).map(|c| lat.is_open(r, c)).collect()).collect())
}

#[pyfunction]
fn rms_error(measured: Vec<(f64, f64)>, predicted: Vec<f64>) -> PyResult<f64> {
    let m = MeasurementSet::new(measured, None).map_err(err)?;
    calibration::rms_error(&m, &predicted).map_err(err)
}

/// Best reflection loss for `(distance, path_loss_db)` data: `(L, sigma)`.
#[pyfunction]
#[pyo3(signature = (measured, model_tag, a, p, l_min=0.5, l_max=20.0, reference_m=None))]
fn fit_reflection_loss(
    measured: Vec<(f64, f64)>,
    model_tag: &str,
    a: f64,
    p: f64,
    l_min: f64,
    l_max: f64,
    reference_m: Option<f64>,
) -> PyResult<(f64, f64)> {
    let m = MeasurementSet::new(measured, reference_m).map_err(err)?;
    let fit = calibration::fit_reflection_loss(&m, model(model_tag)?, a, p, (l_min, l_max), Route::ClosedForm)
        .map_err(err)?;
    Ok((fit.l_best, fit.sigma_best))
}

/// Monte Carlo power on annuli of width `width` around the lattice centre
/// (or an obstacle-free walk with step `d_bar` when `walk`):
/// `[(r, power, std_error, hits)]`.
#[pyfunction]
#[pyo3(signature = (radii, width, a=20.0, p=0.7, loss_db=3.0, n=200, rays=10000, collisions=60, seed=1, walk=false))]
#[allow(clippy::too_many_arguments)]
fn simulate_power(
    py: Python<'_>,
    radii: Vec<f64>,
    width: f64,
    a: f64,
    p: f64,
    loss_db: f64,
    n: usize,
    rays: u64,
    collisions: u32,
    seed: u64,
    walk: bool,
) -> PyResult<Vec<(f64, f64, f64, u64)>> {
    let annuli = radii
        .iter()
        .map(|&r| Annulus::new(r, width))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let cfg = SimConfig::new(rays, collisions, seed, LossModel::Deterministic { loss_db }).map_err(err)?;
    let est = py
        .detach(|| {
            if walk {
                let step = lattice::mean_obstacle_spacing(a, p)?;
                monte_carlo::empirical_power_profile(&Medium::FreeWalk { step }, (0.0, 0.0), &annuli, &cfg)
            } else {
                let lat = lattice::generate_lattice(&LatticeSpec::new(a, p, n, seed)?)?;
                let src = lat
                    .nearest_open_to_center()
                    .ok_or(perc_channel::Error::InsufficientSamples { got: 0, needed: 1 })?;
                monte_carlo::empirical_power_profile(&Medium::Lattice(&lat), src, &annuli, &cfg)
            }
        })
        .map_err(err)?;
    Ok(est.into_iter().map(|e| (e.r, e.power, e.std_error, e.hits)).collect())
}

#[pyfunction]
fn bessel_k0(x: f64) -> PyResult<f64> {
    special::bessel_k0(x).map_err(err)
}

#[pyfunction]
fn bessel_k1(x: f64) -> PyResult<f64> {
    special::bessel_k1(x).map_err(err)
}

#[pymodule]
fn perc_channel_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(mean_power, m)?)?;
    m.add_function(wrap_pyfunction!(path_loss_curve, m)?)?;
    m.add_function(wrap_pyfunction!(mean_obstacle_spacing, m)?)?;
    m.add_function(wrap_pyfunction!(generate_lattice, m)?)?;
    m.add_function(wrap_pyfunction!(rms_error, m)?)?;
    m.add_function(wrap_pyfunction!(fit_reflection_loss, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_power, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_k0, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_k1, m)?)?;
    m.add("PERCOLATION_THRESHOLD", lattice::PERCOLATION_THRESHOLD)?;
    Ok(())
}
