//! Monte Carlo tracing of diffusely scattered rays.
//!
//! A ray leaves the source at a uniform random angle and flies straight
//! until it crosses into a closed cell. The crossing point on the cell face
//! is a collision; the ray re-radiates from it at an angle drawn uniformly
//! over the half-plane facing back into open space, and the process
//! repeats until the ray leaves the grid or reaches `max_collisions`.
//!
//! Cells are visited by exact grid traversal (Amanatides and Woo), so a
//! trace depends only on the random angles, never on a marching step.
//!
//! Every ray draws from its own ChaCha stream (`seed`, stream = ray index)
//! and results are gathered in ray order before any summation, so estimates
//! are bit-identical for any thread count.
//!
//! [`Medium::FreeWalk`] replaces the lattice by an obstacle-free walk with a
//! fixed step: the isotropic random walk whose large-`i` limit is the
//! Gaussian collision pdf.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::rays::{CollisionIndex, RayModel};

/// Minimum number of rays that must reach collision `i` before a histogram
/// is returned.
pub const MIN_RAYS_AT_COLLISION: usize = 100;

/// Largest accepted relative half-width of the 95% CI in
/// [`empirical_power`].
pub const MAX_RELATIVE_CI: f64 = 0.5;

const Z95: f64 = 1.959_963_984_540_054;

/// Where rays travel.
#[derive(Debug, Clone, Copy)]
pub enum Medium<'a> {
    Lattice(&'a Lattice),
    /// Obstacle-free isotropic walk: every step has length `step` and ends
    /// in a collision.
    FreeWalk {
        step: f64,
    },
}

impl Medium<'_> {
    fn validate_source(&self, source: (f64, f64)) -> Result<()> {
        let (x, y) = source;
        match self {
            Medium::Lattice(lat) => match lat.cell_of(x, y) {
                None => Err(Error::SourceOutsideLattice { x, y }),
                Some((r, c)) if !lat.is_open(r, c) => Err(Error::SourceInClosedCell { x, y }),
                Some(_) => Ok(()),
            },
            Medium::FreeWalk { step } => {
                if !(*step > 0.0 && step.is_finite()) {
                    return Err(Error::invalid("step", *step, "walk step must be positive"));
                }
                if x.is_finite() && y.is_finite() {
                    Ok(())
                } else {
                    Err(Error::SourceOutsideLattice { x, y })
                }
            }
        }
    }

    /// Largest radius around the grid centre still inside the medium.
    fn half_extent(&self) -> f64 {
        match self {
            Medium::Lattice(lat) => 0.5 * lat.extent(),
            Medium::FreeWalk { .. } => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    /// The re-radiated ray was pinned in a corner (zero-length flight).
    Absorbed,
    /// The ray left the grid.
    Escaped,
    MaxCollisions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayTrace {
    pub collision_points: Vec<(f64, f64)>,
    pub terminal: Terminal,
}

impl RayTrace {
    pub fn collision_count(&self) -> usize {
        self.collision_points.len()
    }

    /// Distance from `source` to collision `i` (1-based).
    pub fn radius_at(&self, source: (f64, f64), i: usize) -> Option<f64> {
        let &(x, y) = self.collision_points.get(i.checked_sub(1)?)?;
        Some((x - source.0).hypot(y - source.1))
    }
}

/// Per-collision reflection loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossModel {
    Deterministic {
        loss_db: f64,
    },
    /// Independent `L_k ~ U[low_db, high_db]` at every collision.
    PerCollision {
        low_db: f64,
        high_db: f64,
    },
}

impl LossModel {
    fn validate(&self) -> Result<()> {
        match *self {
            LossModel::Deterministic { loss_db } if loss_db >= 0.0 && loss_db.is_finite() => Ok(()),
            LossModel::Deterministic { loss_db } => Err(Error::invalid("L", loss_db, "must be >= 0 dB")),
            LossModel::PerCollision { low_db, high_db } => {
                if !(low_db >= 0.0 && high_db >= low_db && high_db.is_finite()) {
                    Err(Error::invalid("L_high", high_db, "need 0 <= L_low <= L_high"))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            LossModel::Deterministic { loss_db } => loss_db,
            LossModel::PerCollision { low_db, high_db } => low_db + (high_db - low_db) * rng.random::<f64>(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_rays: u64,
    pub max_collisions: u32,
    pub seed: u64,
    pub loss_model: LossModel,
}

impl SimConfig {
    pub fn new(n_rays: u64, max_collisions: u32, seed: u64, loss_model: LossModel) -> Result<Self> {
        let config = SimConfig {
            n_rays,
            max_collisions,
            seed,
            loss_model,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rays == 0 {
            return Err(Error::invalid("n_rays", 0.0, "need at least one ray"));
        }
        if self.max_collisions == 0 {
            return Err(Error::invalid("max_collisions", 0.0, "need at least one collision"));
        }
        self.loss_model.validate()
    }
}

/// Independent generator for ray `index`.
pub fn ray_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f` for every ray on its own stream, in parallel, returning the
/// results in ray order.
fn per_ray<T, F>(config: &SimConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    config.validate()?;
    (0..config.n_rays)
        .into_par_iter()
        .map(|k| f(&mut ray_rng(config.seed, k)))
        .collect()
}

/// Traces one ray from `source`.
pub fn trace_ray<R: Rng>(medium: &Medium, source: (f64, f64), max_collisions: u32, rng: &mut R) -> Result<RayTrace> {
    medium.validate_source(source)?;
    if max_collisions == 0 {
        return Err(Error::invalid("max_collisions", 0.0, "need at least one collision"));
    }
    Ok(match *medium {
        Medium::Lattice(lat) => trace_in_lattice(lat, source, max_collisions, rng),
        Medium::FreeWalk { step } => free_walk(step, source, max_collisions, rng),
    })
}

fn free_walk<R: Rng>(step: f64, source: (f64, f64), max_collisions: u32, rng: &mut R) -> RayTrace {
    let (mut x, mut y) = source;
    let mut points = Vec::with_capacity(max_collisions as usize);
    for _ in 0..max_collisions {
        let (s, c) = (2.0 * PI * rng.random::<f64>()).sin_cos();
        x += step * c;
        y += step * s;
        points.push((x, y));
    }
    RayTrace {
        collision_points: points,
        terminal: Terminal::MaxCollisions,
    }
}

/// Face of a closed cell that stopped the ray, as the outward unit normal
/// pointing back into open space.
#[derive(Debug, Clone, Copy)]
struct Normal(f64, f64);

fn trace_in_lattice<R: Rng>(lat: &Lattice, source: (f64, f64), max_collisions: u32, rng: &mut R) -> RayTrace {
    let a = lat.cell_side();
    let (mut x, mut y) = source;
    let (r0, c0) = lat.cell_of(x, y).expect("source validated");
    let (mut row, mut col) = (r0 as i64, c0 as i64);
    let mut points = Vec::new();

    let (s, c) = (2.0 * PI * rng.random::<f64>()).sin_cos();
    let (mut dx, mut dy) = (c, s);

    loop {
        let step_c: i64 = if dx > 0.0 { 1 } else { -1 };
        let step_r: i64 = if dy > 0.0 { 1 } else { -1 };
        let boundary_x = if dx > 0.0 { (col + 1) as f64 * a } else { col as f64 * a };
        let boundary_y = if dy > 0.0 { (row + 1) as f64 * a } else { row as f64 * a };
        let mut t_max_x = if dx != 0.0 {
            (boundary_x - x) / dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy != 0.0 {
            (boundary_y - y) / dy
        } else {
            f64::INFINITY
        };
        let t_delta_x = if dx != 0.0 { a / dx.abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { a / dy.abs() } else { f64::INFINITY };

        let (t, hit, normal) = loop {
            let across_x = t_max_x < t_max_y;
            let (nr, nc) = if across_x {
                (row, col + step_c)
            } else {
                (row + step_r, col)
            };
            match lat.is_open_signed(nr, nc) {
                None => {
                    return RayTrace {
                        collision_points: points,
                        terminal: Terminal::Escaped,
                    }
                }
                Some(true) => {
                    row = nr;
                    col = nc;
                    if across_x {
                        t_max_x += t_delta_x;
                    } else {
                        t_max_y += t_delta_y;
                    }
                }
                Some(false) => {
                    // snap the hit onto the face so the next flight starts
                    // exactly on the cell boundary
                    break if across_x {
                        let fx = if step_c > 0 {
                            (col + 1) as f64 * a
                        } else {
                            col as f64 * a
                        };
                        (t_max_x, (fx, y + t_max_x * dy), Normal(-step_c as f64, 0.0))
                    } else {
                        let fy = if step_r > 0 {
                            (row + 1) as f64 * a
                        } else {
                            row as f64 * a
                        };
                        (t_max_y, (x + t_max_y * dx, fy), Normal(0.0, -step_r as f64))
                    };
                }
            }
        };

        points.push(hit);
        if t <= 1e-12 * a {
            return RayTrace {
                collision_points: points,
                terminal: Terminal::Absorbed,
            };
        }
        if points.len() >= max_collisions as usize {
            return RayTrace {
                collision_points: points,
                terminal: Terminal::MaxCollisions,
            };
        }
        (x, y) = hit;
        // uniform angle in the open half-plane, built from the normal so the
        // normal component is never negative
        let offset = PI * rng.random::<f64>() - FRAC_PI_2;
        let (along, normal_part) = offset.sin_cos();
        let Normal(nx, ny) = normal;
        dx = normal_part * nx - along * ny;
        dy = normal_part * ny + along * nx;
    }
}

/// All traces, in ray order.
pub fn trace_rays(medium: &Medium, source: (f64, f64), config: &SimConfig) -> Result<Vec<RayTrace>> {
    medium.validate_source(source)?;
    per_ray(config, |rng| trace_ray(medium, source, config.max_collisions, rng))
}

/// Distances from the source at collision `i` of every ray that got there.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusSample {
    pub index: u32,
    /// In ray order.
    pub radii: Vec<f64>,
    pub traced: u64,
    /// Rays that left the grid before collision `i`.
    pub escaped: u64,
}

impl RadiusSample {
    pub fn escape_rate(&self) -> f64 {
        self.escaped as f64 / self.traced as f64
    }

    /// `(mean r^2, standard error)`.
    pub fn mean_squared_displacement(&self) -> Result<(f64, f64)> {
        let n = self.radii.len();
        if n < 2 {
            return Err(Error::InsufficientSamples { got: n, needed: 2 });
        }
        let sq: Vec<f64> = self.radii.iter().map(|r| r * r).collect();
        let (mean, var) = mean_var(&sq);
        Ok((mean, (var / n as f64).sqrt()))
    }
}

/// Mean and unbiased variance, summed in slice order.
fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, if xs.len() > 1 { ss / (n - 1.0) } else { 0.0 })
}

pub fn collision_radii(
    medium: &Medium,
    source: (f64, f64),
    i: CollisionIndex,
    config: &SimConfig,
) -> Result<RadiusSample> {
    medium.validate_source(source)?;
    let idx = i.get();
    if idx > config.max_collisions {
        return Err(Error::invalid(
            "i",
            idx as f64,
            "collision index exceeds max_collisions",
        ));
    }
    let per = per_ray(config, |rng| {
        let trace = trace_ray(medium, source, idx, rng)?;
        Ok((trace.radius_at(source, idx as usize), trace.terminal))
    })?;
    let mut radii = Vec::with_capacity(per.len());
    let mut escaped = 0;
    for (r, terminal) in per {
        match r {
            Some(r) => radii.push(r),
            None if terminal == Terminal::Escaped => escaped += 1,
            None => {}
        }
    }
    Ok(RadiusSample {
        index: idx,
        radii,
        traced: config.n_rays,
        escaped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialHistogram {
    /// Bin edges; the last may be infinite.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Rays that reached the collision (the normalizing count).
    pub reached: u64,
    pub traced: u64,
    pub escaped: u64,
    /// Reached rays whose radius fell past the last edge.
    pub beyond: u64,
}

impl RadialHistogram {
    pub fn from_radii(sample: &RadiusSample, edges: &[f64]) -> Result<Self> {
        check_edges(edges)?;
        let mut counts = vec![0u64; edges.len() - 1];
        let mut beyond = 0;
        for &r in &sample.radii {
            // first edge strictly greater than r
            let k = edges.partition_point(|&e| e <= r);
            if k == 0 || k == edges.len() {
                beyond += 1;
            } else {
                counts[k - 1] += 1;
            }
        }
        Ok(RadialHistogram {
            edges: edges.to_vec(),
            counts,
            reached: sample.radii.len() as u64,
            traced: sample.traced,
            escaped: sample.escaped,
            beyond,
        })
    }

    /// Count per reached ray per unit area; comparable to `Q_i(r)`.
    /// Infinite-area bins report 0.
    pub fn density(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .zip(&self.counts)
            .map(|(w, &c)| {
                let area = PI * (w[1] * w[1] - w[0] * w[0]);
                if area.is_finite() {
                    c as f64 / (self.reached as f64 * area)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r_low_m,r_high_m,count,density\n");
        for ((w, c), d) in self.edges.windows(2).zip(&self.counts).zip(self.density()) {
            out.push_str(&format!("{},{},{},{:e}\n", w[0], w[1], c, d));
        }
        out
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::TooFewPoints(edges.len()));
    }
    if edges[0] != 0.0 {
        return Err(Error::invalid("edges[0]", edges[0], "radial bins must start at 0"));
    }
    if let Some(w) = edges.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("edges", w[1], "bin edges must be strictly increasing"));
    }
    Ok(())
}

/// Normalized per-area histogram of the position at collision `i`.
///
/// On a lattice the bins must reach half the grid side. Fails with
/// `InsufficientSamples` when fewer than [`MIN_RAYS_AT_COLLISION`] rays get
/// that far.
pub fn empirical_collision_density(
    medium: &Medium,
    source: (f64, f64),
    i: CollisionIndex,
    config: &SimConfig,
    edges: &[f64],
) -> Result<RadialHistogram> {
    check_edges(edges)?;
    let last = *edges.last().expect("checked");
    if last < medium.half_extent() && matches!(medium, Medium::Lattice(_)) {
        return Err(Error::invalid("edges", last, "bins must cover [0, N a / 2]"));
    }
    let sample = collision_radii(medium, source, i, config)?;
    if sample.radii.len() < MIN_RAYS_AT_COLLISION {
        return Err(Error::InsufficientSamples {
            got: sample.radii.len(),
            needed: MIN_RAYS_AT_COLLISION,
        });
    }
    RadialHistogram::from_radii(&sample, edges)
}

/// Mean length of the straight flights between consecutive collisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreePathStats {
    pub mean: f64,
    pub std_error: f64,
    pub segments: u64,
    pub escape_rate: f64,
}

pub fn free_path_stats(lattice: &Lattice, source: (f64, f64), config: &SimConfig) -> Result<FreePathStats> {
    let traces = trace_rays(&Medium::Lattice(lattice), source, config)?;
    let lengths: Vec<f64> = traces
        .iter()
        .flat_map(|t| {
            t.collision_points
                .windows(2)
                .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        })
        .collect();
    if lengths.len() < 2 {
        return Err(Error::InsufficientSamples {
            got: lengths.len(),
            needed: 2,
        });
    }
    let (mean, var) = mean_var(&lengths);
    let escaped = traces.iter().filter(|t| t.terminal == Terminal::Escaped).count();
    Ok(FreePathStats {
        mean,
        std_error: (var / lengths.len() as f64).sqrt(),
        segments: lengths.len() as u64,
        escape_rate: escaped as f64 / traces.len() as f64,
    })
}

/// Receiving ring of mean radius `r` and width `width`, centred on the
/// source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annulus {
    r: f64,
    width: f64,
}

impl Annulus {
    pub fn new(r: f64, width: f64) -> Result<Self> {
        if !(r > 1.0 && r.is_finite()) {
            return Err(Error::FarFieldViolation { r });
        }
        if !(width > 0.0 && width < 2.0 * r) {
            return Err(Error::invalid("width", width, "need 0 < width < 2 r"));
        }
        Ok(Annulus { r, width })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    fn inner(&self) -> f64 {
        self.r - 0.5 * self.width
    }

    fn outer(&self) -> f64 {
        self.r + 0.5 * self.width
    }

    pub fn area(&self) -> f64 {
        PI * (self.outer().powi(2) - self.inner().powi(2))
    }

    fn contains(&self, rho: f64) -> bool {
        rho >= self.inner() && rho < self.outer()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub r: f64,
    pub width: f64,
    /// Mean received power per unit area, relative to `P_T = 1`.
    pub power: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    pub rays: u64,
    pub escaped: u64,
    /// Collisions that landed in the annulus.
    pub hits: u64,
}

impl PowerEstimate {
    pub fn relative_ci(&self) -> f64 {
        Z95 * self.std_error / self.power
    }
}

/// Power estimates for several annuli from one set of traces.
///
/// Each ray contributes `10^{-(L_1 + ... + L_k)/10}` for every collision `k`
/// inside an annulus; sums are divided by the annulus area and the ray count.
/// No precision check is applied; see [`empirical_power`].
pub fn empirical_power_profile(
    medium: &Medium,
    source: (f64, f64),
    annuli: &[Annulus],
    config: &SimConfig,
) -> Result<Vec<PowerEstimate>> {
    medium.validate_source(source)?;
    if let Some(bad) = annuli.iter().find(|an| an.outer() > medium.half_extent()) {
        return Err(Error::invalid("r", bad.r(), "annulus must lie inside the grid"));
    }
    let per = per_ray(config, |rng| {
        let trace = trace_ray(medium, source, config.max_collisions, rng)?;
        let mut contrib = vec![0.0; annuli.len()];
        let mut hits = vec![0u32; annuli.len()];
        let mut total_db = 0.0;
        for &(x, y) in &trace.collision_points {
            total_db += config.loss_model.sample(rng);
            let rho = (x - source.0).hypot(y - source.1);
            let weight = 10f64.powf(-total_db / 10.0);
            for (k, an) in annuli.iter().enumerate() {
                if an.contains(rho) {
                    contrib[k] += weight;
                    hits[k] += 1;
                }
            }
        }
        Ok((contrib, hits, trace.terminal == Terminal::Escaped))
    })?;

    let n = config.n_rays as f64;
    let escaped = per.iter().filter(|p| p.2).count() as u64;
    Ok(annuli
        .iter()
        .enumerate()
        .map(|(k, an)| {
            let area = an.area();
            let xs: Vec<f64> = per.iter().map(|p| p.0[k] / area).collect();
            let (mean, var) = mean_var(&xs);
            let se = (var / n).sqrt();
            PowerEstimate {
                r: an.r(),
                width: an.width(),
                power: mean,
                std_error: se,
                ci95: (mean - Z95 * se, mean + Z95 * se),
                rays: config.n_rays,
                escaped,
                hits: per.iter().map(|p| p.1[k] as u64).sum(),
            }
        })
        .collect())
}

/// Single-annulus estimate; rejected when nothing lands in the annulus or
/// the 95% CI half-width exceeds [`MAX_RELATIVE_CI`] of the estimate.
pub fn empirical_power(
    medium: &Medium,
    source: (f64, f64),
    annulus: Annulus,
    config: &SimConfig,
) -> Result<PowerEstimate> {
    let est = empirical_power_profile(medium, source, &[annulus], config)?[0];
    if est.hits == 0 {
        return Err(Error::InsufficientSamples { got: 0, needed: 1 });
    }
    let rel = est.relative_ci();
    if rel > MAX_RELATIVE_CI {
        return Err(Error::ImpreciseEstimate {
            relative_ci: rel,
            limit: MAX_RELATIVE_CI,
        });
    }
    Ok(est)
}

pub const POWER_CSV_HEADER: &str = "r_m,width_m,power_linear,std_error,ci_low,ci_high,hits,rays,escaped";

pub fn power_estimates_to_csv(estimates: &[PowerEstimate]) -> String {
    let mut out = String::from(POWER_CSV_HEADER);
    out.push('\n');
    for e in estimates {
        out.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e},{},{},{}\n",
            e.r, e.width, e.power, e.std_error, e.ci95.0, e.ci95.1, e.hits, e.rays, e.escaped
        ));
    }
    out
}

/// `P(|X| <= r)` for the collision pdf of `model` with scale `d_i`.
pub fn radial_cdf(model: RayModel, r: f64, d_i: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    match model {
        RayModel::RandomWalk => -(-(r / d_i).powi(2)).exp_m1(),
        RayModel::Generic { .. } => {
            let x = 2.0 * r / d_i;
            1.0 - (-x).exp() * (1.0 + x)
        }
    }
}

/// Edges of `k` bins of equal probability under the collision pdf; the last
/// edge is infinite.
pub fn equiprobable_edges(model: RayModel, d_i: f64, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::TooFewPoints(k));
    }
    let mut edges = Vec::with_capacity(k + 1);
    edges.push(0.0);
    for j in 1..k {
        let q = j as f64 / k as f64;
        let r = match model {
            RayModel::RandomWalk => d_i * (-(-q).ln_1p()).sqrt(),
            RayModel::Generic { .. } => {
                // invert 1 - e^{-x}(1 + x) = q by bisection
                let (mut lo, mut hi) = (0.0, 1.0);
                while radial_cdf(model, hi * d_i / 2.0, d_i) < q {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if radial_cdf(model, mid * d_i / 2.0, d_i) < q {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi) * d_i / 2.0
            }
        };
        edges.push(r);
    }
    edges.push(f64::INFINITY);
    Ok(edges)
}

/// Moore's rule for the number of chi-square bins, `ceil(2 n^{0.4})`.
pub fn moore_bin_count(n: usize) -> usize {
    let k = 2.0 * (n as f64).powf(0.4);
    // powf is not exact at perfect powers (1e5^0.4 = 100.00000000000001)
    if (k - k.round()).abs() < 1e-9 {
        k.round() as usize
    } else {
        k.ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of `observed` counts against bin probabilities
/// (no fitted parameters).
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<GoodnessOfFit> {
    if observed.len() != probs.len() {
        return Err(Error::LengthMismatch {
            measured: observed.len(),
            predicted: probs.len(),
        });
    }
    if observed.len() < 2 {
        return Err(Error::TooFewPoints(observed.len()));
    }
    if let Some(&p) = probs.iter().find(|&&p| !(p > 0.0)) {
        return Err(Error::invalid("prob", p, "bin probabilities must be positive"));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::InsufficientSamples { got: 0, needed: 1 });
    }
    let total_p: f64 = probs.iter().sum();
    let statistic: f64 = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = n as f64 * p / total_p;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = observed.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("dof >= 1");
    Ok(GoodnessOfFit {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// Chi-square test of collision radii against the collision pdf with
/// scale `d_i`, on `bins` equiprobable bins.
pub fn radial_gof(sample: &RadiusSample, model: RayModel, d_i: f64, bins: usize) -> Result<GoodnessOfFit> {
    let edges = equiprobable_edges(model, d_i, bins)?;
    let hist = RadialHistogram::from_radii(sample, &edges)?;
    let probs: Vec<f64> = edges
        .windows(2)
        .map(|w| radial_cdf(model, w[1], d_i) - radial_cdf(model, w[0], d_i))
        .collect();
    chi_square_gof(&hist.counts, &probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{generate_lattice, LatticeSpec};
    use approx::assert_relative_eq;

    fn uniform_lattice(n: usize, open: bool) -> Lattice {
        let spec = LatticeSpec::new(1.0, if open { 0.99 } else { 0.5 }, n, 0).unwrap();
        Lattice::from_cells(spec, vec![open; n * n])
    }

    fn det(loss_db: f64) -> LossModel {
        LossModel::Deterministic { loss_db }
    }

    #[test]
    fn open_lattice_rays_escape() {
        let lat = uniform_lattice(20, true);
        let cfg = SimConfig::new(500, 10, 1, det(3.0)).unwrap();
        let traces = trace_rays(&Medium::Lattice(&lat), (10.5, 10.5), &cfg).unwrap();
        assert!(traces
            .iter()
            .all(|t| t.terminal == Terminal::Escaped && t.collision_count() == 0));
    }

    #[test]
    fn enclosed_source_hits_its_own_ring() {
        let n = 9;
        let spec = LatticeSpec::new(2.0, 0.5, n, 0).unwrap();
        let mut cells = vec![false; n * n];
        cells[4 * n + 4] = true;
        let lat = Lattice::from_cells(spec, cells);
        let cfg = SimConfig::new(300, 6, 7, det(3.0)).unwrap();
        let traces = trace_rays(&Medium::Lattice(&lat), (9.3, 8.7), &cfg).unwrap();
        for t in traces {
            assert_eq!(t.terminal, Terminal::MaxCollisions);
            for &(x, y) in &t.collision_points {
                let on_x = (x == 8.0 || x == 10.0) && (8.0..=10.0).contains(&y);
                let on_y = (y == 8.0 || y == 10.0) && (8.0..=10.0).contains(&x);
                assert!(on_x || on_y, "({x}, {y}) not on the source cell boundary");
            }
        }
    }

    #[test]
    fn source_checks() {
        let n = 4;
        let spec = LatticeSpec::new(1.0, 0.5, n, 0).unwrap();
        let mut cells = vec![true; n * n];
        cells[0] = false;
        let lat = Lattice::from_cells(spec, cells);
        let mut rng = ray_rng(0, 0);
        let m = Medium::Lattice(&lat);
        assert!(matches!(
            trace_ray(&m, (0.5, 0.5), 3, &mut rng),
            Err(Error::SourceInClosedCell { .. })
        ));
        assert!(matches!(
            trace_ray(&m, (-0.5, 0.5), 3, &mut rng),
            Err(Error::SourceOutsideLattice { .. })
        ));
        assert!(trace_ray(&m, (1.5, 0.5), 3, &mut rng).is_ok());
    }

    #[test]
    fn segments_cross_only_open_cells() {
        let lat = generate_lattice(&LatticeSpec::new(1.0, 0.7, 60, 3).unwrap()).unwrap();
        let src = lat.nearest_open_to_center().unwrap();
        let cfg = SimConfig::new(200, 40, 11, det(3.0)).unwrap();
        for t in trace_rays(&Medium::Lattice(&lat), src, &cfg).unwrap() {
            let mut prev = src;
            for &p in &t.collision_points {
                // sample the open interior of the segment
                for k in 1..50 {
                    let s = k as f64 / 50.0;
                    let q = (prev.0 + s * (p.0 - prev.0), prev.1 + s * (p.1 - prev.1));
                    if let Some((r, c)) = lat.cell_of(q.0, q.1) {
                        let on_grid_line = (q.0.fract() == 0.0) || (q.1.fract() == 0.0);
                        assert!(lat.is_open(r, c) || on_grid_line, "segment enters closed cell at {q:?}");
                    }
                }
                prev = p;
            }
        }
    }

    #[test]
    fn traces_are_reproducible() {
        let lat = generate_lattice(&LatticeSpec::new(20.0, 0.7, 50, 9).unwrap()).unwrap();
        let src = lat.nearest_open_to_center().unwrap();
        let cfg = SimConfig::new(300, 20, 5, det(3.0)).unwrap();
        let a = trace_rays(&Medium::Lattice(&lat), src, &cfg).unwrap();
        let b = trace_rays(&Medium::Lattice(&lat), src, &cfg).unwrap();
        assert_eq!(a, b);
        let other = SimConfig { seed: 6, ..cfg };
        assert_ne!(a, trace_rays(&Medium::Lattice(&lat), src, &other).unwrap());
    }

    #[test]
    fn free_walk_steps_have_fixed_length() {
        let mut rng = ray_rng(1, 2);
        let t = trace_ray(&Medium::FreeWalk { step: 3.0 }, (0.0, 0.0), 10, &mut rng).unwrap();
        assert_eq!(t.collision_count(), 10);
        let mut prev = (0.0, 0.0);
        for &p in &t.collision_points {
            assert_relative_eq!((p.0 - prev.0).hypot(p.1 - prev.1), 3.0, max_relative = 1e-12);
            prev = p;
        }
    }

    #[test]
    fn cdf_and_edges() {
        for model in [RayModel::RandomWalk, RayModel::GENERIC_ONE] {
            let edges = equiprobable_edges(model, 5.0, 8).unwrap();
            assert_eq!(edges.len(), 9);
            for (j, &e) in edges.iter().enumerate().take(8) {
                assert_relative_eq!(radial_cdf(model, e, 5.0), j as f64 / 8.0, epsilon = 1e-12);
            }
        }
        assert_eq!(moore_bin_count(100_000), 200);
    }

    #[test]
    fn chi_square_basics() {
        let g = chi_square_gof(&[25, 25, 25, 25], &[0.25; 4]).unwrap();
        assert_eq!(g.statistic, 0.0);
        assert_eq!(g.dof, 3);
        assert_relative_eq!(g.p_value, 1.0);
        // (10-25)^2/25 * 2 + 0 = 18 on 3 dof, sf = 4.398e-4
        let g = chi_square_gof(&[10, 40, 25, 25], &[0.25; 4]).unwrap();
        assert_relative_eq!(g.statistic, 18.0);
        assert_relative_eq!(g.p_value, 4.398_493_3e-4, max_relative = 1e-6);
        assert!(chi_square_gof(&[1, 2], &[0.5]).is_err());
    }

    #[test]
    fn heavy_loss_keeps_first_collision_only() {
        let step = 10.0;
        let cfg_heavy = SimConfig::new(2000, 5, 3, det(200.0)).unwrap();
        let cfg_first = SimConfig::new(2000, 1, 3, det(200.0)).unwrap();
        let an = Annulus::new(10.0, 2.0).unwrap();
        let m = Medium::FreeWalk { step };
        let heavy = empirical_power(&m, (0.0, 0.0), an, &cfg_heavy).unwrap();
        let first = empirical_power(&m, (0.0, 0.0), an, &cfg_first).unwrap();
        assert_relative_eq!(heavy.power, first.power, max_relative = 1e-12);
        // every ray lands on the ring at step 1
        assert_relative_eq!(first.power, 1e-20 / an.area(), max_relative = 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0, 5, 0, det(3.0)).is_err());
        assert!(SimConfig::new(5, 0, 0, det(3.0)).is_err());
        assert!(SimConfig::new(5, 5, 0, det(-1.0)).is_err());
        assert!(SimConfig::new(
            5,
            5,
            0,
            LossModel::PerCollision {
                low_db: 4.0,
                high_db: 2.0
            }
        )
        .is_err());
        assert!(Annulus::new(0.5, 0.1).is_err());
        assert!(Annulus::new(5.0, 10.0).is_err());
    }
}
