//! Site-percolation lattices.
//!
//! A lattice is an `N x N` grid of square cells with side `a`. Each cell is
//! independently open with probability `p` and closed (an obstacle)
//! otherwise. `p` is always the *open* probability; an environment described
//! by its obstacle area fraction `f` maps to `p = 1 - f`.
//!
//! Cells are drawn in row-major order from a `ChaCha8Rng` seeded with
//! `SeedableRng::seed_from_u64(seed)`, one `f64` in `[0, 1)` per cell; the
//! cell is open iff the draw is `< p`. A `(spec, seed)` pair therefore names
//! the same grid on every platform.
//!
//! Row `r`, column `c` covers `[c*a, (c+1)*a) x [r*a, (r+1)*a)` in metres.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Site-percolation threshold of the square lattice.
pub const PERCOLATION_THRESHOLD: f64 = 0.59275;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    /// Cell side `a` in metres.
    pub cell_side: f64,
    /// Probability `p` that a cell is open.
    pub open_prob: f64,
    /// Cells per side.
    pub size: usize,
    pub seed: u64,
}

impl LatticeSpec {
    pub fn new(cell_side: f64, open_prob: f64, size: usize, seed: u64) -> Result<Self> {
        let spec = LatticeSpec {
            cell_side,
            open_prob,
            size,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_side > 0.0 && self.cell_side.is_finite()) {
            return Err(Error::invalid("a", self.cell_side, "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.open_prob) {
            return Err(Error::invalid("p", self.open_prob, "must lie in [0, 1]"));
        }
        if self.size == 0 {
            return Err(Error::invalid("N", 0.0, "grid must have at least one cell"));
        }
        Ok(())
    }

    /// Side length of the whole grid in metres.
    pub fn extent(&self) -> f64 {
        self.cell_side * self.size as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    spec: LatticeSpec,
    open: Vec<bool>,
    open_fraction: f64,
}

/// Draws a lattice from `spec`. Pure in `(spec, seed)`.
pub fn generate_lattice(spec: &LatticeSpec) -> Result<Lattice> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.open_prob;
    let open: Vec<bool> = (0..spec.size * spec.size).map(|_| rng.random::<f64>() < p).collect();
    Ok(Lattice::from_cells(*spec, open))
}

impl Lattice {
    /// Builds a lattice from an explicit row-major occupancy vector
    /// (`true` = open).
    ///
    /// # Panics
    ///
    /// If `cells.len() != spec.size^2`.
    pub fn from_cells(spec: LatticeSpec, cells: Vec<bool>) -> Self {
        assert_eq!(cells.len(), spec.size * spec.size, "occupancy size mismatch");
        let n_open = cells.iter().filter(|&&c| c).count();
        let open_fraction = n_open as f64 / cells.len() as f64;
        Lattice {
            spec,
            open: cells,
            open_fraction,
        }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn size(&self) -> usize {
        self.spec.size
    }

    pub fn cell_side(&self) -> f64 {
        self.spec.cell_side
    }

    pub fn extent(&self) -> f64 {
        self.spec.extent()
    }

    /// Realized fraction of open cells.
    pub fn open_fraction(&self) -> f64 {
        self.open_fraction
    }

    pub fn is_open(&self, row: usize, col: usize) -> bool {
        self.open[row * self.spec.size + col]
    }

    /// Open test with signed indices; anything outside the grid is `None`.
    pub fn is_open_signed(&self, row: i64, col: i64) -> Option<bool> {
        let n = self.spec.size as i64;
        if row < 0 || col < 0 || row >= n || col >= n {
            None
        } else {
            Some(self.is_open(row as usize, col as usize))
        }
    }

    /// Cell containing the planar point `(x, y)`, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let a = self.spec.cell_side;
        let (col, row) = ((x / a).floor(), (y / a).floor());
        let n = self.spec.size as f64;
        if col < 0.0 || row < 0.0 || col >= n || row >= n {
            None
        } else {
            Some((row as usize, col as usize))
        }
    }

    /// Centre of the open cell nearest to the grid centre, searching rings
    /// outward. `None` for a fully closed lattice.
    pub fn nearest_open_to_center(&self) -> Option<(f64, f64)> {
        let n = self.spec.size as i64;
        let (cr, cc) = (n / 2, n / 2);
        for ring in 0..=n {
            let mut best: Option<(i64, i64)> = None;
            for dr in -ring..=ring {
                for dc in -ring..=ring {
                    if dr.abs().max(dc.abs()) != ring {
                        continue;
                    }
                    if self.is_open_signed(cr + dr, cc + dc) == Some(true) && best.is_none() {
                        best = Some((cr + dr, cc + dc));
                    }
                }
            }
            if let Some((r, c)) = best {
                let a = self.spec.cell_side;
                return Some(((c as f64 + 0.5) * a, (r as f64 + 0.5) * a));
            }
        }
        None
    }

    /// Text fixture: a header line `a=<a> p=<p> N=<N> seed=<seed>` followed
    /// by one line per row, `#` closed and `.` open.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.spec;
        writeln!(f, "a={} p={} N={} seed={}", s.cell_side, s.open_prob, s.size, s.seed)?;
        for row in self.open.chunks(s.size) {
            let line: String = row.iter().map(|&o| if o { '.' } else { '#' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl FromStr for Lattice {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty lattice file".into(),
        })?;
        let spec = parse_header(header)?;
        let mut cells = Vec::with_capacity(spec.size * spec.size);
        let mut rows = 0;
        for (idx, line) in lines {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if line.chars().count() != spec.size {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} cells, found {}", spec.size, line.len()),
                });
            }
            for ch in line.chars() {
                match ch {
                    '.' => cells.push(true),
                    '#' => cells.push(false),
                    other => {
                        return Err(Error::Parse {
                            line: idx + 1,
                            message: format!("unexpected cell character {other:?}"),
                        })
                    }
                }
            }
            rows += 1;
        }
        if rows != spec.size {
            return Err(Error::Parse {
                line: rows + 2,
                message: format!("expected {} rows, found {rows}", spec.size),
            });
        }
        Ok(Lattice::from_cells(spec, cells))
    }
}

fn parse_header(header: &str) -> Result<LatticeSpec> {
    let err = |message: String| Error::Parse { line: 1, message };
    let (mut a, mut p, mut n, mut seed) = (None, None, None, None);
    for field in header.split_whitespace() {
        let (key, val) = field
            .split_once('=')
            .ok_or_else(|| err(format!("malformed header field {field:?}")))?;
        let bad = || err(format!("bad value for {key}: {val:?}"));
        match key {
            "a" => a = Some(val.parse::<f64>().map_err(|_| bad())?),
            "p" => p = Some(val.parse::<f64>().map_err(|_| bad())?),
            "N" => n = Some(val.parse::<usize>().map_err(|_| bad())?),
            "seed" => seed = Some(val.parse::<u64>().map_err(|_| bad())?),
            _ => return Err(err(format!("unknown header key {key:?}"))),
        }
    }
    match (a, p, n, seed) {
        (Some(a), Some(p), Some(n), Some(seed)) => LatticeSpec::new(a, p, n, seed),
        _ => Err(err("header must define a, p, N and seed".into())),
    }
}

/// Mean spacing between closed clusters, `a / sqrt(1 - p)`.
///
/// Follows from balancing the area of the `N^2 (1 - p)` closed sites, each
/// claiming `d^2`, against the grid area `(N a)^2`.
pub fn mean_obstacle_spacing(a: f64, p: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid("a", a, "must be positive"));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid("p", p, "must lie in [0, 1); spacing diverges as p -> 1"));
    }
    Ok(a / (1.0 - p).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Subcritical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercRegime {
    pub regime: Regime,
    pub threshold: f64,
}

/// Supercritical iff `p > p_c`; the threshold itself is subcritical.
pub fn classify_regime(p: f64) -> PercRegime {
    let regime = if p > PERCOLATION_THRESHOLD {
        Regime::Supercritical
    } else {
        Regime::Subcritical
    };
    PercRegime {
        regime,
        threshold: PERCOLATION_THRESHOLD,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn extreme_probabilities() {
        let all_open = generate_lattice(&LatticeSpec::new(2.0, 1.0, 10, 3).unwrap()).unwrap();
        assert_eq!(all_open.open_fraction(), 1.0);
        let all_closed = generate_lattice(&LatticeSpec::new(2.0, 0.0, 10, 3).unwrap()).unwrap();
        assert_eq!(all_closed.open_fraction(), 0.0);
    }

    #[test]
    fn open_fraction_within_binomial_bound() {
        let lat = generate_lattice(&LatticeSpec::new(2.0, 0.7, 200, 42).unwrap()).unwrap();
        let sigma = (0.7f64 * 0.3 / 40_000.0).sqrt();
        assert!((lat.open_fraction() - 0.7).abs() < 4.0 * sigma);
        assert!((lat.open_fraction() - 0.7).abs() < 0.013);
    }

    #[test]
    fn zero_grid_rejected() {
        assert!(LatticeSpec::new(2.0, 0.5, 0, 1).is_err());
        let spec = LatticeSpec {
            cell_side: 2.0,
            open_prob: 0.5,
            size: 0,
            seed: 1,
        };
        assert!(generate_lattice(&spec).is_err());
        assert!(LatticeSpec::new(0.0, 0.5, 4, 1).is_err());
        assert!(LatticeSpec::new(1.0, 1.5, 4, 1).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = LatticeSpec::new(1.0, 0.5, 50, 9).unwrap();
        assert_eq!(generate_lattice(&spec).unwrap(), generate_lattice(&spec).unwrap());
        let other = LatticeSpec { seed: 10, ..spec };
        assert_ne!(generate_lattice(&spec).unwrap(), generate_lattice(&other).unwrap());
    }

    #[test]
    fn spacing_examples() {
        assert_relative_eq!(mean_obstacle_spacing(2.0, 0.75).unwrap(), 4.0);
        assert_relative_eq!(mean_obstacle_spacing(1.0, 0.0).unwrap(), 1.0);
        let d = mean_obstacle_spacing(20.0, 0.7).unwrap();
        assert_relative_eq!(d, 36.514837167011, max_relative = 1e-12);
        // N^2 (1 - p) d^2 = (N a)^2
        let n = 200.0;
        assert_relative_eq!(n * n * 0.3 * d * d, (n * 20.0_f64).powi(2), max_relative = 1e-12);
        assert!(mean_obstacle_spacing(2.0, 1.0).is_err());
        assert!(mean_obstacle_spacing(-1.0, 0.5).is_err());
    }

    #[test]
    fn spacing_monotone_and_linear() {
        let mut prev = 0.0;
        for k in 0..99 {
            let p = k as f64 / 100.0;
            let d = mean_obstacle_spacing(3.0, p).unwrap();
            assert!(d > prev);
            assert_relative_eq!(d, 3.0 * mean_obstacle_spacing(1.0, p).unwrap(), max_relative = 1e-14);
            prev = d;
        }
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(0.7).regime, Regime::Supercritical);
        assert_eq!(classify_regime(0.3).regime, Regime::Subcritical);
        assert_eq!(classify_regime(0.59275).regime, Regime::Subcritical);
        assert_eq!(classify_regime(0.3).threshold, PERCOLATION_THRESHOLD);
    }

    #[test]
    fn text_fixture_round_trip() {
        let lat = generate_lattice(&LatticeSpec::new(2.5, 0.6, 17, 77).unwrap()).unwrap();
        let text = lat.to_text();
        assert!(text.starts_with("a=2.5 p=0.6 N=17 seed=77\n"));
        assert_eq!(text.lines().count(), 18);
        let back: Lattice = text.parse().unwrap();
        assert_eq!(back, lat);
    }

    #[test]
    fn text_fixture_errors_carry_line() {
        let bad = "a=1 p=0.5 N=2 seed=0\n.#\n.x\n";
        match bad.parse::<Lattice>() {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!("a=1 p=0.5 N=2\n..\n..\n".parse::<Lattice>().is_err());
        assert!("a=1 p=0.5 N=2 seed=0\n..\n".parse::<Lattice>().is_err());
    }

    #[test]
    fn nearest_open_cell() {
        let spec = LatticeSpec::new(1.0, 0.0, 5, 0).unwrap();
        let mut cells = vec![false; 25];
        assert!(Lattice::from_cells(spec, cells.clone())
            .nearest_open_to_center()
            .is_none());
        cells[2 * 5 + 3] = true;
        let lat = Lattice::from_cells(spec, cells);
        assert_eq!(lat.nearest_open_to_center(), Some((3.5, 2.5)));
        assert_eq!(lat.cell_of(3.5, 2.5), Some((2, 3)));
        assert_eq!(lat.cell_of(-0.1, 2.5), None);
        assert_eq!(lat.cell_of(5.0, 2.5), None);
    }
}
