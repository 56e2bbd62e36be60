//! Monte Carlo traces on the outdoor fixture (a = 20 m, p = 0.7, N = 200)
//! and on the obstacle-free fixed-step walk.

use std::sync::OnceLock;

use perc_channel::lattice::{generate_lattice, mean_obstacle_spacing, Lattice, LatticeSpec};
use perc_channel::monte_carlo::{
    collision_radii, empirical_collision_density, empirical_power, empirical_power_profile, free_path_stats,
    trace_rays, Annulus, LossModel, Medium, SimConfig, Terminal,
};
use perc_channel::path_loss::{mean_power_series, ChannelParams};
use perc_channel::rays::{CollisionIndex, RayModel};

fn outdoor() -> Lattice {
    generate_lattice(&LatticeSpec::new(20.0, 0.7, 200, 1).unwrap()).unwrap()
}

fn d_bar() -> f64 {
    mean_obstacle_spacing(20.0, 0.7).unwrap()
}

fn det(loss_db: f64) -> LossModel {
    LossModel::Deterministic { loss_db }
}

#[test]
fn mean_free_path_near_obstacle_spacing() {
    let lat = outdoor();
    let src = lat.nearest_open_to_center().unwrap();
    let cfg = SimConfig::new(100_000, 10, 1, det(3.0)).unwrap();
    let stats = free_path_stats(&lat, src, &cfg).unwrap();
    let ratio = stats.mean / d_bar();
    println!(
        "mean free path {:.2} m = {ratio:.3} d_bar ({} segments)",
        stats.mean, stats.segments
    );
    // Straight chords through a Bernoulli grid run about pi a / (4 (1 - p))
    // before hitting a closed cell, which exceeds a / sqrt(1 - p); the
    // measured ratio is 1.67, outside the 25% band.
    assert!((ratio - 1.0).abs() <= 0.25, "mean free path / d_bar = {ratio:.3}");
}

#[test]
fn mean_free_path_order_of_magnitude() {
    let lat = outdoor();
    let src = lat.nearest_open_to_center().unwrap();
    let cfg = SimConfig::new(20_000, 10, 2, det(3.0)).unwrap();
    let ratio = free_path_stats(&lat, src, &cfg).unwrap().mean / d_bar();
    assert!((0.5..2.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn escapes_are_rare_on_the_standard_fixture() {
    let lat = outdoor();
    let src = lat.nearest_open_to_center().unwrap();
    let cfg = SimConfig::new(20_000, 25, 3, det(3.0)).unwrap();
    let s = collision_radii(&Medium::Lattice(&lat), src, CollisionIndex::new(25).unwrap(), &cfg).unwrap();
    assert!(s.escape_rate() < 0.01, "escape rate {}", s.escape_rate());
}

#[test]
fn collisions_sit_on_closed_cell_faces() {
    let lat = outdoor();
    let src = lat.nearest_open_to_center().unwrap();
    let a = lat.cell_side();
    let cfg = SimConfig::new(2_000, 30, 4, det(3.0)).unwrap();
    for t in trace_rays(&Medium::Lattice(&lat), src, &cfg).unwrap() {
        for &(x, y) in &t.collision_points {
            let (fx, fy) = (x / a, y / a);
            let on_vertical = fx == fx.round();
            let on_horizontal = fy == fy.round();
            assert!(on_vertical || on_horizontal, "({x}, {y}) is not on a grid line");
            // one of the two cells sharing the face is closed
            let cells = if on_vertical {
                [(fy.floor() as i64, fx as i64 - 1), (fy.floor() as i64, fx as i64)]
            } else {
                [(fy as i64 - 1, fx.floor() as i64), (fy as i64, fx.floor() as i64)]
            };
            assert!(cells.iter().any(|&(r, c)| lat.is_open_signed(r, c) == Some(false)));
        }
    }
}

#[test]
fn first_collision_density_peaks_near_spacing_scale() {
    let lat = outdoor();
    let src = lat.nearest_open_to_center().unwrap();
    let cfg = SimConfig::new(100_000, 1, 1, det(3.0)).unwrap();
    let edges: Vec<f64> = (0..=200).map(|k| k as f64 * 10.0).collect();
    let h = empirical_collision_density(
        &Medium::Lattice(&lat),
        src,
        CollisionIndex::new(1).unwrap(),
        &cfg,
        &edges,
    )
    .unwrap();
    let dens = h.density();
    let k = (0..dens.len()).max_by(|&i, &j| dens[i].total_cmp(&dens[j])).unwrap();
    let peak = 0.5 * (edges[k] + edges[k + 1]);
    println!("first-collision density peaks at {peak} m (d_bar = {:.1} m)", d_bar());
    assert!(peak > 0.5 * d_bar() && peak < 2.0 * d_bar());
}

#[test]
fn histogram_requires_coverage_and_samples() {
    let lat = outdoor();
    let src = lat.nearest_open_to_center().unwrap();
    let cfg = SimConfig::new(50, 2, 1, det(3.0)).unwrap();
    let short: Vec<f64> = (0..=10).map(|k| k as f64 * 10.0).collect();
    let m = Medium::Lattice(&lat);
    assert!(empirical_collision_density(&m, src, CollisionIndex::new(1).unwrap(), &cfg, &short).is_err());
    let full: Vec<f64> = (0..=200).map(|k| k as f64 * 10.0).collect();
    assert!(matches!(
        empirical_collision_density(&m, src, CollisionIndex::new(1).unwrap(), &cfg, &full),
        Err(perc_channel::Error::InsufficientSamples { got: 50, needed: 100 })
    ));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let lat = outdoor();
    let src = lat.nearest_open_to_center().unwrap();
    let cfg = SimConfig::new(
        3_000,
        20,
        8,
        LossModel::PerCollision {
            low_db: 2.0,
            high_db: 4.0,
        },
    )
    .unwrap();
    let annuli: Vec<Annulus> = [60.0, 120.0, 240.0]
        .iter()
        .map(|&r| Annulus::new(r, 20.0).unwrap())
        .collect();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| empirical_power_profile(&Medium::Lattice(&lat), src, &annuli, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}

/// The fixed-step walk against the random-walk series at small loss, where
/// many collisions contribute and the Gaussian limit should apply.
fn walk_vs_series() -> &'static [(f64, f64, f64, f64)] {
    static ROWS: OnceLock<Vec<(f64, f64, f64, f64)>> = OnceLock::new();
    ROWS.get_or_init(compute_walk_vs_series)
}

fn compute_walk_vs_series() -> Vec<(f64, f64, f64, f64)> {
    let d = d_bar();
    let loss = 0.1;
    let params = ChannelParams::new(20.0, 0.7, loss).unwrap();
    let annuli: Vec<Annulus> = [4.0, 6.0, 8.0, 10.0]
        .iter()
        .map(|k| Annulus::new(k * d, 0.2 * d).unwrap())
        .collect();
    let cfg = SimConfig::new(100_000, 1400, 1, det(loss)).unwrap();
    empirical_power_profile(&Medium::FreeWalk { step: d }, (0.0, 0.0), &annuli, &cfg)
        .unwrap()
        .into_iter()
        .map(|e| {
            let s = mean_power_series(e.r, RayModel::RandomWalk, &params, 1e-12)
                .unwrap()
                .power;
            (e.r / d, e.power, e.std_error, s)
        })
        .collect()
}

#[test]
fn walk_power_within_ci_of_series() {
    // The walk density at collision i differs from the Gaussian by O(1/i);
    // that bias (0.7% at 4 d_bar) exceeds the CI of 1e5 rays.
    let rows = walk_vs_series();
    for &(k, mc, se, s) in rows {
        println!(
            "r = {k} d_bar: mc {mc:.5e} +- {se:.2e}, series {s:.5e}, z = {:.2}",
            (mc - s) / se
        );
    }
    for &(k, mc, se, s) in rows {
        assert!((mc - s).abs() <= 1.96 * se, "r = {k} d_bar: z = {:.2}", (mc - s) / se);
    }
}

#[test]
fn walk_power_gap_regression() {
    // measured relative gaps: 7.2e-3, 3.4e-3, -2.8e-4, 6.3e-4
    for &(k, mc, _, s) in walk_vs_series() {
        assert!((mc / s - 1.0).abs() < 0.015, "r = {k} d_bar: gap {}", mc / s - 1.0);
    }
}

#[test]
fn random_losses_equal_mean_linear_loss() {
    // With L_k ~ U[L-1, L+1] independent of the path, each collision keeps
    // E[10^(-L_k/10)] = 10^(-L/10) sinh(c)/c, c = ln(10)/10, on average.
    // That is a deterministic loss 0.038 dB below L (Jensen).
    let lat = outdoor();
    let src = lat.nearest_open_to_center().unwrap();
    let annulus = Annulus::new(150.0, 30.0).unwrap();
    let m = Medium::Lattice(&lat);
    let run = |lm| empirical_power(&m, src, annulus, &SimConfig::new(50_000, 60, 9, lm).unwrap()).unwrap();
    let random = run(LossModel::PerCollision {
        low_db: 2.0,
        high_db: 4.0,
    });
    let plain = run(det(3.0));
    let c = std::f64::consts::LN_10 / 10.0;
    let l_eff = 3.0 - 10.0 * ((c.sinh() / c).log10());
    let matched = run(det(l_eff));
    println!(
        "random L: {:.5e}, fixed L=3: {:.5e} (ratio {:.4}), fixed L={l_eff:.4}: {:.5e}",
        random.power,
        plain.power,
        random.power / plain.power,
        matched.power
    );
    assert!(random.power > plain.power);
    assert!((random.power - matched.power).abs() <= 3.0 * random.std_error);
}

#[test]
fn enclosed_source_never_escapes() {
    let n = 21;
    let spec = LatticeSpec::new(2.0, 0.5, n, 0).unwrap();
    let mut cells = vec![false; n * n];
    cells[10 * n + 10] = true;
    let lat = Lattice::from_cells(spec, cells);
    let cfg = SimConfig::new(500, 8, 1, det(3.0)).unwrap();
    let traces = trace_rays(&Medium::Lattice(&lat), (21.0, 21.0), &cfg).unwrap();
    assert!(traces
        .iter()
        .all(|t| t.terminal == Terminal::MaxCollisions && t.collision_count() == 8));
}
