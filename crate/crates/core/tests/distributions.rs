use std::f64::consts::PI;

use approx::assert_relative_eq;
use perc_channel::lattice::{classify_regime, generate_lattice, mean_obstacle_spacing, Lattice, LatticeSpec, Regime};
use perc_channel::rays::{
    collision_profile, mean_travel_distance, pdf_generic, pdf_random_walk, random_walk_equivalence, CollisionIndex,
    PolarPoint, RayModel,
};
use perc_channel::special::{integrate, QuadratureSpec};
use proptest::prelude::*;

fn radial_moment(pdf: impl Fn(f64) -> f64, k: i32) -> f64 {
    integrate(
        |r| 2.0 * PI * r * r.powi(k) * pdf(r),
        0.0,
        f64::INFINITY,
        &QuadratureSpec::relative(1e-12),
    )
    .unwrap()
}

fn at(r: f64) -> PolarPoint {
    PolarPoint::new(r, 0.3).unwrap()
}

#[test]
fn generic_pdf_mean_and_second_moment() {
    // exponential radial law: E r = D, E r^2 = 3 D^2 / 2
    for &d in &[0.5, 7.0, 300.0] {
        let f = |r| pdf_generic(at(r), d).unwrap();
        assert_relative_eq!(radial_moment(f, 1), d, max_relative = 1e-10);
        assert_relative_eq!(radial_moment(f, 2), 1.5 * d * d, max_relative = 1e-10);
    }
}

#[test]
fn random_walk_pdf_mean() {
    // Rayleigh-type radial law: E r = sqrt(pi) D / 2
    for &d in &[0.5, 7.0, 300.0] {
        let f = |r| pdf_random_walk(at(r), d).unwrap();
        assert_relative_eq!(radial_moment(f, 1), 0.5 * PI.sqrt() * d, max_relative = 1e-10);
    }
}

#[test]
fn collision_profile_peaks_where_spread_matches_distance() {
    let d_bar = 10.0;
    // D_i = r at i = (r / d_bar)^2 = 16 for random walks
    let prof = collision_profile(40.0, RayModel::RandomWalk, d_bar, 60).unwrap();
    let best = prof.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(best.0, 16);
    // and at i = r / d_bar = 4 for beta = 1
    let prof = collision_profile(40.0, RayModel::GENERIC_ONE, d_bar, 60).unwrap();
    let best = prof.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(best.0, 4);
}

#[test]
fn outdoor_and_indoor_spacings() {
    assert_relative_eq!(
        mean_obstacle_spacing(20.0, 0.7).unwrap(),
        36.514_837_167_011_07,
        max_relative = 1e-14
    );
    assert_relative_eq!(
        mean_obstacle_spacing(2.0, 0.82).unwrap(),
        4.714_045_207_910_317,
        max_relative = 1e-14
    );
}

#[test]
fn regime_threshold() {
    assert_eq!(classify_regime(0.59275).regime, Regime::Subcritical);
    assert_eq!(classify_regime(0.7).regime, Regime::Supercritical);
    assert_eq!(classify_regime(0.3).regime, Regime::Subcritical);
}

proptest! {
    #[test]
    fn pdfs_normalized(d in 0.05f64..5000.0) {
        let g = radial_moment(|r| pdf_generic(at(r), d).unwrap(), 0);
        let w = radial_moment(|r| pdf_random_walk(at(r), d).unwrap(), 0);
        prop_assert!((g - 1.0).abs() < 1e-9);
        prop_assert!((w - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pdfs_isotropic_and_decreasing(d in 0.1f64..100.0, r in 0.0f64..500.0, th in 0.0f64..10.0) {
        let p = PolarPoint::new(r, th).unwrap();
        let q = PolarPoint::new(r, 0.0).unwrap();
        prop_assert_eq!(pdf_generic(p, d).unwrap(), pdf_generic(q, d).unwrap());
        let further = PolarPoint::new(r + 0.1 * d, th).unwrap();
        prop_assume!(pdf_random_walk(further, d).unwrap() > 0.0 && pdf_generic(further, d).unwrap() > 0.0);
        prop_assert!(pdf_random_walk(further, d).unwrap() < pdf_random_walk(p, d).unwrap());
        prop_assert!(pdf_generic(further, d).unwrap() < pdf_generic(p, d).unwrap());
    }

    #[test]
    fn diffusion_kernel_matches_random_walk_pdf(r in 0.0f64..1e3, d_bar in 0.1f64..100.0, i in 1u32..10_000) {
        let (lhs, rhs) = random_walk_equivalence(r, d_bar, CollisionIndex::new(i).unwrap()).unwrap();
        // exp amplifies the rounding of its argument u = r^2 / D^2 by u
        let u = r * r / (d_bar * d_bar * i as f64);
        prop_assert!((lhs - rhs).abs() <= 10.0 * f64::EPSILON * (1.0 + u) * rhs.abs() + f64::MIN_POSITIVE);
    }

    #[test]
    fn travel_distance_grows_with_index(d_bar in 0.1f64..100.0, i in 1u32..1000, beta in 0.1f64..1.5) {
        let a = mean_travel_distance(d_bar, CollisionIndex::new(i).unwrap(), beta).unwrap();
        let b = mean_travel_distance(d_bar, CollisionIndex::new(i + 1).unwrap(), beta).unwrap();
        prop_assert!(b > a);
    }

    #[test]
    fn lattice_text_round_trip(n in 1usize..30, p in 0.0f64..0.999, seed in any::<u64>()) {
        let lat = generate_lattice(&LatticeSpec::new(1.5, p, n, seed).unwrap()).unwrap();
        let back: Lattice = lat.to_text().parse().unwrap();
        prop_assert_eq!(back, lat);
    }

    #[test]
    fn lattice_is_pure_in_seed(n in 1usize..40, p in 0.0f64..0.999, seed in any::<u64>()) {
        let spec = LatticeSpec::new(1.0, p, n, seed).unwrap();
        prop_assert_eq!(generate_lattice(&spec).unwrap(), generate_lattice(&spec).unwrap());
    }
}
