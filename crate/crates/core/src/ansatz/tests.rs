use super::*;
use std::sync::OnceLock;

use crate::greens::GreenCache;
use crate::grid::Domain2D;
use crate::liouville::{solve_radial, RadialOptions};
use crate::model::{build_b_matrix, BMatrix};
use crate::sigma::{solve_sigma, SigmaOptions};

fn fig1_with_epsilon(eps: f64) -> ModelParams {
    let chi = 1.0 / (eps * eps);
    ModelParams { chi1: chi, chi2: chi, ..ModelParams::fig1() }
}

fn fig1_profile() -> &'static LiouvilleProfile {
    static P: OnceLock<LiouvilleProfile> = OnceLock::new();
    P.get_or_init(|| {
        let params = ModelParams::fig1();
        let b = build_b_matrix(&params, false).unwrap();
        solve_sigma(&params, &b, &SigmaOptions::default()).unwrap().profile
    })
}

fn single_spot(eps: f64, n: usize, xi: [f64; 2], corrections: bool) -> (Field2D, SpotConfig, ModelParams) {
    let params = fig1_with_epsilon(eps);
    let spot = SpotProfile::new(fig1_profile(), &params, corrections).unwrap();
    let greens = GreenCache::new(Domain2D::square(1.0, n).unwrap());
    let cfg = SpotConfig::new(greens.domain(), vec![xi])
        .unwrap()
        .with_interactions(spot.profile.m, &greens)
        .unwrap();
    (assemble(&spot, &cfg, &greens, &params).unwrap(), cfg, params)
}

fn explicit_scalar_profile() -> LiouvilleProfile {
    // ΔΓ + e^Γ = 0 with Γ(0) = log 8: Γ = log(8 / (1 + r²)²)
    let b = BMatrix::from_entries(1.0, 0.0, 1.0);
    solve_radial(&b, [8f64.ln(), 8f64.ln()], &RadialOptions::default()).unwrap()
}

#[test]
fn explicit_amplitude_is_three_eighths() {
    let p = explicit_scalar_profile();
    assert!((amplitude_cjk(&p, 0, 1.0) - 0.375).abs() < 1e-4);
    assert!((amplitude_cjk(&p, 1, 1.0) - 0.375).abs() < 1e-4);
    let c = amplitude_cjk(&p, 0, 1.0);
    for t in [0.5, 2.0, 7.0] {
        assert!((amplitude_cjk(&p, 0, t) - t * c).abs() < 1e-12 * t);
    }
}

#[test]
fn symmetric_amplitudes_agree() {
    let b = BMatrix::from_entries(1.5, 1.5, 1.5);
    let p = solve_radial(&b, [0.3, 0.3], &RadialOptions::default()).unwrap();
    let (c1, c2) = (amplitude_cjk(&p, 0, 1.2), amplitude_cjk(&p, 1, 1.2));
    assert!((c1 - c2).abs() < 1e-10 * c1);
}

#[test]
fn gauge_gives_unit_species_one_amplitude() {
    let params = ModelParams::fig1();
    let spot = SpotProfile::new(fig1_profile(), &params, false).unwrap();
    assert!((spot.amplitude[0] - 1.0).abs() < 1e-12);
    let required = spot.profile.b.d / params.gamma();
    assert!((spot.amplitude[1] - required).abs() < 1e-4 * required);

    // a profile off the balancing curve is rejected
    let other = solve_radial(&spot.profile.b, [0.0, 0.0], &RadialOptions::default()).unwrap();
    assert!(matches!(SpotProfile::new(&other, &params, false), Err(Error::BalanceViolation(_))));
}

#[test]
fn interior_spot_mass_and_peak() {
    let eps = 0.05;
    let xi = [0.5, 0.45];
    let (f, _, params) = single_spot(eps, 256, xi, false);
    let p = SpotProfile::new(fig1_profile(), &params, false).unwrap();
    for j in 0..2 {
        let expected = eps * eps * p.amplitude[j] * 2.0 * std::f64::consts::PI * p.profile.sigma[j];
        let rel = (f.mass(j) - expected).abs() / expected;
        assert!(rel < 0.02, "species {j}: mass {} vs {expected}", f.mass(j));
        let peak = f.grid.node(f.argmax_u(j));
        assert!((peak[0] - xi[0]).abs() <= f.grid.h[0] && (peak[1] - xi[1]).abs() <= f.grid.h[1]);
    }
    assert!(f.u.iter().flatten().all(|&u| u >= 0.0));
    assert!(f.v.iter().flatten().all(|&v| v > 0.0));
}

#[test]
fn corner_spot_carries_a_quarter_of_the_mass() {
    let eps = 0.05;
    let (f, cfg, params) = single_spot(eps, 128, [0.0, 0.0], false);
    assert_eq!(cfg.cbar, vec![0.5]);
    let p = SpotProfile::new(fig1_profile(), &params, false).unwrap();
    let expected = eps * eps * p.amplitude[0] * 0.5 * std::f64::consts::PI * p.profile.sigma[0];
    assert!((f.mass(0) - expected).abs() < 0.03 * expected, "{} vs {expected}", f.mass(0));
    assert_eq!(f.argmax_u(0), 0);
}

#[test]
fn assembly_is_additive_over_spots() {
    let params = fig1_with_epsilon(0.08);
    let spot = SpotProfile::new(fig1_profile(), &params, false).unwrap();
    let greens = GreenCache::new(Domain2D::square(1.0, 48).unwrap());
    let build = |pts: Vec<[f64; 2]>| {
        let cfg = SpotConfig::new(greens.domain(), pts)
            .unwrap()
            .with_interactions(spot.profile.m, &greens)
            .unwrap();
        assemble(&spot, &cfg, &greens, &params).unwrap()
    };
    let (a, b) = ([0.3, 0.3], [0.7, 0.6]);
    let both = build(vec![a, b]);
    let (fa, fb) = (build(vec![a]), build(vec![b]));
    for j in 0..2 {
        for k in 0..both.grid.len() {
            assert!((both.u[j][k] - fa.u[j][k] - fb.u[j][k]).abs() < 1e-12 * (1.0 + both.u[j][k]));
        }
    }
}

#[test]
fn corrections_vanish_without_growth() {
    let mut params = fig1_with_epsilon(0.1);
    params.lambda1 = 0.0;
    params.lambda2 = 0.0;
    let greens = GreenCache::new(Domain2D::square(1.0, 32).unwrap());
    let fields: Vec<Field2D> = [false, true]
        .into_iter()
        .map(|flag| {
            let spot = SpotProfile::new(fig1_profile(), &params, flag).unwrap();
            let cfg = SpotConfig::new(greens.domain(), vec![[0.5, 0.5]])
                .unwrap()
                .with_interactions(spot.profile.m, &greens)
                .unwrap();
            assemble(&spot, &cfg, &greens, &params).unwrap()
        })
        .collect();
    assert_eq!(fields[0].u, fields[1].u);
    assert_eq!(fields[0].v, fields[1].v);
}

#[test]
fn corrections_change_the_cells_at_order_epsilon_squared() {
    let eps = 0.1;
    let (plain, _, _) = single_spot(eps, 64, [0.5, 0.5], false);
    let (corrected, _, _) = single_spot(eps, 64, [0.5, 0.5], true);
    let diff = (0..plain.grid.len())
        .map(|k| (plain.u[0][k] - corrected.u[0][k]).abs())
        .fold(0.0, f64::max);
    let peak = plain.u[0].iter().fold(0.0f64, |m, &u| m.max(u));
    assert!(diff > 0.0 && diff < 0.5 * peak, "{diff} vs {peak}");
}

#[test]
fn constant_steady_state_has_no_residual() {
    let params = ModelParams::fig1();
    let grid = shared_grid(&Domain2D::square(2.0, 64).unwrap());
    let f = Field2D::constant(grid, params.constant_state(), params.epsilon());
    let r = stationary_residual(&f, &params).unwrap();
    for j in 0..2 {
        assert!(r.norms[j].max < 1e-10, "{:?}", r.norms[j]);
    }
}

#[test]
fn zero_field_has_zero_residual() {
    let params = ModelParams::fig1();
    let grid = shared_grid(&Domain2D::disk([0.0, 0.0], 1.0, 40).unwrap());
    let f = Field2D::zeros(grid, params.epsilon());
    let r = stationary_residual(&f, &params).unwrap();
    for j in 0..2 {
        assert_eq!(r.norms[j].max, 0.0);
        assert_eq!(r.norms[j].l2, 0.0);
    }
}

#[test]
fn residual_halves_with_epsilon_and_recovers_mu() {
    // Off the critical point the drift from ∇H(ξ, ξ) gives the leading O(ε)
    // error; the grid keeps h/ε fixed.
    let xi = [0.3, 0.5];
    let mut scaled = Vec::new();
    for (eps, n) in [(0.1, 160), (0.05, 320)] {
        let (f, cfg, params) = single_spot(eps, n, xi, false);
        let r = stationary_residual(&f, &params).unwrap();
        scaled.push([0, 1].map(|j| eps * eps * r.norms[j].interior_max));
        let m = fig1_profile().m;
        for j in 0..2 {
            let mu = recovered_mu(&f.grid, &r.w[j], xi, m[j], 6.0 * eps).unwrap();
            let rel = (mu - cfg.mu[0][j]).abs() / cfg.mu[0][j].abs();
            assert!(rel < 0.05, "eps {eps}, species {j}: {mu} vs {}", cfg.mu[0][j]);
        }
    }
    for j in 0..2 {
        let ratio = scaled[0][j] / scaled[1][j];
        assert!((1.4..=2.6).contains(&ratio), "species {j}: ratio {ratio}");
    }
}

#[test]
fn exports_have_expected_layout() {
    let grid = shared_grid(&Domain2D::square(1.0, 16).unwrap());
    let f = Field2D::constant(grid, [1.0, 2.0, 3.0, 4.0], 0.1);
    let mut csv = Vec::new();
    f.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("x,y,u1,u2,v1,v2\n"));
    assert_eq!(csv.lines().count(), 1 + 289);
    let mut vtk = Vec::new();
    f.write_vtk(&mut vtk).unwrap();
    let vtk = String::from_utf8(vtk).unwrap();
    assert!(vtk.contains("DIMENSIONS 17 17 1"));
    assert_eq!(vtk.matches("SCALARS").count(), 4);
}
