use super::*;
use crate::greens::GreenCache;
use proptest::prelude::*;

fn square(n: usize) -> GreenCache {
    GreenCache::new(Domain2D::square(2.0, n).unwrap())
}

#[test]
fn single_interior_energy_is_four_h() {
    let g = square(32);
    let cfg = SpotConfig::new(g.domain(), vec![[0.7, 1.2]]).unwrap();
    let h = g.table([0.7, 1.2]).unwrap().self_interaction();
    assert_eq!(jm_energy(&cfg, &g).unwrap(), 4.0 * h);
    assert_eq!(cfg.cbar, vec![2.0]);
}

#[test]
fn coefficients_follow_the_opening_angle() {
    let d = Domain2D::square(2.0, 32).unwrap();
    let cfg = SpotConfig::new(&d, vec![[1.0, 1.0], [1.0, 0.0], [0.0, 0.0]]).unwrap();
    assert_eq!(cfg.cbar, vec![2.0, 1.0, 0.5]);
    assert_eq!(cfg.interior_count(), 1);
    assert!(cfg.has_corner());
    let g = GreenCache::new(d);
    let cfg = cfg.with_interactions([4.0, 5.0], &g).unwrap();
    let pi = std::f64::consts::PI;
    assert!((cfg.chat[0][0] - 2.0 * pi * 4.0).abs() < 1e-12);
    assert!((cfg.chat[1][1] - pi * 5.0).abs() < 1e-12);
    assert!((cfg.chat[2][0] - 0.5 * pi * 4.0).abs() < 1e-12);
    // μ_jk from the definition
    let t: Vec<_> = cfg.points.iter().map(|&p| g.table(p).unwrap()).collect();
    let expected = cfg.chat[0][1] * t[0].self_interaction()
        + cfg.chat[1][1] * t[1].green_at([1.0, 1.0]).unwrap()
        + cfg.chat[2][1] * t[2].green_at([1.0, 1.0]).unwrap();
    assert!((cfg.mu[0][1] - expected).abs() < 1e-12);
}

#[test]
fn missing_points_are_rejected() {
    let d = Domain2D::square(2.0, 32).unwrap();
    assert!(matches!(SpotConfig::new(&d, vec![[3.0, 1.0]]), Err(Error::OutOfDomain(..))));
    let cfg = SpotConfig::new(&d, vec![[0.01, 1.0]]).unwrap();
    assert!(matches!(cfg.check_separation(&d, default_separation(&d)), Err(Error::EscapedDomain)));
    let cfg = SpotConfig::new(&d, vec![[1.0, 1.0], [1.01, 1.0]]).unwrap();
    assert!(matches!(cfg.check_separation(&d, 0.05), Err(Error::EscapedDomain)));
}

#[test]
fn boundary_parameterization_round_trips() {
    let d = Domain2D::rectangle([0.0, 2.0], [1.0, 2.0], 32, 16).unwrap();
    for s in [0.0, 0.5, 2.0, 2.3, 3.0, 4.1, 5.9] {
        let p = boundary_point(&d, s).unwrap();
        assert!(d.site(p).unwrap() != Site::Interior);
        assert!((boundary_parameter(&d, p).unwrap() - s).abs() < 1e-12, "{s}");
    }
}

#[test]
fn interior_spot_sits_at_the_center() {
    let g = square(64);
    // grid-scan oracle over H(ξ, ξ) on 32 x 32 cell centers
    let n = 32;
    let cell = 2.0 / n as f64;
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for i in 0..n {
        for j in 0..n {
            let p = [(i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell];
            let h = crate::greens::solve_regular_part(g.domain(), p).unwrap().self_interaction();
            if h < best.0 {
                best = (h, p);
            }
        }
    }
    assert!((best.1[0] - 1.0).abs() <= cell && (best.1[1] - 1.0).abs() <= cell, "{best:?}");

    let seeds = random_seeds(g.domain(), 1, 1, 3, 42);
    let cps = find_critical_points(&g, 1, 1, &seeds, &PlacementOptions::default()).unwrap();
    let cp = &cps[0];
    let p = cp.config.points[0];
    assert!((p[0] - best.1[0]).abs() <= cell && (p[1] - best.1[1]).abs() <= cell);
    assert!((p[0] - 1.0).abs() <= cell && (p[1] - 1.0).abs() <= cell);
    // J = 4 H(ξ, ξ), so ∇H = ∇J / 4
    let grad_h = cp.gradient.iter().map(|g| g * g).sum::<f64>().sqrt() / 4.0;
    assert!(grad_h < 1e-5, "{grad_h}");
    assert!(cp.hessian_eigenvalues.iter().all(|&l| l > 0.0));
    assert_eq!(cp.index(), 0);
}

#[test]
fn boundary_spot_sits_at_an_edge_midpoint() {
    let g = square(64);
    let d = *g.domain();
    // 1-D scan of H(ξ, ξ) along the bottom edge, away from the corners
    let mut best = (f64::INFINITY, 0.0);
    for i in 4..=60 {
        let x = i as f64 / 32.0;
        let h = g.table([x, 0.0]).unwrap().self_interaction();
        if h < best.0 {
            best = (h, x);
        }
    }
    assert!((best.1 - 1.0).abs() <= 1.0 / 32.0, "{best:?}");

    let cp = refine_critical_point(&g, 0, &[[0.8, 0.0]], &PlacementOptions::default()).unwrap();
    let p = cp.config.points[0];
    assert!((p[0] - 1.0).abs() <= 1.0 / 32.0 && p[1] == 0.0, "{p:?}");
    assert_eq!(cp.config.sites[0], Site::Edge);
    assert_eq!(cp.hessian_eigenvalues.len(), 1);
    assert!(d.contains(p));
}

#[test]
fn diagonal_pair_is_reflection_symmetric() {
    let g = square(64);
    let cp = refine_critical_point(&g, 2, &[[0.6, 0.55], [1.45, 1.4]], &PlacementOptions::default()).unwrap();
    let [a, b] = [cp.config.points[0], cp.config.points[1]];
    let cell = 2.0 / 64.0;
    assert!((a[0] + b[0] - 2.0).abs() < cell && (a[1] + b[1] - 2.0).abs() < cell, "{a:?} {b:?}");
    assert!((a[0] - a[1]).abs() < cell && (b[0] - b[1]).abs() < cell);
    assert_eq!(cp.hessian_eigenvalues.len(), 4);
}

#[test]
fn invalid_requests() {
    let g = square(32);
    let opts = PlacementOptions::default();
    assert!(matches!(refine_critical_point(&g, 2, &[[1.0, 1.0]], &opts), Err(Error::InvalidInput(_))));
    assert!(matches!(refine_critical_point(&g, 1, &[[0.01, 1.0]], &opts), Err(Error::EscapedDomain)));
    assert!(find_critical_points(&g, 1, 1, &[], &opts).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn energy_is_invariant_under_relabeling(
        a in (0.2..1.8f64, 0.2..1.8f64),
        b in (0.2..1.8f64, 0.2..1.8f64),
        c in (0.2..1.8f64, 0.2..1.8f64),
    ) {
        let g = square(32);
        let pts = vec![[a.0, a.1], [b.0, b.1], [c.0, c.1]];
        let j1 = jm_energy(&SpotConfig::new(g.domain(), pts.clone()).unwrap(), &g).unwrap();
        let swapped = vec![pts[2], pts[0], pts[1]];
        let j2 = jm_energy(&SpotConfig::new(g.domain(), swapped).unwrap(), &g).unwrap();
        prop_assert!((j1 - j2).abs() <= 1e-12 * (1.0 + j1.abs()));
    }
}
