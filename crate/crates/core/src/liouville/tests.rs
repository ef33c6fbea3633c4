use super::*;

fn decoupled() -> BMatrix {
    BMatrix::from_entries(1.0, 0.0, 1.0)
}

fn fig1_b() -> BMatrix {
    BMatrix::from_entries(2.0, 2.0, 6.0)
}

fn explicit(r: f64) -> f64 {
    (8.0 / (1.0 + r * r).powi(2)).ln()
}

#[test]
fn decoupled_mode_matches_explicit_solution() {
    let p = solve_radial(&decoupled(), [8f64.ln(); 2], &RadialOptions::default()).unwrap();
    let worst = (0..=5000)
        .map(|i| 50.0 * i as f64 / 5000.0)
        .map(|r| (p.gamma_at(0, r) - explicit(r)).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "max error {worst}");
    assert!((p.sigma[0] - 4.0).abs() < 1e-4);
    assert!((p.m[0] - 4.0).abs() < 1e-6);
    assert!((p.fitted_decay(0) - 4.0).abs() < 0.01);
    assert!((p.mu_tilde[0] - 8f64.ln()).abs() < 1e-6);
}

#[test]
fn symmetric_reduction() {
    for b in [0.5, 2.0, 3.0] {
        let bm = BMatrix::from_entries(b, b, b);
        let p = solve_radial(&bm, [0.3, 0.3], &RadialOptions::default()).unwrap();
        for j in 0..2 {
            assert!((p.sigma[j] - 2.0 / b).abs() < 1e-7 * (2.0 / b), "{:?}", p.sigma);
            assert!((p.m[j] - 4.0).abs() < 1e-7);
        }
        for r in [0.0, 0.1, 1.0, 10.0, 100.0] {
            assert_eq!(p.gamma_at(0, r), p.gamma_at(1, r));
        }
    }
}

#[test]
fn profile_is_decreasing() {
    let p = solve_radial(&fig1_b(), [0.0, -1.0], &RadialOptions::default()).unwrap();
    for j in 0..2 {
        assert!(p.gamma_slopes(j).iter().all(|&s| s < 0.0));
        assert!(p.gamma_samples(j).windows(2).all(|w| w[1] < w[0]));
    }
}

/// Independent fixed-step RK4 integration in `r` with the masses as
/// quadratures, used as the oracle for the coupled case.
fn rk4_oracle(b: [[f64; 2]; 2], alpha: [f64; 2], r_max: f64) -> [f64; 2] {
    let f = |r: f64, y: &[f64; 6]| -> [f64; 6] {
        let e = [y[0].exp(), y[1].exp()];
        [
            y[2],
            y[3],
            -y[2] / r - b[0][0] * e[0] - b[0][1] * e[1],
            -y[3] / r - b[1][0] * e[0] - b[1][1] * e[1],
            r * e[0],
            r * e[1],
        ]
    };
    let r0: f64 = 1e-3;
    let k = [
        b[0][0] * alpha[0].exp() + b[0][1] * alpha[1].exp(),
        b[1][0] * alpha[0].exp() + b[1][1] * alpha[1].exp(),
    ];
    let mut y = [
        alpha[0] - k[0] * r0 * r0 / 4.0,
        alpha[1] - k[1] * r0 * r0 / 4.0,
        -k[0] * r0 / 2.0,
        -k[1] * r0 / 2.0,
        alpha[0].exp() * r0 * r0 / 2.0,
        alpha[1].exp() * r0 * r0 / 2.0,
    ];
    let mut r = r0;
    // graded steps: h proportional to r beyond r = 1
    while r < r_max {
        let h = 2e-4 * r.max(1.0);
        let add = |y: &[f64; 6], k: &[f64; 6], s: f64| {
            let mut o = *y;
            for i in 0..6 {
                o[i] += s * k[i];
            }
            o
        };
        let k1 = f(r, &y);
        let k2 = f(r + h / 2.0, &add(&y, &k1, h / 2.0));
        let k3 = f(r + h / 2.0, &add(&y, &k2, h / 2.0));
        let k4 = f(r + h, &add(&y, &k3, h));
        for i in 0..6 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        r += h;
    }
    // tail with the local decay rate -rΓ'
    let m = [-r * y[2], -r * y[3]];
    [
        y[4] + y[0].exp() * r * r / (m[0] - 2.0),
        y[5] + y[1].exp() * r * r / (m[1] - 2.0),
    ]
}

#[test]
fn coupled_profile_matches_rk4_oracle_and_pohozaev() {
    let alpha = [0.0, -1.0];
    let p = solve_radial(&fig1_b(), alpha, &RadialOptions::default()).unwrap();
    let oracle = rk4_oracle(fig1_b().rows(), alpha, 2e3);
    for j in 0..2 {
        assert!(
            (p.sigma[j] - oracle[j]).abs() < 1e-4 * oracle[j],
            "sigma {:?} vs oracle {oracle:?}",
            p.sigma
        );
    }
    assert!(pohozaev_residual(&p) < 1e-3);
    assert!(pohozaev_residual(&p) < 1e-8, "{}", pohozaev_residual(&p));
    for j in 0..2 {
        let m_fit = p.fitted_decay(j);
        assert!((m_fit - p.m[j]).abs() < 0.01 * p.m[j], "{m_fit} vs {}", p.m[j]);
        assert!(p.m[j] > 2.0);
    }
}

#[test]
fn tail_correction_is_consistent_under_r_max_doubling() {
    let a = solve_radial(&fig1_b(), [0.0, -1.0], &RadialOptions::default()).unwrap();
    let opts = RadialOptions {
        r_max: 2e3,
        ..Default::default()
    };
    let b = solve_radial(&fig1_b(), [0.0, -1.0], &opts).unwrap();
    for j in 0..2 {
        assert!((a.sigma[j] - b.sigma[j]).abs() < 1e-6 * a.sigma[j]);
        assert!((a.mu_tilde[j] - b.mu_tilde[j]).abs() < 1e-6);
    }
}

#[test]
fn rescaling_preserves_masses_and_moves_moments() {
    let p = solve_radial(&fig1_b(), [0.0, -1.0], &RadialOptions::default()).unwrap();
    let s = 3.0;
    let q = p.rescaled(s);
    assert_eq!(q.sigma, p.sigma);
    for j in 0..2 {
        assert!((q.gamma_at(j, 0.7) - (p.gamma_at(j, 2.1) + 2.0 * s.ln())).abs() < 1e-12);
        assert!((q.second_moment[j] - s * s * p.second_moment[j]).abs() < 1e-12 * q.second_moment[j]);
    }
    assert!((q.half_mass_radius() - p.half_mass_radius() / s).abs() < 1e-12);
    assert!((p.normalized().half_mass_radius() - 1.0).abs() < 1e-12);
    let direct = solve_radial(&fig1_b(), q.alpha, &RadialOptions::default()).unwrap();
    for r in [0.05, 0.5, 5.0, 50.0] {
        assert!((direct.gamma_at(0, r) - q.gamma_at(0, r)).abs() < 1e-7);
    }
}

#[test]
fn too_small_decay_is_blow_up() {
    // a tiny coupling matrix with r_max too short to reach the far field
    let opts = RadialOptions {
        r_max: 1.0,
        ..Default::default()
    };
    let err = solve_radial(&BMatrix::from_entries(1.0, 0.5, 1.0), [-10.0, -10.0], &opts);
    assert!(matches!(err, Err(Error::BlowUp { .. })), "{err:?}");
}

#[test]
fn masses_symmetric_target() {
    let b = BMatrix::from_entries(2.0, 2.0, 2.0);
    let p = solve_for_masses(&b, [1.0, 1.0], &MassSolveOptions::default()).unwrap();
    assert!((p.alpha[0] - p.alpha[1]).abs() < 1e-6);
    assert!((p.m[0] - 4.0).abs() < 1e-6);
    assert!((p.half_mass_radius() - 1.0).abs() < 1e-9);
}

#[test]
fn masses_decoupled_target() {
    let p = solve_for_masses(&decoupled(), [4.0, 4.0], &MassSolveOptions::default()).unwrap();
    assert!((p.alpha[0] - 8f64.ln()).abs() < 1e-12);
    assert!(matches!(
        solve_for_masses(&decoupled(), [3.0, 4.0], &MassSolveOptions::default()),
        Err(Error::NoSolution(_))
    ));
}

#[test]
fn masses_infeasible_targets() {
    let o = MassSolveOptions::default();
    assert!(matches!(
        solve_for_masses(&fig1_b(), [-1.0, 1.0], &o),
        Err(Error::InfeasibleTarget(_))
    ));
    // m_1 = 2 (0.1) + 2 (0.1) = 0.4 <= 2
    assert!(matches!(
        solve_for_masses(&fig1_b(), [0.1, 0.1], &o),
        Err(Error::InfeasibleTarget(_))
    ));
    // feasible decay rates but off the ellipse
    assert!(matches!(
        solve_for_masses(&fig1_b(), [1.0, 1.0], &o),
        Err(Error::NoSolution(_))
    ));
}

/// Oracle: bisection on the center-value difference for the mass fraction,
/// using only `solve_radial`.
fn bisect_fraction(b: &BMatrix, q: f64) -> LiouvilleProfile {
    let frac = |d: f64| {
        let p = solve_radial(b, [-d / 2.0, d / 2.0], &RadialOptions::default()).unwrap();
        p.sigma[0] / (p.sigma[0] + p.sigma[1])
    };
    let (mut lo, mut hi) = (-12.0, 0.0);
    // walk right while profiles exist and the fraction is still above q
    while frac(hi) > q {
        hi += 0.5;
    }
    // fraction decreases as species 2 gets the larger center value
    assert!(frac(lo) > q && frac(hi) < q);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if frac(mid) > q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let d = 0.5 * (lo + hi);
    solve_radial(b, [-d / 2.0, d / 2.0], &RadialOptions::default()).unwrap()
}

#[test]
fn masses_coupled_target_matches_bisection_oracle() {
    let b = fig1_b();
    let oracle = bisect_fraction(&b, 0.7);
    let p = solve_for_masses(&b, oracle.sigma, &MassSolveOptions::default()).unwrap();
    for j in 0..2 {
        assert!((p.sigma[j] - oracle.sigma[j]).abs() < 1e-6 * oracle.sigma[j]);
    }
    assert!(pohozaev_residual(&p) < 1e-3);
    // the center-value difference is gauge independent
    let d_oracle = oracle.alpha[1] - oracle.alpha[0];
    assert!(((p.alpha[1] - p.alpha[0]) - d_oracle).abs() < 1e-5);
}

#[test]
fn pohozaev_identity_on_explicit_and_symmetric_profiles() {
    let p = solve_radial(&decoupled(), [8f64.ln(); 2], &RadialOptions::default()).unwrap();
    // diag(1, 1): 4 (4 + 4) = 16 + 16
    assert!(pohozaev_residual(&p) < 1e-6);
    let b = BMatrix::from_entries(2.0, 2.0, 2.0);
    assert!(pohozaev_defect(&b, [1.0, 1.0]) == 0.0);
}

#[test]
fn pohozaev_perturbed_masses() {
    // symmetric b = 2 with sigma1 inflated by 10%: (1.1, 1.0)
    // lhs = 4 * 2.1 = 8.4, rhs = 2 * 2.1^2 = 8.82, defect = 0.42 / 8.4
    let b = BMatrix::from_entries(2.0, 2.0, 2.0);
    let r = pohozaev_defect(&b, [1.1, 1.0]);
    assert!((r - 0.05).abs() < 1e-12, "{r}");
    // fig1 matrix with masses on its ellipse, sigma1 inflated by 10%
    let s = ellipse_point(&fig1_b(), 0.5);
    let (s1, s2) = (1.1 * s[0], s[1]);
    let lhs = 4.0 * (s1 + s2);
    let rhs = 2.0 * s1 * s1 + 4.0 * s1 * s2 + 6.0 * s2 * s2;
    assert!((pohozaev_defect(&fig1_b(), [s1, s2]) - (lhs - rhs).abs() / lhs).abs() < 1e-15);
}

fn scalar_params(lambda: f64, ubar: f64) -> ModelParams {
    ModelParams {
        chi1: 100.0,
        chi2: 100.0,
        lambda1: lambda,
        lambda2: lambda,
        ubar1: ubar,
        ubar2: ubar,
        a11: 1.0,
        a12: 0.0,
        a21: 0.0,
        a22: 1.0,
    }
}

#[test]
fn corrections_vanish_without_growth() {
    let p = solve_radial(&decoupled(), [8f64.ln(); 2], &RadialOptions::default()).unwrap();
    let c = compute_corrections(&p, &scalar_params(0.0, 1.0), [0.7, 0.7]).unwrap();
    assert!(c.is_trivial());
    for j in 0..2 {
        assert!(c.g[j].iter().chain(&c.psi[j]).chain(&c.phi[j]).all(|&x| x == 0.0));
    }
}

/// Simpson quadrature of `∫_0^∞ h(s) s ds` for the explicit scalar profile,
/// on `s = tan θ` to map the half line onto a finite interval.
fn explicit_balance_integral(c: f64, ubar: f64) -> f64 {
    let n = 200_000;
    let top = std::f64::consts::FRAC_PI_2;
    let f = |th: f64| {
        if th >= top {
            return 0.0;
        }
        let s = th.tan();
        let u = c * 8.0 / (1.0 + s * s).powi(2);
        let ds = 1.0 / th.cos().powi(2);
        -u * (ubar - u) * s * ds
    };
    let h = top / n as f64;
    let mut sum = f(0.0) + f(top);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    sum * h / 3.0
}

#[test]
fn corrections_balance_for_explicit_profile() {
    let p = solve_radial(&decoupled(), [8f64.ln(); 2], &RadialOptions::default()).unwrap();
    // ∫ e^Γ r dr = 4, ∫ e^{2Γ} r dr = 64/6, so c = ū * 4 / (64/6) = 3ū/8
    let c = 3.0 / 8.0;
    assert!(explicit_balance_integral(c, 1.0).abs() < 1e-8);
    assert!(explicit_balance_integral(0.4, 1.0).abs() > 1e-3);
    assert!((p.balancing_amplitude(0, 1.0) - c).abs() < 1e-6);

    let params = scalar_params(1.0, 1.0);
    let amp = [p.balancing_amplitude(0, 1.0), p.balancing_amplitude(1, 1.0)];
    let corr = compute_corrections(&p, &params, amp).unwrap();
    assert!(matches!(
        compute_corrections(&p, &params, [0.4, 0.4]),
        Err(Error::BalanceViolation(_))
    ));

    // g solves (r U g')' = r h: check against finite differences
    let r = 1.7;
    let h = 1e-4;
    let u = |r: f64| amp[0] * p.density_at(0, r);
    let flux = |r: f64| r * u(r) * (corr.g_at(0, r + h) - corr.g_at(0, r - h)) / (2.0 * h);
    let lhs = (flux(r + 1e-2) - flux(r - 1e-2)) / 2e-2 / r;
    let rhs = -u(r) * (1.0 - u(r));
    assert!((lhs - rhs).abs() < 1e-4, "{lhs} vs {rhs}");
}

#[test]
fn correction_growth_rates() {
    let p = solve_radial(&fig1_b(), [0.0, -1.0], &RadialOptions::default()).unwrap();
    let params = ModelParams {
        chi1: 8.5,
        chi2: 8.5,
        lambda1: 0.5,
        lambda2: 0.5,
        ubar1: 2.0,
        ubar2: 1.0,
        a11: 2.0,
        a12: 1.0,
        a21: 2.0,
        a22: 3.0,
    };
    let amp = [
        p.balancing_amplitude(0, params.ubar1),
        p.balancing_amplitude(1, params.ubar2),
    ];
    let corr = compute_corrections(&p, &params, amp).unwrap();
    let n = corr.r_grid.len();
    let r_max = corr.r_grid[n - 1];
    let idx: Vec<usize> = (0..n).filter(|&i| corr.r_grid[i] >= r_max / 10.0).collect();
    let xs: Vec<f64> = idx.iter().map(|&i| corr.r_grid[i].ln()).collect();
    for j in 0..2 {
        // |φ_j| decays like r^{-(m_j - 2)}
        let ys: Vec<f64> = idx.iter().map(|&i| corr.phi[j][i].abs().ln()).collect();
        let (slope, _, _) = fit_line(&xs, &ys);
        let p_exp = -slope;
        let mj = p.m[j];
        assert!(
            p_exp > mj - 2.0 - 0.1 && p_exp < mj - 1.0,
            "species {j}: exponent {p_exp}, m = {mj}"
        );
        // g_j grows at most quadratically
        let ys: Vec<f64> = idx.iter().map(|&i| corr.g[j][i].abs().ln()).collect();
        let (slope, _, _) = fit_line(&xs, &ys);
        assert!(slope <= 2.0 + 1e-3, "g exponent {slope}");
        // ψ_j stays well below the quadratic growth of g_j
        let ys: Vec<f64> = idx.iter().map(|&i| corr.psi[j][i].abs().ln()).collect();
        let (slope, _, _) = fit_line(&xs, &ys);
        assert!(slope < 1.0, "psi exponent {slope}");
    }
}
