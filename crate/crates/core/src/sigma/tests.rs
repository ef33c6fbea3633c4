use super::*;
use crate::liouville::{solve_radial, RadialOptions};
use crate::model::build_b_matrix;

fn symmetric_params(b: f64) -> ModelParams {
    ModelParams {
        chi1: 5.0,
        chi2: 5.0,
        lambda1: 1.0,
        lambda2: 1.0,
        ubar1: 1.5,
        ubar2: 1.5,
        a11: b,
        a12: b,
        a21: b,
        a22: b,
    }
}

#[test]
fn symmetric_case_is_exact() {
    for b in [2.0, 0.7, 3.5] {
        let params = symmetric_params(b);
        let bm = BMatrix::from_entries(b, b, b);
        let sol = solve_sigma(&params, &bm, &SigmaOptions::default()).unwrap();
        assert!((sol.sigma1 - 2.0 / b).abs() < 1e-10, "{} vs {}", sol.sigma1, 2.0 / b);
        assert!((sol.sigma2 - 2.0 / b).abs() < 1e-10);
        assert!(sol.residuals[0] < 1e-8);
        assert!(sol.residuals[1] < 1e-6);
    }
}

/// Balance along the one-parameter family of radial profiles, scanned
/// directly over the center-value difference and refined by bisection.
fn scan_oracle(params: &ModelParams, b: &BMatrix) -> Vec<[f64; 2]> {
    let opts = RadialOptions::default();
    let rho = params.ubar1 / params.ubar2;
    let kappa = (params.a12 / params.a21) * (params.chi1 / params.chi2);
    let f = |delta: f64| -> Option<(f64, [f64; 2])> {
        let p = solve_radial(b, [-0.5 * delta, 0.5 * delta], &opts).ok()?;
        let [i1, i2] = p.second_moment;
        let v = (rho * i2 * p.sigma[0] - kappa * i1 * p.sigma[1]) / (i1 * (p.sigma[0] + p.sigma[1]));
        Some((v, p.sigma))
    };
    let n = 600;
    let samples: Vec<(f64, f64)> = (0..=n)
        .filter_map(|i| {
            let delta = -6.0 + 12.0 * i as f64 / n as f64;
            f(delta).map(|(v, _)| (delta, v))
        })
        .collect();
    let mut roots = Vec::new();
    for w in samples.windows(2) {
        let ((mut lo, flo), (mut hi, _)) = (w[0], w[1]);
        if flo.signum() == w[1].1.signum() {
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (fm, _) = f(mid).unwrap();
            if fm.signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(f(0.5 * (lo + hi)).unwrap().1);
    }
    roots
}

#[test]
fn fig1_matches_scan_oracle() {
    let params = ModelParams::fig1();
    let b = build_b_matrix(&params, false).unwrap();
    let sol = solve_sigma(&params, &b, &SigmaOptions::default()).unwrap();
    assert!(sol.sigma1 > 0.0 && sol.sigma2 > 0.0);
    assert!(sol.residuals[0] < 1e-8, "ellipse residual {}", sol.residuals[0]);
    assert!(sol.residuals[1] < 1e-6, "balance residual {}", sol.residuals[1]);

    let roots = scan_oracle(&params, &b);
    assert!(!roots.is_empty());
    let nearest = roots
        .iter()
        .min_by(|x, y| {
            let dx = (x[0] - sol.sigma1).abs() + (x[1] - sol.sigma2).abs();
            let dy = (y[0] - sol.sigma1).abs() + (y[1] - sol.sigma2).abs();
            dx.total_cmp(&dy)
        })
        .unwrap();
    assert!((nearest[0] - sol.sigma1).abs() < 1e-4, "{nearest:?} vs {:?}", sol.sigma());
    assert!((nearest[1] - sol.sigma2).abs() < 1e-4, "{nearest:?} vs {:?}", sol.sigma());
}

#[test]
fn common_ubar_scaling_leaves_masses_unchanged() {
    let params = ModelParams::fig1();
    let b = build_b_matrix(&params, false).unwrap();
    let scaled = ModelParams { ubar1: 3.0 * params.ubar1, ubar2: 3.0 * params.ubar2, ..params };
    let s0 = solve_sigma(&params, &b, &SigmaOptions::default()).unwrap();
    let s1 = solve_sigma(&scaled, &b, &SigmaOptions::default()).unwrap();
    assert!((s0.sigma1 - s1.sigma1).abs() < 1e-9);
    assert!((s0.sigma2 - s1.sigma2).abs() < 1e-9);
}

#[test]
fn decoupled_matrix_is_rejected() {
    let params = symmetric_params(1.0);
    let b = BMatrix::from_entries(1.0, 0.0, 1.0);
    assert!(matches!(solve_sigma(&params, &b, &SigmaOptions::default()), Err(Error::InvalidInput(_))));
}

#[test]
fn negative_balance_ratio_has_no_positive_root() {
    let params = ModelParams { a12: -1.0, ..ModelParams::fig1() };
    let b = BMatrix::from_entries(2.0, 2.0, 6.0);
    assert!(matches!(
        solve_sigma(&params, &b, &SigmaOptions::default()),
        Err(Error::NoPositiveRoot(_))
    ));
}

#[test]
fn arc_scan_brackets_the_solution() {
    let params = ModelParams::fig1();
    let b = build_b_matrix(&params, false).unwrap();
    let sol = solve_sigma(&params, &b, &SigmaOptions::default()).unwrap();
    let samples = scan_arc(&params, &b, 24, &SigmaOptions::default());
    assert_eq!(samples.len(), 24);
    assert!(samples.iter().filter(|s| s.balance.is_some()).count() > 8);
    let q = sol.sigma1 / (sol.sigma1 + sol.sigma2);
    let brackets = sign_brackets(&samples);
    assert!(brackets.iter().any(|&(a, c)| a <= q && q <= c), "{brackets:?} vs {q}");

    let mut buf = Vec::new();
    write_scan_csv(&samples, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("q,sigma1,sigma2,balance,sign\n"));
    assert_eq!(text.lines().count(), samples.len() + 1);
}

#[test]
fn arc_points_lie_on_the_ellipse() {
    let b = BMatrix::from_entries(2.0, 2.0, 6.0);
    let (lo, hi) = feasible_fractions(&b, 0.0).unwrap();
    assert!(lo > 0.0 && hi <= 1.0 && lo < hi);
    for i in 0..=50 {
        let q = lo + (hi - lo) * i as f64 / 50.0;
        let s = ellipse_point(&b, q);
        assert!(s[0] >= 0.0 && s[1] >= 0.0);
        assert!(pohozaev_defect(&b, s) < 1e-14);
    }
}

