//! Problem parameters, the symmetrized interaction matrix `B`, and the
//! standing hypotheses on the chemical production matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and chemical coefficients of the two-species system.
///
/// `a11..a22` are the chemical production rates: species `j` produces
/// chemical `i` at rate `a_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub chi1: f64,
    pub chi2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub ubar1: f64,
    pub ubar2: f64,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl ModelParams {
    /// Single corner spot on `(0,2)²`: `χ = 8.5`, `λ = 0.5`, `ū = (2, 1)`,
    /// `A = [[2, 1], [2, 3]]`.
    pub fn fig1() -> ModelParams {
        ModelParams {
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
        }
    }

    /// Weak chemotaxis regime (`χ = 1`) with an interior spot; the chemical
    /// diffusivities are set in the simulation config.
    pub fn fig2() -> ModelParams {
        ModelParams { chi1: 1.0, chi2: 1.0, ..Self::fig1() }
    }

    /// Repulsive cross production `a12 = -1`, `a21 = -2`. Fails H1.
    pub fn fig3() -> ModelParams {
        ModelParams { a12: -1.0, a21: -2.0, ..Self::fig1() }
    }

    pub fn a(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a21, self.a22]]
    }

    pub fn chi(&self) -> [f64; 2] {
        [self.chi1, self.chi2]
    }

    pub fn lambda(&self) -> [f64; 2] {
        [self.lambda1, self.lambda2]
    }

    pub fn ubar(&self) -> [f64; 2] {
        [self.ubar1, self.ubar2]
    }

    /// Ratio of chemotactic coefficients, `chi2 / chi1`.
    pub fn gamma(&self) -> f64 {
        self.chi2 / self.chi1
    }

    /// Small parameter `1 / sqrt(chi1)`.
    pub fn epsilon(&self) -> f64 {
        1.0 / self.chi1.sqrt()
    }

    /// Chemical levels of the spatially constant steady state.
    pub fn constant_state(&self) -> [f64; 4] {
        let [u1, u2] = self.ubar();
        [
            u1,
            u2,
            self.a11 * u1 + self.a12 * u2,
            self.a21 * u1 + self.a22 * u2,
        ]
    }

    /// Checks the type-level invariants (positive chemotaxis and capacities).
    pub fn check(&self) -> Result<()> {
        let ok = self.chi1 > 0.0
            && self.chi2 > 0.0
            && self.ubar1 > 0.0
            && self.ubar2 > 0.0
            && self.lambda1 >= 0.0
            && self.lambda2 >= 0.0
            && self.a().iter().flatten().all(|a| a.is_finite())
            && self.gamma().is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid model parameters {self:?}")))
        }
    }
}

/// Outcome of a single hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

/// Per-hypothesis pass/fail report for a parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Entries positive and the matrix irreducible.
    pub h1: Check,
    /// `a11 a22 - a12 a21 gamma^2 != 0`.
    pub h2: Check,
    /// Leading principal minors of `A` positive.
    pub h3: Check,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.h1.passed && self.h2.passed && self.h3.passed
    }

    pub fn failures(&self) -> Vec<&'static str> {
        [("H1", &self.h1), ("H2", &self.h2), ("H3", &self.h3)]
            .into_iter()
            .filter(|(_, c)| !c.passed)
            .map(|(n, _)| n)
            .collect()
    }
}

pub fn validate_assumptions(p: &ModelParams) -> AssumptionReport {
    let a = p.a();
    let gamma = p.gamma();

    let positive = a.iter().flatten().all(|&x| x > 0.0);
    // a 2x2 matrix is reducible exactly when one off-diagonal entry vanishes
    let irreducible = a[0][1] != 0.0 && a[1][0] != 0.0;
    let h1 = Check {
        passed: positive && irreducible,
        detail: format!(
            "entries positive: {positive}, irreducible: {irreducible} (a12 = {}, a21 = {})",
            a[0][1], a[1][0]
        ),
    };

    let norm = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let det_gamma = a[0][0] * a[1][1] - a[0][1] * a[1][0] * gamma * gamma;
    let h2 = Check {
        passed: det_gamma.abs() > 1e-12 * norm,
        detail: format!("a11 a22 - a12 a21 gamma^2 = {det_gamma:.6e}"),
    };

    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let h3 = Check {
        passed: a[0][0] > 0.0 && det > 0.0,
        detail: format!("leading minors: {:.6e}, {det:.6e}", a[0][0]),
    };

    AssumptionReport { h1, h2, h3 }
}

/// Symmetric interaction matrix of the limiting Liouville system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BMatrix {
    pub b11: f64,
    pub b12: f64,
    pub b21: f64,
    pub b22: f64,
    /// Scaling constant `(a21 / a12) gamma^2` that symmetrizes the system.
    pub d: f64,
    pub epsilon: f64,
}

impl BMatrix {
    /// Builds a matrix directly from its entries, used for test modes and
    /// randomized checks. `b12` is mirrored into `b21`.
    pub fn from_entries(b11: f64, b12: f64, b22: f64) -> Self {
        BMatrix {
            b11,
            b12,
            b21: b12,
            b22,
            d: 1.0,
            epsilon: f64::NAN,
        }
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.b11, self.b12], [self.b21, self.b22]]
    }

    pub fn det(&self) -> f64 {
        self.b11 * self.b22 - self.b12 * self.b21
    }

    pub fn is_positive_definite(&self) -> bool {
        self.b11 > 0.0 && self.det() > 0.0
    }

    pub fn is_decoupled(&self) -> bool {
        self.b12 == 0.0
    }

    /// Far-field decay rates `m_j = sum_l b_jl sigma_l`.
    pub fn decay_rates(&self, sigma: [f64; 2]) -> [f64; 2] {
        [
            self.b11 * sigma[0] + self.b12 * sigma[1],
            self.b21 * sigma[0] + self.b22 * sigma[1],
        ]
    }

    /// Quadratic form `sigma^T B sigma`.
    pub fn quadratic(&self, sigma: [f64; 2]) -> f64 {
        self.b11 * sigma[0] * sigma[0]
            + 2.0 * self.b12 * sigma[0] * sigma[1]
            + self.b22 * sigma[1] * sigma[1]
    }
}

/// Derives `B` from the model. With `allow_override` the hypotheses are
/// still evaluated but failures are tolerated (stress scenarios).
pub fn build_b_matrix(p: &ModelParams, allow_override: bool) -> Result<BMatrix> {
    if p.a12 == 0.0 {
        return Err(Error::DivisionByZero("a12 = 0 in d = (a21 / a12) gamma^2"));
    }
    let report = validate_assumptions(p);
    if !allow_override && !report.all_pass() {
        return Err(Error::AssumptionViolation(format!(
            "failed {:?}: {} / {} / {}",
            report.failures(),
            report.h1.detail,
            report.h2.detail,
            report.h3.detail
        )));
    }
    let gamma = p.gamma();
    let d = p.a21 / p.a12 * gamma * gamma;
    let off = p.a21 * gamma;
    Ok(BMatrix {
        b11: p.a11,
        b12: off,
        b21: off,
        b22: p.a22 * d,
        d,
        epsilon: p.epsilon(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with_a(a: [[f64; 2]; 2], gamma: f64) -> ModelParams {
        ModelParams {
            chi2: gamma * 8.5,
            a11: a[0][0],
            a12: a[0][1],
            a21: a[1][0],
            a22: a[1][1],
            ..ModelParams::fig1()
        }
    }

    #[test]
    fn fig1_matrix_passes_all() {
        assert!(validate_assumptions(&ModelParams::fig1()).all_pass());
    }

    #[test]
    fn identity_is_reducible() {
        let r = validate_assumptions(&with_a([[1.0, 0.0], [0.0, 1.0]], 1.0));
        assert!(!r.h1.passed);
        assert!(r.h2.passed);
    }

    #[test]
    fn negative_entries_fail_h1() {
        let r = validate_assumptions(&with_a([[2.0, -1.0], [-2.0, 3.0]], 1.0));
        assert!(!r.h1.passed);
        assert_eq!(r.failures(), vec!["H1"]);
    }

    #[test]
    fn fig1_b_matrix() {
        let b = build_b_matrix(&ModelParams::fig1(), false).unwrap();
        assert_eq!(b.d, 2.0);
        assert_eq!(b.rows(), [[2.0, 2.0], [2.0, 6.0]]);
        assert!((b.epsilon - 1.0 / 8.5f64.sqrt()).abs() < 1e-15);
        assert!(b.is_positive_definite());
    }

    #[test]
    fn symmetric_a_gives_b_equal_a() {
        let b = build_b_matrix(&with_a([[3.0, 1.5], [1.5, 2.0]], 1.0), false).unwrap();
        assert_eq!(b.d, 1.0);
        assert_eq!(b.rows(), [[3.0, 1.5], [1.5, 2.0]]);
    }

    #[test]
    fn indefinite_case_is_flagged() {
        let p = with_a([[1.0, 2.0], [1.0, 1.0]], 2.0);
        let r = validate_assumptions(&p);
        assert!(!r.h3.passed);
        assert!(matches!(
            build_b_matrix(&p, false),
            Err(Error::AssumptionViolation(_))
        ));
        let b = build_b_matrix(&p, true).unwrap();
        assert_eq!(b.d, 2.0);
        assert_eq!(b.rows(), [[1.0, 2.0], [2.0, 2.0]]);
        assert_eq!(b.det(), -2.0);
        assert!(!b.is_positive_definite());
    }

    #[test]
    fn zero_a12_is_division_by_zero() {
        let p = with_a([[1.0, 0.0], [1.0, 1.0]], 1.0);
        assert!(matches!(
            build_b_matrix(&p, true),
            Err(Error::DivisionByZero(_))
        ));
    }

    #[test]
    fn override_admits_stress_matrix() {
        let p = with_a([[2.0, -1.0], [-2.0, 3.0]], 1.0);
        assert!(build_b_matrix(&p, false).is_err());
        let b = build_b_matrix(&p, true).unwrap();
        assert_eq!(b.rows(), [[2.0, -2.0], [-2.0, 6.0]]);
    }

    fn positive_a() -> impl Strategy<Value = ([[f64; 2]; 2], f64)> {
        (0.5..5.0f64, 0.1..2.0f64, 0.1..2.0f64, 0.5..5.0f64, 0.2..3.0f64).prop_filter_map(
            "H1-H3",
            |(a11, a12, a21, a22, g)| {
                let a = [[a11, a12], [a21, a22]];
                validate_assumptions(&with_a(a, g)).all_pass().then_some((a, g))
            },
        )
    }

    proptest! {
        #[test]
        fn b_is_symmetric_and_positive((a, g) in positive_a()) {
            let b = build_b_matrix(&with_a(a, g), false).unwrap();
            prop_assert_eq!(b.b12.to_bits(), b.b21.to_bits());
            prop_assert!(b.b11 > 0.0 && b.b12 > 0.0 && b.b22 > 0.0);
        }

        #[test]
        fn b_scales_linearly((a, g) in positive_a(), c in 0.1..10.0f64) {
            let b = build_b_matrix(&with_a(a, g), false).unwrap();
            let scaled = [[c * a[0][0], c * a[0][1]], [c * a[1][0], c * a[1][1]]];
            let bc = build_b_matrix(&with_a(scaled, g), false).unwrap();
            for (x, y) in b.rows().iter().flatten().zip(bc.rows().iter().flatten()) {
                prop_assert!((c * x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }
}
