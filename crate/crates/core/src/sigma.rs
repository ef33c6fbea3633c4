//! The algebraic system fixing the spot masses: the Pohozaev ellipse
//! `4(σ1 + σ2) = σᵀBσ` intersected with the balancing curve
//!
//! ```text
//!     (ū1/ū2) I2 σ1 = (a12/a21)(χ1/χ2) I1 σ2,      I_j = ∫ e^{2Γ_j} dy.
//! ```
//!
//! Points of the ellipse in the first quadrant are parameterized by the mass
//! fraction `q = σ1/(σ1+σ2)`. The ratio `I2/I1` is independent of the profile
//! scale, so the balance reduces to a scalar equation in `q`. It is solved by
//! an outer loop that freezes the integrals, solves the remaining algebraic
//! equation for `q` exactly, and relaxes towards it; a secant step on the
//! fixed-point map accelerates the linear convergence once two iterates are
//! available.

use std::io::Write;

use crate::error::{Error, Result};
use crate::liouville::{
    ellipse_point, pohozaev_defect, solve_for_fraction_near, solve_radial, LiouvilleProfile, MassSolveOptions,
};
use crate::model::{BMatrix, ModelParams};

#[derive(Debug, Clone, Copy)]
pub struct SigmaOptions {
    pub mass: MassSolveOptions,
    /// Relaxation factor of the frozen-integral update.
    pub damping: f64,
    pub max_iter: usize,
    /// Convergence threshold on the change of the mass fraction.
    pub tol: f64,
}

impl Default for SigmaOptions {
    fn default() -> Self {
        SigmaOptions {
            mass: MassSolveOptions::default(),
            damping: 0.5,
            max_iter: 40,
            tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SigmaSolution {
    pub sigma1: f64,
    pub sigma2: f64,
    /// `∫ e^{2Γ_j} dy` for the unit half-mass-radius profile.
    pub i1: f64,
    pub i2: f64,
    pub iterations: usize,
    /// Relative ellipse and balance residuals.
    pub residuals: [f64; 2],
    pub profile: LiouvilleProfile,
}

impl SigmaSolution {
    pub fn sigma(&self) -> [f64; 2] {
        [self.sigma1, self.sigma2]
    }
}

/// Coefficients `(ρ, κ)` of the balance `ρ (I2/I1) σ1 = κ σ2`.
fn balance_coefficients(params: &ModelParams) -> [f64; 2] {
    let rho = params.ubar1 / params.ubar2;
    let kappa = (params.a12 / params.a21) * (params.chi1 / params.chi2);
    [rho, kappa]
}

/// Relative balance residual of a profile.
pub fn balance_residual(params: &ModelParams, profile: &LiouvilleProfile) -> f64 {
    let [rho, kappa] = balance_coefficients(params);
    let [i1, i2] = profile.second_moment;
    let lhs = rho * i2 * profile.sigma[0];
    let rhs = kappa * i1 * profile.sigma[1];
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs())
}

/// Signed balance `ρ I2 σ1 − κ I1 σ2`, normalized by `I1 (σ1 + σ2)`.
pub fn balance_value(params: &ModelParams, profile: &LiouvilleProfile) -> f64 {
    let [rho, kappa] = balance_coefficients(params);
    let [i1, i2] = profile.second_moment;
    let s = profile.sigma[0] + profile.sigma[1];
    (rho * i2 * profile.sigma[0] - kappa * i1 * profile.sigma[1]) / (i1 * s)
}

/// Interval of mass fractions whose ellipse point has both decay rates
/// above `2 + margin`.
pub fn feasible_fractions(b: &BMatrix, margin: f64) -> Option<(f64, f64)> {
    let ok = |q: f64| {
        let m = b.decay_rates(ellipse_point(b, q));
        m[0] > 2.0 + margin && m[1] > 2.0 + margin
    };
    let n = 2000;
    let inside: Vec<f64> = (1..n).map(|i| i as f64 / n as f64).filter(|&q| ok(q)).collect();
    let (&lo, &hi) = (inside.first()?, inside.last()?);
    // refine both ends by bisection against the neighbouring sample
    let refine = |mut good: f64, mut bad: f64| {
        for _ in 0..60 {
            let mid = 0.5 * (good + bad);
            if ok(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    };
    let step = 1.0 / n as f64;
    Some((refine(lo, (lo - step).max(0.0)), refine(hi, (hi + step).min(1.0))))
}

fn center_difference(p: &LiouvilleProfile) -> f64 {
    p.alpha[1] - p.alpha[0]
}

pub fn solve_sigma(params: &ModelParams, b: &BMatrix, opts: &SigmaOptions) -> Result<SigmaSolution> {
    if b.is_decoupled() {
        return Err(Error::InvalidInput(
            "the mass system needs coupled species (b12 != 0)".into(),
        ));
    }
    let [rho, kappa] = balance_coefficients(params);
    if !(kappa > 0.0 && rho > 0.0) {
        return Err(Error::NoPositiveRoot(format!(
            "balance coefficients ({rho}, {kappa}) admit no positive masses"
        )));
    }
    let (q_lo, q_hi) = feasible_fractions(b, 0.05).ok_or_else(|| {
        Error::NoPositiveRoot("no point of the ellipse has both decay rates above 2".into())
    })?;

    let profile_at = |q: f64, hint: f64| -> Result<LiouvilleProfile> {
        solve_for_fraction_near(b, q, hint, &opts.mass)
            .map_err(|e| Error::ProfileFailure(Box::new(e)))
    };
    // with I2/I1 frozen the balance is linear in q
    let frozen_root = |p: &LiouvilleProfile| {
        let ratio = p.second_moment[1] / p.second_moment[0];
        kappa / (kappa + rho * ratio)
    };

    // Start from equal center values. For a symmetric matrix this is the
    // diagonal point; in general the diagonal can be an endpoint of the arc
    // covered by radial profiles and is not attained.
    let start = solve_radial(b, [0.0, 0.0], &opts.mass.radial)
        .map_err(|e| Error::ProfileFailure(Box::new(e)))?;
    let mut q = start.sigma[0] / (start.sigma[0] + start.sigma[1]);
    let mut prof = profile_at(q, 0.0)?;
    let mut prev: Option<(f64, f64)> = None;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let g = frozen_root(&prof) - q;
        if g.abs() < opts.tol {
            break;
        }
        let relaxed = q + opts.damping * g;
        let mut next = match prev {
            Some((q0, g0)) if g != g0 => {
                let secant = q - g * (q - q0) / (g - g0);
                // keep the secant step only when it stays near the relaxed one
                if (secant - q).abs() <= 4.0 * g.abs() {
                    secant
                } else {
                    relaxed
                }
            }
            _ => relaxed,
        };
        next = next.clamp(0.5 * (q + q_lo), 0.5 * (q + q_hi));
        // shorten the step while the target fraction has no radial profile
        let mut found = None;
        for _ in 0..30 {
            match profile_at(next, center_difference(&prof)) {
                Ok(p) => {
                    found = Some(p);
                    break;
                }
                Err(_) => next = 0.5 * (q + next),
            }
        }
        let Some(p) = found else {
            return Err(Error::NoPositiveRoot(format!(
                "the balance pushes the mass fraction past the end of the radial arc near q = {q}"
            )));
        };
        prev = Some((q, g));
        prof = p;
        q = next;
    }
    let g = frozen_root(&prof) - q;
    if g.abs() > 1e3 * opts.tol {
        return Err(Error::NonConvergence(format!(
            "mass fraction still moving by {g:e} after {iterations} iterations"
        )));
    }

    let sigma = ellipse_point(b, q);
    let residuals = [pohozaev_defect(b, sigma), balance_residual(params, &prof)];
    Ok(SigmaSolution {
        sigma1: sigma[0],
        sigma2: sigma[1],
        i1: prof.second_moment[0],
        i2: prof.second_moment[1],
        iterations,
        residuals,
        profile: prof,
    })
}

/// One point of the arc scan.
#[derive(Debug, Clone, Copy)]
pub struct ArcSample {
    pub q: f64,
    pub sigma: [f64; 2],
    /// `None` where no radial profile carries these masses.
    pub balance: Option<f64>,
}

/// Samples the balance equation along the admissible part of the ellipse at
/// `n` evenly spaced mass fractions.
pub fn scan_arc(params: &ModelParams, b: &BMatrix, n: usize, opts: &SigmaOptions) -> Vec<ArcSample> {
    let Some((q_lo, q_hi)) = feasible_fractions(b, 0.05) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(n);
    let mut hint = 0.0;
    for i in 0..n {
        let q = q_lo + (q_hi - q_lo) * (i as f64 + 0.5) / n as f64;
        let balance = solve_for_fraction_near(b, q, hint, &opts.mass).ok().map(|p| {
            hint = center_difference(&p);
            balance_value(params, &p)
        });
        out.push(ArcSample { q, sigma: ellipse_point(b, q), balance });
    }
    out
}

/// Consecutive samples between which the balance changes sign.
pub fn sign_brackets(samples: &[ArcSample]) -> Vec<(f64, f64)> {
    samples
        .windows(2)
        .filter(|w| match (w[0].balance, w[1].balance) {
            (Some(x), Some(y)) => x.signum() != y.signum(),
            _ => false,
        })
        .map(|w| (w[0].q, w[1].q))
        .collect()
}

pub fn write_scan_csv<W: Write>(samples: &[ArcSample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "q,sigma1,sigma2,balance,sign")?;
    for s in samples {
        let (value, sign) = match s.balance {
            Some(v) => (format!("{v:.12e}"), if v >= 0.0 { 1 } else { -1 }),
            None => (String::new(), 0),
        };
        writeln!(w, "{:.12e},{:.12e},{:.12e},{value},{sign}", s.q, s.sigma[0], s.sigma[1])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
