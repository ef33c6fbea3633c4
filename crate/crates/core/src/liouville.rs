//! Radial entire solutions of the two-component Liouville system
//!
//! ```text
//!     Γ_j'' + Γ_j'/r + Σ_l b_jl e^{Γ_l} = 0,   Γ_j'(0) = 0,   Γ_j(0) = α_j,
//! ```
//!
//! their masses `σ_j = ∫ e^{Γ_j} r dr`, far-field data `Γ_j ~ -m_j log r + μ̃_j`
//! and the logistic correction pair `(φ_j, ψ_j)`.
//!
//! Integration runs in `t = log r` on `[r0, r_max]` starting from the
//! regular series at the origin. Masses and second moments are carried as
//! extra ODE components, and the algebraic tails beyond `r_max` are added
//! analytically.
//!
//! The radial family is invariant under `Γ(r) -> Γ(s r) + 2 log s`, which
//! leaves the masses unchanged. Profiles are therefore identified by the
//! difference of center values, and the scale is fixed afterwards by a
//! gauge (see [`LiouvilleProfile::normalized`]).

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{BMatrix, ModelParams};
use crate::ode::{integrate, Tolerances};
use crate::radial::RadialTable;

#[derive(Debug, Clone, Copy)]
pub struct RadialOptions {
    /// Radius where the series start hands over to the integrator.
    pub r0: f64,
    pub r_max: f64,
    /// Largest radius the far field may be pushed to when the tail model
    /// does not yet fit at `r_max`.
    pub r_max_limit: f64,
    pub tol: Tolerances,
}

impl Default for RadialOptions {
    fn default() -> Self {
        RadialOptions {
            r0: 1e-4,
            r_max: 1e3,
            r_max_limit: 1e12,
            tol: Tolerances::default(),
        }
    }
}

/// Least-squares line `Γ_j ≈ slope · log r + intercept` over the last
/// decade, and the rms residual of the corrected far-field model there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub slope: [f64; 2],
    pub intercept: [f64; 2],
    pub rms: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct LiouvilleProfile {
    pub b: BMatrix,
    /// Center values `Γ_j(0)`.
    pub alpha: [f64; 2],
    pub sigma: [f64; 2],
    /// Decay rates `m_j = Σ_l b_jl σ_l`.
    pub m: [f64; 2],
    pub mu_tilde: [f64; 2],
    /// `∫_{R^2} e^{2 Γ_j} dy`.
    pub second_moment: [f64; 2],
    pub fit: TailFit,
    gamma: [RadialTable; 2],
    cum_mass: [Vec<f64>; 2],
}

/// Radial ODE right-hand side in `t = log r`. State layout:
/// `[Γ1, Γ2, rΓ1', rΓ2', ∫e^Γ1 r, ∫e^Γ2 r, ∫e^2Γ1 r, ∫e^2Γ2 r]`.
fn radial_rhs(b: &[[f64; 2]; 2], t: f64, y: &[f64; 8]) -> [f64; 8] {
    let r2 = (2.0 * t).exp();
    let e1 = y[0].exp();
    let e2 = y[1].exp();
    [
        y[2],
        y[3],
        -r2 * (b[0][0] * e1 + b[0][1] * e2),
        -r2 * (b[1][0] * e1 + b[1][1] * e2),
        r2 * e1,
        r2 * e2,
        r2 * e1 * e1,
        r2 * e2 * e2,
    ]
}

fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

/// Integrates the radial Liouville system from the center values `alpha`.
///
/// When a decay rate is close to 2 the far field settles slowly; the outer
/// radius is then raised by decades up to `r_max_limit`.
pub fn solve_radial(b: &BMatrix, alpha: [f64; 2], opts: &RadialOptions) -> Result<LiouvilleProfile> {
    let mut o = *opts;
    loop {
        match solve_radial_to(b, alpha, &o) {
            Err(Error::NonConvergence(_)) if o.r_max * 10.0 <= opts.r_max_limit => o.r_max *= 10.0,
            other => return other,
        }
    }
}

fn solve_radial_to(b: &BMatrix, alpha: [f64; 2], opts: &RadialOptions) -> Result<LiouvilleProfile> {
    if !(alpha[0].is_finite() && alpha[1].is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite center values {alpha:?}")));
    }
    if b.b12 != b.b21 {
        return Err(Error::InvalidInput("B must be symmetric".into()));
    }
    let bm = b.rows();
    let ea = [alpha[0].exp(), alpha[1].exp()];
    let k0 = [
        bm[0][0] * ea[0] + bm[0][1] * ea[1],
        bm[1][0] * ea[0] + bm[1][1] * ea[1],
    ];
    let r0 = opts.r0;
    let q = r0 * r0;
    let y0 = [
        alpha[0] - k0[0] * q / 4.0,
        alpha[1] - k0[1] * q / 4.0,
        -k0[0] * q / 2.0,
        -k0[1] * q / 2.0,
        ea[0] * q / 2.0,
        ea[1] * q / 2.0,
        ea[0] * ea[0] * q / 2.0,
        ea[1] * ea[1] * q / 2.0,
    ];

    let mut samples: Vec<(f64, [f64; 8])> = Vec::with_capacity(512);
    let mut blew_up = false;
    let t_end = opts.r_max.ln();
    let (_, y_end) = integrate(
        |t, y| radial_rhs(&bm, t, y),
        r0.ln(),
        y0,
        t_end,
        opts.tol,
        |t, y| {
            if y[0] > 600.0 || y[1] > 600.0 {
                blew_up = true;
                return false;
            }
            samples.push((t, *y));
            true
        },
    )
    .map_err(|e| match e {
        Error::NonConvergence(_) => Error::BlowUp { decay: f64::NAN },
        other => other,
    })?;
    if blew_up || y_end.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { decay: f64::NAN });
    }

    // Far-field data: iterate the analytic tail corrections to consistency.
    let r_max = opts.r_max;
    let ln_max = t_end;
    let cum = [y_end[4], y_end[5]];
    let mut m = [-y_end[2], -y_end[3]];
    if m[0] <= 2.0 || m[1] <= 2.0 {
        return Err(Error::BlowUp { decay: m[0].min(m[1]) });
    }
    let mut mu = [y_end[0] + m[0] * ln_max, y_end[1] + m[1] * ln_max];
    let mut sigma = cum;
    for _ in 0..100 {
        if m[0] <= 2.0 || m[1] <= 2.0 {
            return Err(Error::BlowUp { decay: m[0].min(m[1]) });
        }
        let tail = [0, 1].map(|l| (mu[l] + (2.0 - m[l]) * ln_max).exp() / (m[l] - 2.0));
        sigma = [cum[0] + tail[0], cum[1] + tail[1]];
        let m_new = b.decay_rates(sigma);
        let mu_new = [0, 1].map(|j| {
            y_end[j]
                + m_new[j] * ln_max
                + (0..2)
                    .map(|l| bm[j][l] * tail[l] / (m[l] - 2.0))
                    .sum::<f64>()
        });
        let change = (m_new[0] - m[0])
            .abs()
            .max((m_new[1] - m[1]).abs())
            .max((mu_new[0] - mu[0]).abs())
            .max((mu_new[1] - mu[1]).abs());
        m = m_new;
        mu = mu_new;
        if change < 1e-15 {
            break;
        }
    }
    if !(m[0] > 2.0 && m[1] > 2.0) || !(mu[0].is_finite() && mu[1].is_finite()) {
        return Err(Error::BlowUp { decay: m[0].min(m[1]) });
    }
    let second_moment = [0, 1].map(|j| {
        let tail = (2.0 * mu[j] + (2.0 - 2.0 * m[j]) * ln_max).exp() / (2.0 * m[j] - 2.0);
        2.0 * PI * (y_end[6 + j] + tail)
    });

    // Least-squares line over the last decade (diagnostic decay rate), and
    // the residual of the corrected far-field model on the same window.
    let window: Vec<&(f64, [f64; 8])> = samples
        .iter()
        .filter(|(t, _)| *t >= ln_max - 10f64.ln() - 1e-12)
        .collect();
    let mut fit = TailFit {
        slope: [-m[0], -m[1]],
        intercept: mu,
        rms: [0.0; 2],
    };
    if window.len() >= 3 {
        let xs: Vec<f64> = window.iter().map(|(t, _)| *t).collect();
        for j in 0..2 {
            let ys: Vec<f64> = window.iter().map(|(_, y)| y[j]).collect();
            let (s, i, _) = fit_line(&xs, &ys);
            fit.slope[j] = s;
            fit.intercept[j] = i;
            let model = |t: f64| {
                let mut g = -m[j] * t + mu[j];
                for l in 0..2 {
                    g -= bm[j][l] * (mu[l] + (2.0 - m[l]) * t).exp() / ((m[l] - 2.0) * (m[l] - 2.0));
                }
                g
            };
            fit.rms[j] = (xs
                .iter()
                .zip(&ys)
                .map(|(&t, &y)| (y - model(t)).powi(2))
                .sum::<f64>()
                / xs.len() as f64)
                .sqrt();
        }
    }
    if fit.rms[0].max(fit.rms[1]) > 1e-3 {
        return Err(Error::NonConvergence(format!(
            "far-field tail model residual {:?} exceeds 1e-3 (r_max = {r_max})",
            fit.rms
        )));
    }

    let log_r: Vec<f64> = samples.iter().map(|(t, _)| *t).collect();
    let gamma = [0, 1].map(|j| {
        RadialTable::new(
            log_r.clone(),
            samples.iter().map(|(_, y)| y[j]).collect(),
            samples.iter().map(|(_, y)| y[2 + j]).collect(),
        )
    });
    let cum_mass = [0, 1].map(|j| samples.iter().map(|(_, y)| y[4 + j]).collect());

    Ok(LiouvilleProfile {
        b: *b,
        alpha,
        sigma,
        m,
        mu_tilde: mu,
        second_moment,
        fit,
        gamma,
        cum_mass,
    })
}

impl LiouvilleProfile {
    pub fn r_grid(&self) -> Vec<f64> {
        self.gamma[0].log_r().iter().map(|t| t.exp()).collect()
    }

    pub fn r_min(&self) -> f64 {
        self.gamma[0].r_min()
    }

    pub fn r_max(&self) -> f64 {
        self.gamma[0].r_max()
    }

    /// Sampled `Γ_j` on [`Self::r_grid`].
    pub fn gamma_samples(&self, j: usize) -> &[f64] {
        self.gamma[j].values()
    }

    /// `r Γ_j'(r)` on [`Self::r_grid`].
    pub fn gamma_slopes(&self, j: usize) -> &[f64] {
        self.gamma[j].slopes()
    }

    /// `∫_0^r e^{Γ_j} s ds` on [`Self::r_grid`].
    pub fn cumulative_mass(&self, j: usize) -> &[f64] {
        &self.cum_mass[j]
    }

    /// Far-field decay rate estimated from the slope of the tail fit.
    pub fn fitted_decay(&self, j: usize) -> f64 {
        -self.fit.slope[j]
    }

    /// `Γ_j(r)` for any `r >= 0`: series near the origin, table in the
    /// middle, and the corrected algebraic tail beyond `r_max`.
    pub fn gamma_at(&self, j: usize, r: f64) -> f64 {
        let table = &self.gamma[j];
        if r <= table.r_min() {
            let bm = self.b.rows();
            let k = bm[j][0] * self.alpha[0].exp() + bm[j][1] * self.alpha[1].exp();
            self.alpha[j] - k * r * r / 4.0
        } else if r >= table.r_max() {
            let bm = self.b.rows();
            let mut g = -self.m[j] * r.ln() + self.mu_tilde[j];
            for l in 0..2 {
                let ml = self.m[l];
                g -= bm[j][l] * (self.mu_tilde[l] + (2.0 - ml) * r.ln()).exp() / ((ml - 2.0) * (ml - 2.0));
            }
            g
        } else {
            table.eval_log(r.ln())
        }
    }

    /// `e^{Γ_j(r)}`.
    pub fn density_at(&self, j: usize, r: f64) -> f64 {
        self.gamma_at(j, r).exp()
    }

    /// Radius enclosing half of the combined mass `σ1 + σ2`.
    pub fn half_mass_radius(&self) -> f64 {
        let target = 0.5 * (self.sigma[0] + self.sigma[1]);
        let total: Vec<f64> = self.cum_mass[0]
            .iter()
            .zip(&self.cum_mass[1])
            .map(|(a, b)| a + b)
            .collect();
        let log_r = self.gamma[0].log_r();
        let k = total.partition_point(|&s| s < target).clamp(1, total.len() - 1);
        let w = (target - total[k - 1]) / (total[k] - total[k - 1]);
        (log_r[k - 1] + w * (log_r[k] - log_r[k - 1])).exp()
    }

    /// The member `Γ(s r) + 2 log s` of the scaling family.
    pub fn rescaled(&self, s: f64) -> LiouvilleProfile {
        let ls = s.ln();
        let gamma = [0, 1].map(|j| self.gamma[j].rescaled(s, 2.0 * ls));
        let mut fit = self.fit;
        for j in 0..2 {
            fit.intercept[j] += (fit.slope[j] + 2.0) * ls;
        }
        LiouvilleProfile {
            b: self.b,
            alpha: self.alpha.map(|a| a + 2.0 * ls),
            sigma: self.sigma,
            m: self.m,
            mu_tilde: [0, 1].map(|j| self.mu_tilde[j] + (2.0 - self.m[j]) * ls),
            second_moment: self.second_moment.map(|i| i * s * s),
            fit,
            gamma,
            cum_mass: self.cum_mass.clone(),
        }
    }

    /// Gauge-fixed member whose combined half-mass radius is one.
    pub fn normalized(&self) -> LiouvilleProfile {
        self.rescaled(self.half_mass_radius())
    }

    /// Leading-order amplitude balancing the logistic source:
    /// `c_j = ū_j ∫e^{Γ_j} / ∫e^{2Γ_j}`.
    pub fn balancing_amplitude(&self, j: usize, ubar: f64) -> f64 {
        2.0 * PI * self.sigma[j] / self.second_moment[j] * ubar
    }

    /// Scaling member in which the species-1 amplitude equals one, the
    /// normalization under which `u_j = c_j e^{Γ_j}` is consistent with the
    /// chemical equations at `χ1 = 1/ε²`.
    pub fn consistent_gauge(&self, ubar1: f64) -> LiouvilleProfile {
        let c1 = self.balancing_amplitude(0, ubar1);
        self.rescaled(c1.sqrt())
    }
}

/// Relative Pohozaev defect of a pair of masses.
pub fn pohozaev_defect(b: &BMatrix, sigma: [f64; 2]) -> f64 {
    let lhs = 4.0 * (sigma[0] + sigma[1]);
    (lhs - b.quadratic(sigma)).abs() / lhs
}

pub fn pohozaev_residual(p: &LiouvilleProfile) -> f64 {
    pohozaev_defect(&p.b, p.sigma)
}

/// Masses on the Pohozaev ellipse along the ray with mass fraction `q`
/// (`q = σ1 / (σ1 + σ2)`).
pub fn ellipse_point(b: &BMatrix, q: f64) -> [f64; 2] {
    let dir = [q, 1.0 - q];
    let s = 4.0 / b.quadratic(dir);
    [s * dir[0], s * dir[1]]
}

/// Settings for the center-value Newton search.
#[derive(Debug, Clone, Copy)]
pub struct MassSolveOptions {
    pub radial: RadialOptions,
    pub damping: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MassSolveOptions {
    fn default() -> Self {
        MassSolveOptions {
            radial: RadialOptions::default(),
            damping: 0.5,
            max_iter: 50,
            restarts: 10,
            seed: 42,
        }
    }
}

fn mass_fraction(p: &LiouvilleProfile) -> f64 {
    p.sigma[0] / (p.sigma[0] + p.sigma[1])
}

fn centers(delta: f64) -> [f64; 2] {
    [-0.5 * delta, 0.5 * delta]
}

fn newton_for_fraction(
    b: &BMatrix,
    q_target: f64,
    delta0: f64,
    opts: &MassSolveOptions,
) -> Option<LiouvilleProfile> {
    let eval = |delta: f64| -> Option<(f64, LiouvilleProfile)> {
        let p = solve_radial(b, centers(delta), &opts.radial).ok()?;
        Some((mass_fraction(&p) - q_target, p))
    };
    let mut delta = delta0;
    let (mut f, mut prof) = eval(delta)?;
    for _ in 0..opts.max_iter {
        if f.abs() < 1e-13 {
            return Some(prof);
        }
        let h = 1e-6 * (1.0 + delta.abs());
        let (fh, _) = eval(delta + h)?;
        let slope = (fh - f) / h;
        if slope == 0.0 || !slope.is_finite() {
            return None;
        }
        let full = (-f / slope).clamp(-5.0, 5.0);
        // backtrack by the damping factor until the residual decreases
        let mut step = full;
        let mut accepted = false;
        for _ in 0..40 {
            if let Some((fs, ps)) = eval(delta + step) {
                if fs.abs() < f.abs() {
                    delta += step;
                    f = fs;
                    prof = ps;
                    accepted = true;
                    break;
                }
            }
            step *= opts.damping;
        }
        if !accepted {
            return (f.abs() < 1e-10).then_some(prof);
        }
    }
    (f.abs() < 1e-10).then_some(prof)
}

/// Profile with prescribed mass fraction `σ1 / (σ1 + σ2) = q`, normalized to
/// unit half-mass radius. Scale invariance leaves one free parameter, the
/// difference of center values, which is found by damped Newton with a
/// finite-difference derivative and seeded random restarts.
pub fn solve_for_fraction(b: &BMatrix, q: f64, opts: &MassSolveOptions) -> Result<LiouvilleProfile> {
    solve_for_fraction_near(b, q, 0.0, opts)
}

/// As [`solve_for_fraction`], starting Newton from the center-value
/// difference `delta_hint` (`α2 - α1`) before the random restarts.
pub fn solve_for_fraction_near(
    b: &BMatrix,
    q: f64,
    delta_hint: f64,
    opts: &MassSolveOptions,
) -> Result<LiouvilleProfile> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InfeasibleTarget(format!("mass fraction {q} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![delta_hint];
    for _ in 0..opts.restarts {
        let a1: f64 = rng.gen_range(-5.0..5.0);
        let a2: f64 = rng.gen_range(-5.0..5.0);
        starts.push(a2 - a1);
    }
    for d0 in starts {
        if let Some(p) = newton_for_fraction(b, q, d0, opts) {
            return Ok(p.normalized());
        }
    }
    Err(Error::NoSolution(format!(
        "Newton stalled for mass fraction {q} after {} restarts",
        opts.restarts
    )))
}

/// Profile whose masses match `target` to `1e-6` relative.
pub fn solve_for_masses(
    b: &BMatrix,
    target: [f64; 2],
    opts: &MassSolveOptions,
) -> Result<LiouvilleProfile> {
    if !(target[0] > 0.0 && target[1] > 0.0) {
        return Err(Error::InfeasibleTarget(format!("masses {target:?} must be positive")));
    }
    let m = b.decay_rates(target);
    if m[0] <= 2.0 || m[1] <= 2.0 {
        return Err(Error::InfeasibleTarget(format!("decay rates {m:?} must exceed 2")));
    }
    let profile = if b.is_decoupled() {
        // two scalar equations, each with its own scaling; the explicit
        // solution 8/(b (1 + r^2)^2) has unit half-mass radius
        for j in 0..2 {
            let bjj = b.rows()[j][j];
            let expected = 4.0 / bjj;
            if (target[j] - expected).abs() > 1e-6 * expected {
                return Err(Error::NoSolution(format!(
                    "decoupled species {} has mass 4/b = {expected}, not {}",
                    j + 1,
                    target[j]
                )));
            }
        }
        let alpha = [(8.0 / b.b11).ln(), (8.0 / b.b22).ln()];
        solve_radial(b, alpha, &opts.radial)?
    } else {
        solve_for_fraction(b, target[0] / (target[0] + target[1]), opts)?
    };
    for j in 0..2 {
        if (profile.sigma[j] - target[j]).abs() > 1e-6 * target[j] {
            return Err(Error::NoSolution(format!(
                "closest profile has masses {:?}; target {target:?} is off the Pohozaev ellipse",
                profile.sigma
            )));
        }
    }
    Ok(profile)
}

/// Logistic correction pair of a single spot.
#[derive(Debug, Clone)]
pub struct CorrectionProfile {
    pub r_grid: Vec<f64>,
    pub amplitude: [f64; 2],
    pub lambda: [f64; 2],
    pub ubar: [f64; 2],
    /// `U_j = c_j e^{Γ_j}` on the grid.
    pub u: [Vec<f64>; 2],
    pub gamma: [Vec<f64>; 2],
    pub g: [Vec<f64>; 2],
    pub psi: [Vec<f64>; 2],
    pub phi: [Vec<f64>; 2],
    g_table: [RadialTable; 2],
    psi_table: [RadialTable; 2],
    /// Far-field growth coefficient of `g_j ~ κ_j r²`.
    g_growth: [f64; 2],
}

impl CorrectionProfile {
    pub fn is_trivial(&self) -> bool {
        self.lambda == [0.0, 0.0]
    }

    pub fn g_at(&self, j: usize, r: f64) -> f64 {
        let t = &self.g_table[j];
        if r <= t.r_min() {
            0.0
        } else if r >= t.r_max() {
            let rm = t.r_max();
            t.values()[t.len() - 1] + self.g_growth[j] * (r * r - rm * rm)
        } else {
            t.eval_log(r.ln())
        }
    }

    pub fn psi_at(&self, j: usize, r: f64) -> f64 {
        let t = &self.psi_table[j];
        if r <= t.r_min() {
            t.values()[0]
        } else if r >= t.r_max() {
            let n = t.len() - 1;
            t.values()[n] + t.slopes()[n] * (r.ln() - t.log_r()[n])
        } else {
            t.eval_log(r.ln())
        }
    }

    /// `φ_j(r) = U_j(r) (g_j(r) + ψ_j(r))`, with `U_j` taken from `profile`.
    pub fn phi_at(&self, profile: &LiouvilleProfile, j: usize, r: f64) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        self.amplitude[j] * profile.density_at(j, r) * (self.g_at(j, r) + self.psi_at(j, r))
    }

    /// Writes the combined profile/correction table as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,gamma1,gamma2,u1,u2,g1,g2,psi1,psi2,phi1,phi2")?;
        for i in 0..self.r_grid.len() {
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                self.r_grid[i],
                self.gamma[0][i],
                self.gamma[1][i],
                self.u[0][i],
                self.u[1][i],
                self.g[0][i],
                self.g[1][i],
                self.psi[0][i],
                self.psi[1][i],
                self.phi[0][i],
                self.phi[1][i],
            )?;
        }
        Ok(())
    }
}

/// Solves the mode-0 correction system for amplitudes `c`:
///
/// ```text
///     ∇·(U_j ∇g_j) = h_j := -λ_j U_j (ū_j - U_j)
///     Δψ_j + Σ_l k_jl φ_l = 0,    φ_j = U_j (g_j + ψ_j)
/// ```
///
/// with `k = [[a11, a12], [γ a21, γ a22]]` (inner variables, `χ1 ε² = 1`).
///
/// `g_j` comes from the first integral `r U_j g_j' = ∫_0^r h_j s ds`, with
/// `g_j(0) = 0`. Under the balancing condition the inner integral equals
/// `-∫_r^∞ h_j s ds`, which is accumulated from the far field inwards so
/// that its algebraic decay is resolved without cancellation. `ψ_j` is the
/// regular particular solution with `ψ_j(0) = ψ_j'(0) = 0`.
pub fn compute_corrections(
    p: &LiouvilleProfile,
    params: &ModelParams,
    c: [f64; 2],
) -> Result<CorrectionProfile> {
    let lambda = params.lambda();
    let ubar = params.ubar();
    for j in 0..2 {
        if lambda[j] == 0.0 {
            continue;
        }
        // ∫_0^∞ h_j s ds = -λ_j (ū_j c_j σ_j - c_j² ∫e^{2Γ_j} s ds)
        let q = p.second_moment[j] / (2.0 * PI);
        let total = -lambda[j] * (ubar[j] * c[j] * p.sigma[j] - c[j] * c[j] * q);
        let rel = (total / (lambda[j] * ubar[j] * c[j] * p.sigma[j])).abs();
        if rel > 1e-8 {
            return Err(Error::BalanceViolation(rel));
        }
    }
    let gamma = params.gamma();
    let a = params.a();
    let k = [[a[0][0], a[0][1]], [gamma * a[1][0], gamma * a[1][1]]];

    // uniform grid in t = log r; RK4 steps span two cells
    let (t0, t1) = (p.r_min().ln(), p.r_max().ln());
    let cells = (((t1 - t0) / 0.004).ceil() as usize).next_multiple_of(2);
    let dt = (t1 - t0) / cells as f64;
    let ts: Vec<f64> = (0..=cells).map(|i| t0 + i as f64 * dt).collect();
    let gam: [Vec<f64>; 2] = [0, 1].map(|j| ts.iter().map(|t| p.gamma_at(j, t.exp())).collect());

    // tails R_j = ∫_r^∞ e^{Γ_j} s ds and T_j = ∫_r^∞ e^{2Γ_j} s ds
    const GL: [(f64, f64); 3] = [
        (-0.774_596_669_241_483_4, 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        (0.774_596_669_241_483_4, 5.0 / 9.0),
    ];
    let mut tail_r = [vec![0.0; cells + 1], vec![0.0; cells + 1]];
    let mut tail_t = [vec![0.0; cells + 1], vec![0.0; cells + 1]];
    for j in 0..2 {
        let (m, mu) = (p.m[j], p.mu_tilde[j]);
        tail_r[j][cells] = (mu + (2.0 - m) * t1).exp() / (m - 2.0);
        tail_t[j][cells] = (2.0 * mu + (2.0 - 2.0 * m) * t1).exp() / (2.0 * m - 2.0);
        for i in (0..cells).rev() {
            let mid = ts[i] + 0.5 * dt;
            let (mut ir, mut it) = (0.0, 0.0);
            for (x, w) in GL {
                let t = mid + 0.5 * dt * x;
                let e = (p.gamma_at(j, t.exp()) + 2.0 * t).exp();
                let e2 = (2.0 * p.gamma_at(j, t.exp()) + 2.0 * t).exp();
                ir += w * e;
                it += w * e2;
            }
            tail_r[j][i] = tail_r[j][i + 1] + 0.5 * dt * ir;
            tail_t[j][i] = tail_t[j][i + 1] + 0.5 * dt * it;
        }
    }

    let u: [Vec<f64>; 2] = [0, 1].map(|j| gam[j].iter().map(|g| c[j] * g.exp()).collect());
    // t-derivative of g: r g' = F̂ / U with F̂(r) = -∫_r^∞ h s ds
    let g_rate: [Vec<f64>; 2] = [0, 1].map(|j| {
        (0..=cells)
            .map(|i| {
                let f = lambda[j] * (ubar[j] * c[j] * tail_r[j][i] - c[j] * c[j] * tail_t[j][i]);
                if lambda[j] == 0.0 {
                    0.0
                } else {
                    f / u[j][i]
                }
            })
            .collect()
    });

    // state [g1, g2, ψ1, ψ2, rψ1', rψ2'] at even nodes
    let deriv = |i: usize, y: &[f64; 6]| -> [f64; 6] {
        let r2 = (2.0 * ts[i]).exp();
        let phi = [u[0][i] * (y[0] + y[2]), u[1][i] * (y[1] + y[3])];
        [
            g_rate[0][i],
            g_rate[1][i],
            y[4],
            y[5],
            -r2 * (k[0][0] * phi[0] + k[0][1] * phi[1]),
            -r2 * (k[1][0] * phi[0] + k[1][1] * phi[1]),
        ]
    };
    let axpy = |y: &[f64; 6], d: &[f64; 6], h: f64| {
        let mut o = *y;
        for n in 0..6 {
            o[n] += h * d[n];
        }
        o
    };
    let mut states = Vec::with_capacity(cells / 2 + 1);
    let mut y = [0.0; 6];
    states.push(y);
    let h = 2.0 * dt;
    for i in (0..cells).step_by(2) {
        let k1 = deriv(i, &y);
        let k2 = deriv(i + 1, &axpy(&y, &k1, 0.5 * h));
        let k3 = deriv(i + 1, &axpy(&y, &k2, 0.5 * h));
        let k4 = deriv(i + 2, &axpy(&y, &k3, h));
        for n in 0..6 {
            y[n] += h / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
        }
        states.push(y);
    }

    let even: Vec<usize> = (0..=cells).step_by(2).collect();
    let log_r: Vec<f64> = even.iter().map(|&i| ts[i]).collect();
    let r_grid: Vec<f64> = log_r.iter().map(|t| t.exp()).collect();
    let pick = |v: &Vec<f64>| even.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let gamma_s = [pick(&gam[0]), pick(&gam[1])];
    let u_s = [pick(&u[0]), pick(&u[1])];
    let g = [0, 1].map(|j| states.iter().map(|y| y[j]).collect::<Vec<f64>>());
    let psi = [0, 1].map(|j| states.iter().map(|y| y[2 + j]).collect::<Vec<f64>>());
    let phi = [0, 1].map(|j| {
        (0..r_grid.len())
            .map(|i| u_s[j][i] * (g[j][i] + psi[j][i]))
            .collect::<Vec<f64>>()
    });
    let g_table = [0, 1].map(|j| RadialTable::new(log_r.clone(), g[j].clone(), pick(&g_rate[j])));
    let psi_table = [0, 1].map(|j| {
        RadialTable::new(
            log_r.clone(),
            psi[j].clone(),
            states.iter().map(|y| y[4 + j]).collect(),
        )
    });
    let g_growth = [0, 1].map(|j| {
        if lambda[j] == 0.0 {
            0.0
        } else {
            lambda[j] * ubar[j] / (2.0 * (p.m[j] - 2.0))
        }
    });
    Ok(CorrectionProfile {
        r_grid,
        amplitude: c,
        lambda,
        ubar,
        u: u_s,
        gamma: gamma_s,
        g,
        psi,
        phi,
        g_table,
        psi_table,
        g_growth,
    })
}

#[cfg(test)]
mod tests;
