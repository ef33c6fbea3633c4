//! Assembly of the multi-spot approximate steady state and its residual.
//!
//! With inner variables `y = (x − ξ_k)/ε` the cells are
//!
//! ```text
//!     u_j = Σ_k c_j e^{Γ_j(y_k)}  (+ ε² φ_j(y_k)),
//! ```
//!
//! and the working chemical variable `v̄_j = χ_j v_j` is the composite of the
//! inner profile and the outer Green's function,
//!
//! ```text
//!     v̄_j = Σ_k [ Γ_j(y_k) − μ̃_j − m_j log ε + ĉ_jk H(x, ξ_k) ],
//! ```
//!
//! so that `v̄_j ≈ −m_j log|x − ξ_k| + μ_jk` in the overlap region around each
//! spot and `v̄_j ≈ Σ_k ĉ_jk G(x, ξ_k)` away from all spots. The profile is
//! taken in the gauge where `c_1 = 1`, which makes the inner equations for
//! `v̄_j` hold exactly at leading order.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::greens::{shared_grid, GreenProvider, CG_TOL};
use crate::grid::Grid;
use crate::linalg::solve_grid;
use crate::liouville::{compute_corrections, CorrectionProfile, LiouvilleProfile};
use crate::model::ModelParams;
use crate::placement::SpotConfig;

/// Leading-order amplitude `c_j = 2π σ_j ū_j / ∫e^{2Γ_j} dy`.
pub fn amplitude_cjk(profile: &LiouvilleProfile, j: usize, ubar_j: f64) -> f64 {
    profile.balancing_amplitude(j, ubar_j)
}

/// Grid-sampled cells and chemicals.
#[derive(Debug, Clone)]
pub struct Field2D {
    pub grid: Arc<Grid>,
    pub u: [Vec<f64>; 2],
    /// Chemical concentrations `v_j` (not `χ_j v_j`).
    pub v: [Vec<f64>; 2],
    pub epsilon: f64,
    /// Spot configuration the field was assembled from, if any.
    pub config: Option<SpotConfig>,
}

impl Field2D {
    /// Spatially constant state `(u1, u2, v1, v2)`; zero on inactive nodes.
    pub fn constant(grid: Arc<Grid>, state: [f64; 4], epsilon: f64) -> Field2D {
        let fill = |c: f64| grid.sample(|_| c);
        Field2D {
            u: [fill(state[0]), fill(state[1])],
            v: [fill(state[2]), fill(state[3])],
            grid,
            epsilon,
            config: None,
        }
    }

    pub fn zeros(grid: Arc<Grid>, epsilon: f64) -> Field2D {
        Field2D::constant(grid, [0.0; 4], epsilon)
    }

    /// Active node with the largest value of `u_j`.
    pub fn argmax_u(&self, j: usize) -> usize {
        let g = &self.grid;
        (0..g.len())
            .filter(|&k| g.active[k])
            .max_by(|&a, &b| self.u[j][a].total_cmp(&self.u[j][b]))
            .unwrap_or(0)
    }

    /// `∫_Ω u_j dx`.
    pub fn mass(&self, j: usize) -> f64 {
        self.grid.integrate(&self.u[j])
    }

    /// `∫_Ω (u_j − min u_j) dx`: the mass above the far-field background.
    pub fn excess_mass(&self, j: usize) -> f64 {
        let g = &self.grid;
        let floor = (0..g.len()).filter(|&k| g.active[k]).map(|k| self.u[j][k]).fold(f64::INFINITY, f64::min);
        if !floor.is_finite() {
            return 0.0;
        }
        let lifted: Vec<f64> = self.u[j].iter().map(|x| x - floor).collect();
        g.integrate(&lifted)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,y,u1,u2,v1,v2")?;
        for k in (0..self.grid.len()).filter(|&k| self.grid.active[k]) {
            let p = self.grid.node(k);
            writeln!(
                w,
                "{:.9e},{:.9e},{:.12e},{:.12e},{:.12e},{:.12e}",
                p[0], p[1], self.u[0][k], self.u[1][k], self.v[0][k], self.v[1][k]
            )?;
        }
        Ok(())
    }

    /// Legacy ASCII VTK structured-points file; inactive nodes carry zeros.
    pub fn write_vtk<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = &self.grid;
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "spotlab field")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET STRUCTURED_POINTS")?;
        writeln!(w, "DIMENSIONS {} {} 1", g.px, g.py)?;
        writeln!(w, "ORIGIN {} {} 0", g.origin[0], g.origin[1])?;
        writeln!(w, "SPACING {} {} 1", g.h[0], g.h[1])?;
        writeln!(w, "POINT_DATA {}", g.len())?;
        let series = [("u1", &self.u[0]), ("u2", &self.u[1]), ("v1", &self.v[0]), ("v2", &self.v[1])];
        for (name, values) in series {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for (k, v) in values.iter().enumerate() {
                writeln!(w, "{:.12e}", if g.active[k] { *v } else { 0.0 })?;
            }
        }
        Ok(())
    }
}

/// Profile data shared by all spots of an ansatz.
#[derive(Debug, Clone)]
pub struct SpotProfile {
    /// Profile in the gauge with unit species-1 amplitude.
    pub profile: LiouvilleProfile,
    pub amplitude: [f64; 2],
    pub corrections: Option<CorrectionProfile>,
}

impl SpotProfile {
    /// Fixes the gauge of a σ-system profile and, when requested, computes
    /// the logistic corrections.
    ///
    /// Fails with [`Error::BalanceViolation`] when the species-2 amplitude
    /// disagrees with the one required by the chemical equations, i.e. when
    /// the profile does not solve the σ-system for `params`.
    pub fn new(profile: &LiouvilleProfile, params: &ModelParams, with_corrections: bool) -> Result<SpotProfile> {
        let ubar = params.ubar();
        let profile = profile.consistent_gauge(ubar[0]);
        let amplitude = [0, 1].map(|j| amplitude_cjk(&profile, j, ubar[j]));
        let required = profile.b.d / params.gamma();
        let rel = (amplitude[1] - required).abs() / required;
        if rel > 1e-4 {
            return Err(Error::BalanceViolation(rel));
        }
        let corrections = if with_corrections {
            Some(compute_corrections(&profile, params, amplitude)?)
        } else {
            None
        };
        Ok(SpotProfile { profile, amplitude, corrections })
    }

    /// `c_j e^{Γ_j(r)}`, plus `ε² φ_j(r)` when corrections are present.
    pub fn cell_density(&self, j: usize, r: f64, epsilon: f64) -> f64 {
        let mut u = self.amplitude[j] * self.profile.density_at(j, r);
        if let Some(c) = &self.corrections {
            u += epsilon * epsilon * c.phi_at(&self.profile, j, r);
        }
        u.max(0.0)
    }
}

/// Assembles the ansatz on the grid of the Green's function provider.
///
/// `cfg` must carry `ĉ_jk` and `μ_jk` (see [`SpotConfig::with_interactions`])
/// for the decay rates of `spot.profile`.
pub fn assemble<P: GreenProvider + ?Sized>(
    spot: &SpotProfile,
    cfg: &SpotConfig,
    greens: &P,
    params: &ModelParams,
) -> Result<Field2D> {
    if cfg.chat.len() != cfg.len() || cfg.mu.len() != cfg.len() {
        return Err(Error::InvalidInput("spot configuration has no interaction coefficients".into()));
    }
    let eps = params.epsilon();
    let chi = params.chi();
    let p = &spot.profile;
    let tables = cfg
        .points
        .iter()
        .map(|&xi| greens.table(xi))
        .collect::<Result<Vec<_>>>()?;
    let grid = shared_grid(greens.domain());
    let n = grid.len();
    let mut u = [vec![0.0; n], vec![0.0; n]];
    let mut vbar = [vec![0.0; n], vec![0.0; n]];
    for (k, table) in tables.iter().enumerate() {
        let xi = cfg.points[k];
        for node in (0..n).filter(|&i| grid.active[i]) {
            let x = grid.node(node);
            let r = (x[0] - xi[0]).hypot(x[1] - xi[1]) / eps;
            for j in 0..2 {
                u[j][node] += spot.cell_density(j, r, eps);
                vbar[j][node] += p.gamma_at(j, r) - p.mu_tilde[j] - p.m[j] * eps.ln()
                    + cfg.chat[k][j] * table.h_values[node];
            }
        }
    }
    let v = [0, 1].map(|j| vbar[j].iter().map(|w| w / chi[j]).collect());
    Ok(Field2D { grid, u, v, epsilon: eps, config: Some(cfg.clone()) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualNorms {
    pub max: f64,
    pub l2: f64,
    pub interior_max: f64,
    pub interior_l2: f64,
}

#[derive(Debug, Clone)]
pub struct Residual {
    /// `S_j` at every node.
    pub s: [Vec<f64>; 2],
    /// The chemical potential `w_j = χ_j (1 − Δ)^{-1}(a_j1 u1 + a_j2 u2)`.
    pub w: [Vec<f64>; 2],
    pub norms: [ResidualNorms; 2],
}

/// Nodes closer than this many cells to the boundary are excluded from the
/// interior norms.
pub const INTERIOR_MARGIN_CELLS: f64 = 4.0;

/// Logarithmic mean, the face value for which the discrete flux of
/// `u ∇ log u` equals that of `∇u`.
fn log_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let r = b / a;
    if (r - 1.0).abs() < 1e-6 {
        // series of (r − 1)/log r about r = 1
        let e = r - 1.0;
        a * (1.0 + e / 2.0 - e * e / 12.0)
    } else {
        (b - a) / r.ln()
    }
}

/// Stationary residual of the cell equations with the chemicals eliminated:
///
/// ```text
///     S_j = Δu_j − ∇·(u_j ∇w_j) + λ_j u_j (ū_j − u_j),
///     (1 − Δ) w_j = χ_j (a_j1 u1 + a_j2 u2),   ∂w_j/∂n = 0.
/// ```
///
/// The diffusion and drift terms share one conservative flux per link,
/// `u_f [(log u_l − log u_k) − (w_l − w_k)]` with the logarithmic mean `u_f`,
/// which vanishes exactly for Boltzmann pairs `u = C e^{w}`.
pub fn stationary_residual(f: &Field2D, params: &ModelParams) -> Result<Residual> {
    let g = &*f.grid;
    let n = g.len();
    if f.u.iter().chain(&f.v).any(|x| x.len() != n) {
        return Err(Error::GridMismatch("field length differs from its grid".into()));
    }
    let a = params.a();
    let chi = params.chi();
    let lambda = params.lambda();
    let ubar = params.ubar();
    let margin = INTERIOR_MARGIN_CELLS * g.spacing();
    let interior: Vec<bool> = (0..n)
        .map(|k| g.active[k] && g.domain.boundary_distance(g.node(k)) >= margin)
        .collect();

    let mut s: [Vec<f64>; 2] = [vec![0.0; n], vec![0.0; n]];
    let mut w: [Vec<f64>; 2] = [vec![0.0; n], vec![0.0; n]];
    let mut norms = [ResidualNorms { max: 0.0, l2: 0.0, interior_max: 0.0, interior_l2: 0.0 }; 2];
    for j in 0..2 {
        let source: Vec<f64> = (0..n)
            .map(|k| if g.active[k] { chi[j] * (a[j][0] * f.u[0][k] + a[j][1] * f.u[1][k]) } else { 0.0 })
            .collect();
        let rhs: Vec<f64> = source.iter().zip(&g.weight).map(|(s, w)| s * w).collect();
        // the local source is exact for constant fields and a good start otherwise
        let mut wj = source;
        solve_grid(g, 1.0, 1.0, &rhs, &mut wj, CG_TOL)?;

        let u = &f.u[j];
        let mut flux = vec![0.0; n];
        let mut link = |k: usize, l: usize, c: f64| {
            if c == 0.0 {
                return;
            }
            let du = u[l] - u[k];
            let drift = log_mean(u[k], u[l]) * (wj[l] - wj[k]);
            let q = c * (du - drift);
            flux[k] += q;
            flux[l] -= q;
        };
        for k in 0..n {
            link(k, k + 1, g.cx[k]);
            link(k, k + g.px, g.cy[k]);
        }
        for k in (0..n).filter(|&k| g.active[k]) {
            s[j][k] = flux[k] / g.weight[k] + lambda[j] * u[k] * (ubar[j] - u[k]);
        }

        let sq: Vec<f64> = s[j].iter().map(|x| x * x).collect();
        let inner_sq: Vec<f64> = (0..n).map(|k| if interior[k] { sq[k] } else { 0.0 }).collect();
        norms[j] = ResidualNorms {
            max: s[j].iter().fold(0.0, |m, x| m.max(x.abs())),
            l2: g.integrate(&sq).sqrt(),
            interior_max: (0..n).filter(|&k| interior[k]).fold(0.0, |m, k| m.max(s[j][k].abs())),
            interior_l2: g.integrate(&inner_sq).sqrt(),
        };
        w[j] = wj;
    }
    Ok(Residual { s, w, norms })
}

/// Far-field constant of a chemical potential around `xi`: the mean of
/// `w(x) + m log|x − ξ|` over the circle `|x − ξ| = radius` (the part of it
/// inside the domain).
pub fn recovered_mu(grid: &Grid, w: &[f64], xi: [f64; 2], m: f64, radius: f64) -> Result<f64> {
    let samples = 64;
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..samples {
        let t = 2.0 * PI * (i as f64 + 0.5) / samples as f64;
        let x = [xi[0] + radius * t.cos(), xi[1] + radius * t.sin()];
        if !grid.domain.contains(x) {
            continue;
        }
        sum += grid.interpolate(w, x)? + m * radius.ln();
        count += 1;
    }
    if count == 0 {
        return Err(Error::OutOfDomain(xi[0], xi[1]));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests;
