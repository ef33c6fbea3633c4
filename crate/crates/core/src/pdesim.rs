//! Time integration of the full system
//!
//! ```text
//!     u_jt = Δu_j − χ_j ∇·(u_j ∇v_j) + λ_j u_j (ū_j − u_j),
//!     v_jt = d_j Δv_j − v_j + a_j1 u1 + a_j2 u2,
//! ```
//!
//! with homogeneous Neumann conditions, on the finite-volume grid.
//!
//! Each step updates the chemicals implicitly with explicit production and
//! then the cells implicitly, with an exponentially fitted chemotactic flux
//! and a linearized logistic term (see [`advance_cells`]). Every solve is
//! symmetric positive definite, and no step-size restriction is needed for
//! positivity.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::ansatz::Field2D;
use crate::error::{Error, Result};
use crate::greens::shared_grid;
use crate::grid::{Domain2D, Grid};
use crate::linalg::{solve_grid, Stencil5};
use crate::model::ModelParams;

/// Relative residual of the implicit solves. Tight enough that solver
/// error stays well below the steady-state threshold.
const SIM_CG_TOL: f64 = 1e-12;

/// Largest cell value before a run is declared blown up.
pub const BLOW_UP_LIMIT: f64 = 1e8;

/// `amplitude · exp(−rate |x − center|²) + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub amplitude: f64,
    pub rate: f64,
    pub center: [f64; 2],
    pub offset: f64,
}

impl Bump {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let r2 = (x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2);
        self.amplitude * (-self.rate * r2).exp() + self.offset
    }
}

/// Initial data for `(u1, u2, v1, v2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialData {
    pub u: [Bump; 2],
    pub v: [Bump; 2],
}

impl InitialData {
    /// `u_j0 = 6 e^{−10|x−c|²} + 0.1`, `v_j0 = 2 e^{−10|x−c|²} + 0.1`.
    pub fn gaussian_at(center: [f64; 2]) -> InitialData {
        let u = Bump { amplitude: 6.0, rate: 10.0, center, offset: 0.1 };
        let v = Bump { amplitude: 2.0, ..u };
        InitialData { u: [u; 2], v: [v; 2] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub domain: Domain2D,
    pub dt: f64,
    pub t_end: f64,
    pub params: ModelParams,
    /// Chemical diffusivities `d_1, d_2`.
    pub dv: [f64; 2],
    pub initial: InitialData,
    /// Threshold on `‖u^{n+1} − u^n‖_∞ / dt`.
    pub steady_tol: f64,
}

impl SimConfig {
    fn preset(params: ModelParams, dv: f64, center: [f64; 2]) -> SimConfig {
        SimConfig {
            domain: Domain2D::square(2.0, 128).expect("valid preset domain"),
            dt: 0.1,
            t_end: 200.0,
            params,
            dv: [dv, dv],
            initial: InitialData::gaussian_at(center),
            steady_tol: 1e-7,
        }
    }

    /// Corner spot on `(0,2)²` at `χ = 8.5`.
    pub fn fig1() -> SimConfig {
        Self::preset(ModelParams::fig1(), 1.0, [0.0, 0.0])
    }

    /// Interior spot at `χ = 1` with slow chemical diffusion.
    pub fn fig2() -> SimConfig {
        Self::preset(ModelParams::fig2(), 0.05, [1.0, 1.0])
    }

    /// Repulsive cross-production; same data as [`Self::fig1`].
    pub fn fig3() -> SimConfig {
        Self::preset(ModelParams::fig3(), 1.0, [0.0, 0.0])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_end >= 0.0) {
            return bad("t_end must be nonnegative");
        }
        if self.dv.iter().any(|d| !(*d > 0.0)) {
            return bad("chemical diffusivities must be positive");
        }
        if !(self.steady_tol > 0.0) {
            return bad("steady tolerance must be positive");
        }
        Ok(())
    }

    pub fn initial_field(&self) -> Field2D {
        let grid = shared_grid(&self.domain);
        let sample = |b: Bump| grid.sample(|x| b.eval(x));
        Field2D {
            u: self.initial.u.map(sample),
            v: self.initial.v.map(sample),
            grid: grid.clone(),
            epsilon: self.params.epsilon(),
            config: None,
        }
    }
}

/// Result of one time step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub field: Field2D,
    pub dt: f64,
    /// Mass removed by clipping negative cell values.
    pub clipped_mass: f64,
}

fn solve_chemicals(state: &Field2D, cfg: &SimConfig, dt: f64) -> Result<[Vec<f64>; 2]> {
    let g = &*state.grid;
    let a = cfg.params.a();
    let mut v = state.v.clone();
    for j in 0..2 {
        let rhs: Vec<f64> = (0..g.len())
            .map(|k| {
                let prod = a[j][0] * state.u[0][k] + a[j][1] * state.u[1][k];
                g.weight[k] * (state.v[j][k] + dt * prod)
            })
            .collect();
        solve_grid(g, 1.0 + dt, dt * cfg.dv[j], &rhs, &mut v[j], SIM_CG_TOL)?;
    }
    Ok(v)
}

/// Face value of `e^w` for the exponentially fitted flux,
/// `(w_l − w_k) / (e^{−w_k} − e^{−w_l})`.
fn fitted_mean(wk: f64, wl: f64) -> f64 {
    let d = wl - wk;
    if d.abs() < 1e-8 {
        (0.5 * (wk + wl)).exp()
    } else {
        // e^{w_k} d / (1 − e^{−d}), arranged to avoid overflow
        let (lo, hi) = if d > 0.0 { (wk, d) } else { (wl, -d) };
        lo.exp() * hi / -(-hi).exp_m1()
    }
}

/// Implicit cell update with the chemicals fixed at `v`.
///
/// Writing `u = e^{w} ρ` with `w = χ v` turns `Δu − ∇·(u∇w)` into
/// `∇·(e^{w} ∇ρ)`, discretized on each link with [`fitted_mean`]. The step
///
/// ```text
///     (W E (1 + dt λ u^n) + dt K_w) ρ = W u^n (1 + dt λ ū),    E = diag(e^{w}),
/// ```
///
/// is symmetric positive definite and an M-matrix, so it keeps `u ≥ 0` for
/// every step size, and its fixed points do not depend on `dt`.
fn advance_cells(state: &Field2D, v: &[Vec<f64>; 2], cfg: &SimConfig, dt: f64) -> Result<([Vec<f64>; 2], f64)> {
    let g = &*state.grid;
    let n = g.len();
    let chi = cfg.params.chi();
    let lambda = cfg.params.lambda();
    let ubar = cfg.params.ubar();
    let mut u_next = state.u.clone();
    let mut clipped = 0.0;
    for j in 0..2 {
        let u = &state.u[j];
        // shift w so that e^w stays O(1) near its maximum
        let w_max = (0..n).filter(|&k| g.active[k]).map(|k| chi[j] * v[j][k]).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = v[j].iter().map(|x| chi[j] * x - w_max).collect();
        let ew: Vec<f64> = w.iter().map(|x| x.exp()).collect();
        let link = |k: usize, l: usize, c: f64| if c == 0.0 { 0.0 } else { dt * c * fitted_mean(w[k], w[l]) };
        let wx: Vec<f64> = (0..n).map(|k| link(k, k + 1, g.cx[k])).collect();
        let wy: Vec<f64> = (0..n).map(|k| link(k, k + g.px, g.cy[k])).collect();
        let mut diag: Vec<f64> = (0..n)
            .map(|k| if g.active[k] { g.weight[k] * ew[k] * (1.0 + dt * lambda[j] * u[k]) } else { 1.0 })
            .collect();
        for k in 0..n {
            if wx[k] != 0.0 {
                diag[k] += wx[k];
                diag[k + 1] += wx[k];
            }
            if wy[k] != 0.0 {
                diag[k] += wy[k];
                diag[k + g.px] += wy[k];
            }
        }
        let a = Stencil5 { px: g.px, diag, wx, wy };
        let rhs: Vec<f64> = (0..n)
            .map(|k| if g.active[k] { g.weight[k] * u[k] * (1.0 + dt * lambda[j] * ubar[j]) } else { 0.0 })
            .collect();
        let mut rho: Vec<f64> = (0..n).map(|k| if g.active[k] { u[k] / ew[k] } else { 0.0 }).collect();
        a.solve(&rhs, &mut rho, SIM_CG_TOL)?;
        for k in 0..n {
            u_next[j][k] = if g.active[k] { ew[k] * rho[k] } else { 0.0 };
            if u_next[j][k] < 0.0 {
                clipped -= u_next[j][k] * g.weight[k];
                u_next[j][k] = 0.0;
            }
        }
    }
    Ok((u_next, clipped))
}

/// One step of size `cfg.dt`: chemicals first (implicit diffusion and decay,
/// explicit production), then the cells with the new chemicals.
pub fn step(state: &Field2D, cfg: &SimConfig) -> Result<StepOutcome> {
    let v = solve_chemicals(state, cfg, cfg.dt)?;
    let (u, clipped_mass) = advance_cells(state, &v, cfg, cfg.dt)?;
    let field = Field2D { u, v, ..state.clone() };
    Ok(StepOutcome { field, dt: cfg.dt, clipped_mass })
}

/// Local maximum of one cell species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub position: [f64; 2],
    pub height: f64,
}

#[derive(Debug, Clone)]
pub struct SpotReport {
    pub peaks: [Vec<Peak>; 2],
    pub masses: [f64; 2],
    /// Final `‖u^{n+1} − u^n‖_∞ / dt`.
    pub steady_residual: f64,
    pub time: f64,
    pub steps: usize,
    /// Whether the steady tolerance was reached before `t_end`.
    pub steady: bool,
    pub clipped_mass: f64,
}

impl SpotReport {
    /// Summary CSV with columns `species,x,y,height,mass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "species,x,y,height,mass")?;
        for j in 0..2 {
            for p in &self.peaks[j] {
                writeln!(
                    w,
                    "{},{:.9e},{:.9e},{:.9e},{:.9e}",
                    j + 1,
                    p.position[0],
                    p.position[1],
                    p.height,
                    self.masses[j]
                )?;
            }
        }
        Ok(())
    }
}

/// Nodes whose value is a maximum over their 8 neighbours and exceeds
/// `threshold`. Ties go to the node with the smallest index.
pub fn local_maxima(grid: &Grid, values: &[f64], threshold: f64) -> Vec<Peak> {
    let mut out = Vec::new();
    for k in (0..grid.len()).filter(|&k| grid.active[k]) {
        let x = values[k];
        if !(x > threshold) {
            continue;
        }
        let (i, j) = ((k % grid.px) as isize, (k / grid.px) as isize);
        let mut is_max = true;
        'scan: for dj in -1..=1isize {
            for di in -1..=1isize {
                let (ni, nj) = (i + di, j + dj);
                if (di, dj) == (0, 0) || ni < 0 || nj < 0 || ni >= grid.px as isize || nj >= grid.py as isize {
                    continue;
                }
                let l = grid.index(ni as usize, nj as usize);
                if !grid.active[l] {
                    continue;
                }
                if values[l] > x || (values[l] == x && l < k) {
                    is_max = false;
                    break 'scan;
                }
            }
        }
        if is_max {
            out.push(Peak { position: grid.node(k), height: x });
        }
    }
    out.sort_by(|a, b| b.height.total_cmp(&a.height));
    out
}

pub fn spot_report(field: &Field2D, params: &ModelParams) -> [Vec<Peak>; 2] {
    let ubar = params.ubar();
    [0, 1].map(|j| local_maxima(&field.grid, &field.u[j], 1.5 * ubar[j]))
}

/// A running simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub cfg: SimConfig,
    pub state: Field2D,
    pub time: f64,
    pub steps: usize,
    pub clipped_mass: f64,
    /// `‖u^{n+1} − u^n‖_∞ / dt` of the last step.
    pub rate: f64,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Simulation> {
        cfg.validate()?;
        let state = cfg.initial_field();
        Ok(Simulation::from_state(cfg, state))
    }

    pub fn from_state(cfg: SimConfig, state: Field2D) -> Simulation {
        Simulation { cfg, state, time: 0.0, steps: 0, clipped_mass: 0.0, rate: f64::INFINITY }
    }

    pub fn is_steady(&self) -> bool {
        self.rate < self.cfg.steady_tol
    }

    pub fn advance(&mut self) -> Result<()> {
        let remaining = self.cfg.t_end - self.time;
        let mut cfg = self.cfg.clone();
        cfg.dt = cfg.dt.min(remaining.max(1e-300));
        let out = step(&self.state, &cfg)?;
        let mut change: f64 = 0.0;
        let mut max_u: f64 = 0.0;
        for j in 0..2 {
            for (a, b) in out.field.u[j].iter().zip(&self.state.u[j]) {
                change = change.max((a - b).abs());
                max_u = max_u.max(*a);
            }
        }
        self.time += out.dt;
        self.steps += 1;
        self.clipped_mass += out.clipped_mass;
        if !(max_u <= BLOW_UP_LIMIT) {
            return Err(Error::BlowUpDetected { t: self.time, max_u });
        }
        self.rate = change / out.dt;
        self.state = out.field;
        Ok(())
    }

    /// Steps until steady or `t_end`, calling `observe` after every step.
    pub fn run_with(&mut self, mut observe: impl FnMut(&Simulation)) -> Result<()> {
        while self.time < self.cfg.t_end * (1.0 - 1e-12) && !self.is_steady() {
            self.advance()?;
            observe(self);
        }
        Ok(())
    }

    pub fn report(&self) -> SpotReport {
        SpotReport {
            peaks: spot_report(&self.state, &self.cfg.params),
            masses: [self.state.mass(0), self.state.mass(1)],
            steady_residual: self.rate,
            time: self.time,
            steps: self.steps,
            steady: self.is_steady(),
            clipped_mass: self.clipped_mass,
        }
    }
}

/// Integrates until steady or `t_end`. A run that does not settle is not an
/// error: the final state comes back with `steady == false`.
pub fn run_to_steady(cfg: &SimConfig) -> Result<(Field2D, SpotReport)> {
    let mut sim = Simulation::new(cfg.clone())?;
    sim.run_with(|_| {})?;
    let report = sim.report();
    Ok((sim.state, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    /// `‖a − b‖_2 / ‖b‖_2` per cell species.
    pub rel_l2: [f64; 2],
    /// `‖a − b‖_∞ / ‖b‖_∞` per cell species.
    pub rel_max: [f64; 2],
    /// Distance between the global maxima.
    pub location_offset: [f64; 2],
    /// Ratio of the global maxima, `max a / max b`.
    pub amplitude_ratio: [f64; 2],
}

fn same_grid(a: &Grid, b: &Grid) -> bool {
    a.domain == b.domain
}

/// Compares the cell densities of `sim` against a reference field `ans`.
pub fn compare(sim: &Field2D, ans: &Field2D) -> Result<Comparison> {
    if !Arc::ptr_eq(&sim.grid, &ans.grid) && !same_grid(&sim.grid, &ans.grid) {
        return Err(Error::GridMismatch(format!(
            "{} vs {}",
            sim.grid.domain.key(),
            ans.grid.domain.key()
        )));
    }
    let g = &*sim.grid;
    let ratio = |num: f64, den: f64| if den == 0.0 { if num == 0.0 { 0.0 } else { f64::INFINITY } } else { num / den };
    let mut out = Comparison { rel_l2: [0.0; 2], rel_max: [0.0; 2], location_offset: [0.0; 2], amplitude_ratio: [0.0; 2] };
    for j in 0..2 {
        let (a, b) = (&sim.u[j], &ans.u[j]);
        let diff2: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).collect();
        let b2: Vec<f64> = b.iter().map(|y| y * y).collect();
        out.rel_l2[j] = ratio(g.integrate(&diff2).sqrt(), g.integrate(&b2).sqrt());
        let dmax = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let bmax = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        out.rel_max[j] = ratio(dmax, bmax);
        let (ka, kb) = (sim.argmax_u(j), ans.argmax_u(j));
        let (pa, pb) = (g.node(ka), g.node(kb));
        out.location_offset[j] = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
        out.amplitude_ratio[j] = ratio(a[ka], b[kb]);
    }
    Ok(out)
}
