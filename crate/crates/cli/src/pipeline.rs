//! Stage orchestration, on-disk caches and the output manifest.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spotlab_core::ansatz::{assemble, stationary_residual, Field2D, SpotProfile};
use spotlab_core::greens::{shared_grid, GreenCache, GreenProvider};
use spotlab_core::liouville::{pohozaev_residual, solve_radial, RadialOptions};
use spotlab_core::model::{build_b_matrix, validate_assumptions};
use spotlab_core::pdesim::{compare, spot_report, Comparison, SimConfig, Simulation, SpotReport};
use spotlab_core::placement::{
    find_critical_points, random_seeds, refine_critical_point, CriticalPoint, PlacementOptions, SpotConfig,
};
use spotlab_core::sigma::{balance_residual, scan_arc, solve_sigma, write_scan_csv, SigmaOptions};
use spotlab_core::grid::Site;
use spotlab_core::{BMatrix, Domain2D, LiouvilleProfile};

use crate::config::{Config, Stage};

/// Outcome of one declared expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub stages: Vec<String>,
    pub files: Vec<FileEntry>,
    pub checks: Vec<CheckResult>,
}

impl Manifest {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Cache directory: `$SPOTLAB_CACHE`, else `.spotlab-cache` in the working
/// directory.
pub fn default_cache_dir() -> PathBuf {
    std::env::var_os("SPOTLAB_CACHE").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".spotlab-cache"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stages to execute: the configured ones up to `stop`, plus everything
/// they depend on, in pipeline order.
pub fn plan(configured: &[Stage], stop: Option<Stage>) -> Vec<Stage> {
    let mut want: BTreeSet<Stage> = configured.iter().copied().filter(|s| stop.is_none_or(|x| *s <= x)).collect();
    if let Some(x) = stop {
        want.insert(x);
    }
    let mut todo: Vec<Stage> = want.iter().copied().collect();
    while let Some(s) = todo.pop() {
        for r in s.requires() {
            if want.insert(*r) {
                todo.push(*r);
            }
        }
    }
    want.into_iter().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SigmaCache {
    sigma: [f64; 2],
    alpha: [f64; 2],
    iterations: usize,
    residuals: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SimCache {
    time: f64,
    steps: usize,
    rate: f64,
    clipped_mass: f64,
}

#[derive(Serialize)]
struct ModelOut {
    params: spotlab_core::ModelParams,
    epsilon: f64,
    gamma: f64,
    b: [[f64; 2]; 2],
    d: f64,
    positive_definite: bool,
    assumptions: spotlab_core::AssumptionReport,
}

#[derive(Serialize)]
struct ProfileOut {
    alpha: [f64; 2],
    sigma: [f64; 2],
    m: [f64; 2],
    mu_tilde: [f64; 2],
    pohozaev_residual: f64,
}

#[derive(Serialize)]
struct SigmaOut {
    sigma: [f64; 2],
    m: [f64; 2],
    alpha: [f64; 2],
    mu_tilde: [f64; 2],
    iterations: usize,
    residuals: [f64; 2],
    balance_residual: f64,
    pohozaev_residual: f64,
    brackets: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct GreenOut {
    xi: [f64; 2],
    theta: f64,
    self_interaction: f64,
    min_green: f64,
    integral: f64,
    file: String,
}

#[derive(Serialize)]
struct PlacementOut {
    points: Vec<[f64; 2]>,
    energy: Option<f64>,
    gradient: Vec<f64>,
    hessian_eigenvalues: Vec<f64>,
    refined: bool,
    critical_points: usize,
}

#[derive(Serialize)]
struct AnsatzOut {
    epsilon: f64,
    amplitude: [f64; 2],
    mass: [f64; 2],
    excess_mass: [f64; 2],
    predicted_mass: [f64; 2],
    chat: Vec<[f64; 2]>,
    mu: Vec<[f64; 2]>,
    residual_max: [f64; 2],
    residual_interior_max: [f64; 2],
}

#[derive(Serialize)]
struct SimOut {
    time: f64,
    steps: usize,
    steady: bool,
    steady_residual: f64,
    clipped_mass: f64,
    mass: [f64; 2],
    excess_mass: [f64; 2],
    max_position: [[f64; 2]; 2],
    max_height: [f64; 2],
    min_chemical: [f64; 2],
}

#[derive(Serialize)]
struct CompareOut {
    comparison: Comparison,
    offset_cells: [f64; 2],
    mass_sim: [f64; 2],
    excess_mass_sim: [f64; 2],
    mass_ansatz: [f64; 2],
    predicted_mass: [f64; 2],
}

/// Intermediate results handed between stages.
#[derive(Default)]
struct State {
    b: Option<BMatrix>,
    sigma: Option<[f64; 2]>,
    profile: Option<LiouvilleProfile>,
    greens: Option<GreenCache>,
    placement: Option<SpotConfig>,
    ansatz: Option<Field2D>,
    predicted_mass: Option<[f64; 2]>,
    sim: Option<(Field2D, SpotReport)>,
    comparison: Option<Comparison>,
}

pub struct Pipeline {
    pub cfg: Config,
    pub out: PathBuf,
    pub cache: PathBuf,
    pub verbose: bool,
    files: Vec<PathBuf>,
    state: State,
}

impl Pipeline {
    pub fn new(cfg: Config, out: impl Into<PathBuf>, cache: impl Into<PathBuf>) -> Pipeline {
        Pipeline { cfg, out: out.into(), cache: cache.into(), verbose: false, files: Vec::new(), state: State::default() }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Runs the planned stages, evaluates the expectations and writes
    /// `manifest.toml`.
    pub fn run(&mut self, stop: Option<Stage>) -> Result<Manifest> {
        self.cfg.validate()?;
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        fs::create_dir_all(&self.cache).with_context(|| format!("creating {}", self.cache.display()))?;
        let stages = plan(&self.cfg.pipeline.stages, stop);
        let text = self.cfg.to_toml()?;
        self.write_file("config.toml", |w| Ok(w.write_all(text.as_bytes())?))?;
        for &stage in &stages {
            let start = Instant::now();
            self.run_stage(stage).with_context(|| format!("stage {}", stage.name()))?;
            self.log(format!("[{}] done in {:.2?}", stage.name(), start.elapsed()));
        }
        let checks = self.evaluate()?;
        let mut files = Vec::new();
        for p in &self.files {
            let bytes = fs::read(p)?;
            let rel = p.strip_prefix(&self.out).unwrap_or(p);
            files.push(FileEntry {
                path: rel.to_string_lossy().into_owned(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        let manifest = Manifest {
            scenario: self.cfg.name.clone(),
            stages: stages.iter().map(|s| s.name().to_string()).collect(),
            files,
            checks,
        };
        let text = toml::to_string(&manifest)?;
        fs::write(self.out.join("manifest.toml"), text)?;
        Ok(manifest)
    }

    fn write_file(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<PathBuf> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        body(&mut w)?;
        w.flush()?;
        if !self.files.contains(&path) {
            self.files.push(path.clone());
        }
        Ok(path)
    }

    fn write_toml<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = toml::to_string(value)?;
        self.write_file(name, |w| Ok(w.write_all(text.as_bytes())?))?;
        Ok(())
    }

    fn domain(&self) -> Result<Domain2D> {
        self.cfg.domain.domain()
    }

    fn b(&self) -> Result<&BMatrix> {
        self.state.b.as_ref().ok_or_else(|| anyhow!("interaction matrix not available"))
    }

    fn profile(&self) -> Result<&LiouvilleProfile> {
        self.state.profile.as_ref().ok_or_else(|| anyhow!("σ stage has not run"))
    }

    fn greens(&mut self) -> Result<&GreenCache> {
        if self.state.greens.is_none() {
            let domain = self.domain()?;
            self.state.greens = Some(GreenCache::with_dir(domain, self.cache.join("greens")));
        }
        Ok(self.state.greens.as_ref().expect("just set"))
    }

    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Model => self.stage_model(),
            Stage::Liouville => self.stage_liouville(),
            Stage::Sigma => self.stage_sigma(),
            Stage::Greens => self.stage_greens(),
            Stage::Place => self.stage_place(),
            Stage::Ansatz => self.stage_ansatz(),
            Stage::Simulate => self.stage_simulate(),
            Stage::Compare => self.stage_compare(),
        }
    }

    fn stage_model(&mut self) -> Result<()> {
        let params = self.cfg.params();
        let report = validate_assumptions(&params);
        if !report.all_pass() && !self.cfg.model.allow_override {
            bail!("hypotheses {:?} fail; set model.allow_override to continue", report.failures());
        }
        let b = build_b_matrix(&params, true)?;
        let out = ModelOut {
            params,
            epsilon: params.epsilon(),
            gamma: params.gamma(),
            b: b.rows(),
            d: b.d,
            positive_definite: b.is_positive_definite(),
            assumptions: report,
        };
        self.write_toml("model.toml", &out)?;
        self.state.b = Some(b);
        Ok(())
    }

    fn stage_liouville(&mut self) -> Result<()> {
        let b = *self.b()?;
        let p = solve_radial(&b, [0.0, 0.0], &RadialOptions::default())?;
        self.write_file("liouville_profile.csv", |w| Ok(write_profile_csv(&p, w)?))?;
        let out = ProfileOut {
            alpha: p.alpha,
            sigma: p.sigma,
            m: p.m,
            mu_tilde: p.mu_tilde,
            pohozaev_residual: pohozaev_residual(&p),
        };
        self.write_toml("liouville.toml", &out)
    }

    fn stage_sigma(&mut self) -> Result<()> {
        let b = *self.b()?;
        let params = self.cfg.params();
        let key = sha256_hex(toml::to_string(&self.cfg.model)?.as_bytes());
        let path = self.cache.join(format!("sigma_{}.toml", &key[..16]));
        let cached: Option<SigmaCache> = fs::read_to_string(&path).ok().and_then(|t| toml::from_str(&t).ok());
        let entry = match cached {
            Some(c) => {
                self.log("[sigma] cache hit");
                c
            }
            None => {
                let sol = solve_sigma(&params, &b, &SigmaOptions::default())?;
                let c = SigmaCache {
                    sigma: sol.sigma(),
                    alpha: sol.profile.alpha,
                    iterations: sol.iterations,
                    residuals: sol.residuals,
                };
                fs::write(&path, toml::to_string(&c)?)?;
                c
            }
        };
        // the profile is always rebuilt from the cached center values, so
        // first and repeated runs produce identical outputs
        let profile = solve_radial(&b, entry.alpha, &RadialOptions::default())?;
        let mut brackets = Vec::new();
        if self.cfg.pipeline.scan_points > 0 {
            let samples = scan_arc(&params, &b, self.cfg.pipeline.scan_points, &SigmaOptions::default());
            brackets = spotlab_core::sigma::sign_brackets(&samples);
            self.write_file("sigma_scan.csv", |w| Ok(write_scan_csv(&samples, w)?))?;
        }
        self.write_file("profile.csv", |w| Ok(write_profile_csv(&profile, w)?))?;
        let out = SigmaOut {
            sigma: entry.sigma,
            m: profile.m,
            alpha: entry.alpha,
            mu_tilde: profile.mu_tilde,
            iterations: entry.iterations,
            residuals: entry.residuals,
            balance_residual: balance_residual(&params, &profile),
            pohozaev_residual: pohozaev_residual(&profile),
            brackets,
        };
        self.write_toml("sigma.toml", &out)?;
        self.state.sigma = Some(entry.sigma);
        self.state.profile = Some(profile);
        Ok(())
    }

    fn anchor_points(&self) -> Result<Vec<[f64; 2]>> {
        if let Some(p) = &self.cfg.spots.points {
            return Ok(p.clone());
        }
        let (x, y) = self.domain()?.bounds();
        Ok(vec![[0.5 * (x[0] + x[1]), 0.5 * (y[0] + y[1])]])
    }

    fn stage_greens(&mut self) -> Result<()> {
        let points = self.anchor_points()?;
        let mut summary = Vec::new();
        for (k, xi) in points.into_iter().enumerate() {
            let table = self.greens()?.table(xi)?;
            let file = format!("green_{k}.csv");
            self.write_file(&file, |w| Ok(table.write_csv(w)?))?;
            summary.push(GreenOut {
                xi,
                theta: table.theta,
                self_interaction: table.self_interaction(),
                min_green: table.min_green(),
                integral: table.integral(),
                file,
            });
        }
        #[derive(Serialize)]
        struct Tables {
            tables: Vec<GreenOut>,
        }
        self.write_toml("greens.toml", &Tables { tables: summary })
    }

    fn stage_place(&mut self) -> Result<()> {
        let (m, o) = (self.cfg.spots.m, self.cfg.spots.o);
        let domain = self.domain()?;
        let opts = PlacementOptions::default();
        // the Newton search touches many source points; keep those tables
        // in memory only
        let search = GreenCache::new(domain);
        let seeds = random_seeds(&domain, m, o, self.cfg.spots.seeds, self.cfg.seed);
        let found = if seeds.is_empty() { Vec::new() } else { find_critical_points(&search, m, o, &seeds, &opts).unwrap_or_default() };
        let chosen: Option<CriticalPoint>;
        let points: Vec<[f64; 2]>;
        match &self.cfg.spots.points {
            Some(start) => {
                // corners are fixed points of the boundary motion; they are
                // taken as given
                let at_corner = start.iter().any(|p| domain.site(*p) == Some(Site::Corner));
                chosen = if at_corner { None } else { refine_critical_point(&search, o, start, &opts).ok() };
                points = chosen.as_ref().map(|c| c.config.points.clone()).unwrap_or_else(|| start.clone());
            }
            None => {
                chosen = found.first().cloned();
                points = chosen
                    .as_ref()
                    .map(|c| c.config.points.clone())
                    .ok_or_else(|| anyhow!("no critical point found from {} seeds", seeds.len()))?;
            }
        }
        self.write_file("critical_points.csv", |w| {
            writeln!(w, "index,energy,morse_index,min_eigenvalue,gradient_norm,points")?;
            for (i, cp) in found.iter().enumerate() {
                let gnorm = cp.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
                let lmin = cp.hessian_eigenvalues.first().copied().unwrap_or(f64::NAN);
                let pts: Vec<String> = cp.config.points.iter().map(|p| format!("{:.9e} {:.9e}", p[0], p[1])).collect();
                writeln!(w, "{i},{:.12e},{},{:.6e},{:.6e},{}", cp.energy, cp.index(), lmin, gnorm, pts.join(";"))?;
            }
            Ok(())
        })?;
        let out = PlacementOut {
            points: points.clone(),
            energy: chosen.as_ref().map(|c| c.energy),
            gradient: chosen.as_ref().map(|c| c.gradient.clone()).unwrap_or_default(),
            hessian_eigenvalues: chosen.as_ref().map(|c| c.hessian_eigenvalues.clone()).unwrap_or_default(),
            refined: chosen.is_some(),
            critical_points: found.len(),
        };
        self.write_toml("placement.toml", &out)?;
        self.state.placement = Some(SpotConfig::new(&domain, points)?);
        Ok(())
    }

    fn stage_ansatz(&mut self) -> Result<()> {
        let params = self.cfg.params();
        let spot = SpotProfile::new(self.profile()?, &params, self.cfg.spots.corrections)?;
        let cfg = self.state.placement.clone().ok_or_else(|| anyhow!("placement stage has not run"))?;
        let greens = self.greens()?;
        let cfg = cfg.with_interactions(spot.profile.m, greens)?;
        let field = assemble(&spot, &cfg, greens, &params)?;
        let residual = stationary_residual(&field, &params)?;
        let eps = params.epsilon();
        let mut predicted = [0.0; 2];
        for j in 0..2 {
            predicted[j] = cfg.sites.iter().map(|s| eps * eps * spot.amplitude[j] * s.angle() * spot.profile.sigma[j]).sum();
        }
        self.write_file("ansatz.csv", |w| Ok(field.write_csv(w)?))?;
        self.write_file("ansatz.vtk", |w| Ok(field.write_vtk(w)?))?;
        let out = AnsatzOut {
            epsilon: eps,
            amplitude: spot.amplitude,
            mass: [field.mass(0), field.mass(1)],
            excess_mass: [field.excess_mass(0), field.excess_mass(1)],
            predicted_mass: predicted,
            chat: cfg.chat.clone(),
            mu: cfg.mu.clone(),
            residual_max: residual.norms.map(|n| n.max),
            residual_interior_max: residual.norms.map(|n| n.interior_max),
        };
        self.write_toml("ansatz.toml", &out)?;
        self.state.ansatz = Some(field);
        self.state.predicted_mass = Some(predicted);
        Ok(())
    }

    fn stage_simulate(&mut self) -> Result<()> {
        let sim_cfg = self.cfg.sim_config()?;
        let every = self.cfg.simulation.snapshot_every;
        let key = sha256_hex(format!("{sim_cfg:?}").as_bytes());
        let base = self.cache.join(format!("sim_{}", &key[..16]));
        let cached = if every == 0 { load_sim(&base, &sim_cfg) } else { None };
        let (state, meta) = match cached {
            Some((state, meta)) => {
                self.log("[simulate] cache hit");
                (state, meta)
            }
            None => {
                let mut sim = Simulation::new(sim_cfg.clone())?;
                let mut snapshots = Vec::new();
                let verbose = self.verbose;
                let mut next_log = 1.0;
                sim.run_with(|s| {
                    if every > 0 && s.steps % every == 0 {
                        snapshots.push((s.steps, s.state.clone()));
                    }
                    if verbose && s.time >= next_log {
                        next_log *= 2.0;
                        eprintln!("[simulate] t = {:.2} steps = {} rate = {:.3e}", s.time, s.steps, s.rate);
                    }
                })?;
                for (steps, f) in snapshots {
                    self.write_file(&format!("snapshots/step_{steps:07}.vtk"), |w| Ok(f.write_vtk(w)?))?;
                }
                let meta = SimCache { time: sim.time, steps: sim.steps, rate: sim.rate, clipped_mass: sim.clipped_mass };
                if every == 0 {
                    store_sim(&base, &sim.state, &meta)?;
                }
                (sim.state, meta)
            }
        };
        let report = SpotReport {
            peaks: spot_report(&state, &sim_cfg.params),
            masses: [state.mass(0), state.mass(1)],
            steady_residual: meta.rate,
            time: meta.time,
            steps: meta.steps,
            steady: meta.rate < sim_cfg.steady_tol,
            clipped_mass: meta.clipped_mass,
        };
        self.write_file("field.csv", |w| Ok(state.write_csv(w)?))?;
        self.write_file("field.vtk", |w| Ok(state.write_vtk(w)?))?;
        self.write_file("spots.csv", |w| Ok(report.write_csv(w)?))?;
        let g = &state.grid;
        let kmax = [state.argmax_u(0), state.argmax_u(1)];
        let min_v = |j: usize| (0..g.len()).filter(|&k| g.active[k]).map(|k| state.v[j][k]).fold(f64::INFINITY, f64::min);
        let out = SimOut {
            time: report.time,
            steps: report.steps,
            steady: report.steady,
            steady_residual: report.steady_residual,
            clipped_mass: report.clipped_mass,
            mass: report.masses,
            excess_mass: [state.excess_mass(0), state.excess_mass(1)],
            max_position: kmax.map(|k| g.node(k)),
            max_height: [state.u[0][kmax[0]], state.u[1][kmax[1]]],
            min_chemical: [min_v(0), min_v(1)],
        };
        self.write_toml("simulate.toml", &out)?;
        self.state.sim = Some((state, report));
        Ok(())
    }

    fn stage_compare(&mut self) -> Result<()> {
        let ans = self.state.ansatz.as_ref().ok_or_else(|| anyhow!("ansatz stage has not run"))?;
        let (sim, _) = self.state.sim.as_ref().ok_or_else(|| anyhow!("simulate stage has not run"))?;
        let c = compare(sim, ans)?;
        let cell = self.cfg.cell()?;
        let out = CompareOut {
            offset_cells: c.location_offset.map(|d| d / cell),
            mass_sim: [sim.mass(0), sim.mass(1)],
            excess_mass_sim: [sim.excess_mass(0), sim.excess_mass(1)],
            mass_ansatz: [ans.mass(0), ans.mass(1)],
            predicted_mass: self.state.predicted_mass.unwrap_or([f64::NAN; 2]),
            comparison: c.clone(),
        };
        self.write_toml("compare.toml", &out)?;
        self.state.comparison = Some(c);
        Ok(())
    }

    fn evaluate(&self) -> Result<Vec<CheckResult>> {
        let e = &self.cfg.expect;
        let cell = self.cfg.cell()?;
        let mut out = Vec::new();
        let mut push = |name: &str, passed: bool, detail: String| {
            out.push(CheckResult { name: name.into(), passed, detail });
        };
        if let (Some(want), Some(got)) = (e.sigma, self.state.sigma) {
            let tol = e.sigma_tol.unwrap_or(1e-6);
            let err = (got[0] - want[0]).abs().max((got[1] - want[1]).abs());
            push("sigma", err <= tol, format!("sigma = {got:?}, expected {want:?}, error {err:.3e} (tol {tol:.1e})"));
        }
        if let Some((sim, report)) = &self.state.sim {
            let g = &sim.grid;
            let pos = [0, 1].map(|j| g.node(sim.argmax_u(j)));
            if let Some(at) = e.spot_at {
                let mut ok = true;
                let mut parts = Vec::new();
                for j in 0..2 {
                    match report.peaks[j].first() {
                        Some(p) => {
                            let d = (p.position[0] - at[0]).hypot(p.position[1] - at[1]);
                            ok &= d <= cell * (1.0 + 1e-9);
                            parts.push(format!("u{} peak {:.3} at {:?} ({:.2} cells off)", j + 1, p.height, p.position, d / cell));
                        }
                        None => {
                            ok = false;
                            parts.push(format!("u{} has no spot", j + 1));
                        }
                    }
                }
                push("spot_at", ok, parts.join("; "));
            }
            if let Some(want) = e.steady {
                push(
                    "steady",
                    report.steady == want,
                    format!("residual {:.3e} at t = {:.2} after {} steps", report.steady_residual, report.time, report.steps),
                );
            }
            if let Some(min) = e.min_separation {
                let d = (pos[0][0] - pos[1][0]).hypot(pos[0][1] - pos[1][1]);
                push("min_separation", d >= min, format!("u1 max at {:?}, u2 max at {:?}, distance {d:.4}", pos[0], pos[1]));
            }
            if e.positive_chemicals == Some(true) {
                let min = (0..g.len()).filter(|&k| g.active[k]).map(|k| sim.v[0][k].min(sim.v[1][k])).fold(f64::INFINITY, f64::min);
                push("positive_chemicals", min > 0.0, format!("min v = {min:.4e}"));
            }
        }
        if let (Some(n), Some(c)) = (e.max_offset_cells, &self.state.comparison) {
            let worst = c.location_offset[0].max(c.location_offset[1]) / cell;
            push("max_offset_cells", worst <= n, format!("offsets {:?} ({worst:.2} cells)", c.location_offset));
        }
        if let (Some(f), Some((sim, _)), Some(pred)) = (e.mass_factor, &self.state.sim, self.state.predicted_mass) {
            let ratio = [0, 1].map(|j| sim.excess_mass(j) / pred[j]);
            let ok = ratio.iter().all(|r| *r >= 1.0 / f && *r <= f);
            push("mass_factor", ok, format!("excess mass / predicted = {ratio:?}"));
        }
        Ok(out)
    }
}

/// Radial profile samples, columns `r,gamma1,gamma2,mass1,mass2`.
pub fn write_profile_csv(p: &LiouvilleProfile, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "r,gamma1,gamma2,mass1,mass2")?;
    let r = p.r_grid();
    let (g1, g2) = (p.gamma_samples(0), p.gamma_samples(1));
    let (m1, m2) = (p.cumulative_mass(0), p.cumulative_mass(1));
    for i in 0..r.len() {
        writeln!(w, "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", r[i], g1[i], g2[i], m1[i], m2[i])?;
    }
    Ok(())
}

fn store_sim(base: &Path, f: &Field2D, meta: &SimCache) -> Result<()> {
    let mut bytes = Vec::with_capacity(32 * f.grid.len());
    for s in f.u.iter().chain(f.v.iter()) {
        for x in s {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(base.with_extension("bin"), bytes)?;
    fs::write(base.with_extension("toml"), toml::to_string(meta)?)?;
    Ok(())
}

fn load_sim(base: &Path, cfg: &SimConfig) -> Option<(Field2D, SimCache)> {
    let meta: SimCache = toml::from_str(&fs::read_to_string(base.with_extension("toml")).ok()?).ok()?;
    let bytes = fs::read(base.with_extension("bin")).ok()?;
    let grid = shared_grid(&cfg.domain);
    let n = grid.len();
    if bytes.len() != 32 * n {
        return None;
    }
    let series: Vec<Vec<f64>> = bytes
        .chunks_exact(8 * n)
        .map(|c| c.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
        .collect();
    let [u1, u2, v1, v2]: [Vec<f64>; 4] = series.try_into().ok()?;
    let f = Field2D { grid: Arc::clone(&grid), u: [u1, u2], v: [v1, v2], epsilon: cfg.params.epsilon(), config: None };
    Some((f, meta))
}
