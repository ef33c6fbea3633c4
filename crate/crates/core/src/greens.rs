//! Neumann Green's function of the reduced-wave operator,
//!
//! ```text
//!     ΔG − G = −δ_ξ  in Ω,      ∂G/∂n = 0  on ∂Ω,
//! ```
//!
//! split as `G = −(1/θ) log|x − ξ| + H` where `θ` is the opening angle of
//! `Ω` at `ξ` (`2π` inside, `π` on an edge, `π/2` at a rectangle corner).
//! The regular part solves
//!
//! ```text
//!     −ΔH + H = (1/θ) log|x − ξ|,      ∂H/∂n = (1/θ) (x − ξ)·n / |x − ξ|²,
//! ```
//!
//! which is discretized on the finite-volume grid of [`crate::grid`]. Cell
//! integrals of the logarithm and the boundary data are integrated in closed
//! form (the flux through a straight face equals the angle it subtends at
//! `ξ`), so the source may sit anywhere, nodes included.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::grid::{Domain2D, Grid, Shape, Site};
use crate::linalg::solve_grid;

/// Relative residual for the linear solves.
pub const CG_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct GreenTable {
    pub grid: Arc<Grid>,
    pub xi: [f64; 2],
    pub site: Site,
    /// Opening angle `θ` at the source.
    pub theta: f64,
    /// Nodal values of `H(·; ξ)`.
    pub h_values: Vec<f64>,
}

/// Antiderivative `∫∫ log √(x² + y²) dx dy`.
fn log_antiderivative(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    if r2 == 0.0 {
        return 0.0;
    }
    let mut f = x * y * (0.5 * r2.ln() - 1.5);
    if x != 0.0 {
        f += 0.5 * x * x * (y / x).atan();
    }
    if y != 0.0 {
        f += 0.5 * y * y * (x / y).atan();
    }
    f
}

/// `∫_cell log|x − ξ| dx` over the box `[x0, x1] × [y0, y1]`, exact.
fn cell_log_integral(c: [f64; 4], xi: [f64; 2]) -> f64 {
    let (x0, x1) = (c[0] - xi[0], c[1] - xi[0]);
    let (y0, y1) = (c[2] - xi[1], c[3] - xi[1]);
    log_antiderivative(x1, y1) - log_antiderivative(x0, y1) - log_antiderivative(x1, y0)
        + log_antiderivative(x0, y0)
}

/// Signed angle subtended at `xi` by the segment `a → b`, oriented so that
/// it is positive when `xi` lies on the inner side of `normal`.
fn subtended_angle(a: [f64; 2], b: [f64; 2], normal: [f64; 2], xi: [f64; 2]) -> f64 {
    let (ax, ay) = (a[0] - xi[0], a[1] - xi[1]);
    let (bx, by) = (b[0] - xi[0], b[1] - xi[1]);
    let side = ax * normal[0] + ay * normal[1];
    if side == 0.0 {
        return 0.0;
    }
    let angle = (ax * by - ay * bx).atan2(ax * bx + ay * by).abs();
    angle * side.signum()
}

fn grid_cache() -> &'static Mutex<HashMap<String, Arc<Grid>>> {
    static GRIDS: std::sync::OnceLock<Mutex<HashMap<String, Arc<Grid>>>> = std::sync::OnceLock::new();
    GRIDS.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared grid for a domain; grids are reused across tables.
pub fn shared_grid(domain: &Domain2D) -> Arc<Grid> {
    let mut map = grid_cache().lock().unwrap_or_else(|e| e.into_inner());
    map.entry(domain.key())
        .or_insert_with(|| Arc::new(Grid::new(domain)))
        .clone()
}

/// Right-hand side `∫_cell (1/θ) log|x − ξ| + ∫_faces ∂H/∂n` per node.
fn regular_rhs(grid: &Grid, xi: [f64; 2], theta: f64) -> Vec<f64> {
    let mut b: Vec<f64> = (0..grid.len())
        .map(|k| {
            if grid.active[k] {
                cell_log_integral(grid.cell[k], xi) / theta
            } else {
                0.0
            }
        })
        .collect();
    for f in &grid.faces {
        b[f.node] += subtended_angle(f.a, f.b, f.normal, xi) / theta;
    }
    b
}

pub fn solve_regular_part(domain: &Domain2D, xi: [f64; 2]) -> Result<GreenTable> {
    let site = domain.site(xi).ok_or(Error::OutOfDomain(xi[0], xi[1]))?;
    if matches!(domain.shape, Shape::Disk { .. }) && site != Site::Interior {
        return Err(Error::InvalidInput("disk domains take interior sources only".into()));
    }
    let theta = site.angle();
    let grid = shared_grid(domain);
    let rhs = regular_rhs(&grid, xi, theta);
    let mut h_values = vec![0.0; grid.len()];
    solve_grid(&grid, 1.0, 1.0, &rhs, &mut h_values, CG_TOL)?;
    Ok(GreenTable { grid, xi, site, theta, h_values })
}

impl GreenTable {
    pub fn domain(&self) -> &Domain2D {
        &self.grid.domain
    }

    /// Coefficient of the logarithmic kernel, `1/θ`.
    pub fn kernel_weight(&self) -> f64 {
        1.0 / self.theta
    }

    pub fn regular_at(&self, x: [f64; 2]) -> Result<f64> {
        self.grid.interpolate(&self.h_values, x)
    }

    pub fn green_at(&self, x: [f64; 2]) -> Result<f64> {
        let r = (x[0] - self.xi[0]).hypot(x[1] - self.xi[1]);
        if r == 0.0 {
            return Err(Error::SingularRhs(x[0], x[1]));
        }
        Ok(-r.ln() / self.theta + self.regular_at(x)?)
    }

    /// `H(ξ; ξ)`.
    pub fn self_interaction(&self) -> f64 {
        self.regular_at(self.xi).expect("source lies in the domain")
    }

    /// Nodal values of `G`, using cell averages of the kernel so that the
    /// node at the source stays finite.
    pub fn green_nodal(&self) -> Vec<f64> {
        let g = &self.grid;
        (0..g.len())
            .map(|k| {
                if !g.active[k] {
                    return 0.0;
                }
                let avg_log = cell_log_integral(g.cell[k], self.xi) / g.weight[k];
                -avg_log / self.theta + self.h_values[k]
            })
            .collect()
    }

    /// `∫_Ω G dx` by the nodal rule with cell-averaged kernel.
    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.green_nodal())
    }

    /// Smallest nodal value of `G` (the empirical positive lower bound).
    pub fn min_green(&self) -> f64 {
        let g = self.green_nodal();
        (0..g.len())
            .filter(|&k| self.grid.active[k])
            .map(|k| g[k])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.domain();
        match d.shape {
            Shape::Rectangle { x, y } => {
                writeln!(w, "# shape=rect {:e} {:e} {:e} {:e}", x[0], x[1], y[0], y[1])?
            }
            Shape::Disk { center, radius } => {
                writeln!(w, "# shape=disk {:e} {:e} {:e}", center[0], center[1], radius)?
            }
        }
        writeln!(w, "# res={} {}", d.nx, d.ny)?;
        writeln!(w, "# xi={:e} {:e}", self.xi[0], self.xi[1])?;
        writeln!(w, "# theta={:e}", self.theta)?;
        writeln!(w, "x,y,active,h")?;
        for k in 0..self.grid.len() {
            let p = self.grid.node(k);
            writeln!(w, "{:e},{:e},{},{:e}", p[0], p[1], self.grid.active[k] as u8, self.h_values[k])?;
        }
        Ok(())
    }

    /// Reads a table written by [`GreenTable::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<GreenTable> {
        let bad = |m: &str| Error::InvalidInput(format!("green table: {m}"));
        let mut shape = None;
        let mut res = None;
        let mut xi = None;
        let mut values = Vec::new();
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("unparsable number")))
                .collect()
        };
        for line in r.lines() {
            let line = line.map_err(|e| bad(&e.to_string()))?;
            if let Some(rest) = line.strip_prefix("# shape=") {
                let (kind, args) = rest.split_once(' ').ok_or_else(|| bad("shape"))?;
                let v = nums(args)?;
                shape = Some(match (kind, v.as_slice()) {
                    ("rect", [a, b, c, d]) => Shape::Rectangle { x: [*a, *b], y: [*c, *d] },
                    ("disk", [a, b, c]) => Shape::Disk { center: [*a, *b], radius: *c },
                    _ => return Err(bad("shape")),
                });
            } else if let Some(rest) = line.strip_prefix("# res=") {
                let v: Vec<usize> = rest.split_whitespace().filter_map(|t| t.parse().ok()).collect();
                res = Some((*v.first().ok_or_else(|| bad("res"))?, *v.get(1).ok_or_else(|| bad("res"))?));
            } else if let Some(rest) = line.strip_prefix("# xi=") {
                let v = nums(rest)?;
                xi = Some([v[0], v[1]]);
            } else if line.starts_with('#') || line.starts_with('x') || line.is_empty() {
                continue;
            } else {
                let h = line.rsplit(',').next().ok_or_else(|| bad("row"))?;
                values.push(h.parse::<f64>().map_err(|_| bad("row"))?);
            }
        }
        let (shape, (nx, ny), xi) = (
            shape.ok_or_else(|| bad("missing shape"))?,
            res.ok_or_else(|| bad("missing res"))?,
            xi.ok_or_else(|| bad("missing xi"))?,
        );
        let domain = Domain2D { shape, nx, ny };
        let grid = shared_grid(&domain);
        if values.len() != grid.len() {
            return Err(bad("row count does not match the resolution"));
        }
        let site = domain.site(xi).ok_or(Error::OutOfDomain(xi[0], xi[1]))?;
        Ok(GreenTable { grid, xi, site, theta: site.angle(), h_values: values })
    }
}

/// Source of Green tables for arbitrary source points on one domain.
pub trait GreenProvider: Sync {
    fn domain(&self) -> &Domain2D;
    fn table(&self, xi: [f64; 2]) -> Result<Arc<GreenTable>>;
}

/// Tables memoized in memory and, optionally, as CSV files in a directory.
pub struct GreenCache {
    domain: Domain2D,
    dir: Option<PathBuf>,
    tables: Mutex<HashMap<(u64, u64), Arc<GreenTable>>>,
}

impl GreenCache {
    pub fn new(domain: Domain2D) -> Self {
        GreenCache { domain, dir: None, tables: Mutex::new(HashMap::new()) }
    }

    pub fn with_dir(domain: Domain2D, dir: impl AsRef<Path>) -> Self {
        GreenCache { dir: Some(dir.as_ref().to_path_buf()), ..Self::new(domain) }
    }

    pub fn file_name(&self, xi: [f64; 2]) -> String {
        format!(
            "green_{}_{:016x}_{:016x}.csv",
            self.domain.key(),
            xi[0].to_bits(),
            xi[1].to_bits()
        )
    }

    /// Number of tables currently held in memory.
    pub fn len(&self) -> usize {
        self.tables.lock().map(|t| t.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn load_or_solve(&self, xi: [f64; 2]) -> Result<GreenTable> {
        if let Some(dir) = &self.dir {
            let path = dir.join(self.file_name(xi));
            if let Ok(f) = fs::File::open(&path) {
                if let Ok(t) = GreenTable::read_csv(BufReader::new(f)) {
                    if t.xi == xi && *t.domain() == self.domain {
                        return Ok(t);
                    }
                }
            }
            let t = solve_regular_part(&self.domain, xi)?;
            let io = |e: std::io::Error| Error::InvalidInput(format!("cache {}: {e}", path.display()));
            fs::create_dir_all(dir).map_err(io)?;
            let mut out = std::io::BufWriter::new(fs::File::create(&path).map_err(io)?);
            t.write_csv(&mut out).map_err(io)?;
            out.flush().map_err(io)?;
            return Ok(t);
        }
        solve_regular_part(&self.domain, xi)
    }
}

impl GreenProvider for GreenCache {
    fn domain(&self) -> &Domain2D {
        &self.domain
    }

    fn table(&self, xi: [f64; 2]) -> Result<Arc<GreenTable>> {
        let key = (xi[0].to_bits(), xi[1].to_bits());
        if let Some(t) = self.tables.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(t.clone());
        }
        // solve outside the lock; a concurrent duplicate solve is harmless
        let t = Arc::new(self.load_or_solve(xi)?);
        let mut map = self.tables.lock().unwrap_or_else(|e| e.into_inner());
        Ok(map.entry(key).or_insert(t).clone())
    }
}
