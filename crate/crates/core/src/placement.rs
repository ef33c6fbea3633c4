//! Spot configurations and the reduced interaction energy
//!
//! ```text
//!     J_m(ξ) = Σ_k c̄_k² H(ξ_k, ξ_k) + Σ_{k≠l} c̄_k c̄_l G(ξ_k, ξ_l),
//! ```
//!
//! whose critical points predict spot locations. The weight `c̄_k = θ_k/π`
//! is 2 for interior spots, 1 on an edge and 1/2 at a corner of a rectangle.
//!
//! Critical points are found by Newton's method on the central-difference
//! gradient (step of two grid cells). Interior spots move in the plane,
//! boundary spots along the perimeter of a rectangle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::greens::GreenProvider;
use crate::grid::{Domain2D, Shape, Site};
use crate::linalg::{solve_dense, symmetric_eigenvalues};

#[derive(Debug, Clone, PartialEq)]
pub struct SpotConfig {
    pub points: Vec<[f64; 2]>,
    pub sites: Vec<Site>,
    pub cbar: Vec<f64>,
    /// `ĉ_jk = θ_k m_j`, indexed `[k][j]`; empty until interactions are set.
    pub chat: Vec<[f64; 2]>,
    /// `μ_jk = ĉ_jk H(ξ_k, ξ_k) + Σ_{l≠k} ĉ_jl G(ξ_k, ξ_l)`, indexed `[k][j]`.
    pub mu: Vec<[f64; 2]>,
}

/// Default separation `0.05 · diam Ω`.
pub fn default_separation(domain: &Domain2D) -> f64 {
    0.05 * domain.diameter()
}

impl SpotConfig {
    pub fn new(domain: &Domain2D, points: Vec<[f64; 2]>) -> Result<Self> {
        let sites = points
            .iter()
            .map(|&p| domain.site(p).ok_or(Error::OutOfDomain(p[0], p[1])))
            .collect::<Result<Vec<_>>>()?;
        let cbar = sites.iter().map(|s| s.angle() / std::f64::consts::PI).collect();
        Ok(SpotConfig { points, sites, cbar, chat: Vec::new(), mu: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn interior_count(&self) -> usize {
        self.sites.iter().filter(|s| **s == Site::Interior).count()
    }

    /// Whether a spot sits at a corner, where the coefficients follow the
    /// opening-angle extension rather than the smooth-boundary rule.
    pub fn has_corner(&self) -> bool {
        self.sites.contains(&Site::Corner)
    }

    /// Interior spots must keep `delta_sep` from the boundary and all spots
    /// from each other.
    pub fn check_separation(&self, domain: &Domain2D, delta_sep: f64) -> Result<()> {
        for (k, p) in self.points.iter().enumerate() {
            if self.sites[k] == Site::Interior && domain.boundary_distance(*p) < delta_sep {
                return Err(Error::EscapedDomain);
            }
            for q in &self.points[k + 1..] {
                if (p[0] - q[0]).hypot(p[1] - q[1]) < delta_sep {
                    return Err(Error::EscapedDomain);
                }
            }
        }
        Ok(())
    }

    /// Fills `ĉ_jk` and `μ_jk` for decay rates `m = (m1, m2)`.
    pub fn with_interactions<P: GreenProvider + ?Sized>(mut self, m: [f64; 2], greens: &P) -> Result<Self> {
        let tables = self
            .points
            .iter()
            .map(|&p| greens.table(p))
            .collect::<Result<Vec<_>>>()?;
        self.chat = tables.iter().map(|t| [t.theta * m[0], t.theta * m[1]]).collect();
        let n = self.len();
        let mut mu = vec![[0.0; 2]; n];
        for k in 0..n {
            for j in 0..2 {
                let mut s = self.chat[k][j] * tables[k].self_interaction();
                for l in (0..n).filter(|&l| l != k) {
                    s += self.chat[l][j] * tables[l].green_at(self.points[k])?;
                }
                mu[k][j] = s;
            }
        }
        self.mu = mu;
        Ok(self)
    }
}

pub fn jm_energy<P: GreenProvider + ?Sized>(cfg: &SpotConfig, greens: &P) -> Result<f64> {
    let tables = cfg
        .points
        .iter()
        .map(|&p| greens.table(p))
        .collect::<Result<Vec<_>>>()?;
    let mut j = 0.0;
    for k in 0..cfg.len() {
        j += cfg.cbar[k] * cfg.cbar[k] * tables[k].self_interaction();
        for l in (0..cfg.len()).filter(|&l| l != k) {
            j += cfg.cbar[k] * cfg.cbar[l] * tables[l].green_at(cfg.points[k])?;
        }
    }
    Ok(j)
}

/// Point at arc length `s` along the boundary of a rectangle, running
/// counter-clockwise from the lower-left corner.
pub fn boundary_point(domain: &Domain2D, s: f64) -> Result<[f64; 2]> {
    let Shape::Rectangle { x, y } = domain.shape else {
        return Err(Error::InvalidInput("boundary spots need a rectangular domain".into()));
    };
    let (w, h) = (x[1] - x[0], y[1] - y[0]);
    let s = s.rem_euclid(2.0 * (w + h));
    Ok(if s < w {
        [x[0] + s, y[0]]
    } else if s < w + h {
        [x[1], y[0] + (s - w)]
    } else if s < 2.0 * w + h {
        [x[1] - (s - w - h), y[1]]
    } else {
        [x[0], y[1] - (s - 2.0 * w - h)]
    })
}

/// Arc-length parameter of the boundary point nearest to `p`.
pub fn boundary_parameter(domain: &Domain2D, p: [f64; 2]) -> Result<f64> {
    let Shape::Rectangle { x, y } = domain.shape else {
        return Err(Error::InvalidInput("boundary spots need a rectangular domain".into()));
    };
    let (w, h) = (x[1] - x[0], y[1] - y[0]);
    let d = [p[1] - y[0], x[1] - p[0], y[1] - p[1], p[0] - x[0]];
    let edge = (0..4).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap_or(0);
    let cx = (p[0] - x[0]).clamp(0.0, w);
    let cy = (p[1] - y[0]).clamp(0.0, h);
    Ok(match edge {
        0 => cx,
        1 => w + cy,
        2 => w + h + (w - cx),
        _ => 2.0 * w + h + (h - cy),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PlacementOptions {
    /// Gradient tolerance relative to `1 + |J_m|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference step in grid cells.
    pub step_cells: f64,
    /// Largest Newton step as a fraction of the domain diameter.
    pub max_step: f64,
    /// Minimum separation; `None` uses [`default_separation`].
    pub delta_sep: Option<f64>,
    /// Smallest admissible `|λ|` of the Hessian.
    pub degeneracy: f64,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        PlacementOptions {
            tol: 1e-6,
            max_iter: 60,
            step_cells: 2.0,
            max_step: 0.1,
            delta_sep: None,
            degeneracy: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub config: SpotConfig,
    pub energy: f64,
    pub gradient: Vec<f64>,
    /// Ascending eigenvalues of the finite-difference Hessian in the
    /// optimization coordinates.
    pub hessian_eigenvalues: Vec<f64>,
    pub iterations: usize,
}

impl CriticalPoint {
    /// Morse index (number of negative Hessian eigenvalues).
    pub fn index(&self) -> usize {
        self.hessian_eigenvalues.iter().filter(|&&l| l < 0.0).count()
    }
}

/// Optimization state: `o` interior points followed by `m − o` arc-length
/// parameters of boundary points.
struct Layout<'a> {
    domain: &'a Domain2D,
    o: usize,
    m: usize,
    corner_margin: f64,
}

impl Layout<'_> {
    fn dim(&self) -> usize {
        2 * self.o + (self.m - self.o)
    }

    fn points(&self, z: &[f64]) -> Result<Vec<[f64; 2]>> {
        let mut pts: Vec<[f64; 2]> = (0..self.o).map(|k| [z[2 * k], z[2 * k + 1]]).collect();
        for s in &z[2 * self.o..] {
            pts.push(boundary_point(self.domain, *s)?);
        }
        Ok(pts)
    }

    /// Pushes boundary parameters away from corners; reports whether any
    /// had to move.
    fn clamp(&self, z: &mut [f64]) -> bool {
        let Shape::Rectangle { x, y } = self.domain.shape else {
            return false;
        };
        let (w, h) = (x[1] - x[0], y[1] - y[0]);
        let corners = [0.0, w, w + h, 2.0 * w + h, 2.0 * (w + h)];
        let mut moved = false;
        for s in &mut z[2 * self.o..] {
            *s = s.rem_euclid(2.0 * (w + h));
            for &c in &corners {
                if (*s - c).abs() < self.corner_margin {
                    *s = if *s >= c { c + self.corner_margin } else { c - self.corner_margin };
                    moved = true;
                }
            }
        }
        moved
    }
}

struct Objective<'a, P: GreenProvider + ?Sized> {
    layout: Layout<'a>,
    greens: &'a P,
    step: f64,
}

impl<P: GreenProvider + ?Sized> Objective<'_, P> {
    fn energy(&self, z: &[f64]) -> Result<f64> {
        let cfg = SpotConfig::new(self.layout.domain, self.layout.points(z)?)?;
        jm_energy(&cfg, self.greens)
    }

    fn shifted(&self, z: &[f64], moves: &[(usize, f64)]) -> Result<f64> {
        let mut w = z.to_vec();
        for &(i, d) in moves {
            w[i] += d;
        }
        self.energy(&w)
    }

    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let h = self.step;
        (0..z.len())
            .map(|i| Ok((self.shifted(z, &[(i, h)])? - self.shifted(z, &[(i, -h)])?) / (2.0 * h)))
            .collect()
    }

    fn hessian(&self, z: &[f64], j0: f64) -> Result<Vec<Vec<f64>>> {
        let h = self.step;
        let n = z.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            let plus = self.shifted(z, &[(i, h)])?;
            let minus = self.shifted(z, &[(i, -h)])?;
            a[i][i] = (plus - 2.0 * j0 + minus) / (h * h);
            for k in i + 1..n {
                let pp = self.shifted(z, &[(i, h), (k, h)])?;
                let pm = self.shifted(z, &[(i, h), (k, -h)])?;
                let mp = self.shifted(z, &[(i, -h), (k, h)])?;
                let mm = self.shifted(z, &[(i, -h), (k, -h)])?;
                a[i][k] = (pp - pm - mp + mm) / (4.0 * h * h);
                a[k][i] = a[i][k];
            }
        }
        Ok(a)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton iteration on the finite-difference gradient from one seed.
/// `seed` holds `m` points; the first `o` are interior, the rest are
/// projected onto the boundary.
pub fn refine_critical_point<P: GreenProvider + ?Sized>(
    greens: &P,
    o: usize,
    seed: &[[f64; 2]],
    opts: &PlacementOptions,
) -> Result<CriticalPoint> {
    let domain = *greens.domain();
    let m = seed.len();
    if m == 0 || o > m {
        return Err(Error::InvalidInput(format!("need m >= 1 and 0 <= o <= m (m = {m}, o = {o})")));
    }
    let spacing = domain.spacing();
    let step = opts.step_cells * spacing[0].max(spacing[1]);
    let layout = Layout { domain: &domain, o, m, corner_margin: step + spacing[0].max(spacing[1]) };
    let delta_sep = opts.delta_sep.unwrap_or_else(|| default_separation(&domain));
    let max_step = opts.max_step * domain.diameter();

    let mut z = Vec::with_capacity(layout.dim());
    for p in &seed[..o] {
        z.extend_from_slice(p);
    }
    for p in &seed[o..] {
        z.push(boundary_parameter(&domain, *p)?);
    }
    layout.clamp(&mut z);
    let obj = Objective { layout, greens, step };
    let admissible = |z: &[f64]| -> bool {
        obj.layout
            .points(z)
            .and_then(|pts| SpotConfig::new(&domain, pts))
            .and_then(|c| c.check_separation(&domain, delta_sep))
            .is_ok()
    };
    if !admissible(&z) {
        return Err(Error::EscapedDomain);
    }

    let mut energy = obj.energy(&z)?;
    let mut grad = obj.gradient(&z)?;
    let mut pinned = 0;
    let mut iterations = 0;
    while max_abs(&grad) >= opts.tol * (1.0 + energy.abs()) {
        if iterations == opts.max_iter {
            return Err(Error::NonConvergence(format!(
                "placement gradient {:e} after {iterations} Newton steps",
                max_abs(&grad)
            )));
        }
        iterations += 1;
        let hess = obj.hessian(&z, energy)?;
        let mut dir = match solve_dense(hess, grad.iter().map(|g| -g).collect()) {
            Ok(d) => d,
            Err(_) => grad.iter().map(|g| -g).collect(),
        };
        let len = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if len > max_step {
            dir.iter_mut().for_each(|d| *d *= max_step / len);
        }
        // backtrack on the gradient norm so saddles are reachable too
        let mut accepted = false;
        let mut t = 1.0;
        for _ in 0..12 {
            let mut trial: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let moved = obj.layout.clamp(&mut trial);
            if admissible(&trial) {
                let g = obj.gradient(&trial)?;
                if max_abs(&g) < max_abs(&grad) {
                    pinned = if moved { pinned + 1 } else { 0 };
                    z = trial;
                    grad = g;
                    energy = obj.energy(&z)?;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted || pinned > 3 {
            return Err(if pinned > 3 || !admissible(&z) {
                Error::EscapedDomain
            } else {
                Error::NonConvergence(format!("placement line search stalled at gradient {:e}", max_abs(&grad)))
            });
        }
    }

    let hess = obj.hessian(&z, energy)?;
    let eig = symmetric_eigenvalues(hess);
    let smallest = eig.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    if smallest < opts.degeneracy {
        return Err(Error::DegenerateCritical(smallest));
    }
    Ok(CriticalPoint {
        config: SpotConfig::new(&domain, obj.layout.points(&z)?)?,
        energy,
        gradient: grad,
        hessian_eigenvalues: eig,
        iterations,
    })
}

/// Random seeds: `o` interior points inside the separation margin and
/// `m − o` points on the boundary.
pub fn random_seeds(domain: &Domain2D, m: usize, o: usize, count: usize, seed: u64) -> Vec<Vec<[f64; 2]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bx, by) = domain.bounds();
    let margin = 2.0 * default_separation(domain);
    (0..count)
        .map(|_| {
            let mut pts = Vec::with_capacity(m);
            while pts.len() < o {
                let p = [
                    rng.gen_range(bx[0] + margin..bx[1] - margin),
                    rng.gen_range(by[0] + margin..by[1] - margin),
                ];
                if domain.boundary_distance(p) >= margin {
                    pts.push(p);
                }
            }
            let perimeter = 2.0 * ((bx[1] - bx[0]) + (by[1] - by[0]));
            while pts.len() < m {
                let s = rng.gen_range(0.0..perimeter);
                pts.push(boundary_point(domain, s).unwrap_or([bx[0], by[0]]));
            }
            pts
        })
        .collect()
}

/// Runs [`refine_critical_point`] from every seed and returns the distinct
/// critical points found (minimizers and saddles alike). Fails only when
/// no seed converges, with the last error.
pub fn find_critical_points<P: GreenProvider + ?Sized>(
    greens: &P,
    m: usize,
    o: usize,
    seeds: &[Vec<[f64; 2]>],
    opts: &PlacementOptions,
) -> Result<Vec<CriticalPoint>> {
    let mut found: Vec<CriticalPoint> = Vec::new();
    let mut last_err = Error::InvalidInput("no seeds given".into());
    let spacing = greens.domain().spacing();
    let same = 2.0 * spacing[0].max(spacing[1]);
    for seed in seeds {
        if seed.len() != m {
            return Err(Error::InvalidInput(format!("seed has {} points, expected {m}", seed.len())));
        }
        match refine_critical_point(greens, o, seed, opts) {
            Ok(cp) => {
                let duplicate = found.iter().any(|f| {
                    config_distance(&f.config.points, &cp.config.points, o) < same
                });
                if !duplicate {
                    found.push(cp);
                }
            }
            Err(e) => last_err = e,
        }
    }
    if found.is_empty() {
        return Err(last_err);
    }
    found.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(found)
}

/// Largest point distance between two configurations, minimized over
/// relabelings within the interior and boundary groups (small m only).
fn config_distance(a: &[[f64; 2]], b: &[[f64; 2]], o: usize) -> f64 {
    fn best(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
        if a.is_empty() {
            return 0.0;
        }
        (0..b.len())
            .map(|i| {
                let d = (a[0][0] - b[i][0]).hypot(a[0][1] - b[i][1]);
                let mut rest = b.to_vec();
                rest.remove(i);
                d.max(best(&a[1..], &rest))
            })
            .fold(f64::INFINITY, f64::min)
    }
    best(&a[..o], &b[..o]).max(best(&a[o..], &b[o..]))
}

#[cfg(test)]
mod tests;
