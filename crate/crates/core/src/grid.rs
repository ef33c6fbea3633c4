//! Vertex-centered finite-volume grids on rectangles and on a masked disk.
//!
//! Unknowns sit at lattice nodes. Each active node owns its dual cell (the
//! node's `h × h` box clipped to the bounding box), so boundary nodes of a
//! rectangle own half cells and corners quarter cells. Two active
//! neighbours are linked by the flux `|face| / h · (u_k − u_l)`; faces with
//! no active neighbour behind them belong to `∂Ω` and carry Neumann data.
//!
//! With `W` the diagonal of cell areas and `K` the link Laplacian,
//! `W⁻¹ K` approximates `−Δ` with natural Neumann conditions and
//! `αW + βK` is symmetric positive definite for `α > 0, β ≥ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Rectangle { x: [f64; 2], y: [f64; 2] },
    /// Staircase approximation of a disk on the lattice over its bounding
    /// square; meant for tests.
    Disk { center: [f64; 2], radius: f64 },
}

/// A domain together with its lattice resolution (cells per side).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain2D {
    pub shape: Shape,
    pub nx: usize,
    pub ny: usize,
}

/// Where a point sits relative to the boundary, with the opening angle of
/// the domain seen from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Site {
    Interior,
    Edge,
    Corner,
}

impl Site {
    pub fn angle(self) -> f64 {
        use std::f64::consts::PI;
        match self {
            Site::Interior => 2.0 * PI,
            Site::Edge => PI,
            Site::Corner => 0.5 * PI,
        }
    }
}

const MIN_RES: usize = 16;

impl Domain2D {
    pub fn rectangle(x: [f64; 2], y: [f64; 2], nx: usize, ny: usize) -> Result<Self> {
        if !(x[1] > x[0] && y[1] > y[0]) {
            return Err(Error::InvalidInput(format!("empty rectangle {x:?} x {y:?}")));
        }
        Self::check_res(nx, ny)?;
        Ok(Domain2D { shape: Shape::Rectangle { x, y }, nx, ny })
    }

    /// `(0, l)²` with `n` cells per side.
    pub fn square(l: f64, n: usize) -> Result<Self> {
        Self::rectangle([0.0, l], [0.0, l], n, n)
    }

    pub fn disk(center: [f64; 2], radius: f64, n: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(format!("disk radius {radius} must be positive")));
        }
        Self::check_res(n, n)?;
        Ok(Domain2D { shape: Shape::Disk { center, radius }, nx: n, ny: n })
    }

    fn check_res(nx: usize, ny: usize) -> Result<()> {
        if nx < MIN_RES || ny < MIN_RES {
            return Err(Error::InvalidInput(format!(
                "resolution {nx}x{ny} below the minimum of {MIN_RES} cells per side"
            )));
        }
        Ok(())
    }

    pub fn with_resolution(&self, nx: usize, ny: usize) -> Result<Self> {
        Self::check_res(nx, ny)?;
        Ok(Domain2D { nx, ny, ..*self })
    }

    /// Bounding box `[x0, x1] × [y0, y1]`.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match self.shape {
            Shape::Rectangle { x, y } => (x, y),
            Shape::Disk { center, radius } => (
                [center[0] - radius, center[0] + radius],
                [center[1] - radius, center[1] + radius],
            ),
        }
    }

    pub fn spacing(&self) -> [f64; 2] {
        let (x, y) = self.bounds();
        [(x[1] - x[0]) / self.nx as f64, (y[1] - y[0]) / self.ny as f64]
    }

    pub fn diameter(&self) -> f64 {
        let (x, y) = self.bounds();
        match self.shape {
            Shape::Rectangle { .. } => (x[1] - x[0]).hypot(y[1] - y[0]),
            Shape::Disk { radius, .. } => 2.0 * radius,
        }
    }

    /// Whether `p` lies in the closed domain (up to a relative `1e-12`).
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (x, y) = self.bounds();
        let tol = 1e-12 * self.diameter();
        match self.shape {
            Shape::Rectangle { .. } => {
                p[0] >= x[0] - tol && p[0] <= x[1] + tol && p[1] >= y[0] - tol && p[1] <= y[1] + tol
            }
            Shape::Disk { center, radius } => {
                (p[0] - center[0]).hypot(p[1] - center[1]) <= radius + tol
            }
        }
    }

    /// Classifies `p`; `None` when it lies outside. Disk boundary points
    /// are reported as edge points.
    pub fn site(&self, p: [f64; 2]) -> Option<Site> {
        if !self.contains(p) {
            return None;
        }
        let tol = 1e-12 * self.diameter();
        match self.shape {
            Shape::Rectangle { x, y } => {
                let on_x = (p[0] - x[0]).abs() <= tol || (p[0] - x[1]).abs() <= tol;
                let on_y = (p[1] - y[0]).abs() <= tol || (p[1] - y[1]).abs() <= tol;
                Some(match (on_x, on_y) {
                    (true, true) => Site::Corner,
                    (true, false) | (false, true) => Site::Edge,
                    _ => Site::Interior,
                })
            }
            Shape::Disk { center, radius } => {
                let r = (p[0] - center[0]).hypot(p[1] - center[1]);
                Some(if r >= radius - tol { Site::Edge } else { Site::Interior })
            }
        }
    }

    /// Distance from `p` to the boundary (rectangle or circle).
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        match self.shape {
            Shape::Rectangle { x, y } => (p[0] - x[0])
                .min(x[1] - p[0])
                .min(p[1] - y[0])
                .min(y[1] - p[1]),
            Shape::Disk { center, radius } => radius - (p[0] - center[0]).hypot(p[1] - center[1]),
        }
    }

    /// Short string identifying domain and resolution, usable in file names.
    pub fn key(&self) -> String {
        match self.shape {
            Shape::Rectangle { x, y } => format!(
                "rect_{}_{}_{}_{}_{}x{}",
                x[0], x[1], y[0], y[1], self.nx, self.ny
            ),
            Shape::Disk { center, radius } => {
                format!("disk_{}_{}_{}_{}x{}", center[0], center[1], radius, self.nx, self.ny)
            }
        }
    }
}

/// Segment of `∂Ω` owned by one node.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFace {
    pub node: usize,
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub normal: [f64; 2],
}

impl BoundaryFace {
    pub fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub domain: Domain2D,
    /// Nodes per row (`nx + 1`) and per column (`ny + 1`).
    pub px: usize,
    pub py: usize,
    pub origin: [f64; 2],
    pub h: [f64; 2],
    pub active: Vec<bool>,
    /// Dual-cell areas (zero for inactive nodes).
    pub weight: Vec<f64>,
    /// Dual-cell extents `[x0, x1, y0, y1]`.
    pub cell: Vec<[f64; 4]>,
    /// Link coefficient between node `k` and its right neighbour `k + 1`.
    pub cx: Vec<f64>,
    /// Link coefficient between node `k` and its upper neighbour `k + px`.
    pub cy: Vec<f64>,
    pub faces: Vec<BoundaryFace>,
}

impl Grid {
    pub fn new(domain: &Domain2D) -> Grid {
        let (bx, by) = domain.bounds();
        let h = domain.spacing();
        let (px, py) = (domain.nx + 1, domain.ny + 1);
        let n = px * py;
        let origin = [bx[0], by[0]];
        let pos = |i: usize, j: usize| [bx[0] + i as f64 * h[0], by[0] + j as f64 * h[1]];
        let active: Vec<bool> = (0..n)
            .map(|k| {
                let p = pos(k % px, k / px);
                match domain.shape {
                    Shape::Rectangle { .. } => true,
                    Shape::Disk { center, radius } => {
                        (p[0] - center[0]).hypot(p[1] - center[1]) < radius * (1.0 - 1e-12)
                    }
                }
            })
            .collect();
        let mut weight = vec![0.0; n];
        let mut cell = vec![[0.0; 4]; n];
        let mut cx = vec![0.0; n];
        let mut cy = vec![0.0; n];
        let mut faces = Vec::new();
        for j in 0..py {
            for i in 0..px {
                let k = j * px + i;
                if !active[k] {
                    continue;
                }
                let p = pos(i, j);
                let c = [
                    (p[0] - 0.5 * h[0]).max(bx[0]),
                    (p[0] + 0.5 * h[0]).min(bx[1]),
                    (p[1] - 0.5 * h[1]).max(by[0]),
                    (p[1] + 0.5 * h[1]).min(by[1]),
                ];
                cell[k] = c;
                weight[k] = (c[1] - c[0]) * (c[3] - c[2]);
                let (wx, wy) = (c[1] - c[0], c[3] - c[2]);
                let right = i + 1 < px && active[k + 1];
                let left = i > 0 && active[k - 1];
                let up = j + 1 < py && active[k + px];
                let down = j > 0 && active[k - px];
                if right {
                    cx[k] = wy / h[0];
                }
                if up {
                    cy[k] = wx / h[1];
                }
                let mut face = |a: [f64; 2], b: [f64; 2], normal: [f64; 2]| {
                    faces.push(BoundaryFace { node: k, a, b, normal })
                };
                if !right {
                    face([c[1], c[2]], [c[1], c[3]], [1.0, 0.0]);
                }
                if !left {
                    face([c[0], c[2]], [c[0], c[3]], [-1.0, 0.0]);
                }
                if !up {
                    face([c[0], c[3]], [c[1], c[3]], [0.0, 1.0]);
                }
                if !down {
                    face([c[0], c[2]], [c[1], c[2]], [0.0, -1.0]);
                }
            }
        }
        Grid { domain: *domain, px, py, origin, h, active, weight, cell, cx, cy, faces }
    }

    pub fn len(&self) -> usize {
        self.px * self.py
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.px + i
    }

    pub fn node(&self, k: usize) -> [f64; 2] {
        [
            self.origin[0] + (k % self.px) as f64 * self.h[0],
            self.origin[1] + (k / self.px) as f64 * self.h[1],
        ]
    }

    /// Smallest spacing.
    pub fn spacing(&self) -> f64 {
        self.h[0].min(self.h[1])
    }

    /// `y = αWx + βKx` on active nodes; inactive entries are copied.
    pub fn apply(&self, alpha: f64, beta: f64, x: &[f64], y: &mut [f64]) {
        for k in 0..self.len() {
            y[k] = if self.active[k] { alpha * self.weight[k] * x[k] } else { x[k] };
        }
        if beta != 0.0 {
            self.add_laplacian(beta, x, y);
        }
    }

    /// `y += β K x`.
    pub fn add_laplacian(&self, beta: f64, x: &[f64], y: &mut [f64]) {
        let px = self.px;
        for k in 0..self.len() {
            let c = self.cx[k];
            if c != 0.0 {
                let f = beta * c * (x[k] - x[k + 1]);
                y[k] += f;
                y[k + 1] -= f;
            }
            let c = self.cy[k];
            if c != 0.0 {
                let f = beta * c * (x[k] - x[k + px]);
                y[k] += f;
                y[k + px] -= f;
            }
        }
    }

    /// Diagonal of `αW + βK` (one on inactive nodes).
    pub fn diagonal(&self, alpha: f64, beta: f64) -> Vec<f64> {
        let px = self.px;
        let mut d: Vec<f64> = (0..self.len())
            .map(|k| if self.active[k] { alpha * self.weight[k] } else { 1.0 })
            .collect();
        for k in 0..self.len() {
            if self.cx[k] != 0.0 {
                d[k] += beta * self.cx[k];
                d[k + 1] += beta * self.cx[k];
            }
            if self.cy[k] != 0.0 {
                d[k] += beta * self.cy[k];
                d[k + px] += beta * self.cy[k];
            }
        }
        d
    }

    /// `∫_Ω f` by the nodal rule.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weight).map(|(v, w)| v * w).sum()
    }

    /// Samples `f` at every active node (zero elsewhere).
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| if self.active[k] { f(self.node(k)) } else { 0.0 })
            .collect()
    }

    /// Bilinear interpolation of nodal values. Cells touching an inactive
    /// node fall back to the nearest active corner.
    pub fn interpolate(&self, values: &[f64], p: [f64; 2]) -> Result<f64> {
        if !self.domain.contains(p) {
            return Err(Error::OutOfDomain(p[0], p[1]));
        }
        let s = (p[0] - self.origin[0]) / self.h[0];
        let t = (p[1] - self.origin[1]) / self.h[1];
        let i = (s.floor().max(0.0) as usize).min(self.px - 2);
        let j = (t.floor().max(0.0) as usize).min(self.py - 2);
        let (fs, ft) = ((s - i as f64).clamp(0.0, 1.0), (t - j as f64).clamp(0.0, 1.0));
        let ks = [self.index(i, j), self.index(i + 1, j), self.index(i, j + 1), self.index(i + 1, j + 1)];
        let ws = [(1.0 - fs) * (1.0 - ft), fs * (1.0 - ft), (1.0 - fs) * ft, fs * ft];
        if ks.iter().all(|&k| self.active[k]) {
            return Ok(ks.iter().zip(&ws).map(|(&k, w)| w * values[k]).sum());
        }
        ks.iter()
            .zip(&ws)
            .filter(|(&k, _)| self.active[k])
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(&k, _)| values[k])
            .ok_or(Error::OutOfDomain(p[0], p[1]))
    }
}
