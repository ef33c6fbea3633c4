//! Jacobi-preconditioned conjugate gradients for the grid operators.

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive definite `A`, given as a
/// matrix-vector product, starting from the contents of `x`.
/// `precond(r, z)` applies an SPD approximation of `A⁻¹`.
pub fn pcg<F, P>(apply: F, precond: P, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgStats>
where
    F: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..=max_iter {
        let res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            return Ok(CgStats { iterations: it, relative_residual: res });
        }
        if it == max_iter {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolveFailure(format!(
                "operator not positive definite (pᵀAp = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    let res = dot(&r, &r).sqrt() / b_norm;
    Err(Error::NonConvergence(format!(
        "conjugate gradients stopped at relative residual {res:e} after {max_iter} iterations"
    )))
}

/// Jacobi-preconditioned [`pcg`].
pub fn cg<F>(apply: F, diag: &[f64], b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgStats>
where
    F: Fn(&[f64], &mut [f64]),
{
    let jacobi = |r: &[f64], z: &mut [f64]| {
        for k in 0..r.len() {
            z[k] = r[k] / diag[k];
        }
    };
    pcg(apply, jacobi, b, x, tol, max_iter)
}

/// Symmetric matrix with the 5-point structure of a grid: diagonal `diag`
/// and off-diagonal magnitudes `wx[k] = −A(k, k+1)`, `wy[k] = −A(k, k+px)`.
#[derive(Debug, Clone)]
pub struct Stencil5 {
    pub px: usize,
    pub diag: Vec<f64>,
    pub wx: Vec<f64>,
    pub wy: Vec<f64>,
}

impl Stencil5 {
    /// The grid operator `αW + βK`.
    pub fn for_grid(grid: &Grid, alpha: f64, beta: f64) -> Stencil5 {
        Stencil5 {
            px: grid.px,
            diag: grid.diagonal(alpha, beta),
            wx: grid.cx.iter().map(|c| beta * c).collect(),
            wy: grid.cy.iter().map(|c| beta * c).collect(),
        }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (n, px) = (x.len(), self.px);
        for ((y, d), x) in y.iter_mut().zip(&self.diag).zip(x) {
            *y = d * x;
        }
        for (off, w) in [(1, &self.wx), (px, &self.wy)] {
            let m = n - off;
            let (lo, hi) = (&x[..m], &x[off..]);
            for ((y, w), x) in y[..m].iter_mut().zip(&w[..m]).zip(hi) {
                *y -= w * x;
            }
            for ((y, w), x) in y[off..].iter_mut().zip(&w[..m]).zip(lo) {
                *y -= w * x;
            }
        }
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64], tol: f64) -> Result<CgStats> {
        let pre = Mic0::new(self);
        let max_iter = 20 * (self.px + b.len() / self.px) + 1000;
        pcg(|v, out| self.apply(v, out), |r, z| pre.apply(r, z), b, x, tol, max_iter)
    }
}

/// Modified incomplete Cholesky factor `L Lᵀ` of a [`Stencil5`] matrix.
///
/// The triangular solves run row by row: the coupling to the neighbouring
/// row is a vector update, leaving a one-term recurrence along the row.
/// Couplings across the end of a row (`wx` at the last column) must vanish.
#[derive(Debug, Clone)]
pub struct Mic0 {
    px: usize,
    /// Inverse pivots `1/L_kk`.
    inv: Vec<f64>,
    /// `−L(k+px, k)/L(k+px, k+px)`.
    up: Vec<f64>,
    /// `−L(k, k−1)/L(k, k)` (forward) and `−L(k+1, k)/L(k, k)` (backward).
    fwd: Vec<f64>,
    bwd: Vec<f64>,
    /// `−L(k+px, k)/L(k, k)`.
    down: Vec<f64>,
}

impl Mic0 {
    /// Fraction of the dropped fill moved back onto the diagonal.
    const TAU: f64 = 0.97;
    /// Pivots below this fraction of the diagonal fall back to the diagonal.
    const SAFETY: f64 = 0.25;

    pub fn new(a: &Stencil5) -> Mic0 {
        let (n, px) = (a.diag.len(), a.px);
        let (wx, wy) = (&a.wx, &a.wy);
        let mut inv = vec![0.0; n];
        for k in 0..n {
            let mut e = a.diag[k];
            if k >= 1 {
                let i = inv[k - 1];
                e -= wx[k - 1] * i * (wx[k - 1] * i + Self::TAU * wy[k - 1] * i);
            }
            if k >= px {
                let i = inv[k - px];
                e -= wy[k - px] * i * (wy[k - px] * i + Self::TAU * wx[k - px] * i);
            }
            if e < Self::SAFETY * a.diag[k] {
                e = a.diag[k];
            }
            inv[k] = 1.0 / e.sqrt();
        }
        // L(k+1, k) = −wx[k] inv[k], L(k+px, k) = −wy[k] inv[k]
        let up = (0..n).map(|k| if k + px < n { wy[k] * inv[k] * inv[k + px] } else { 0.0 }).collect();
        let fwd = (0..n).map(|k| if k >= 1 { wx[k - 1] * inv[k - 1] * inv[k] } else { 0.0 }).collect();
        let bwd = (0..n).map(|k| wx[k] * inv[k] * inv[k]).collect();
        let down = (0..n).map(|k| wy[k] * inv[k] * inv[k]).collect();
        Mic0 { px, inv, up, fwd, bwd, down }
    }

    /// `z = (L Lᵀ)⁻¹ r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let (n, px) = (r.len(), self.px);
        let rows = n / px;
        // forward: z_k = r_k/L_kk + fwd_k z_{k−1} + up_{k−px} z_{k−px}
        for row in 0..rows {
            let s = row * px;
            let (done, rest) = z.split_at_mut(s);
            let cur = &mut rest[..px];
            for ((z, r), i) in cur.iter_mut().zip(&r[s..s + px]).zip(&self.inv[s..s + px]) {
                *z = r * i;
            }
            if row > 0 {
                let prev = &done[s - px..];
                for ((z, u), p) in cur.iter_mut().zip(&self.up[s - px..s]).zip(prev) {
                    *z += u * p;
                }
            }
            let f = &self.fwd[s..s + px];
            for i in 1..px {
                cur[i] += f[i] * cur[i - 1];
            }
        }
        // backward: z_k ← z_k/L_kk + bwd_k z_{k+1} + down_k z_{k+px}
        for row in (0..rows).rev() {
            let s = row * px;
            let (head, tail) = z.split_at_mut(s + px);
            let cur = &mut head[s..];
            for (z, i) in cur.iter_mut().zip(&self.inv[s..s + px]) {
                *z *= i;
            }
            if row + 1 < rows {
                for ((z, d), nx) in cur.iter_mut().zip(&self.down[s..s + px]).zip(&tail[..px]) {
                    *z += d * nx;
                }
            }
            let b = &self.bwd[s..s + px];
            for i in (0..px - 1).rev() {
                cur[i] += b[i] * cur[i + 1];
            }
        }
    }
}

/// Solves `(αW + βK) x = b` on `grid`; inactive entries of `b` must be zero.
pub fn solve_grid(grid: &Grid, alpha: f64, beta: f64, b: &[f64], x: &mut [f64], tol: f64) -> Result<CgStats> {
    Stencil5::for_grid(grid, alpha, beta).solve(b, x, tol)
}

/// Solves the small dense system `a x = b` by Gaussian elimination with
/// partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap_or(c);
        if a[p][c] == 0.0 || !a[p][c].is_finite() {
            return Err(Error::LinearSolveFailure("singular dense system".into()));
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    Ok(x)
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations,
/// sorted ascending.
pub fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain2D;

    #[test]
    fn solves_small_dense_system() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 2.0]];
        let b = [1.0, 2.0, 3.0];
        let mut x = [0.0; 3];
        let diag = [4.0, 3.0, 2.0];
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..3 {
                out[i] = (0..3).map(|j| a[i][j] * v[j]).sum();
            }
        };
        let stats = cg(apply, &diag, &b, &mut x, 1e-14, 50).unwrap();
        assert!(stats.iterations <= 3 + 1);
        for i in 0..3 {
            let ax: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_solve_recovers_manufactured_solution() {
        let grid = Grid::new(&Domain2D::square(1.0, 32).unwrap());
        let u = grid.sample(|p| (p[0] * 1.3).cos() + p[1]);
        let mut b = vec![0.0; grid.len()];
        grid.apply(1.0, 0.5, &u, &mut b);
        let mut x = vec![0.0; grid.len()];
        let stats = solve_grid(&grid, 1.0, 0.5, &b, &mut x, 1e-12).unwrap();
        assert!(stats.relative_residual <= 1e-12);
        let err = u.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn stencil_matches_grid_operator_and_preconditioner_helps() {
        let grid = Grid::new(&Domain2D::disk([0.0, 0.0], 1.0, 40).unwrap());
        let a = Stencil5::for_grid(&grid, 1.0, 0.3);
        let x = grid.sample(|p| (3.0 * p[0]).sin() + p[1] * p[1]);
        let (mut y1, mut y2) = (vec![0.0; grid.len()], vec![0.0; grid.len()]);
        grid.apply(1.0, 0.3, &x, &mut y1);
        a.apply(&x, &mut y2);
        for k in 0..grid.len() {
            assert!((y1[k] - y2[k]).abs() < 1e-13 * (1.0 + y1[k].abs()));
        }
        let mut with_mic = vec![0.0; grid.len()];
        let s1 = a.solve(&y1, &mut with_mic, 1e-12).unwrap();
        let mut with_jacobi = vec![0.0; grid.len()];
        let s2 = cg(|v, o| a.apply(v, o), &a.diag, &y1, &mut with_jacobi, 1e-12, 10_000).unwrap();
        assert!(s1.iterations < s2.iterations, "{s1:?} {s2:?}");
        for k in 0..grid.len() {
            assert!((with_mic[k] - x[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn dense_helpers() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]];
        let x = solve_dense(a.clone(), vec![1.0, 2.0, 3.0]).unwrap();
        for i in 0..3 {
            let ax: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((ax - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
        let ev = symmetric_eigenvalues(a);
        // trace and determinant of the test matrix
        assert!((ev.iter().sum::<f64>() - 9.0).abs() < 1e-12);
        assert!((ev.iter().product::<f64>() - 18.0).abs() < 1e-10);
        let ev = symmetric_eigenvalues(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
        assert!(solve_dense(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let grid = Grid::new(&Domain2D::square(1.0, 16).unwrap());
        let mut x = vec![1.0; grid.len()];
        solve_grid(&grid, 1.0, 1.0, &vec![0.0; grid.len()], &mut x, 1e-10).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
