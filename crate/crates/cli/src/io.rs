//! Reading fields back from CSV.

use std::io::BufRead;

use anyhow::{bail, Context, Result};
use spotlab_core::ansatz::Field2D;
use spotlab_core::greens::shared_grid;
use spotlab_core::Domain2D;

/// Parses a field written by [`Field2D::write_csv`] on a rectangle. The
/// domain is recovered from the node coordinates.
pub fn read_field_csv<R: BufRead>(r: R) -> Result<Field2D> {
    let mut lines = r.lines();
    let header = lines.next().context("empty field file")??;
    if header.trim() != "x,y,u1,u2,v1,v2" {
        bail!("unexpected header {header:?}");
    }
    let mut rows: Vec<[f64; 6]> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("line {}", i + 2))?;
        let row: [f64; 6] = vals.try_into().map_err(|_| anyhow::anyhow!("line {}: expected 6 columns", i + 2))?;
        rows.push(row);
    }
    let distinct = |c: usize| {
        let mut v: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
        v
    };
    let (xs, ys) = (distinct(0), distinct(1));
    if xs.len() < 2 || ys.len() < 2 || xs.len() * ys.len() != rows.len() {
        bail!("field file is not a full rectangular lattice ({} rows)", rows.len());
    }
    let domain = Domain2D::rectangle(
        [xs[0], xs[xs.len() - 1]],
        [ys[0], ys[ys.len() - 1]],
        xs.len() - 1,
        ys.len() - 1,
    )?;
    let grid = shared_grid(&domain);
    let mut f = Field2D::zeros(grid.clone(), 0.0);
    let [hx, hy] = domain.spacing();
    for r in &rows {
        let i = ((r[0] - xs[0]) / hx).round() as usize;
        let j = ((r[1] - ys[0]) / hy).round() as usize;
        let k = grid.index(i, j);
        f.u[0][k] = r[2];
        f.u[1][k] = r[3];
        f.v[0][k] = r[4];
        f.v[1][k] = r[5];
    }
    Ok(f)
}

pub fn read_field(path: &std::path::Path) -> Result<Field2D> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_field_csv(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use spotlab_core::pdesim::SimConfig;

    #[test]
    fn field_round_trips() {
        let mut cfg = SimConfig::fig1();
        cfg.domain = Domain2D::rectangle([0.0, 2.0], [0.0, 1.0], 32, 16).unwrap();
        let f = cfg.initial_field();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = read_field_csv(buf.as_slice()).unwrap();
        assert_eq!(g.grid.domain, f.grid.domain);
        for j in 0..2 {
            for (a, b) in g.u[j].iter().zip(&f.u[j]) {
                assert!((a - b).abs() <= 1e-11 * b.abs());
            }
        }
    }

    #[test]
    fn rejects_ragged_files() {
        assert!(read_field_csv("x,y\n".as_bytes()).is_err());
        let text = "x,y,u1,u2,v1,v2\n0,0,1,1,1,1\n1,0,1,1,1,1\n0,1,1,1,1,1\n";
        assert!(read_field_csv(text.as_bytes()).is_err());
    }
}
