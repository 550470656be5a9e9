//! Plain-text field snapshots.
//!
//! Header lines `nx`, `ny`, `dx`, `dy`, `time`, then one line per cell
//! (row-major, `j` outer) with cell-centred `u v p vorticity`. A trailing
//! `restart` block stores the staggered arrays so a run can resume exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{FlowField, Grid, SolverError};
use crate::Real;

pub fn snapshot_file_name<T: Real>(time: T) -> String {
    format!("snapshot_{:.4}.dat", time.as_f64())
}

pub fn write_snapshot<T: Real>(path: &Path, field: &FlowField<T>) -> Result<(), SolverError> {
    let g = &field.grid;
    let mut s = String::new();
    let _ = writeln!(s, "nx {}", g.nx);
    let _ = writeln!(s, "ny {}", g.ny);
    let _ = writeln!(s, "dx {}", g.dx.as_f64());
    let _ = writeln!(s, "dy {}", g.dy.as_f64());
    let _ = writeln!(s, "time {}", field.time.as_f64());
    let _ = writeln!(s, "origin {} {}", g.origin[0].as_f64(), g.origin[1].as_f64());
    let (uc, vc) = field.cell_velocity();
    let w = field.vorticity();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let _ = writeln!(
                s,
                "{} {} {} {}",
                uc[[i, j]].as_f64(),
                vc[[i, j]].as_f64(),
                field.p[[i, j]].as_f64(),
                w[[i, j]].as_f64()
            );
        }
    }
    for (name, arr) in [("u", &field.u), ("v", &field.v), ("p", &field.p)] {
        let _ = writeln!(s, "restart {name} {} {}", arr.nrows(), arr.ncols());
        for row in arr.rows() {
            let line: Vec<String> = row.iter().map(|x| x.as_f64().to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
    }
    fs::write(path, s)?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> SolverError {
    SolverError::Snapshot(msg.into())
}

/// Reads a snapshot written by [`write_snapshot`] back into a restartable field.
pub fn read_snapshot<T: Real>(path: &Path) -> Result<FlowField<T>, SolverError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let mut header = |key: &str| -> Result<Vec<f64>, SolverError> {
        let line = lines.next().ok_or_else(|| bad(format!("missing header {key}")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(bad(format!("expected header {key}, got {line:?}")));
        }
        parts
            .map(|p| p.parse::<f64>().map_err(|e| bad(format!("{key}: {e}"))))
            .collect()
    };
    let nx = header("nx")?[0] as usize;
    let ny = header("ny")?[0] as usize;
    let dx = header("dx")?[0];
    let dy = header("dy")?[0];
    let time = header("time")?[0];
    let origin = header("origin")?;
    if origin.len() != 2 {
        return Err(bad("origin needs two values"));
    }
    let mut rest = lines.skip(nx * ny);
    let mut block = |name: &str, rows: usize, cols: usize| -> Result<Array2<T>, SolverError> {
        let head = rest
            .next()
            .ok_or_else(|| bad(format!("missing restart block {name}")))?;
        let expect = format!("restart {name} {rows} {cols}");
        if head.trim() != expect {
            return Err(bad(format!("expected {expect:?}, got {head:?}")));
        }
        let mut arr = Array2::zeros((rows, cols));
        for r in 0..rows {
            let line = rest.next().ok_or_else(|| bad(format!("truncated block {name}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|p| p.parse::<f64>().map_err(|e| bad(format!("{name}: {e}"))))
                .collect::<Result<_, _>>()?;
            if vals.len() != cols {
                return Err(bad(format!("block {name} row {r} has {} values", vals.len())));
            }
            for (c, v) in vals.into_iter().enumerate() {
                arr[[r, c]] = T::lit(v);
            }
        }
        Ok(arr)
    };
    let u = block("u", nx + 1, ny)?;
    let v = block("v", nx, ny + 1)?;
    let p = block("p", nx, ny)?;
    let grid = Grid {
        nx,
        ny,
        dx: T::lit(dx),
        dy: T::lit(dy),
        origin: [T::lit(origin[0]), T::lit(origin[1])],
    };
    Ok(FlowField {
        grid,
        u,
        v,
        p,
        time: T::lit(time),
        steps: 0,
        body_force: [T::zero(); 2],
        history: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restart_block_roundtrips_exactly() {
        let g = Grid::new(9, 8, 4.5, 4.0, [-1.0, -2.0]).unwrap();
        let mut f = FlowField::<f64>::zeros(g);
        f.u = Array2::from_shape_fn(f.u.raw_dim(), |(i, j)| (i as f64 * 0.1).sin() + j as f64 / 3.0);
        f.v = Array2::from_shape_fn(f.v.raw_dim(), |(i, j)| 1.0 / (1.0 + (i * j) as f64));
        f.p = Array2::from_shape_fn(f.p.raw_dim(), |(i, j)| (i as f64 - j as f64) * 1e-7);
        f.time = 12.345678901234;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(snapshot_file_name(f.time));
        write_snapshot(&path, &f).unwrap();
        let back: FlowField<f64> = read_snapshot(&path).unwrap();
        assert_eq!(back.u, f.u);
        assert_eq!(back.v, f.v);
        assert_eq!(back.p, f.p);
        assert_eq!(back.time, f.time);
        assert_eq!(back.grid, f.grid);
        let text = std::fs::read_to_string(&path).unwrap();
        let first_data = text.lines().nth(6).unwrap();
        assert_eq!(first_data.split_whitespace().count(), 4);
    }
}
