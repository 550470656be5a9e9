use ndarray::Array2;

use super::{BodyGeometry, FlowField, SolverError};
use crate::Real;

/// Bilinear interpolation of cell-centred pressure at each probe position.
pub fn sample_probes<T: Real>(
    field: &FlowField<T>,
    body: Option<&BodyGeometry<T>>,
    layout: &[[T; 2]],
) -> Result<Vec<T>, SolverError> {
    let g = &field.grid;
    layout
        .iter()
        .enumerate()
        .map(|(index, &pt)| {
            let err = |reason| SolverError::Layout {
                index,
                x: pt[0].as_f64(),
                y: pt[1].as_f64(),
                reason,
            };
            if !g.contains(pt) {
                return Err(err("outside the domain"));
            }
            if let Some(b) = body {
                let (rx, ry) = (pt[0] - b.center[0], pt[1] - b.center[1]);
                if (rx * rx + ry * ry).sqrt() <= b.radius {
                    return Err(err("inside the body"));
                }
            }
            Ok(bilinear(
                &field.p,
                g.nx,
                g.ny,
                (pt[0] - g.origin[0]) / g.dx,
                (pt[1] - g.origin[1]) / g.dy,
            ))
        })
        .collect()
}

/// `fx`, `fy` are positions in cell units from the domain corner.
fn bilinear<T: Real>(p: &Array2<T>, nx: usize, ny: usize, fx: T, fy: T) -> T {
    let locate = |f: T, n: usize| -> (usize, T) {
        let s = f - T::lit(0.5);
        if s <= T::zero() {
            return (0, T::zero());
        }
        let top = T::from_usize_lossy(n - 1);
        if s >= top {
            return (n - 2, T::one());
        }
        let k = s.floor().to_usize().unwrap_or(0).min(n - 2);
        (k, s - T::from_usize_lossy(k))
    };
    let (i, wx) = locate(fx, nx);
    let (j, wy) = locate(fy, ny);
    let one = T::one();
    p[[i, j]] * (one - wx) * (one - wy)
        + p[[i + 1, j]] * wx * (one - wy)
        + p[[i, j + 1]] * (one - wx) * wy
        + p[[i + 1, j + 1]] * wx * wy
}

/// Ninety pressure sensors: three rings of 18 around the cylinder and a
/// 6 x 6 rake in the near wake.
pub fn default_probe_layout<T: Real>(body: &BodyGeometry<T>) -> Vec<[T; 2]> {
    let mut out = Vec::with_capacity(90);
    let d = body.diameter();
    for ring in [0.65, 0.9, 1.2] {
        let r = T::lit(ring) * d;
        for k in 0..18 {
            let a = T::TAU() * T::from_usize_lossy(k) / T::lit(18.0);
            out.push([body.center[0] + r * a.cos(), body.center[1] + r * a.sin()]);
        }
    }
    for xi in 0..6 {
        for yi in 0..6 {
            let x = T::lit(1.5 + 0.5 * xi as f64) * d;
            let y = T::lit(-1.0 + 0.4 * yi as f64) * d;
            out.push([body.center[0] + x, body.center[1] + y]);
        }
    }
    out
}
