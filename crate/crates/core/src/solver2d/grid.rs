use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::Real;

/// Uniform Cartesian grid. Lengths are in cylinder diameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    pub nx: usize,
    pub ny: usize,
    pub dx: T,
    pub dy: T,
    /// Lower-left corner of the domain.
    pub origin: [T; 2],
}

impl<T: Real> Grid<T> {
    pub fn new(nx: usize, ny: usize, lx: T, ly: T, origin: [T; 2]) -> Result<Self, SolverError> {
        if nx < 8 || ny < 8 {
            return Err(SolverError::Config(format!(
                "grid needs at least 8x8 cells, got {nx}x{ny}"
            )));
        }
        if !(lx > T::zero() && ly > T::zero()) {
            return Err(SolverError::Config("domain extent must be positive".into()));
        }
        Ok(Self {
            nx,
            ny,
            dx: lx / T::from_usize_lossy(nx),
            dy: ly / T::from_usize_lossy(ny),
            origin,
        })
    }

    pub fn extent(&self) -> [T; 2] {
        [
            self.dx * T::from_usize_lossy(self.nx),
            self.dy * T::from_usize_lossy(self.ny),
        ]
    }

    pub fn cell_volume(&self) -> T {
        self.dx * self.dy
    }

    /// Centre of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> [T; 2] {
        let half = T::lit(0.5);
        [
            self.origin[0] + (T::from_usize_lossy(i) + half) * self.dx,
            self.origin[1] + (T::from_usize_lossy(j) + half) * self.dy,
        ]
    }

    /// Location of the x-velocity unknown on face `(i, j)`.
    pub fn u_face(&self, i: usize, j: usize) -> [T; 2] {
        [
            self.origin[0] + T::from_usize_lossy(i) * self.dx,
            self.origin[1] + (T::from_usize_lossy(j) + T::lit(0.5)) * self.dy,
        ]
    }

    /// Location of the y-velocity unknown on face `(i, j)`.
    pub fn v_face(&self, i: usize, j: usize) -> [T; 2] {
        [
            self.origin[0] + (T::from_usize_lossy(i) + T::lit(0.5)) * self.dx,
            self.origin[1] + T::from_usize_lossy(j) * self.dy,
        ]
    }

    pub fn contains(&self, p: [T; 2]) -> bool {
        let ext = self.extent();
        p[0] >= self.origin[0]
            && p[1] >= self.origin[1]
            && p[0] <= self.origin[0] + ext[0]
            && p[1] <= self.origin[1] + ext[1]
    }
}
