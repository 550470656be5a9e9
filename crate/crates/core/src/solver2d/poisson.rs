//! Pressure Poisson problems on the cell-centred grid.
//!
//! The operator is the discrete `div(grad)` of the MAC grid, so a solution
//! makes the projected velocity divergence-free to the residual tolerance.

use std::sync::Arc;

use ndarray::{Array1, Array2, Zip};
use rustdct::{DctPlanner, TransformType2And3};

use super::{Grid, SolverError};
use crate::Real;

/// Boundary treatment of the pressure along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisBc {
    Periodic,
    /// Zero normal gradient at both ends.
    Neumann,
    /// Zero gradient at the low end, `p = 0` on the high-end face.
    NeumannDirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoissonBc {
    pub x: AxisBc,
    pub y: AxisBc,
}

impl PoissonBc {
    pub const PERIODIC: Self = Self {
        x: AxisBc::Periodic,
        y: AxisBc::Periodic,
    };
    pub const NEUMANN: Self = Self {
        x: AxisBc::Neumann,
        y: AxisBc::Neumann,
    };
    pub const CHANNEL: Self = Self {
        x: AxisBc::NeumannDirichlet,
        y: AxisBc::Neumann,
    };

    /// True when constants are in the null space (no Dirichlet side).
    pub fn is_singular(&self) -> bool {
        self.x != AxisBc::NeumannDirichlet && self.y != AxisBc::NeumannDirichlet
    }
}

#[inline]
fn second_diff<T: Real>(p: &Array2<T>, i: usize, j: usize, n: usize, bc: AxisBc, along_x: bool) -> T {
    let at = |k: usize| if along_x { p[[k, j]] } else { p[[i, k]] };
    let k = if along_x { i } else { j };
    let c = at(k);
    let lo = if k > 0 {
        at(k - 1)
    } else {
        match bc {
            AxisBc::Periodic => at(n - 1),
            _ => c,
        }
    };
    let hi = if k + 1 < n {
        at(k + 1)
    } else {
        match bc {
            AxisBc::Periodic => at(0),
            AxisBc::Neumann => c,
            AxisBc::NeumannDirichlet => -c,
        }
    };
    lo - c - c + hi
}

/// Applies the discrete Laplacian.
pub fn laplacian<T: Real>(p: &Array2<T>, grid: &Grid<T>, bc: PoissonBc) -> Array2<T> {
    let (nx, ny) = (grid.nx, grid.ny);
    let idx2 = T::one() / (grid.dx * grid.dx);
    let idy2 = T::one() / (grid.dy * grid.dy);
    let mut out = Array2::zeros((nx, ny));
    for i in 0..nx {
        for j in 0..ny {
            out[[i, j]] = second_diff(p, i, j, nx, bc.x, true) * idx2 + second_diff(p, i, j, ny, bc.y, false) * idy2;
        }
    }
    out
}

fn diagonal<T: Real>(grid: &Grid<T>, bc: PoissonBc) -> Array2<T> {
    let (nx, ny) = (grid.nx, grid.ny);
    let idx2 = T::one() / (grid.dx * grid.dx);
    let idy2 = T::one() / (grid.dy * grid.dy);
    let axis = |k: usize, n: usize, b: AxisBc| -> T {
        let two = T::lit(2.0);
        match b {
            AxisBc::Periodic => -two,
            AxisBc::Neumann => {
                if n == 1 {
                    T::zero()
                } else if k == 0 || k + 1 == n {
                    -T::one()
                } else {
                    -two
                }
            }
            AxisBc::NeumannDirichlet => {
                if k + 1 == n {
                    -T::lit(3.0) + if k == 0 { T::one() } else { T::zero() }
                } else if k == 0 {
                    -T::one()
                } else {
                    -two
                }
            }
        }
    };
    Array2::from_shape_fn((nx, ny), |(i, j)| axis(i, nx, bc.x) * idx2 + axis(j, ny, bc.y) * idy2)
}

fn max_abs<T: Real>(a: &Array2<T>) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

fn dot<T: Real>(a: &Array2<T>, b: &Array2<T>) -> T {
    Zip::from(a).and(b).fold(T::zero(), |acc, &x, &y| acc + x * y)
}

fn remove_mean<T: Real>(a: &mut Array2<T>) {
    let mean = a.sum() / T::from_usize_lossy(a.len());
    a.mapv_inplace(|x| x - mean);
}

/// Outcome of a converged solve.
#[derive(Clone, Debug)]
pub struct PoissonReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `laplacian(p) = rhs` by Jacobi-preconditioned conjugate gradients.
///
/// On singular problems (no Dirichlet side) the right-hand side is first made
/// compatible by subtracting its mean, and the returned field has zero mean.
/// Convergence is declared when the max-norm of the residual is at most `tol`.
pub fn solve_poisson<T: Real>(
    rhs: &Array2<T>,
    grid: &Grid<T>,
    bc: PoissonBc,
    tol: T,
    max_iter: usize,
    guess: Option<&Array2<T>>,
) -> Result<(Array2<T>, PoissonReport), SolverError> {
    let singular = bc.is_singular();
    let mut b = rhs.clone();
    if singular {
        remove_mean(&mut b);
    }
    // The SPD form: (-L) x = -b.
    b.mapv_inplace(|x| -x);
    let minv = diagonal(grid, bc).mapv(|d| if d != T::zero() { -T::one() / d } else { T::one() });

    let mut x = guess.cloned().unwrap_or_else(|| Array2::zeros(rhs.raw_dim()));
    let mut r = &b + &laplacian(&x, grid, bc);
    if singular {
        remove_mean(&mut r);
    }
    let mut history = Vec::new();
    let mut res = max_abs(&r);
    history.push(res.as_f64());
    if res <= tol {
        if singular {
            remove_mean(&mut x);
        }
        return Ok((
            x,
            PoissonReport {
                iterations: 0,
                residual: res.as_f64(),
            },
        ));
    }
    let mut z = &r * &minv;
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ad = laplacian(&d, grid, bc).mapv(|v| -v);
        let dad = dot(&d, &ad);
        if dad <= T::zero() || !dad.is_finite() {
            break;
        }
        let alpha = rz / dad;
        Zip::from(&mut x).and(&d).for_each(|x, &d| *x += alpha * d);
        Zip::from(&mut r).and(&ad).for_each(|r, &a| *r -= alpha * a);
        if singular {
            remove_mean(&mut r);
        }
        res = max_abs(&r);
        history.push(res.as_f64());
        if res <= tol {
            if singular {
                remove_mean(&mut x);
            }
            return Ok((
                x,
                PoissonReport {
                    iterations: it,
                    residual: res.as_f64(),
                },
            ));
        }
        z = &r * &minv;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        Zip::from(&mut d).and(&z).for_each(|d, &z| *d = z + beta * *d);
    }
    let tail = history.iter().rev().take(8).rev().copied().collect();
    Err(SolverError::PoissonNotConverged {
        residual: res.as_f64(),
        history_tail: tail,
    })
}

/// Direct solver for the channel problem (`NeumannDirichlet` in x, `Neumann` in y):
/// cosine transform along y, tridiagonal solve along x for each mode.
pub struct FastPoisson<T: Real> {
    nx: usize,
    ny: usize,
    idx2: T,
    eig_y: Array1<T>,
    dct: Arc<dyn TransformType2And3<T>>,
}

impl<T: Real> FastPoisson<T> {
    pub fn new(grid: &Grid<T>) -> Self {
        let ny = grid.ny;
        let idy2 = T::one() / (grid.dy * grid.dy);
        let eig_y = Array1::from_shape_fn(ny, |k| {
            let s = (T::PI() * T::from_usize_lossy(k) / T::from_usize_lossy(2 * ny)).sin();
            -T::lit(4.0) * s * s * idy2
        });
        let dct = DctPlanner::new().plan_dct2(ny);
        Self {
            nx: grid.nx,
            ny,
            idx2: T::one() / (grid.dx * grid.dx),
            eig_y,
            dct,
        }
    }

    /// Returns the solution of `laplacian(p) = rhs` up to round-off.
    pub fn solve(&self, rhs: &Array2<T>) -> Array2<T> {
        let (nx, ny) = (self.nx, self.ny);
        let mut modes = rhs.as_standard_layout().into_owned();
        let mut scratch = vec![T::zero(); self.dct.get_scratch_len()];
        for mut row in modes.rows_mut() {
            let s = row.as_slice_mut().expect("standard layout");
            self.dct.process_dct2_with_scratch(s, &mut scratch);
        }
        // Thomas algorithm along x, vectorised over modes.
        let a = self.idx2;
        let mut cprime = Array2::<T>::zeros((nx, ny));
        for k in 0..ny {
            let lam = self.eig_y[k];
            let diag0 = -a + lam + if nx == 1 { -a - a } else { T::zero() };
            cprime[[0, k]] = a / diag0;
            modes[[0, k]] /= diag0;
        }
        for i in 1..nx {
            for k in 0..ny {
                let lam = self.eig_y[k];
                let diag = if i + 1 == nx { -T::lit(3.0) * a } else { -a - a } + lam;
                let m = diag - a * cprime[[i - 1, k]];
                cprime[[i, k]] = a / m;
                modes[[i, k]] = (modes[[i, k]] - a * modes[[i - 1, k]]) / m;
            }
        }
        for i in (0..nx - 1).rev() {
            for k in 0..ny {
                let next = modes[[i + 1, k]];
                modes[[i, k]] -= cprime[[i, k]] * next;
            }
        }
        let scale = T::lit(2.0) / T::from_usize_lossy(ny);
        for mut row in modes.rows_mut() {
            let s = row.as_slice_mut().expect("standard layout");
            self.dct.process_dct3_with_scratch(s, &mut scratch);
            for v in s.iter_mut() {
                *v *= scale;
            }
        }
        modes
    }
}
