//! Two-dimensional incompressible flow on a staggered (MAC) grid with an
//! immersed, jet-actuated circular cylinder.
//!
//! Time integration is second-order Adams–Bashforth for advection and
//! diffusion with an incremental pressure projection. The body is imposed by
//! direct forcing weighted by the solid fraction of each velocity face, and
//! the force on the body is the negated sum of that forcing.

mod body;
mod grid;
mod poisson;
mod probes;
mod snapshot;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use body::ImmersedBody;
pub use body::{Arc, BodyGeometry, JetPair};
pub use grid::Grid;
pub use poisson::{laplacian, solve_poisson, AxisBc, FastPoisson, PoissonBc, PoissonReport};
pub use probes::{default_probe_layout, sample_probes};
pub use snapshot::{read_snapshot, snapshot_file_name, write_snapshot};

use crate::Real;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("pressure solve did not converge (residual {residual:e}, recent history {history_tail:?})")]
    PoissonNotConverged { residual: f64, history_tail: Vec<f64> },
    #[error("non-finite value detected at step {step} (t = {time})")]
    Diverged { step: u64, time: f64 },
    #[error("jet velocity {value} at index {index} exceeds bound {bound}")]
    ActionRange { index: usize, value: f64, bound: f64 },
    #[error("probe {index} at ({x}, {y}) is {reason}")]
    Layout {
        index: usize,
        x: f64,
        y: f64,
        reason: &'static str,
    },
    #[error("time step {dt} exceeds the stability limit {limit}")]
    UnstableTimeStep { dt: f64, limit: f64 },
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Outer boundary treatment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Uniform inflow on the left, convective outflow at fixed pressure on the
    /// right, free-slip lateral sides carrying the inflow's cross component.
    Channel,
    /// Doubly periodic box.
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig<T> {
    pub re: T,
    pub u_inf: T,
    /// Inflow angle in degrees.
    pub aoa_deg: T,
    pub cfl: T,
    pub poisson_tol: T,
    pub poisson_max_iter: usize,
    pub boundary: Boundary,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            re: T::lit(100.0),
            u_inf: T::one(),
            aoa_deg: T::zero(),
            cfl: T::lit(0.5),
            poisson_tol: T::lit(1e-8),
            poisson_max_iter: 5000,
            boundary: Boundary::Channel,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.re > T::zero()) {
            return Err(SolverError::Config("Re must be positive".into()));
        }
        if !(self.cfl > T::zero() && self.cfl <= T::lit(0.9)) {
            return Err(SolverError::Config("cfl must lie in (0, 0.9]".into()));
        }
        if !(self.poisson_tol > T::zero()) {
            return Err(SolverError::Config("poisson_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn nu(&self) -> T {
        self.u_inf / self.re
    }

    pub fn aoa(&self) -> T {
        self.aoa_deg * T::PI() / T::lit(180.0)
    }

    pub fn inflow(&self) -> [T; 2] {
        let a = self.aoa();
        [self.u_inf * a.cos(), self.u_inf * a.sin()]
    }
}

/// Adams–Bashforth history: the explicit tendency of the previous step.
#[derive(Clone, Debug, PartialEq)]
pub struct Tendency<T> {
    pub hu: Array2<T>,
    pub hv: Array2<T>,
    pub dt: T,
}

/// Velocity and pressure state. `u` lives on x-faces `(nx+1) x ny`, `v` on
/// y-faces `nx x (ny+1)`, `p` at cell centres `nx x ny`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField<T> {
    pub grid: Grid<T>,
    pub u: Array2<T>,
    pub v: Array2<T>,
    pub p: Array2<T>,
    /// Convective time `t U / D`.
    pub time: T,
    pub steps: u64,
    /// Force exerted by the fluid on the body during the last step.
    pub body_force: [T; 2],
    pub history: Option<Tendency<T>>,
}

impl<T: Real> FlowField<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        Self {
            u: Array2::zeros((nx + 1, ny)),
            v: Array2::zeros((nx, ny + 1)),
            p: Array2::zeros((nx, ny)),
            grid,
            time: T::zero(),
            steps: 0,
            body_force: [T::zero(); 2],
            history: None,
        }
    }

    /// Uniform free stream matching the configured inflow.
    pub fn uniform(grid: Grid<T>, cfg: &SolverConfig<T>) -> Self {
        let mut f = Self::zeros(grid);
        let [ui, vi] = cfg.inflow();
        f.u.fill(ui);
        f.v.fill(vi);
        f
    }

    pub fn is_finite(&self) -> bool {
        self.u
            .iter()
            .chain(self.v.iter())
            .chain(self.p.iter())
            .all(|x| x.is_finite())
    }

    /// Discrete divergence at cell centres.
    pub fn divergence(&self) -> Array2<T> {
        let g = &self.grid;
        Array2::from_shape_fn((g.nx, g.ny), |(i, j)| {
            (self.u[[i + 1, j]] - self.u[[i, j]]) / g.dx + (self.v[[i, j + 1]] - self.v[[i, j]]) / g.dy
        })
    }

    pub fn max_divergence(&self) -> T {
        self.divergence().iter().fold(T::zero(), |m, &d| m.max(d.abs()))
    }

    /// Velocity interpolated to cell centres.
    pub fn cell_velocity(&self) -> (Array2<T>, Array2<T>) {
        let g = &self.grid;
        let half = T::lit(0.5);
        let uc = Array2::from_shape_fn((g.nx, g.ny), |(i, j)| (self.u[[i, j]] + self.u[[i + 1, j]]) * half);
        let vc = Array2::from_shape_fn((g.nx, g.ny), |(i, j)| (self.v[[i, j]] + self.v[[i, j + 1]]) * half);
        (uc, vc)
    }

    /// Vorticity at cell centres from centred differences of the cell velocities.
    pub fn vorticity(&self) -> Array2<T> {
        let g = &self.grid;
        let (uc, vc) = self.cell_velocity();
        let d = |a: &Array2<T>, i: usize, j: usize, along_x: bool| -> T {
            let n = if along_x { g.nx } else { g.ny };
            let k = if along_x { i } else { j };
            let h = if along_x { g.dx } else { g.dy };
            let at = |m: usize| if along_x { a[[m, j]] } else { a[[i, m]] };
            let (lo, hi) = (k.saturating_sub(1), (k + 1).min(n - 1));
            (at(hi) - at(lo)) / (h * T::from_usize_lossy(hi - lo))
        };
        Array2::from_shape_fn((g.nx, g.ny), |(i, j)| d(&vc, i, j, true) - d(&uc, i, j, false))
    }

    pub fn kinetic_energy(&self) -> T {
        let half = T::lit(0.5);
        let g = &self.grid;
        let (uc, vc) = self.cell_velocity();
        let sum = uc
            .iter()
            .zip(vc.iter())
            .fold(T::zero(), |acc, (&a, &b)| acc + a * a + b * b);
        half * sum * g.cell_volume()
    }
}

enum PressureSolver<T: Real> {
    Fast(FastPoisson<T>),
    Iterative(PoissonBc),
}

/// A solver instance owning the grid-dependent caches (pressure solver,
/// immersed-body masks). One instance per flow.
pub struct Solver<T: Real> {
    grid: Grid<T>,
    cfg: SolverConfig<T>,
    pressure: PressureSolver<T>,
    ib: Option<ImmersedBody<T>>,
    last_psi: Option<Array2<T>>,
}

impl<T: Real> Solver<T> {
    pub fn new(grid: Grid<T>, cfg: SolverConfig<T>) -> Result<Self, SolverError> {
        cfg.validate()?;
        let pressure = match cfg.boundary {
            Boundary::Channel => PressureSolver::Fast(FastPoisson::new(&grid)),
            Boundary::Periodic => PressureSolver::Iterative(PoissonBc::PERIODIC),
        };
        Ok(Self {
            grid,
            cfg,
            pressure,
            ib: None,
            last_psi: None,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.cfg
    }

    fn poisson_bc(&self) -> PoissonBc {
        match self.cfg.boundary {
            Boundary::Channel => PoissonBc::CHANNEL,
            Boundary::Periodic => PoissonBc::PERIODIC,
        }
    }

    /// Largest time step allowed by the advective and diffusive limits for `cfl`.
    pub fn stable_dt_with(&self, field: &FlowField<T>, body: Option<&BodyGeometry<T>>, cfl: T) -> T {
        let g = &self.grid;
        let mut umax = field.u.iter().fold(self.cfg.u_inf, |m, &x| m.max(x.abs()));
        let mut vmax = field.v.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
        if let Some(b) = body {
            for j in &b.jets {
                umax = umax.max(j.front_velocity.abs());
                vmax = vmax.max(j.front_velocity.abs());
            }
        }
        let adv = T::one() / (umax / g.dx + vmax / g.dy);
        let visc = T::one() / (T::lit(2.0) * self.cfg.nu() * (T::one() / (g.dx * g.dx) + T::one() / (g.dy * g.dy)));
        cfl * adv.min(visc)
    }

    pub fn stable_dt(&self, field: &FlowField<T>, body: Option<&BodyGeometry<T>>) -> T {
        self.stable_dt_with(field, body, self.cfg.cfl)
    }

    fn ensure_body(&mut self, body: &BodyGeometry<T>) -> Result<(), SolverError> {
        let aoa = self.cfg.aoa();
        if self.ib.as_ref().is_some_and(|ib| ib.matches(body, aoa)) {
            return Ok(());
        }
        body.validate()?;
        body.check_inside(&self.grid)?;
        self.ib = Some(ImmersedBody::new(&self.grid, body, aoa));
        Ok(())
    }

    /// Advances `field` by `dt`.
    pub fn step(
        &mut self,
        field: &FlowField<T>,
        body: Option<&BodyGeometry<T>>,
        dt: T,
    ) -> Result<FlowField<T>, SolverError> {
        if field.grid != self.grid {
            return Err(SolverError::Config("field grid does not match solver grid".into()));
        }
        let limit = self.stable_dt_with(field, body, T::one());
        if !(dt > T::zero()) || dt > limit {
            return Err(SolverError::UnstableTimeStep {
                dt: dt.as_f64(),
                limit: limit.as_f64(),
            });
        }
        if let Some(b) = body {
            self.ensure_body(b)?;
        }
        if !field.is_finite() {
            return Err(SolverError::Diverged {
                step: field.steps + 1,
                time: field.time.as_f64(),
            });
        }

        let (hu, hv) = self.tendency(field);
        let (mut us, mut vs) = (field.u.clone(), field.v.clone());
        self.predict(field, &hu, &hv, dt, &mut us, &mut vs);

        let mut force = [T::zero(); 2];
        if let (Some(b), Some(ib)) = (body, self.ib.as_ref()) {
            force = apply_forcing(&self.grid, ib, b, dt, &mut us, &mut vs);
        }

        let mut next = FlowField {
            grid: self.grid.clone(),
            u: us,
            v: vs,
            p: field.p.clone(),
            time: field.time + dt,
            steps: field.steps + 1,
            body_force: force,
            history: Some(Tendency { hu, hv, dt }),
        };
        self.project(&mut next, dt)?;
        if !next.is_finite() {
            return Err(SolverError::Diverged {
                step: next.steps,
                time: next.time.as_f64(),
            });
        }
        Ok(next)
    }

    /// Explicit advection + diffusion tendency on every velocity unknown.
    fn tendency(&self, f: &FlowField<T>) -> (Array2<T>, Array2<T>) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let uu = self.pad_u(&f.u);
        let vv = self.pad_v(&f.v);
        let nu = self.cfg.nu();
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let (idx, idy) = (T::one() / g.dx, T::one() / g.dy);
        let (idx2, idy2) = (idx * idx, idy * idy);

        let mut hu = Array2::zeros((nx + 1, ny));
        for i in 0..=nx {
            let ip = i + 1;
            for j in 0..ny {
                let jp = j + 1;
                let c = uu[[ip, jp]];
                let ue = (c + uu[[ip + 1, jp]]) * half;
                let uw = (uu[[ip - 1, jp]] + c) * half;
                let un = (c + uu[[ip, jp + 1]]) * half;
                let us = (uu[[ip, jp - 1]] + c) * half;
                let vn = (vv[[i, j + 2]] + vv[[i + 1, j + 2]]) * half;
                let vs = (vv[[i, j + 1]] + vv[[i + 1, j + 1]]) * half;
                let adv = (ue * ue - uw * uw) * idx + (un * vn - us * vs) * idy;
                let lap = (uu[[ip + 1, jp]] - two * c + uu[[ip - 1, jp]]) * idx2
                    + (uu[[ip, jp + 1]] - two * c + uu[[ip, jp - 1]]) * idy2;
                hu[[i, j]] = nu * lap - adv;
            }
        }

        let mut hv = Array2::zeros((nx, ny + 1));
        for i in 0..nx {
            let ip = i + 1;
            for j in 0..=ny {
                let jp = j + 1;
                let c = vv[[ip, jp]];
                let vn = (c + vv[[ip, jp + 1]]) * half;
                let vs = (vv[[ip, jp - 1]] + c) * half;
                let ve = (c + vv[[ip + 1, jp]]) * half;
                let vw = (vv[[ip - 1, jp]] + c) * half;
                let ue = (uu[[i + 2, j]] + uu[[i + 2, j + 1]]) * half;
                let uw = (uu[[i + 1, j]] + uu[[i + 1, j + 1]]) * half;
                let adv = (ue * ve - uw * vw) * idx + (vn * vn - vs * vs) * idy;
                let lap = (vv[[ip + 1, jp]] - two * c + vv[[ip - 1, jp]]) * idx2
                    + (vv[[ip, jp + 1]] - two * c + vv[[ip, jp - 1]]) * idy2;
                hv[[i, j]] = nu * lap - adv;
            }
        }
        (hu, hv)
    }

    /// `u` with one ghost layer: shape `(nx+3, ny+2)`.
    fn pad_u(&self, u: &Array2<T>) -> Array2<T> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut p = Array2::zeros((nx + 3, ny + 2));
        for i in 0..=nx {
            for j in 0..ny {
                p[[i + 1, j + 1]] = u[[i, j]];
            }
        }
        match self.cfg.boundary {
            Boundary::Channel => {
                for j in 0..ny {
                    p[[0, j + 1]] = u[[0, j]];
                    p[[nx + 2, j + 1]] = u[[nx, j]];
                }
                for i in 0..nx + 3 {
                    p[[i, 0]] = p[[i, 1]];
                    p[[i, ny + 1]] = p[[i, ny]];
                }
            }
            Boundary::Periodic => {
                for j in 0..ny {
                    p[[0, j + 1]] = u[[nx - 1, j]];
                    p[[nx + 2, j + 1]] = u[[1, j]];
                }
                for i in 0..nx + 3 {
                    p[[i, 0]] = p[[i, ny]];
                    p[[i, ny + 1]] = p[[i, 1]];
                }
            }
        }
        p
    }

    /// `v` with one ghost layer: shape `(nx+2, ny+3)`.
    fn pad_v(&self, v: &Array2<T>) -> Array2<T> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut p = Array2::zeros((nx + 2, ny + 3));
        for i in 0..nx {
            for j in 0..=ny {
                p[[i + 1, j + 1]] = v[[i, j]];
            }
        }
        match self.cfg.boundary {
            Boundary::Channel => {
                let vin = self.cfg.inflow()[1];
                for j in 0..=ny {
                    p[[0, j + 1]] = vin + vin - v[[0, j]];
                    p[[nx + 1, j + 1]] = v[[nx - 1, j]];
                }
                for i in 0..nx + 2 {
                    p[[i, 0]] = p[[i, 1]];
                    p[[i, ny + 2]] = p[[i, ny + 1]];
                }
            }
            Boundary::Periodic => {
                for j in 0..=ny {
                    p[[0, j + 1]] = v[[nx - 1, j]];
                    p[[nx + 1, j + 1]] = v[[0, j]];
                }
                for i in 0..nx + 2 {
                    p[[i, 0]] = p[[i, ny]];
                    p[[i, ny + 2]] = p[[i, 2]];
                }
            }
        }
        p
    }

    /// Adams–Bashforth predictor including the old pressure gradient.
    fn predict(&self, f: &FlowField<T>, hu: &Array2<T>, hv: &Array2<T>, dt: T, us: &mut Array2<T>, vs: &mut Array2<T>) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let half = T::lit(0.5);
        let (c_new, c_old) = match &f.history {
            Some(h) => {
                let r = dt / h.dt;
                (T::one() + r * half, -r * half)
            }
            None => (T::one(), T::zero()),
        };
        let blend = |h: &Array2<T>, old: Option<&Array2<T>>, idx: [usize; 2]| -> T {
            match old {
                Some(o) => c_new * h[idx] + c_old * o[idx],
                None => h[idx],
            }
        };
        let old_u = f.history.as_ref().map(|h| &h.hu);
        let old_v = f.history.as_ref().map(|h| &h.hv);
        let p = &f.p;
        match self.cfg.boundary {
            Boundary::Channel => {
                let [uin, vin] = self.cfg.inflow();
                for j in 0..ny {
                    us[[0, j]] = uin;
                    for i in 1..nx {
                        let gp = (p[[i, j]] - p[[i - 1, j]]) / g.dx;
                        us[[i, j]] = f.u[[i, j]] + dt * (blend(hu, old_u, [i, j]) - gp);
                    }
                    // convective outflow at the free-stream speed
                    let conv = f.u[[nx, j]] - dt * self.cfg.u_inf * (f.u[[nx, j]] - f.u[[nx - 1, j]]) / g.dx;
                    let gp = -(p[[nx - 1, j]] + p[[nx - 1, j]]) / g.dx;
                    us[[nx, j]] = conv - dt * gp;
                }
                for i in 0..nx {
                    vs[[i, 0]] = vin;
                    vs[[i, ny]] = vin;
                    for j in 1..ny {
                        let gp = (p[[i, j]] - p[[i, j - 1]]) / g.dy;
                        vs[[i, j]] = f.v[[i, j]] + dt * (blend(hv, old_v, [i, j]) - gp);
                    }
                }
            }
            Boundary::Periodic => {
                for j in 0..ny {
                    for i in 0..nx {
                        let im = if i == 0 { nx - 1 } else { i - 1 };
                        let gp = (p[[i, j]] - p[[im, j]]) / g.dx;
                        us[[i, j]] = f.u[[i, j]] + dt * (blend(hu, old_u, [i, j]) - gp);
                    }
                    us[[nx, j]] = us[[0, j]];
                }
                for i in 0..nx {
                    for j in 0..ny {
                        let jm = if j == 0 { ny - 1 } else { j - 1 };
                        let gp = (p[[i, j]] - p[[i, jm]]) / g.dy;
                        vs[[i, j]] = f.v[[i, j]] + dt * (blend(hv, old_v, [i, j]) - gp);
                    }
                    vs[[i, ny]] = vs[[i, 0]];
                }
            }
        }
    }

    /// Pressure-increment projection; updates velocity and pressure in place.
    fn project(&mut self, f: &mut FlowField<T>, dt: T) -> Result<(), SolverError> {
        let g = self.grid.clone();
        let (nx, ny) = (g.nx, g.ny);
        let rhs = f.divergence().mapv(|d| d / dt);
        let bc = self.poisson_bc();
        let tol = self.cfg.poisson_tol;
        let psi = match &self.pressure {
            PressureSolver::Fast(fast) => {
                let psi = fast.solve(&rhs);
                let res = (&laplacian(&psi, &g, bc) - &rhs)
                    .iter()
                    .fold(T::zero(), |m, &x| m.max(x.abs()));
                if res <= tol {
                    psi
                } else {
                    solve_poisson(&rhs, &g, bc, tol, self.cfg.poisson_max_iter, Some(&psi))?.0
                }
            }
            PressureSolver::Iterative(bc) => {
                solve_poisson(&rhs, &g, *bc, tol, self.cfg.poisson_max_iter, self.last_psi.as_ref())?.0
            }
        };
        match self.cfg.boundary {
            Boundary::Channel => {
                for j in 0..ny {
                    for i in 1..nx {
                        f.u[[i, j]] -= dt * (psi[[i, j]] - psi[[i - 1, j]]) / g.dx;
                    }
                    f.u[[nx, j]] -= dt * (-(psi[[nx - 1, j]] + psi[[nx - 1, j]])) / g.dx;
                }
                for i in 0..nx {
                    for j in 1..ny {
                        f.v[[i, j]] -= dt * (psi[[i, j]] - psi[[i, j - 1]]) / g.dy;
                    }
                }
            }
            Boundary::Periodic => {
                for j in 0..ny {
                    for i in 0..nx {
                        let im = if i == 0 { nx - 1 } else { i - 1 };
                        f.u[[i, j]] -= dt * (psi[[i, j]] - psi[[im, j]]) / g.dx;
                    }
                    f.u[[nx, j]] = f.u[[0, j]];
                }
                for i in 0..nx {
                    for j in 0..ny {
                        let jm = if j == 0 { ny - 1 } else { j - 1 };
                        f.v[[i, j]] -= dt * (psi[[i, j]] - psi[[i, jm]]) / g.dy;
                    }
                    f.v[[i, ny]] = f.v[[i, 0]];
                }
            }
        }
        f.p += &psi;
        if bc.is_singular() {
            let mean = f.p.sum() / T::from_usize_lossy(f.p.len());
            f.p.mapv_inplace(|x| x - mean);
        }
        self.last_psi = Some(psi);
        Ok(())
    }
}

/// Blends the predicted velocity towards the body velocity by solid fraction
/// and returns the resulting force on the body.
fn apply_forcing<T: Real>(
    g: &Grid<T>,
    ib: &ImmersedBody<T>,
    body: &BodyGeometry<T>,
    dt: T,
    us: &mut Array2<T>,
    vs: &mut Array2<T>,
) -> [T; 2] {
    let mut ub = Array2::<T>::zeros(us.raw_dim());
    let mut vb = Array2::<T>::zeros(vs.raw_dim());
    let jet_speed = |pair: usize, front: bool| {
        let jp = &body.jets[pair];
        if front {
            jp.front_velocity
        } else {
            jp.rear_velocity()
        }
    };
    for jf in &ib.jets_u {
        ub[[jf.i, jf.j]] = jet_speed(jf.pair, jf.front) * T::lit(jf.normal);
    }
    for jf in &ib.jets_v {
        vb[[jf.i, jf.j]] = jet_speed(jf.pair, jf.front) * T::lit(jf.normal);
    }
    let mut fx = T::zero();
    let mut fy = T::zero();
    for ((idx, &phi), &target) in ib.phi_u.indexed_iter().zip(ub.iter()) {
        if phi > T::zero() {
            let before = us[idx];
            let after = (T::one() - phi) * before + phi * target;
            us[idx] = after;
            fx -= (after - before) / dt;
        }
    }
    for ((idx, &phi), &target) in ib.phi_v.indexed_iter().zip(vb.iter()) {
        if phi > T::zero() {
            let before = vs[idx];
            let after = (T::one() - phi) * before + phi * target;
            vs[idx] = after;
            fy -= (after - before) / dt;
        }
    }
    let vol = g.cell_volume();
    [fx * vol, fy * vol]
}

/// One-off step; builds a fresh [`Solver`] for the call.
pub fn step<T: Real>(
    field: &FlowField<T>,
    cfg: &SolverConfig<T>,
    body: Option<&BodyGeometry<T>>,
    dt: T,
) -> Result<FlowField<T>, SolverError> {
    Solver::new(field.grid.clone(), cfg.clone())?.step(field, body, dt)
}

/// Lift and drag coefficients `(C_l, C_d)` of the force recorded by the last
/// step, normalised by `0.5 U^2 D` in the inflow-aligned frame.
pub fn compute_forces<T: Real>(
    field: &FlowField<T>,
    body: &BodyGeometry<T>,
    cfg: &SolverConfig<T>,
) -> Result<(T, T), SolverError> {
    body.check_inside(&field.grid)?;
    let a = cfg.aoa();
    let [fx, fy] = field.body_force;
    let drag = fx * a.cos() + fy * a.sin();
    let lift = -fx * a.sin() + fy * a.cos();
    let q = T::lit(0.5) * cfg.u_inf * cfg.u_inf * body.diameter();
    Ok((lift / q, drag / q))
}
