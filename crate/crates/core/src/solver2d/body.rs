use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Grid, SolverError};
use crate::Real;

/// Arc on the cylinder surface, angles in radians measured from the front
/// stagnation line (the upstream-pointing inflow direction) towards the upper side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc<T> {
    pub center_angle: T,
    pub width: T,
}

impl<T: Real> Arc<T> {
    fn contains(&self, angle: T) -> bool {
        let two_pi = T::TAU();
        let mut d = (angle - self.center_angle) % two_pi;
        if d > T::PI() {
            d -= two_pi;
        } else if d < -T::PI() {
            d += two_pi;
        }
        d.abs() <= self.width * T::lit(0.5)
    }

    fn overlaps(&self, other: &Arc<T>) -> bool {
        let two_pi = T::TAU();
        let mut d = (self.center_angle - other.center_angle).abs() % two_pi;
        if d > T::PI() {
            d = two_pi - d;
        }
        d < (self.width + other.width) * T::lit(0.5)
    }
}

/// A blowing/suction jet pair. The rear arc always carries the negated front velocity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetPair<T> {
    pub front_arc: Arc<T>,
    pub rear_arc: Arc<T>,
    /// Surface-normal speed of the front jet, positive outwards (blowing).
    pub front_velocity: T,
}

impl<T: Real> JetPair<T> {
    /// Front arc at 75 degrees, rear arc at 285 degrees, both 10 degrees wide.
    pub fn default_pair() -> Self {
        let deg = T::PI() / T::lit(180.0);
        Self {
            front_arc: Arc {
                center_angle: T::lit(75.0) * deg,
                width: T::lit(10.0) * deg,
            },
            rear_arc: Arc {
                center_angle: T::lit(285.0) * deg,
                width: T::lit(10.0) * deg,
            },
            front_velocity: T::zero(),
        }
    }

    pub fn rear_velocity(&self) -> T {
        -self.front_velocity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyGeometry<T> {
    pub center: [T; 2],
    pub radius: T,
    pub jets: Vec<JetPair<T>>,
}

impl<T: Real> BodyGeometry<T> {
    pub fn cylinder(center: [T; 2], jets: Vec<JetPair<T>>) -> Result<Self, SolverError> {
        let body = Self {
            center,
            radius: T::lit(0.5),
            jets,
        };
        body.validate()?;
        Ok(body)
    }

    pub fn diameter(&self) -> T {
        self.radius + self.radius
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.radius > T::zero()) {
            return Err(SolverError::Config("body radius must be positive".into()));
        }
        let arcs: Vec<Arc<T>> = self.jets.iter().flat_map(|p| [p.front_arc, p.rear_arc]).collect();
        for (a, arc) in arcs.iter().enumerate() {
            for other in &arcs[a + 1..] {
                if arc.overlaps(other) {
                    return Err(SolverError::Config("jet arcs overlap".into()));
                }
            }
        }
        for pair in &self.jets {
            if pair.front_arc.width != pair.rear_arc.width {
                return Err(SolverError::Config(
                    "front and rear arcs of a jet pair must have equal widths".into(),
                ));
            }
        }
        Ok(())
    }

    /// Checks that the body sits inside `grid` with at least two diameters of clearance.
    pub fn check_inside(&self, grid: &Grid<T>) -> Result<(), SolverError> {
        let ext = grid.extent();
        let clearance = self.radius + T::lit(2.0) * self.diameter();
        for axis in 0..2 {
            let lo = self.center[axis] - grid.origin[axis];
            let hi = grid.origin[axis] + ext[axis] - self.center[axis];
            if lo < clearance || hi < clearance {
                return Err(SolverError::Config(format!(
                    "body must keep 2D clearance to the domain boundary (axis {axis})"
                )));
            }
        }
        Ok(())
    }

    /// Sets each pair's front velocity (rear follows with opposite sign).
    pub fn apply_jets(&self, front_velocities: &[T], bound: T) -> Result<Self, SolverError> {
        if front_velocities.len() != self.jets.len() {
            return Err(SolverError::Config(format!(
                "expected {} jet velocities, got {}",
                self.jets.len(),
                front_velocities.len()
            )));
        }
        let mut out = self.clone();
        for (idx, (pair, &vel)) in out.jets.iter_mut().zip(front_velocities).enumerate() {
            if !vel.is_finite() || vel.abs() > bound {
                return Err(SolverError::ActionRange {
                    index: idx,
                    value: vel.as_f64(),
                    bound: bound.as_f64(),
                });
            }
            pair.front_velocity = vel;
        }
        Ok(out)
    }

    /// Net volume flux through the jet arcs per unit span; zero for any valid action.
    pub fn net_surface_flux(&self) -> T {
        self.jets.iter().fold(T::zero(), |acc, p| {
            acc + p.front_velocity * p.front_arc.width * self.radius
                + p.rear_velocity() * p.rear_arc.width * self.radius
        })
    }

    /// Angle of `p` measured from the front stagnation line for an inflow at `aoa` radians.
    fn surface_angle(&self, p: [T; 2], aoa: T) -> T {
        let psi = (p[1] - self.center[1]).atan2(p[0] - self.center[0]);
        let theta = T::PI() + aoa - psi;
        let two_pi = T::TAU();
        let mut t = theta % two_pi;
        if t < T::zero() {
            t += two_pi;
        }
        t
    }

    fn distance_inside(&self, p: [T; 2]) -> T {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        self.radius - (dx * dx + dy * dy).sqrt()
    }
}

/// Jet assignment of one forced face.
#[derive(Clone, Copy, Debug)]
pub(crate) struct JetFace {
    pub i: usize,
    pub j: usize,
    pub pair: usize,
    pub front: bool,
    /// Component of the outward surface normal along this face's velocity direction.
    pub normal: f64,
}

/// Solid-fraction masks and jet-face lists for one body on one grid.
#[derive(Clone, Debug)]
pub(crate) struct ImmersedBody<T> {
    pub phi_u: Array2<T>,
    pub phi_v: Array2<T>,
    pub jets_u: Vec<JetFace>,
    pub jets_v: Vec<JetFace>,
    geometry_key: (Vec<[f64; 4]>, [f64; 3], f64),
}

const SUBSAMPLES: usize = 8;

impl<T: Real> ImmersedBody<T> {
    pub fn new(grid: &Grid<T>, body: &BodyGeometry<T>, aoa: T) -> Self {
        let (phi_u, jets_u) = Self::mask(grid, body, aoa, grid.nx + 1, grid.ny, true);
        let (phi_v, jets_v) = Self::mask(grid, body, aoa, grid.nx, grid.ny + 1, false);
        Self {
            phi_u,
            phi_v,
            jets_u,
            jets_v,
            geometry_key: Self::key(body, aoa),
        }
    }

    fn key(body: &BodyGeometry<T>, aoa: T) -> (Vec<[f64; 4]>, [f64; 3], f64) {
        (
            body.jets
                .iter()
                .map(|p| {
                    [
                        p.front_arc.center_angle.as_f64(),
                        p.front_arc.width.as_f64(),
                        p.rear_arc.center_angle.as_f64(),
                        p.rear_arc.width.as_f64(),
                    ]
                })
                .collect(),
            [body.center[0].as_f64(), body.center[1].as_f64(), body.radius.as_f64()],
            aoa.as_f64(),
        )
    }

    pub fn matches(&self, body: &BodyGeometry<T>, aoa: T) -> bool {
        self.geometry_key == Self::key(body, aoa)
    }

    fn mask(
        grid: &Grid<T>,
        body: &BodyGeometry<T>,
        aoa: T,
        ni: usize,
        nj: usize,
        is_u: bool,
    ) -> (Array2<T>, Vec<JetFace>) {
        let mut phi = Array2::zeros((ni, nj));
        let mut jets = Vec::new();
        let h = grid.dx.max(grid.dy);
        let reach = body.radius + h * T::lit(2.0);
        let shell = h * T::lit(1.5);
        let sub = T::from_usize_lossy(SUBSAMPLES);
        for i in 0..ni {
            for j in 0..nj {
                let p = if is_u { grid.u_face(i, j) } else { grid.v_face(i, j) };
                let rx = p[0] - body.center[0];
                let ry = p[1] - body.center[1];
                if rx.abs() > reach || ry.abs() > reach {
                    continue;
                }
                let mut inside = 0usize;
                for a in 0..SUBSAMPLES {
                    for b in 0..SUBSAMPLES {
                        let fx = (T::from_usize_lossy(a) + T::lit(0.5)) / sub - T::lit(0.5);
                        let fy = (T::from_usize_lossy(b) + T::lit(0.5)) / sub - T::lit(0.5);
                        let q = [p[0] + fx * grid.dx, p[1] + fy * grid.dy];
                        if body.distance_inside(q) > T::zero() {
                            inside += 1;
                        }
                    }
                }
                if inside == 0 {
                    continue;
                }
                phi[[i, j]] = T::from_usize_lossy(inside) / (sub * sub);
                let depth = body.distance_inside(p);
                if depth > shell {
                    continue;
                }
                let angle = body.surface_angle(p, aoa);
                let r = (rx * rx + ry * ry).sqrt();
                let normal = if is_u { rx / r } else { ry / r };
                for (k, pair) in body.jets.iter().enumerate() {
                    let front = pair.front_arc.contains(angle);
                    if front || pair.rear_arc.contains(angle) {
                        jets.push(JetFace {
                            i,
                            j,
                            pair: k,
                            front,
                            normal: normal.as_f64(),
                        });
                        break;
                    }
                }
            }
        }
        (phi, jets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body() -> BodyGeometry<f64> {
        BodyGeometry::cylinder([5.0, 5.0], vec![JetPair::default_pair()]).unwrap()
    }

    #[test]
    fn suction_front_blows_rear() {
        let b = body().apply_jets(&[-0.11], 0.3).unwrap();
        assert_eq!(b.jets[0].front_velocity, -0.11);
        assert_eq!(b.jets[0].rear_velocity(), 0.11);
        assert_eq!(b.net_surface_flux(), 0.0);
    }

    #[test]
    fn zero_action_is_unactuated() {
        let b = body().apply_jets(&[0.0], 0.3).unwrap();
        assert_eq!(b.jets[0].front_velocity, 0.0);
        assert_eq!(b.jets[0].rear_velocity(), 0.0);
        assert_eq!(b.net_surface_flux(), 0.0);
    }

    #[test]
    fn out_of_bound_action_rejected() {
        let err = body().apply_jets(&[0.5], 0.3).unwrap_err();
        assert!(matches!(err, SolverError::ActionRange { index: 0, .. }));
    }

    #[test]
    fn overlapping_arcs_rejected() {
        let mut pair = JetPair::<f64>::default_pair();
        pair.rear_arc.center_angle = pair.front_arc.center_angle + 0.05;
        assert!(BodyGeometry::cylinder([5.0, 5.0], vec![pair]).is_err());
    }

    #[test]
    fn jet_faces_are_mirror_symmetric() {
        let grid = Grid::new(40, 40, 10.0, 10.0, [0.0, 0.0]).unwrap();
        let ib = ImmersedBody::new(&grid, &body(), 0.0);
        let front = ib.jets_v.iter().filter(|f| f.front).count();
        let rear = ib.jets_v.iter().filter(|f| !f.front).count();
        assert!(front > 0);
        assert_eq!(front, rear);
        // fully covered faces near the centre
        assert_eq!(ib.phi_u[[20, 20]], 1.0);
        assert_eq!(ib.phi_u[[0, 0]], 0.0);
    }
}
