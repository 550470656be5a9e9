use afc_core::solver2d::*;
use std::f64::consts::PI;

/// Velocity L2 error against the decaying Taylor–Green vortex at t = 1.
fn taylor_green_error(n: usize, re: f64) -> (f64, f64, f64) {
    let l = 2.0 * PI;
    let grid = Grid::new(n, n, l, l, [0.0, 0.0]).unwrap();
    let cfg = SolverConfig {
        re,
        boundary: Boundary::Periodic,
        poisson_tol: 1e-11,
        cfl: 0.4,
        ..SolverConfig::<f64>::default()
    };
    let nu = 1.0 / re;
    let exact_u = |x: f64, y: f64, t: f64| x.sin() * y.cos() * (-2.0 * nu * t).exp();
    let exact_v = |x: f64, y: f64, t: f64| -x.cos() * y.sin() * (-2.0 * nu * t).exp();
    let mut f = FlowField::zeros(grid.clone());
    f.u = ndarray::Array2::from_shape_fn(f.u.raw_dim(), |(i, j)| {
        let [x, y] = grid.u_face(i, j);
        exact_u(x, y, 0.0)
    });
    f.v = ndarray::Array2::from_shape_fn(f.v.raw_dim(), |(i, j)| {
        let [x, y] = grid.v_face(i, j);
        exact_v(x, y, 0.0)
    });
    let mut solver = Solver::new(grid.clone(), cfg).unwrap();
    let steps = (1.0 / solver.stable_dt(&f, None)).ceil() as usize;
    let dt = 1.0 / steps as f64;
    let ke0 = f.kinetic_energy();
    for _ in 0..steps {
        f = solver.step(&f, None, dt).unwrap();
        assert!(f.max_divergence() <= 1e-11);
    }
    let mut err = 0.0;
    for i in 0..n {
        for j in 0..n {
            let [x, y] = grid.u_face(i, j);
            err += (f.u[[i, j]] - exact_u(x, y, f.time)).powi(2);
            let [x, y] = grid.v_face(i, j);
            err += (f.v[[i, j]] - exact_v(x, y, f.time)).powi(2);
        }
    }
    let l2 = (err * grid.cell_volume() / (l * l)).sqrt();
    (l2, f.kinetic_energy() / ke0, f.time)
}

#[test]
fn taylor_green_second_order_convergence() {
    let re = 10.0;
    let errs: Vec<f64> = [16, 32, 64].iter().map(|&n| taylor_green_error(n, re).0).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    for o in &orders {
        assert!(*o >= 1.9, "errors {errs:?}, orders {orders:?}");
    }
}

#[test]
fn taylor_green_energy_decay_rate() {
    let re = 10.0;
    let (_, ratio, t) = taylor_green_error(64, re);
    let exact = (-4.0 / re * t).exp();
    assert!((ratio - exact).abs() / exact < 2e-3, "ratio {ratio} exact {exact}");
}

#[test]
fn steady_symmetric_wake_has_no_lift() {
    let cfg = SolverConfig {
        re: 20.0,
        ..SolverConfig::<f64>::default()
    };
    let grid = Grid::new(128, 96, 16.0, 12.0, [0.0, 0.0]).unwrap();
    let body = BodyGeometry::cylinder([5.0, 6.0], vec![JetPair::default_pair()]).unwrap();
    let mut solver = Solver::new(grid.clone(), cfg.clone()).unwrap();
    let mut f = FlowField::uniform(grid, &cfg);
    let mut last = (0.0, 0.0);
    while f.time < 40.0 {
        let dt = solver.stable_dt(&f, Some(&body));
        f = solver.step(&f, Some(&body), dt).unwrap();
        last = compute_forces(&f, &body, &cfg).unwrap();
    }
    let (cl, cd) = last;
    assert!(cl.abs() < 0.01, "C_l = {cl}");
    assert!(cd > 0.0);
}

#[test]
fn jets_conserve_mass_for_random_actions() {
    let body = BodyGeometry::<f64>::cylinder(
        [5.0, 5.0],
        vec![JetPair::default_pair(), {
            let mut p = JetPair::default_pair();
            p.front_arc.center_angle = 2.0;
            p.rear_arc.center_angle = 4.0;
            p
        }],
    )
    .unwrap();
    let mut x = 0.123_f64;
    for _ in 0..1000 {
        x = (x * 9301.0 + 49297.0) % 233280.0 / 233280.0;
        let a = (x - 0.5) * 0.6;
        let b = body.apply_jets(&[a, -0.7 * a], 0.3).unwrap();
        assert!(b.net_surface_flux().abs() <= 1e-12);
    }
}

#[test]
fn identical_inputs_give_bitwise_identical_trajectories() {
    let cfg = SolverConfig::<f64>::default();
    let grid = Grid::new(64, 48, 16.0, 12.0, [0.0, 0.0]).unwrap();
    let body = BodyGeometry::cylinder([5.0, 6.0], vec![JetPair::default_pair()]).unwrap();
    let run = || {
        let mut solver = Solver::new(grid.clone(), cfg.clone()).unwrap();
        let mut f = FlowField::uniform(grid.clone(), &cfg);
        let mut out = Vec::new();
        for k in 0..50 {
            let b = body.apply_jets(&[0.1 * ((k as f64) * 0.3).sin()], 0.3).unwrap();
            let dt = solver.stable_dt(&f, Some(&b));
            f = solver.step(&f, Some(&b), dt).unwrap();
            out.push(compute_forces(&f, &b, &cfg).unwrap());
        }
        (f, out)
    };
    let (fa, ra) = run();
    let (fb, rb) = run();
    assert_eq!(fa, fb);
    assert_eq!(ra, rb);
}

#[test]
fn single_precision_tracks_double_precision() {
    fn run<T: afc_core::Real>(n: usize) -> Vec<f64> {
        let l = T::lit(2.0 * PI);
        let grid = Grid::new(n, n, l, l, [T::zero(), T::zero()]).unwrap();
        let cfg = SolverConfig {
            re: T::lit(10.0),
            boundary: Boundary::Periodic,
            poisson_tol: T::lit(1e-5),
            ..SolverConfig::<T>::default()
        };
        let mut f = FlowField::zeros(grid.clone());
        f.u = ndarray::Array2::from_shape_fn(f.u.raw_dim(), |(i, j)| {
            let [x, y] = grid.u_face(i, j);
            x.sin() * y.cos()
        });
        f.v = ndarray::Array2::from_shape_fn(f.v.raw_dim(), |(i, j)| {
            let [x, y] = grid.v_face(i, j);
            -x.cos() * y.sin()
        });
        let mut solver = Solver::new(grid, cfg).unwrap();
        for _ in 0..20 {
            f = solver.step(&f, None, T::lit(0.02)).unwrap();
        }
        f.u.iter().map(|x| x.as_f64()).collect()
    }
    let single = run::<f32>(16);
    let double = run::<f64>(16);
    let worst = single
        .iter()
        .zip(&double)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}
