use std::sync::Arc;

use emac_core::diagnostics::{build_cylinder_test_field, drag_lift_stokes, ForceScales};
use emac_core::fespace::{interpolate, FieldVector};
use emac_core::mesh::{build_cylinder_channel, BoundaryTag, CylinderChannel, Mesh};
use emac_core::problems::{ChannelFlow, InflowSchedule};
use emac_core::solvers::{run_simulation, Discretization, ForceSetup, LinearSettings, Method, RunOptions, SchemeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_channel(height: f64) -> Arc<Mesh> {
    let g = CylinderChannel {
        height,
        around: 8,
        radial: 5,
        downstream: 12,
        ..Default::default()
    };
    Arc::new(build_cylinder_channel(&g).unwrap())
}

fn steady_inflow(height: f64, peak: f64) -> ChannelFlow {
    ChannelFlow {
        height,
        peak,
        schedule: InflowSchedule::Ramp { ramp: 0.0 },
    }
}

fn stokes_solve(disc: &mut Discretization, flow: &ChannelFlow, nu: f64) -> (FieldVector, FieldVector) {
    let a = disc.stiffness.scaled(nu);
    let f = vec![0.0; disc.vel.num_dofs()];
    let bc = disc.dirichlet_values(flow, 1.0);
    let sol = disc.solve(&a, &f, &bc).unwrap();
    (
        FieldVector::from_coeffs(Arc::clone(&disc.vel), sol.u).unwrap(),
        FieldVector::from_coeffs(Arc::clone(&disc.pres), sol.p).unwrap(),
    )
}

#[test]
fn stokes_forces_do_not_depend_on_the_interior_extension() {
    let mesh = small_channel(0.41);
    let mut disc = Discretization::new(&mesh, LinearSettings::default()).unwrap();
    let nu = 1e-3;
    let (u, p) = stokes_solve(&mut disc, &steady_inflow(0.41, 0.3), nu);
    let vd = build_cylinder_test_field(&disc.vel, BoundaryTag::CYLINDER, [1.0, 0.0]).unwrap();
    let vl = build_cylinder_test_field(&disc.vel, BoundaryTag::CYLINDER, [0.0, 1.0]).unwrap();
    let (cd, cl) = drag_lift_stokes(&u, &p, &vd, &vl, nu, ForceScales::default()).unwrap();
    assert!(cd > 0.0, "drag {cd}");

    let fixed = disc.is_dirichlet();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let mut perturb = |v: &FieldVector| {
            let c = v
                .coeffs()
                .iter()
                .zip(&fixed)
                .map(|(&x, &d)| if d { x } else { x + rng.gen_range(-1.0..1.0) })
                .collect();
            FieldVector::from_coeffs(Arc::clone(&disc.vel), c).unwrap()
        };
        let (wd, wl) = (perturb(&vd), perturb(&vl));
        let (cd2, cl2) = drag_lift_stokes(&u, &p, &wd, &wl, nu, ForceScales::default()).unwrap();
        assert!((cd2 - cd).abs() <= 1e-12 * cd.abs().max(1.0), "{cd} vs {cd2}");
        assert!((cl2 - cl).abs() <= 1e-12 * cd.abs().max(1.0), "{cl} vs {cl2}");
    }
}

#[test]
fn centered_cylinder_has_no_lift() {
    let mesh = small_channel(0.4);
    let mut disc = Discretization::new(&mesh, LinearSettings::default()).unwrap();
    let nu = 1e-3;
    let (u, p) = stokes_solve(&mut disc, &steady_inflow(0.4, 0.3), nu);
    let vd = build_cylinder_test_field(&disc.vel, BoundaryTag::CYLINDER, [1.0, 0.0]).unwrap();
    let vl = build_cylinder_test_field(&disc.vel, BoundaryTag::CYLINDER, [0.0, 1.0]).unwrap();
    let (cd, cl) = drag_lift_stokes(&u, &p, &vd, &vl, nu, ForceScales::default()).unwrap();
    assert!(cd > 0.0);
    assert!(cl.abs() <= 1e-10 * cd, "lift {cl} with drag {cd}");
}

#[test]
fn linear_pressure_drag_matches_its_boundary_integral() {
    // With u = 0 and p = x, integrating -(p, div v) by parts leaves the
    // volume integral of v_1 plus the area enclosed by the polygonal hole.
    let g = CylinderChannel {
        around: 8,
        radial: 5,
        downstream: 12,
        ..Default::default()
    };
    let mesh = Arc::new(build_cylinder_channel(&g).unwrap());
    let disc = Discretization::new(&mesh, LinearSettings::default()).unwrap();
    let u = FieldVector::zeros(Arc::clone(&disc.vel));
    let p = interpolate(|x, _| x[0], 0.0, &disc.pres).unwrap();
    let vd = build_cylinder_test_field(&disc.vel, BoundaryTag::CYLINDER, [1.0, 0.0]).unwrap();
    let vl = build_cylinder_test_field(&disc.vel, BoundaryTag::CYLINDER, [0.0, 1.0]).unwrap();
    let scales = ForceScales::default();
    let (cd, cl) = drag_lift_stokes(&u, &p, &vd, &vl, 1.0, scales).unwrap();

    let ones = disc.vel.load_vector(|_| [1.0, 0.0]).unwrap();
    let v1: f64 = ones.iter().zip(vd.coeffs()).map(|(a, b)| a * b).sum();
    let sides = (4 * g.around) as f64;
    let hole = 0.5 * sides * g.radius * g.radius * (2.0 * std::f64::consts::PI / sides).sin();
    let expected = -2.0 / (scales.diameter * scales.mean_velocity.powi(2)) * (v1 + hole);
    assert!((cd - expected).abs() < 1e-12 * expected.abs(), "{cd} vs {expected}");

    // p = y gives the same balance for the lift with the other component.
    let p = interpolate(|x, _| x[1], 0.0, &disc.pres).unwrap();
    let (_, cl_y) = drag_lift_stokes(&u, &p, &vd, &vl, 1.0, scales).unwrap();
    let ones = disc.vel.load_vector(|_| [0.0, 1.0]).unwrap();
    let v2: f64 = ones.iter().zip(vl.coeffs()).map(|(a, b)| a * b).sum();
    let expected = -2.0 / (scales.diameter * scales.mean_velocity.powi(2)) * (v2 + hole);
    assert!((cl_y - expected).abs() < 1e-12 * expected.abs(), "{cl_y} vs {expected}");

    // Constant pressure exerts no force on a closed body.
    let c = interpolate(|_, _| 3.0, 0.0, &disc.pres).unwrap();
    let (cd0, cl0) = drag_lift_stokes(&u, &c, &vd, &vl, 1.0, scales).unwrap();
    assert!(cd0.abs() < 1e-12 && cl0.abs() < 1e-12, "{cd0} {cl0} {cl}");
}

#[test]
fn test_field_is_supported_on_the_cylinder() {
    let mesh = small_channel(0.41);
    let disc = Discretization::new(&mesh, LinearSettings::default()).unwrap();
    let v = build_cylinder_test_field(&disc.vel, BoundaryTag::CYLINDER, [0.6, -0.8]).unwrap();
    let on_hole = |x: [f64; 2]| ((x[0] - 0.2).hypot(x[1] - 0.2) - 0.05).abs() < 1e-12;
    let n = disc.vel.num_scalar_dofs();
    let mut hits = 0;
    for (s, &x) in disc.vel.nodes().iter().enumerate() {
        let val = [v.coeffs()[s], v.coeffs()[n + s]];
        if on_hole(x) {
            hits += 1;
            assert_eq!(val, [0.6, -0.8]);
        } else if x[0] > 0.39 || x[0] < 0.01 {
            assert_eq!(val, [0.0, 0.0]);
        }
    }
    // Edge midpoints of the polygon lie inside the circle.
    assert_eq!(hits, 4 * 8);
    assert!(build_cylinder_test_field(&disc.vel, BoundaryTag(9), [1.0, 0.0]).is_err());
}

#[test]
fn zero_inflow_gives_zero_forces() {
    let mesh = small_channel(0.41);
    let flow = steady_inflow(0.41, 0.0);
    let mut cfg = SchemeConfig::new(1e-3, 0.05, 0.2);
    cfg.method = Method::OneLevel;
    let opts = RunOptions {
        forces: Some(ForceSetup::default()),
        pivot: [0.2, 0.2],
        ..Default::default()
    };
    let res = run_simulation(&flow, &cfg, &mesh, None, &opts, |_, _| {}).unwrap();
    assert_eq!(res.series.records.len(), 5);
    for r in &res.series.records {
        assert_eq!(r.forces, Some([0.0, 0.0, 0.0]), "t = {}", r.t);
    }
}
