//! Conserved quantities, error norms, pressure recoveries, convergence
//! rates and the cylinder force functionals.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{l2_project_cellwise, FeSpace, FieldVector};
use crate::forms::{integrand, integrate_jets, FormKind};
use crate::mesh::{BoundaryTag, Mesh, Point};
use crate::problems::ExactSolution;

/// `||u||_0^2`.
pub fn energy(u: &FieldVector) -> f64 {
    integrate_jets([u], |_, [j]| j.dot(j)).expect("single field")
}

/// `integral u_axis`.
pub fn momentum(u: &FieldVector, axis: usize) -> f64 {
    integrate_jets([u], |_, [j]| j.value[axis]).expect("single field")
}

/// `integral (x - c_1) u_2 - (y - c_2) u_1`.
pub fn angular_momentum(u: &FieldVector, pivot: Point) -> f64 {
    integrate_jets([u], |x, [j]| (x[0] - pivot[0]) * j.value[1] - (x[1] - pivot[1]) * j.value[0]).expect("single field")
}

/// Integral of a closed-form function over the mesh, degree-6 rule.
pub fn integrate_function(mesh: &Mesh, f: impl Fn(Point) -> f64) -> f64 {
    let rule = &*crate::fespace::DEGREE6;
    let mut total = 0.0;
    for c in 0..mesh.num_cells() {
        let geo = crate::fespace::CellGeometry::new(mesh.cell_points(c));
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            total += w * 2.0 * geo.area * f(geo.point(*l));
        }
    }
    total
}

/// Subtracts the mean value of a scalar field.
pub fn zero_mean(p: &FieldVector) -> FieldVector {
    let mean = integrate_jets([p], |_, [j]| j.value[0]).expect("single field") / p.space().mesh().area();
    let coeffs = p.coeffs().iter().map(|c| c - mean).collect();
    FieldVector::from_coeffs(Arc::clone(p.space()), coeffs).expect("same length")
}

/// Physical pressure from the EMAC pressure: L2 projection of
/// `p_h + |u_h|^2 / 2` onto the pressure space, zero-meaned.
pub fn recover_primal_pressure(p: &FieldVector, u: &FieldVector) -> Result<FieldVector> {
    let pres = p.space();
    if !Arc::ptr_eq(pres.mesh(), u.space().mesh()) {
        return Err(Error::SpaceMismatch("pressure and velocity on different meshes".into()));
    }
    let proj = l2_project_cellwise(
        |c, l, _| {
            let v = u.value_in_cell(c, l).vector();
            p.value_in_cell(c, l).scalar() + 0.5 * (v[0] * v[0] + v[1] * v[1])
        },
        pres,
    )?;
    Ok(zero_mean(&proj))
}

/// Exact EMAC pressure `p - |u|^2 / 2 + lambda / |Omega|` at time `t`, with
/// `lambda = integral |u|^2 / 2` computed by quadrature on `mesh`.
pub fn emac_pressure_exact<'a>(exact: &'a dyn ExactSolution, t: f64, mesh: &Mesh) -> impl Fn(Point) -> f64 + 'a {
    let half_sq = move |x: Point| {
        let u = exact.velocity(x, t);
        0.5 * (u[0] * u[0] + u[1] * u[1])
    };
    let shift = integrate_function(mesh, half_sq) / mesh.area();
    move |x| exact.pressure(x, t) - half_sq(x) + shift
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub l2_velocity: f64,
    /// `||grad(u - u_h)||_0`.
    pub h1_velocity: f64,
    pub l2_pressure_primal: f64,
    pub l2_pressure_emac: f64,
}

/// Errors against an exact solution at time `t`, by quadrature at the
/// rule's points. Pressures are compared as zero-mean representatives.
pub fn error_norms(u: &FieldVector, p: &FieldVector, exact: &dyn ExactSolution, t: f64) -> Result<ErrorNorms> {
    let mesh = u.space().mesh();
    let area = mesh.area();
    let (vel_sq, grad_sq) = {
        let l2 = integrate_jets([u], |x, [j]| {
            let e = exact.velocity(x, t);
            (e[0] - j.value[0]).powi(2) + (e[1] - j.value[1]).powi(2)
        })?;
        let h1 = integrate_jets([u], |x, [j]| {
            let g = exact.velocity_gradient(x, t);
            let mut s = 0.0;
            for i in 0..2 {
                for k in 0..2 {
                    s += (g[i][k] - j.grad[i][k]).powi(2);
                }
            }
            s
        })?;
        (l2, h1)
    };

    let exact_mean = integrate_function(mesh, |x| exact.pressure(x, t)) / area;
    let primal = recover_primal_pressure(p, u)?;
    let primal_sq = integrate_jets([&primal], |x, [j]| (exact.pressure(x, t) - exact_mean - j.value[0]).powi(2))?;

    let p_emac = emac_pressure_exact(exact, t, mesh);
    let emac_mean = integrate_function(mesh, &p_emac) / area;
    let ph = zero_mean(p);
    let emac_sq = integrate_jets([&ph], |x, [j]| (p_emac(x) - emac_mean - j.value[0]).powi(2))?;

    Ok(ErrorNorms {
        l2_velocity: vel_sq.sqrt(),
        h1_velocity: grad_sq.sqrt(),
        l2_pressure_primal: primal_sq.sqrt(),
        l2_pressure_emac: emac_sq.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub h: f64,
    pub coarse_h: f64,
    pub dt: f64,
    pub errors: Vec<f64>,
    /// `None` on the first row.
    pub rates: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RateTable {
    pub columns: Vec<String>,
    pub rows: Vec<RateRow>,
}

/// Observed orders `log(e_{k-1} / e_k) / log(h_{k-1} / h_k)` against the
/// fine mesh size. Input rows are `(h, H, dt, errors)`.
pub fn convergence_rates(columns: &[&str], rows: &[(f64, f64, f64, Vec<f64>)]) -> Result<RateTable> {
    let mut out = RateTable {
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows: Vec::with_capacity(rows.len()),
    };
    for (k, (h, coarse_h, dt, errors)) in rows.iter().enumerate() {
        if errors.len() != columns.len() {
            return Err(Error::Config(format!("row {k} has {} errors for {} columns", errors.len(), columns.len())));
        }
        if let Some(&e) = errors.iter().find(|e| !(**e > 0.0)) {
            return Err(Error::NonPositiveError(e));
        }
        let rates = match k {
            0 => vec![None; errors.len()],
            _ => {
                let (hp, _, _, ep) = &rows[k - 1];
                errors.iter().zip(ep).map(|(e, p)| Some((p / e).ln() / (hp / h).ln())).collect()
            }
        };
        out.rows.push(RateRow {
            h: *h,
            coarse_h: *coarse_h,
            dt: *dt,
            errors: errors.clone(),
            rates,
        });
    }
    Ok(out)
}

impl RateTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("inv_h,inv_H,h,H,dt");
        for c in &self.columns {
            let _ = write!(s, ",{c},{c}_rate");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{},{},{}",
                (1.0 / r.h).round(),
                (1.0 / r.coarse_h).round(),
                fmt17(r.h),
                fmt17(r.coarse_h),
                fmt17(r.dt)
            );
            for (e, rate) in r.errors.iter().zip(&r.rates) {
                let _ = write!(s, ",{},{}", fmt17(*e), rate.map(fmt17).unwrap_or_default());
            }
            s.push('\n');
        }
        s
    }

    /// Human-readable table in the layout of a paper table.
    pub fn to_console(&self) -> String {
        let mut s = format!("{:>10}", "(1/h,1/H)");
        for c in &self.columns {
            let _ = write!(s, " {c:>22}");
        }
        s.push('\n');
        for r in &self.rows {
            let label = format!("({},{})", (1.0 / r.h).round(), (1.0 / r.coarse_h).round());
            let _ = write!(s, "{label:>10}");
            for (e, rate) in r.errors.iter().zip(&r.rates) {
                let cell = match rate {
                    Some(q) => format!("{e:.4e} ({q:.2})"),
                    None => format!("{e:.4e}"),
                };
                let _ = write!(s, " {cell:>22}");
            }
            s.push('\n');
        }
        s
    }
}

/// Nodal field equal to `direction` on the DOFs of edges tagged `tag` and
/// zero everywhere else.
pub fn build_cylinder_test_field(space: &Arc<FeSpace>, tag: BoundaryTag, direction: [f64; 2]) -> Result<FieldVector> {
    let dofs = space.tagged_scalar_dofs(tag).ok_or(Error::UnknownTag(tag.0))?;
    let n = space.num_scalar_dofs();
    let mut coeffs = vec![0.0; space.num_dofs()];
    for &s in dofs {
        for (comp, d) in direction.iter().enumerate().take(space.components()) {
            coeffs[comp * n + s] = *d;
        }
    }
    FieldVector::from_coeffs(Arc::clone(space), coeffs)
}

/// Scales of the force coefficients: cylinder diameter and mean inflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceScales {
    pub diameter: f64,
    pub mean_velocity: f64,
}

impl Default for ForceScales {
    fn default() -> Self {
        Self {
            diameter: 0.1,
            mean_velocity: 1.0,
        }
    }
}

fn force_functional(
    u: &FieldVector,
    du_dt: Option<&FieldVector>,
    p: &FieldVector,
    v: &FieldVector,
    nu: f64,
    kind: Option<FormKind>,
    scales: ForceScales,
) -> Result<f64> {
    v.ensure_space(u.space())?;
    let mut s = integrate_jets([u, v, p], |_, [a, w, q]| {
        let g = (0..2).map(|i| a.grad[i][0] * w.grad[i][0] + a.grad[i][1] * w.grad[i][1]).sum::<f64>();
        let inertia = kind.map_or(0.0, |k| integrand(k, a, a, w));
        nu * g + inertia - q.value[0] * w.div()
    })?;
    if let Some(dt) = du_dt {
        dt.ensure_space(u.space())?;
        s += integrate_jets([dt, v], |_, [a, w]| a.dot(w))?;
    }
    Ok(-2.0 / (scales.diameter * scales.mean_velocity.powi(2)) * s)
}

/// Volume-integral drag and lift coefficients
/// `-2 / (D U^2) [nu (grad u, grad v) + b(u, u, v) - (p, div v)]`.
pub fn drag_lift(
    u: &FieldVector,
    p: &FieldVector,
    v_drag: &FieldVector,
    v_lift: &FieldVector,
    nu: f64,
    kind: FormKind,
    scales: ForceScales,
) -> Result<(f64, f64)> {
    Ok((
        force_functional(u, None, p, v_drag, nu, Some(kind), scales)?,
        force_functional(u, None, p, v_lift, nu, Some(kind), scales)?,
    ))
}

/// As [`drag_lift`], adding the inertia term `(du/dt, v)` of unsteady flow.
#[allow(clippy::too_many_arguments)]
pub fn drag_lift_unsteady(
    u: &FieldVector,
    du_dt: &FieldVector,
    p: &FieldVector,
    v_drag: &FieldVector,
    v_lift: &FieldVector,
    nu: f64,
    kind: FormKind,
    scales: ForceScales,
) -> Result<(f64, f64)> {
    Ok((
        force_functional(u, Some(du_dt), p, v_drag, nu, Some(kind), scales)?,
        force_functional(u, Some(du_dt), p, v_lift, nu, Some(kind), scales)?,
    ))
}

/// Drag and lift of steady Stokes flow, without the inertial term.
pub fn drag_lift_stokes(
    u: &FieldVector,
    p: &FieldVector,
    v_drag: &FieldVector,
    v_lift: &FieldVector,
    nu: f64,
    scales: ForceScales,
) -> Result<(f64, f64)> {
    Ok((
        force_functional(u, None, p, v_drag, nu, None, scales)?,
        force_functional(u, None, p, v_lift, nu, None, scales)?,
    ))
}

/// `p(front) - p(back)`.
pub fn pressure_difference(p: &FieldVector, front: Point, back: Point) -> Result<f64> {
    Ok(p.evaluate(front)?.scalar() - p.evaluate(back)?.scalar())
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Record {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub momentum: [f64; 2],
    pub angular_momentum: f64,
    pub errors: Option<ErrorNorms>,
    /// Drag, lift, pressure difference.
    pub forces: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsSeries {
    pub label: String,
    pub pivot: Point,
    pub records: Vec<Record>,
    /// Step and reason, when the run stopped early.
    pub blow_up: Option<(usize, String)>,
}

/// 17 significant digits, the shortest width that round-trips every `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl DiagnosticsSeries {
    pub fn new(label: impl Into<String>, pivot: Point) -> Self {
        Self {
            label: label.into(),
            pivot,
            records: Vec::new(),
            blow_up: None,
        }
    }

    pub fn push(&mut self, r: Record) {
        debug_assert!(self.records.last().is_none_or(|l| l.t < r.t));
        self.records.push(r);
    }

    pub fn initial(&self) -> Option<&Record> {
        self.records.first()
    }

    /// Largest `|f(r) - f(r_0)|` over the series.
    pub fn max_drift(&self, f: impl Fn(&Record) -> f64) -> f64 {
        let Some(r0) = self.records.first() else {
            return 0.0;
        };
        let f0 = f(r0);
        self.records.iter().map(|r| (f(r) - f0).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let has_err = self.records.iter().any(|r| r.errors.is_some());
        let has_force = self.records.iter().any(|r| r.forces.is_some());
        let mut s = format!("# {} pivot={},{}\n", self.label, fmt17(self.pivot[0]), fmt17(self.pivot[1]));
        if let Some((step, why)) = &self.blow_up {
            let _ = writeln!(s, "# stopped at step {step}: {why}");
        }
        s.push_str("step,t,energy,momentum_x,momentum_y,angular_momentum");
        if has_err {
            s.push_str(",l2_velocity,h1_velocity,l2_pressure_primal,l2_pressure_emac");
        }
        if has_force {
            s.push_str(",drag,lift,pressure_difference");
        }
        s.push('\n');
        for r in &self.records {
            let _ = write!(
                s,
                "{},{},{},{},{},{}",
                r.step,
                fmt17(r.t),
                fmt17(r.energy),
                fmt17(r.momentum[0]),
                fmt17(r.momentum[1]),
                fmt17(r.angular_momentum)
            );
            if has_err {
                match r.errors {
                    Some(e) => {
                        let _ = write!(
                            s,
                            ",{},{},{},{}",
                            fmt17(e.l2_velocity),
                            fmt17(e.h1_velocity),
                            fmt17(e.l2_pressure_primal),
                            fmt17(e.l2_pressure_emac)
                        );
                    }
                    None => s.push_str(",,,,"),
                }
            }
            if has_force {
                match r.forces {
                    Some([d, l, p]) => {
                        let _ = write!(s, ",{},{},{}", fmt17(d), fmt17(l), fmt17(p));
                    }
                    None => s.push_str(",,,"),
                }
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{build_taylor_hood, interpolate, l2_project, prolongate};
    use crate::mesh::{build_structured_mesh, refine_by, Rect};
    use crate::problems::{LatticeVortex, Manufactured};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Arc<Mesh> {
        Arc::new(build_structured_mesh(n, Rect::UNIT).unwrap())
    }

    #[test]
    fn energy_examples() {
        let mesh = unit(36);
        let (vel, _) = build_taylor_hood(&mesh);
        assert_eq!(energy(&FieldVector::zeros(Arc::clone(&vel))), 0.0);
        let lv = LatticeVortex { nu: 1e-7 };
        let u0 = interpolate(|x, t| lv.velocity(x, t), 0.0, &vel).unwrap();
        assert!((energy(&u0) - 0.5).abs() < 1e-3);

        let coarse = unit(3);
        let (cv, _) = build_taylor_hood(&coarse);
        let fine = Arc::new(refine_by(&coarse, 2).unwrap());
        let (fv, _) = build_taylor_hood(&fine);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = FieldVector::from_coeffs(Arc::clone(&cv), (0..cv.num_dofs()).map(|_| rng.gen()).collect()).unwrap();
        let f = prolongate(&c, &fv).unwrap();
        assert!((energy(&c) - energy(&f)).abs() < 1e-12);
    }

    #[test]
    fn momentum_examples() {
        let (vel, _) = build_taylor_hood(&unit(8));
        let e1 = interpolate(|_, _| [1.0, 0.0], 0.0, &vel).unwrap();
        assert!((momentum(&e1, 0) - 1.0).abs() < 1e-14 && momentum(&e1, 1).abs() < 1e-15);
        let m = Manufactured { nu: 1.0 };
        let u = interpolate(|x, t| m.velocity(x, t), 0.0, &vel).unwrap();
        assert!(momentum(&u, 0).abs() < 1e-12);
        let (vel, _) = build_taylor_hood(&unit(36));
        let lv = LatticeVortex { nu: 1e-7 };
        let u = l2_project(|x| lv.velocity(x, 0.0), &vel).unwrap();
        assert!(momentum(&u, 0).abs() < 1e-12 && momentum(&u, 1).abs() < 1e-12);
        assert!(angular_momentum(&u, [0.0, 0.0]).abs() < 1e-10);
    }

    #[test]
    fn angular_momentum_examples() {
        let (vel, _) = build_taylor_hood(&unit(4));
        let c = [0.5, 0.5];
        let rot = interpolate(|x: Point, _| [-(x[1] - c[1]), x[0] - c[0]], 0.0, &vel).unwrap();
        assert!((angular_momentum(&rot, c) - 1.0 / 6.0).abs() < 1e-14);
        let k = interpolate(|_, _| [0.3, -1.2], 0.0, &vel).unwrap();
        assert!(angular_momentum(&k, c).abs() < 1e-12);
    }

    #[test]
    fn functionals_scale_as_their_degree() {
        let (vel, _) = build_taylor_hood(&unit(5));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let u = FieldVector::from_coeffs(Arc::clone(&vel), (0..vel.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let a: f64 = rng.gen_range(-3.0..3.0);
            let au = u.scaled(a);
            assert!((energy(&au) - a * a * energy(&u)).abs() < 1e-13 * energy(&au).max(1.0));
            assert!((momentum(&au, 1) - a * momentum(&u, 1)).abs() < 1e-13);
            let p = [0.2, 0.7];
            assert!((angular_momentum(&au, p) - a * angular_momentum(&u, p)).abs() < 1e-13);
        }
    }

    #[test]
    fn primal_pressure_recovery() {
        let mesh = unit(6);
        let (vel, pres) = build_taylor_hood(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = FieldVector::from_coeffs(Arc::clone(&pres), (0..pres.num_dofs()).map(|_| rng.gen()).collect()).unwrap();
        let pz = zero_mean(&p);

        let zero = FieldVector::zeros(Arc::clone(&vel));
        let r = recover_primal_pressure(&p, &zero).unwrap();
        for (a, b) in r.coeffs().iter().zip(pz.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
        let e1 = interpolate(|_, _| [1.0, 0.0], 0.0, &vel).unwrap();
        let r = recover_primal_pressure(&p, &e1).unwrap();
        for (a, b) in r.coeffs().iter().zip(pz.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }

        // Undoing the recovery returns the zero-meaned input up to the
        // projection of |u|^2 / 2.
        let u = FieldVector::from_coeffs(Arc::clone(&vel), (0..vel.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let r = recover_primal_pressure(&p, &u).unwrap();
        let ke = l2_project_cellwise(
            |c, l, _| {
                let v = u.value_in_cell(c, l).vector();
                0.5 * (v[0] * v[0] + v[1] * v[1])
            },
            &pres,
        )
        .unwrap();
        let back = FieldVector::from_coeffs(
            Arc::clone(&pres),
            r.coeffs().iter().zip(ke.coeffs()).map(|(a, b)| a - b).collect(),
        )
        .unwrap();
        for (a, b) in zero_mean(&back).coeffs().iter().zip(pz.coeffs()) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn exact_emac_pressure() {
        let mesh = unit(16);
        let m = Manufactured { nu: 1.0 };
        let pe = emac_pressure_exact(&m, 1.0, &mesh);
        assert!(integrate_function(&mesh, &pe).abs() < 1e-10);

        struct Still;
        impl ExactSolution for Still {
            fn velocity(&self, _: Point, _: f64) -> [f64; 2] {
                [0.6, 0.8]
            }
            fn velocity_gradient(&self, _: Point, _: f64) -> [[f64; 2]; 2] {
                [[0.0; 2]; 2]
            }
            fn pressure(&self, x: Point, _: f64) -> f64 {
                x[0] * x[1]
            }
        }
        let pe = emac_pressure_exact(&Still, 0.0, &mesh);
        assert!((pe([0.3, 0.4]) - 0.12).abs() < 1e-14);
    }

    #[test]
    fn error_norms_of_interpolant_converge() {
        let m = Manufactured { nu: 1.0 };
        let errs: Vec<f64> = [8, 16]
            .iter()
            .map(|&n| {
                let (vel, pres) = build_taylor_hood(&unit(n));
                let u = interpolate(|x, t| m.velocity(x, t), 0.5, &vel).unwrap();
                let p = interpolate(|x, t| m.pressure(x, t), 0.5, &pres).unwrap();
                error_norms(&u, &p, &m, 0.5).unwrap().l2_velocity
            })
            .collect();
        let rate = (errs[0] / errs[1]).log2();
        assert!((rate - 3.0).abs() < 0.2, "{rate}");
    }

    #[test]
    fn error_norms_vanish_for_discrete_solution() {
        struct Poly;
        impl ExactSolution for Poly {
            fn velocity(&self, x: Point, _: f64) -> [f64; 2] {
                [x[1] * x[1], x[0] * x[0]]
            }
            fn velocity_gradient(&self, x: Point, _: f64) -> [[f64; 2]; 2] {
                [[0.0, 2.0 * x[1]], [2.0 * x[0], 0.0]]
            }
            fn pressure(&self, x: Point, _: f64) -> f64 {
                x[0] - x[1]
            }
        }
        let (vel, pres) = build_taylor_hood(&unit(4));
        let u = interpolate(|x, t| Poly.velocity(x, t), 0.0, &vel).unwrap();
        let p = interpolate(|x, t| Poly.pressure(x, t), 0.0, &pres).unwrap();
        let e = error_norms(&u, &p, &Poly, 0.0).unwrap();
        assert!(e.l2_velocity < 1e-12 && e.h1_velocity < 1e-12);
        // The EMAC pressure of this field is not piecewise linear.
        let pe = emac_pressure_exact(&Poly, 0.0, vel.mesh());
        let pemac = l2_project(pe, &pres).unwrap();
        let e = error_norms(&u, &pemac, &Poly, 0.0).unwrap();
        assert!(e.l2_pressure_primal < 5e-3);
    }

    #[test]
    fn rate_examples() {
        let t = convergence_rates(&["e"], &[(0.25, 0.5, 0.1, vec![1e-2]), (0.125, 0.25, 0.1, vec![2.5e-3])]).unwrap();
        assert!((t.rows[1].rates[0].unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(t.rows[0].rates[0], None);
        let t = convergence_rates(&["e"], &[(0.25, 0.5, 0.1, vec![1e-2]), (0.125, 0.25, 0.1, vec![1e-2])]).unwrap();
        assert_eq!(t.rows[1].rates[0], Some(0.0));
        let t = convergence_rates(
            &["e"],
            &[(1.0 / 4.0, 0.5, 0.1, vec![1.6283e-2]), (1.0 / 16.0, 0.25, 0.1, vec![2.4919e-4])],
        )
        .unwrap();
        // The printed rate is rounded to two decimals.
        assert!((t.rows[1].rates[0].unwrap() - 3.02).abs() < 1e-2);
        assert!(convergence_rates(&["e"], &[(0.25, 0.5, 0.1, vec![0.0])]).is_err());
        let single = convergence_rates(&["e"], &[(0.25, 0.5, 0.1, vec![1.0])]).unwrap();
        assert!(single.to_csv().lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn pressure_difference_examples() {
        let (_, pres) = build_taylor_hood(&unit(4));
        let c = interpolate(|_, _| 3.0, 0.0, &pres).unwrap();
        assert!(pressure_difference(&c, [0.15, 0.2], [0.25, 0.2]).unwrap().abs() < 1e-14);
        let x = interpolate(|x: Point, _| x[0], 0.0, &pres).unwrap();
        assert!((pressure_difference(&x, [0.15, 0.2], [0.25, 0.2]).unwrap() + 0.1).abs() < 1e-15);
        let y = interpolate(|x: Point, _| x[1], 0.0, &pres).unwrap();
        assert!(pressure_difference(&y, [0.15, 0.2], [0.25, 0.2]).unwrap().abs() < 1e-15);
        assert!(pressure_difference(&y, [1.5, 0.2], [0.25, 0.2]).is_err());
    }

    #[test]
    fn csv_has_seventeen_digits() {
        let mut s = DiagnosticsSeries::new("emac", [0.5, 0.5]);
        s.push(Record {
            t: 0.1,
            energy: 1.0 / 3.0,
            ..Default::default()
        });
        let csv = s.to_csv();
        assert!(csv.contains("3.3333333333333331e-1"));
        let back: f64 = csv.lines().nth(2).unwrap().split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }
}
