use std::sync::Arc;

use emac_core::fespace::{build_taylor_hood, interpolate, FeSpace, FieldVector};
use emac_core::forms::{assemble_mass, assemble_stiffness, eval_trilinear, integrate_jets, FormKind};
use emac_core::mesh::{build_structured_mesh, Rect};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

fn velocity_space(n: usize) -> Arc<FeSpace> {
    let mesh = Arc::new(build_structured_mesh(n, Rect::UNIT).unwrap());
    build_taylor_hood(&mesh).0
}

fn interior_field(space: &Arc<FeSpace>, rng: &mut ChaCha8Rng) -> FieldVector {
    let mut c: Vec<f64> = (0..space.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for d in space.boundary_dofs() {
        c[d] = 0.0;
    }
    FieldVector::from_coeffs(Arc::clone(space), c).unwrap()
}

fn div_dot(u: &FieldVector, v: &FieldVector, w: &FieldVector) -> f64 {
    integrate_jets([u, v, w], |_, [a, b, c]| a.div() * b.dot(c)).unwrap()
}

fn constant(space: &Arc<FeSpace>, e: [f64; 2]) -> FieldVector {
    interpolate(move |_, _| e, 0.0, space).unwrap()
}

fn rotation(space: &Arc<FeSpace>) -> FieldVector {
    interpolate(|p, _| [-p[1], p[0]], 0.0, space).unwrap()
}

fn b(kind: FormKind, u: &FieldVector, v: &FieldVector, w: &FieldVector) -> f64 {
    eval_trilinear(kind, u, v, w).unwrap()
}

/// Scale for relative comparisons: sums of several O(1) integrals.
fn close(lhs: f64, rhs: f64, scale: f64) -> bool {
    (lhs - rhs).abs() <= TOL * scale.max(1.0)
}

struct Suite {
    space: Arc<FeSpace>,
    e1: FieldVector,
    e2: FieldVector,
    phi: FieldVector,
}

impl Suite {
    fn new(n: usize) -> Self {
        let space = velocity_space(n);
        Self {
            e1: constant(&space, [1.0, 0.0]),
            e2: constant(&space, [0.0, 1.0]),
            phi: rotation(&space),
            space,
        }
    }

    fn check(&self, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v, w) = (
            interior_field(&self.space, &mut rng),
            interior_field(&self.space, &mut rng),
            interior_field(&self.space, &mut rng),
        );
        let mut failures = Vec::new();
        let mut expect = |name: &str, lhs: f64, rhs: f64, scale: f64| {
            if !close(lhs, rhs, scale) {
                failures.push(format!("{name}: {lhs:e} vs {rhs:e}"));
            }
        };

        let conv = b(FormKind::Conv, &u, &v, &w);
        let conv_swapped = b(FormKind::Conv, &u, &w, &v);
        let dd = div_dot(&u, &v, &w);
        let scale = conv.abs() + conv_swapped.abs() + dd.abs();
        expect("conv antisymmetry", conv, -conv_swapped - dd, scale);

        let emac = b(FormKind::Emac, &u, &v, &w);
        let c1 = b(FormKind::Conv, &v, &u, &w);
        let c2 = b(FormKind::Conv, &w, &u, &v);
        expect("emac via conv", emac, c1 + c2 + dd, emac.abs() + c1.abs() + c2.abs() + dd.abs());
        let c3 = b(FormKind::Conv, &u, &v, &w);
        let c4 = b(FormKind::Conv, &u, &w, &v);
        expect("emac via four conv terms", emac, c1 + c2 - c3 - c4, emac.abs() + c1.abs() + c2.abs() + c3.abs() + c4.abs());
        let cww = b(FormKind::Conv, &u, &w, &w);
        let half = -0.5 * div_dot(&u, &w, &w);
        expect("conv on repeated argument", cww, half, cww.abs() + half.abs());

        let uuu = b(FormKind::Emac, &u, &u, &u);
        expect("energy", uuu, 0.0, b(FormKind::Conv, &u, &u, &u).abs());
        for (name, c) in [("momentum e1", &self.e1), ("momentum e2", &self.e2), ("angular", &self.phi)] {
            let s = b(FormKind::Conv, &u, &u, c).abs();
            expect(name, b(FormKind::Emac, &u, &u, c), 0.0, s);
            let n = b(FormKind::Emac, &u, &v, c) + b(FormKind::Emac, &v, &u, c) - b(FormKind::Emac, &u, &u, c);
            expect(&format!("newton {name}"), n, 0.0, s + b(FormKind::Conv, &u, &v, c).abs());
        }
        let n_bb = b(FormKind::Emac, &u, &v, &v) + b(FormKind::Emac, &v, &u, &v) - b(FormKind::Emac, &u, &u, &v);
        let d = v.add_scaled(-1.0, &u).unwrap();
        let rhs = -b(FormKind::Emac, &d, &d, &v);
        expect("newton energy", n_bb, rhs, n_bb.abs() + rhs.abs());
        failures
    }
}

#[test]
fn trilinear_identities_on_random_interior_fields() {
    let suite = Suite::new(8);
    for seed in 0..20 {
        let failures = suite.check(seed);
        assert!(failures.is_empty(), "seed {seed}: {failures:?}");
    }
}

#[test]
fn constant_and_rotation_fields_are_exact() {
    let suite = Suite::new(4);
    let m = assemble_mass(&suite.space);
    // |(-y, x)|^2 integrated over the unit square is 2/3.
    assert!((m.bilinear(suite.phi.coeffs(), suite.phi.coeffs()) - 2.0 / 3.0).abs() < 1e-13);
    assert!((m.bilinear(suite.e1.coeffs(), suite.e1.coeffs()) - 1.0).abs() < 1e-13);
}

fn h1_norm(mass: &emac_core::linalg::SparseOperator, stiff: &emac_core::linalg::SparseOperator, u: &FieldVector) -> f64 {
    (mass.bilinear(u.coeffs(), u.coeffs()) + stiff.bilinear(u.coeffs(), u.coeffs())).sqrt()
}

#[test]
fn emac_form_is_bounded_by_h1_norms() {
    let space = velocity_space(6);
    let (mass, stiff) = (assemble_mass(&space), assemble_stiffness(&space));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ratios: Vec<f64> = (0..100)
        .map(|_| {
            let (u, v, w) = (
                interior_field(&space, &mut rng),
                interior_field(&space, &mut rng),
                interior_field(&space, &mut rng),
            );
            let norms = h1_norm(&mass, &stiff, &u) * h1_norm(&mass, &stiff, &v) * h1_norm(&mass, &stiff, &w);
            b(FormKind::Emac, &u, &v, &w).abs() / norms
        })
        .collect();
    let fitted = ratios[..50].iter().cloned().fold(0.0, f64::max);
    assert!(fitted.is_finite() && fitted > 0.0);
    for r in &ratios[50..] {
        assert!(*r <= 2.0 * fitted, "ratio {r} exceeds twice the fitted constant {fitted}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identities_hold_for_any_seed(seed in any::<u64>()) {
        thread_local!(static SUITE: Suite = Suite::new(4));
        let failures = SUITE.with(|s| s.check(seed));
        prop_assert!(failures.is_empty(), "{:?}", failures);
    }

    #[test]
    fn trilinear_forms_are_linear_in_each_slot(seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let space = velocity_space(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = || {
            let c = (0..space.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            FieldVector::from_coeffs(Arc::clone(&space), c).unwrap()
        };
        let (u, v, w, z) = (field(), field(), field(), field());
        let mix = |a: &FieldVector| a.add_scaled(alpha, &z).unwrap();
        for kind in FormKind::ALL {
            let pairs = [
                (b(kind, &mix(&u), &v, &w), b(kind, &u, &v, &w) + alpha * b(kind, &z, &v, &w)),
                (b(kind, &u, &mix(&v), &w), b(kind, &u, &v, &w) + alpha * b(kind, &u, &z, &w)),
                (b(kind, &u, &v, &mix(&w)), b(kind, &u, &v, &w) + alpha * b(kind, &u, &v, &z)),
            ];
            for (slot, (lhs, rhs)) in pairs.into_iter().enumerate() {
                prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()), "{kind} slot {slot}: {lhs} vs {rhs}");
            }
        }
    }
}
