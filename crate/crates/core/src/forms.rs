//! Discrete operators: mass, stiffness, divergence, and the five inertial
//! trilinear forms in evaluation and linearized-assembly modes.
//!
//! Gradients are stored row-wise, `grad[i][j] = d v_i / d x_j`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{FeSpace, FieldVector, QuadratureRule, Tabulation, DEGREE4, DEGREE6, MAX_LOCAL};
use crate::linalg::SparseOperator;
use crate::mesh::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FormKind {
    Conv,
    Emac,
    Skew,
    Rota,
    Dive,
}

impl FormKind {
    pub const ALL: [FormKind; 5] = [FormKind::Emac, FormKind::Conv, FormKind::Skew, FormKind::Rota, FormKind::Dive];

    pub fn name(self) -> &'static str {
        match self {
            FormKind::Conv => "conv",
            FormKind::Emac => "emac",
            FormKind::Skew => "skew",
            FormKind::Rota => "rota",
            FormKind::Dive => "dive",
        }
    }
}

impl fmt::Display for FormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FormKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown form kind '{s}'")))
    }
}

/// Which argument of `b(u, v, w)` holds the known field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrilinearSlot {
    /// `d -> b(a, d, .)`
    FixFirst,
    /// `d -> b(d, a, .)`
    FixSecond,
}

/// Value and gradient of a field at one point. Scalar fields use the first
/// component only.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
}

impl Jet {
    pub fn div(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }

    /// Scalar vorticity `d u2/dx - d u1/dy`.
    pub fn curl(&self) -> f64 {
        self.grad[1][0] - self.grad[0][1]
    }

    pub fn dot(&self, other: &Jet) -> f64 {
        self.value[0] * other.value[0] + self.value[1] * other.value[1]
    }

    /// `((u . grad) v) . w` with `self = u`.
    fn advect(&self, v: &Jet, w: &Jet) -> f64 {
        let mut s = 0.0;
        for i in 0..2 {
            s += w.value[i] * (self.value[0] * v.grad[i][0] + self.value[1] * v.grad[i][1]);
        }
        s
    }
}

/// Coefficients of a linear functional on jets, so that
/// `f(w) = cojet.value . w.value + cojet.grad : w.grad`.
fn cojet(f: impl Fn(&Jet) -> f64) -> Jet {
    let mut out = Jet::default();
    for i in 0..2 {
        let mut e = Jet::default();
        e.value[i] = 1.0;
        out.value[i] = f(&e);
        for j in 0..2 {
            let mut e = Jet::default();
            e.grad[i][j] = 1.0;
            out.grad[i][j] = f(&e);
        }
    }
    out
}

/// Pointwise integrand of `b_kind(u, v, w)`.
pub fn integrand(kind: FormKind, u: &Jet, v: &Jet, w: &Jet) -> f64 {
    match kind {
        FormKind::Conv => u.advect(v, w),
        FormKind::Emac => {
            let g = &u.grad;
            let mut s = u.div() * v.dot(w);
            for i in 0..2 {
                for j in 0..2 {
                    s += (g[i][j] + g[j][i]) * v.value[j] * w.value[i];
                }
            }
            s
        }
        FormKind::Skew => 0.5 * (u.advect(v, w) - u.advect(w, v)),
        FormKind::Rota => {
            let om = u.curl();
            -om * v.value[1] * w.value[0] + om * v.value[0] * w.value[1]
        }
        FormKind::Dive => u.advect(v, w) + u.div() * v.dot(w),
    }
}

/// Per-cell basis data at quadrature points: Jacobian-scaled weights and
/// physical gradients of the scalar shape functions.
struct CellFrame<'a> {
    rule: &'a QuadratureRule,
    tab: Tabulation,
    jw: Vec<f64>,
    grads: Vec<[[f64; 2]; MAX_LOCAL]>,
}

impl<'a> CellFrame<'a> {
    fn new(space: &FeSpace, rule: &'a QuadratureRule) -> Self {
        Self {
            rule,
            tab: space.tabulate(rule),
            jw: vec![0.0; rule.len()],
            grads: vec![[[0.0; 2]; MAX_LOCAL]; rule.len()],
        }
    }

    fn update(&mut self, space: &FeSpace, c: usize) {
        let geo = space.geometry(c);
        let nl = space.local_scalar();
        for q in 0..self.rule.len() {
            self.jw[q] = self.rule.weights[q] * 2.0 * geo.area;
            for i in 0..nl {
                self.grads[q][i] = geo.gradient(self.tab.derivatives[q][i]);
            }
        }
    }

    /// Pairing of a co-jet with local basis function `comp * nl + i`.
    fn pair(&self, q: usize, cj: &Jet, comp: usize, i: usize) -> f64 {
        let g = &self.grads[q][i];
        cj.value[comp] * self.tab.values[q][i] + cj.grad[comp][0] * g[0] + cj.grad[comp][1] * g[1]
    }

    fn field(&self, q: usize, field: &FieldVector, c: usize) -> Jet {
        let space = field.space();
        let dofs = space.scalar_cell_dofs(c);
        let n = space.num_scalar_dofs();
        let coeffs = field.coeffs();
        let mut j = Jet::default();
        for comp in 0..space.components() {
            for (i, &d) in dofs.iter().enumerate() {
                let a = coeffs[comp * n + d];
                j.value[comp] += a * self.tab.values[q][i];
                j.grad[comp][0] += a * self.grads[q][i][0];
                j.grad[comp][1] += a * self.grads[q][i][1];
            }
        }
        j
    }
}

/// Unit jet selecting one of the six value/gradient slots: `0..2` are
/// values, `2 + 2i + j` is `grad[i][j]`.
fn unit_jet(slot: usize) -> Jet {
    let mut e = Jet::default();
    if slot < 2 {
        e.value[slot] = 1.0;
    } else {
        e.grad[(slot - 2) / 2][(slot - 2) % 2] = 1.0;
    }
    e
}

/// Adds `jw * f(phi_s, phi_r)` to `blk[r * ld + s]` for all local basis
/// pairs at quadrature point `q`. `f` must be bilinear; it is sampled once
/// on unit jets and contracted with the three nonzero slots of each basis
/// jet.
fn accumulate_bilinear(frame: &CellFrame, q: usize, nl: usize, nc: usize, blk: &mut [f64], f: impl Fn(&Jet, &Jet) -> f64) {
    let units: [Jet; 6] = std::array::from_fn(unit_jet);
    let mut k = [[0.0; 6]; 6];
    for (a, ea) in units.iter().enumerate() {
        for (b, eb) in units.iter().enumerate() {
            k[a][b] = f(eb, ea);
        }
    }
    let slots = |comp: usize| [comp, 2 + 2 * comp, 3 + 2 * comp];
    let jw = frame.jw[q];
    let mut phi = [[0.0; 3]; MAX_LOCAL];
    for (i, p) in phi.iter_mut().enumerate().take(nl) {
        *p = [frame.tab.values[q][i], frame.grads[q][i][0], frame.grads[q][i][1]];
    }
    let phi = &phi[..nl];
    let ld = nl * nc;
    for cr in 0..nc {
        let sr = slots(cr);
        for cs in 0..nc {
            let sc = slots(cs);
            let sub: [[f64; 3]; 3] = std::array::from_fn(|a| std::array::from_fn(|b| jw * k[sr[a]][sc[b]]));
            if sub.iter().flatten().all(|&x| x == 0.0) {
                continue;
            }
            for (j, ps) in phi.iter().enumerate() {
                let t: [f64; 3] = std::array::from_fn(|a| sub[a][0] * ps[0] + sub[a][1] * ps[1] + sub[a][2] * ps[2]);
                let col = cs * nl + j;
                for (i, pr) in phi.iter().enumerate() {
                    blk[(cr * nl + i) * ld + col] += pr[0] * t[0] + pr[1] * t[1] + pr[2] * t[2];
                }
            }
        }
    }
}

fn same_mesh(a: &FeSpace, b: &FeSpace) -> Result<()> {
    if Arc::ptr_eq(a.mesh(), b.mesh()) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch("spaces live on different meshes".into()))
    }
}

fn bilinear(space: &FeSpace, rule: &QuadratureRule, kernel: impl Fn(&Jet, &Jet) -> f64) -> SparseOperator {
    let mut frame = CellFrame::new(space, rule);
    let (nl, nc) = (space.local_scalar(), space.components());
    space.square_assembler().assemble(|c, blk| {
        frame.update(space, c);
        for q in 0..rule.len() {
            accumulate_bilinear(&frame, q, nl, nc, blk, &kernel);
        }
    })
}

/// Gram matrix `(phi_j, phi_i)`.
pub fn assemble_mass(space: &FeSpace) -> SparseOperator {
    bilinear(space, &DEGREE4, |u, v| u.dot(v))
}

/// `(grad phi_j, grad phi_i)`, summed over components.
pub fn assemble_stiffness(space: &FeSpace) -> SparseOperator {
    bilinear(space, &DEGREE4, |u, v| {
        let (g, h) = (&u.grad, &v.grad);
        g[0][0] * h[0][0] + g[0][1] * h[0][1] + g[1][0] * h[1][0] + g[1][1] * h[1][1]
    })
}

/// `B[q, v] = (div phi_v, psi_q)`, pressure rows by velocity columns.
pub fn assemble_divergence(vel: &FeSpace, pres: &FeSpace) -> Result<SparseOperator> {
    same_mesh(vel, pres)?;
    if vel.components() != 2 || pres.components() != 1 {
        return Err(Error::SpaceMismatch("divergence needs a vector and a scalar space".into()));
    }
    let rule = &*DEGREE4;
    let mut vframe = CellFrame::new(vel, rule);
    let ptab = pres.tabulate(rule);
    let (nlv, nlp) = (vel.local_scalar(), pres.local_scalar());
    let ld = 2 * nlv;
    Ok(pres.assembler_with(vel).assemble(|c, blk| {
        vframe.update(vel, c);
        for q in 0..rule.len() {
            let jw = vframe.jw[q];
            for comp in 0..2 {
                for i in 0..nlv {
                    let d = vframe.grads[q][i][comp];
                    for (p, psi) in ptab.values[q][..nlp].iter().enumerate() {
                        blk[p * ld + comp * nlv + i] += jw * d * psi;
                    }
                }
            }
        }
    }))
}

/// Integrates `f(x, jets)` over the mesh shared by `fields`, with the
/// degree-6 rule.
pub fn integrate_jets<const K: usize>(fields: [&FieldVector; K], f: impl Fn(Point, &[Jet; K]) -> f64) -> Result<f64> {
    let Some(first) = fields.first() else {
        return Ok(0.0);
    };
    for g in &fields[1..] {
        same_mesh(first.space(), g.space())?;
    }
    let rule = &*DEGREE6;
    let mut frames: Vec<CellFrame> = fields.iter().map(|g| CellFrame::new(g.space(), rule)).collect();
    let mesh = first.space().mesh();
    let mut total = 0.0;
    for c in 0..mesh.num_cells() {
        for (frame, g) in frames.iter_mut().zip(&fields) {
            frame.update(g.space(), c);
        }
        let geo = first.space().geometry(c);
        for q in 0..rule.len() {
            let jets: [Jet; K] = std::array::from_fn(|k| frames[k].field(q, fields[k], c));
            total += frames[0].jw[q] * f(geo.point(rule.points[q]), &jets);
        }
    }
    Ok(total)
}

fn check_velocity(fields: &[&FieldVector], vel: &FeSpace) -> Result<()> {
    for g in fields {
        g.ensure_space(vel)?;
    }
    if vel.components() != 2 {
        return Err(Error::SpaceMismatch("trilinear forms need a vector space".into()));
    }
    Ok(())
}

/// `b_kind(u, v, w)` by the degree-6 rule, which is exact for P2 fields.
pub fn eval_trilinear(kind: FormKind, u: &FieldVector, v: &FieldVector, w: &FieldVector) -> Result<f64> {
    check_velocity(&[v, w], u.space())?;
    integrate_jets([u, v, w], |_, [a, b, c]| integrand(kind, a, b, c))
}

/// `r_i = b_kind(u, v, phi_i)`.
pub fn trilinear_vector(kind: FormKind, u: &FieldVector, v: &FieldVector) -> Result<Vec<f64>> {
    let space = u.space();
    check_velocity(&[v], space)?;
    let rule = &*DEGREE6;
    let mut frame = CellFrame::new(space, rule);
    let nl = space.local_scalar();
    let mut dofs = vec![0; 2 * nl];
    let mut out = vec![0.0; space.num_dofs()];
    for c in 0..space.mesh().num_cells() {
        frame.update(space, c);
        space.cell_dofs(c, &mut dofs);
        for q in 0..rule.len() {
            let (ju, jv) = (frame.field(q, u, c), frame.field(q, v, c));
            let cj = cojet(|w| integrand(kind, &ju, &jv, w));
            let jw = frame.jw[q];
            for comp in 0..2 {
                for i in 0..nl {
                    out[dofs[comp * nl + i]] += jw * frame.pair(q, &cj, comp, i);
                }
            }
        }
    }
    Ok(out)
}

fn linearized(
    wind: &FieldVector,
    vel: &FeSpace,
    local: impl Fn(&Jet, &Jet, &Jet) -> f64,
) -> Result<SparseOperator> {
    check_velocity(&[wind], vel)?;
    let rule = &*DEGREE6;
    let mut frame = CellFrame::new(vel, rule);
    let nl = vel.local_scalar();
    Ok(vel.square_assembler().assemble(|c, blk| {
        frame.update(vel, c);
        for q in 0..rule.len() {
            let a = frame.field(q, wind, c);
            accumulate_bilinear(&frame, q, nl, 2, blk, |d, w| local(&a, d, w));
        }
    }))
}

/// Matrix `N` with `c^T N d = b(a, d, c)` (fix-first) or `b(d, a, c)`
/// (fix-second), where `a` is the wind.
pub fn assemble_trilinear(kind: FormKind, slot: TrilinearSlot, wind: &FieldVector, vel: &FeSpace) -> Result<SparseOperator> {
    match slot {
        TrilinearSlot::FixFirst => linearized(wind, vel, |a, d, c| integrand(kind, a, d, c)),
        TrilinearSlot::FixSecond => linearized(wind, vel, |a, d, c| integrand(kind, d, a, c)),
    }
}

/// Sum of both slot linearizations about `wind`: the Jacobian of
/// `u -> b(u, u, .)` at `wind`.
pub fn assemble_trilinear_jacobian(kind: FormKind, wind: &FieldVector, vel: &FeSpace) -> Result<SparseOperator> {
    linearized(wind, vel, |a, d, c| integrand(kind, a, d, c) + integrand(kind, d, a, c))
}
