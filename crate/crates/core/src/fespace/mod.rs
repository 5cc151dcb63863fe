//! Lagrange finite element spaces on a [`Mesh`]: the Taylor-Hood pair
//! (vector P2 velocity, scalar P1 pressure), nodal interpolation,
//! L2 projection and exact prolongation between nested meshes.

pub mod element;
pub mod quadrature;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, CellAssembler, SparseOperator};
use crate::mesh::{BoundaryTag, Mesh, Point};

pub use element::{CellGeometry, ReferenceElement, MAX_LOCAL};
pub use quadrature::{QuadratureRule, DEGREE4, DEGREE6};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    VectorP2,
    ScalarP2,
    ScalarP1,
}

impl Family {
    pub fn element(self) -> ReferenceElement {
        match self {
            Family::VectorP2 | Family::ScalarP2 => ReferenceElement::P2,
            Family::ScalarP1 => ReferenceElement::P1,
        }
    }

    pub fn components(self) -> usize {
        match self {
            Family::VectorP2 => 2,
            _ => 1,
        }
    }
}

/// A conforming Lagrange space. Scalar DOFs are numbered vertices first,
/// then edge midpoints in edge-table order; vector DOFs are blocked by
/// component (`comp * num_scalar + scalar`).
#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    family: Family,
    element: ReferenceElement,
    num_scalar: usize,
    cell_dofs: Vec<[usize; MAX_LOCAL]>,
    nodes: Vec<Point>,
    dirichlet: BTreeMap<BoundaryTag, Vec<usize>>,
    boundary_scalar: Vec<usize>,
    square: OnceLock<CellAssembler>,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, family: Family) -> Arc<Self> {
        let element = family.element();
        let nv = mesh.num_vertices();
        let p2 = element.degree() == 2;
        let num_scalar = if p2 { nv + mesh.num_edges() } else { nv };

        let mut nodes = mesh.vertices().to_vec();
        if p2 {
            for &[a, b] in mesh.edges() {
                let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }

        let cell_dofs = mesh
            .cells()
            .iter()
            .zip(mesh.cell_edges())
            .map(|(v, e)| {
                let mut d = [usize::MAX; MAX_LOCAL];
                d[..3].copy_from_slice(v);
                if p2 {
                    for k in 0..3 {
                        d[3 + k] = nv + e[k];
                    }
                }
                d
            })
            .collect();

        let mut dirichlet: BTreeMap<BoundaryTag, Vec<usize>> = BTreeMap::new();
        for (be, &e) in mesh.boundary_edges().iter().zip(mesh.boundary_edge_ids()) {
            let set = dirichlet.entry(be.tag).or_default();
            set.extend_from_slice(&be.vertices);
            if p2 {
                set.push(nv + e);
            }
        }
        let mut boundary_scalar = Vec::new();
        for set in dirichlet.values_mut() {
            set.sort_unstable();
            set.dedup();
            boundary_scalar.extend_from_slice(set);
        }
        boundary_scalar.sort_unstable();
        boundary_scalar.dedup();

        Arc::new(Self {
            mesh,
            family,
            element,
            num_scalar,
            cell_dofs,
            nodes,
            dirichlet,
            boundary_scalar,
            square: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn element(&self) -> ReferenceElement {
        self.element
    }

    pub fn components(&self) -> usize {
        self.family.components()
    }

    pub fn num_scalar_dofs(&self) -> usize {
        self.num_scalar
    }

    pub fn num_dofs(&self) -> usize {
        self.num_scalar * self.components()
    }

    /// Local basis size per component.
    pub fn local_scalar(&self) -> usize {
        self.element.num_basis()
    }

    /// Local basis size including components.
    pub fn local_dofs(&self) -> usize {
        self.local_scalar() * self.components()
    }

    pub fn scalar_cell_dofs(&self, c: usize) -> &[usize] {
        &self.cell_dofs[c][..self.local_scalar()]
    }

    /// Global DOFs of cell `c`, component-major.
    pub fn cell_dofs(&self, c: usize, out: &mut [usize]) {
        let nl = self.local_scalar();
        for comp in 0..self.components() {
            for i in 0..nl {
                out[comp * nl + i] = comp * self.num_scalar + self.cell_dofs[c][i];
            }
        }
    }

    /// Coordinates of every scalar DOF.
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn boundary_tags(&self) -> impl Iterator<Item = BoundaryTag> + '_ {
        self.dirichlet.keys().copied()
    }

    /// Scalar DOFs lying on edges with the given tag.
    pub fn tagged_scalar_dofs(&self, tag: BoundaryTag) -> Option<&[usize]> {
        self.dirichlet.get(&tag).map(Vec::as_slice)
    }

    /// All scalar DOFs on the boundary.
    pub fn boundary_scalar_dofs(&self) -> &[usize] {
        &self.boundary_scalar
    }

    /// All DOFs (every component) on the boundary, sorted.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        (0..self.components())
            .flat_map(|comp| self.boundary_scalar.iter().map(move |&s| comp * self.num_scalar + s))
            .collect()
    }

    pub fn geometry(&self, c: usize) -> CellGeometry {
        CellGeometry::new(self.mesh.cell_points(c))
    }

    pub fn same_as(&self, other: &FeSpace) -> bool {
        std::ptr::eq(self, other) || (Arc::ptr_eq(&self.mesh, &other.mesh) && self.family == other.family)
    }

    /// Assembler for square operators on this space, built once so that
    /// every such operator shares one sparsity pattern.
    pub fn square_assembler(&self) -> &CellAssembler {
        self.square.get_or_init(|| self.assembler_with(self))
    }

    /// Assembler with rows indexed by `self` (test) and columns by `trial`.
    pub fn assembler_with(&self, trial: &FeSpace) -> CellAssembler {
        CellAssembler::new(
            self.num_dofs(),
            trial.num_dofs(),
            self.mesh.num_cells(),
            self.local_dofs(),
            trial.local_dofs(),
            |c, b| self.cell_dofs(c, b),
            |c, b| trial.cell_dofs(c, b),
        )
    }

    /// Tabulates basis values and barycentric derivatives at the rule's
    /// points.
    pub fn tabulate(&self, rule: &QuadratureRule) -> Tabulation {
        Tabulation::new(self.element, rule)
    }

    /// `integral(f * phi_i)` for every DOF, with the degree-6 rule.
    pub fn load_vector<V: NodalValue>(&self, f: impl Fn(Point) -> V) -> Result<Vec<f64>> {
        self.load_vector_cellwise(|_, _, x| f(x))
    }

    /// Like [`FeSpace::load_vector`], for integrands that depend on the cell
    /// and barycentric point as well (e.g. other finite element fields).
    pub fn load_vector_cellwise<V: NodalValue>(&self, mut f: impl FnMut(usize, [f64; 3], Point) -> V) -> Result<Vec<f64>> {
        check_components::<V>(self)?;
        let rule = &*DEGREE6;
        let tab = self.tabulate(rule);
        let nl = self.local_scalar();
        let mut out = vec![0.0; self.num_dofs()];
        let mut dofs = vec![0; self.local_dofs()];
        for c in 0..self.mesh.num_cells() {
            let geo = self.geometry(c);
            self.cell_dofs(c, &mut dofs);
            for (q, &w) in rule.weights.iter().enumerate() {
                let l = rule.points[q];
                let fx = f(c, l, geo.point(l));
                let jw = w * 2.0 * geo.area;
                for comp in 0..V::N {
                    let fc = fx.component(comp);
                    for i in 0..nl {
                        out[dofs[comp * nl + i]] += jw * fc * tab.values[q][i];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Basis values and barycentric derivatives at quadrature points.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub values: Vec<[f64; MAX_LOCAL]>,
    pub derivatives: Vec<[[f64; 3]; MAX_LOCAL]>,
}

impl Tabulation {
    pub fn new(element: ReferenceElement, rule: &QuadratureRule) -> Self {
        Self {
            values: rule.points.iter().map(|&l| element.values(l)).collect(),
            derivatives: rule.points.iter().map(|&l| element.barycentric_derivatives(l)).collect(),
        }
    }
}

/// Values a field takes at a point: `f64` for scalar spaces and `[f64; 2]`
/// for vector spaces.
pub trait NodalValue: Copy {
    const N: usize;
    fn component(&self, i: usize) -> f64;
}

impl NodalValue for f64 {
    const N: usize = 1;
    fn component(&self, _: usize) -> f64 {
        *self
    }
}

impl NodalValue for [f64; 2] {
    const N: usize = 2;
    fn component(&self, i: usize) -> f64 {
        self[i]
    }
}

fn check_components<V: NodalValue>(space: &FeSpace) -> Result<()> {
    if V::N != space.components() {
        return Err(Error::SpaceMismatch(format!(
            "function has {} component(s), space {:?} has {}",
            V::N,
            space.family(),
            space.components()
        )));
    }
    Ok(())
}

/// Coefficients of a finite element function.
#[derive(Clone, Debug)]
pub struct FieldVector {
    space: Arc<FeSpace>,
    coeffs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointValue {
    Scalar(f64),
    Vector([f64; 2]),
}

impl PointValue {
    pub fn scalar(self) -> f64 {
        match self {
            PointValue::Scalar(v) => v,
            PointValue::Vector(v) => v[0],
        }
    }

    pub fn vector(self) -> [f64; 2] {
        match self {
            PointValue::Scalar(v) => [v, 0.0],
            PointValue::Vector(v) => v,
        }
    }
}

impl FieldVector {
    pub fn zeros(space: Arc<FeSpace>) -> Self {
        let coeffs = vec![0.0; space.num_dofs()];
        Self { space, coeffs }
    }

    pub fn from_coeffs(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.num_dofs() {
            return Err(Error::SpaceMismatch(format!(
                "{} coefficients for a space with {} DOFs",
                coeffs.len(),
                space.num_dofs()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn ensure_space(&self, space: &FeSpace) -> Result<()> {
        if self.space.same_as(space) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(format!(
                "field on {:?} space with {} DOFs, expected {:?} space with {} DOFs",
                self.space.family(),
                self.space.num_dofs(),
                space.family(),
                space.num_dofs()
            )))
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().map(|c| alpha * c).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &FieldVector) -> Result<Self> {
        other.ensure_space(&self.space)?;
        Ok(Self {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + alpha * b).collect(),
        })
    }

    /// Value at barycentric point `l` of cell `c`.
    pub fn value_in_cell(&self, c: usize, l: [f64; 3]) -> PointValue {
        let space = &self.space;
        let phi = space.element.values(l);
        let dofs = space.scalar_cell_dofs(c);
        let n = space.num_scalar;
        let mut v = [0.0; 2];
        for (comp, vc) in v.iter_mut().enumerate().take(space.components()) {
            *vc = dofs.iter().zip(&phi).map(|(&d, p)| self.coeffs[comp * n + d] * p).sum();
        }
        if space.components() == 1 {
            PointValue::Scalar(v[0])
        } else {
            PointValue::Vector(v)
        }
    }

    /// Gradient rows (one per component) at barycentric point `l` of cell `c`.
    pub fn gradient_in_cell(&self, c: usize, l: [f64; 3]) -> [[f64; 2]; 2] {
        let space = &self.space;
        let geo = space.geometry(c);
        let d = space.element.barycentric_derivatives(l);
        let dofs = space.scalar_cell_dofs(c);
        let n = space.num_scalar;
        let mut g = [[0.0; 2]; 2];
        for (comp, gc) in g.iter_mut().enumerate().take(space.components()) {
            for (i, &dof) in dofs.iter().enumerate() {
                let gi = geo.gradient(d[i]);
                let coef = self.coeffs[comp * n + dof];
                gc[0] += coef * gi[0];
                gc[1] += coef * gi[1];
            }
        }
        g
    }

    pub fn evaluate(&self, p: Point) -> Result<PointValue> {
        evaluate(self, p)
    }
}

/// Taylor-Hood pair on one mesh: vector P2 velocity and scalar P1 pressure.
pub fn build_taylor_hood(mesh: &Arc<Mesh>) -> (Arc<FeSpace>, Arc<FeSpace>) {
    (
        FeSpace::new(Arc::clone(mesh), Family::VectorP2),
        FeSpace::new(Arc::clone(mesh), Family::ScalarP1),
    )
}

/// Nodal interpolation of `f(., t)`.
pub fn interpolate<V: NodalValue>(f: impl Fn(Point, f64) -> V, t: f64, space: &Arc<FeSpace>) -> Result<FieldVector> {
    check_components::<V>(space)?;
    let n = space.num_scalar;
    let mut coeffs = vec![0.0; space.num_dofs()];
    for (s, &x) in space.nodes.iter().enumerate() {
        let v = f(x, t);
        for comp in 0..V::N {
            coeffs[comp * n + s] = v.component(comp);
        }
    }
    Ok(FieldVector {
        space: Arc::clone(space),
        coeffs,
    })
}

/// Scalar mass matrix of the space's element (one component).
fn scalar_mass(space: &FeSpace) -> SparseOperator {
    let scalar = match space.family {
        Family::VectorP2 => FeSpace::new(Arc::clone(&space.mesh), Family::ScalarP2),
        f => FeSpace::new(Arc::clone(&space.mesh), f),
    };
    let rule = &*DEGREE4;
    let tab = scalar.tabulate(rule);
    let nl = scalar.local_scalar();
    scalar.square_assembler().assemble(|c, blk| {
        let geo = scalar.geometry(c);
        for (q, &w) in rule.weights.iter().enumerate() {
            let jw = w * 2.0 * geo.area;
            let phi = &tab.values[q];
            for i in 0..nl {
                for j in 0..nl {
                    blk[i * nl + j] += jw * phi[i] * phi[j];
                }
            }
        }
    })
}

/// L2 projection onto `space` by a mass-matrix solve.
pub fn l2_project<V: NodalValue>(f: impl Fn(Point) -> V, space: &Arc<FeSpace>) -> Result<FieldVector> {
    solve_projection(space, space.load_vector(f)?)
}

/// L2 projection of an integrand given per cell and barycentric point.
pub fn l2_project_cellwise<V: NodalValue>(
    f: impl FnMut(usize, [f64; 3], Point) -> V,
    space: &Arc<FeSpace>,
) -> Result<FieldVector> {
    solve_projection(space, space.load_vector_cellwise(f)?)
}

fn solve_projection(space: &Arc<FeSpace>, b: Vec<f64>) -> Result<FieldVector> {
    let mass = scalar_mass(space);
    let n = space.num_scalar;
    let mut coeffs = vec![0.0; space.num_dofs()];
    for comp in 0..space.components() {
        let (x, res) = solve_spd(&mass, &b[comp * n..(comp + 1) * n])?;
        if res > 1e-12 {
            return Err(Error::ResidualTolerance {
                residual: res,
                tolerance: 1e-12,
            });
        }
        coeffs[comp * n..(comp + 1) * n].copy_from_slice(&x);
    }
    Ok(FieldVector {
        space: Arc::clone(space),
        coeffs,
    })
}

/// Embeds a coarse field into a space on a refinement of its mesh by
/// evaluating it at the fine nodes.
pub fn prolongate(coarse: &FieldVector, fine_space: &Arc<FeSpace>) -> Result<FieldVector> {
    let cspace = &coarse.space;
    if cspace.family != fine_space.family {
        return Err(Error::SpaceMismatch(format!(
            "cannot prolongate {:?} into {:?}",
            cspace.family, fine_space.family
        )));
    }
    let cmesh = &cspace.mesh;
    let fmesh = &fine_space.mesh;
    if !fmesh.descends_from(cmesh) {
        return Err(Error::NotNested("fine mesh is not a refinement of the coarse mesh".into()));
    }
    let nodes = fine_space.element.nodes();
    let nf = fine_space.num_scalar;
    let mut coeffs = vec![0.0; fine_space.num_dofs()];
    for fc in 0..fmesh.num_cells() {
        let cc = fmesh.ancestor_cell(fc, cmesh).expect("nesting checked above");
        let fgeo = fine_space.geometry(fc);
        for (i, &node) in nodes.iter().enumerate() {
            let x = fgeo.point(node);
            let l = cmesh.barycentric(cc, x);
            let v = coarse.value_in_cell(cc, l).vector();
            let s = fine_space.cell_dofs[fc][i];
            for (comp, vc) in v.iter().enumerate().take(fine_space.components()) {
                coeffs[comp * nf + s] = *vc;
            }
        }
    }
    Ok(FieldVector {
        space: Arc::clone(fine_space),
        coeffs,
    })
}

/// Point evaluation; fails outside the (polygonal) domain.
pub fn evaluate(field: &FieldVector, p: Point) -> Result<PointValue> {
    let (c, l) = field.space.mesh.locate(p).ok_or(Error::PointOutside(p[0], p[1]))?;
    Ok(field.value_in_cell(c, l))
}
