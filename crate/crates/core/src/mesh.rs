//! Conforming triangular meshes of planar domains.
//!
//! A [`Mesh`] owns its vertex coordinates, counter-clockwise cells, tagged
//! boundary edges and a sorted table of unique edges. Meshes produced by
//! [`refine_uniform`] / [`refine_by`] keep a link to the mesh they were
//! refined from so that coarse functions can be embedded exactly in the fine
//! space.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// What a tagged part of the boundary stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryRole {
    Wall,
    Inflow,
    Outflow,
    Cylinder,
    Other,
}

/// Integer boundary identifier as it appears in mesh files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundaryTag(pub u32);

impl BoundaryTag {
    pub const WALL: Self = Self(1);
    pub const INFLOW: Self = Self(2);
    pub const OUTFLOW: Self = Self(3);
    pub const CYLINDER: Self = Self(4);

    pub fn role(self) -> BoundaryRole {
        match self.0 {
            1 => BoundaryRole::Wall,
            2 => BoundaryRole::Inflow,
            3 => BoundaryRole::Outflow,
            4 => BoundaryRole::Cylinder,
            _ => BoundaryRole::Other,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Genealogy of a refined mesh.
#[derive(Clone, Debug)]
pub struct Parent {
    pub mesh: Arc<Mesh>,
    /// For every child cell, the index of the parent cell containing it.
    pub cell_parent: Vec<usize>,
    /// Number of sub-intervals each parent edge was split into.
    pub factor: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    edges: Vec<[usize; 2]>,
    cell_edges: Vec<[usize; 3]>,
    edge_cells: Vec<[Option<usize>; 2]>,
    boundary_edge_ids: Vec<usize>,
    parent: Option<Parent>,
}

/// Local edges of a cell, as pairs of local vertex positions.
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl Mesh {
    /// Builds and validates a mesh. Cells must be counter-clockwise; every
    /// edge that belongs to exactly one cell must be listed in `boundary`.
    pub fn new(vertices: Vec<Point>, cells: Vec<[usize; 3]>, boundary: Vec<BoundaryEdge>) -> Result<Self> {
        Self::build(vertices, cells, boundary, None)
    }

    fn build(
        vertices: Vec<Point>,
        cells: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
        parent: Option<Parent>,
    ) -> Result<Self> {
        let nv = vertices.len();
        let mut used = vec![false; nv];
        for (c, cell) in cells.iter().enumerate() {
            for &v in cell {
                if v >= nv {
                    return Err(Error::Topology(format!("cell {c} references vertex {v} >= {nv}")));
                }
                used[v] = true;
            }
            if cell[0] == cell[1] || cell[1] == cell[2] || cell[0] == cell[2] {
                return Err(Error::Topology(format!("cell {c} repeats a vertex")));
            }
            let area = signed_area(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            if !(area > 0.0) {
                return Err(Error::Topology(format!(
                    "cell {c} has nonpositive signed area {area:e} (must be counter-clockwise)"
                )));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Topology(format!("dangling vertex {v} belongs to no cell")));
        }

        // Unique edges, sorted lexicographically by (min, max) vertex.
        let mut incidences: Vec<([usize; 2], usize, usize)> = Vec::with_capacity(3 * cells.len());
        for (c, cell) in cells.iter().enumerate() {
            for (l, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                incidences.push((sorted_pair(cell[*a], cell[*b]), c, l));
            }
        }
        incidences.sort_unstable();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut edge_cells: Vec<[Option<usize>; 2]> = Vec::new();
        let mut cell_edges = vec![[usize::MAX; 3]; cells.len()];
        for (pair, c, l) in incidences {
            if edges.last() != Some(&pair) {
                edges.push(pair);
                edge_cells.push([Some(c), None]);
            } else {
                let slot = edge_cells.last_mut().expect("edge pushed above");
                if slot[1].is_some() {
                    return Err(Error::Topology(format!(
                        "non-manifold edge ({}, {}) shared by more than two cells",
                        pair[0], pair[1]
                    )));
                }
                slot[1] = Some(c);
            }
            cell_edges[c][l] = edges.len() - 1;
        }

        let mut tagged = vec![false; edges.len()];
        let mut boundary_edge_ids = Vec::with_capacity(boundary.len());
        for be in &boundary {
            let [a, b] = be.vertices;
            let pair = sorted_pair(a, b);
            let e = edges
                .binary_search(&pair)
                .map_err(|_| Error::Topology(format!("boundary edge ({a}, {b}) is not an edge of any cell")))?;
            if edge_cells[e][1].is_some() {
                return Err(Error::Topology(format!("boundary edge ({a}, {b}) is interior")));
            }
            if tagged[e] {
                return Err(Error::Topology(format!("boundary edge ({a}, {b}) tagged twice")));
            }
            tagged[e] = true;
            boundary_edge_ids.push(e);
        }
        for (e, cells_of_edge) in edge_cells.iter().enumerate() {
            if cells_of_edge[1].is_none() && !tagged[e] {
                return Err(Error::Topology(format!(
                    "boundary edge ({}, {}) carries no tag",
                    edges[e][0], edges[e][1]
                )));
            }
        }

        Ok(Self {
            vertices,
            cells,
            boundary,
            edges,
            cell_edges,
            edge_cells,
            boundary_edge_ids,
            parent,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    /// Unique undirected edges as sorted vertex pairs.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Edge ids of each cell, in [`LOCAL_EDGES`] order.
    pub fn cell_edges(&self) -> &[[usize; 3]] {
        &self.cell_edges
    }

    /// Edge id of each entry of [`Mesh::boundary_edges`].
    pub fn boundary_edge_ids(&self) -> &[usize] {
        &self.boundary_edge_ids
    }

    pub fn parent(&self) -> Option<&Parent> {
        self.parent.as_ref()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&sorted_pair(a, b)).ok()
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_cells[e][1].is_none()
    }

    /// `V - E + T`; 1 for a simply connected domain, 0 with one hole.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_cells() as i64
    }

    pub fn cell_points(&self, c: usize) -> [Point; 3] {
        let [a, b, d] = self.cells[c];
        [self.vertices[a], self.vertices[b], self.vertices[d]]
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        let [a, b, d] = self.cell_points(c);
        signed_area(a, b, d)
    }

    /// Total area, accumulated with compensated summation.
    pub fn area(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for c in 0..self.num_cells() {
            let a = self.cell_area(c);
            let t = sum + a;
            comp += if sum.abs() >= a.abs() { (sum - t) + a } else { (a - t) + sum };
            sum = t;
        }
        sum + comp
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        LOCAL_EDGES
            .iter()
            .map(|[a, b]| (p[*a][0] - p[*b][0]).hypot(p[*a][1] - p[*b][1]))
            .fold(0.0, f64::max)
    }

    /// Largest cell diameter.
    pub fn size(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_diameter(c)).fold(0.0, f64::max)
    }

    /// Barycentric coordinates of `p` with respect to cell `c`.
    pub fn barycentric(&self, c: usize, p: Point) -> [f64; 3] {
        let [a, b, d] = self.cell_points(c);
        let area = signed_area(a, b, d);
        let l1 = signed_area(a, p, d) / area;
        let l2 = signed_area(a, b, p) / area;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Finds a cell containing `p` (boundary points included) and its
    /// barycentric coordinates.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for c in 0..self.num_cells() {
            let l = self.barycentric(c, p);
            let worst = l.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Some((c, l));
            }
            if worst >= -TOL && best.is_none_or(|(_, _, w)| worst > w) {
                best = Some((c, l, worst));
            }
        }
        best.map(|(c, l, _)| (c, l))
    }

    /// Index of the cell of `ancestor` that contains child cell `c`, if
    /// `ancestor` appears in this mesh's refinement chain.
    pub fn ancestor_cell(&self, c: usize, ancestor: &Mesh) -> Option<usize> {
        if std::ptr::eq(self, ancestor) {
            return Some(c);
        }
        let mut mesh = self;
        let mut cell = c;
        while let Some(parent) = mesh.parent.as_ref() {
            cell = parent.cell_parent[cell];
            mesh = &parent.mesh;
            if std::ptr::eq(mesh, ancestor) {
                return Some(cell);
            }
        }
        None
    }

    /// Whether `ancestor` is this mesh or one of its refinement ancestors.
    pub fn descends_from(&self, ancestor: &Mesh) -> bool {
        if self.num_cells() == 0 {
            return false;
        }
        self.ancestor_cell(0, ancestor).is_some()
    }

    /// Serializes in the plain-text mesh format read by [`load_mesh`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.vertices.len(), self.cells.len(), self.boundary.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:?} {:?}", v[0], v[1]);
        }
        for c in &self.cells {
            let _ = writeln!(out, "{} {} {}", c[0], c[1], c[2]);
        }
        for b in &self.boundary {
            let _ = writeln!(out, "{} {} {}", b.vertices[0], b.vertices[1], b.tag.0);
        }
        out
    }
}

/// Uniform `n x n` grid on `rect`, each square split by its
/// southwest-to-northeast diagonal. All boundary edges get the wall tag.
pub fn build_structured_mesh(n: usize, rect: Rect) -> Result<Mesh> {
    build_structured_mesh_tagged(n, rect, [BoundaryTag::WALL; 4])
}

/// Like [`build_structured_mesh`] with one tag per side, in the order
/// bottom, right, top, left.
pub fn build_structured_mesh_tagged(n: usize, rect: Rect, side_tags: [BoundaryTag; 4]) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidMeshParameters("need at least one cell per side".into()));
    }
    if !(rect.x1 > rect.x0) || !(rect.y1 > rect.y0) || !rect.area().is_finite() {
        return Err(Error::InvalidMeshParameters(format!("degenerate rectangle {rect:?}")));
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let nf = n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = if i == n { rect.x1 } else { rect.x0 + (rect.x1 - rect.x0) * (i as f64 / nf) };
            let y = if j == n { rect.y1 } else { rect.y0 + (rect.y1 - rect.y0) * (j as f64 / nf) };
            vertices.push([x, y]);
        }
    }
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (sw, se, ne, nw) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            cells.push([sw, se, ne]);
            cells.push([sw, ne, nw]);
        }
    }
    let mut boundary = Vec::with_capacity(4 * n);
    for i in 0..n {
        boundary.push(BoundaryEdge {
            vertices: [idx(i, 0), idx(i + 1, 0)],
            tag: side_tags[0],
        });
    }
    for j in 0..n {
        boundary.push(BoundaryEdge {
            vertices: [idx(n, j), idx(n, j + 1)],
            tag: side_tags[1],
        });
    }
    for i in (0..n).rev() {
        boundary.push(BoundaryEdge {
            vertices: [idx(i + 1, n), idx(i, n)],
            tag: side_tags[2],
        });
    }
    for j in (0..n).rev() {
        boundary.push(BoundaryEdge {
            vertices: [idx(0, j + 1), idx(0, j)],
            tag: side_tags[3],
        });
    }
    Mesh::new(vertices, cells, boundary)
}

/// Channel `(0, length) x (0, height)` with a circular hole, meshed as an
/// O-grid inside the block `(0, 2 cx) x (0, height)` and a structured strip
/// downstream of it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderChannel {
    pub length: f64,
    pub height: f64,
    pub center: Point,
    pub radius: f64,
    /// Cells along each side of the O-grid block; the hole gets `4 around`
    /// edges. Must be even so that the points level with the center on the
    /// hole are vertices.
    pub around: usize,
    /// Cell layers between the hole and the block.
    pub radial: usize,
    /// Ratio of consecutive layer thicknesses, growing away from the hole.
    pub grading: f64,
    /// Cells along the channel downstream of the block.
    pub downstream: usize,
}

impl Default for CylinderChannel {
    fn default() -> Self {
        Self {
            length: 2.2,
            height: 0.41,
            center: [0.2, 0.2],
            radius: 0.05,
            around: 16,
            radial: 12,
            grading: 1.2,
            downstream: 40,
        }
    }
}

/// Common ratio `r` of `n` widths starting at `w0` that add up to `total`.
fn geometric_ratio(w0: f64, n: usize, total: f64) -> f64 {
    let sum = |r: f64| {
        if (r - 1.0).abs() < 1e-12 {
            w0 * n as f64
        } else {
            w0 * (r.powi(n as i32) - 1.0) / (r - 1.0)
        }
    };
    let (mut lo, mut hi) = (1e-3, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum(mid) < total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn build_cylinder_channel(g: &CylinderChannel) -> Result<Mesh> {
    let [cx, cy] = g.center;
    let block = 2.0 * cx;
    let bad = |msg: String| Err(Error::InvalidMeshParameters(msg));
    if g.around < 2 || !g.around.is_multiple_of(2) {
        return bad(format!("cells per block side must be even and positive, got {}", g.around));
    }
    if g.radial == 0 || g.downstream == 0 {
        return bad("need at least one radial and one downstream cell".into());
    }
    if !(g.grading > 0.0) || !(g.radius > 0.0) {
        return bad("grading and radius must be positive".into());
    }
    if !(cx - g.radius > 0.0 && cy - g.radius > 0.0 && cy + g.radius < g.height && block < g.length) {
        return bad(format!("hole {:?} r={} does not fit the channel", g.center, g.radius));
    }

    let n = g.around;
    let ring = 4 * n;
    let corners = [[0.0, 0.0], [block, 0.0], [block, g.height], [0.0, g.height]];
    let on_block = |t: usize| -> Point {
        let (side, i) = (t / n, t % n);
        let (a, b) = (corners[side], corners[(side + 1) % 4]);
        let s = i as f64 / n as f64;
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    };
    let on_hole = |t: usize| -> Point {
        let theta = 1.25 * PI + 0.5 * PI * t as f64 / n as f64;
        [cx + g.radius * theta.cos(), cy + g.radius * theta.sin()]
    };
    let layer = |k: usize| -> f64 {
        if k == g.radial {
            1.0
        } else if (g.grading - 1.0).abs() < 1e-12 {
            k as f64 / g.radial as f64
        } else {
            (g.grading.powi(k as i32) - 1.0) / (g.grading.powi(g.radial as i32) - 1.0)
        }
    };

    let mut vertices = Vec::with_capacity(ring * (g.radial + 1) + g.downstream * (n + 1));
    for k in 0..=g.radial {
        let s = layer(k);
        for t in 0..ring {
            let (h, b) = (on_hole(t), on_block(t));
            vertices.push(if k == g.radial { b } else { [h[0] + s * (b[0] - h[0]), h[1] + s * (b[1] - h[1])] });
        }
    }
    let ogrid = |t: usize, k: usize| k * ring + t % ring;
    let strip_base = vertices.len();
    let w0 = g.height / n as f64;
    let ratio = geometric_ratio(w0, g.downstream, g.length - block);
    let mut x = block;
    let mut w = w0;
    for a in 1..=g.downstream {
        x = if a == g.downstream { g.length } else { x + w };
        w *= ratio;
        for r in 0..=n {
            vertices.push([x, on_block(n + r)[1]]);
        }
    }
    let strip = |a: usize, r: usize| if a == 0 { ogrid(n + r, g.radial) } else { strip_base + (a - 1) * (n + 1) + r };

    let mut cells = Vec::with_capacity(2 * ring * g.radial + 2 * n * g.downstream);
    let mut push_quad = |q: [usize; 4], rising: bool, vertices: &[Point]| {
        // Corners in cyclic order; `rising` picks the diagonal q0-q2.
        let tris = if rising { [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] } else { [[q[0], q[1], q[3]], [q[1], q[2], q[3]]] };
        for mut c in tris {
            if signed_area(vertices[c[0]], vertices[c[1]], vertices[c[2]]) < 0.0 {
                c.swap(1, 2);
            }
            cells.push(c);
        }
    };
    for k in 0..g.radial {
        for t in 0..ring {
            // Mirror-symmetric diagonals about the hole's horizontal axis.
            let upper = t >= n / 2 + n && t < n / 2 + 3 * n;
            push_quad([ogrid(t, k), ogrid(t + 1, k), ogrid(t + 1, k + 1), ogrid(t, k + 1)], upper, &vertices);
        }
    }
    for a in 0..g.downstream {
        for r in 0..n {
            push_quad([strip(a, r), strip(a + 1, r), strip(a + 1, r + 1), strip(a, r + 1)], 2 * r < n, &vertices);
        }
    }

    let mut boundary = Vec::with_capacity(ring + 2 * n + 2 * g.downstream);
    let mut edge = |a: usize, b: usize, tag: BoundaryTag| boundary.push(BoundaryEdge { vertices: [a, b], tag });
    for t in 0..ring {
        edge(ogrid(t, 0), ogrid(t + 1, 0), BoundaryTag::CYLINDER);
        let tag = match t / n {
            0 | 2 => Some(BoundaryTag::WALL),
            3 => Some(BoundaryTag::INFLOW),
            _ => None,
        };
        if let Some(tag) = tag {
            edge(ogrid(t, g.radial), ogrid(t + 1, g.radial), tag);
        }
    }
    for a in 0..g.downstream {
        edge(strip(a, 0), strip(a + 1, 0), BoundaryTag::WALL);
        edge(strip(a, n), strip(a + 1, n), BoundaryTag::WALL);
    }
    for r in 0..n {
        edge(strip(g.downstream, r), strip(g.downstream, r + 1), BoundaryTag::OUTFLOW);
    }
    Mesh::new(vertices, cells, boundary)
}

/// Splits every cell into four congruent children through edge midpoints.
pub fn refine_uniform(mesh: &Arc<Mesh>) -> Result<Mesh> {
    refine_by(mesh, 2)
}

/// Splits every edge into `k` equal parts and every cell into `k^2`
/// congruent children. The result records `mesh` as its parent.
pub fn refine_by(mesh: &Arc<Mesh>, k: usize) -> Result<Mesh> {
    if k == 0 {
        return Err(Error::InvalidMeshParameters("refinement factor must be positive".into()));
    }
    let nv = mesh.num_vertices();
    let ne = mesh.num_edges();
    let per_edge = k - 1;
    let per_cell = if k >= 3 { (k - 1) * (k - 2) / 2 } else { 0 };
    let kf = k as f64;

    let lerp = |p: Point, q: Point, t: usize| -> Point {
        let s = t as f64 / kf;
        [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]
    };

    let mut vertices = Vec::with_capacity(nv + ne * per_edge + mesh.num_cells() * per_cell);
    vertices.extend_from_slice(&mesh.vertices);
    for &[a, b] in &mesh.edges {
        for t in 1..k {
            vertices.push(lerp(mesh.vertices[a], mesh.vertices[b], t));
        }
    }
    // Point at fraction t/k from u towards v along an existing edge.
    let edge_point = |u: usize, v: usize, t: usize| -> usize {
        if t == 0 {
            return u;
        }
        if t == k {
            return v;
        }
        let e = mesh.edge_index(u, v).expect("cell edge present in edge table");
        let from_min = if mesh.edges[e][0] == u { t } else { k - t };
        nv + e * per_edge + (from_min - 1)
    };

    let interior_base = nv + ne * per_edge;
    let mut cells = Vec::with_capacity(mesh.num_cells() * k * k);
    let mut cell_parent = Vec::with_capacity(mesh.num_cells() * k * k);
    let mut lattice = vec![usize::MAX; (k + 1) * (k + 1)];
    for (c, &[a, b, d]) in mesh.cells.iter().enumerate() {
        let [pa, pb, pd] = mesh.cell_points(c);
        let mut next_interior = interior_base + c * per_cell;
        for j in 0..=k {
            for i in 0..=(k - j) {
                let id = if j == 0 {
                    edge_point(a, b, i)
                } else if i == 0 {
                    edge_point(a, d, j)
                } else if i + j == k {
                    edge_point(b, d, j)
                } else {
                    let (s, t) = (i as f64 / kf, j as f64 / kf);
                    let r = 1.0 - s - t;
                    vertices.push([
                        r * pa[0] + s * pb[0] + t * pd[0],
                        r * pa[1] + s * pb[1] + t * pd[1],
                    ]);
                    next_interior += 1;
                    next_interior - 1
                };
                lattice[j * (k + 1) + i] = id;
            }
        }
        let at = |i: usize, j: usize| lattice[j * (k + 1) + i];
        for j in 0..k {
            for i in 0..(k - j) {
                cells.push([at(i, j), at(i + 1, j), at(i, j + 1)]);
                cell_parent.push(c);
                if i + j + 2 <= k {
                    cells.push([at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
                    cell_parent.push(c);
                }
            }
        }
    }
    debug_assert_eq!(vertices.len(), interior_base + mesh.num_cells() * per_cell);

    let mut boundary = Vec::with_capacity(mesh.boundary.len() * k);
    for be in &mesh.boundary {
        let [u, v] = be.vertices;
        for t in 0..k {
            boundary.push(BoundaryEdge {
                vertices: [edge_point(u, v, t), edge_point(u, v, t + 1)],
                tag: be.tag,
            });
        }
    }

    Mesh::build(
        vertices,
        cells,
        boundary,
        Some(Parent {
            mesh: Arc::clone(mesh),
            cell_parent,
            factor: k,
        }),
    )
}

/// Largest cell diameter of `mesh`.
pub fn mesh_size(mesh: &Mesh) -> f64 {
    mesh.size()
}

/// Reads a mesh in the plain-text format: a header `V T B`, then `V` lines
/// `x y`, `T` lines `i j k` and `B` lines `i j tag`. `#` starts a comment.
/// Clockwise cells are reoriented with a warning.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text, path)
}

pub fn parse_mesh(text: &str, path: &Path) -> Result<Mesh> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    fn fields<T: std::str::FromStr, const N: usize>(
        line: usize,
        s: &str,
        err: &dyn Fn(usize, String) -> Error,
    ) -> Result<[T; N]> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != N {
            return Err(err(line, format!("expected {N} fields, found {}", parts.len())));
        }
        let mut out = Vec::with_capacity(N);
        for p in parts {
            out.push(p.parse::<T>().map_err(|_| err(line, format!("cannot parse '{p}'")))?);
        }
        Ok(out.try_into().unwrap_or_else(|_| unreachable!()))
    }

    let (hl, header) = lines.next().ok_or_else(|| err(1, "empty mesh file".into()))?;
    let [nv, nt, nb] = fields::<usize, 3>(hl, header, &err)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines.next().ok_or_else(|| err(0, "unexpected end of file in vertex block".into()))?;
        let xy = fields::<f64, 2>(l, s, &err)?;
        if !xy.iter().all(|v| v.is_finite()) {
            return Err(err(l, "non-finite coordinate".into()));
        }
        vertices.push(xy);
    }
    let mut cells = Vec::with_capacity(nt);
    let mut flipped = 0usize;
    for _ in 0..nt {
        let (l, s) = lines.next().ok_or_else(|| err(0, "unexpected end of file in cell block".into()))?;
        let mut c = fields::<usize, 3>(l, s, &err)?;
        if let Some(&v) = c.iter().find(|&&v| v >= nv) {
            return Err(err(l, format!("vertex index {v} out of range")));
        }
        if signed_area(vertices[c[0]], vertices[c[1]], vertices[c[2]]) < 0.0 {
            c.swap(1, 2);
            flipped += 1;
        }
        cells.push(c);
    }
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (l, s) = lines.next().ok_or_else(|| err(0, "unexpected end of file in boundary block".into()))?;
        let [a, b, t] = fields::<usize, 3>(l, s, &err)?;
        if a >= nv || b >= nv {
            return Err(err(l, "boundary vertex index out of range".into()));
        }
        let tag = u32::try_from(t).map_err(|_| err(l, format!("tag {t} out of range")))?;
        boundary.push(BoundaryEdge {
            vertices: [a, b],
            tag: BoundaryTag(tag),
        });
    }
    if let Some((l, _)) = lines.next() {
        return Err(err(l, "trailing data after boundary block".into()));
    }
    if flipped > 0 {
        log::warn!("{}: reoriented {flipped} clockwise cell(s)", path.display());
    }
    Mesh::new(vertices, cells, boundary)
}
