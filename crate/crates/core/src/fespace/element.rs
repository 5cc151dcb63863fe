//! Lagrange P1 and P2 bases on triangles, written in barycentric coordinates.

use crate::mesh::{Point, LOCAL_EDGES};

/// Maximum number of local basis functions (P2).
pub const MAX_LOCAL: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ReferenceElement {
    degree: usize,
}

impl ReferenceElement {
    pub const P1: Self = Self { degree: 1 };
    pub const P2: Self = Self { degree: 2 };

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_basis(&self) -> usize {
        match self.degree {
            1 => 3,
            _ => 6,
        }
    }

    /// Nodes in barycentric coordinates: vertices, then midpoints of the
    /// local edges (0,1), (1,2), (2,0).
    pub fn nodes(&self) -> Vec<[f64; 3]> {
        let mut nodes = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        if self.degree == 2 {
            for [a, b] in LOCAL_EDGES {
                let mut l = [0.0; 3];
                l[a] = 0.5;
                l[b] = 0.5;
                nodes.push(l);
            }
        }
        nodes
    }

    /// Basis values at barycentric point `l`.
    pub fn values(&self, l: [f64; 3]) -> [f64; MAX_LOCAL] {
        let mut v = [0.0; MAX_LOCAL];
        match self.degree {
            1 => v[..3].copy_from_slice(&l),
            _ => {
                for i in 0..3 {
                    v[i] = l[i] * (2.0 * l[i] - 1.0);
                }
                for (e, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                    v[3 + e] = 4.0 * l[*a] * l[*b];
                }
            }
        }
        v
    }

    /// Partial derivatives of each basis function with respect to the three
    /// barycentric coordinates, treated as independent variables.
    pub fn barycentric_derivatives(&self, l: [f64; 3]) -> [[f64; 3]; MAX_LOCAL] {
        let mut d = [[0.0; 3]; MAX_LOCAL];
        match self.degree {
            1 => {
                for (i, row) in d.iter_mut().take(3).enumerate() {
                    row[i] = 1.0;
                }
            }
            _ => {
                for (i, row) in d.iter_mut().take(3).enumerate() {
                    row[i] = 4.0 * l[i] - 1.0;
                }
                for (e, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                    d[3 + e][*a] = 4.0 * l[*b];
                    d[3 + e][*b] = 4.0 * l[*a];
                }
            }
        }
        d
    }
}

/// Affine geometry of one cell: area and the constant gradients of the
/// barycentric coordinates.
#[derive(Clone, Copy, Debug)]
pub struct CellGeometry {
    pub points: [Point; 3],
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl CellGeometry {
    pub fn new(points: [Point; 3]) -> Self {
        let [p0, p1, p2] = points;
        let twice = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let inv = 1.0 / twice;
        Self {
            points,
            area: 0.5 * twice,
            grad_lambda: [
                [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
                [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
                [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
            ],
        }
    }

    pub fn point(&self, l: [f64; 3]) -> Point {
        let [p0, p1, p2] = self.points;
        [
            l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0],
            l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1],
        ]
    }

    /// Physical gradient from barycentric partial derivatives.
    pub fn gradient(&self, d: [f64; 3]) -> [f64; 2] {
        let g = &self.grad_lambda;
        [
            d[0] * g[0][0] + d[1] * g[1][0] + d[2] * g[2][0],
            d[0] * g[0][1] + d[1] * g[1][1] + d[2] * g[2][1],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLES: [[f64; 3]; 4] = [[0.2, 0.3, 0.5], [1.0 / 3.0; 3], [0.7, 0.1, 0.2], [0.05, 0.9, 0.05]];

    #[test]
    fn kronecker_delta_at_nodes() {
        for el in [ReferenceElement::P1, ReferenceElement::P2] {
            for (i, node) in el.nodes().iter().enumerate() {
                let v = el.values(*node);
                for j in 0..el.num_basis() {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((v[j] - expected).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        for el in [ReferenceElement::P1, ReferenceElement::P2] {
            for l in SAMPLES {
                let s: f64 = el.values(l)[..el.num_basis()].iter().sum();
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let geo = CellGeometry::new([[0.1, 0.2], [0.9, 0.35], [0.3, 1.1]]);
        let el = ReferenceElement::P2;
        let h = 1e-6;
        for l in SAMPLES {
            let x = geo.point(l);
            let bary = |p: Point| {
                let g = &geo.grad_lambda;
                let p0 = geo.points[0];
                let l1 = g[1][0] * (p[0] - p0[0]) + g[1][1] * (p[1] - p0[1]);
                let l2 = g[2][0] * (p[0] - p0[0]) + g[2][1] * (p[1] - p0[1]);
                [1.0 - l1 - l2, l1, l2]
            };
            let d = el.barycentric_derivatives(l);
            for i in 0..6 {
                let grad = geo.gradient(d[i]);
                let fx = (el.values(bary([x[0] + h, x[1]]))[i] - el.values(bary([x[0] - h, x[1]]))[i]) / (2.0 * h);
                let fy = (el.values(bary([x[0], x[1] + h]))[i] - el.values(bary([x[0], x[1] - h]))[i]) / (2.0 * h);
                assert!((grad[0] - fx).abs() < 1e-7 && (grad[1] - fy).abs() < 1e-7);
            }
        }
    }
}
