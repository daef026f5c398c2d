use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edge of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];
}

/// Uniform triangulation of `[0,1]²` with `n` nodes per side.
///
/// Node `(i, j)` sits at `(i/(n-1), j/(n-1))` and has index `j n + i`
/// (x fastest). Each grid cell is split along its lower-left to upper-right
/// diagonal into two counter-clockwise triangles.
#[derive(Debug, Clone)]
pub struct Mesh {
    n: usize,
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    geometry: Vec<ElementGeometry>,
}

/// Area and the (constant) gradients of the three barycentric functions.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

impl ElementGeometry {
    fn new(p: [[f64; 2]; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let area = 0.5 * det;
        let mut grads = [[0.0; 2]; 3];
        for a in 0..3 {
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            grads[a] = [(p[b][1] - p[c][1]) / det, (p[c][0] - p[b][0]) / det];
        }
        Self { area, grads }
    }

    pub fn grad_dot(&self, a: usize, b: usize) -> f64 {
        self.grads[a][0] * self.grads[b][0] + self.grads[a][1] * self.grads[b][1]
    }

    /// Gradient of the P1 field with local nodal values `u`.
    pub fn field_gradient(&self, u: [f64; 3]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (ua, ga) in u.iter().zip(&self.grads) {
            g[0] += ua * ga[0];
            g[1] += ua * ga[1];
        }
        g
    }
}

impl Mesh {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "mesh needs at least 2 nodes per side, got {n}"
            )));
        }
        let h = 1.0 / (n - 1) as f64;
        let nodes: Vec<[f64; 2]> = (0..n * n)
            .map(|k| [(k % n) as f64 * h, (k / n) as f64 * h])
            .collect();
        let mut elements = Vec::with_capacity(2 * (n - 1) * (n - 1));
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let a = j * n + i;
                let b = a + 1;
                let c = a + n + 1;
                let d = a + n;
                elements.push([a, b, c]);
                elements.push([a, c, d]);
            }
        }
        let geometry = elements
            .iter()
            .map(|e| ElementGeometry::new([nodes[e[0]], nodes[e[1]], nodes[e[2]]]))
            .collect();
        Ok(Self {
            n,
            nodes,
            elements,
            geometry,
        })
    }

    /// Nodes per side.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn geometry(&self, e: usize) -> &ElementGeometry {
        &self.geometry[e]
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let el = self.elements[e];
        let mut c = [0.0; 2];
        for &v in &el {
            c[0] += self.nodes[v][0] / 3.0;
            c[1] += self.nodes[v][1] / 3.0;
        }
        c
    }

    /// Node indices on `edge`, in increasing order.
    pub fn edge_nodes(&self, edge: Edge) -> Vec<usize> {
        let n = self.n;
        match edge {
            Edge::Bottom => (0..n).collect(),
            Edge::Top => (0..n).map(|i| (n - 1) * n + i).collect(),
            Edge::Left => (0..n).map(|j| j * n).collect(),
            Edge::Right => (0..n).map(|j| j * n + n - 1).collect(),
        }
    }

    /// Edge tags carried by node `k` (empty for interior nodes).
    pub fn node_edges(&self, k: usize) -> Vec<Edge> {
        let (i, j) = (k % self.n, k / self.n);
        let last = self.n - 1;
        let mut tags = Vec::new();
        if i == 0 {
            tags.push(Edge::Left);
        }
        if i == last {
            tags.push(Edge::Right);
        }
        if j == 0 {
            tags.push(Edge::Bottom);
        }
        if j == last {
            tags.push(Edge::Top);
        }
        tags
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate<F: Fn(f64, f64) -> f64>(&self, f: F) -> crate::linop::Field {
        crate::linop::Field::from_iterator(self.nodes.len(), self.nodes.iter().map(|p| f(p[0], p[1])))
    }

    /// Element containing `(x, y)` and the barycentric weights of its nodes.
    pub fn locate(&self, x: f64, y: f64) -> Result<(usize, [f64; 3])> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) || !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "point ({x}, {y}) lies outside the unit square"
            )));
        }
        let cells = (self.n - 1) as f64;
        let ci = ((x * cells).floor() as usize).min(self.n - 2);
        let cj = ((y * cells).floor() as usize).min(self.n - 2);
        let s = x * cells - ci as f64;
        let t = y * cells - cj as f64;
        let cell = cj * (self.n - 1) + ci;
        if s >= t {
            // [a, b, c] with a=(0,0), b=(1,0), c=(1,1)
            Ok((2 * cell, [1.0 - s, s - t, t]))
        } else {
            // [a, c, d] with d=(0,1)
            Ok((2 * cell + 1, [1.0 - t, s, t - s]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_meshes() {
        let m = Mesh::new(2).unwrap();
        assert_eq!(m.num_nodes(), 4);
        assert_eq!(m.elements().len(), 2);
        let m = Mesh::new(30).unwrap();
        assert_eq!(m.num_nodes(), 900);
        assert_eq!(m.elements().len(), 2 * 29 * 29);
        assert!(Mesh::new(1).is_err());
    }

    #[test]
    fn element_areas_tile_the_square() {
        let m = Mesh::new(4).unwrap();
        let total: f64 = (0..m.elements().len()).map(|e| m.geometry(e).area).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((0..m.elements().len()).all(|e| m.geometry(e).area > 0.0));
    }

    #[test]
    fn boundary_nodes_are_tagged() {
        let m = Mesh::new(5).unwrap();
        for e in Edge::ALL {
            for k in m.edge_nodes(e) {
                assert!(m.node_edges(k).contains(&e));
            }
        }
        assert!(m.node_edges(2 * 5 + 2).is_empty());
        assert_eq!(m.node_edges(0).len(), 2);
    }

    #[test]
    fn gradients_reproduce_linear_fields() {
        let m = Mesh::new(5).unwrap();
        for (e, el) in m.elements().iter().enumerate() {
            let u = el.map(|v| 3.0 * m.nodes()[v][0] - 2.0 * m.nodes()[v][1]);
            let g = m.geometry(e).field_gradient(u);
            assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] + 2.0).abs() < 1e-12);
        }
    }
}
