//! Conforming triangulations of polygonal 2D domains.
//!
//! A [`Mesh`] stores vertices, counterclockwise cells, derived edges (with
//! unit tangents and lengths), boundary markers, neighbor tables and per-cell
//! refinement lineage. Meshes are immutable after construction; refinement
//! produces a new mesh. Admissibility (any two cells are disjoint or share a
//! complete vertex or a complete edge) is audited on every construction.

mod geometry;
mod io;
mod refine;

pub use geometry::{compute_cell_geometry, is_delaunay, CellGeometry, GeometryReport};
pub use io::{read_mesh, read_mesh_str, write_mesh, write_mesh_string};
pub use refine::{refine_adaptive, refine_uniform};

use crate::{Error, Result};
use std::collections::HashMap;

/// Kind of boundary condition attached to a boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryMarker {
    Dirichlet,
    Neumann,
}

/// An undirected mesh edge.
#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoint vertex indices, `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    /// Incident cells; interior edges have two, boundary edges one.
    pub cells: [Option<usize>; 2],
    /// Boundary marker, `Some` exactly for boundary edges.
    pub marker: Option<BoundaryMarker>,
    /// Edge length h_E.
    pub length: f64,
    /// Unit tangent, oriented from the lower to the higher vertex index.
    /// Only products of two tangential derivatives ever appear, so the sign
    /// convention is immaterial.
    pub tangent: [f64; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.marker.is_some()
    }

    /// The interior neighbor across this edge from `cell`, if any.
    pub fn other_cell(&self, cell: usize) -> Option<usize> {
        match self.cells {
            [Some(a), Some(b)] if a == cell => Some(b),
            [Some(a), Some(b)] if b == cell => Some(a),
            _ => None,
        }
    }
}

/// Refinement lineage of a cell.
///
/// Green cells are temporary conforming-closure bisections: before any
/// further refinement they are replaced by their regular parent (whose
/// corner vertices are recorded here), so that bisections never stack and
/// the minimum angle stays bounded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CellLineage {
    Regular,
    Green {
        /// Corner vertices of the regular parent triangle (counterclockwise).
        parent: [usize; 3],
        /// The sibling cell of the bisection pair.
        mate: usize,
    },
}

/// A conforming triangulation.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// Map from a sorted vertex pair to its edge index.
    edge_index: HashMap<(usize, usize), usize>,
    /// Per cell, the edge opposite each local vertex: `cell_edges[c][k]` is
    /// the edge connecting vertices `(k+1)%3` and `(k+2)%3` of cell `c`.
    cell_edges: Vec<[usize; 3]>,
    /// Neighbor across the edge opposite each local vertex.
    cell_neighbors: Vec<[Option<usize>; 3]>,
    lineage: Vec<CellLineage>,
}

impl Mesh {
    /// Build a mesh and audit its invariants.
    ///
    /// `boundary` lists every boundary edge as `(v0, v1, marker)`. Cells must
    /// be counterclockwise with positive area; every edge incident to exactly
    /// one cell must appear in `boundary`, interior edges must not.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        boundary: &[(usize, usize, BoundaryMarker)],
    ) -> Result<Self> {
        let lineage = vec![CellLineage::Regular; cells.len()];
        Self::with_lineage(vertices, cells, boundary, lineage)
    }

    pub(crate) fn with_lineage(
        vertices: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        boundary: &[(usize, usize, BoundaryMarker)],
        lineage: Vec<CellLineage>,
    ) -> Result<Self> {
        let n_v = vertices.len();
        if cells.is_empty() {
            return Err(Error::InvalidMesh("mesh has no cells".into()));
        }
        if lineage.len() != cells.len() {
            return Err(Error::InvalidMesh("lineage length mismatch".into()));
        }

        for (c, tri) in cells.iter().enumerate() {
            for &v in tri {
                if v >= n_v {
                    return Err(Error::InvalidMesh(format!(
                        "cell {c} references vertex {v} but mesh has {n_v} vertices"
                    )));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("cell {c} has repeated vertices")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::DegenerateCell { cell: c, area });
            }
        }

        // Collect edges from directed cell boundaries. A conforming mesh
        // traverses every interior edge exactly once per direction.
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut directed_seen: HashMap<(usize, usize), usize> = HashMap::new();
        let mut cell_edges = vec![[usize::MAX; 3]; cells.len()];

        for (c, tri) in cells.iter().enumerate() {
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                if let Some(&other) = directed_seen.get(&(a, b)) {
                    return Err(Error::NonConforming(format!(
                        "directed edge ({a}, {b}) appears in both cell {other} and cell {c}; \
                         inconsistent orientation or overlapping cells"
                    )));
                }
                directed_seen.insert((a, b), c);

                let key = (a.min(b), a.max(b));
                let e = match edge_index.get(&key) {
                    Some(&e) => e,
                    None => {
                        let (v0, v1) = key;
                        let d = [
                            vertices[v1][0] - vertices[v0][0],
                            vertices[v1][1] - vertices[v0][1],
                        ];
                        let length = (d[0] * d[0] + d[1] * d[1]).sqrt();
                        if !(length > 0.0) {
                            return Err(Error::InvalidMesh(format!(
                                "edge ({v0}, {v1}) has zero length"
                            )));
                        }
                        edges.push(Edge {
                            vertices: [v0, v1],
                            cells: [None, None],
                            marker: None,
                            length,
                            tangent: [d[0] / length, d[1] / length],
                        });
                        edge_index.insert(key, edges.len() - 1);
                        edges.len() - 1
                    }
                };
                let slots = &mut edges[e].cells;
                if slots[0].is_none() {
                    slots[0] = Some(c);
                } else if slots[1].is_none() {
                    slots[1] = Some(c);
                } else {
                    return Err(Error::NonConforming(format!(
                        "edge ({}, {}) is incident to more than two cells",
                        key.0, key.1
                    )));
                }
                cell_edges[c][k] = e;
            }
        }

        // Attach boundary markers.
        for &(a, b, marker) in boundary {
            let key = (a.min(b), a.max(b));
            let e = *edge_index.get(&key).ok_or_else(|| {
                Error::InvalidMesh(format!("boundary edge ({a}, {b}) is not a mesh edge"))
            })?;
            if edges[e].cells[1].is_some() {
                return Err(Error::NonConforming(format!(
                    "boundary edge ({a}, {b}) is interior (two incident cells)"
                )));
            }
            if edges[e].marker.is_some() {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge ({a}, {b}) has two markers"
                )));
            }
            edges[e].marker = Some(marker);
        }
        for edge in &edges {
            let n_inc = edge.cells.iter().filter(|c| c.is_some()).count();
            match (n_inc, edge.marker) {
                (1, None) => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary edge ({}, {}) carries no marker",
                        edge.vertices[0], edge.vertices[1]
                    )))
                }
                (2, Some(_)) => unreachable!("marker attach rejects interior edges"),
                _ => {}
            }
        }

        // Orphan vertices would create empty matrix rows downstream.
        let mut used = vec![false; n_v];
        for tri in &cells {
            for &v in tri {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|&u| !u) {
            return Err(Error::InvalidMesh(format!(
                "vertex {v} is not referenced by any cell"
            )));
        }

        // Green lineage sanity: mates must point at each other.
        for (c, l) in lineage.iter().enumerate() {
            if let CellLineage::Green { mate, .. } = l {
                match lineage.get(*mate) {
                    Some(CellLineage::Green { mate: back, .. }) if *back == c => {}
                    _ => {
                        return Err(Error::InvalidMesh(format!(
                            "green cell {c} has an inconsistent bisection mate"
                        )))
                    }
                }
            }
        }

        let mut cell_neighbors = vec![[None; 3]; cells.len()];
        for (c, ce) in cell_edges.iter().enumerate() {
            for k in 0..3 {
                cell_neighbors[c][k] = edges[ce[k]].other_cell(c);
            }
        }

        Ok(Mesh {
            vertices,
            cells,
            edges,
            edge_index,
            cell_edges,
            cell_neighbors,
            lineage,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cell(&self, c: usize) -> [usize; 3] {
        self.cells[c]
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    /// Edge index for a vertex pair, in either order.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&(a.min(b), a.max(b))).copied()
    }

    /// The three edges of cell `c`; entry `k` is opposite local vertex `k`.
    pub fn cell_edge_indices(&self, c: usize) -> [usize; 3] {
        self.cell_edges[c]
    }

    /// Neighbors of cell `c` across the edge opposite each local vertex.
    pub fn neighbors(&self, c: usize) -> [Option<usize>; 3] {
        self.cell_neighbors[c]
    }

    pub fn lineage(&self, c: usize) -> &CellLineage {
        &self.lineage[c]
    }

    pub fn is_green(&self, c: usize) -> bool {
        matches!(self.lineage[c], CellLineage::Green { .. })
    }

    /// Corner coordinates of cell `c`.
    pub fn cell_coords(&self, c: usize) -> [[f64; 2]; 3] {
        let [a, b, d] = self.cells[c];
        [self.vertices[a], self.vertices[b], self.vertices[d]]
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        let [p0, p1, p2] = self.cell_coords(c);
        signed_area(p0, p1, p2)
    }

    /// Constant P1 basis gradients on cell `c`; row `k` is the gradient of
    /// the hat function of local vertex `k`.
    pub fn p1_gradients(&self, c: usize) -> [[f64; 2]; 3] {
        let [p0, p1, p2] = self.cell_coords(c);
        let inv2a = 1.0 / (2.0 * signed_area(p0, p1, p2));
        [
            [(p1[1] - p2[1]) * inv2a, (p2[0] - p1[0]) * inv2a],
            [(p2[1] - p0[1]) * inv2a, (p0[0] - p2[0]) * inv2a],
            [(p0[1] - p1[1]) * inv2a, (p1[0] - p0[0]) * inv2a],
        ]
    }

    /// Boundary edges as `(edge index, marker)`.
    pub fn boundary_edges(&self) -> impl Iterator<Item = (usize, BoundaryMarker)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter_map(|(e, edge)| edge.marker.map(|m| (e, m)))
    }

    /// Vertices lying on Dirichlet boundary edges.
    pub fn dirichlet_vertices(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_vertices()];
        for edge in &self.edges {
            if edge.marker == Some(BoundaryMarker::Dirichlet) {
                mask[edge.vertices[0]] = true;
                mask[edge.vertices[1]] = true;
            }
        }
        mask
    }

    /// Re-run the conformity audit (used by tests after refinement).
    pub fn audit(&self) -> Result<()> {
        for edge in &self.edges {
            let n_inc = edge.cells.iter().filter(|c| c.is_some()).count();
            let expected = if edge.is_boundary() { 1 } else { 2 };
            if n_inc != expected {
                return Err(Error::NonConforming(format!(
                    "edge ({}, {}) has {} incident cells, expected {}",
                    edge.vertices[0], edge.vertices[1], n_inc, expected
                )));
            }
        }
        Ok(())
    }
}

/// Signed area of the triangle `(p0, p1, p2)`; positive when counterclockwise.
pub fn signed_area(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

/// The unit square (0,1)^2 split into two triangles by the diagonal from
/// (0,0) to (1,1), with the whole boundary marked Dirichlet.
pub fn unit_square_macro() -> Mesh {
    use BoundaryMarker::Dirichlet as D;
    let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let cells = vec![[0, 1, 2], [0, 2, 3]];
    let boundary = [(0, 1, D), (1, 2, D), (2, 3, D), (3, 0, D)];
    Mesh::new(vertices, cells, &boundary).expect("macro mesh is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn macro_mesh_counts() {
        let mesh = unit_square_macro();
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.n_cells(), 2);
        assert_eq!(mesh.n_edges(), 5);
        assert_eq!(mesh.boundary_edges().count(), 4);
        mesh.audit().unwrap();
    }

    #[test]
    fn macro_mesh_diagonal_is_interior() {
        let mesh = unit_square_macro();
        let e = mesh.edge_between(0, 2).unwrap();
        assert!(!mesh.edge(e).is_boundary());
        assert_eq!(mesh.edge(e).cells, [Some(0), Some(1)]);
        assert!((mesh.edge(e).length - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_clockwise_cell() {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let cells = vec![[0, 2, 1]];
        let err = Mesh::new(vertices, cells, &[]).unwrap_err();
        assert!(matches!(err, Error::DegenerateCell { .. }));
    }

    #[test]
    fn rejects_unmarked_boundary() {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let cells = vec![[0, 1, 2]];
        let err = Mesh::new(
            vertices,
            cells,
            &[
                (0, 1, BoundaryMarker::Dirichlet),
                (1, 2, BoundaryMarker::Dirichlet),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn rejects_hanging_node_configuration() {
        // Left cell spans the full edge x=0..0 to (0,1); right side split in
        // two, sharing only half edges: classic hanging node at (0.5, 0.5)
        // is impossible to express without duplicating a directed edge or
        // leaving an interior edge single-sided; this variant leaves the
        // long edge with one cell and no marker.
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.5]];
        let cells = vec![[0, 1, 4], [0, 4, 2], [0, 2, 3]];
        // boundary on the outer square only; edge (0,2) is interior and fine,
        // edges (1,4),(4,2) are boundary;  leave (0,3) unmarked -> error
        let err = Mesh::new(
            vertices,
            cells,
            &[
                (0, 1, BoundaryMarker::Dirichlet),
                (1, 4, BoundaryMarker::Dirichlet),
                (4, 2, BoundaryMarker::Dirichlet),
                (2, 3, BoundaryMarker::Dirichlet),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn p1_gradients_partition_of_unity() {
        let mesh = unit_square_macro();
        for c in 0..mesh.n_cells() {
            let g = mesh.p1_gradients(c);
            for d in 0..2 {
                let s: f64 = (0..3).map(|k| g[k][d]).sum();
                assert!(s.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn p1_gradients_reproduce_linear() {
        // gradient of the interpolant of f(x,y)=3x-2y+1 must be (3,-2)
        let mesh = unit_square_macro();
        for c in 0..mesh.n_cells() {
            let tri = mesh.cell(c);
            let g = mesh.p1_gradients(c);
            let mut grad = [0.0, 0.0];
            for k in 0..3 {
                let [x, y] = mesh.vertex(tri[k]);
                let f = 3.0 * x - 2.0 * y + 1.0;
                grad[0] += f * g[k][0];
                grad[1] += f * g[k][1];
            }
            assert!((grad[0] - 3.0).abs() < 1e-13 && (grad[1] + 2.0).abs() < 1e-13);
        }
    }
}
