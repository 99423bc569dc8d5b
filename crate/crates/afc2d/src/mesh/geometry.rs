//! Per-cell shape metrics and the Delaunay angle diagnostic.

use super::Mesh;
use crate::{Error, Result};

/// Shape metrics of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct CellGeometry {
    /// Cell diameter (longest edge).
    pub h_k: f64,
    /// Diameter of the largest inscribed ball, `2|K| / perimeter`.
    pub rho_k: f64,
    /// Cell area |K|.
    pub area: f64,
    /// Largest cosine over the three interior angles.
    pub max_cos: f64,
    /// Per-cell constant of the edge-trace estimate
    ///
    /// `sum_E |grad phi . t_E|^2_(0,E) <= c_edge / h_K |grad phi|^2_(0,K)`,
    ///
    /// computed as `4 sqrt(2) (1 + sqrt(2)) |K| h_K / ((1 - max_cos) rho_K^3)`.
    /// The factor `|K| h_K / rho_K^3` is invariant under scaling, so c_edge
    /// depends only on the cell shape, not its size.
    pub c_edge: f64,
}

/// Metrics for every cell plus mesh-global aggregates.
#[derive(Clone, Debug)]
pub struct GeometryReport {
    pub cells: Vec<CellGeometry>,
    /// `max_K c_edge`, the constant entering the estimator weights.
    pub c_edge_max: f64,
    /// `min_K rho_K / h_K`, the observed shape-regularity constant.
    pub shape_regularity: f64,
    /// Smallest interior angle over all cells, in radians.
    pub min_angle: f64,
}

/// Compute [`CellGeometry`] for every cell.
///
/// Fails on degenerate cells (`area <= 0`), which `Mesh` construction already
/// rules out; the check here keeps the function safe on raw data paths.
pub fn compute_cell_geometry(mesh: &Mesh) -> Result<GeometryReport> {
    let mut cells = Vec::with_capacity(mesh.n_cells());
    let mut c_edge_max = 0.0_f64;
    let mut shape_regularity = f64::INFINITY;
    let mut min_angle = f64::INFINITY;

    for c in 0..mesh.n_cells() {
        let [p0, p1, p2] = mesh.cell_coords(c);
        let area = super::signed_area(p0, p1, p2);
        if !(area > 0.0) {
            return Err(Error::DegenerateCell { cell: c, area });
        }
        let e = [dist(p1, p2), dist(p2, p0), dist(p0, p1)];
        let h_k = e[0].max(e[1]).max(e[2]);
        let perimeter = e[0] + e[1] + e[2];
        let rho_k = 2.0 * area / perimeter;

        let mut max_cos = -1.0_f64;
        for k in 0..3 {
            let cos_k = cos_angle_at(
                [p0, p1, p2][k],
                [p0, p1, p2][(k + 1) % 3],
                [p0, p1, p2][(k + 2) % 3],
            );
            max_cos = max_cos.max(cos_k);
            min_angle = min_angle.min(cos_k.clamp(-1.0, 1.0).acos());
        }
        if !(max_cos < 1.0) {
            return Err(Error::DegenerateCell { cell: c, area });
        }

        let c_edge = 4.0 * 2.0_f64.sqrt() * (1.0 + 2.0_f64.sqrt()) * area * h_k
            / ((1.0 - max_cos) * rho_k.powi(3));

        c_edge_max = c_edge_max.max(c_edge);
        shape_regularity = shape_regularity.min(rho_k / h_k);
        cells.push(CellGeometry {
            h_k,
            rho_k,
            area,
            max_cos,
            c_edge,
        });
    }

    Ok(GeometryReport {
        cells,
        c_edge_max,
        shape_regularity,
        min_angle,
    })
}

/// Delaunay test: for every interior edge the two angles opposite to it must
/// sum to at most pi (non-strict, tolerance 1e-12 radians, so that grids
/// built from right isoceles triangles count as Delaunay). Returns the
/// violating edge indices.
pub fn is_delaunay(mesh: &Mesh) -> (bool, Vec<usize>) {
    let tol = 1e-12;
    let mut violations = Vec::new();
    for (e, edge) in mesh.edges().iter().enumerate() {
        let [Some(c0), Some(c1)] = edge.cells else {
            continue;
        };
        let sum = opposite_angle(mesh, c0, edge.vertices) + opposite_angle(mesh, c1, edge.vertices);
        if sum > std::f64::consts::PI + tol {
            violations.push(e);
        }
    }
    (violations.is_empty(), violations)
}

fn opposite_angle(mesh: &Mesh, cell: usize, edge_vertices: [usize; 2]) -> f64 {
    let tri = mesh.cell(cell);
    let apex = tri
        .iter()
        .copied()
        .find(|v| *v != edge_vertices[0] && *v != edge_vertices[1])
        .expect("edge belongs to cell");
    let cos = cos_angle_at(
        mesh.vertex(apex),
        mesh.vertex(edge_vertices[0]),
        mesh.vertex(edge_vertices[1]),
    );
    cos.clamp(-1.0, 1.0).acos()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Cosine of the interior angle at `p` in the triangle `(p, q, r)`.
fn cos_angle_at(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    let u = [q[0] - p[0], q[1] - p[1]];
    let v = [r[0] - p[0], r[1] - p[1]];
    let dot = u[0] * v[0] + u[1] * v[1];
    dot / (u[0].hypot(u[1]) * v[0].hypot(v[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{unit_square_macro, BoundaryMarker, Mesh};

    #[test]
    fn unit_right_isoceles_metrics() {
        // both macro cells are right isoceles with legs of length 1
        let mesh = unit_square_macro();
        let report = compute_cell_geometry(&mesh).unwrap();
        for g in &report.cells {
            assert!((g.h_k - 2.0_f64.sqrt()).abs() < 1e-15);
            assert!((g.area - 0.5).abs() < 1e-15);
            let rho_exact = 1.0 / (2.0 + 2.0_f64.sqrt());
            assert!((g.rho_k - rho_exact).abs() < 1e-15);
            assert!((g.max_cos - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn equilateral_metrics() {
        let s3 = 3.0_f64.sqrt();
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 0.5 * s3]];
        let mesh = Mesh::new(
            vertices,
            vec![[0, 1, 2]],
            &[
                (0, 1, BoundaryMarker::Dirichlet),
                (1, 2, BoundaryMarker::Dirichlet),
                (2, 0, BoundaryMarker::Dirichlet),
            ],
        )
        .unwrap();
        let report = compute_cell_geometry(&mesh).unwrap();
        let g = report.cells[0];
        // rho = 2|K|/perimeter = 2*(sqrt(3)/4)/3 = sqrt(3)/6
        assert!((g.rho_k - s3 / 6.0).abs() < 1e-15);
        assert!((g.max_cos - 0.5).abs() < 1e-14);
        assert!((g.h_k - 1.0).abs() < 1e-15);
    }

    #[test]
    fn c_edge_regression_unit_right_isoceles() {
        // frozen from the closed-form constant with h_K = sqrt(2):
        // 4 sqrt(2)(1+sqrt(2)) * 0.5 * sqrt(2) / ((1 - cos 45) * rho^3),
        // rho = 1/(2+sqrt(2))
        let mesh = unit_square_macro();
        let report = compute_cell_geometry(&mesh).unwrap();
        let c = report.cells[0].c_edge;
        assert!(
            (c - 1312.2021968624624).abs() < 1e-11 * 1312.2,
            "c_edge = {c}"
        );
        assert!((report.c_edge_max - c).abs() < 1e-9);
    }

    #[test]
    fn c_edge_scale_invariant() {
        // shrinking a cell must not change its trace constant
        let d = BoundaryMarker::Dirichlet;
        let at_scale = |s: f64| {
            let vertices = vec![[0.0, 0.0], [s, 0.0], [0.3 * s, 0.8 * s]];
            let mesh = Mesh::new(
                vertices,
                vec![[0, 1, 2]],
                &[(0, 1, d), (1, 2, d), (2, 0, d)],
            )
            .unwrap();
            compute_cell_geometry(&mesh).unwrap().cells[0].c_edge
        };
        let reference = at_scale(1.0);
        for s in [0.25, 1.0 / 64.0, 17.0] {
            let c = at_scale(s);
            assert!((c - reference).abs() < 1e-9 * reference, "s = {s}: {c}");
        }
    }

    #[test]
    fn rho_below_shortest_edge() {
        let mesh = unit_square_macro();
        let report = compute_cell_geometry(&mesh).unwrap();
        for g in &report.cells {
            assert!(g.rho_k > 0.0 && g.rho_k < 1.0 && g.rho_k < g.h_k);
        }
    }

    #[test]
    fn macro_mesh_is_delaunay_boundary_case() {
        // opposite angles at the diagonal are 90 + 90 = 180: non-strict pass
        let (ok, violations) = is_delaunay(&unit_square_macro());
        assert!(ok, "violations: {violations:?}");
    }

    #[test]
    fn obtuse_kite_violates_delaunay() {
        // two triangles over the shared edge (0,0)-(1,0) with apex angles of
        // 100 degrees each: 200 > 180 must be flagged
        let apex_y = 0.5 / (50.0_f64.to_radians()).tan();
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.5, apex_y], [0.5, -apex_y]];
        let d = BoundaryMarker::Dirichlet;
        let mesh = Mesh::new(
            vertices,
            vec![[0, 1, 2], [0, 3, 1]],
            &[(0, 2, d), (2, 1, d), (0, 3, d), (3, 1, d)],
        )
        .unwrap();
        let (ok, violations) = is_delaunay(&mesh);
        assert!(!ok);
        assert_eq!(violations.len(), 1);
        let edge = &mesh.edge(violations[0]);
        assert_eq!(edge.vertices, [0, 1]);
    }
}
