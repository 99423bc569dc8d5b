//! P1 finite element assembly: Galerkin stiffness, load vector with Neumann
//! contributions, artificial diffusion, Dirichlet elimination and
//! quadrature-based norm evaluation.

use crate::linalg::{CsrMatrix, DofVector};
use crate::mesh::{BoundaryMarker, Mesh};
use crate::problems::ProblemSpec;
use crate::quadrature::{edge_rule, triangle_rule};
use crate::{Error, Result};

/// Assembled discrete operators of one problem on one mesh.
///
/// `a` and `f` are kept in raw (uneliminated) form: the limiter formulas and
/// the nonlinear residual reference the raw entries, including Dirichlet
/// rows. [`apply_dirichlet`] adds the boundary-eliminated system used by the
/// linear solver without touching the originals.
///
/// For P1 elements the dof map is the identity on mesh vertices: dof `i`
/// lives at vertex `i`.
pub struct DiscreteSystem {
    /// Galerkin stiffness matrix `a_ij = eps (grad phi_j, grad phi_i) +
    /// (b.grad phi_j, phi_i) + (c phi_j, phi_i)`.
    pub a: CsrMatrix,
    /// Artificial diffusion matrix, zero until [`artificial_diffusion`] has
    /// been applied by [`assemble_system`].
    pub d: CsrMatrix,
    /// Load vector `(f, phi_i) + <g, phi_i>_N`, no elimination applied.
    pub f: DofVector,
    /// Dirichlet dof flags.
    pub dirichlet_dofs: Vec<bool>,
    /// Nodal Dirichlet values (zero at non-Dirichlet dofs); populated by
    /// [`apply_dirichlet`].
    pub u_dirichlet: Vec<f64>,
    /// Boundary-eliminated Galerkin system, populated by [`apply_dirichlet`].
    pub bc: Option<EliminatedSystem>,
}

/// A linear system after Dirichlet elimination: Dirichlet rows replaced by
/// identity, Dirichlet columns moved to the right-hand side.
pub struct EliminatedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

impl DiscreteSystem {
    pub fn n_dofs(&self) -> usize {
        self.f.len()
    }

    /// P1 dof map: identity on vertices.
    pub fn dof_of_vertex(&self, v: usize) -> usize {
        v
    }
}

/// Assemble the Galerkin matrix and load vector (no artificial diffusion,
/// no Dirichlet elimination).
pub fn assemble_galerkin(mesh: &Mesh, prob: &ProblemSpec) -> Result<DiscreteSystem> {
    let all: Vec<usize> = (0..mesh.n_cells()).collect();
    assemble_galerkin_cells(mesh, prob, &all)
}

/// Assembly restricted to a subset of cells (assembly is additive over
/// cells; the full matrix is the sum over any partition of the cell list).
pub(crate) fn assemble_galerkin_cells(
    mesh: &Mesh,
    prob: &ProblemSpec,
    cells: &[usize],
) -> Result<DiscreteSystem> {
    let n = mesh.n_vertices();
    let rule = triangle_rule();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(9 * cells.len());
    let mut load = vec![0.0; n];

    for &c in cells {
        let tri = mesh.cell(c);
        let area = mesh.cell_area(c);
        if !(area > 0.0) || !area.is_finite() {
            return Err(Error::DegenerateCell { cell: c, area });
        }
        let grads = mesh.p1_gradients(c);
        let [p0, p1, p2] = mesh.cell_coords(c);

        let mut local = [[0.0_f64; 3]; 3];
        let mut local_f = [0.0_f64; 3];
        for q in rule {
            let x = q.bary[0] * p0[0] + q.bary[1] * p1[0] + q.bary[2] * p2[0];
            let y = q.bary[0] * p0[1] + q.bary[1] * p1[1] + q.bary[2] * p2[1];
            let b = (prob.b)(x, y);
            let cc = (prob.c)(x, y);
            let fv = (prob.f)(x, y);
            let w = q.weight * area;
            for i in 0..3 {
                let phi_i = q.bary[i];
                for j in 0..3 {
                    let phi_j = q.bary[j];
                    let diff = prob.epsilon * (grads[j][0] * grads[i][0] + grads[j][1] * grads[i][1]);
                    let conv = (b[0] * grads[j][0] + b[1] * grads[j][1]) * phi_i;
                    let reac = cc * phi_j * phi_i;
                    local[i][j] += w * (diff + conv + reac);
                }
                local_f[i] += w * fv * phi_i;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], local[i][j]));
            }
            load[tri[i]] += local_f[i];
        }
    }

    // Neumann boundary contribution <g, phi_i> over marked edges.
    for (e, marker) in mesh.boundary_edges() {
        if marker != BoundaryMarker::Neumann {
            continue;
        }
        let edge = mesh.edge(e);
        let [va, vb] = edge.vertices;
        // only include edges whose incident cell is in the subset
        let Some(cell) = edge.cells[0] else { continue };
        if !cells.contains(&cell) {
            continue;
        }
        let a = mesh.vertex(va);
        let b = mesh.vertex(vb);
        for (t, w) in edge_rule() {
            let x = a[0] + t * (b[0] - a[0]);
            let y = a[1] + t * (b[1] - a[1]);
            let gv = (prob.g)(x, y);
            load[va] += w * edge.length * gv * (1.0 - t);
            load[vb] += w * edge.length * gv * t;
        }
    }

    let a = CsrMatrix::from_triplets(n, n, &triplets);
    let dirichlet = mesh.dirichlet_vertices();
    Ok(DiscreteSystem {
        d: a.zeros_like(),
        a,
        f: DofVector::from_values(load, dirichlet.clone()),
        dirichlet_dofs: dirichlet,
        u_dirichlet: vec![0.0; n],
        bc: None,
    })
}

/// Artificial diffusion `d_ij = -max(a_ij, 0, a_ji)` off the diagonal and
/// `d_ii = -sum_{j != i} d_ij`; symmetric with zero row sums.
pub fn artificial_diffusion(a: &CsrMatrix) -> CsrMatrix {
    debug_assert!(a.pattern_symmetric(), "FE matrices have symmetric patterns");
    let mut d = a.zeros_like();
    let n = a.n_rows();
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let row_entries: Vec<(usize, f64)> = cols
            .iter()
            .zip(vals)
            .map(|(&j, &aij)| {
                if j == i {
                    (j, 0.0)
                } else {
                    (j, -aij.max(0.0).max(a.get(j, i)))
                }
            })
            .collect();
        let diag: f64 = -row_entries.iter().map(|(_, v)| v).sum::<f64>();
        let (cols_d, vals_d) = d.row_mut(i);
        for (k, &j) in cols_d.iter().enumerate() {
            vals_d[k] = if j == i { diag } else { row_entries[k].1 };
        }
    }
    d
}

/// Full pipeline: Galerkin assembly, artificial diffusion, Dirichlet
/// elimination of the Galerkin system.
pub fn assemble_system(mesh: &Mesh, prob: &ProblemSpec) -> Result<DiscreteSystem> {
    let mut sys = assemble_galerkin(mesh, prob)?;
    sys.d = artificial_diffusion(&sys.a);
    Ok(apply_dirichlet(sys, prob, mesh))
}

/// Interpolate the Dirichlet datum, replace Dirichlet rows of the Galerkin
/// matrix by identity rows and move Dirichlet columns to the right-hand
/// side. The raw matrix and load stay available for residual evaluation.
pub fn apply_dirichlet(mut sys: DiscreteSystem, prob: &ProblemSpec, mesh: &Mesh) -> DiscreteSystem {
    let n = sys.n_dofs();
    let mut u_d = vec![0.0; n];
    for v in 0..n {
        if sys.dirichlet_dofs[v] {
            let [x, y] = mesh.vertex(v);
            u_d[v] = (prob.u_d)(x, y);
        }
    }
    let (matrix, rhs) = eliminate_dirichlet(&sys.a, &sys.f.values, &sys.dirichlet_dofs, &u_d);
    sys.u_dirichlet = u_d;
    sys.bc = Some(EliminatedSystem { matrix, rhs });
    sys
}

/// Dirichlet elimination for an arbitrary matrix sharing the mesh's dof
/// layout (used for the Galerkin, SUPG and AFC fixed-point systems alike).
pub fn eliminate_dirichlet(
    matrix: &CsrMatrix,
    load: &[f64],
    dirichlet: &[bool],
    u_d: &[f64],
) -> (CsrMatrix, Vec<f64>) {
    let n = matrix.n_rows();
    let mut out = matrix.clone();
    let mut rhs = load.to_vec();
    for i in 0..n {
        if dirichlet[i] {
            let (cols, vals) = out.row_mut(i);
            for (k, &j) in cols.iter().enumerate() {
                vals[k] = if j == i { 1.0 } else { 0.0 };
            }
            rhs[i] = u_d[i];
        } else {
            let (cols, vals) = out.row_mut(i);
            for (k, &j) in cols.iter().enumerate() {
                if dirichlet[j] {
                    rhs[i] -= vals[k] * u_d[j];
                    vals[k] = 0.0;
                }
            }
        }
    }
    (out, rhs)
}

/// Energy norm `(eps |u - u_h|_1^2 + sigma0 |u - u_h|_0^2)^(1/2)` of the
/// error against the problem's exact solution.
///
/// The integrand carries boundary-layer mass of width O(eps) that fixed
/// rules on coarse cells silently skip (an evaluation, not discretization,
/// artifact that distorts coarse-grid convergence histories), so each cell
/// is integrated with the adaptive subdivided rule.
pub fn energy_norm_error(u_h: &DofVector, prob: &ProblemSpec, mesh: &Mesh) -> Result<f64> {
    let exact = prob.exact.as_ref().ok_or(Error::MissingExactSolution)?;
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        let (value0, grad_h, origin) = p1_plane(u_h, mesh, c);
        let [p0, p1, p2] = mesh.cell_coords(c);
        acc += crate::quadrature::adaptive_triangle_integral(
            p0,
            p1,
            p2,
            mesh.cell_area(c),
            &|x, y| {
                let uh = value0 + grad_h[0] * (x - origin[0]) + grad_h[1] * (y - origin[1]);
                let ue = (exact.u)(x, y);
                let ge = (exact.grad)(x, y);
                let dg = [ge[0] - grad_h[0], ge[1] - grad_h[1]];
                prob.epsilon * (dg[0] * dg[0] + dg[1] * dg[1])
                    + prob.sigma0 * (ue - uh) * (ue - uh)
            },
        );
    }
    Ok(acc.sqrt())
}

/// Affine representation of the P1 function on cell `c`: value at the first
/// corner, the (constant) gradient, and that corner as origin.
pub(crate) fn p1_plane(u_h: &DofVector, mesh: &Mesh, c: usize) -> (f64, [f64; 2], [f64; 2]) {
    let tri = mesh.cell(c);
    let grads = mesh.p1_gradients(c);
    let mut g = [0.0, 0.0];
    for k in 0..3 {
        g[0] += u_h.values[tri[k]] * grads[k][0];
        g[1] += u_h.values[tri[k]] * grads[k][1];
    }
    (u_h.values[tri[0]], g, mesh.vertex(tri[0]))
}

/// Energy norm of a discrete P1 function given by nodal values (exact up to
/// the quadrature degree; the integrands are polynomials of degree <= 2).
pub fn discrete_energy_norm(w: &[f64], prob: &ProblemSpec, mesh: &Mesh) -> f64 {
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        let tri = mesh.cell(c);
        let area = mesh.cell_area(c);
        let grads = mesh.p1_gradients(c);
        let mut g = [0.0, 0.0];
        for k in 0..3 {
            g[0] += w[tri[k]] * grads[k][0];
            g[1] += w[tri[k]] * grads[k][1];
        }
        let grad_sq = g[0] * g[0] + g[1] * g[1];
        let mut l2 = 0.0;
        for q in triangle_rule() {
            let wh = q.bary[0] * w[tri[0]] + q.bary[1] * w[tri[1]] + q.bary[2] * w[tri[2]];
            l2 += q.weight * wh * wh;
        }
        acc += area * (prob.epsilon * grad_sq + prob.sigma0 * l2);
    }
    acc.sqrt()
}
