//! Streamline Upwind Petrov-Galerkin discretization and the SUPG norm.
//!
//! SUPG serves three roles here: a linear comparison solver, the initial
//! guess of the AFC fixed-point iteration, and one half of the AFC-SUPG
//! estimator technique.

use crate::assembly::{self, DiscreteSystem};
use crate::linalg::{CsrMatrix, DofVector, SparseLu};
use crate::mesh::Mesh;
use crate::problems::ProblemSpec;
use crate::quadrature::triangle_rule;
use crate::Result;

/// Per-cell stabilization parameters tau_K.
#[derive(Clone, Debug)]
pub struct SupgParameters {
    pub tau: Vec<f64>,
}

/// Choice of the stabilization parameter formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauFormula {
    /// `tau_K = scaling * h_K / (2 |b|_K) (coth Pe_K - 1 / Pe_K)` with the
    /// cell Peclet number `Pe_K = |b|_K h_K / (2 eps)`; `tau_K = 0` where
    /// the convection vanishes.
    Classical { scaling: f64 },
    /// `tau_K = c * h_K`.
    ConstantTimesH { c: f64 },
}

impl Default for TauFormula {
    fn default() -> Self {
        TauFormula::Classical { scaling: 1.0 }
    }
}

/// `coth x - 1/x`, evaluated by its series near zero to avoid cancellation.
fn upwind_function(x: f64) -> f64 {
    if x < 1e-2 {
        x / 3.0 - x.powi(3) / 45.0
    } else {
        1.0 / x.tanh() - 1.0 / x
    }
}

/// Compute tau_K for every cell. The cell norm of `b` is the maximum over
/// the volume quadrature points.
pub fn compute_tau(mesh: &Mesh, prob: &ProblemSpec, formula: TauFormula) -> SupgParameters {
    let rule = triangle_rule();
    let mut tau = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let [p0, p1, p2] = mesh.cell_coords(c);
        let e = [
            (p1[0] - p2[0]).hypot(p1[1] - p2[1]),
            (p2[0] - p0[0]).hypot(p2[1] - p0[1]),
            (p0[0] - p1[0]).hypot(p0[1] - p1[1]),
        ];
        let h_k = e[0].max(e[1]).max(e[2]);
        let mut b_norm = 0.0_f64;
        for q in rule {
            let x = q.bary[0] * p0[0] + q.bary[1] * p1[0] + q.bary[2] * p2[0];
            let y = q.bary[0] * p0[1] + q.bary[1] * p1[1] + q.bary[2] * p2[1];
            let b = (prob.b)(x, y);
            b_norm = b_norm.max(b[0].hypot(b[1]));
        }
        let t = match formula {
            TauFormula::Classical { scaling } => {
                if b_norm <= 0.0 {
                    0.0
                } else {
                    let pe = b_norm * h_k / (2.0 * prob.epsilon);
                    scaling * h_k / (2.0 * b_norm) * upwind_function(pe)
                }
            }
            TauFormula::ConstantTimesH { c } => c * h_k,
        };
        tau.push(t);
    }
    SupgParameters { tau }
}

/// Assemble the SUPG system: the Galerkin form plus
/// `sum_K tau_K (b.grad u_h + c u_h - f, b.grad v_h)_K`
/// (the P1 Laplacian vanishes cellwise), Dirichlet handled as in the plain
/// assembly.
pub fn assemble_supg(
    mesh: &Mesh,
    prob: &ProblemSpec,
    params: &SupgParameters,
) -> Result<(DiscreteSystem, CsrMatrix, Vec<f64>)> {
    let sys = assembly::assemble_galerkin(mesh, prob)?;
    let n = sys.n_dofs();
    let rule = triangle_rule();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(9 * mesh.n_cells());
    let mut load = sys.f.values.clone();

    for c in 0..mesh.n_cells() {
        let tau = params.tau[c];
        if tau == 0.0 {
            continue;
        }
        let tri = mesh.cell(c);
        let area = mesh.cell_area(c);
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
            let w = q.weight * area * tau;
            for i in 0..3 {
                let bgrad_i = b[0] * grads[i][0] + b[1] * grads[i][1];
                for j in 0..3 {
                    let bgrad_j = b[0] * grads[j][0] + b[1] * grads[j][1];
                    local[i][j] += w * (bgrad_j + cc * q.bary[j]) * bgrad_i;
                }
                local_f[i] += w * fv * bgrad_i;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], local[i][j]));
            }
            load[tri[i]] += local_f[i];
        }
    }

    let mut matrix = sys.a.clone();
    let stab = CsrMatrix::from_triplets(n, n, &triplets);
    for i in 0..n {
        let (cols, vals): (Vec<usize>, Vec<f64>) = {
            let (c, v) = stab.row(i);
            (c.to_vec(), v.to_vec())
        };
        for (&j, &v) in cols.iter().zip(&vals) {
            let k = matrix.entry_index(i, j).expect("SUPG pattern is a sub-pattern");
            matrix.values_mut()[k] += v;
        }
    }
    Ok((sys, matrix, load))
}

/// Solve the SUPG system with the default (classical) tau.
pub fn solve_supg(mesh: &Mesh, prob: &ProblemSpec) -> Result<(DofVector, SupgParameters)> {
    let params = compute_tau(mesh, prob, TauFormula::default());
    let u = solve_supg_with(mesh, prob, &params)?;
    Ok((u, params))
}

/// Solve the SUPG system with given parameters.
pub fn solve_supg_with(
    mesh: &Mesh,
    prob: &ProblemSpec,
    params: &SupgParameters,
) -> Result<DofVector> {
    let (sys, matrix, load) = assemble_supg(mesh, prob, params)?;
    let mut u_d = vec![0.0; sys.n_dofs()];
    for v in 0..sys.n_dofs() {
        if sys.dirichlet_dofs[v] {
            let [x, y] = mesh.vertex(v);
            u_d[v] = (prob.u_d)(x, y);
        }
    }
    let (m_bc, rhs) = assembly::eliminate_dirichlet(&matrix, &load, &sys.dirichlet_dofs, &u_d);
    let lu = SparseLu::factorize(&m_bc)?;
    Ok(DofVector::from_values(
        lu.solve(&rhs)?,
        sys.dirichlet_dofs.clone(),
    ))
}

/// SUPG norm of the error against the exact solution:
/// `(|u - u_h|_a^2 + sum_K tau_K |b.grad(u - u_h)|_{0,K}^2)^(1/2)`.
pub fn supg_norm_error(
    u_h: &DofVector,
    prob: &ProblemSpec,
    mesh: &Mesh,
    params: &SupgParameters,
) -> Result<f64> {
    let exact = prob
        .exact
        .as_ref()
        .ok_or(crate::Error::MissingExactSolution)?;
    let energy = assembly::energy_norm_error(u_h, prob, mesh)?;
    let mut stream = 0.0;
    for c in 0..mesh.n_cells() {
        let tau = params.tau[c];
        if tau == 0.0 {
            continue;
        }
        let (_, gh, _) = assembly::p1_plane(u_h, mesh, c);
        let [p0, p1, p2] = mesh.cell_coords(c);
        stream += tau
            * crate::quadrature::adaptive_triangle_integral(
                p0,
                p1,
                p2,
                mesh.cell_area(c),
                &|x, y| {
                    let b = (prob.b)(x, y);
                    let ge = (exact.grad)(x, y);
                    let s = b[0] * (ge[0] - gh[0]) + b[1] * (ge[1] - gh[1]);
                    s * s
                },
            );
    }
    Ok((energy * energy + stream).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_system;
    use crate::linalg::sparse_solve;
    use crate::mesh::{refine_uniform, unit_square_macro};
    use crate::problems::{custom_constant, example_boundary_layer};

    fn level(n: usize) -> Mesh {
        (0..n).fold(unit_square_macro(), |m, _| refine_uniform(&m))
    }

    #[test]
    fn tau_vanishes_without_convection() {
        let mesh = level(2);
        let prob = custom_constant(1.0, [0.0, 0.0], 0.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        let params = compute_tau(&mesh, &prob, TauFormula::default());
        assert!(params.tau.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn upwind_function_series_matches_closed_form() {
        // continuity across the series switch-over
        for x in [5e-3_f64, 9.9e-3, 1.01e-2, 0.1, 1.0, 50.0] {
            let series = x / 3.0 - x.powi(3) / 45.0 + 2.0 * x.powi(5) / 945.0;
            let closed = 1.0 / x.tanh() - 1.0 / x;
            if x < 2e-2 {
                assert!((upwind_function(x) - series).abs() < 1e-12, "x = {x}");
            }
            assert!((upwind_function(x) - closed).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn supg_equals_galerkin_for_pure_diffusion() {
        let mesh = level(2);
        let prob = custom_constant(1.0, [0.0, 0.0], 0.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        let (u_supg, params) = solve_supg(&mesh, &prob).unwrap();
        assert!(params.tau.iter().all(|&t| t == 0.0));
        let sys = assemble_system(&mesh, &prob).unwrap();
        let bc = sys.bc.as_ref().unwrap();
        let galerkin = sparse_solve(
            &bc.matrix,
            &DofVector::from_values(bc.rhs.clone(), sys.dirichlet_dofs.clone()),
        )
        .unwrap();
        for (a, b) in u_supg.values.iter().zip(&galerkin.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_data_reproduced() {
        let k = 2.5;
        let mesh = level(3);
        let prob = custom_constant(1e-3, [2.0, 1.0], 1.0, k, k, 0.0, 1.0).unwrap();
        let u = solve_supg(&mesh, &prob).unwrap().0;
        for &v in &u.values {
            assert!((v - k).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn solution_map_linear_in_data() {
        // superposition in (f, u_D): solve(a*data1 + b*data2) =
        // a*solve(data1) + b*solve(data2)
        let mesh = level(2);
        let mk = |f: f64, ud: f64| {
            let mut p = custom_constant(1e-2, [2.0, 1.0], 1.0, f, ud, 0.0, 1.0).unwrap();
            p.f = Box::new(move |x, y| f * (1.0 + x * y));
            p.u_d = Box::new(move |x, y| ud * (x - y));
            p
        };
        let (a, b) = (0.7, -1.3);
        let u1 = solve_supg(&mesh, &mk(1.0, 0.0)).unwrap().0;
        let u2 = solve_supg(&mesh, &mk(0.0, 1.0)).unwrap().0;
        let u12 = solve_supg(&mesh, &mk(a, b)).unwrap().0;
        for i in 0..u12.len() {
            let lin = a * u1.values[i] + b * u2.values[i];
            assert!((u12.values[i] - lin).abs() < 1e-10);
        }
    }

    #[test]
    fn supg_norm_error_reduces_to_energy_norm_for_zero_tau() {
        let mesh = level(3);
        let prob = example_boundary_layer(1e-3);
        let (u, _) = solve_supg(&mesh, &prob).unwrap();
        let zero_tau = SupgParameters {
            tau: vec![0.0; mesh.n_cells()],
        };
        let a = supg_norm_error(&u, &prob, &mesh, &zero_tau).unwrap();
        let b = assembly::energy_norm_error(&u, &prob, &mesh).unwrap();
        assert!((a - b).abs() < 1e-14 * b.max(1.0));
    }

    #[test]
    fn supg_norm_error_dominates_energy_norm() {
        let mesh = level(3);
        let prob = example_boundary_layer(1e-3);
        let (u, params) = solve_supg(&mesh, &prob).unwrap();
        let s = supg_norm_error(&u, &prob, &mesh, &params).unwrap();
        let e = assembly::energy_norm_error(&u, &prob, &mesh).unwrap();
        assert!(s >= e);
    }

    #[test]
    fn exact_linear_solution_reproduced() {
        // diffusion-dominated problem whose solution is linear: SUPG is
        // consistent, so the P1 solution is exact and both error norms vanish
        let mesh = level(2);
        let mut prob = custom_constant(1.0, [1.0, 2.0], 0.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        // u = x + 2y: -eps lap = 0, b.grad u = 1*1 + 2*2 = 5, c = 0 -> f = 5
        prob.f = Box::new(|_, _| 5.0);
        prob.u_d = Box::new(|x, y| x + 2.0 * y);
        prob.exact = Some(crate::problems::ExactSolution {
            u: Box::new(|x, y| x + 2.0 * y),
            grad: Box::new(|_, _| [1.0, 2.0]),
        });
        let (u, params) = solve_supg(&mesh, &prob).unwrap();
        let err = supg_norm_error(&u, &prob, &mesh, &params).unwrap();
        assert!(err < 1e-11, "err = {err}");
    }

    #[test]
    fn boundary_layer_overshoot_bounded_on_level_4() {
        // SUPG is not monotone; the overshoot near the layer stays modest
        let mesh = level(4);
        let prob = example_boundary_layer(1e-3);
        let (u, _) = solve_supg(&mesh, &prob).unwrap();
        let exact_max = 0.25; // max of y(1-y)(x - l(x)) is just below 1/4
        let max = u.values.iter().cloned().fold(f64::MIN, f64::max);
        assert!(max <= exact_max + 0.3, "max u_h = {max}");
    }
}
