//! Algebraic flux correction: solution-dependent limiters, the nonlinear
//! stabilization form, and the fixed-point solver.
//!
//! The AFC discretization adds limited artificial diffusion to the Galerkin
//! system so that the discrete solution satisfies the maximum principle:
//! find `u_h` with
//!
//! ```text
//! a(u_h, v_h) + d_h(u_h; u_h, v_h) = (f, v_h) + <g, v_h>_N,
//! d_h(w; u, v) = sum_ij (1 - alpha_ij(w)) d_ij (u_j - u_i) v_i,
//! ```
//!
//! where `D = (d_ij)` is the artificial diffusion matrix and the limiters
//! `alpha_ij(w) in [0, 1]` are computed row-wise from the Kuzmin or BJK
//! recipes and then symmetrized per edge. For P1 functions the same form has
//! an edge representation
//!
//! ```text
//! d_h(w; u, v) = sum_E (1 - alpha_E) |d_E| h_E (grad u . t_E, grad v . t_E)_E,
//! ```
//!
//! which the estimator module builds on; both evaluations agree to rounding.

use crate::assembly::{self, DiscreteSystem};
use crate::linalg::{CsrMatrix, DofVector, SparseLu};
use crate::mesh::Mesh;
use crate::problems::ProblemSpec;
use crate::supg;
use crate::{Error, Result};

/// Which limiter defines the nonlinear stabilization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimiterKind {
    /// Kuzmin's upwind limiter; applicable on arbitrary meshes, maximum
    /// principle guaranteed on Delaunay meshes.
    Kuzmin,
    /// The linearity-preserving limiter of Barrenechea, John and Knobloch.
    Bjk,
}

/// Limiter values aligned with the artificial diffusion pattern.
///
/// The stored matrix is pair-symmetric: `(1 - alpha_ij) d_ij =
/// (1 - alpha_ji) d_ji` for every pair, which the edge representation of the
/// stabilization assumes. Entries are 1 wherever the antidiffusive flux
/// `d_ij (u_j - u_i)` vanishes.
pub struct LimiterState {
    pub alpha: CsrMatrix,
    pub kind: LimiterKind,
    /// Per-dof weights of the BJK limiter (`None` for Kuzmin).
    pub gamma: Option<Vec<f64>>,
}

impl LimiterState {
    pub fn alpha_at(&self, i: usize, j: usize) -> f64 {
        self.alpha.get(i, j)
    }
}

/// Row-wise limiter bounds `P`, `Q`, `R` shared by both limiters.
#[derive(Clone, Debug, Default)]
struct RowBounds {
    p_plus: f64,
    p_minus: f64,
    q_plus: f64,
    q_minus: f64,
    r_plus: f64,
    r_minus: f64,
}

fn ratio_bound(q: f64, p: f64) -> f64 {
    // zero-P convention: no flux to limit means no limiting
    if p == 0.0 {
        1.0
    } else {
        (q / p).min(1.0)
    }
}

/// Kuzmin limiter bounds for every row. Dirichlet rows get `R = 1`.
fn kuzmin_bounds(a: &CsrMatrix, d: &CsrMatrix, u: &DofVector) -> Vec<RowBounds> {
    let n = a.n_rows();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = RowBounds::default();
        let (cols, dvals) = d.row(i);
        for (&j, &dij) in cols.iter().zip(dvals) {
            if j == i {
                continue;
            }
            let flux = dij * (u.values[j] - u.values[i]);
            let aij = a.get(i, j);
            let aji = a.get(j, i);
            if aji <= aij {
                r.p_plus += flux.max(0.0);
            }
            if aij <= aji {
                r.p_minus += flux.min(0.0);
            }
            r.q_plus -= flux.min(0.0);
            r.q_minus -= flux.max(0.0);
        }
        if u.dirichlet_mask[i] {
            r.r_plus = 1.0;
            r.r_minus = 1.0;
        } else {
            r.r_plus = ratio_bound(r.q_plus, r.p_plus);
            r.r_minus = ratio_bound(r.q_minus, r.p_minus);
        }
        rows.push(r);
    }
    rows
}

/// BJK limiter bounds. `P` sums run over the full sparsity neighborhood,
/// `Q_i^+ = q_i (u_i - u_i^max)` and `Q_i^- = q_i (u_i - u_i^min)` with
/// `u_i^max/min` taken over the neighborhood including `i` itself and
/// `q_i = gamma_i * sum_{j != i} d_ij`.
fn bjk_bounds(d: &CsrMatrix, u: &DofVector, gamma: &[f64]) -> Result<Vec<RowBounds>> {
    let n = d.n_rows();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        if !u.dirichlet_mask[i] && !(gamma[i] > 0.0) {
            return Err(Error::NonPositiveGamma {
                dof: i,
                value: gamma[i],
            });
        }
        let mut r = RowBounds::default();
        let mut u_max = u.values[i];
        let mut u_min = u.values[i];
        let mut q_i = 0.0;
        let (cols, dvals) = d.row(i);
        for (&j, &dij) in cols.iter().zip(dvals) {
            if j == i {
                continue;
            }
            let flux = dij * (u.values[j] - u.values[i]);
            r.p_plus += flux.max(0.0);
            r.p_minus += flux.min(0.0);
            u_max = u_max.max(u.values[j]);
            u_min = u_min.min(u.values[j]);
            q_i += gamma[i] * dij;
        }
        r.q_plus = q_i * (u.values[i] - u_max);
        r.q_minus = q_i * (u.values[i] - u_min);
        if u.dirichlet_mask[i] {
            r.r_plus = 1.0;
            r.r_minus = 1.0;
        } else {
            r.r_plus = ratio_bound(r.q_plus, r.p_plus);
            r.r_minus = ratio_bound(r.q_minus, r.p_minus);
        }
        rows.push(r);
    }
    Ok(rows)
}

/// Row-wise limiter value before symmetrization.
fn alpha_row(bounds: &RowBounds, flux: f64) -> f64 {
    if flux > 0.0 {
        bounds.r_plus
    } else if flux < 0.0 {
        bounds.r_minus
    } else {
        1.0
    }
}

/// Kuzmin limiter: row-wise bounds, then for each unordered pair the value
/// from the row `i` with `a_ji <= a_ij` is authoritative and copied to the
/// partner (ties resolved toward the lower index).
pub fn kuzmin_alpha(a: &CsrMatrix, d: &CsrMatrix, u: &DofVector) -> LimiterState {
    assert!(a.same_pattern(d), "stiffness and diffusion must align");
    let bounds = kuzmin_bounds(a, d, u);
    let mut alpha = d.zeros_like();
    let n = d.n_rows();
    for i in 0..n {
        let (cols, dvals): (Vec<usize>, Vec<f64>) = {
            let (c, v) = d.row(i);
            (c.to_vec(), v.to_vec())
        };
        for (&j, &dij) in cols.iter().zip(&dvals) {
            if j <= i {
                continue;
            }
            let aij = a.get(i, j);
            let aji = a.get(j, i);
            let value = if aji <= aij {
                alpha_row(&bounds[i], dij * (u.values[j] - u.values[i]))
            } else {
                alpha_row(&bounds[j], d.get(j, i) * (u.values[i] - u.values[j]))
            };
            let k_ij = alpha.entry_index(i, j).expect("pattern entry");
            let k_ji = alpha.entry_index(j, i).expect("pattern entry");
            alpha.values_mut()[k_ij] = value;
            alpha.values_mut()[k_ji] = value;
        }
        let k_ii = alpha.entry_index(i, i);
        if let Some(k) = k_ii {
            alpha.values_mut()[k] = 1.0;
        }
    }
    LimiterState {
        alpha,
        kind: LimiterKind::Kuzmin,
        gamma: None,
    }
}

/// BJK limiter: row-wise bounds, final `alpha_ij = min(abar_ij, abar_ji)`
/// between non-Dirichlet dofs; toward a Dirichlet column the row value is
/// kept and mirrored so the stored matrix stays symmetric.
pub fn bjk_alpha(d: &CsrMatrix, u: &DofVector, gamma: &[f64]) -> Result<LimiterState> {
    let bounds = bjk_bounds(d, u, gamma)?;
    let mut alpha = d.zeros_like();
    let n = d.n_rows();
    for i in 0..n {
        let (cols, dvals): (Vec<usize>, Vec<f64>) = {
            let (c, v) = d.row(i);
            (c.to_vec(), v.to_vec())
        };
        for (&j, &dij) in cols.iter().zip(&dvals) {
            if j <= i {
                continue;
            }
            let flux = dij * (u.values[j] - u.values[i]);
            let a_ij = alpha_row(&bounds[i], flux);
            let a_ji = alpha_row(&bounds[j], -flux);
            let dir_i = u.dirichlet_mask[i];
            let dir_j = u.dirichlet_mask[j];
            let value = match (dir_i, dir_j) {
                (false, false) => a_ij.min(a_ji),
                (false, true) => a_ij,
                (true, false) => a_ji,
                (true, true) => 1.0,
            };
            let k_ij = alpha.entry_index(i, j).expect("pattern entry");
            let k_ji = alpha.entry_index(j, i).expect("pattern entry");
            alpha.values_mut()[k_ij] = value;
            alpha.values_mut()[k_ji] = value;
        }
        if let Some(k) = alpha.entry_index(i, i) {
            alpha.values_mut()[k] = 1.0;
        }
    }
    Ok(LimiterState {
        alpha,
        kind: LimiterKind::Bjk,
        gamma: Some(gamma.to_vec()),
    })
}

/// Compute the limiter of the given kind for the current iterate.
pub fn compute_limiter(
    kind: LimiterKind,
    sys: &DiscreteSystem,
    u: &DofVector,
    gamma: &[f64],
) -> Result<LimiterState> {
    match kind {
        LimiterKind::Kuzmin => Ok(kuzmin_alpha(&sys.a, &sys.d, u)),
        LimiterKind::Bjk => bjk_alpha(&sys.d, u, gamma),
    }
}

/// Point form of the stabilization:
/// `sum_{i,j} (1 - alpha_ij) d_ij (u_j - u_i) v_i`.
pub fn dh_point(state: &LimiterState, d: &CsrMatrix, u: &DofVector, v: &DofVector) -> f64 {
    let n = d.n_rows();
    assert_eq!(u.len(), n);
    assert_eq!(v.len(), n);
    let mut acc = 0.0;
    for i in 0..n {
        let (cols, dvals) = d.row(i);
        let (_, avals) = state.alpha.row(i);
        let mut row_acc = 0.0;
        for ((&j, &dij), &aij) in cols.iter().zip(dvals).zip(avals) {
            if j == i {
                continue;
            }
            row_acc += (1.0 - aij) * dij * (u.values[j] - u.values[i]);
        }
        acc += row_acc * v.values[i];
    }
    acc
}

/// Edge form of the stabilization:
/// `sum_E (1 - alpha_E) |d_E| h_E (grad u . t_E, grad v . t_E)_E`.
///
/// For P1 functions the tangential derivative along an edge is the nodal
/// difference over the length, so each edge contributes
/// `(1 - alpha_E) |d_E| (u_j - u_i)(v_j - v_i)`; this agrees with
/// [`dh_point`] whenever the limiter is pair-symmetric.
pub fn dh_edge(
    state: &LimiterState,
    d: &CsrMatrix,
    mesh: &Mesh,
    u: &DofVector,
    v: &DofVector,
) -> Result<f64> {
    let mut acc = 0.0;
    for edge in mesh.edges() {
        let [i, j] = edge.vertices;
        let Some(k) = d.entry_index(i, j) else {
            return Err(Error::DisconnectedEdge { v0: i, v1: j });
        };
        let d_e = d.values()[k].abs();
        let alpha_e = state.alpha.values()[k];
        acc += (1.0 - alpha_e) * d_e * (u.values[j] - u.values[i]) * (v.values[j] - v.values[i]);
    }
    Ok(acc)
}

/// Options of the nonlinear fixed-point solver.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Initial damping factor in (0, 1].
    pub omega: f64,
    /// Relative residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitGuess,
    /// Uniform BJK weight; per-dof overrides via [`SolverOptions::gamma_override`].
    pub gamma: f64,
    pub gamma_override: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            omega: 1.0,
            tol: 1e-10,
            max_iter: 25_000,
            init: InitGuess::Supg,
            gamma: 1.0,
            gamma_override: None,
        }
    }
}

/// Initial iterate of the fixed-point loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitGuess {
    /// The SUPG solution (best default).
    Supg,
    /// Dirichlet data with zeros inside.
    Zero,
    /// The linear upwind solution `(A + D) u = F`.
    Upwind,
}

/// Iteration statistics of one nonlinear solve.
#[derive(Clone, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_residual: f64,
    /// Residual scale `|F_eff|_2` used for the relative criterion.
    pub residual_scale: f64,
    pub converged: bool,
    /// Steps accepted at the minimum damping although the residual grew.
    pub non_monotone_steps: usize,
}

const OMEGA_MIN: f64 = 1.0 / 64.0;

/// Nonlinear residual of the AFC system at `u` (zero at Dirichlet rows):
/// `r_i = (A u)_i + sum_j (1 - alpha_ij) d_ij (u_j - u_i) - F_i`.
pub fn nonlinear_residual(
    sys: &DiscreteSystem,
    state: &LimiterState,
    u: &DofVector,
) -> Vec<f64> {
    let au = sys.a.matvec(&u.values);
    let n = sys.n_dofs();
    let mut r = vec![0.0; n];
    for i in 0..n {
        if sys.dirichlet_dofs[i] {
            continue;
        }
        let (cols, dvals) = sys.d.row(i);
        let (_, avals) = state.alpha.row(i);
        let mut stab = 0.0;
        for ((&j, &dij), &aij) in cols.iter().zip(dvals).zip(avals) {
            if j != i {
                stab += (1.0 - aij) * dij * (u.values[j] - u.values[i]);
            }
        }
        r[i] = au[i] + stab - sys.f.values[i];
    }
    r
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve the nonlinear AFC system by the fixed-point iteration
/// `(A + D) u_next = F + (alpha o D)-flux(u)`, damped as
/// `u <- u + omega (u_next - u)`. The damping halves on residual growth
/// (down to 1/64) and resets after every accepted step, so the fixed point
/// itself never depends on omega. `A + D` is factorized once and reused.
pub fn solve_afc(
    mesh: &Mesh,
    prob: &ProblemSpec,
    kind: LimiterKind,
    opts: &SolverOptions,
) -> Result<(DofVector, LimiterState, SolveStats)> {
    let sys = assembly::assemble_system(mesh, prob)?;
    solve_afc_assembled(mesh, prob, &sys, kind, opts)
}

/// As [`solve_afc`] for a pre-assembled system (the adaptive driver reuses
/// the assembly between the solve and the estimate steps).
pub fn solve_afc_assembled(
    mesh: &Mesh,
    prob: &ProblemSpec,
    sys: &DiscreteSystem,
    kind: LimiterKind,
    opts: &SolverOptions,
) -> Result<(DofVector, LimiterState, SolveStats)> {
    solve_afc_with_initial(mesh, prob, sys, kind, opts, None)
}

/// As [`solve_afc_assembled`] with an explicit initial iterate, which takes
/// precedence over `opts.init` (the driver passes the SUPG solution it
/// already computed for the estimator).
pub fn solve_afc_with_initial(
    mesh: &Mesh,
    prob: &ProblemSpec,
    sys: &DiscreteSystem,
    kind: LimiterKind,
    opts: &SolverOptions,
    initial: Option<DofVector>,
) -> Result<(DofVector, LimiterState, SolveStats)> {
    assert!(opts.omega > 0.0 && opts.omega <= 1.0, "omega must be in (0, 1]");
    let n = sys.n_dofs();
    let gamma = match &opts.gamma_override {
        Some(g) => {
            if g.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "gamma override has {} entries for {} dofs",
                    g.len(),
                    n
                )));
            }
            g.clone()
        }
        None => vec![opts.gamma; n],
    };

    // constant fixed-point matrix A + D with boundary rows eliminated
    let mut a_plus_d = sys.a.clone();
    for (v, dv) in a_plus_d.values_mut().iter_mut().zip(sys.d.values()) {
        *v += dv;
    }
    let (m_bc, rhs0) = assembly::eliminate_dirichlet(
        &a_plus_d,
        &sys.f.values,
        &sys.dirichlet_dofs,
        &sys.u_dirichlet,
    );
    let lu = SparseLu::factorize(&m_bc)?;

    let free_norm = |v: &[f64]| -> f64 {
        v.iter()
            .zip(&sys.dirichlet_dofs)
            .filter(|(_, &d)| !d)
            .map(|(x, _)| x * x)
            .sum::<f64>()
            .sqrt()
    };
    let scale = {
        let s = free_norm(&rhs0);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };

    let mut u = match initial {
        Some(u0) => {
            if u0.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "initial iterate has {} entries for {} dofs",
                    u0.len(),
                    n
                )));
            }
            u0
        }
        None => match opts.init {
            InitGuess::Zero => {
                DofVector::from_values(sys.u_dirichlet.clone(), sys.dirichlet_dofs.clone())
            }
            InitGuess::Upwind => {
                DofVector::from_values(lu.solve(&rhs0)?, sys.dirichlet_dofs.clone())
            }
            InitGuess::Supg => supg::solve_supg(mesh, prob)?.0,
        },
    };

    let mut state = compute_limiter(kind, sys, &u, &gamma)?;
    let mut res = norm2(&nonlinear_residual(sys, &state, &u));
    let mut stats = SolveStats {
        iterations: 0,
        final_residual: res,
        residual_scale: scale,
        converged: res <= opts.tol * scale,
        non_monotone_steps: 0,
    };

    while !stats.converged && stats.iterations < opts.max_iter {
        // right-hand side flux term sum_{j != i} alpha_ij d_ij (u_j - u_i)
        let mut rhs = rhs0.clone();
        for i in 0..n {
            if sys.dirichlet_dofs[i] {
                continue;
            }
            let (cols, dvals) = sys.d.row(i);
            let (_, avals) = state.alpha.row(i);
            let mut m = 0.0;
            for ((&j, &dij), &aij) in cols.iter().zip(dvals).zip(avals) {
                if j != i {
                    m += aij * dij * (u.values[j] - u.values[i]);
                }
            }
            rhs[i] += m;
        }
        let target = lu.solve(&rhs)?;

        // damped step with retry on residual growth
        let mut omega = opts.omega;
        let (next_u, next_state, next_res) = loop {
            let cand_values: Vec<f64> = u
                .values
                .iter()
                .zip(&target)
                .map(|(&ui, &ti)| ui + omega * (ti - ui))
                .collect();
            let cand = DofVector::from_values(cand_values, sys.dirichlet_dofs.clone());
            let cand_state = compute_limiter(kind, sys, &cand, &gamma)?;
            let cand_res = norm2(&nonlinear_residual(sys, &cand_state, &cand));
            if cand_res <= res || omega <= OMEGA_MIN {
                if cand_res > res {
                    stats.non_monotone_steps += 1;
                }
                break (cand, cand_state, cand_res);
            }
            omega *= 0.5;
        };
        u = next_u;
        state = next_state;
        res = next_res;
        stats.iterations += 1;
        stats.final_residual = res;
        stats.converged = res <= opts.tol * scale;
    }

    Ok((u, state, stats))
}

/// Solve the linear system obtained by freezing the limiter matrix:
/// `A u + C u = F` with `C_ij = (1 - alpha_ij) d_ij` off the diagonal and a
/// compensating diagonal. `alpha = 1` recovers the plain Galerkin system,
/// `alpha = 0` the linear upwind system `(A + D) u = F`.
pub fn solve_frozen_alpha(sys: &DiscreteSystem, alpha: &CsrMatrix) -> Result<DofVector> {
    let n = sys.n_dofs();
    let mut b = sys.a.clone();
    for i in 0..n {
        let (cols, dvals): (Vec<usize>, Vec<f64>) = {
            let (c, v) = sys.d.row(i);
            (c.to_vec(), v.to_vec())
        };
        let mut diag_comp = 0.0;
        for (&j, &dij) in cols.iter().zip(&dvals) {
            if j == i {
                continue;
            }
            let c_ij = (1.0 - alpha.get(i, j)) * dij;
            let k = b.entry_index(i, j).expect("pattern entry");
            b.values_mut()[k] += c_ij;
            diag_comp -= c_ij;
        }
        let k = b.entry_index(i, i).expect("diagonal entry");
        b.values_mut()[k] += diag_comp;
    }
    let (m_bc, rhs) =
        assembly::eliminate_dirichlet(&b, &sys.f.values, &sys.dirichlet_dofs, &sys.u_dirichlet);
    let lu = SparseLu::factorize(&m_bc)?;
    Ok(DofVector::from_values(
        lu.solve(&rhs)?,
        sys.dirichlet_dofs.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_system;
    use crate::mesh::{refine_uniform, unit_square_macro};
    use crate::problems::{custom_constant, example_boundary_layer};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn level(n: usize) -> Mesh {
        (0..n).fold(unit_square_macro(), |m, _| refine_uniform(&m))
    }

    /// 3x3 system with hand-set entries used for both limiter table tests:
    /// a01 = 2, a10 = -1, a02 = 1, a20 = 3, a12 = -1, a21 = 0.5, so that
    /// d01 = -2, d02 = -3, d12 = -1/2; iterate u = (1, 0, 2).
    fn hand_system() -> (CsrMatrix, CsrMatrix, DofVector) {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 5.0),
                (0, 1, 2.0),
                (0, 2, 1.0),
                (1, 0, -1.0),
                (1, 1, 5.0),
                (1, 2, -1.0),
                (2, 0, 3.0),
                (2, 1, 0.5),
                (2, 2, 5.0),
            ],
        );
        let d = crate::assembly::artificial_diffusion(&a);
        let u = DofVector::from_values(vec![1.0, 0.0, 2.0], vec![false; 3]);
        (a, d, u)
    }

    #[test]
    fn kuzmin_hand_table() {
        let (a, d, u) = hand_system();
        assert_eq!(d.get(0, 1), -2.0);
        assert_eq!(d.get(0, 2), -3.0);
        assert_eq!(d.get(1, 2), -0.5);

        let bounds = kuzmin_bounds(&a, &d, &u);
        // hand-executed: fluxes g01 = 2, g02 = -3, g10 = -2, g12 = -1,
        // g20 = 3, g21 = 1
        assert_eq!(
            (bounds[0].p_plus, bounds[0].p_minus, bounds[0].q_plus, bounds[0].q_minus),
            (2.0, -3.0, 3.0, -2.0)
        );
        assert_eq!((bounds[0].r_plus, bounds[0].r_minus), (1.0, 2.0 / 3.0));
        assert_eq!(
            (bounds[1].p_plus, bounds[1].p_minus, bounds[1].q_plus, bounds[1].q_minus),
            (0.0, -3.0, 3.0, 0.0)
        );
        assert_eq!((bounds[1].r_plus, bounds[1].r_minus), (1.0, 0.0));
        assert_eq!(
            (bounds[2].p_plus, bounds[2].p_minus, bounds[2].q_plus, bounds[2].q_minus),
            (4.0, 0.0, 0.0, -4.0)
        );
        assert_eq!((bounds[2].r_plus, bounds[2].r_minus), (0.0, 1.0));

        // pair symmetrization: {0,1} -> row 0 (a10 <= a01) value 1;
        // {0,2} -> row 2 (a02 <= a20) value 0; {1,2} -> row 2 value 0
        let state = kuzmin_alpha(&a, &d, &u);
        assert_eq!(state.alpha_at(0, 1), 1.0);
        assert_eq!(state.alpha_at(1, 0), 1.0);
        assert_eq!(state.alpha_at(0, 2), 0.0);
        assert_eq!(state.alpha_at(1, 2), 0.0);
    }

    #[test]
    fn bjk_hand_table() {
        let (_, d, u) = hand_system();
        let state = bjk_alpha(&d, &u, &[1.0; 3]).unwrap();
        // hand-executed: R0 = (1, 1), R1 = (1, 0), R2 = (0, 1);
        // abar01 = 1, abar02 = 1, abar10 = 0, abar12 = 0, abar20 = 0,
        // abar21 = 0 -> all pair minima are 0
        assert_eq!(state.alpha_at(0, 1), 0.0);
        assert_eq!(state.alpha_at(0, 2), 0.0);
        assert_eq!(state.alpha_at(1, 2), 0.0);
    }

    #[test]
    fn constant_iterate_gives_alpha_one() {
        let mesh = level(2);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).unwrap();
        let u = DofVector::from_values(vec![3.5; sys.n_dofs()], sys.dirichlet_dofs.clone());
        let kz = kuzmin_alpha(&sys.a, &sys.d, &u);
        let bjk = bjk_alpha(&sys.d, &u, &vec![1.0; sys.n_dofs()]).unwrap();
        for state in [kz, bjk] {
            for i in 0..sys.n_dofs() {
                let (cols, vals) = state.alpha.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    if sys.d.get(i, j) != 0.0 || j == i {
                        assert_eq!(v, 1.0, "alpha[{i}][{j}]");
                    }
                }
            }
        }
    }

    #[test]
    fn alpha_in_unit_interval_randomized() {
        let mesh = level(2);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let u = DofVector::from_values(
                (0..sys.n_dofs()).map(|_| rng.random_range(-2.0..2.0)).collect(),
                sys.dirichlet_dofs.clone(),
            );
            for state in [
                kuzmin_alpha(&sys.a, &sys.d, &u),
                bjk_alpha(&sys.d, &u, &vec![1.0; sys.n_dofs()]).unwrap(),
            ] {
                for (&v, &dv) in state.alpha.values().iter().zip(sys.d.values()) {
                    assert!((0.0..=1.0).contains(&v) || dv == 0.0, "alpha = {v}");
                }
                // pair symmetry as used by the edge form
                for i in 0..sys.n_dofs() {
                    let (cols, _) = state.alpha.row(i);
                    for &j in cols {
                        let lhs = (1.0 - state.alpha_at(i, j)) * sys.d.get(i, j);
                        let rhs = (1.0 - state.alpha_at(j, i)) * sys.d.get(j, i);
                        assert!((lhs - rhs).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn bjk_rejects_nonpositive_gamma() {
        let mesh = level(1);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).unwrap();
        let u = DofVector::from_values(vec![0.0; sys.n_dofs()], sys.dirichlet_dofs.clone());
        let mut gamma = vec![1.0; sys.n_dofs()];
        let free = sys.dirichlet_dofs.iter().position(|&d| !d).unwrap();
        gamma[free] = 0.0;
        assert!(matches!(
            bjk_alpha(&sys.d, &u, &gamma),
            Err(Error::NonPositiveGamma { .. })
        ));
    }

    #[test]
    fn bjk_linearity_preservation_on_interior_patch() {
        // nodal values of a linear function with a large gamma: the bounds
        // Q_i dominate P_i on the structured interior patch, so alpha = 1
        // on every pair of non-Dirichlet dofs
        let mesh = level(2);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).unwrap();
        let nodal: Vec<f64> = (0..mesh.n_vertices())
            .map(|v| {
                let [x, y] = mesh.vertex(v);
                0.7 * x - 0.3 * y + 0.1
            })
            .collect();
        let u = DofVector::from_values(nodal, sys.dirichlet_dofs.clone());
        let state = bjk_alpha(&sys.d, &u, &vec![1e4; sys.n_dofs()]).unwrap();
        for i in 0..sys.n_dofs() {
            if sys.dirichlet_dofs[i] {
                continue;
            }
            let (cols, vals) = state.alpha.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i && !sys.dirichlet_dofs[j] && sys.d.get(i, j) != 0.0 {
                    assert_eq!(v, 1.0, "alpha[{i}][{j}] = {v}");
                }
            }
        }
    }

    fn random_symmetric_alpha(d: &CsrMatrix, rng: &mut ChaCha8Rng) -> CsrMatrix {
        let mut alpha = d.zeros_like();
        for i in 0..d.n_rows() {
            let cols: Vec<usize> = d.row(i).0.to_vec();
            for j in cols {
                if j > i {
                    let v: f64 = rng.random_range(0.0..=1.0);
                    let kij = alpha.entry_index(i, j).unwrap();
                    let kji = alpha.entry_index(j, i).unwrap();
                    alpha.values_mut()[kij] = v;
                    alpha.values_mut()[kji] = v;
                } else if j == i {
                    let k = alpha.entry_index(i, i).unwrap();
                    alpha.values_mut()[k] = 1.0;
                }
            }
        }
        alpha
    }

    #[test]
    fn dh_point_matches_dh_edge_on_random_draws() {
        let mesh = level(2);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let state = LimiterState {
                alpha: random_symmetric_alpha(&sys.d, &mut rng),
                kind: LimiterKind::Kuzmin,
                gamma: None,
            };
            let u = DofVector::from_values(
                (0..sys.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                sys.dirichlet_dofs.clone(),
            );
            let v = DofVector::from_values(
                (0..sys.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                sys.dirichlet_dofs.clone(),
            );
            let p = dh_point(&state, &sys.d, &u, &v);
            let e = dh_edge(&state, &sys.d, &mesh, &u, &v).unwrap();
            assert!(
                (p - e).abs() <= 1e-12 * p.abs().max(e.abs()).max(1e-30),
                "point {p} vs edge {e}"
            );
        }
    }

    #[test]
    fn dh_zero_cases() {
        let mesh = level(1);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).unwrap();
        let n = sys.n_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = DofVector::from_values(
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            sys.dirichlet_dofs.clone(),
        );
        // constant u
        let state = LimiterState {
            alpha: random_symmetric_alpha(&sys.d, &mut rng),
            kind: LimiterKind::Kuzmin,
            gamma: None,
        };
        let u_const = DofVector::from_values(vec![2.0; n], sys.dirichlet_dofs.clone());
        assert_eq!(dh_point(&state, &sys.d, &u_const, &v), 0.0);
        // alpha identically one
        let mut ones = sys.d.zeros_like();
        ones.values_mut().fill(1.0);
        let all_one = LimiterState {
            alpha: ones,
            kind: LimiterKind::Kuzmin,
            gamma: None,
        };
        let u = DofVector::from_values(
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            sys.dirichlet_dofs.clone(),
        );
        assert_eq!(dh_point(&all_one, &sys.d, &u, &v), 0.0);
        assert_eq!(dh_edge(&all_one, &sys.d, &mesh, &u, &v).unwrap(), 0.0);
    }

    #[test]
    fn dh_nonnegative_and_cauchy_schwarz() {
        let mesh = level(2);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).unwrap();
        let n = sys.n_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let state = LimiterState {
                alpha: random_symmetric_alpha(&sys.d, &mut rng),
                kind: LimiterKind::Kuzmin,
                gamma: None,
            };
            let u = DofVector::from_values(
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                sys.dirichlet_dofs.clone(),
            );
            let v = DofVector::from_values(
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                sys.dirichlet_dofs.clone(),
            );
            let duu = dh_point(&state, &sys.d, &u, &u);
            let dvv = dh_point(&state, &sys.d, &v, &v);
            let duv = dh_point(&state, &sys.d, &u, &v);
            assert!(duu >= -1e-14, "d_h(u, u) = {duu}");
            assert!(dvv >= -1e-14);
            assert!(
                duv <= duu.max(0.0).sqrt() * dvv.max(0.0).sqrt() + 1e-12,
                "Cauchy-Schwarz violated: {duv} vs {} * {}",
                duu.sqrt(),
                dvv.sqrt()
            );
        }
    }

    #[test]
    fn dh_bilinear_in_second_and_third_argument() {
        let mesh = level(1);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).unwrap();
        let n = sys.n_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draw = |rng: &mut ChaCha8Rng| {
            DofVector::from_values(
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                sys.dirichlet_dofs.clone(),
            )
        };
        for _ in 0..50 {
            let state = LimiterState {
                alpha: random_symmetric_alpha(&sys.d, &mut rng),
                kind: LimiterKind::Kuzmin,
                gamma: None,
            };
            let (u1, u2, v) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let sum = DofVector::from_values(
                u1.values.iter().zip(&u2.values).map(|(a, b)| a + b).collect(),
                sys.dirichlet_dofs.clone(),
            );
            let lhs = dh_point(&state, &sys.d, &sum, &v);
            let rhs = dh_point(&state, &sys.d, &u1, &v) + dh_point(&state, &sys.d, &u2, &v);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
            let lhs_t = dh_point(&state, &sys.d, &v, &sum);
            let rhs_t = dh_point(&state, &sys.d, &v, &u1) + dh_point(&state, &sys.d, &v, &u2);
            assert!((lhs_t - rhs_t).abs() <= 1e-12 * lhs_t.abs().max(1.0));
        }
    }

    #[test]
    fn pure_diffusion_converges_in_one_iteration() {
        let mesh = level(2);
        let prob = custom_constant(1.0, [0.0, 0.0], 0.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        let opts = SolverOptions {
            init: InitGuess::Zero,
            ..SolverOptions::default()
        };
        let (u, _, stats) = solve_afc(&mesh, &prob, LimiterKind::Kuzmin, &opts).unwrap();
        assert!(stats.converged);
        assert_eq!(stats.iterations, 1);
        // and the result is the Galerkin solution of the Poisson problem
        let sys = assemble_system(&mesh, &prob).unwrap();
        let bc = sys.bc.as_ref().unwrap();
        let galerkin = crate::linalg::sparse_solve(
            &bc.matrix,
            &DofVector::from_values(bc.rhs.clone(), sys.dirichlet_dofs.clone()),
        )
        .unwrap();
        for (a, b) in u.values.iter().zip(&galerkin.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_data_reproduced_by_both_limiters() {
        // u_D = K, f = c K: the AFC solution is identically K
        let mesh = level(2);
        let k = 0.75;
        let prob = custom_constant(1e-2, [1.0, -0.5], 2.0, 2.0 * k, k, 0.0, 2.0).unwrap();
        for kind in [LimiterKind::Kuzmin, LimiterKind::Bjk] {
            let (u, _, stats) =
                solve_afc(&mesh, &prob, kind, &SolverOptions::default()).unwrap();
            assert!(stats.converged, "{kind:?} did not converge");
            for &v in &u.values {
                assert!((v - k).abs() < 1e-9, "{kind:?}: {v}");
            }
        }
    }

    #[test]
    fn frozen_alpha_limits() {
        let mesh = level(2);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).unwrap();
        // alpha = 1: plain Galerkin
        let mut ones = sys.d.zeros_like();
        ones.values_mut().fill(1.0);
        let u_one = solve_frozen_alpha(&sys, &ones).unwrap();
        let bc = sys.bc.as_ref().unwrap();
        let galerkin = crate::linalg::sparse_solve(
            &bc.matrix,
            &DofVector::from_values(bc.rhs.clone(), sys.dirichlet_dofs.clone()),
        )
        .unwrap();
        for (a, b) in u_one.values.iter().zip(&galerkin.values) {
            assert!((a - b).abs() < 1e-11);
        }
        // alpha = 0: linear upwind system (A + D) u = F
        let zeros = sys.d.zeros_like();
        let u_zero = solve_frozen_alpha(&sys, &zeros).unwrap();
        let mut a_plus_d = sys.a.clone();
        for (v, dv) in a_plus_d.values_mut().iter_mut().zip(sys.d.values()) {
            *v += dv;
        }
        let (m_bc, rhs) = assembly::eliminate_dirichlet(
            &a_plus_d,
            &sys.f.values,
            &sys.dirichlet_dofs,
            &sys.u_dirichlet,
        );
        let upwind = crate::linalg::sparse_solve(
            &m_bc,
            &DofVector::from_values(rhs, sys.dirichlet_dofs.clone()),
        )
        .unwrap();
        for (a, b) in u_zero.values.iter().zip(&upwind.values) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn nonlinear_solve_meets_residual_contract() {
        let mesh = level(3);
        let prob = example_boundary_layer(1e-3);
        for kind in [LimiterKind::Kuzmin, LimiterKind::Bjk] {
            let (u, state, stats) =
                solve_afc(&mesh, &prob, kind, &SolverOptions::default()).unwrap();
            assert!(stats.converged, "{kind:?} not converged: {stats:?}");
            let sys = assemble_system(&mesh, &prob).unwrap();
            let r = norm2(&nonlinear_residual(&sys, &state, &u));
            assert!(r <= 1e-10 * stats.residual_scale * 1.000001);
        }
    }
}
