//! Runtime property suites behind the `check` subcommand.
//!
//! Each check is a deterministic, seeded verification of one structural
//! property the discretization relies on. They mirror the crate's test
//! suite but run from the installed binary, so a build on a new platform
//! can be validated without the source tree.

use crate::afc::{self, LimiterKind, LimiterState, SolverOptions};
use crate::assembly::{artificial_diffusion, assemble_system};
use crate::estimators::{afc_energy_estimate, EstimatorConstants};
use crate::linalg::{CsrMatrix, DofVector};
use crate::mesh::{compute_cell_geometry, refine_adaptive, refine_uniform, unit_square_macro, Mesh};
use crate::problems::{custom_constant, example_boundary_layer, example_hmm86};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, result: std::result::Result<String, String>) -> CheckOutcome {
    match result {
        Ok(detail) => CheckOutcome {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckOutcome {
            name,
            passed: false,
            detail,
        },
    }
}

fn level(n: usize) -> Mesh {
    (0..n).fold(unit_square_macro(), |m, _| refine_uniform(&m))
}

/// A mildly adaptive mesh (greens included) for geometry checks.
fn adaptive_sample_mesh() -> Mesh {
    let mut mesh = level(2);
    for _ in 0..2 {
        let marked: BTreeSet<usize> = (0..mesh.n_cells())
            .filter(|&c| {
                let [p0, p1, p2] = mesh.cell_coords(c);
                (p0[0] + p1[0] + p2[0]) / 3.0 > 0.6
            })
            .collect();
        mesh = refine_adaptive(&mesh, &marked).expect("closure succeeds");
    }
    mesh
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

/// Point and edge forms of the stabilization agree on random P1 data.
pub fn check_dh_equivalence() -> CheckOutcome {
    outcome("dh_point_vs_dh_edge", (|| {
        let mesh = level(2);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst = 0.0_f64;
        for _ in 0..100 {
            let state = LimiterState {
                alpha: random_symmetric_alpha(&sys.d, &mut rng),
                kind: LimiterKind::Kuzmin,
                gamma: None,
            };
            let draw = |rng: &mut ChaCha8Rng| {
                DofVector::from_values(
                    (0..sys.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    sys.dirichlet_dofs.clone(),
                )
            };
            let (u, v) = (draw(&mut rng), draw(&mut rng));
            let p = afc::dh_point(&state, &sys.d, &u, &v);
            let e = afc::dh_edge(&state, &sys.d, &mesh, &u, &v).map_err(|e| e.to_string())?;
            let rel = (p - e).abs() / p.abs().max(e.abs()).max(1e-30);
            worst = worst.max(rel);
            if rel > 1e-12 {
                return Err(format!("relative gap {rel:.3e} exceeds 1e-12"));
            }
        }
        Ok(format!("100 draws, worst relative gap {worst:.3e}"))
    })())
}

/// Symmetry, sign and row-sum invariants of the artificial diffusion on the
/// assembled benchmarks, and D = 0 for pure diffusion on a Delaunay mesh.
pub fn check_artificial_diffusion() -> CheckOutcome {
    outcome("artificial_diffusion_invariants", (|| {
        for (name, prob) in [
            ("boundary_layer", example_boundary_layer(1e-3)),
            ("hmm86", example_hmm86(1e-4)),
        ] {
            let mesh = level(3);
            let sys = assemble_system(&mesh, &prob).map_err(|e| e.to_string())?;
            for i in 0..sys.n_dofs() {
                let (cols, vals) = sys.d.row(i);
                let mut sum = 0.0;
                for (&j, &v) in cols.iter().zip(vals) {
                    sum += v;
                    if j != i {
                        if v > 0.0 {
                            return Err(format!("{name}: d[{i}][{j}] = {v} > 0"));
                        }
                        if (v - sys.d.get(j, i)).abs() > 1e-15 {
                            return Err(format!("{name}: asymmetry at ({i}, {j})"));
                        }
                    }
                }
                if sum.abs() > 1e-12 {
                    return Err(format!("{name}: row {i} sums to {sum:.3e}"));
                }
            }
        }
        let mesh = level(2);
        let poisson = custom_constant(1.0, [0.0, 0.0], 0.0, 1.0, 0.0, 0.0, 0.0)
            .map_err(|e| e.to_string())?;
        let sys = assemble_system(&mesh, &poisson).map_err(|e| e.to_string())?;
        let d = artificial_diffusion(&sys.a);
        if d.values().iter().any(|&v| v.abs() > 1e-14) {
            return Err("nonzero D for pure diffusion on a Delaunay mesh".into());
        }
        Ok("both benchmarks + Poisson control".into())
    })())
}

/// Limiter values stay in [0, 1] on random iterates; zero flux forces
/// alpha = 1; constant data is reproduced by both limiters.
pub fn check_limiter_bounds() -> CheckOutcome {
    outcome("limiter_bounds_and_conventions", (|| {
        let mesh = level(2);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let u = DofVector::from_values(
                (0..sys.n_dofs()).map(|_| rng.random_range(-3.0..3.0)).collect(),
                sys.dirichlet_dofs.clone(),
            );
            let states = [
                afc::kuzmin_alpha(&sys.a, &sys.d, &u),
                afc::bjk_alpha(&sys.d, &u, &vec![1.0; sys.n_dofs()]).map_err(|e| e.to_string())?,
            ];
            for state in states {
                for i in 0..sys.n_dofs() {
                    let (cols, avals) = state.alpha.row(i);
                    for (&j, &a) in cols.iter().zip(avals) {
                        let dij = sys.d.get(i, j);
                        if dij == 0.0 && j != i {
                            continue;
                        }
                        if !(0.0..=1.0).contains(&a) {
                            return Err(format!("alpha[{i}][{j}] = {a}"));
                        }
                        let flux = dij * (u.values[j] - u.values[i]);
                        if j != i && flux == 0.0 && a != 1.0 {
                            return Err(format!("zero flux but alpha[{i}][{j}] = {a}"));
                        }
                    }
                }
            }
        }
        // constant reproduction through the full nonlinear solve
        let k = 1.25;
        let const_prob = custom_constant(1e-2, [1.0, -0.5], 2.0, 2.0 * k, k, 0.0, 2.0)
            .map_err(|e| e.to_string())?;
        for kind in [LimiterKind::Kuzmin, LimiterKind::Bjk] {
            let (u, _, stats) = afc::solve_afc(&mesh, &const_prob, kind, &SolverOptions::default())
                .map_err(|e| e.to_string())?;
            if !stats.converged {
                return Err(format!("{kind:?}: constant problem did not converge"));
            }
            if u.values.iter().any(|&v| (v - k).abs() > 1e-9) {
                return Err(format!("{kind:?}: constant solution not reproduced"));
            }
        }
        Ok("50 random iterates, both limiters, constant reproduction".into())
    })())
}

/// Edge-trace inequality with the computed per-cell constant, on uniform
/// and adaptive meshes, 1000 random linear functions per mesh.
pub fn check_edge_trace_inequality() -> CheckOutcome {
    outcome("edge_trace_inequality", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mesh in [level(2), adaptive_sample_mesh()] {
            let geo = compute_cell_geometry(&mesh).map_err(|e| e.to_string())?;
            for _ in 0..1000 {
                let gx: f64 = rng.random_range(-5.0..5.0);
                let gy: f64 = rng.random_range(-5.0..5.0);
                let c = rng.random_range(0..mesh.n_cells());
                let cg = &geo.cells[c];
                // sum over the cell's edges of |grad phi . t_E|^2_(0,E)
                let mut lhs = 0.0;
                for e in mesh.cell_edge_indices(c) {
                    let edge = mesh.edge(e);
                    let t = edge.tangent;
                    let d = gx * t[0] + gy * t[1];
                    lhs += d * d * edge.length;
                }
                let rhs = cg.c_edge / cg.h_k * (gx * gx + gy * gy) * cg.area;
                if lhs > rhs * (1.0 + 1e-12) {
                    return Err(format!(
                        "cell {c}: lhs {lhs:.6e} > c_edge/h_K * |grad|^2_K = {rhs:.6e}"
                    ));
                }
            }
        }
        Ok("2000 random linear functions across two meshes".into())
    })())
}

/// Nonlinear solver contract: converged residual below tolerance and pure
/// diffusion converging in a single iteration.
pub fn check_solver_residual() -> CheckOutcome {
    outcome("nonlinear_solver_residual", (|| {
        let mesh = level(3);
        let prob = example_boundary_layer(1e-3);
        let (u, state, stats) =
            afc::solve_afc(&mesh, &prob, LimiterKind::Kuzmin, &SolverOptions::default())
                .map_err(|e| e.to_string())?;
        if !stats.converged {
            return Err("benchmark solve did not converge".into());
        }
        let sys = assemble_system(&mesh, &prob).map_err(|e| e.to_string())?;
        let r = afc::nonlinear_residual(&sys, &state, &u);
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn > 1e-10 * stats.residual_scale {
            return Err(format!("residual {rn:.3e} above tolerance"));
        }
        let poisson = custom_constant(1.0, [0.0, 0.0], 0.0, 1.0, 0.0, 0.0, 0.0)
            .map_err(|e| e.to_string())?;
        let opts = SolverOptions {
            init: afc::InitGuess::Zero,
            ..SolverOptions::default()
        };
        let (_, _, stats) = afc::solve_afc(&mesh, &poisson, LimiterKind::Kuzmin, &opts)
            .map_err(|e| e.to_string())?;
        if stats.iterations != 1 {
            return Err(format!(
                "pure diffusion took {} iterations instead of 1",
                stats.iterations
            ));
        }
        Ok(format!("residual {:.3e}, pure diffusion in 1 iteration", rn))
    })())
}

/// Estimator identities: component split, per-cell consistency, and the
/// upper-bound property on the manufactured benchmark.
pub fn check_estimator_identities() -> CheckOutcome {
    outcome("estimator_identities", (|| {
        let mesh = level(3);
        let prob = example_boundary_layer(1e-3);
        let (u, state, _) =
            afc::solve_afc(&mesh, &prob, LimiterKind::Kuzmin, &SolverOptions::default())
                .map_err(|e| e.to_string())?;
        let sys = assemble_system(&mesh, &prob).map_err(|e| e.to_string())?;
        let consts = EstimatorConstants::for_mesh(&mesh, 1.0).map_err(|e| e.to_string())?;
        let report = afc_energy_estimate(&u, &state, &sys, &mesh, &prob, &consts)
            .map_err(|e| e.to_string())?;
        let comp = report.eta1.unwrap().powi(2)
            + report.eta2.unwrap().powi(2)
            + report.eta3.unwrap().powi(2);
        if (report.eta.powi(2) - comp).abs() > 1e-12 * comp {
            return Err("component identity violated".into());
        }
        let cells: f64 = report.per_cell.iter().map(|c| c.total_sq()).sum();
        if (cells - comp).abs() > 1e-12 * comp {
            return Err("per-cell reconstruction violated".into());
        }
        let err = crate::assembly::energy_norm_error(&u, &prob, &mesh).map_err(|e| e.to_string())?;
        if report.eta < err {
            return Err(format!("eta {} below the true error {err}", report.eta));
        }
        Ok(format!("eta = {:.4}, error = {err:.4}", report.eta))
    })())
}

/// Nonnegativity, bilinearity and the Cauchy-Schwarz property of the
/// stabilization form on random draws.
pub fn check_dh_properties() -> CheckOutcome {
    outcome("dh_form_properties", (|| {
        let mesh = level(2);
        let prob = example_boundary_layer(1e-3);
        let sys = assemble_system(&mesh, &prob).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draw = |rng: &mut ChaCha8Rng| {
            DofVector::from_values(
                (0..sys.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                sys.dirichlet_dofs.clone(),
            )
        };
        for _ in 0..1000 {
            let state = LimiterState {
                alpha: random_symmetric_alpha(&sys.d, &mut rng),
                kind: LimiterKind::Kuzmin,
                gamma: None,
            };
            let (u, v) = (draw(&mut rng), draw(&mut rng));
            let duu = afc::dh_point(&state, &sys.d, &u, &u);
            let dvv = afc::dh_point(&state, &sys.d, &v, &v);
            let duv = afc::dh_point(&state, &sys.d, &u, &v);
            if duu < -1e-14 || dvv < -1e-14 {
                return Err("nonnegativity violated".into());
            }
            if duv > duu.max(0.0).sqrt() * dvv.max(0.0).sqrt() + 1e-12 {
                return Err("Cauchy-Schwarz violated".into());
            }
        }
        Ok("1000 random draws".into())
    })())
}

/// Run every check.
pub fn run_all() -> Vec<CheckOutcome> {
    vec![
        check_dh_equivalence(),
        check_artificial_diffusion(),
        check_limiter_bounds(),
        check_edge_trace_inequality(),
        check_solver_residual(),
        check_estimator_identities(),
        check_dh_properties(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
