//! Maximum marking and the SOLVE -> ESTIMATE -> MARK -> REFINE loop.

use crate::afc::{self, LimiterKind, SolverOptions};
use crate::assembly::{self, energy_norm_error};
use crate::estimators::{
    afc_energy_estimate, afc_supg_energy_estimate, effectivity_index, smear_int,
    EstimatorConstants, Technique,
};
use crate::linalg::DofVector;
use crate::mesh::{refine_adaptive, refine_uniform, unit_square_macro, Mesh};
use crate::problems::ProblemSpec;
use crate::supg;
use crate::{Error, Result};
use std::collections::BTreeSet;
use std::time::Instant;

/// Maximum marking strategy: mark all cells with
/// `eta_K >= theta * max_K eta_K` (ties included). If fewer than
/// `min_fraction` of all cells are marked, halve `theta` and re-mark,
/// repeating until the fraction is met or `theta` drops below 1e-3. This
/// guards against marking only a handful of cells on strongly
/// convection-dominated problems.
pub fn mark_cells(
    per_cell_eta: &[f64],
    theta: f64,
    min_fraction: f64,
) -> Result<BTreeSet<usize>> {
    assert!(theta > 0.0 && theta <= 1.0, "theta must be in (0, 1]");
    let max = per_cell_eta.iter().cloned().fold(0.0_f64, f64::max);
    if !(max > 0.0) {
        return Err(Error::AllIndicatorsZero);
    }
    let n = per_cell_eta.len();
    let mut th = theta;
    loop {
        let threshold = th * max;
        let marked: BTreeSet<usize> = per_cell_eta
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= threshold)
            .map(|(k, _)| k)
            .collect();
        if (marked.len() as f64) >= min_fraction * n as f64 || th < 1e-3 {
            return Ok(marked);
        }
        th *= 0.5;
    }
}

/// How the mesh is refined between levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefinementMode {
    /// Red-refine every cell on every level.
    Uniform,
    /// Maximum marking plus red-green refinement with conforming closure.
    Adaptive,
}

/// Options of the adaptive driver.
#[derive(Clone, Debug)]
pub struct AdaptiveOptions {
    pub refinement: RefinementMode,
    pub theta: f64,
    pub min_fraction: f64,
    /// Stop once refining would push the dof count to this value or beyond.
    pub max_dofs: usize,
    /// Stop once the global estimate drops below this value.
    pub eta_tol: f64,
    pub solver: SolverOptions,
    /// Inverse-estimate constant entering `kappa2`.
    pub c_inv: f64,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            refinement: RefinementMode::Adaptive,
            theta: 0.5,
            min_fraction: 0.1,
            max_dofs: 100_000,
            eta_tol: 1e-3,
            solver: SolverOptions::default(),
            c_inv: 1.0,
        }
    }
}

/// One row of the per-level record.
#[derive(Clone, Debug)]
pub struct LevelRow {
    pub level: usize,
    pub n_dofs: usize,
    pub n_cells: usize,
    pub error_energy: Option<f64>,
    pub eta: f64,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub eta3: Option<f64>,
    pub eta_supg: Option<f64>,
    pub eta_afc_supg: Option<f64>,
    pub eta_dh_total: Option<f64>,
    pub effectivity: Option<f64>,
    pub smear_int: Option<f64>,
    pub nl_iters: usize,
    pub converged: bool,
    pub seconds: f64,
    /// Solution bounds, kept for maximum-principle checks (not in the CSV).
    pub u_min: f64,
    pub u_max: f64,
}

/// The full record of one adaptive (or uniform) run.
#[derive(Clone, Debug, Default)]
pub struct AdaptiveRunRecord {
    pub rows: Vec<LevelRow>,
}

impl AdaptiveRunRecord {
    pub fn last(&self) -> Option<&LevelRow> {
        self.rows.last()
    }
}

/// Per-level artifacts handed to an optional observer (mesh and solution
/// dumps, live logging).
pub struct LevelArtifacts<'a> {
    pub level: usize,
    pub mesh: &'a Mesh,
    pub u_afc: &'a DofVector,
    pub u_supg: Option<&'a DofVector>,
    pub row: &'a LevelRow,
}

/// The driver: start from the twice-refined macro grid (25 dofs), refine
/// uniformly up to 289 dofs, then follow the configured mode. Stops when
/// the next mesh would reach `max_dofs` or when `eta < eta_tol`; nonlinear
/// non-convergence is recorded in the row, never fatal.
pub fn adaptive_loop(
    prob: &ProblemSpec,
    technique: Technique,
    limiter: LimiterKind,
    opts: &AdaptiveOptions,
    mut observer: Option<&mut dyn FnMut(&LevelArtifacts)>,
) -> Result<AdaptiveRunRecord> {
    let mut mesh = refine_uniform(&refine_uniform(&unit_square_macro()));
    let mut level = 2usize;
    let mut record = AdaptiveRunRecord::default();

    loop {
        let start = Instant::now();
        let sys = assembly::assemble_system(&mesh, prob)?;

        // the SUPG solution doubles as solver initial guess and, for the
        // AFC-SUPG technique, as half of the estimate
        let (u_supg, tau) = match (technique, opts.solver.init) {
            (Technique::AfcSupgEnergy, _) | (_, afc::InitGuess::Supg) => {
                let (u, tau) = supg::solve_supg(&mesh, prob)?;
                (Some(u), Some(tau))
            }
            _ => (None, None),
        };
        let initial = match (opts.solver.init, u_supg.as_ref()) {
            (afc::InitGuess::Supg, Some(u0)) => Some(u0.clone()),
            _ => None,
        };
        let (u_afc, state, stats) =
            afc::solve_afc_with_initial(&mesh, prob, &sys, limiter, &opts.solver, initial)?;

        let consts = EstimatorConstants::for_mesh(&mesh, opts.c_inv)?;
        let report = match technique {
            Technique::AfcEnergy => {
                afc_energy_estimate(&u_afc, &state, &sys, &mesh, prob, &consts)?
            }
            Technique::AfcSupgEnergy => afc_supg_energy_estimate(
                &u_afc,
                u_supg.as_ref().expect("SUPG solved for this technique"),
                &mesh,
                prob,
                &consts,
                tau.as_ref().expect("tau computed with the SUPG solve"),
            )?,
        };

        let error_energy = match prob.exact {
            Some(_) => Some(energy_norm_error(&u_afc, prob, &mesh)?),
            None => None,
        };
        let effectivity = error_energy.and_then(|e| effectivity_index(report.eta, e));
        let smear = smear_int(&u_afc, &mesh);
        let (u_min, u_max) = u_afc
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });

        let row = LevelRow {
            level,
            n_dofs: mesh.n_vertices(),
            n_cells: mesh.n_cells(),
            error_energy,
            eta: report.eta,
            eta1: report.eta1,
            eta2: report.eta2,
            eta3: report.eta3,
            eta_supg: report.eta_supg,
            eta_afc_supg: report.eta_afc_supg,
            eta_dh_total: report.eta_dh_total(),
            effectivity,
            smear_int: smear,
            nl_iters: stats.iterations,
            converged: stats.converged,
            seconds: start.elapsed().as_secs_f64(),
            u_min,
            u_max,
        };
        if let Some(obs) = observer.as_deref_mut() {
            obs(&LevelArtifacts {
                level,
                mesh: &mesh,
                u_afc: &u_afc,
                u_supg: u_supg.as_ref(),
                row: &row,
            });
        }
        record.rows.push(row);

        if mesh.n_vertices() >= opts.max_dofs || report.eta < opts.eta_tol {
            break;
        }

        // uniform warm-up until level 4, then the configured mode
        let next = if level < 4 || opts.refinement == RefinementMode::Uniform {
            refine_uniform(&mesh)
        } else {
            let marked = mark_cells(&report.per_cell_eta(), opts.theta, opts.min_fraction)?;
            refine_adaptive(&mesh, &marked)?
        };
        if next.n_vertices() >= opts.max_dofs {
            break;
        }
        mesh = next;
        level += 1;
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::example_boundary_layer;

    #[test]
    fn marking_uniform_indicators_marks_all() {
        let marked = mark_cells(&[1.0; 8], 0.5, 0.0).unwrap();
        assert_eq!(marked.len(), 8);
    }

    #[test]
    fn marking_single_spike() {
        let mut eta = vec![0.0; 10];
        eta[3] = 2.0;
        let marked = mark_cells(&eta, 0.5, 0.0).unwrap();
        assert_eq!(marked.into_iter().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn marking_hand_threshold() {
        let eta = [1.0, 0.6, 0.4, 0.1];
        let marked = mark_cells(&eta, 0.5, 0.0).unwrap();
        assert_eq!(marked.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn marking_ties_are_marked() {
        let eta = [1.0, 0.5, 0.25];
        let marked = mark_cells(&eta, 0.5, 0.0).unwrap();
        assert_eq!(marked.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn marking_enforces_min_fraction() {
        // one spike, min_fraction 0.5: theta halves until half the cells pass
        let eta = [1.0, 0.30, 0.30, 0.30, 0.02, 0.02, 0.02, 0.02];
        let marked = mark_cells(&eta, 0.8, 0.5).unwrap();
        assert!(marked.len() >= 4, "marked {marked:?}");
    }

    #[test]
    fn marking_all_zero_errors() {
        assert!(matches!(
            mark_cells(&[0.0; 4], 0.5, 0.1),
            Err(Error::AllIndicatorsZero)
        ));
    }

    #[test]
    fn uniform_mode_reproduces_dof_sequence() {
        let prob = example_boundary_layer(1e-3);
        let opts = AdaptiveOptions {
            refinement: RefinementMode::Uniform,
            max_dofs: 5000,
            ..AdaptiveOptions::default()
        };
        let record = adaptive_loop(
            &prob,
            Technique::AfcEnergy,
            LimiterKind::Kuzmin,
            &opts,
            None,
        )
        .unwrap();
        let dofs: Vec<usize> = record.rows.iter().map(|r| r.n_dofs).collect();
        assert_eq!(dofs, vec![25, 81, 289, 1089, 4225]);
        let levels: Vec<usize> = record.rows.iter().map(|r| r.level).collect();
        assert_eq!(levels, vec![2, 3, 4, 5, 6]);
        // dof counts strictly increase and every eta is nonnegative
        assert!(record.rows.windows(2).all(|w| w[0].n_dofs < w[1].n_dofs));
        assert!(record.rows.iter().all(|r| r.eta >= 0.0));
    }
}
