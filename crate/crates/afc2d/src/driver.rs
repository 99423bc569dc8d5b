//! Run orchestration: execute a configured study, write `run.csv` and the
//! optional mesh/solution dumps, emit gnuplot helpers.

use crate::adaptivity::{adaptive_loop, AdaptiveRunRecord, LevelArtifacts};
use crate::config::RunConfig;
use crate::mesh::write_mesh;
use crate::Result;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Outcome of [`run`]: the record plus the paths written.
pub struct RunSummary {
    pub record: AdaptiveRunRecord,
    pub csv_path: PathBuf,
}

/// CSV columns, in order. Absent values are empty fields.
pub const CSV_COLUMNS: &str = "level,dofs,cells,error_energy,eta,eta1,eta2,eta3,eta_supg,eta_afc_supg,eta_dh_total,effectivity,smear_int,nl_iters,converged,seconds";

/// Render the per-level record as CSV.
pub fn record_to_csv(record: &AdaptiveRunRecord) -> String {
    let mut out = String::new();
    writeln!(out, "{CSV_COLUMNS}").unwrap();
    for r in &record.rows {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{:.12e},{},{},{},{},{},{},{},{},{},{},{:.3}",
            r.level,
            r.n_dofs,
            r.n_cells,
            opt(r.error_energy),
            r.eta,
            opt(r.eta1),
            opt(r.eta2),
            opt(r.eta3),
            opt(r.eta_supg),
            opt(r.eta_afc_supg),
            opt(r.eta_dh_total),
            opt(r.effectivity),
            opt(r.smear_int),
            r.nl_iters,
            r.converged,
            r.seconds,
        )
        .unwrap();
    }
    out
}

/// Execute one configured run. The CSV is written only after the whole
/// record has been computed, so a failing run leaves no partial file;
/// re-running a config overwrites its outputs.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let prob = config.build_problem()?;
    let technique = config.technique_kind()?;
    let limiter = config.limiter_kind()?;
    let opts = config.adaptive_options()?;

    std::fs::create_dir_all(&config.output_dir)?;
    let mut dumps: Vec<(PathBuf, String)> = Vec::new();
    let out_dir = config.output_dir.clone();
    let dump_meshes = config.dump_meshes;
    let dump_solutions = config.dump_solutions;

    let mut observer = |artifacts: &LevelArtifacts| {
        if dump_meshes {
            let path = out_dir.join(format!("mesh_level_{:02}.txt", artifacts.level));
            dumps.push((path, crate::mesh::write_mesh_string(artifacts.mesh)));
        }
        if dump_solutions {
            let mut text = String::new();
            writeln!(text, "# vertex x y u").unwrap();
            for v in 0..artifacts.mesh.n_vertices() {
                let [x, y] = artifacts.mesh.vertex(v);
                writeln!(text, "{v} {x:.17e} {y:.17e} {:.17e}", artifacts.u_afc.values[v])
                    .unwrap();
            }
            let path = out_dir.join(format!("solution_level_{:02}.txt", artifacts.level));
            dumps.push((path, text));
        }
    };

    let record = adaptive_loop(&prob, technique, limiter, &opts, Some(&mut observer))?;

    let csv_path = config.output_dir.join("run.csv");
    std::fs::write(&csv_path, record_to_csv(&record))?;
    for (path, text) in dumps {
        std::fs::write(path, text)?;
    }
    Ok(RunSummary { record, csv_path })
}

/// Run several configs in sequence (independent outputs).
pub fn sweep(configs: &[RunConfig]) -> Result<Vec<RunSummary>> {
    configs.iter().map(run).collect()
}

/// A gnuplot script plotting error and estimate against dofs on log-log
/// axes, ready for the CSV written by [`run`].
pub fn gnuplot_script(csv: &Path, output: &Path) -> String {
    format!(
        "set datafile separator ','\n\
         set logscale xy\n\
         set xlabel '# dof'\n\
         set ylabel 'energy norm'\n\
         set key left bottom\n\
         set terminal pngcairo size 900,700\n\
         set output '{}'\n\
         plot '{}' using 2:4 skip 1 with linespoints title 'error', \\\n\
         \x20    '{}' using 2:5 skip 1 with linespoints title 'eta'\n",
        output.display(),
        csv.display(),
        csv.display()
    )
}

/// Human-readable mesh report for the `mesh-info` subcommand.
pub fn mesh_info(mesh: &crate::mesh::Mesh) -> Result<String> {
    use std::fmt::Write;
    let geo = crate::mesh::compute_cell_geometry(mesh)?;
    let (delaunay, violations) = crate::mesh::is_delaunay(mesh);
    let mut out = String::new();
    writeln!(out, "vertices: {}", mesh.n_vertices()).unwrap();
    writeln!(out, "cells:    {}", mesh.n_cells()).unwrap();
    writeln!(out, "edges:    {}", mesh.n_edges()).unwrap();
    writeln!(out, "boundary edges: {}", mesh.boundary_edges().count()).unwrap();
    writeln!(out, "C_edge,max: {:.6e}", geo.c_edge_max).unwrap();
    writeln!(out, "shape regularity min rho_K/h_K: {:.6}", geo.shape_regularity).unwrap();
    writeln!(out, "min angle: {:.4} rad", geo.min_angle).unwrap();
    writeln!(
        out,
        "delaunay: {}{}",
        delaunay,
        if delaunay {
            String::new()
        } else {
            format!(" ({} violating edges)", violations.len())
        }
    )
    .unwrap();
    Ok(out)
}

pub use crate::mesh::read_mesh;

/// Write a mesh produced on the fly (used by examples and the CLI).
pub fn export_mesh(mesh: &crate::mesh::Mesh, path: &Path) -> Result<()> {
    write_mesh(mesh, path)
}
