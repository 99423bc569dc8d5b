//! Thin command-line front end over the library: `run`, `sweep`,
//! `mesh-info` and `check`.

use afc2d::config::RunConfig;
use afc2d::{driver, mesh, selfcheck};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "afc2d", version, about = "AFC convection-diffusion studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one configured study and write run.csv.
    Run(RunArgs),
    /// Execute several config files in sequence.
    Sweep {
        /// JSON config files, one run each.
        configs: Vec<PathBuf>,
    },
    /// Print geometry metrics and the Delaunay status of a mesh.
    MeshInfo {
        /// Mesh file in the ASCII format.
        #[arg(long, conflicts_with = "levels")]
        mesh: Option<PathBuf>,
        /// Use the unit-square grid refined this many times instead.
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Run the property suites and report one line per check.
    Check,
    /// Emit a gnuplot script for a previously written run.csv.
    Gnuplot {
        /// The CSV produced by `run`.
        #[arg(long, default_value = "run.csv")]
        csv: PathBuf,
        /// Image file the script will render.
        #[arg(long, default_value = "run.png")]
        output: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags below override its keys one-to-one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    limiter: Option<String>,
    #[arg(long)]
    technique: Option<String>,
    #[arg(long)]
    refinement: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    min_fraction: Option<f64>,
    #[arg(long)]
    max_dofs: Option<usize>,
    #[arg(long)]
    eta_tol: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    c_inv: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    dump_meshes: bool,
    #[arg(long)]
    dump_solutions: bool,
}

impl RunArgs {
    fn into_config(self) -> afc2d::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! overr {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        overr!(
            problem, epsilon, limiter, technique, refinement, theta, min_fraction, max_dofs,
            eta_tol, omega, tol, max_iter, init, c_inv, gamma, output_dir
        );
        if self.dump_meshes {
            cfg.dump_meshes = true;
        }
        if self.dump_solutions {
            cfg.dump_solutions = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> afc2d::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let summary = driver::run(&cfg)?;
            print!("{}", driver::record_to_csv(&summary.record));
            eprintln!("wrote {}", summary.csv_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { configs } => {
            if configs.is_empty() {
                return Err(afc2d::Error::Config("sweep needs at least one config".into()));
            }
            for path in &configs {
                let cfg = RunConfig::from_file(path)?;
                let summary = driver::run(&cfg)?;
                eprintln!(
                    "{}: {} levels -> {}",
                    path.display(),
                    summary.record.rows.len(),
                    summary.csv_path.display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::MeshInfo { mesh: file, levels } => {
            let mesh = match (file, levels) {
                (Some(path), _) => mesh::read_mesh(&path)?,
                (None, Some(n)) => {
                    (0..n).fold(mesh::unit_square_macro(), |m, _| mesh::refine_uniform(&m))
                }
                (None, None) => mesh::unit_square_macro(),
            };
            print!("{}", driver::mesh_info(&mesh)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Check => {
            let mut failed = 0;
            for c in selfcheck::run_all() {
                println!(
                    "{} {:<32} {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                if !c.passed {
                    failed += 1;
                }
            }
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Gnuplot { csv, output } => {
            print!("{}", driver::gnuplot_script(&csv, &output));
            Ok(ExitCode::SUCCESS)
        }
    }
}
