//! Uniform-refinement convergence study for the manufactured boundary-layer
//! problem: energy-norm errors, estimator values and effectivity indices for
//! both limiters on the grid sequence 25, 81, 289, ... dofs.
//!
//! Run with `cargo run --release --example boundary_layer_uniform [max_dofs]`.

use afc2d::adaptivity::{adaptive_loop, AdaptiveOptions, RefinementMode};
use afc2d::afc::LimiterKind;
use afc2d::estimators::Technique;
use afc2d::problems::example_boundary_layer;

fn main() -> afc2d::Result<()> {
    let max_dofs: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("max_dofs must be an integer"))
        .unwrap_or(70_000);
    let prob = example_boundary_layer(1e-3);
    let opts = AdaptiveOptions {
        refinement: RefinementMode::Uniform,
        max_dofs,
        ..AdaptiveOptions::default()
    };

    for limiter in [LimiterKind::Kuzmin, LimiterKind::Bjk] {
        println!("limiter {limiter:?}");
        println!(
            "{:>6} {:>8} {:>14} {:>12} {:>12} {:>12} {:>12} {:>8} {:>6}",
            "level", "dofs", "error", "eta", "eta1", "eta2", "eta3", "eff", "iters"
        );
        let record = adaptive_loop(&prob, Technique::AfcEnergy, limiter, &opts, None)?;
        for r in &record.rows {
            println!(
                "{:>6} {:>8} {:>14.9} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>8.2} {:>6}",
                r.level,
                r.n_dofs,
                r.error_energy.unwrap_or(f64::NAN),
                r.eta,
                r.eta1.unwrap_or(f64::NAN),
                r.eta2.unwrap_or(f64::NAN),
                r.eta3.unwrap_or(f64::NAN),
                r.effectivity.unwrap_or(f64::NAN),
                r.nl_iters,
            );
        }
        println!();
    }
    Ok(())
}
