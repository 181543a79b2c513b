//! Re-derives the calibrated statistics and bounds the library relies on
//! and checks each against its analytic target: the correlation statistic
//! and its flip attenuation, the 1-D restricted loss minimizer, mean-width
//! estimates, network Lipschitz bounds, and the sufficient-measurement
//! formula.
//!
//! The same battery runs from the command line as `onebit-cs theory-check`.
//!
//! Run with: cargo run --example theory_checks

use onebit_cs::analysis::{covering_number_bound, mean_width_mc, measurement_bound};
use onebit_cs::experiment::run_theory_checks;
use onebit_cs::model::random_mlp;
use onebit_cs::{Activation, Result, RngStream};

fn main() -> Result<()> {
    println!("calibrated statistics and bounds (seed 0):\n");
    println!(
        "{:<34} {:>9} {:>12} {:>12} {:>10}  {}",
        "quantity", "samples", "estimate", "target", "abs error", "pass"
    );
    let rows = run_theory_checks(0)?;
    let mut all_pass = true;
    for r in &rows {
        all_pass &= r.pass;
        println!(
            "{:<34} {:>9} {:>12.6} {:>12.6} {:>10.2e}  {}",
            r.quantity, r.samples, r.estimate, r.target, r.abs_error, r.pass
        );
    }
    println!("\nall checks pass: {all_pass}\n");

    // The pieces are also callable directly. Mean width of a symmetric pair
    // of unit vectors: E|<g, e1>| + E|<g, -e1>| = 2 E|g_1| = 2 sqrt(2/pi).
    let points = vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]];
    let w = mean_width_mc(&points, 50_000, &mut RngStream::new(1).derive(0))?;
    let exact = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    println!("mean width of {{e1, -e1}}: estimate {w:.4}, exact {exact:.4}");

    // Sufficient measurements for a concrete network, from the covering
    // argument: m >= C eps^-2 k (r^2 + d ln(L N w_max)).
    let g = random_mlp(&[8, 32, 64], Activation::Relu, Activation::Sigmoid, 0.5, &mut RngStream::new(2).derive(0))?;
    let bound = measurement_bound(
        g.latent_dim(),
        3.0,
        g.depth(),
        g.lipschitz_bound(),
        g.max_width(),
        g.max_weight_abs(),
        0.1,
        1.0,
    )?;
    println!(
        "sufficient measurements for an {}-latent depth-{} network at accuracy 0.1: {}",
        g.latent_dim(),
        g.depth(),
        bound.m
    );
    let cover = covering_number_bound(g.latent_dim(), 3.0, 0.01)?;
    println!("covering number of its radius-3 latent ball at scale 0.01: {cover:.3e}");
    Ok(())
}
