//! Solve one stock problem backward and compare the time-zero values
//! against the analytic solution.
//!
//! ```text
//! cargo run --release --example single_solve
//! ```

use fbsde::cn_solver::{solve, SchemeParams, TimeGrid};
use fbsde::grid_interp::build_grid;
use fbsde::model::{exact_yz, lookup};
use fbsde::quadrature::gauss_hermite;

fn main() {
    let (prob, sol) = lookup("sin1d").unwrap();
    let tgrid = TimeGrid::with_steps(prob.horizon, 33).unwrap();
    let sgrid = build_grid(&prob, tgrid.delta, 8.0);
    let rule = gauss_hermite(8).unwrap();

    println!(
        "sin1d: N = {}, realized delta = {:.6e}, grid m = {}, h = {:.3e}",
        tgrid.steps, tgrid.delta, sgrid.m, sgrid.h[0]
    );

    let layers = solve(
        &prob,
        &tgrid,
        sgrid,
        &rule,
        &SchemeParams::crank_nicolson(),
        Some(&sol),
    )
    .unwrap();

    let y0 = layers.y_at(0, &prob.x0).unwrap();
    let z0 = layers.z_at(0, &prob.x0).unwrap();
    let (ye, ze) = exact_yz(&sol, &prob, 0.0, &prob.x0);

    println!("Y0 computed {y0:.10}  exact {ye:.10}  |err| {:.3e}", (y0 - ye).abs());
    println!(
        "Z0 computed {:.10}  exact {:.10}  |err| {:.3e}",
        z0[0],
        ze[0],
        (z0[0] - ze[0]).abs()
    );
    println!(
        "diagnostics: picard_max {}  boundary stencils {}  clamped evals {}  min eig(σσᵀ) {:.3}",
        layers.stats.picard_max_iters,
        layers.stats.boundary_stencil_uses,
        layers.stats.clamped_evals,
        layers.stats.min_diffusion_eig
    );
}
