//! Building a problem of your own: pick a smooth u(t, x), back-solve the
//! generator from the parabolic PDE so that Y = u(t, X) and
//! Z = u_x(t, X)·σ are exact, sanity-check the construction with the PDE
//! residual, then solve and watch the error.
//!
//! Here: u(t, x) = e^{−t}·cos(x) with b = 0, σ = 1, which forces
//! f(t, x, y, z) = (3/2)·y and φ(x) = e^{−T}·cos(x).
//!
//! ```text
//! cargo run --release --example custom_problem
//! ```

use std::sync::Arc;

use fbsde::cn_solver::{solve, SchemeParams, TimeGrid};
use fbsde::grid_interp::build_grid;
use fbsde::model::{exact_yz, feynman_kac_residual, AnalyticSolution, FbsdeProblem};
use fbsde::quadrature::gauss_hermite;

fn main() {
    let horizon = 1.0;

    let mut prob = FbsdeProblem::new(
        1,
        horizon,
        vec![0.7],
        Arc::new(|_t, _x| vec![0.0]),
        Arc::new(|_t, _x| vec![vec![1.0]]),
        Arc::new(|_t, _x, y: f64, _z: &[f64]| 1.5 * y),
        Arc::new(move |x: &[f64]| (-horizon).exp() * x[0].cos()),
    );
    prob.lipschitz_y = 1.5;
    prob.drift_dx = Some(Arc::new(|_t, _x| vec![vec![0.0]]));
    prob.drift_dt = Some(Arc::new(|_t, _x| vec![0.0]));
    prob.drift_dxx = Some(Arc::new(|_t, _x| vec![vec![vec![0.0]]]));
    prob.sigma_dt = Some(Arc::new(|_t, _x| vec![vec![0.0]]));
    prob.sigma_dx = Some(Arc::new(|_t, _x| vec![vec![vec![0.0]]]));
    prob.sigma_dxx = Some(Arc::new(|_t, _x| vec![vec![vec![vec![0.0]]]]));

    let sol = AnalyticSolution {
        u: Arc::new(|t, x: &[f64]| (-t).exp() * x[0].cos()),
        u_x: Arc::new(|t, x: &[f64]| vec![-(-t).exp() * x[0].sin()]),
        u_t: Some(Arc::new(|t, x: &[f64]| -(-t).exp() * x[0].cos())),
        u_xx: Some(Arc::new(|t, x: &[f64]| vec![vec![-(-t).exp() * x[0].cos()]])),
    };

    // The construction check: the PDE residual must vanish identically.
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let t = horizon * i as f64 / 99.0;
        let x = -4.0 + 8.0 * ((i * 37) % 100) as f64 / 99.0;
        worst = worst.max(feynman_kac_residual(&sol, &prob, t, &[x]).unwrap().abs());
    }
    println!("max |PDE residual| over 100 sample points: {worst:.3e}");

    let rule = gauss_hermite(8).unwrap();
    for steps in [17usize, 33] {
        let tgrid = TimeGrid::with_steps(horizon, steps).unwrap();
        let sgrid = build_grid(&prob, tgrid.delta, 8.0);
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
        println!(
            "N {steps:>3}: |Y0 err| {:.3e}  |Z0 err| {:.3e}   (halving delta should quarter both)",
            (y0 - ye).abs(),
            (z0[0] - ze[0]).abs()
        );
    }
}
