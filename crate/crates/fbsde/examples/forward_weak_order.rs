//! Weak convergence of the forward one-step maps on geometric Brownian
//! motion: the weak order-2 Itô-Taylor map reproduces `E[X_T]` and
//! `E[X_T²]` at second order in Δ, the Euler map at first order.
//!
//! The moments are propagated deterministically: `u_n(x) = E[g(X_T) |
//! X_n = x]` satisfies the backward recursion `u_n = E[u_{n+1}(Xⁿ⁺¹)]`,
//! evaluated with Gauss-Hermite quadrature on a grid, so no Monte Carlo
//! noise enters the measured rates.
//!
//! ```text
//! cargo run --release --example forward_weak_order
//! ```

use std::sync::Arc;

use fbsde::grid_interp::{build_grid, GridFunction};
use fbsde::harness::fit_rate;
use fbsde::ito_taylor::{euler_increment, Weak2Map};
use fbsde::model::{make_gbm_problem, FbsdeProblem};
use fbsde::quadrature::{cond_expect, gauss_hermite};

fn propagate(prob: &FbsdeProblem, g: impl Fn(f64) -> f64, m_steps: usize, weak2: bool) -> f64 {
    let delta = prob.horizon / m_steps as f64;
    let grid = Arc::new(build_grid(prob, delta, 8.0));
    let rule = gauss_hermite(8).unwrap();
    let mut u = GridFunction::sample_scalar(grid.clone(), |x| g(x[0]));
    for n in (0..m_steps).rev() {
        let t_n = n as f64 * delta;
        let mut values = Vec::with_capacity(grid.node_count());
        for flat in 0..grid.node_count() {
            let x = grid.node_position(flat);
            let next_layer = |xn: &[f64]| {
                let mut buf = [0.0];
                u.eval_clamped(xn, &mut buf);
                buf[0]
            };
            let v: f64 = if weak2 {
                let map = Weak2Map::new(prob, t_n, &x, delta);
                cond_expect(next_layer, &x, delta, &rule, |_x, dw| map.apply_dw(dw)).unwrap()
            } else {
                cond_expect(next_layer, &x, delta, &rule, |xs, dw| {
                    let phi = euler_increment(t_n, xs, dw, delta, prob);
                    vec![xs[0] + phi[0]]
                })
                .unwrap()
            };
            values.push(v);
        }
        u = GridFunction {
            grid: grid.clone(),
            comps: 1,
            values,
        };
    }
    u.interpolate_scalar(&prob.x0).unwrap()
}

fn main() {
    let (mu, s0, x0) = (0.05, 0.2, 1.0);
    let prob = make_gbm_problem(mu, s0, x0);
    let exact_mean = x0 * (mu * prob.horizon).exp();
    let exact_second = x0 * x0 * ((2.0 * mu + s0 * s0) * prob.horizon).exp();
    println!("GBM mu = {mu}, sigma0 = {s0}, x0 = {x0}: E[X_T] = {exact_mean:.10}, E[X_T^2] = {exact_second:.10}");

    for (name, weak2) in [("weak order-2", true), ("euler", false)] {
        println!("\n{name} one-step map:");
        println!(
            "{:>6} {:>12} {:>14} {:>14}",
            "steps", "delta", "err E[X_T]", "err E[X_T^2]"
        );
        let mut mean_pairs = Vec::new();
        let mut second_pairs = Vec::new();
        for m in [4usize, 8, 16, 32] {
            let delta = prob.horizon / m as f64;
            let mean_err = (propagate(&prob, |x| x, m, weak2) - exact_mean).abs();
            let second_err = (propagate(&prob, |x| x * x, m, weak2) - exact_second).abs();
            println!("{m:>6} {delta:>12.4e} {mean_err:>14.4e} {second_err:>14.4e}");
            mean_pairs.push((delta, mean_err));
            second_pairs.push((delta, second_err));
        }
        println!(
            "fitted slopes: E[X_T] {:.2}, E[X_T^2] {:.2}",
            fit_rate(&mean_pairs).unwrap(),
            fit_rate(&second_pairs).unwrap()
        );
    }
}
