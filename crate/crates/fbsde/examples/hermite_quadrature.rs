//! Gauss-Hermite rules and the conditional-expectation operators.
//!
//! ```text
//! cargo run --release --example hermite_quadrature
//! ```

use fbsde::quadrature::{cond_expect, cond_expect_weighted, gauss_hermite};

fn main() {
    let sqrt_pi = std::f64::consts::PI.sqrt();

    let rule = gauss_hermite(8).unwrap();
    println!("order-8 physicists' rule (weight e^(-x^2)):");
    println!("{:>4} {:>22} {:>22}", "k", "node", "weight");
    for (k, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        println!("{k:>4} {x:>22.15e} {w:>22.15e}");
    }
    let wsum: f64 = rule.weights.iter().sum();
    println!("sum of weights − sqrt(pi) = {:+.3e}", wsum - sqrt_pi);

    // Moment exactness: an order-n rule integrates x^k e^{-x^2} exactly
    // for k <= 2n−1.
    println!("\nmoment check, order 8 (exact through k = 15):");
    for k in [2usize, 6, 10, 14] {
        let got = rule.integrate(|x| x.powi(k as i32));
        let mut exact = sqrt_pi;
        let mut j = 1;
        while 2 * j <= k {
            exact *= (2 * j - 1) as f64 / 2.0;
            j += 1;
        }
        println!("  k={k:<3} rel err {:.2e}", ((got - exact) / exact).abs());
    }

    // Conditional expectations for the shift map X' = x + ΔW.
    let delta = 0.04;
    let shift = |x: &[f64], dw: &[f64]| vec![x[0] + dw[0]];
    let e1: f64 = cond_expect(|x| x[0], &[0.7], delta, &rule, shift).unwrap();
    let e2: f64 = cond_expect(|x| x[0] * x[0], &[0.0], delta, &rule, shift).unwrap();
    let ew = cond_expect_weighted(|x| x[0], &[5.0], delta, &rule, shift).unwrap();
    println!("\nE[x + ΔW]              = {e1:.12}   (exact 0.7)");
    println!("E[(ΔW)^2]              = {e2:.12}   (exact Δ = {delta})");
    println!("E[(x + ΔW)·ΔW]         = {:.12}   (exact Δ = {delta})", ew[0]);
    let esin: f64 = cond_expect(|x| x[0].sin(), &[0.5], delta, &rule, shift).unwrap();
    // Gaussian smoothing identity: E[sin(x + N(0, Δ))] = e^{−Δ/2}·sin(x).
    let exact = (-delta / 2.0f64).exp() * 0.5f64.sin();
    println!("E[sin(x + ΔW)]         = {esin:.12}   (exact {exact:.12})");
}
