//! The θ-scheme family on one problem: Crank-Nicolson `(½,½,½,−½)` is
//! second order, implicit Euler `(1,1,1,0)` is first order, and other
//! admissible parameter values land in between or alongside.
//!
//! ```text
//! cargo run --release --example theta_schemes
//! ```

use fbsde::harness::{run_convergence, ExperimentConfig, SchemeSpec};

fn main() {
    let schemes = [
        ("crank-nicolson", SchemeSpec::CrankNicolson),
        ("implicit euler", SchemeSpec::ImplicitEuler),
        // Trapezoidal Z-equation but rectangle-rule Y-equation: the Y
        // treatment caps the whole scheme at first order.
        ("theta(1,1,0.5,-0.5)", SchemeSpec::Theta([1.0, 1.0, 0.5, -0.5])),
    ];
    println!("sin1d, N in {{9, 17, 33, 65}}:");
    println!("{:<24} {:>8} {:>8}", "scheme", "rate_y", "rate_z");
    for (name, scheme) in schemes {
        let config = ExperimentConfig::new("sin1d", scheme, vec![9, 17, 33, 65]);
        let report = run_convergence(&config).unwrap();
        println!("{name:<24} {:>8.3} {:>8.3}", report.rate_y, report.rate_z);
    }
}
