//! Convergence study of the Crank-Nicolson scheme on both stock
//! problems: halving the step size quarters the errors at the start
//! point, in Y and in Z — second order.
//!
//! ```text
//! cargo run --release --example convergence_study
//! ```

use fbsde::harness::{run_convergence, ExperimentConfig, SchemeSpec};

fn main() {
    for problem in ["sin1d", "atan1d"] {
        let config = ExperimentConfig::new(problem, SchemeSpec::CrankNicolson, vec![9, 17, 33, 65]);
        let report = run_convergence(&config).unwrap();
        print!("{}", report.format_table());
        println!();
    }
}
