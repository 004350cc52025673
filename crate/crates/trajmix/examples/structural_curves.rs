//! Evaluate the three structural functions directly: the four-parameter
//! logistic, the abrupt broken stick, and the smooth transition with its
//! bridging cubic.
//!
//! Run with: cargo run --example structural_curves

use trajmix::{lambda_constraint, pmma_value, pmms_value, smm_value, solve_transition};
use trajmix::SubjectParams;

fn main() -> trajmix::Result<()> {
    let sig = SubjectParams::new(0.24, -1.088, -2.567, 1.789);
    let stick = SubjectParams::new(-1.103, -0.017, -0.249, -4.25);
    let v = 2.0;

    println!("lambda (early-line intercept) = {:+.4}", lambda_constraint(&stick, v));
    let cubic = solve_transition(&stick, v)?;
    println!(
        "transition cubic on [{:.2}, {:.2}]: {:+.5} {:+.5} t {:+.5} t^2 {:+.7} t^3",
        cubic.window.0, cubic.window.1, cubic.coeffs[0], cubic.coeffs[1], cubic.coeffs[2], cubic.coeffs[3]
    );
    println!(
        "slope matches at the window edges: {:+.4} / {:+.4}",
        cubic.derivative(cubic.window.0),
        cubic.derivative(cubic.window.1)
    );

    println!("\n{:>6} {:>10} {:>10} {:>10}", "t", "logistic", "abrupt", "smooth");
    for i in 0..=12 {
        let t = -12.0 + i as f64;
        println!(
            "{:>6.1} {:>10.4} {:>10.4} {:>10.4}",
            t,
            smm_value(t, &sig)?,
            pmma_value(t, &stick),
            pmms_value(t, &stick, v)?
        );
    }
    Ok(())
}
