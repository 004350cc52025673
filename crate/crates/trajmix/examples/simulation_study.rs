//! Small accuracy/runtime study: two scenarios, automatic vs naive starting
//! values, with the per-year mean-squared-error summary.
//!
//! Run with: cargo run --release --example simulation_study

use trajmix::sim::{benchmark_csv, runtime_series_csv};
use trajmix::{run_benchmark, InitialsMode, ModelKind, SaemConfig, SimScenario};

fn main() -> trajmix::Result<()> {
    let mut small = SimScenario::default_truth("pmma_n100", ModelKind::PmmAbrupt);
    small.n_subjects = 100;
    small.replications = 3;
    let mut larger = SimScenario::default_truth("smm_n200", ModelKind::Smm);
    larger.n_subjects = 200;
    larger.covariates = 1;
    larger.replications = 3;

    let config = SaemConfig {
        k1: 150,
        k2: 60,
        is_samples: 300,
        ..Default::default()
    };
    let results = run_benchmark(
        &[small, larger],
        &[InitialsMode::Auto, InitialsMode::Naive],
        &config,
    )?;

    for cell in &results {
        let max_mse = cell.mse.iter().map(|&(_, m)| m).fold(0.0, f64::max);
        println!(
            "{:<10} [{:<5}] converged {}/{}  mean runtime {:>5.2}s  max MSE {:.4}  bias {:>5.2}%",
            cell.scenario,
            cell.mode.as_str(),
            cell.n_converged,
            cell.replications.len(),
            cell.mean_runtime_s,
            max_mse,
            cell.pct_bias
        );
    }
    std::fs::write("study_summary.csv", benchmark_csv(&results))?;
    std::fs::write("study_runtime.csv", runtime_series_csv(&results))?;
    println!("wrote study_summary.csv, study_runtime.csv");
    Ok(())
}
