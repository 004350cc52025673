//! Fit the abrupt and smooth changepoint models on a simulated cohort and
//! compare their changepoint estimates and likelihoods.
//!
//! Run with: cargo run --release --example fit_changepoint

use trajmix::sim::auto_starts;
use trajmix::{fit, render_report, simulate_dataset};
use trajmix::{ModelKind, ModelSpec, ParamPredictorSpec, SaemConfig, SimScenario};

fn main() -> trajmix::Result<()> {
    let mut scenario = SimScenario::default_truth("demo", ModelKind::PmmAbrupt);
    scenario.n_subjects = 300;
    scenario.seed = 7;
    let data = simulate_dataset(&scenario, 0)?;

    let config = SaemConfig {
        is_samples: 500,
        ..Default::default()
    };

    for kind in [ModelKind::PmmAbrupt, ModelKind::PmmSmooth] {
        let v = if kind == ModelKind::PmmSmooth { 2.0 } else { 0.0 };
        let spec = ModelSpec::new(
            kind,
            ParamPredictorSpec::from_alpha(kind, [0.0; 4]),
            v,
            0.4,
        )?;
        let start = auto_starts(kind, &data)?;
        let fitted = fit(&data, &spec, &start, &config)?;
        println!("==== {} ====", kind.as_str());
        print!("{}", render_report(&fitted));
        println!();
    }
    Ok(())
}
