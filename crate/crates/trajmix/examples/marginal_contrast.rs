//! Fit a model with a covariate and contrast the marginal trajectories
//! between the 10th and 90th percentile of its distribution.
//!
//! Run with: cargo run --release --example marginal_contrast

use trajmix::report::trajectories_to_csv;
use trajmix::sim::auto_starts;
use trajmix::svg::{self, Series};
use trajmix::{fit, marginal_contrast, marginal_trajectory, simulate_dataset};
use trajmix::{ModelKind, ModelSpec, ParamPredictorSpec, SaemConfig, SimScenario};

fn main() -> trajmix::Result<()> {
    let mut scenario = SimScenario::default_truth("contrast", ModelKind::Smm);
    scenario.n_subjects = 300;
    scenario.covariates = 1;
    let data = simulate_dataset(&scenario, 0)?;

    let kind = ModelKind::Smm;
    let betas = std::array::from_fn(|_| vec![("x1".to_string(), 0.0)]);
    let spec = ModelSpec::new(
        kind,
        ParamPredictorSpec {
            alpha: [0.0; 4],
            betas,
            random_mask: kind.random_mask(),
        },
        0.0,
        0.4,
    )?;
    let start = auto_starts(kind, &data)?;
    let config = SaemConfig {
        k1: 200,
        k2: 80,
        is_samples: 500,
        ..Default::default()
    };
    let fitted = fit(&data, &spec, &start, &config)?;

    let marginal = marginal_trajectory(&fitted, 101)?;
    let (lo, hi) = marginal_contrast(&fitted, "x1", (0.10, 0.90), 101)?;
    println!("profile: {:?}", marginal.profile);
    println!(
        "contrast groups: {} vs {}",
        lo.profile["x1"], hi.profile["x1"]
    );

    std::fs::write(
        "contrast.csv",
        trajectories_to_csv(&[&marginal, &lo, &hi]),
    )?;
    let sets: Vec<Vec<(f64, f64)>> = [&marginal, &lo, &hi]
        .iter()
        .map(|t| t.times.iter().cloned().zip(t.values.iter().cloned()).collect())
        .collect();
    let series: Vec<Series> = [&marginal, &lo, &hi]
        .iter()
        .zip(&sets)
        .map(|(t, pts)| Series {
            label: &t.label,
            points: pts,
        })
        .collect();
    std::fs::write(
        "contrast.svg",
        svg::line_chart("marginal trajectories", "time", "outcome", &series),
    )?;
    println!("wrote contrast.csv, contrast.svg");
    Ok(())
}
