//! Fit the sigmoidal mixed model on the bundled demonstration cohort and
//! print the annotated report.
//!
//! Run with: cargo run --release --example fit_sigmoid

use trajmix::{fit, initials_smm, make_datacog, render_report};
use trajmix::{ModelKind, ModelSpec, ParamPredictorSpec, SaemConfig};

fn main() -> trajmix::Result<()> {
    let data = make_datacog(12345);
    println!(
        "cohort: {} subjects, {} observations",
        data.n_subjects(),
        data.n_obs()
    );

    // Age at death (centered at 90) enters every structural parameter.
    let kind = ModelKind::Smm;
    let betas = std::array::from_fn(|_| vec![("ageDeath90".to_string(), 0.0)]);
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

    let start = initials_smm(&data)?;
    println!(
        "automatic starts: first={:.3} last={:.3} midpoint={:.1} hill={:.2}",
        start.values[0], start.values[1], start.values[2], start.values[3]
    );

    let config = SaemConfig::default();
    let fitted = fit(&data, &spec, &start, &config)?;
    print!("{}", render_report(&fitted));
    Ok(())
}
