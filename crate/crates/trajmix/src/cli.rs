//! Command-line interface: fit, inspect, simulate, benchmark, make-datacog.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 estimation error. Every artifact path is announced on stdout; existing
//! artifacts are only overwritten under `--force`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::data::{inspect, load_dataset, write_dataset, LongitudinalDataset};
use crate::error::{Error, ErrorClass, Result};
use crate::initials::StartValues;
use crate::model::{ModelKind, ModelSpec, ParamPredictorSpec};
use crate::report::{
    marginal_contrast, marginal_trajectory, psi_to_csv, render_report, trace_to_csv,
    trajectories_to_csv, MarginalTrajectory,
};
use crate::saem::{fit, SaemConfig, DEFAULT_SEED};
use crate::sim::{
    auto_starts, benchmark_csv, make_datacog, parse_scenarios, run_benchmark,
    runtime_series_csv, InitialsMode,
};
use crate::stats::sample_variance;
use crate::svg;

#[derive(Parser)]
#[command(
    name = "trajmix",
    version,
    about = "Sigmoidal and random-changepoint mixed models for longitudinal data, fitted by SAEM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a trajectory model and print the annotated report
    Fit(FitArgs),
    /// Summarize a longitudinal dataset (histogram, spaghetti, yearly boxes)
    Inspect(InspectArgs),
    /// Generate synthetic datasets from a scenario config
    Simulate(SimulateArgs),
    /// Run accuracy/runtime benchmark scenarios
    Benchmark(BenchmarkArgs),
    /// Write the bundled demonstration cohort to CSV
    MakeDatacog(MakeDatacogArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Path to the long-format CSV dataset
    #[arg(long)]
    data: PathBuf,
    /// Column holding the subject identifier
    #[arg(long)]
    id: String,
    /// Column holding the observation time
    #[arg(long)]
    time: String,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Column holding the longitudinal outcome
    #[arg(long)]
    outcome: String,
    /// Model family: smm, pmma, or pmms
    #[arg(long)]
    model: String,
    /// Covariate(s) applied to all four parameters (comma-separated)
    #[arg(long, value_delimiter = ',')]
    var_all: Vec<String>,
    /// Covariate(s) on the first level (smm only)
    #[arg(long, value_delimiter = ',')]
    var_first_level: Vec<String>,
    /// Covariate(s) on the last level
    #[arg(long, value_delimiter = ',')]
    var_last_level: Vec<String>,
    /// Covariate(s) on the midpoint (smm only)
    #[arg(long, value_delimiter = ',')]
    var_midpoint: Vec<String>,
    /// Covariate(s) on the Hill slope (smm only)
    #[arg(long, value_delimiter = ',')]
    var_hslope: Vec<String>,
    /// Covariate(s) on the pre-changepoint slope (pmma/pmms only)
    #[arg(long, value_delimiter = ',')]
    var_slope1: Vec<String>,
    /// Covariate(s) on the post-changepoint slope (pmma/pmms only)
    #[arg(long, value_delimiter = ',')]
    var_slope2: Vec<String>,
    /// Covariate(s) on the changepoint time (pmma/pmms only)
    #[arg(long, value_delimiter = ',')]
    var_changepoint: Vec<String>,
    /// Override the four starting values, comma-separated in parameter order
    #[arg(long, allow_hyphen_values = true)]
    start: Option<String>,
    /// Transition window width for pmms [default: 2.0]
    #[arg(long, default_value_t = 2.0)]
    transition_width: f64,
    /// Initial error SD (defaults to half the outcome SD)
    #[arg(long)]
    sigma_init: Option<f64>,
    /// Exploration-phase iterations
    #[arg(long, default_value_t = 300)]
    k1: usize,
    /// Smoothing-phase iterations
    #[arg(long, default_value_t = 100)]
    k2: usize,
    /// Metropolis transitions per subject per iteration
    #[arg(long, default_value_t = 3)]
    mcmc_steps: usize,
    /// Step-size exponent in (0.5, 1]
    #[arg(long, default_value_t = 1.0)]
    step_exponent: f64,
    /// Importance-sampling draws for the likelihood
    #[arg(long, default_value_t = 1000)]
    is_samples: usize,
    /// Initial proposal-scale multiplier
    #[arg(long, default_value_t = 0.5)]
    proposal_scale: f64,
    /// RNG seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Also write the marginal trajectory (CSV + SVG)
    #[arg(long)]
    traj_marg: bool,
    /// Contrast marginal trajectories between two groups of this covariate
    #[arg(long)]
    traj_marg_group: Option<String>,
    /// Contrast percentiles, e.g. 0.25,0.75 [default: 0.10,0.90]
    #[arg(long, default_value = "0.10,0.90")]
    traj_marg_group_val: String,
    /// Grid points for trajectory curves
    #[arg(long, default_value_t = 100)]
    grid_size: usize,
    /// Also write the convergence trace (CSV + SVG)
    #[arg(long)]
    trace: bool,
    /// Also write subject-specific estimates (CSV)
    #[arg(long)]
    psi: bool,
    /// Directory for artifacts [default: .]
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write the report to this file
    #[arg(long)]
    report: Option<PathBuf>,
    /// Overwrite existing artifacts
    #[arg(long)]
    force: bool,
    /// Treat non-numeric cells as errors instead of dropping the row
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Column holding the longitudinal variable to inspect
    #[arg(long)]
    variable: String,
    /// RNG seed for the spaghetti sample
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// X-axis label
    #[arg(long, default_value = "time")]
    xlabel: String,
    /// Y-axis label
    #[arg(long, default_value = "outcome")]
    ylabel: String,
    /// Directory for artifacts [default: .]
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Overwrite existing artifacts
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config file (TOML, one [[scenario]] block per scenario)
    #[arg(long)]
    scenario: PathBuf,
    /// Directory for the generated CSV files [default: .]
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Overwrite existing artifacts
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Scenario config file (TOML, one [[scenario]] block per scenario)
    #[arg(long)]
    scenario: PathBuf,
    /// Initials modes to run, comma-separated subset of auto,naive
    #[arg(long, default_value = "auto", value_delimiter = ',')]
    modes: Vec<String>,
    /// Exploration-phase iterations
    #[arg(long, default_value_t = 300)]
    k1: usize,
    /// Smoothing-phase iterations
    #[arg(long, default_value_t = 100)]
    k2: usize,
    /// Importance-sampling draws for the likelihood
    #[arg(long, default_value_t = 1000)]
    is_samples: usize,
    /// Worker threads for parallel replications (0 = automatic)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Directory for artifacts [default: .]
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Overwrite existing artifacts
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct MakeDatacogArgs {
    /// Output CSV path
    #[arg(long, default_value = "dataCog.csv")]
    out: PathBuf,
    /// RNG seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Overwrite an existing file
    #[arg(long)]
    force: bool,
}

/// Run the CLI; returns the process exit code.
pub fn run(args: &[String]) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // clap renders help/version through the error path.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::MakeDatacog(a) => cmd_make_datacog(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.exit_class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Estimation => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn write_artifact(path: &Path, content: &str, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Usage(format!(
            "artifact `{}` exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn parse_pair(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Usage(format!(
            "expected two comma-separated values, got `{text}`"
        )));
    }
    let a = parts[0]
        .parse::<f64>()
        .map_err(|_| Error::Usage(format!("not a number: `{}`", parts[0])))?;
    let b = parts[1]
        .parse::<f64>()
        .map_err(|_| Error::Usage(format!("not a number: `{}`", parts[1])))?;
    Ok((a, b))
}

fn parse_start(text: &str) -> Result<[f64; 4]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::Usage(format!(
            "--start needs four comma-separated values, got `{text}`"
        )));
    }
    let mut values = [0.0; 4];
    for (i, p) in parts.iter().enumerate() {
        values[i] = p
            .parse::<f64>()
            .map_err(|_| Error::Usage(format!("not a number in --start: `{p}`")))?;
    }
    Ok(values)
}

/// Union of --var-all and the per-parameter assignments, deduplicated while
/// preserving order.
fn covariate_assignment(kind: ModelKind, args: &FitArgs) -> Result<[Vec<String>; 4]> {
    let reject_if_used = |flag: &str, values: &[String]| -> Result<()> {
        if values.is_empty() {
            Ok(())
        } else {
            Err(Error::Usage(format!(
                "--{flag} does not apply to model `{}`",
                kind.as_str()
            )))
        }
    };
    let per_param: [&[String]; 4] = match kind {
        ModelKind::Smm => {
            reject_if_used("var-slope1", &args.var_slope1)?;
            reject_if_used("var-slope2", &args.var_slope2)?;
            reject_if_used("var-changepoint", &args.var_changepoint)?;
            [
                &args.var_first_level,
                &args.var_last_level,
                &args.var_midpoint,
                &args.var_hslope,
            ]
        }
        ModelKind::PmmAbrupt | ModelKind::PmmSmooth => {
            reject_if_used("var-first-level", &args.var_first_level)?;
            reject_if_used("var-midpoint", &args.var_midpoint)?;
            reject_if_used("var-hslope", &args.var_hslope)?;
            [
                &args.var_last_level,
                &args.var_slope1,
                &args.var_slope2,
                &args.var_changepoint,
            ]
        }
    };
    let mut out: [Vec<String>; 4] = Default::default();
    for k in 0..4 {
        for name in args.var_all.iter().chain(per_param[k].iter()) {
            if !out[k].contains(name) {
                out[k].push(name.clone());
            }
        }
    }
    Ok(out)
}

fn load_for_fit(args: &FitArgs, covariates: &[String]) -> Result<LongitudinalDataset> {
    load_dataset(
        &args.data.data,
        &args.data.id,
        &args.outcome,
        &args.data.time,
        covariates,
        args.strict,
    )
}

fn write_trajectories(
    out_dir: &Path,
    stem: &str,
    trajectories: &[&MarginalTrajectory],
    xlabel: &str,
    ylabel: &str,
    force: bool,
) -> Result<()> {
    let csv_path = out_dir.join(format!("{stem}.csv"));
    write_artifact(&csv_path, &trajectories_to_csv(trajectories), force)?;
    let point_sets: Vec<Vec<(f64, f64)>> = trajectories
        .iter()
        .map(|t| t.times.iter().cloned().zip(t.values.iter().cloned()).collect())
        .collect();
    let series: Vec<svg::Series> = trajectories
        .iter()
        .zip(&point_sets)
        .map(|(t, pts)| svg::Series {
            label: &t.label,
            points: pts,
        })
        .collect();
    let svg_path = out_dir.join(format!("{stem}.svg"));
    write_artifact(&svg_path, &svg::line_chart(stem, xlabel, ylabel, &series), force)?;
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let kind = ModelKind::parse(&args.model)?;
    let assignment = covariate_assignment(kind, &args)?;
    let mut all_covs: Vec<String> = Vec::new();
    for k in 0..4 {
        for name in &assignment[k] {
            if !all_covs.contains(name) {
                all_covs.push(name.clone());
            }
        }
    }
    if let Some(group) = &args.traj_marg_group {
        if !all_covs.contains(group) {
            return Err(Error::Usage(format!(
                "--traj-marg-group `{group}` is not among the model covariates"
            )));
        }
    }

    let data = load_for_fit(&args, &all_covs)?;
    if data.dropped_rows > 0 {
        println!(
            "note: dropped {} observation row(s) with missing or non-numeric values",
            data.dropped_rows
        );
    }

    let ys: Vec<f64> = data
        .subjects
        .iter()
        .flat_map(|s| s.observations.iter().map(|o| o.outcome))
        .collect();
    let sigma_init = args
        .sigma_init
        .unwrap_or_else(|| (sample_variance(&ys).sqrt() / 2.0).max(1e-3));

    let mut betas: [Vec<(String, f64)>; 4] = Default::default();
    for k in 0..4 {
        betas[k] = assignment[k].iter().map(|n| (n.clone(), 0.0)).collect();
    }
    let spec = ModelSpec::new(
        kind,
        ParamPredictorSpec {
            alpha: [0.0; 4],
            betas,
            random_mask: kind.random_mask(),
        },
        args.transition_width,
        sigma_init,
    )?;

    let start = match &args.start {
        Some(text) => StartValues::user(parse_start(text)?),
        None => auto_starts(kind, &data)?,
    };

    let config = SaemConfig {
        k1: args.k1,
        k2: args.k2,
        mcmc_steps: args.mcmc_steps,
        step_exponent: args.step_exponent,
        rng_seed: args.seed,
        is_samples: args.is_samples,
        proposal_scale: args.proposal_scale,
    };

    let fitted = fit(&data, &spec, &start, &config)?;
    let report = render_report(&fitted);
    print!("{report}");
    if let Some(path) = &args.report {
        write_artifact(path, &report, args.force)?;
    }

    if args.traj_marg {
        let tr = marginal_trajectory(&fitted, args.grid_size)?;
        write_trajectories(
            &args.out_dir,
            "trajectory_marginal",
            &[&tr],
            &data.time_name,
            &data.outcome_name,
            args.force,
        )?;
    }
    if let Some(group) = &args.traj_marg_group {
        let percentiles = parse_pair(&args.traj_marg_group_val)?;
        let (lo, hi) = marginal_contrast(&fitted, group, percentiles, args.grid_size)?;
        write_trajectories(
            &args.out_dir,
            "trajectory_contrast",
            &[&lo, &hi],
            &data.time_name,
            &data.outcome_name,
            args.force,
        )?;
    }
    if args.trace {
        let csv_path = args.out_dir.join("trace.csv");
        write_artifact(&csv_path, &trace_to_csv(&fitted), args.force)?;
        let series_data: Vec<Vec<(f64, f64)>> = (0..fitted.trace.names.len())
            .map(|c| {
                fitted
                    .trace
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (i as f64 + 1.0, r[c]))
                    .collect()
            })
            .collect();
        let series: Vec<svg::Series> = fitted
            .trace
            .names
            .iter()
            .zip(&series_data)
            .map(|(n, pts)| svg::Series {
                label: n,
                points: pts,
            })
            .collect();
        let svg_path = args.out_dir.join("trace.svg");
        write_artifact(
            &svg_path,
            &svg::line_chart("convergence", "iteration", "estimate", &series),
            args.force,
        )?;
    }
    if args.psi {
        let path = args.out_dir.join("psi.csv");
        write_artifact(&path, &psi_to_csv(&fitted), args.force)?;
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let data = load_dataset(
        &args.data.data,
        &args.data.id,
        &args.variable,
        &args.data.time,
        &[],
        false,
    )?;
    let summary = inspect(&data, args.seed);

    let mut hist_csv = String::from("bin_lo,bin_hi,count\n");
    for (lo, hi, n) in &summary.histogram {
        hist_csv.push_str(&format!("{lo},{hi},{n}\n"));
    }
    write_artifact(&args.out_dir.join("inspect_histogram.csv"), &hist_csv, args.force)?;
    write_artifact(
        &args.out_dir.join("inspect_histogram.svg"),
        &svg::histogram(
            &format!("distribution of {}", args.variable),
            &args.ylabel,
            &summary.histogram,
        ),
        args.force,
    )?;

    let mut spa_csv = String::from("id,time,value\n");
    for (id, obs) in &summary.spaghetti {
        for o in obs {
            spa_csv.push_str(&format!("{id},{},{}\n", o.time, o.outcome));
        }
    }
    write_artifact(&args.out_dir.join("inspect_spaghetti.csv"), &spa_csv, args.force)?;
    let point_sets: Vec<Vec<(f64, f64)>> = summary
        .spaghetti
        .iter()
        .map(|(_, obs)| obs.iter().map(|o| (o.time, o.outcome)).collect())
        .collect();
    let series: Vec<svg::Series> = summary
        .spaghetti
        .iter()
        .zip(&point_sets)
        .map(|((id, _), pts)| svg::Series {
            label: id,
            points: pts,
        })
        .collect();
    write_artifact(
        &args.out_dir.join("inspect_spaghetti.svg"),
        &svg::line_chart(
            &format!("individual trajectories ({} subjects)", series.len()),
            &args.xlabel,
            &args.ylabel,
            &series,
        ),
        args.force,
    )?;

    let mut yearly_csv = String::from("year,min,q1,median,q3,max,n\n");
    for s in &summary.yearly {
        if s.n == 0 {
            yearly_csv.push_str(&format!("{},,,,,,0\n", s.year));
        } else {
            yearly_csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.year, s.min, s.q1, s.median, s.q3, s.max, s.n
            ));
        }
    }
    write_artifact(&args.out_dir.join("inspect_yearly.csv"), &yearly_csv, args.force)?;
    write_artifact(
        &args.out_dir.join("inspect_yearly.svg"),
        &svg::boxplot(
            &format!("yearly distribution of {}", args.variable),
            &args.xlabel,
            &args.ylabel,
            &summary.yearly,
        ),
        args.force,
    )?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.scenario)?;
    let scenarios = parse_scenarios(&text)?;
    for scenario in &scenarios {
        for rep in 0..scenario.replications {
            let data = crate::sim::simulate_dataset(scenario, rep)?;
            let path = args.out_dir.join(format!("{}_r{}.csv", scenario.name, rep));
            if path.exists() && !args.force {
                return Err(Error::Usage(format!(
                    "artifact `{}` exists; pass --force to overwrite",
                    path.display()
                )));
            }
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            write_dataset(&data, &path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    if args.jobs > 0 {
        // Ignore failure if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build_global();
    }
    let text = std::fs::read_to_string(&args.scenario)?;
    let scenarios = parse_scenarios(&text)?;
    let modes: Vec<InitialsMode> = args
        .modes
        .iter()
        .map(|m| InitialsMode::parse(m))
        .collect::<Result<_>>()?;
    if modes.is_empty() {
        return Err(Error::Usage("no initials modes given".into()));
    }
    let config = SaemConfig {
        k1: args.k1,
        k2: args.k2,
        is_samples: args.is_samples,
        ..Default::default()
    };
    let results = run_benchmark(&scenarios, &modes, &config)?;
    write_artifact(
        &args.out_dir.join("benchmark_summary.csv"),
        &benchmark_csv(&results),
        args.force,
    )?;
    write_artifact(
        &args.out_dir.join("benchmark_runtime.csv"),
        &runtime_series_csv(&results),
        args.force,
    )?;
    for cell in &results {
        println!(
            "{} [{}]: {}/{} converged, mean runtime {:.2}s, max MSE {:.4}, bias {:.2}%",
            cell.scenario,
            cell.mode.as_str(),
            cell.n_converged,
            cell.replications.len(),
            cell.mean_runtime_s,
            cell.mse.iter().map(|&(_, m)| m).fold(0.0, f64::max),
            cell.pct_bias
        );
    }
    Ok(())
}

fn cmd_make_datacog(args: MakeDatacogArgs) -> Result<()> {
    if args.out.exists() && !args.force {
        return Err(Error::Usage(format!(
            "artifact `{}` exists; pass --force to overwrite",
            args.out.display()
        )));
    }
    let data = make_datacog(args.seed);
    write_dataset(&data, &args.out)?;
    println!("wrote {}", args.out.display());
    println!(
        "{} subjects, {} observations",
        data.n_subjects(),
        data.n_obs()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_parser_accepts_spec_format() {
        assert_eq!(
            parse_start(" -1,-0.02,-0.25,-4").unwrap(),
            [-1.0, -0.02, -0.25, -4.0]
        );
        assert!(parse_start("1,2,3").is_err());
        assert!(parse_start("a,b,c,d").is_err());
    }

    #[test]
    fn pair_parser() {
        assert_eq!(parse_pair("0.25,0.75").unwrap(), (0.25, 0.75));
        assert!(parse_pair("0.25").is_err());
    }
}
