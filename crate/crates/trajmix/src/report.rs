//! Annotated fit report and marginal estimated trajectories.
//!
//! The text report mirrors the reference output family: variance of random
//! effects with CV%, the random-effects correlation matrix, statistical
//! criteria under both likelihood methods, the fixed-effects table with Wald
//! p-values, the start values used, warnings, and elapsed time. Rendering is
//! deterministic: estimates at or above 0.001 in magnitude print to 3
//! decimals and smaller ones to 4, CV% to 1 decimal, correlations to 2.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{predict_params, structural_value};
use crate::saem::FittedModel;
use crate::stats::percentile_of;

/// Model-implied mean curve at a fixed covariate profile with random effects
/// set to zero.
#[derive(Debug, Clone)]
pub struct MarginalTrajectory {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub profile: BTreeMap<String, f64>,
}

fn fmt_est(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.abs() >= 0.001 {
        format!("{:.3}", x)
    } else {
        format!("{:.4}", x)
    }
}

/// Scientific notation in the reference style, e.g. `4.7e-02`.
fn fmt_sci(x: f64) -> String {
    if x == 0.0 {
        return "0.0e+00".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let mant = x / 10f64.powi(exp);
    format!("{:.1}e{}{:02}", mant, if exp < 0 { "-" } else { "+" }, exp.abs())
}

fn rule() -> &'static str {
    "----------------------------------------------------"
}

fn banner(title: &str) -> String {
    let inner = format!("  {title}  ");
    let total = rule().len();
    let dashes = total.saturating_sub(inner.len());
    let left = dashes / 2;
    let right = dashes - left;
    format!("{}{}{}", "-".repeat(left), inner, "-".repeat(right))
}

/// Variance-table rows (label, short name, estimate, se) in display order.
fn variance_rows(fit: &FittedModel) -> Vec<(String, String, f64, f64)> {
    let kind = fit.kind;
    let pnames = kind.param_names();
    let random_idx = kind.random_indices();
    let mut rows = Vec::new();
    for &k in &kind.display_order() {
        if let Some(c) = random_idx.iter().position(|&r| r == k) {
            rows.push((
                pnames[k].to_string(),
                format!("omega2.{}", pnames[k]),
                fit.random_estimates[c],
                fit.random_se[c],
            ));
        }
    }
    let (i, j) = kind.free_cov_pair();
    rows.push((
        "covar".to_string(),
        format!(
            "cov.{}.{}",
            pnames[random_idx[i]], pnames[random_idx[j]]
        ),
        fit.random_estimates[random_idx.len()],
        fit.random_se[random_idx.len()],
    ));
    rows
}

/// Render the annotated plain-text report.
pub fn render_report(fit: &FittedModel) -> String {
    let mut out = String::new();
    let kind = fit.kind;
    let pnames = kind.param_names();

    // Variance of random effects.
    out.push_str(rule());
    out.push('\n');
    out.push_str(&banner("Variance of random effects"));
    out.push('\n');
    out.push_str(rule());
    out.push('\n');
    let rows = variance_rows(fit);
    let w_label = rows.iter().map(|r| r.0.len()).max().unwrap_or(5).max(5);
    let w_name = rows.iter().map(|r| r.1.len()).max().unwrap_or(9).max(9);
    out.push_str(&format!(
        "{:w_label$} {:w_name$} {:>9} {:>8} {:>6}\n",
        "",
        "Parameter",
        "Estimate",
        "SE",
        "CV(%)",
        w_label = w_label,
        w_name = w_name
    ));
    for (label, name, est, se) in &rows {
        let cv = if *est != 0.0 {
            format!("{:.1}", 100.0 * se / est.abs())
        } else {
            "NA".to_string()
        };
        out.push_str(&format!(
            "{:w_label$} {:w_name$} {:>9} {:>8} {:>6}\n",
            label,
            name,
            fmt_est(*est),
            fmt_sci(*se),
            cv,
            w_label = w_label,
            w_name = w_name
        ));
    }

    // Correlation matrix of random effects.
    out.push_str(rule());
    out.push('\n');
    out.push_str(&banner("Correlation matrix of random effects"));
    out.push('\n');
    out.push_str(rule());
    out.push('\n');
    let random_idx = kind.random_indices();
    let d = random_idx.len();
    let order: Vec<usize> = kind
        .display_order()
        .iter()
        .filter_map(|&k| random_idx.iter().position(|&r| r == k))
        .collect();
    let names: Vec<String> = order
        .iter()
        .map(|&c| format!("omega2.{}", pnames[random_idx[c]]))
        .collect();
    let w = names.iter().map(String::len).max().unwrap_or(8);
    out.push_str(&format!("{:w$}", "", w = w));
    for n in &names {
        out.push_str(&format!(" {:>w$}", n, w = w));
    }
    out.push('\n');
    let b = &fit.b.matrix;
    for (ri, &ci) in order.iter().enumerate() {
        out.push_str(&format!("{:w$}", names[ri], w = w));
        for &cj in &order {
            let val = if ci == cj {
                1.0
            } else {
                let denom = (b[(ci, ci)] * b[(cj, cj)]).sqrt();
                if denom > 0.0 {
                    b[(ci.min(cj), ci.max(cj))] / denom
                } else {
                    0.0
                }
            };
            out.push_str(&format!(" {:>w$}", format!("{:.2}", val), w = w));
        }
        out.push('\n');
        let _ = d;
    }

    // Statistical criteria.
    out.push_str(rule());
    out.push('\n');
    out.push_str(&banner("Statistical criteria"));
    out.push('\n');
    out.push_str(rule());
    out.push('\n');
    out.push_str("Likelihood computed by linearisation\n");
    out.push_str(&format!("      -2LL= {:.2}\n", fit.minus2ll_lin));
    out.push_str(&format!("      AIC = {:.2}\n", fit.aic_lin));
    out.push_str(&format!("      BIC = {:.2}\n\n", fit.bic_lin));
    out.push_str("Likelihood computed by importance sampling\n");
    out.push_str(&format!("      -2LL= {:.2}\n", fit.minus2ll_is));
    out.push_str(&format!("      AIC = {:.2}\n", fit.aic_is));
    out.push_str(&format!("      BIC = {:.2}\n", fit.bic_is));

    // Fixed effects with p-values.
    out.push_str(rule());
    out.push('\n');
    // Rows in display order: each parameter followed by its covariate
    // effects, then the error SD.
    struct Row {
        label: String,
        est: f64,
        se: f64,
        p: String,
    }
    let mut table: Vec<Row> = Vec::new();
    for &k in &kind.display_order() {
        let alpha_label = pnames[k].to_string();
        for (j, lab) in fit.fixed_labels.iter().enumerate() {
            if *lab == alpha_label {
                table.push(Row {
                    label: lab.clone(),
                    est: fit.fixed_estimates[j],
                    se: fit.fixed_se[j],
                    p: fit.fixed_pvalues[j].clone(),
                });
            }
        }
        for (j, lab) in fit.fixed_labels.iter().enumerate() {
            if lab.starts_with("beta_") && lab.ends_with(&format!("({})", pnames[k])) {
                table.push(Row {
                    label: lab.clone(),
                    est: fit.fixed_estimates[j],
                    se: fit.fixed_se[j],
                    p: fit.fixed_pvalues[j].clone(),
                });
            }
        }
    }
    let sigma_p = if fit.sigma_se > 0.0 && fit.sigma_se.is_finite() {
        crate::saem::wald_pvalue(fit.sigma, fit.sigma_se).unwrap_or_else(|_| "NA".into())
    } else {
        "NA".into()
    };
    table.push(Row {
        label: "error".to_string(),
        est: fit.sigma,
        se: fit.sigma_se,
        p: sigma_p,
    });
    let w_lab = table.iter().map(|r| r.label.len()).max().unwrap_or(9).max(9);
    out.push_str(&format!(
        "{:>3} {:>w_lab$} {:>9} {:>7} {:>8}\n",
        "",
        "Parameter",
        "Estimate",
        "SE",
        "p-value",
        w_lab = w_lab
    ));
    for (i, r) in table.iter().enumerate() {
        out.push_str(&format!(
            "{:>3} {:>w_lab$} {:>9} {:>7} {:>8}\n",
            i + 1,
            r.label,
            fmt_est(r.est),
            fmt_est(r.se),
            r.p,
            w_lab = w_lab
        ));
    }
    out.push_str(rule());
    out.push('\n');

    // Start values, warnings, elapsed time.
    let start_names = pnames;
    let start_strs: Vec<String> = fit
        .start
        .values
        .iter()
        .zip(start_names.iter())
        .map(|(v, n)| format!("{n}={}", fmt_est(*v)))
        .collect();
    out.push_str(&format!(
        "Start values ({}): {}\n",
        fit.start.provenance.as_str(),
        start_strs.join(", ")
    ));
    if fit.warnings.is_empty() {
        out.push_str("Warnings: none\n");
    } else {
        out.push_str("Warnings:\n");
        for w in &fit.warnings {
            out.push_str(&format!("  - {w}\n"));
        }
    }
    out.push_str(&format!(
        " The program took {:.2} seconds \n",
        fit.elapsed_seconds
    ));
    out
}

/// Most common profile: mode for covariates with at most 10 distinct values,
/// median otherwise.
pub fn modal_profile(fit: &FittedModel) -> BTreeMap<String, f64> {
    let mut profile = BTreeMap::new();
    for (name, values) in &fit.covariate_values {
        profile.insert(name.clone(), modal_value(values));
    }
    profile
}

fn modal_value(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &v in &sorted {
        match distinct.last_mut() {
            Some((last, n)) if *last == v => *n += 1,
            _ => distinct.push((v, 1)),
        }
    }
    if distinct.len() <= 10 {
        // Mode; ties resolve to the smallest value.
        distinct
            .iter()
            .cloned()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.partial_cmp(&a.0).unwrap()))
            .map(|(v, _)| v)
            .unwrap_or(f64::NAN)
    } else {
        percentile_of(values, 0.5)
    }
}

fn evaluate_profile(
    fit: &FittedModel,
    profile: &BTreeMap<String, f64>,
    label: &str,
    grid_size: usize,
) -> Result<MarginalTrajectory> {
    let d = fit.kind.n_random();
    let psi = predict_params(&fit.predictors, profile, &vec![0.0; d])?;
    let (tlo, thi) = fit.time_range;
    let n = grid_size.max(2);
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let t = tlo + (thi - tlo) * i as f64 / (n - 1) as f64;
        let f = structural_value(fit.kind, t, &psi, fit.transition_width)?;
        times.push(t);
        values.push(f);
    }
    Ok(MarginalTrajectory {
        label: label.to_string(),
        times,
        values,
        profile: profile.clone(),
    })
}

/// Marginal estimated trajectory at the most common covariate profile.
pub fn marginal_trajectory(fit: &FittedModel, grid_size: usize) -> Result<MarginalTrajectory> {
    let profile = modal_profile(fit);
    evaluate_profile(fit, &profile, "marginal", grid_size)
}

/// Marginal trajectories contrasted between two groups of `group_var`:
/// its two levels when binary, else the requested percentiles (default
/// 10th/90th) of its distribution. Other covariates stay at the modal
/// profile.
pub fn marginal_contrast(
    fit: &FittedModel,
    group_var: &str,
    percentiles: (f64, f64),
    grid_size: usize,
) -> Result<(MarginalTrajectory, MarginalTrajectory)> {
    let in_model = (0..4).any(|k| {
        fit.predictors.betas[k]
            .iter()
            .any(|(n, _)| n == group_var)
    });
    if !in_model {
        return Err(Error::UnknownGroupVariable(group_var.to_string()));
    }
    let values = fit
        .covariate_values
        .get(group_var)
        .ok_or_else(|| Error::UnknownGroupVariable(group_var.to_string()))?;
    let mut distinct = values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::ConstantGroupVariable(group_var.to_string()));
    }
    if !(percentiles.0 > 0.0 && percentiles.1 < 1.0 && percentiles.0 < percentiles.1) {
        return Err(Error::Usage(format!(
            "percentiles must satisfy 0 < p1 < p2 < 1, got {:?}",
            percentiles
        )));
    }

    let (lo, hi) = if distinct.len() == 2 {
        (distinct[0], distinct[1])
    } else {
        (
            percentile_of(values, percentiles.0),
            percentile_of(values, percentiles.1),
        )
    };

    let base = modal_profile(fit);
    let mut p_lo = base.clone();
    p_lo.insert(group_var.to_string(), lo);
    let mut p_hi = base;
    p_hi.insert(group_var.to_string(), hi);
    let t_lo = evaluate_profile(fit, &p_lo, &format!("{group_var}={lo}"), grid_size)?;
    let t_hi = evaluate_profile(fit, &p_hi, &format!("{group_var}={hi}"), grid_size)?;
    Ok((t_lo, t_hi))
}

/// Write a set of trajectories as CSV with columns `label,time,value`.
pub fn trajectories_to_csv(trajectories: &[&MarginalTrajectory]) -> String {
    let mut out = String::from("label,time,value\n");
    for tr in trajectories {
        for (t, v) in tr.times.iter().zip(&tr.values) {
            out.push_str(&format!("{},{},{}\n", tr.label, t, v));
        }
    }
    out
}

/// Convergence trace as CSV: iteration column followed by one column per
/// parameter.
pub fn trace_to_csv(fit: &FittedModel) -> String {
    let mut out = String::from("iteration");
    for n in &fit.trace.names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (i, row) in fit.trace.rows.iter().enumerate() {
        out.push_str(&format!("{}", i + 1));
        for v in row {
            out.push_str(&format!(",{}", v));
        }
        out.push('\n');
    }
    out
}

/// Subject estimates as CSV: id, psi columns, then eta columns.
pub fn psi_to_csv(fit: &FittedModel) -> String {
    let pnames = fit.kind.param_names();
    let random_idx = fit.kind.random_indices();
    let mut out = String::from("id");
    for n in pnames {
        out.push_str(&format!(",psi.{n}"));
    }
    for &k in &random_idx {
        out.push_str(&format!(",eta.{}", pnames[k]));
    }
    out.push('\n');
    for s in &fit.subject_estimates {
        out.push_str(&s.id);
        for v in &s.psi {
            out.push_str(&format!(",{}", v));
        }
        for v in &s.eta {
            out.push_str(&format!(",{}", v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initials::{Provenance, StartValues};
    use crate::model::{ModelKind, ParamPredictorSpec, RandomEffectsCov};
    use crate::saem::{FittedModel, SaemConfig, SeMethod, SubjectEstimate, Trace};
    use approx::assert_relative_eq;

    /// Hand-constructed fit carrying given variance entries.
    fn synthetic_fit(kind: ModelKind, random_estimates: Vec<f64>, random_se: Vec<f64>) -> FittedModel {
        let d = kind.n_random();
        let mut b = RandomEffectsCov::diagonal(kind, &random_estimates[..d].to_vec());
        b = b.with_cov(random_estimates[d]);
        let pnames = kind.param_names();
        let random_idx = kind.random_indices();
        let mut random_labels: Vec<String> = random_idx
            .iter()
            .map(|&k| format!("omega2.{}", pnames[k]))
            .collect();
        let pair = kind.free_cov_pair();
        random_labels.push(format!(
            "cov.{}.{}",
            pnames[random_idx[pair.0]], pnames[random_idx[pair.1]]
        ));
        let predictors = ParamPredictorSpec::from_alpha(kind, [-1.088, 0.24, -2.567, 1.789]);
        FittedModel {
            kind,
            transition_width: 0.0,
            predictors,
            b,
            sigma: 0.279,
            fixed_labels: pnames.iter().map(|s| s.to_string()).collect(),
            fixed_estimates: vec![-1.088, 0.24, -2.567, 1.789],
            fixed_se: vec![0.035, 0.015, 0.034, 0.04],
            fixed_pvalues: vec!["P<.0001".into(); 4],
            random_labels,
            random_estimates,
            random_se,
            sigma_se: 0.002,
            minus2ll_lin: 9732.152,
            aic_lin: 9756.152,
            bic_lin: 9817.233,
            minus2ll_is: 9731.84,
            aic_is: 9755.84,
            bic_is: 9816.921,
            is_mc_se: 0.1,
            n_params: 12,
            trace: Trace {
                names: vec![],
                rows: vec![],
            },
            subject_estimates: vec![SubjectEstimate {
                id: "1".into(),
                psi: [0.0; 4],
                eta: vec![0.0; d],
            }],
            eta_covs: vec![],
            start: StartValues {
                values: [0.0; 4],
                provenance: Provenance::Auto,
            },
            elapsed_seconds: 346.51,
            warnings: vec![],
            se_method: SeMethod::Louis,
            n_subjects: 1200,
            n_obs: 8400,
            time_range: (-20.0, 0.0),
            covariate_values: Default::default(),
            config: SaemConfig::default(),
        }
    }

    #[test]
    fn correlation_renders_paper_value() {
        // var(last) = 1.283, var(first) = 0.146, cov = 0.049:
        // rho = 0.049 / sqrt(1.283 * 0.146) = 0.113 -> printed 0.11.
        let fit = synthetic_fit(
            ModelKind::Smm,
            vec![0.146, 1.283, 0.049],
            vec![0.0071, 0.0556, 0.0143],
        );
        let report = render_report(&fit);
        let corr_section: Vec<&str> = report
            .lines()
            .skip_while(|l| !l.contains("Correlation matrix"))
            .take(6)
            .collect();
        let joined = corr_section.join("\n");
        assert!(joined.contains("0.11"), "missing correlation 0.11:\n{joined}");
        assert!(joined.contains("1.00"));
    }

    #[test]
    fn cv_percent_reproduces_listing_pairs() {
        // (estimate, SE) pairs from the reference listing; CV% at 1-decimal
        // rounding. The covariance pair prints 8.5 from its rounded inputs
        // (the listing's 8.4 traces back to unrounded internals).
        let fit = synthetic_fit(
            ModelKind::PmmAbrupt,
            vec![1.07196, 0.00062, 0.03830, 0.58980, 0.00378],
            vec![4.7e-2, 7.4e-5, 2.0e-3, 7.9e-2, 3.2e-4],
        );
        let report = render_report(&fit);
        let lines: Vec<&str> = report.lines().collect();
        let cv_of = |name: &str| -> String {
            lines
                .iter()
                .find(|l| l.contains(name))
                .unwrap_or_else(|| panic!("row {name} missing"))
                .split_whitespace()
                .last()
                .unwrap()
                .to_string()
        };
        assert_eq!(cv_of("omega2.last.level"), "4.4");
        assert_eq!(cv_of("omega2.slope1 "), "11.9");
        assert_eq!(cv_of("omega2.slope2 "), "5.2");
        assert_eq!(cv_of("omega2.changepoint"), "13.4");
        assert_eq!(cv_of("cov.slope1.slope2"), "8.5");
    }

    /// Labels of the numbered fixed-effects table rows, in printed order.
    fn table_labels(report: &str) -> Vec<String> {
        report
            .lines()
            .filter_map(|l| {
                let mut it = l.split_whitespace();
                let first = it.next()?;
                let label = it.next()?;
                first.parse::<usize>().ok().map(|_| label.to_string())
            })
            .collect()
    }

    #[test]
    fn table_has_five_rows_without_covariates() {
        let fit = synthetic_fit(
            ModelKind::PmmAbrupt,
            vec![1.0, 0.001, 0.04, 0.6, 0.003],
            vec![0.05, 1e-4, 2e-3, 8e-2, 3e-4],
        );
        let report = render_report(&fit);
        let labels = table_labels(&report);
        assert_eq!(
            labels,
            vec!["last.level", "slope1", "slope2", "changepoint", "error"]
        );
    }

    #[test]
    fn smm_rows_print_last_level_first() {
        let fit = synthetic_fit(
            ModelKind::Smm,
            vec![0.146, 1.283, 0.049],
            vec![0.0071, 0.0556, 0.0143],
        );
        let report = render_report(&fit);
        let labels = table_labels(&report);
        assert_eq!(
            labels,
            vec!["last.level", "first.level", "midpoint", "hill.slope", "error"]
        );
        // Variance table also leads with the last level.
        let v_last = report.find("omega2.last.level").unwrap();
        let v_first = report.find("omega2.first.level").unwrap();
        assert!(v_last < v_first);
    }

    #[test]
    fn report_is_deterministic() {
        let fit = synthetic_fit(
            ModelKind::Smm,
            vec![0.146, 1.283, 0.049],
            vec![0.0071, 0.0556, 0.0143],
        );
        assert_eq!(render_report(&fit), render_report(&fit));
        assert!(render_report(&fit).contains("The program took 346.51 seconds"));
    }

    fn fit_with_covariate(values: Vec<f64>) -> FittedModel {
        let mut fit = synthetic_fit(
            ModelKind::Smm,
            vec![0.146, 1.283, 0.049],
            vec![0.0071, 0.0556, 0.0143],
        );
        fit.predictors.betas = [
            vec![("age".to_string(), -0.061)],
            vec![("age".to_string(), -0.044)],
            vec![("age".to_string(), 0.031)],
            vec![("age".to_string(), 0.007)],
        ];
        fit.covariate_values.insert("age".to_string(), values);
        fit
    }

    #[test]
    fn modal_profile_uses_mode_for_discrete() {
        let fit = fit_with_covariate(vec![0.0, 0.0, 0.0, 1.0, 2.0]);
        let profile = modal_profile(&fit);
        assert_eq!(profile["age"], 0.0);
    }

    #[test]
    fn modal_profile_uses_median_for_continuous() {
        // More than 10 distinct values: median.
        let values: Vec<f64> = (0..21).map(|i| i as f64 / 2.0).collect();
        let fit = fit_with_covariate(values);
        let profile = modal_profile(&fit);
        assert_relative_eq!(profile["age"], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_profile_trajectory_uses_alpha() {
        let fit = synthetic_fit(
            ModelKind::Smm,
            vec![0.146, 1.283, 0.049],
            vec![0.0071, 0.0556, 0.0143],
        );
        let tr = marginal_trajectory(&fit, 3).unwrap();
        assert!(tr.profile.is_empty());
        // Last grid point is t = 0: the logistic returns the last level.
        assert_relative_eq!(*tr.values.last().unwrap(), 0.24, epsilon = 1e-12);
        assert_eq!(tr.times.len(), 3);
    }

    #[test]
    fn binary_contrast_uses_levels() {
        let fit = fit_with_covariate(vec![0.0, 1.0, 0.0, 1.0, 1.0]);
        let (lo, hi) = marginal_contrast(&fit, "age", (0.25, 0.75), 5).unwrap();
        assert_eq!(lo.profile["age"], 0.0);
        assert_eq!(hi.profile["age"], 1.0);
    }

    #[test]
    fn continuous_contrast_uses_percentiles() {
        // Quartiles of the frozen sample: 1.75 and 5.25 (linear
        // interpolation oracle).
        let fit = fit_with_covariate(vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 0.5, 7.5, 8.5]);
        let (lo, hi) = marginal_contrast(&fit, "age", (0.25, 0.75), 5).unwrap();
        assert_relative_eq!(
            lo.profile["age"],
            percentile_of(&fit.covariate_values["age"], 0.25),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            hi.profile["age"],
            percentile_of(&fit.covariate_values["age"], 0.75),
            epsilon = 1e-12
        );
    }

    #[test]
    fn contrast_errors() {
        let fit = fit_with_covariate(vec![1.0; 6]);
        assert!(matches!(
            marginal_contrast(&fit, "age", (0.1, 0.9), 5),
            Err(Error::ConstantGroupVariable(_))
        ));
        assert!(matches!(
            marginal_contrast(&fit, "bmi", (0.1, 0.9), 5),
            Err(Error::UnknownGroupVariable(_))
        ));
    }

    #[test]
    fn identical_percentiles_give_identical_trajectories() {
        let fit = fit_with_covariate((0..40).map(|i| i as f64).collect());
        let (a1, b1) = marginal_contrast(&fit, "age", (0.3, 0.7), 11).unwrap();
        let (a2, b2) = marginal_contrast(&fit, "age", (0.3, 0.7), 11).unwrap();
        assert_eq!(a1.values, a2.values);
        assert_eq!(b1.values, b2.values);
    }

    #[test]
    fn csv_exports_are_wellformed() {
        let fit = synthetic_fit(
            ModelKind::Smm,
            vec![0.146, 1.283, 0.049],
            vec![0.0071, 0.0556, 0.0143],
        );
        let tr = marginal_trajectory(&fit, 4).unwrap();
        let csv = trajectories_to_csv(&[&tr]);
        assert!(csv.starts_with("label,time,value\n"));
        assert_eq!(csv.lines().count(), 5);
        let psi = psi_to_csv(&fit);
        assert!(psi.starts_with("id,psi.first.level"));
    }

    #[test]
    fn scientific_format_matches_reference_style() {
        assert_eq!(fmt_sci(4.7e-2), "4.7e-02");
        assert_eq!(fmt_sci(7.4e-5), "7.4e-05");
        assert_eq!(fmt_sci(2.0e-3), "2.0e-03");
        assert_eq!(fmt_sci(1.283), "1.3e+00");
    }
}
