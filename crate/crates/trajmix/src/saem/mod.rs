//! SAEM maximum-likelihood estimation for the trajectory models.
//!
//! Each iteration simulates the individual random effects by
//! Metropolis-within-Gibbs targeting their conditional posterior, folds the
//! simulated sufficient statistics into running averages with step size 1
//! during the exploration phase and `(k - k1)^-a` during the smoothing
//! phase, and then maximizes in closed form: weighted least squares for the
//! fixed effects of random-bearing parameters, a masked empirical covariance
//! for B, and the accumulated residual mean square for the error variance.
//! Fixed effects of parameters without random effects (the sigmoidal
//! midpoint and Hill-slope blocks) are updated by a damped Gauss-Newton step
//! on the accumulated residual objective, mirroring the optimization step
//! reference implementations use for such parameters.
//!
//! Standard errors come from a Louis-type stochastic approximation of the
//! observed Fisher information accumulated during the smoothing phase, with
//! the linearized-model information as a flagged fallback. The marginal
//! likelihood is reported both by linearization and by importance sampling.

mod design;
mod fim;
mod likelihood;
mod mcmc;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::initials::StartValues;
use crate::model::{ModelKind, ModelSpec, ParamPredictorSpec, RandomEffectsCov};
use crate::stats::sample_variance;

use design::{covariate_columns, prepare_subjects, Design, SubjectData};
use fim::{se_from_information, subject_derivatives, LouisAccumulator, ThetaLayout};
use likelihood::{chol_with_jitter, minus2ll_importance, minus2ll_linearization};
use mcmc::{conditional_pass, stream_rng, transition_sweep, ChainState, StreamDomain, SweepParams};

/// Default RNG seed used by the command-line tools; fixed so documented runs
/// reproduce exactly.
pub const DEFAULT_SEED: u64 = 12345;

const SIGMA2_FLOOR: f64 = 1e-10;
const VAR_FLOOR: f64 = 1e-6;
const MAX_ABS_PARAM: f64 = 1e8;
const MAX_CORRELATION: f64 = 0.98;
const GN_INNER_STEPS: usize = 2;
/// Fastest per-iteration shrink factor of the variances during exploration.
const ANNEAL_RATE: f64 = 0.97;

/// SAEM algorithm configuration.
#[derive(Debug, Clone)]
pub struct SaemConfig {
    /// Exploration-phase iterations (step size 1).
    pub k1: usize,
    /// Smoothing-phase iterations (step size `(k - k1)^-a`).
    pub k2: usize,
    /// Metropolis transitions per subject per iteration: a component-wise
    /// sweep followed by joint random-walk steps. Every iteration also opens
    /// with one independence transition proposing from the prior.
    pub mcmc_steps: usize,
    /// Step-size exponent `a` in (0.5, 1].
    pub step_exponent: f64,
    pub rng_seed: u64,
    /// Importance-sampling draws per subject for the likelihood.
    pub is_samples: usize,
    /// Initial random-walk SD multiplier (adapted toward 30-50% acceptance
    /// during the exploration phase).
    pub proposal_scale: f64,
}

impl Default for SaemConfig {
    fn default() -> Self {
        Self {
            k1: 300,
            k2: 100,
            mcmc_steps: 3,
            step_exponent: 1.0,
            rng_seed: DEFAULT_SEED,
            is_samples: 1000,
            proposal_scale: 0.5,
        }
    }
}

impl SaemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k1 < 1 || self.k2 < 1 {
            return Err(Error::Usage("k1 and k2 must be at least 1".into()));
        }
        if self.mcmc_steps < 1 {
            return Err(Error::Usage("mcmc_steps must be at least 1".into()));
        }
        if !(self.step_exponent > 0.5 && self.step_exponent <= 1.0) {
            return Err(Error::Usage("step exponent must lie in (0.5, 1]".into()));
        }
        if self.is_samples < 100 {
            return Err(Error::Usage("is_samples must be at least 100".into()));
        }
        if !(self.proposal_scale > 0.0) {
            return Err(Error::Usage("proposal scale must be positive".into()));
        }
        Ok(())
    }
}

/// How the reported standard errors were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeMethod {
    Louis,
    LinearizedFallback,
}

/// Conditional-mean estimates for one subject.
#[derive(Debug, Clone)]
pub struct SubjectEstimate {
    pub id: String,
    pub psi: [f64; 4],
    pub eta: Vec<f64>,
}

/// Per-iteration parameter values.
#[derive(Debug, Clone)]
pub struct Trace {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Everything a fit produces.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub transition_width: f64,
    /// Fitted fixed effects (means and covariate coefficients).
    pub predictors: ParamPredictorSpec,
    /// Fitted random-effects covariance (masked).
    pub b: RandomEffectsCov,
    /// Fitted error SD.
    pub sigma: f64,
    /// Fixed effects in stacked order with labels, SEs, and p-values.
    pub fixed_labels: Vec<String>,
    pub fixed_estimates: Vec<f64>,
    pub fixed_se: Vec<f64>,
    pub fixed_pvalues: Vec<String>,
    /// Variance components: one `omega2.<param>` entry per random coordinate
    /// followed by the free covariance.
    pub random_labels: Vec<String>,
    pub random_estimates: Vec<f64>,
    pub random_se: Vec<f64>,
    pub sigma_se: f64,
    pub minus2ll_lin: f64,
    pub aic_lin: f64,
    pub bic_lin: f64,
    pub minus2ll_is: f64,
    pub aic_is: f64,
    pub bic_is: f64,
    /// Monte-Carlo SE of the importance-sampled -2LL.
    pub is_mc_se: f64,
    /// Parameter count used by AIC/BIC.
    pub n_params: usize,
    pub trace: Trace,
    pub subject_estimates: Vec<SubjectEstimate>,
    /// Conditional covariance of the random effects per subject.
    pub eta_covs: Vec<DMatrix<f64>>,
    pub start: StartValues,
    pub elapsed_seconds: f64,
    pub warnings: Vec<String>,
    pub se_method: SeMethod,
    pub n_subjects: usize,
    pub n_obs: usize,
    pub time_range: (f64, f64),
    /// Covariate values per subject (dataset order), for marginal profiles.
    pub covariate_values: BTreeMap<String, Vec<f64>>,
    pub config: SaemConfig,
}

impl FittedModel {
    /// Reconstruct a stand-alone likelihood-evaluation state at the fitted
    /// parameters.
    pub fn state(&self) -> FitState {
        FitState {
            kind: self.kind,
            predictors: self.predictors.clone(),
            b: self.b.clone(),
            sigma: self.sigma,
            transition_width: self.transition_width,
            subject_etas: self
                .subject_estimates
                .iter()
                .map(|s| s.eta.clone())
                .collect(),
            subject_eta_covs: Some(self.eta_covs.clone()),
        }
    }
}

/// Subject-specific parameter estimates, one row per subject.
pub fn extract_psi(fit: &FittedModel) -> Vec<(String, [f64; 4])> {
    fit.subject_estimates
        .iter()
        .map(|s| (s.id.clone(), s.psi))
        .collect()
}

/// Full per-iteration parameter trace (k1 + k2 rows; the first row holds the
/// starting values).
pub fn convergence_trace(fit: &FittedModel) -> &Trace {
    &fit.trace
}

/// Two-sided Wald p-value, rendered as `P<.0001` below 1e-4 and to three
/// decimals otherwise.
pub fn wald_pvalue(estimate: f64, se: f64) -> Result<String> {
    if !(se > 0.0) || !se.is_finite() {
        return Err(Error::InvalidSE(se));
    }
    let z = (estimate / se).abs();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = 2.0 * (1.0 - normal.cdf(z));
    if p < 0.0001 {
        Ok("P<.0001".to_string())
    } else {
        Ok(format!("{:.3}", p))
    }
}

/// Model parameters frozen for stand-alone likelihood evaluation.
#[derive(Debug, Clone)]
pub struct FitState {
    pub kind: ModelKind,
    pub predictors: ParamPredictorSpec,
    pub b: RandomEffectsCov,
    pub sigma: f64,
    pub transition_width: f64,
    /// Conditional random-effect means per subject, in dataset order.
    pub subject_etas: Vec<Vec<f64>>,
    /// Conditional covariances; `None` falls back to B.
    pub subject_eta_covs: Option<Vec<DMatrix<f64>>>,
}

fn state_internals(
    data: &LongitudinalDataset,
    state: &FitState,
) -> Result<(Design, Vec<SubjectData>, DVector<f64>, Vec<DVector<f64>>)> {
    let cov_names: [Vec<String>; 4] = std::array::from_fn(|k| {
        state.predictors.betas[k]
            .iter()
            .map(|(n, _)| n.clone())
            .collect()
    });
    let design = Design::new(state.kind, cov_names);
    let subjects = prepare_subjects(data, &design)?;
    if state.subject_etas.len() != subjects.len() {
        return Err(Error::Usage(format!(
            "state has {} subjects, dataset has {}",
            state.subject_etas.len(),
            subjects.len()
        )));
    }
    let gamma = design.pack(&state.predictors);
    let etas: Vec<DVector<f64>> = state
        .subject_etas
        .iter()
        .map(|e| DVector::from_column_slice(e))
        .collect();
    Ok((design, subjects, gamma, etas))
}

/// -2 log-likelihood by linearization at an arbitrary parameter state.
pub fn loglik_linearization(data: &LongitudinalDataset, state: &FitState) -> Result<f64> {
    let (design, subjects, gamma, etas) = state_internals(data, state)?;
    minus2ll_linearization(
        &design,
        &subjects,
        &gamma,
        &state.b.matrix,
        state.sigma * state.sigma,
        state.transition_width,
        &etas,
    )
}

/// -2 log-likelihood by importance sampling at an arbitrary parameter state.
pub fn loglik_importance(
    data: &LongitudinalDataset,
    state: &FitState,
    is_samples: usize,
    seed: u64,
) -> Result<f64> {
    let (design, subjects, gamma, etas) = state_internals(data, state)?;
    let covs: Vec<DMatrix<f64>> = match &state.subject_eta_covs {
        Some(cs) => cs.clone(),
        None => vec![state.b.matrix.clone(); subjects.len()],
    };
    let res = minus2ll_importance(
        &design,
        &subjects,
        &gamma,
        &state.b.matrix,
        state.sigma * state.sigma,
        state.transition_width,
        &etas,
        &covs,
        is_samples,
        seed,
    )?;
    Ok(res.minus2ll)
}

/// Parameter count for AIC/BIC: fixed effects, free variance entries, and
/// the error SD.
fn parameter_count(n_fixed: usize, d: usize) -> usize {
    n_fixed + d + 1 + 1
}

/// Initial random-effect variances, scaled to the data.
fn initial_b(kind: ModelKind, data: &LongitudinalDataset) -> RandomEffectsCov {
    let ys: Vec<f64> = data
        .subjects
        .iter()
        .flat_map(|s| s.observations.iter().map(|o| o.outcome))
        .collect();
    let vy = sample_variance(&ys).max(1e-6);
    let (tlo, thi) = data.time_range();
    let rt = (thi - tlo).max(1.0);
    let vars: Vec<f64> = match kind {
        ModelKind::Smm => vec![0.3 * vy, 0.3 * vy],
        ModelKind::PmmAbrupt | ModelKind::PmmSmooth => {
            let slope_var = (4.0 * vy / (rt * rt)).max(1e-6);
            vec![0.3 * vy, slope_var, slope_var, (rt / 8.0) * (rt / 8.0)]
        }
    };
    RandomEffectsCov::diagonal(kind, &vars)
}

/// Weighted least squares for the fixed effects of random-bearing
/// coordinates against the accumulated psi statistics.
fn wls_update(
    design: &Design,
    a_mats: &[DMatrix<f64>],
    b_inv: &DMatrix<f64>,
    s_psi: &[DVector<f64>],
    gamma: &mut DVector<f64>,
) -> Result<()> {
    let p = design.wls_cols.len();
    let mut m = DMatrix::zeros(p, p);
    let mut z = DVector::zeros(p);
    for (a, s) in a_mats.iter().zip(s_psi) {
        let at_binv = a.transpose() * b_inv;
        m += &at_binv * a;
        z += at_binv * s;
    }
    let sol = m
        .cholesky()
        .ok_or_else(|| Error::SingularDesign("collinear covariate design".into()))?
        .solve(&z);
    for (pos, &col) in design.wls_cols.iter().enumerate() {
        gamma[col] = sol[pos];
    }
    Ok(())
}

/// Damped Gauss-Newton step on the residual sum of squares over the fixed
/// effects of coordinates without random effects.
fn gauss_newton_update(
    design: &Design,
    subjects: &[SubjectData],
    etas: &[DVector<f64>],
    gamma: &DVector<f64>,
    v: f64,
) -> DVector<f64> {
    use crate::model::{structural_gradient, structural_value, SubjectParams};

    let n_gn = design.gn_cols.len();
    let mut g = gamma.clone();
    if n_gn == 0 {
        return g;
    }

    let objective = |gam: &DVector<f64>| -> Option<f64> {
        let mut q = 0.0;
        for (subj, eta) in subjects.iter().zip(etas) {
            q += mcmc::subject_ssr(design, subj, gam, eta, v)?;
        }
        Some(q)
    };

    let mut q_cur = match objective(&g) {
        Some(q) => q,
        None => return g,
    };

    for _ in 0..GN_INNER_STEPS {
        let mut jtj = DMatrix::zeros(n_gn, n_gn);
        let mut jtr = DVector::zeros(n_gn);
        for (subj, eta) in subjects.iter().zip(etas) {
            let mu = design.mu(&g, &subj.x);
            let mut psi = mu;
            for (c, &k) in design.random_idx.iter().enumerate() {
                psi[k] += eta[c];
            }
            let p = SubjectParams { psi };
            for (j, &t) in subj.times.iter().enumerate() {
                let (f, grad) = match (
                    structural_value(design.kind, t, &p, v),
                    structural_gradient(design.kind, t, &p, v),
                ) {
                    (Ok(f), Ok(gr)) => (f, gr),
                    _ => return g,
                };
                let r = subj.ys[j] - f;
                let mut row = DVector::zeros(n_gn);
                for (pos, &col) in design.gn_cols.iter().enumerate() {
                    let (k, within) = col_block(design, col);
                    let chain = if within == 0 { 1.0 } else { subj.x[k][within - 1] };
                    row[pos] = grad[k] * chain;
                }
                jtj += &row * row.transpose();
                jtr += r * row;
            }
        }
        let ridge = 1e-8 * (jtj.trace() / n_gn as f64).max(1e-12);
        for i in 0..n_gn {
            jtj[(i, i)] += ridge;
        }
        let delta = match jtj.cholesky() {
            Some(ch) => ch.solve(&jtr),
            None => return g,
        };

        // Backtracking: halve until the objective improves and the
        // structural function stays evaluable for every subject.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let mut cand = g.clone();
            for (pos, &col) in design.gn_cols.iter().enumerate() {
                cand[col] += step * delta[pos];
            }
            if let Some(q_new) = objective(&cand) {
                if q_new <= q_cur {
                    g = cand;
                    q_cur = q_new;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    g
}

fn col_block(design: &Design, col: usize) -> (usize, usize) {
    for k in (0..4).rev() {
        if col >= design.offsets[k] {
            return (k, col - design.offsets[k]);
        }
    }
    unreachable!()
}

/// Fit a model by SAEM. Deterministic given the configuration seed.
pub fn fit(
    data: &LongitudinalDataset,
    model: &ModelSpec,
    start: &StartValues,
    config: &SaemConfig,
) -> Result<FittedModel> {
    let t0 = Instant::now();
    config.validate()?;
    start.validate(model.kind)?;

    let kind = model.kind;
    let cov_names: [Vec<String>; 4] = std::array::from_fn(|k| {
        model.predictors.betas[k]
            .iter()
            .map(|(n, _)| n.clone())
            .collect()
    });
    let design = Design::new(kind, cov_names);
    let subjects = prepare_subjects(data, &design)?;
    let n_subjects = subjects.len();
    let n_obs: usize = subjects.iter().map(SubjectData::n).sum();
    let d = design.d();
    let v = if kind == ModelKind::PmmSmooth {
        model.transition_width
    } else {
        0.0
    };
    let time_range = data.time_range();

    // Starting point: alphas from the start values, betas from the spec
    // (normally zero).
    let mut init_pred = model.predictors.clone();
    init_pred.alpha = start.values;
    let mut gamma = design.pack(&init_pred);
    let mut b = initial_b(kind, data).matrix;
    let free_pair = kind.free_cov_pair();
    let mut sigma2 = (model.sigma_eps * model.sigma_eps).max(SIGMA2_FLOOR);

    // The start must be evaluable for every subject.
    for subj in &subjects {
        if mcmc::subject_ssr(&design, subj, &gamma, &DVector::zeros(d), v).is_none() {
            return Err(Error::DomainError(format!(
                "structural function undefined at the start values for subject `{}`; \
                 for the sigmoidal model check that the midpoint start has the sign \
                 of the observation times",
                subj.id
            )));
        }
    }

    let a_mats: Vec<DMatrix<f64>> = subjects.iter().map(|s| design.a_matrix(&s.x)).collect();

    let mut chains: Vec<ChainState> = (0..n_subjects)
        .map(|i| {
            ChainState::new(
                d,
                config.proposal_scale,
                stream_rng(config.rng_seed, StreamDomain::Chain, i as u64),
            )
        })
        .collect();

    // Stochastic-approximation state.
    let mut s_psi: Vec<DVector<f64>> = vec![DVector::zeros(d); n_subjects];
    let mut s_psi2: Vec<DMatrix<f64>> = vec![DMatrix::zeros(d, d); n_subjects];
    let mut s_res = 0.0f64;
    let mut last_ssr: Vec<f64> = subjects
        .iter()
        .map(|s| mcmc::subject_ssr(&design, s, &gamma, &DVector::zeros(d), v).unwrap_or(0.0))
        .collect();

    let layout = ThetaLayout {
        n_fixed: design.n_fixed,
        d,
        free_pair,
    };
    let mut louis = LouisAccumulator::new(n_subjects, &layout);

    let trace_names: Vec<String> = {
        let mut names = design.labels();
        let pnames = kind.param_names();
        for &k in &design.random_idx {
            names.push(format!("omega2.{}", pnames[k]));
        }
        names.push(format!(
            "cov.{}.{}",
            pnames[design.random_idx[free_pair.0]], pnames[design.random_idx[free_pair.1]]
        ));
        names.push("error".to_string());
        names
    };
    let mut trace_rows: Vec<Vec<f64>> = Vec::with_capacity(config.k1 + config.k2);
    let record_trace =
        |rows: &mut Vec<Vec<f64>>, gamma: &DVector<f64>, b: &DMatrix<f64>, sigma2: f64| {
            let mut row: Vec<f64> = gamma.iter().cloned().collect();
            for c in 0..d {
                row.push(b[(c, c)]);
            }
            row.push(b[free_pair]);
            row.push(sigma2.sqrt());
            rows.push(row);
        };

    let total_iters = config.k1 + config.k2;
    for iter in 1..=total_iters {
        record_trace(&mut trace_rows, &gamma, &b, sigma2);

        let gain = if iter <= config.k1 {
            1.0
        } else {
            ((iter - config.k1) as f64).powf(-config.step_exponent)
        };
        let in_phase1 = iter <= config.k1;
        // Variance annealing runs through the first half of exploration.
        let annealing = iter <= config.k1 / 2;

        let b_chol = chol_with_jitter(&b)?;
        let b_inv = b_chol.inverse();
        let sweep = SweepParams {
            design: &design,
            gamma: &gamma,
            b_inv: &b_inv,
            b_chol: &b_chol,
            sigma2,
            transition_width: v,
            time_range,
        };

        // Simulation step: per-subject chains, order-independent.
        let sweep_ref = &sweep;
        let subj_ref = &subjects;
        let results: Vec<Option<f64>> = chains
            .par_iter_mut()
            .enumerate()
            .map(|(i, chain)| {
                transition_sweep(
                    sweep_ref,
                    &subj_ref[i],
                    chain,
                    config.mcmc_steps,
                    in_phase1,
                    iter,
                );
                mcmc::subject_ssr(&design, &subj_ref[i], &gamma, &chain.eta, v)
            })
            .collect();

        // Stochastic approximation of the sufficient statistics.
        let mut total_ssr = 0.0;
        for (i, ssr) in results.iter().enumerate() {
            // A rare undefined state (e.g. a stranded changepoint right after
            // a population update) keeps its previous contribution.
            let ssr = ssr.unwrap_or(last_ssr[i]);
            last_ssr[i] = ssr;
            total_ssr += ssr;
            let mu = design.mu(&gamma, &subjects[i].x);
            let mut psi_r = DVector::zeros(d);
            for (c, &k) in design.random_idx.iter().enumerate() {
                psi_r[c] = mu[k] + chains[i].eta[c];
            }
            let outer = &psi_r * psi_r.transpose();
            let ds = gain * (&psi_r - &s_psi[i]);
            s_psi[i] += ds;
            let d2 = gain * (outer - &s_psi2[i]);
            s_psi2[i] += d2;
        }
        s_res += gain * (total_ssr - s_res);

        // Louis accumulation during the smoothing phase, at the current
        // parameters and draws.
        if !in_phase1 {
            for i in 0..n_subjects {
                if let Some(der) = subject_derivatives(
                    &design,
                    &layout,
                    &subjects[i],
                    &a_mats[i],
                    &gamma,
                    &chains[i].eta,
                    &b_inv,
                    sigma2,
                    v,
                ) {
                    louis.update(i, gain, &der.score, &der.hessian);
                }
            }
        }

        // Maximization step.
        wls_update(&design, &a_mats, &b_inv, &s_psi, &mut gamma)?;
        if !design.gn_cols.is_empty() {
            let etas: Vec<DVector<f64>> = chains.iter().map(|c| c.eta.clone()).collect();
            let g_new = gauss_newton_update(&design, &subjects, &etas, &gamma, v);
            for &col in &design.gn_cols {
                gamma[col] += gain * (g_new[col] - gamma[col]);
            }
        }

        let mut b_new = DMatrix::zeros(d, d);
        for i in 0..n_subjects {
            let mu = design.mu(&gamma, &subjects[i].x);
            let mut mu_r = DVector::zeros(d);
            for (c, &k) in design.random_idx.iter().enumerate() {
                mu_r[c] = mu[k];
            }
            b_new += &s_psi2[i] - &mu_r * s_psi[i].transpose() - &s_psi[i] * mu_r.transpose()
                + &mu_r * mu_r.transpose();
        }
        b_new /= n_subjects as f64;
        // Masked structure: keep the diagonal and the single free covariance.
        // During exploration the variances may not shrink faster than the
        // annealing rate, which keeps the chains mobile until the fixed
        // effects have found their basin.
        let mut masked = DMatrix::zeros(d, d);
        for c in 0..d {
            let mut var = b_new[(c, c)].max(VAR_FLOOR);
            if annealing {
                var = var.max(ANNEAL_RATE * b[(c, c)]);
            }
            masked[(c, c)] = var;
        }
        let (fi, fj) = free_pair;
        let cov_bound = MAX_CORRELATION * (masked[(fi, fi)] * masked[(fj, fj)]).sqrt();
        masked[(fi, fj)] = b_new[(fi, fj)].clamp(-cov_bound, cov_bound);
        masked[(fj, fi)] = masked[(fi, fj)];
        b = masked;

        let mut sigma2_new = (s_res / n_obs as f64).max(SIGMA2_FLOOR);
        if in_phase1 {
            sigma2_new = sigma2_new.max(ANNEAL_RATE * sigma2);
        }
        sigma2 = sigma2_new;

        if gamma.iter().any(|g| !g.is_finite() || g.abs() > MAX_ABS_PARAM)
            || !sigma2.is_finite()
        {
            return Err(Error::NonConvergence(format!(
                "parameter trace diverged at iteration {iter}"
            )));
        }
    }

    let mut warnings: Vec<String> = Vec::new();

    // Final long conditional pass at the estimates.
    let b_chol = chol_with_jitter(&b)?;
    let b_inv = b_chol.inverse();
    let sweep = SweepParams {
        design: &design,
        gamma: &gamma,
        b_inv: &b_inv,
        b_chol: &b_chol,
        sigma2,
        transition_width: v,
        time_range,
    };
    let sweep_ref = &sweep;
    let subj_ref = &subjects;
    let chain_etas: Vec<DVector<f64>> = chains.iter().map(|c| c.eta.clone()).collect();
    let conditionals: Vec<mcmc::ConditionalSummary> = chain_etas
        .par_iter()
        .enumerate()
        .map(|(i, eta)| {
            conditional_pass(
                sweep_ref,
                &subj_ref[i],
                eta,
                stream_rng(config.rng_seed, StreamDomain::FinalPass, i as u64),
            )
        })
        .collect();

    let eta_hats: Vec<DVector<f64>> = conditionals.iter().map(|c| c.eta_mean.clone()).collect();
    let eta_covs: Vec<DMatrix<f64>> = conditionals.iter().map(|c| c.eta_cov.clone()).collect();

    // Standard errors: Louis, falling back to the linearized information.
    let info = louis.observed_information();
    let (se_vec, se_method) = match se_from_information(&info) {
        Some(se) => (se, SeMethod::Louis),
        None => {
            warnings.push(
                "Louis information not positive definite; standard errors use the \
                 linearized-model information"
                    .to_string(),
            );
            let lin_info = fim::linearized_information(
                &design, &layout, &subjects, &gamma, &b, sigma2, v, &eta_hats,
            )?;
            let se = se_from_information(&lin_info).ok_or_else(|| {
                Error::SingularCovariance("linearized information not invertible".into())
            })?;
            (se, SeMethod::LinearizedFallback)
        }
    };

    // Likelihoods.
    let m2ll_lin = minus2ll_linearization(&design, &subjects, &gamma, &b, sigma2, v, &eta_hats)?;
    let is_res = minus2ll_importance(
        &design,
        &subjects,
        &gamma,
        &b,
        sigma2,
        v,
        &eta_hats,
        &eta_covs,
        config.is_samples,
        config.rng_seed,
    )?;
    for (id, n) in &is_res.retries {
        warnings.push(format!(
            "importance sampling for subject `{id}` needed {n} widened retry(ies)"
        ));
    }

    let n_params = parameter_count(design.n_fixed, d);
    let ln_n = (n_subjects as f64).ln();
    let aic = |m2ll: f64| m2ll + 2.0 * n_params as f64;
    let bic = |m2ll: f64| m2ll + n_params as f64 * ln_n;

    // Assemble subject estimates.
    let subject_estimates: Vec<SubjectEstimate> = subjects
        .iter()
        .zip(&eta_hats)
        .map(|(subj, eta)| {
            let mu = design.mu(&gamma, &subj.x);
            let mut psi = mu;
            for (c, &k) in design.random_idx.iter().enumerate() {
                psi[k] += eta[c];
            }
            SubjectEstimate {
                id: subj.id.clone(),
                psi,
                eta: eta.iter().cloned().collect(),
            }
        })
        .collect();

    // Wald tests for the fixed effects.
    let sigma = sigma2.sqrt();
    let fixed_estimates: Vec<f64> = gamma.iter().cloned().collect();
    let fixed_se: Vec<f64> = (0..design.n_fixed).map(|c| se_vec[c]).collect();
    let fixed_pvalues: Vec<String> = fixed_estimates
        .iter()
        .zip(&fixed_se)
        .map(|(&est, &se)| {
            if se > 0.0 && se.is_finite() {
                wald_pvalue(est, se).expect("positive finite se")
            } else {
                "NA".to_string()
            }
        })
        .collect();

    let pnames = kind.param_names();
    let mut random_labels: Vec<String> = design
        .random_idx
        .iter()
        .map(|&k| format!("omega2.{}", pnames[k]))
        .collect();
    random_labels.push(format!(
        "cov.{}.{}",
        pnames[design.random_idx[free_pair.0]], pnames[design.random_idx[free_pair.1]]
    ));
    let mut random_estimates: Vec<f64> = (0..d).map(|c| b[(c, c)]).collect();
    random_estimates.push(b[free_pair]);
    let mut random_se: Vec<f64> = (0..d).map(|c| se_vec[layout.b_entry(c)]).collect();
    random_se.push(se_vec[layout.b_entry(d)]);
    // Delta method from sigma^2 to sigma.
    let sigma_se = se_vec[layout.sigma2()] / (2.0 * sigma);

    if n_subjects < 50 {
        warnings.push(format!(
            "small sample: {n_subjects} subjects (fewer than 50)"
        ));
    }
    for k in 0..4 {
        if design.cov_names[k].len() > 2 {
            warnings.push(format!(
                "parameter `{}` carries {} covariates (more than 2)",
                pnames[k],
                design.cov_names[k].len()
            ));
        }
    }

    let b_fitted = RandomEffectsCov {
        matrix: b,
        free_pair,
    };

    Ok(FittedModel {
        kind,
        transition_width: v,
        predictors: design.unpack(&gamma),
        b: b_fitted,
        sigma,
        fixed_labels: design.labels(),
        fixed_estimates,
        fixed_se,
        fixed_pvalues,
        random_labels,
        random_estimates,
        random_se,
        sigma_se,
        minus2ll_lin: m2ll_lin,
        aic_lin: aic(m2ll_lin),
        bic_lin: bic(m2ll_lin),
        minus2ll_is: is_res.minus2ll,
        aic_is: aic(is_res.minus2ll),
        bic_is: bic(is_res.minus2ll),
        is_mc_se: is_res.mc_se,
        n_params,
        trace: Trace {
            names: trace_names,
            rows: trace_rows,
        },
        subject_estimates,
        eta_covs,
        start: *start,
        elapsed_seconds: t0.elapsed().as_secs_f64(),
        warnings,
        se_method,
        n_subjects,
        n_obs,
        time_range,
        covariate_values: covariate_columns(data),
        config: config.clone(),
    })
}
