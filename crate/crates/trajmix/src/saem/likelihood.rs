//! Marginal log-likelihood: linearization and importance sampling.
//!
//! The linearized value expands the structural function to first order in the
//! random effects around their conditional estimates, which yields a Gaussian
//! marginal per subject. The importance-sampled value integrates the random
//! effects by Monte Carlo with a Gaussian proposal centered at the
//! conditional mean with the conditional covariance; when the effective
//! sample size collapses below 2% of the draws the proposal is widened and
//! the subject retried, erroring after three retries.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{structural_gradient, structural_value, SubjectParams};

use super::design::{Design, SubjectData};
use super::mcmc::{stream_rng, subject_ssr, StreamDomain};

const LN_2PI: f64 = 1.8378770664093455;
/// Random-effect variances below this are treated as structurally absent.
pub(crate) const DEGENERATE_VAR: f64 = 1e-12;
const MIN_ESS_FRACTION: f64 = 0.02;
const MAX_IS_RETRIES: usize = 3;

/// Cholesky with escalating diagonal jitter; errors only for wildly invalid
/// matrices.
pub(crate) fn chol_with_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    let mut jitter = 0.0f64;
    for _ in 0..16 {
        let cand = if jitter == 0.0 {
            m.clone()
        } else {
            m + DMatrix::identity(n, n) * jitter
        };
        if let Some(c) = Cholesky::new(cand) {
            return Ok(c);
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
    }
    Err(Error::SingularCovariance(
        "random-effects covariance is not positive definite".into(),
    ))
}

pub(crate) fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Gaussian data log-likelihood of one subject at a given eta, with all
/// constants included.
pub(crate) fn data_loglik(
    design: &Design,
    subj: &SubjectData,
    gamma: &DVector<f64>,
    eta: &DVector<f64>,
    sigma2: f64,
    v: f64,
) -> Option<f64> {
    let ssr = subject_ssr(design, subj, gamma, eta, v)?;
    let n = subj.n() as f64;
    Some(-0.5 * n * (LN_2PI + sigma2.ln()) - 0.5 * ssr / sigma2)
}

/// Per-subject structural values and the Jacobian with respect to the random
/// coordinates, evaluated at psi-hat.
fn linearization_pieces(
    design: &Design,
    subj: &SubjectData,
    gamma: &DVector<f64>,
    eta_hat: &DVector<f64>,
    v: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mu = design.mu(gamma, &subj.x);
    let mut psi = mu;
    for (c, &k) in design.random_idx.iter().enumerate() {
        psi[k] += eta_hat[c];
    }
    let p = SubjectParams { psi };
    let n = subj.n();
    let d = design.d();
    let mut f = DVector::zeros(n);
    let mut jac = DMatrix::zeros(n, d);
    for (j, &t) in subj.times.iter().enumerate() {
        f[j] = structural_value(design.kind, t, &p, v)
            .map_err(|e| Error::DomainError(format!("subject `{}`: {e}", subj.id)))?;
        let g = structural_gradient(design.kind, t, &p, v)
            .map_err(|e| Error::DomainError(format!("subject `{}`: {e}", subj.id)))?;
        for (c, &k) in design.random_idx.iter().enumerate() {
            jac[(j, c)] = g[k];
        }
    }
    Ok((f, jac))
}

/// -2 log-likelihood of the model linearized in the random effects around
/// the conditional estimates.
pub(crate) fn minus2ll_linearization(
    design: &Design,
    subjects: &[SubjectData],
    gamma: &DVector<f64>,
    b: &DMatrix<f64>,
    sigma2: f64,
    v: f64,
    eta_hats: &[DVector<f64>],
) -> Result<f64> {
    let mut total = 0.0;
    for (subj, eta_hat) in subjects.iter().zip(eta_hats) {
        let (f, jac) = linearization_pieces(design, subj, gamma, eta_hat, v)?;
        let n = subj.n();
        // Marginal mean: f(psi_hat) - J eta_hat (random effects centered at 0).
        let mean = &f - &jac * eta_hat;
        let vmat = &jac * b * jac.transpose() + DMatrix::identity(n, n) * sigma2;
        let chol = Cholesky::new(vmat)
            .ok_or_else(|| Error::SingularCovariance(subj.id.clone()))?;
        let y = DVector::from_column_slice(&subj.ys);
        let r = y - mean;
        let quad = chol.solve(&r).dot(&r);
        total += n as f64 * LN_2PI + chol_logdet(&chol) + quad;
    }
    Ok(total)
}

pub(crate) struct ImportanceResult {
    pub minus2ll: f64,
    /// Monte-Carlo standard error of the -2LL estimate.
    pub mc_se: f64,
    /// Subjects that needed a widened proposal, with retry counts.
    pub retries: Vec<(String, usize)>,
}

/// -2 log-likelihood by importance sampling over the random effects.
///
/// Deterministic given `seed`; each subject uses its own derived stream.
#[allow(clippy::too_many_arguments)]
pub(crate) fn minus2ll_importance(
    design: &Design,
    subjects: &[SubjectData],
    gamma: &DVector<f64>,
    b: &DMatrix<f64>,
    sigma2: f64,
    v: f64,
    eta_hats: &[DVector<f64>],
    eta_covs: &[DMatrix<f64>],
    is_samples: usize,
    seed: u64,
) -> Result<ImportanceResult> {
    let d = design.d();
    let degenerate = (0..d).all(|c| b[(c, c)] < DEGENERATE_VAR);

    let mut total = 0.0;
    let mut var_sum = 0.0;
    let mut retries = Vec::new();

    if degenerate {
        // The prior carries no mass away from the mean: the integral
        // collapses to the plain likelihood at eta = 0.
        for subj in subjects {
            let zero = DVector::zeros(d);
            let ll = data_loglik(design, subj, gamma, &zero, sigma2, v).ok_or_else(|| {
                Error::DomainError(format!("subject `{}`: structural value undefined", subj.id))
            })?;
            total += ll;
        }
        return Ok(ImportanceResult {
            minus2ll: -2.0 * total,
            mc_se: 0.0,
            retries,
        });
    }

    let b_chol = chol_with_jitter(b)?;
    let b_logdet = chol_logdet(&b_chol);
    let prior_quad = |eta: &DVector<f64>| -> f64 { b_chol.solve(eta).dot(eta) };

    for (i, subj) in subjects.iter().enumerate() {
        let eta_hat = &eta_hats[i];
        let mut attempt = 0usize;
        let log_mean_w;
        let se_i;
        loop {
            let widen = 1.5f64.powi(attempt as i32);
            // Proposal covariance: conditional covariance, repaired to be
            // positive definite and widened on retries.
            let mut prop = eta_covs[i].clone() * widen;
            for c in 0..d {
                prop[(c, c)] = prop[(c, c)].max(1e-12);
            }
            let prop_chol = match Cholesky::new(prop.clone()) {
                Some(c) => c,
                None => {
                    let mut diag = DMatrix::zeros(d, d);
                    for c in 0..d {
                        diag[(c, c)] = prop[(c, c)];
                    }
                    Cholesky::new(diag).expect("diagonal with positive entries")
                }
            };
            let prop_logdet = chol_logdet(&prop_chol);

            let mut rng = stream_rng(
                seed,
                StreamDomain::Importance,
                (i as u64) * 8 + attempt as u64,
            );
            let mut logw = Vec::with_capacity(is_samples);
            for _ in 0..is_samples {
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let eta = eta_hat + prop_chol.l() * &z;
                let ll = match data_loglik(design, subj, gamma, &eta, sigma2, v) {
                    Some(l) => l,
                    None => f64::NEG_INFINITY,
                };
                let lp = -0.5 * (d as f64 * LN_2PI + b_logdet + prior_quad(&eta));
                let diff = &eta - eta_hat;
                let lq = -0.5
                    * (d as f64 * LN_2PI + prop_logdet + prop_chol.solve(&diff).dot(&diff));
                logw.push(ll + lp - lq);
            }
            let lse = logsumexp(&logw);
            if !lse.is_finite() {
                if attempt >= MAX_IS_RETRIES {
                    return Err(Error::DegenerateWeights {
                        retries: attempt,
                        ess: 0.0,
                    });
                }
                attempt += 1;
                continue;
            }
            let lse2 = logsumexp(&logw.iter().map(|w| 2.0 * w).collect::<Vec<f64>>());
            let ess = (2.0 * lse - lse2).exp();
            if ess < MIN_ESS_FRACTION * is_samples as f64 {
                if attempt >= MAX_IS_RETRIES {
                    return Err(Error::DegenerateWeights {
                        retries: attempt,
                        ess,
                    });
                }
                attempt += 1;
                continue;
            }
            log_mean_w = lse - (is_samples as f64).ln();
            // Var(ln mean w) ~ (1/ESS - 1/M), a delta-method estimate.
            se_i = (1.0 / ess - 1.0 / is_samples as f64).max(0.0).sqrt();
            break;
        }
        if attempt > 0 {
            retries.push((subj.id.clone(), attempt));
        }
        total += log_mean_w;
        var_sum += se_i * se_i;
    }

    Ok(ImportanceResult {
        minus2ll: -2.0 * total,
        mc_se: 2.0 * var_sum.sqrt(),
        retries,
    })
}
