//! Standard errors: Louis accumulation of the observed Fisher information
//! during the smoothing phase, with a linearized-model information matrix as
//! fallback when the Louis matrix is not positive definite.
//!
//! The parameter vector is `(gamma, free entries of B, sigma^2)`; the free
//! B entries are the diagonal followed by the single free covariance. Scores
//! are exact; residual Hessian blocks drop the curvature term (Gauss-Newton
//! approximation), which has conditional expectation zero at the maximizer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{structural_gradient, structural_value, SubjectParams};

use super::design::{Design, SubjectData};

/// Index bookkeeping for the information-matrix parameter vector.
pub(crate) struct ThetaLayout {
    pub n_fixed: usize,
    pub d: usize,
    pub free_pair: (usize, usize),
}

impl ThetaLayout {
    pub fn dim(&self) -> usize {
        self.n_fixed + self.d + 1 + 1
    }

    pub fn b_entry(&self, m: usize) -> usize {
        self.n_fixed + m
    }

    pub fn n_b_free(&self) -> usize {
        self.d + 1
    }

    pub fn sigma2(&self) -> usize {
        self.n_fixed + self.d + 1
    }

    /// Symmetric derivative matrix of B for free entry `m`.
    pub fn e_matrix(&self, m: usize) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.d, self.d);
        if m < self.d {
            e[(m, m)] = 1.0;
        } else {
            let (i, j) = self.free_pair;
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
        }
        e
    }
}

/// Per-subject running averages of the score, its outer product, and the
/// complete-data Hessian.
pub(crate) struct LouisAccumulator {
    pub score: Vec<DVector<f64>>,
    pub score_sq: Vec<DMatrix<f64>>,
    pub hessian: Vec<DMatrix<f64>>,
    dim: usize,
}

impl LouisAccumulator {
    pub fn new(n_subjects: usize, layout: &ThetaLayout) -> Self {
        let dim = layout.dim();
        Self {
            score: vec![DVector::zeros(dim); n_subjects],
            score_sq: vec![DMatrix::zeros(dim, dim); n_subjects],
            hessian: vec![DMatrix::zeros(dim, dim); n_subjects],
            dim,
        }
    }

    pub fn update(&mut self, i: usize, gain: f64, score: &DVector<f64>, hess: &DMatrix<f64>) {
        let outer = score * score.transpose();
        let ds = gain * (score - &self.score[i]);
        self.score[i] += ds;
        let dsq = gain * (outer - &self.score_sq[i]);
        self.score_sq[i] += dsq;
        let dh = gain * (hess - &self.hessian[i]);
        self.hessian[i] += dh;
    }

    /// Louis estimate of the observed information:
    /// `sum_i [ -<H_i> - <s_i s_i'> + <s_i><s_i>' ]`.
    pub fn observed_information(&self) -> DMatrix<f64> {
        let mut info = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.score.len() {
            info -= &self.hessian[i];
            info -= &self.score_sq[i];
            info += &self.score[i] * self.score[i].transpose();
        }
        info
    }
}

/// Complete-data score and Gauss-Newton Hessian for one subject at the
/// current draw.
pub(crate) struct SubjectDerivatives {
    pub score: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn subject_derivatives(
    design: &Design,
    layout: &ThetaLayout,
    subj: &SubjectData,
    a_mat: &DMatrix<f64>,
    gamma: &DVector<f64>,
    eta: &DVector<f64>,
    b_inv: &DMatrix<f64>,
    sigma2: f64,
    v: f64,
) -> Option<SubjectDerivatives> {
    let dim = layout.dim();
    let mut score = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);

    let mu = design.mu(gamma, &subj.x);
    let mut psi = mu;
    for (c, &k) in design.random_idx.iter().enumerate() {
        psi[k] += eta[c];
    }
    let p = SubjectParams { psi };

    // Residual pass: SSR, and per-observation gradients over the
    // Gauss-Newton columns.
    let n_gn = design.gn_cols.len();
    let mut ssr = 0.0;
    let mut gn_grad = DVector::zeros(n_gn);
    let mut gn_gram = DMatrix::zeros(n_gn, n_gn);
    for (j, &t) in subj.times.iter().enumerate() {
        let f = structural_value(design.kind, t, &p, v).ok()?;
        let r = subj.ys[j] - f;
        ssr += r * r;
        if n_gn > 0 {
            let g = structural_gradient(design.kind, t, &p, v).ok()?;
            let mut row = DVector::zeros(n_gn);
            for (pos, &col) in design.gn_cols.iter().enumerate() {
                // Map the gamma column back to (parameter, covariate slot).
                let (k, within) = design_col(design, col);
                let chain = if within == 0 { 1.0 } else { subj.x[k][within - 1] };
                row[pos] = g[k] * chain;
            }
            gn_grad += r * &row;
            gn_gram += &row * row.transpose();
        }
    }

    // Fixed effects of random-bearing parameters (prior part).
    let w = b_inv * eta;
    let grad_r = a_mat.transpose() * &w;
    for (pos, &col) in design.wls_cols.iter().enumerate() {
        score[col] = grad_r[pos];
    }
    let h_rr = -(a_mat.transpose() * b_inv * a_mat);
    for (pi, &ci) in design.wls_cols.iter().enumerate() {
        for (pj, &cj) in design.wls_cols.iter().enumerate() {
            hess[(ci, cj)] = h_rr[(pi, pj)];
        }
    }

    // Fixed effects of parameters without random effects (residual part).
    for (pos, &col) in design.gn_cols.iter().enumerate() {
        score[col] = gn_grad[pos] / sigma2;
        hess[(col, layout.sigma2())] = -gn_grad[pos] / (sigma2 * sigma2);
        hess[(layout.sigma2(), col)] = hess[(col, layout.sigma2())];
        for (pos2, &col2) in design.gn_cols.iter().enumerate() {
            hess[(col, col2)] = -gn_gram[(pos, pos2)] / sigma2;
        }
    }

    // Variance entries of B.
    let ww = &w * w.transpose();
    for m in 0..layout.n_b_free() {
        let e = layout.e_matrix(m);
        let idx = layout.b_entry(m);
        score[idx] = 0.5 * ((&ww - b_inv).component_mul(&e)).sum();
        // Cross block with the random-bearing fixed effects:
        // d/db [A' B^-1 eta] = -A' B^-1 E B^-1 eta.
        let cross = -(a_mat.transpose() * b_inv * &e * &w);
        for (pos, &col) in design.wls_cols.iter().enumerate() {
            hess[(col, idx)] = cross[pos];
            hess[(idx, col)] = cross[pos];
        }
        for m2 in 0..layout.n_b_free() {
            let e2 = layout.e_matrix(m2);
            let idx2 = layout.b_entry(m2);
            let ce2 = b_inv * &e2;
            let term = -(&ce2 * &ww) - (&ww * e2.transpose() * b_inv) + (&ce2 * b_inv);
            hess[(idx, idx2)] = 0.5 * term.component_mul(&e).sum();
        }
    }

    // Error variance.
    let n = subj.n() as f64;
    let s2 = layout.sigma2();
    score[s2] = -0.5 * n / sigma2 + 0.5 * ssr / (sigma2 * sigma2);
    hess[(s2, s2)] = 0.5 * n / (sigma2 * sigma2) - ssr / (sigma2 * sigma2 * sigma2);

    Some(SubjectDerivatives {
        score,
        hessian: hess,
    })
}

/// (parameter index, slot within block) of a gamma column; slot 0 is alpha.
fn design_col(design: &Design, col: usize) -> (usize, usize) {
    for k in (0..4).rev() {
        if col >= design.offsets[k] {
            return (k, col - design.offsets[k]);
        }
    }
    unreachable!()
}

/// Expected information of the linearized Gaussian model; the classic Wald
/// matrix for nonlinear mixed models and the fallback SE source.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linearized_information(
    design: &Design,
    layout: &ThetaLayout,
    subjects: &[SubjectData],
    gamma: &DVector<f64>,
    b: &DMatrix<f64>,
    sigma2: f64,
    v: f64,
    eta_hats: &[DVector<f64>],
) -> Result<DMatrix<f64>> {
    let dim = layout.dim();
    let d = layout.d;
    let mut info = DMatrix::zeros(dim, dim);

    for (subj, eta_hat) in subjects.iter().zip(eta_hats) {
        let mu = design.mu(gamma, &subj.x);
        let mut psi = mu;
        for (c, &k) in design.random_idx.iter().enumerate() {
            psi[k] += eta_hat[c];
        }
        let p = SubjectParams { psi };
        let n = subj.n();

        let mut jac_eta = DMatrix::zeros(n, d);
        let mut jac_gamma = DMatrix::zeros(n, layout.n_fixed);
        for (j, &t) in subj.times.iter().enumerate() {
            let g = structural_gradient(design.kind, t, &p, v)
                .map_err(|e| Error::DomainError(format!("subject `{}`: {e}", subj.id)))?;
            for (c, &k) in design.random_idx.iter().enumerate() {
                jac_eta[(j, c)] = g[k];
            }
            for col in 0..layout.n_fixed {
                let (k, within) = design_col(design, col);
                let chain = if within == 0 { 1.0 } else { subj.x[k][within - 1] };
                jac_gamma[(j, col)] = g[k] * chain;
            }
        }

        let vmat = &jac_eta * b * jac_eta.transpose() + DMatrix::identity(n, n) * sigma2;
        let chol = nalgebra::Cholesky::new(vmat)
            .ok_or_else(|| Error::SingularCovariance(subj.id.clone()))?;
        let vinv = chol.inverse();

        // Mean block.
        let gvg = jac_gamma.transpose() * &vinv * &jac_gamma;
        for i in 0..layout.n_fixed {
            for j in 0..layout.n_fixed {
                info[(i, j)] += gvg[(i, j)];
            }
        }

        // Variance blocks: dV/db_m = F E_m F', dV/dsigma2 = I.
        let mut dv: Vec<DMatrix<f64>> = Vec::with_capacity(layout.n_b_free() + 1);
        for m in 0..layout.n_b_free() {
            let e = layout.e_matrix(m);
            dv.push(&jac_eta * e * jac_eta.transpose());
        }
        dv.push(DMatrix::identity(n, n));
        for (a, dva) in dv.iter().enumerate() {
            let via = &vinv * dva;
            for (bb, dvb) in dv.iter().enumerate().skip(a) {
                let vib = &vinv * dvb;
                let tr = (&via * &vib).trace();
                let ia = if a < layout.n_b_free() {
                    layout.b_entry(a)
                } else {
                    layout.sigma2()
                };
                let ib = if bb < layout.n_b_free() {
                    layout.b_entry(bb)
                } else {
                    layout.sigma2()
                };
                info[(ia, ib)] += 0.5 * tr;
                if ia != ib {
                    info[(ib, ia)] += 0.5 * tr;
                }
            }
        }
    }
    Ok(info)
}

/// Standard errors from an information matrix: sqrt of the diagonal of the
/// inverse. `None` when the matrix is not positive definite.
pub(crate) fn se_from_information(info: &DMatrix<f64>) -> Option<DVector<f64>> {
    let chol = nalgebra::Cholesky::new(info.clone())?;
    let inv = chol.inverse();
    let mut se = DVector::zeros(info.nrows());
    for i in 0..info.nrows() {
        if inv[(i, i)] < 0.0 {
            return None;
        }
        se[i] = inv[(i, i)].sqrt();
    }
    Some(se)
}

