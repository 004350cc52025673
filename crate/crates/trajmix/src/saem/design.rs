//! Fixed-effect layout and per-subject designs used by the estimation engine.
//!
//! The fixed-effect vector `gamma` stacks, for each structural parameter k,
//! the mean `alpha_k` followed by that parameter's covariate coefficients.
//! Random effects live on the subset of psi coordinates the model family
//! declares random; `gamma` columns are split into the block that enters the
//! random-effect prior (updated in closed form) and the remainder (updated by
//! damped Gauss-Newton on the residual sum of squares).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::model::{ModelKind, ParamPredictorSpec};

/// Layout of the stacked fixed-effect vector.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub kind: ModelKind,
    pub cov_names: [Vec<String>; 4],
    /// Start of each parameter's block within gamma.
    pub offsets: [usize; 4],
    pub n_fixed: usize,
    /// Psi coordinate of each random effect, ascending.
    pub random_idx: Vec<usize>,
    /// Gamma columns belonging to random-bearing parameters.
    pub wls_cols: Vec<usize>,
    /// Gamma columns belonging to parameters without random effects.
    pub gn_cols: Vec<usize>,
}

impl Design {
    pub fn new(kind: ModelKind, cov_names: [Vec<String>; 4]) -> Self {
        let mut offsets = [0usize; 4];
        let mut n = 0;
        for k in 0..4 {
            offsets[k] = n;
            n += 1 + cov_names[k].len();
        }
        let mask = kind.random_mask();
        let mut wls_cols = Vec::new();
        let mut gn_cols = Vec::new();
        for k in 0..4 {
            let block = offsets[k]..offsets[k] + 1 + cov_names[k].len();
            if mask[k] {
                wls_cols.extend(block);
            } else {
                gn_cols.extend(block);
            }
        }
        Self {
            kind,
            cov_names,
            offsets,
            n_fixed: n,
            random_idx: kind.random_indices(),
            wls_cols,
            gn_cols,
        }
    }

    pub fn d(&self) -> usize {
        self.random_idx.len()
    }

    /// Pack (alpha, betas) into gamma.
    pub fn pack(&self, predictors: &ParamPredictorSpec) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_fixed);
        for k in 0..4 {
            g[self.offsets[k]] = predictors.alpha[k];
            for (j, (_, coef)) in predictors.betas[k].iter().enumerate() {
                g[self.offsets[k] + 1 + j] = *coef;
            }
        }
        g
    }

    /// Unpack gamma into (alpha, betas) with the design's covariate names.
    pub fn unpack(&self, gamma: &DVector<f64>) -> ParamPredictorSpec {
        let mut alpha = [0.0; 4];
        let mut betas: [Vec<(String, f64)>; 4] = Default::default();
        for k in 0..4 {
            alpha[k] = gamma[self.offsets[k]];
            betas[k] = self.cov_names[k]
                .iter()
                .enumerate()
                .map(|(j, n)| (n.clone(), gamma[self.offsets[k] + 1 + j]))
                .collect();
        }
        ParamPredictorSpec {
            alpha,
            betas,
            random_mask: self.kind.random_mask(),
        }
    }

    /// Human-readable label of one gamma entry, e.g. `slope1` or
    /// `beta_ageDeath90(slope1)`.
    pub fn label(&self, col: usize) -> String {
        let names = self.kind.param_names();
        for k in 0..4 {
            let len = 1 + self.cov_names[k].len();
            if col >= self.offsets[k] && col < self.offsets[k] + len {
                let within = col - self.offsets[k];
                return if within == 0 {
                    names[k].to_string()
                } else {
                    format!("beta_{}({})", self.cov_names[k][within - 1], names[k])
                };
            }
        }
        unreachable!("gamma column out of range")
    }

    /// Labels of all gamma entries in psi order.
    pub fn labels(&self) -> Vec<String> {
        (0..self.n_fixed).map(|c| self.label(c)).collect()
    }

    /// Structural-parameter predictor for one subject.
    pub fn mu(&self, gamma: &DVector<f64>, x: &[Vec<f64>; 4]) -> [f64; 4] {
        let mut mu = [0.0; 4];
        for k in 0..4 {
            let mut v = gamma[self.offsets[k]];
            for (j, &xv) in x[k].iter().enumerate() {
                v += gamma[self.offsets[k] + 1 + j] * xv;
            }
            mu[k] = v;
        }
        mu
    }

    /// Design matrix of the random coordinates against the WLS columns:
    /// row c gives d(mu_{random_idx[c]})/d(gamma[wls_cols]).
    pub fn a_matrix(&self, x: &[Vec<f64>; 4]) -> DMatrix<f64> {
        let d = self.d();
        let p = self.wls_cols.len();
        let mut a = DMatrix::zeros(d, p);
        for (c, &k) in self.random_idx.iter().enumerate() {
            for (col_pos, &col) in self.wls_cols.iter().enumerate() {
                if col == self.offsets[k] {
                    a[(c, col_pos)] = 1.0;
                } else if col > self.offsets[k] && col < self.offsets[k] + 1 + self.cov_names[k].len()
                {
                    a[(c, col_pos)] = x[k][col - self.offsets[k] - 1];
                }
            }
        }
        a
    }
}

/// One subject's data prepared for estimation.
#[derive(Debug, Clone)]
pub(crate) struct SubjectData {
    pub id: String,
    pub times: Vec<f64>,
    pub ys: Vec<f64>,
    /// Covariate values per structural parameter, aligned with
    /// `Design::cov_names`.
    pub x: [Vec<f64>; 4],
}

impl SubjectData {
    pub fn n(&self) -> usize {
        self.times.len()
    }
}

/// Extract per-subject designs, checking that every referenced covariate
/// exists, and reject collinear designs early.
pub(crate) fn prepare_subjects(
    data: &LongitudinalDataset,
    design: &Design,
) -> Result<Vec<SubjectData>> {
    let mut subjects = Vec::with_capacity(data.n_subjects());
    for s in &data.subjects {
        let mut x: [Vec<f64>; 4] = Default::default();
        for k in 0..4 {
            for name in &design.cov_names[k] {
                let v = s
                    .covariates
                    .get(name)
                    .ok_or_else(|| Error::MissingCovariate(name.clone()))?;
                x[k].push(*v);
            }
        }
        subjects.push(SubjectData {
            id: s.id.clone(),
            times: s.observations.iter().map(|o| o.time).collect(),
            ys: s.observations.iter().map(|o| o.outcome).collect(),
            x,
        });
    }

    // Collinearity check on the pooled per-parameter design [1, X_k].
    for k in 0..4 {
        let q = design.cov_names[k].len();
        if q == 0 {
            continue;
        }
        let n = subjects.len();
        let mut m = DMatrix::zeros(n, q + 1);
        for (i, s) in subjects.iter().enumerate() {
            m[(i, 0)] = 1.0;
            for j in 0..q {
                m[(i, j + 1)] = s.x[k][j];
            }
        }
        let gram = m.transpose() * &m;
        if gram.cholesky().is_none() {
            return Err(Error::SingularDesign(format!(
                "covariates of `{}` are collinear",
                design.kind.param_names()[k]
            )));
        }
    }
    Ok(subjects)
}

/// Covariate values per subject, keyed by name (used for marginal profiles).
pub(crate) fn covariate_columns(data: &LongitudinalDataset) -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    for name in &data.covariate_names {
        let col = data
            .subjects
            .iter()
            .map(|s| s.covariates[name])
            .collect::<Vec<f64>>();
        out.insert(name.clone(), col);
    }
    out
}
