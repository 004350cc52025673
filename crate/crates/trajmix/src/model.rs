//! Structural trajectory functions and subject-level parameter predictors.
//!
//! Three model families share the same four-parameter layout:
//!
//! - `Smm`: four-parameter logistic decline,
//!   `f(t) = psi1 + (psi2 - psi1) / (1 + (t/psi3)^psi4)`.
//! - `PmmAbrupt`: two lines meeting at a subject-specific changepoint,
//!   `f(t) = psi1 + psi2*psi4 + psi3*(t - psi4)` left of the changepoint and
//!   `psi1 + psi2*t` at or right of it.
//! - `PmmSmooth`: the same two lines bridged by a cubic over a transition
//!   window of fixed width `v` starting at the changepoint. The two lines
//!   intersect at the middle of the window, which pins the early line's
//!   intercept to `lambda = psi1 + (psi2 - psi3)(psi4 + v/2)`. Width 0
//!   reduces exactly to `PmmAbrupt`.
//!
//! Each subject's `psi` comes from fixed effects, covariate effects, and
//! random effects: `psi_k = alpha_k + x_k . beta_k + eta_k`, with eta present
//! only on the coordinates the model family declares random.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix4, Vector4};

use crate::error::{Error, Result};

/// Which structural family a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Smm,
    PmmAbrupt,
    PmmSmooth,
}

impl ModelKind {
    /// Display names of the four structural parameters, in psi order.
    pub fn param_names(self) -> [&'static str; 4] {
        match self {
            ModelKind::Smm => ["first.level", "last.level", "midpoint", "hill.slope"],
            ModelKind::PmmAbrupt | ModelKind::PmmSmooth => {
                ["last.level", "slope1", "slope2", "changepoint"]
            }
        }
    }

    /// Row order used by the report tables (the sigmoidal family prints the
    /// last level first).
    pub fn display_order(self) -> [usize; 4] {
        match self {
            ModelKind::Smm => [1, 0, 2, 3],
            ModelKind::PmmAbrupt | ModelKind::PmmSmooth => [0, 1, 2, 3],
        }
    }

    /// Which psi coordinates carry a random effect.
    pub fn random_mask(self) -> [bool; 4] {
        match self {
            ModelKind::Smm => [true, true, false, false],
            ModelKind::PmmAbrupt | ModelKind::PmmSmooth => [true, true, true, true],
        }
    }

    /// Number of random effects.
    pub fn n_random(self) -> usize {
        self.random_mask().iter().filter(|&&m| m).count()
    }

    /// Indices (in random-effect coordinates) of the single free covariance
    /// entry of B; every other off-diagonal is structurally zero.
    pub fn free_cov_pair(self) -> (usize, usize) {
        match self {
            // Correlation between the level random effects.
            ModelKind::Smm => (0, 1),
            // Correlation between the two slope random effects.
            ModelKind::PmmAbrupt | ModelKind::PmmSmooth => (1, 2),
        }
    }

    /// Positions of the random coordinates within the psi vector.
    pub fn random_indices(self) -> Vec<usize> {
        self.random_mask()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "smm" => Ok(ModelKind::Smm),
            "pmma" => Ok(ModelKind::PmmAbrupt),
            "pmms" => Ok(ModelKind::PmmSmooth),
            other => Err(Error::Usage(format!(
                "unknown model `{other}` (expected smm, pmma, or pmms)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Smm => "smm",
            ModelKind::PmmAbrupt => "pmma",
            ModelKind::PmmSmooth => "pmms",
        }
    }
}

/// Subject-specific structural parameters (psi1..psi4).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectParams {
    pub psi: [f64; 4],
}

impl SubjectParams {
    pub fn new(psi1: f64, psi2: f64, psi3: f64, psi4: f64) -> Self {
        Self {
            psi: [psi1, psi2, psi3, psi4],
        }
    }
}

/// Per-parameter linear predictor: `psi_k = alpha_k + x_k . beta_k + eta_k`.
#[derive(Debug, Clone)]
pub struct ParamPredictorSpec {
    pub alpha: [f64; 4],
    /// Named covariate coefficients per structural parameter.
    pub betas: [Vec<(String, f64)>; 4],
    /// Coordinates that receive a random effect; must match the model kind.
    pub random_mask: [bool; 4],
}

impl ParamPredictorSpec {
    /// Predictor with no covariates, mask taken from the model kind.
    pub fn from_alpha(kind: ModelKind, alpha: [f64; 4]) -> Self {
        Self {
            alpha,
            betas: Default::default(),
            random_mask: kind.random_mask(),
        }
    }

    /// Covariate names per parameter (order preserved).
    pub fn covariate_names(&self, k: usize) -> Vec<&str> {
        self.betas[k].iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Total number of fixed effects (alphas plus betas).
    pub fn n_fixed(&self) -> usize {
        4 + self.betas.iter().map(Vec::len).sum::<usize>()
    }
}

/// Map fixed effects, covariates, and random effects to subject parameters.
///
/// `eta` is indexed over the random coordinates in psi order and must match
/// the mask length; masked-out coordinates take eta = 0.
pub fn predict_params(
    spec: &ParamPredictorSpec,
    covariates: &BTreeMap<String, f64>,
    eta: &[f64],
) -> Result<SubjectParams> {
    let n_random = spec.random_mask.iter().filter(|&&m| m).count();
    assert_eq!(
        eta.len(),
        n_random,
        "eta length {} does not match random-effect mask ({})",
        eta.len(),
        n_random
    );
    let mut psi = [0.0; 4];
    let mut e = eta.iter();
    for k in 0..4 {
        let mut v = spec.alpha[k];
        for (name, coef) in &spec.betas[k] {
            let x = covariates
                .get(name)
                .ok_or_else(|| Error::MissingCovariate(name.clone()))?;
            v += coef * x;
        }
        if spec.random_mask[k] {
            v += *e.next().expect("eta length checked above");
        }
        psi[k] = v;
    }
    Ok(SubjectParams { psi })
}

/// Covariance of the random effects, over random coordinates only.
///
/// The structure mask allows a single free off-diagonal (per `ModelKind`);
/// every other off-diagonal entry is held at exactly zero.
#[derive(Debug, Clone)]
pub struct RandomEffectsCov {
    pub matrix: DMatrix<f64>,
    pub free_pair: (usize, usize),
}

impl RandomEffectsCov {
    /// Diagonal matrix from variances, free pair taken from the kind.
    pub fn diagonal(kind: ModelKind, variances: &[f64]) -> Self {
        let d = kind.n_random();
        assert_eq!(variances.len(), d);
        let mut m = DMatrix::zeros(d, d);
        for (i, &v) in variances.iter().enumerate() {
            m[(i, i)] = v;
        }
        Self {
            matrix: m,
            free_pair: kind.free_cov_pair(),
        }
    }

    /// Set the single free covariance entry.
    pub fn with_cov(mut self, cov: f64) -> Self {
        let (i, j) = self.free_pair;
        self.matrix[(i, j)] = cov;
        self.matrix[(j, i)] = cov;
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Force every off-mask entry to exactly zero.
    pub fn apply_mask(&mut self) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                if i != j && (i, j) != self.free_pair && (j, i) != self.free_pair {
                    self.matrix[(i, j)] = 0.0;
                }
            }
        }
    }

    /// True when diagonals are nonnegative and the masked structure holds.
    pub fn is_valid(&self) -> bool {
        let d = self.dim();
        for i in 0..d {
            if self.matrix[(i, i)] < 0.0 {
                return false;
            }
            for j in 0..d {
                if i != j
                    && (i, j) != self.free_pair
                    && (j, i) != self.free_pair
                    && self.matrix[(i, j)] != 0.0
                {
                    return false;
                }
            }
        }
        true
    }
}

/// Full model description: family, predictors, transition width, error SD.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub predictors: ParamPredictorSpec,
    /// Transition window width (time units); only meaningful for `PmmSmooth`,
    /// where 0 degenerates to the abrupt model.
    pub transition_width: f64,
    pub sigma_eps: f64,
}

impl ModelSpec {
    pub fn new(
        kind: ModelKind,
        predictors: ParamPredictorSpec,
        transition_width: f64,
        sigma_eps: f64,
    ) -> Result<Self> {
        if transition_width < 0.0 || !transition_width.is_finite() {
            return Err(Error::DomainError(format!(
                "transition width must be a nonnegative real, got {transition_width}"
            )));
        }
        if sigma_eps <= 0.0 || !sigma_eps.is_finite() {
            return Err(Error::DomainError(format!(
                "error SD must be positive, got {sigma_eps}"
            )));
        }
        if predictors.random_mask != kind.random_mask() {
            return Err(Error::DomainError(
                "random-effect mask does not match the model kind".into(),
            ));
        }
        Ok(Self {
            kind,
            predictors,
            transition_width,
            sigma_eps,
        })
    }

    /// Structural value at time `t` for subject parameters `psi`.
    pub fn value(&self, t: f64, psi: &SubjectParams) -> Result<f64> {
        structural_value(self.kind, t, psi, self.transition_width)
    }

    /// Gradient of the structural value with respect to psi.
    pub fn gradient(&self, t: f64, psi: &SubjectParams) -> Result<[f64; 4]> {
        structural_gradient(self.kind, t, psi, self.transition_width)
    }
}

/// Evaluate the structural function of `kind` at `t`.
pub fn structural_value(kind: ModelKind, t: f64, psi: &SubjectParams, v: f64) -> Result<f64> {
    match kind {
        ModelKind::Smm => smm_value(t, psi),
        ModelKind::PmmAbrupt => Ok(pmma_value(t, psi)),
        ModelKind::PmmSmooth => pmms_value(t, psi, v),
    }
}

/// Gradient of the structural function with respect to psi1..psi4.
pub fn structural_gradient(
    kind: ModelKind,
    t: f64,
    psi: &SubjectParams,
    v: f64,
) -> Result<[f64; 4]> {
    match kind {
        ModelKind::Smm => smm_gradient(t, psi),
        ModelKind::PmmAbrupt => Ok(pmma_gradient(t, psi)),
        ModelKind::PmmSmooth => pmms_gradient(t, psi, v),
    }
}

const MIN_ABS_MIDPOINT: f64 = 1e-12;

/// `(t/psi3)^psi4` with the domain rules of the logistic family.
///
/// Computed as `exp(psi4 * ln(t/psi3))` for positive ratios. A zero ratio
/// gives 0 for positive psi4 and is a domain error otherwise; a negative
/// ratio is only defined for integer psi4.
fn ratio_power(t: f64, psi3: f64, psi4: f64) -> Result<f64> {
    if psi3.abs() < MIN_ABS_MIDPOINT {
        return Err(Error::DomainError(format!(
            "midpoint must be nonzero (got {psi3})"
        )));
    }
    let r = t / psi3;
    if r > 0.0 {
        Ok((psi4 * r.ln()).exp())
    } else if r == 0.0 {
        if psi4 > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::DomainError(format!(
                "0^{psi4} is undefined for a nonpositive Hill slope"
            )))
        }
    } else if psi4.fract() == 0.0 && psi4.abs() < i32::MAX as f64 {
        Ok(r.powi(psi4 as i32))
    } else {
        Err(Error::DomainError(format!(
            "negative ratio t/psi3 = {r} with non-integer Hill slope {psi4}"
        )))
    }
}

/// Four-parameter logistic value.
pub fn smm_value(t: f64, psi: &SubjectParams) -> Result<f64> {
    let [p1, p2, p3, p4] = psi.psi;
    let u = ratio_power(t, p3, p4)?;
    Ok(p1 + (p2 - p1) / (1.0 + u))
}

fn smm_gradient(t: f64, psi: &SubjectParams) -> Result<[f64; 4]> {
    let [p1, p2, p3, p4] = psi.psi;
    if p3.abs() < MIN_ABS_MIDPOINT {
        return Err(Error::DomainError("midpoint must be nonzero".into()));
    }
    let r = t / p3;
    if r < 0.0 {
        return Err(Error::DomainError(
            "gradient undefined for negative t/psi3".into(),
        ));
    }
    let u = ratio_power(t, p3, p4)?;
    let d = 1.0 + u;
    let d2 = d * d;
    let diff = p2 - p1;
    let g1 = 1.0 - 1.0 / d;
    let g2 = 1.0 / d;
    let g3 = diff * p4 * u / (p3 * d2);
    // u * ln(r) -> 0 as r -> 0+ for positive psi4.
    let g4 = if r == 0.0 { 0.0 } else { -diff * u * r.ln() / d2 };
    Ok([g1, g2, g3, g4])
}

/// Broken-stick (abrupt changepoint) value.
pub fn pmma_value(t: f64, psi: &SubjectParams) -> f64 {
    let [p1, p2, p3, p4] = psi.psi;
    if t < p4 {
        p1 + p2 * p4 + p3 * (t - p4)
    } else {
        p1 + p2 * t
    }
}

fn pmma_gradient(t: f64, psi: &SubjectParams) -> [f64; 4] {
    let [_, p2, p3, p4] = psi.psi;
    if t < p4 {
        [1.0, p4, t - p4, p2 - p3]
    } else if t == p4 {
        // Left-branch limit for the changepoint derivative at the kink.
        [1.0, t, 0.0, p2 - p3]
    } else {
        [1.0, t, 0.0, 0.0]
    }
}

/// Intercept of the early line implied by the mid-window intersection
/// constraint: `lambda = psi1 + psi2 (psi4 + v/2) - psi3 (psi4 + v/2)`.
pub fn lambda_constraint(psi: &SubjectParams, v: f64) -> f64 {
    let [p1, p2, p3, p4] = psi.psi;
    let m = p4 + v / 2.0;
    p1 + p2 * m - p3 * m
}

/// The cubic bridging the two linear phases over `[psi4, psi4 + v]`.
#[derive(Debug, Clone, Copy)]
pub struct TransitionPoly {
    /// Coefficients of `a0 + a1 t + a2 t^2 + a3 t^3`.
    pub coeffs: [f64; 4],
    /// `(psi4, psi4 + v)`.
    pub window: (f64, f64),
}

impl TransitionPoly {
    pub fn value(&self, t: f64) -> f64 {
        let [a0, a1, a2, a3] = self.coeffs;
        a0 + t * (a1 + t * (a2 + t * a3))
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let [_, a1, a2, a3] = self.coeffs;
        a1 + t * (2.0 * a2 + t * 3.0 * a3)
    }
}

/// Solve the four boundary conditions for the transition cubic:
/// value and slope match the early line at `psi4` and the late line at
/// `psi4 + v`.
pub fn solve_transition(psi: &SubjectParams, v: f64) -> Result<TransitionPoly> {
    if v <= 0.0 || !v.is_finite() {
        return Err(Error::DomainError(format!(
            "transition width must be positive, got {v}"
        )));
    }
    let [p1, p2, p3, p4] = psi.psi;
    let lam = lambda_constraint(psi, v);
    let t0 = p4;
    let t1 = p4 + v;
    let a = Matrix4::new(
        1.0,
        t0,
        t0 * t0,
        t0 * t0 * t0,
        1.0,
        t1,
        t1 * t1,
        t1 * t1 * t1,
        0.0,
        1.0,
        2.0 * t0,
        3.0 * t0 * t0,
        0.0,
        1.0,
        2.0 * t1,
        3.0 * t1 * t1,
    );
    let b = Vector4::new(lam + p3 * t0, p1 + p2 * t1, p3, p2);
    let lu = a.lu();
    let x = lu.solve(&b).ok_or(Error::SingularSystem(v))?;
    Ok(TransitionPoly {
        coeffs: [x[0], x[1], x[2], x[3]],
        window: (t0, t1),
    })
}

/// Smooth changepoint value: early line, transition cubic, late line.
///
/// Width 0 delegates to [`pmma_value`] exactly.
pub fn pmms_value(t: f64, psi: &SubjectParams, v: f64) -> Result<f64> {
    if v < 0.0 || !v.is_finite() {
        return Err(Error::DomainError(format!(
            "transition width must be nonnegative, got {v}"
        )));
    }
    if v == 0.0 {
        return Ok(pmma_value(t, psi));
    }
    let [p1, p2, p3, p4] = psi.psi;
    if t < p4 {
        Ok(lambda_constraint(psi, v) + p3 * t)
    } else if t <= p4 + v {
        Ok(solve_transition(psi, v)?.value(t))
    } else {
        Ok(p1 + p2 * t)
    }
}

fn pmms_gradient(t: f64, psi: &SubjectParams, v: f64) -> Result<[f64; 4]> {
    if v == 0.0 {
        return Ok(pmma_gradient(t, psi));
    }
    let [_, p2, p3, p4] = psi.psi;
    let mid = p4 + v / 2.0;
    if t < p4 {
        // f = lambda + psi3 t
        Ok([1.0, mid, t - mid, p2 - p3])
    } else if t <= p4 + v {
        let g = solve_transition(psi, v)?;
        let s = (t - p4) / v;
        let (h00, h10, h01, h11) = hermite_basis(s);
        Ok([
            1.0,
            mid * h00 + (p4 + v) * h01 + v * h11,
            -(v / 2.0) * h00 + v * h10,
            p2 - g.derivative(t),
        ])
    } else {
        Ok([1.0, t, 0.0, 0.0])
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn psi(p: [f64; 4]) -> SubjectParams {
        SubjectParams { psi: p }
    }

    // ---- smm_value --------------------------------------------------------

    #[test]
    fn smm_at_time_zero_is_last_level() {
        let p = psi([0.24, -1.088, -2.567, 1.789]);
        assert_relative_eq!(smm_value(0.0, &p).unwrap(), -1.088, epsilon = 1e-15);
    }

    #[test]
    fn smm_at_midpoint_is_half_decline() {
        let p = psi([0.24, -1.088, -2.567, 1.789]);
        let expected = (0.24 + (-1.088)) / 2.0;
        assert_relative_eq!(smm_value(-2.567, &p).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn smm_frozen_oracle_value() {
        // Independent 40-digit evaluation of the logistic at t = -5.
        let p = psi([0.24, -1.088, -2.567, 1.789]);
        assert_relative_eq!(
            smm_value(-5.0, &p).unwrap(),
            -0.06912080491456335,
            epsilon = 1e-14
        );
    }

    #[test]
    fn smm_domain_errors() {
        // Negative ratio with non-integer Hill slope.
        let p = psi([0.0, 1.0, 2.0, 1.5]);
        assert!(smm_value(-1.0, &p).is_err());
        // Integer Hill slope admits a negative base.
        let p_int = psi([0.0, 1.0, 2.0, 2.0]);
        let got = smm_value(-4.0, &p_int).unwrap();
        assert_relative_eq!(got, 0.0 + 1.0 / (1.0 + 4.0), epsilon = 1e-12);
        // Zero midpoint.
        let p0 = psi([0.0, 1.0, 0.0, 1.0]);
        assert!(smm_value(1.0, &p0).is_err());
        // Ratio 0 with nonpositive Hill slope.
        let pneg = psi([0.0, 1.0, 2.0, -1.0]);
        assert!(smm_value(0.0, &pneg).is_err());
    }

    #[test]
    fn smm_values_bounded_by_levels_on_decline() {
        let p = psi([0.24, -1.088, -2.567, 1.789]);
        let (lo, hi) = (-1.088, 0.24);
        for i in 0..=400 {
            let t = -20.0 + i as f64 * 0.05;
            let f = smm_value(t, &p).unwrap();
            assert!(f >= lo - 1e-12 && f <= hi + 1e-12, "f({t}) = {f}");
        }
    }

    // ---- pmma_value -------------------------------------------------------

    #[test]
    fn pmma_frozen_oracle_value() {
        // Exact rational arithmetic: -1.103 + (-0.017)(-4.25) + (-0.249)(-5.75)
        // = 401/1000.
        let p = psi([-1.103, -0.017, -0.249, -4.25]);
        assert_relative_eq!(pmma_value(-10.0, &p), 0.401, epsilon = 1e-12);
    }

    #[test]
    fn pmma_branches_agree_at_changepoint() {
        let p = psi([-1.0, -0.02, -0.25, -4.0]);
        let left = p.psi[0] + p.psi[1] * p.psi[3];
        assert_relative_eq!(pmma_value(-4.0, &p), left, epsilon = 1e-12);
        assert_relative_eq!(
            pmma_value(-4.0 - 1e-12, &p),
            left,
            epsilon = 1e-9
        );
    }

    #[test]
    fn pmma_equal_slopes_is_single_line() {
        let p = psi([2.0, -0.3, -0.3, -5.0]);
        for i in 0..=50 {
            let t = -12.0 + i as f64 * 0.25;
            assert_relative_eq!(pmma_value(t, &p), 2.0 - 0.3 * t, epsilon = 1e-12);
        }
    }

    // ---- lambda_constraint --------------------------------------------------

    #[test]
    fn lambda_frozen_oracle_value() {
        let p = psi([-1.099, -0.017, -0.246, -5.3]);
        assert_relative_eq!(lambda_constraint(&p, 2.0), -2.0837, epsilon = 1e-12);
    }

    #[test]
    fn lambda_zero_width() {
        let p = psi([1.0, 2.0, 3.0, -4.0]);
        assert_relative_eq!(
            lambda_constraint(&p, 0.0),
            1.0 + (2.0 - 3.0) * (-4.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn lambda_equal_slopes_is_level() {
        let p = psi([-1.5, 0.4, 0.4, -3.0]);
        assert_relative_eq!(lambda_constraint(&p, 2.0), -1.5, epsilon = 1e-12);
    }

    // ---- solve_transition ----------------------------------------------------

    #[test]
    fn transition_equal_slopes_is_the_line() {
        let p = psi([1.2, -0.4, -0.4, -6.0]);
        let g = solve_transition(&p, 2.0).unwrap();
        assert_relative_eq!(g.coeffs[0], 1.2, epsilon = 1e-9);
        assert_relative_eq!(g.coeffs[1], -0.4, epsilon = 1e-9);
        assert_relative_eq!(g.coeffs[2], 0.0, epsilon = 1e-9);
        assert_relative_eq!(g.coeffs[3], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn transition_frozen_rational_solve() {
        // Exact Gaussian elimination over rationals gives
        // (a0, a1, a2, a3) = (9/4, 3/2, 1/4, 0).
        let p = psi([0.0, 0.0, -1.0, -5.0]);
        let g = solve_transition(&p, 2.0).unwrap();
        assert_relative_eq!(g.coeffs[0], 2.25, epsilon = 1e-10);
        assert_relative_eq!(g.coeffs[1], 1.5, epsilon = 1e-10);
        assert_relative_eq!(g.coeffs[2], 0.25, epsilon = 1e-10);
        assert_relative_eq!(g.coeffs[3], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn transition_rejects_nonpositive_width() {
        let p = psi([0.0, 0.0, -1.0, -5.0]);
        assert!(solve_transition(&p, 0.0).is_err());
        assert!(solve_transition(&p, -1.0).is_err());
    }

    // ---- pmms_value ----------------------------------------------------------

    #[test]
    fn pmms_zero_width_equals_abrupt_on_grid() {
        let p = psi([-1.103, -0.017, -0.249, -4.25]);
        for i in 0..=100 {
            let t = -20.0 + i as f64 * 0.21;
            let s = pmms_value(t, &p, 0.0).unwrap();
            let a = pmma_value(t, &p);
            assert!((s - a).abs() < 1e-12, "t={t}: {s} vs {a}");
        }
    }

    #[test]
    fn pmms_continuous_at_window_start() {
        let p = psi([-1.1, -0.02, -0.25, -4.0]);
        let v = 2.0;
        let left = lambda_constraint(&p, v) + p.psi[2] * p.psi[3];
        let g = solve_transition(&p, v).unwrap();
        assert_relative_eq!(g.value(p.psi[3]), left, epsilon = 1e-9);
        assert_relative_eq!(pmms_value(p.psi[3], &p, v).unwrap(), left, epsilon = 1e-9);
    }

    #[test]
    fn pmms_frozen_midpoint_value() {
        // Same exact-rational oracle as the transition solve: g(-4) = 1/4.
        let p = psi([0.0, 0.0, -1.0, -5.0]);
        assert_relative_eq!(pmms_value(-4.0, &p, 2.0).unwrap(), 0.25, epsilon = 1e-10);
    }

    #[test]
    fn pmms_matches_cubic_inside_window() {
        let p = psi([-1.0, -0.02, -0.25, -4.0]);
        let v = 1.5;
        let g = solve_transition(&p, v).unwrap();
        for i in 0..50 {
            let t = p.psi[3] + v * (i as f64 + 0.5) / 50.0;
            assert_relative_eq!(
                pmms_value(t, &p, v).unwrap(),
                g.value(t),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn pmms_early_branch_equals_lambda_line() {
        // The early branch written as psi1 + psi2 t + (psi3 - psi2)(t - psi4 - v/2)
        // collapses to lambda + psi3 t; the implementation uses the latter.
        let p = psi([-1.0, -0.02, -0.25, -4.0]);
        let v = 2.0;
        for i in 0..40 {
            let t = -12.0 + i as f64 * 0.19;
            if t < p.psi[3] {
                let expanded = p.psi[0]
                    + p.psi[1] * t
                    + (p.psi[2] - p.psi[1]) * (t - p.psi[3] - v / 2.0);
                assert_relative_eq!(
                    pmms_value(t, &p, v).unwrap(),
                    expanded,
                    epsilon = 1e-12
                );
            }
        }
    }

    // ---- gradients ----------------------------------------------------------

    fn check_gradient(kind: ModelKind, t: f64, p: &SubjectParams, v: f64, tol: f64) {
        let g = structural_gradient(kind, t, p, v).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            let mut up = *p;
            up.psi[k] += h;
            let mut dn = *p;
            dn.psi[k] -= h;
            let fu = structural_value(kind, t, &up, v).unwrap();
            let fd = structural_value(kind, t, &dn, v).unwrap();
            let fd_central = (fu - fd) / (2.0 * h);
            assert!(
                (g[k] - fd_central).abs() < tol,
                "{kind:?} d/dpsi{} at t={t}: analytic {} vs numeric {}",
                k + 1,
                g[k],
                fd_central
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let smm = psi([0.24, -1.088, -2.567, 1.789]);
        for &t in &[-12.0, -5.0, -1.0] {
            check_gradient(ModelKind::Smm, t, &smm, 0.0, 1e-5);
        }
        let pmm = psi([-1.1, -0.02, -0.25, -4.3]);
        for &t in &[-10.0, -6.0, -1.0, 0.0] {
            check_gradient(ModelKind::PmmAbrupt, t, &pmm, 0.0, 1e-6);
        }
        // Smooth model: points in each branch, away from the kinks so the
        // finite difference does not straddle a branch switch.
        for &t in &[-10.0, -4.0, -3.5, -2.5, -1.0] {
            check_gradient(ModelKind::PmmSmooth, t, &pmm, 1.8, 1e-5);
        }
    }

    // ---- predict_params -------------------------------------------------------

    fn spec_with_agedeath() -> ParamPredictorSpec {
        ParamPredictorSpec {
            alpha: [-1.088, 0.24, -2.567, 1.789],
            betas: [
                vec![("ageDeath90".to_string(), -0.061)],
                vec![("ageDeath90".to_string(), -0.044)],
                vec![("ageDeath90".to_string(), 0.031)],
                vec![("ageDeath90".to_string(), 0.007)],
            ],
            random_mask: [true, true, false, false],
        }
    }

    #[test]
    fn predict_params_zero_covariate_returns_alpha() {
        let spec = spec_with_agedeath();
        let mut covs = BTreeMap::new();
        covs.insert("ageDeath90".to_string(), 0.0);
        let p = predict_params(&spec, &covs, &[0.0, 0.0]).unwrap();
        assert_eq!(p.psi, [-1.088, 0.24, -2.567, 1.789]);
    }

    #[test]
    fn predict_params_identity_with_empty_betas() {
        let spec = ParamPredictorSpec::from_alpha(ModelKind::PmmAbrupt, [1.0, 2.0, 3.0, 4.0]);
        let p = predict_params(&spec, &BTreeMap::new(), &[0.0; 4]).unwrap();
        assert_eq!(p.psi, [1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn predict_params_linear_in_covariate() {
        let spec = spec_with_agedeath();
        let mut covs = BTreeMap::new();
        covs.insert("ageDeath90".to_string(), 10.0);
        let p = predict_params(&spec, &covs, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(p.psi[0], -1.088 + 10.0 * -0.061, epsilon = 1e-12);
        assert_relative_eq!(p.psi[0], -1.698, epsilon = 1e-12);
    }

    #[test]
    fn predict_params_missing_covariate() {
        let spec = spec_with_agedeath();
        let err = predict_params(&spec, &BTreeMap::new(), &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::MissingCovariate(n) if n == "ageDeath90"));
    }

    #[test]
    fn predict_params_eta_enters_unmasked_coordinates() {
        let spec = ParamPredictorSpec::from_alpha(ModelKind::Smm, [0.1, 0.2, -2.0, 1.0]);
        let p0 = predict_params(&spec, &BTreeMap::new(), &[0.0, 0.0]).unwrap();
        let p = predict_params(&spec, &BTreeMap::new(), &[0.5, -0.25]).unwrap();
        assert_relative_eq!(p.psi[0] - p0.psi[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(p.psi[1] - p0.psi[1], -0.25, epsilon = 1e-15);
        assert_eq!(p.psi[2], p0.psi[2]);
        assert_eq!(p.psi[3], p0.psi[3]);
    }

    // ---- mask bookkeeping -------------------------------------------------------

    #[test]
    fn masks_per_kind() {
        assert_eq!(ModelKind::Smm.n_random(), 2);
        assert_eq!(ModelKind::PmmAbrupt.n_random(), 4);
        assert_eq!(ModelKind::Smm.free_cov_pair(), (0, 1));
        assert_eq!(ModelKind::PmmAbrupt.free_cov_pair(), (1, 2));
    }

    #[test]
    fn cov_mask_zeroes_off_structure() {
        let mut b = RandomEffectsCov::diagonal(ModelKind::PmmAbrupt, &[1.0, 2.0, 3.0, 4.0])
            .with_cov(0.5);
        b.matrix[(0, 3)] = 9.0;
        b.matrix[(3, 0)] = 9.0;
        b.apply_mask();
        assert!(b.is_valid());
        assert_eq!(b.matrix[(0, 3)], 0.0);
        assert_eq!(b.matrix[(1, 2)], 0.5);
    }

    // ---- properties -----------------------------------------------------------

    proptest! {
        #[test]
        fn transition_conditions_hold(
            p1 in -3.0..3.0f64,
            p2 in -0.5..0.5f64,
            p3 in -0.5..0.5f64,
            p4 in -10.0..-1.0f64,
            v in 0.01..5.0f64,
        ) {
            let p = psi([p1, p2, p3, p4]);
            let g = solve_transition(&p, v).unwrap();
            let lam = lambda_constraint(&p, v);
            let scale = |x: f64| x.abs().max(1.0);
            let c1 = g.value(p4) - (lam + p3 * p4);
            let c2 = g.value(p4 + v) - (p1 + p2 * (p4 + v));
            let c3 = g.derivative(p4) - p3;
            let c4 = g.derivative(p4 + v) - p2;
            prop_assert!(c1.abs() / scale(lam + p3 * p4) < 1e-9);
            prop_assert!(c2.abs() / scale(p1 + p2 * (p4 + v)) < 1e-9);
            prop_assert!(c3.abs() / scale(p3) < 1e-9);
            prop_assert!(c4.abs() / scale(p2) < 1e-9);
        }

        #[test]
        fn pmms_is_c1_at_window_edges(
            p1 in -3.0..3.0f64,
            p2 in -0.5..0.5f64,
            p3 in -0.5..0.5f64,
            p4 in -10.0..-2.0f64,
            v in 0.1..5.0f64,
        ) {
            let p = psi([p1, p2, p3, p4]);
            let h = 1e-5;
            for edge in [p4, p4 + v] {
                // One-sided derivatives across the edge.
                let f = |t: f64| pmms_value(t, &p, v).unwrap();
                let dl = (f(edge) - f(edge - h)) / h;
                let dr = (f(edge + h) - f(edge)) / h;
                prop_assert!((dl - dr).abs() < 1e-3,
                    "slope jump {} at edge {}", (dl - dr).abs(), edge);
                // Value continuity.
                let jump = (f(edge - 1e-9) - f(edge + 1e-9)).abs();
                prop_assert!(jump < 1e-6);
            }
        }

        #[test]
        fn pmms_vanishing_width_limit(
            p1 in -3.0..3.0f64,
            p2 in -0.5..0.5f64,
            p3 in -0.5..0.5f64,
            p4 in -10.0..-1.0f64,
        ) {
            let p = psi([p1, p2, p3, p4]);
            let mut worst: f64 = 0.0;
            for i in 0..=100 {
                let t = -15.0 + i as f64 * 0.15;
                let s = pmms_value(t, &p, 1e-8).unwrap();
                let a = pmma_value(t, &p);
                worst = worst.max((s - a).abs());
            }
            prop_assert!(worst < 1e-5, "max gap {worst}");
        }
    }
}
