//! Automatic, data-driven starting values for the four structural parameters.
//!
//! Level starts come from the outcome means inside the first (5th percentile)
//! and last (95th percentile) time windows. For the sigmoidal family the
//! midpoint start is `sign(median time) * 300` when the pooled trend is nearly
//! linear and `sign(median time) * 2` otherwise, and the Hill-slope start is
//! whichever of {0.5, 1.05} tracks the per-year pooled outcome means better.
//! For the changepoint family the observed time span is cut into quintiles, a
//! small random-intercept linear mixed model is fitted on each, and the
//! changepoint start is the lower bound of the quintile with the steepest
//! fitted slope; the two slope starts are then refitted on the data before and
//! after that point.

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::model::{smm_value, ModelKind, SubjectParams};
use crate::stats::{mean, ols_line, ols_quadratic, percentile};

/// How a set of starting values was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Auto,
    /// Automatic path degraded to a coarse fallback (degenerate quintiles).
    AutoFallback,
    User,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Auto => "auto",
            Provenance::AutoFallback => "auto (fallback)",
            Provenance::User => "user",
        }
    }
}

/// Starting values for psi1..psi4 in the model's parameter order.
#[derive(Debug, Clone, Copy)]
pub struct StartValues {
    pub values: [f64; 4],
    pub provenance: Provenance,
}

impl StartValues {
    pub fn user(values: [f64; 4]) -> Self {
        Self {
            values,
            provenance: Provenance::User,
        }
    }

    /// Check the family-specific invariants (finite; for the sigmoidal
    /// family a nonzero midpoint and positive Hill slope).
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidStart("start values must be finite".into()));
        }
        if kind == ModelKind::Smm {
            if self.values[2] == 0.0 {
                return Err(Error::InvalidStart(
                    "midpoint start must be nonzero".into(),
                ));
            }
            if self.values[3] <= 0.0 {
                return Err(Error::InvalidStart(
                    "Hill-slope start must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Random-intercept + fixed-slope Gaussian linear mixed model fit.
#[derive(Debug, Clone, Copy)]
pub struct SimpleLmmFit {
    pub intercept: f64,
    pub slope: f64,
    pub random_intercept_var: f64,
    pub residual_var: f64,
    pub converged: bool,
}

const MIN_RESIDUAL_VAR: f64 = 1e-12;

/// Maximum-likelihood fit of `y = a + b t + u_i + e` with `u_i ~ N(0, tau2)`
/// and `e ~ N(0, sigma2)`.
///
/// `groups` holds one `(time, outcome)` series per subject. The marginal
/// likelihood is profiled down to the single variance ratio `tau2/sigma2`,
/// which is optimized by golden-section search; every other quantity has a
/// closed form, so the fit cannot fail to produce estimates on valid input.
pub fn fit_simple_lmm(groups: &[Vec<(f64, f64)>]) -> Result<SimpleLmmFit> {
    let groups: Vec<&Vec<(f64, f64)>> = groups.iter().filter(|g| !g.is_empty()).collect();
    if groups.len() < 2 {
        return Err(Error::TooFewSubjects(groups.len()));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for g in &groups {
        for &(t, y) in g.iter() {
            times.push(t);
            ys.push(y);
        }
    }
    let n_distinct = {
        let mut ts = times.clone();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup();
        ts.len()
    };
    if n_distinct < 2 {
        return Err(Error::DegenerateWindow(
            "all observation times in the window are equal".into(),
        ));
    }

    // With one observation per subject the intercept variance and the
    // residual variance are confounded; report the OLS line.
    if groups.iter().all(|g| g.len() == 1) {
        let (a, b) = ols_line(&times, &ys);
        let ssr: f64 = times
            .iter()
            .zip(&ys)
            .map(|(&t, &y)| (y - a - b * t).powi(2))
            .sum();
        return Ok(SimpleLmmFit {
            intercept: a,
            slope: b,
            random_intercept_var: 0.0,
            residual_var: (ssr / times.len() as f64).max(MIN_RESIDUAL_VAR),
            converged: false,
        });
    }

    let n_total: usize = groups.iter().map(|g| g.len()).sum();

    // Profiled -2 log-likelihood at variance ratio rho = tau2/sigma2, along
    // with the GLS line and sigma2 estimate at that ratio.
    let profile = |rho: f64| -> (f64, f64, f64, f64) {
        let mut m11 = 0.0;
        let mut m12 = 0.0;
        let mut m22 = 0.0;
        let mut z1 = 0.0;
        let mut z2 = 0.0;
        for g in &groups {
            let n = g.len() as f64;
            let c = rho / (1.0 + n * rho);
            let s1: f64 = g.iter().map(|&(t, _)| t).sum();
            let s2: f64 = g.iter().map(|&(t, _)| t * t).sum();
            let sy: f64 = g.iter().map(|&(_, y)| y).sum();
            let sty: f64 = g.iter().map(|&(t, y)| t * y).sum();
            m11 += n - c * n * n;
            m12 += s1 - c * n * s1;
            m22 += s2 - c * s1 * s1;
            z1 += sy - c * n * sy;
            z2 += sty - c * s1 * sy;
        }
        let det = m11 * m22 - m12 * m12;
        if det.abs() < 1e-300 {
            return (f64::INFINITY, 0.0, 0.0, MIN_RESIDUAL_VAR);
        }
        let a = (m22 * z1 - m12 * z2) / det;
        let b = (m11 * z2 - m12 * z1) / det;
        let mut quad = 0.0;
        let mut logdet = 0.0;
        for g in &groups {
            let n = g.len() as f64;
            let c = rho / (1.0 + n * rho);
            let mut sr = 0.0;
            let mut sr2 = 0.0;
            for &(t, y) in g.iter() {
                let r = y - a - b * t;
                sr += r;
                sr2 += r * r;
            }
            quad += sr2 - c * sr * sr;
            logdet += (1.0 + n * rho).ln();
        }
        let sigma2 = (quad / n_total as f64).max(MIN_RESIDUAL_VAR);
        let nll = n_total as f64 * sigma2.ln()
            + logdet
            + n_total as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        (nll, a, b, sigma2)
    };

    // Golden-section over log rho, bracketed wide; compare with the rho = 0
    // boundary and keep the better of the two.
    let (nll0, a0, b0, s0) = profile(0.0);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-18.0f64, 14.0f64);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = profile(x1.exp()).0;
    let mut f2 = profile(x2.exp()).0;
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = profile(x1.exp()).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = profile(x2.exp()).0;
        }
    }
    let rho_best = (0.5 * (lo + hi)).exp();
    let (nll_best, a, b, sigma2) = profile(rho_best);

    if nll0 <= nll_best {
        Ok(SimpleLmmFit {
            intercept: a0,
            slope: b0,
            random_intercept_var: 0.0,
            residual_var: s0,
            converged: true,
        })
    } else {
        Ok(SimpleLmmFit {
            intercept: a,
            slope: b,
            random_intercept_var: rho_best * sigma2,
            residual_var: sigma2,
            converged: true,
        })
    }
}

fn pooled_obs(data: &LongitudinalDataset) -> (Vec<f64>, Vec<f64>) {
    let mut ts = Vec::with_capacity(data.n_obs());
    let mut ys = Vec::with_capacity(data.n_obs());
    for s in &data.subjects {
        for o in &s.observations {
            ts.push(o.time);
            ys.push(o.outcome);
        }
    }
    (ts, ys)
}

/// Mean outcome over observations with `time <= p5` / `time >= p95` of the
/// pooled observation times. Falls back to the single closest observation if
/// a window is empty.
fn level_windows(data: &LongitudinalDataset) -> (f64, f64) {
    let times = data.pooled_times();
    let p5 = percentile(&times, 0.05);
    let p95 = percentile(&times, 0.95);
    let (ts, ys) = pooled_obs(data);
    let first: Vec<f64> = ts
        .iter()
        .zip(&ys)
        .filter(|(&t, _)| t <= p5)
        .map(|(_, &y)| y)
        .collect();
    let last: Vec<f64> = ts
        .iter()
        .zip(&ys)
        .filter(|(&t, _)| t >= p95)
        .map(|(_, &y)| y)
        .collect();
    let closest = |target: f64| -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for (&t, &y) in ts.iter().zip(&ys) {
            let d = (t - target).abs();
            if d < best.0 {
                best = (d, y);
            }
        }
        best.1
    };
    let first_level = if first.is_empty() { closest(p5) } else { mean(&first) };
    let last_level = if last.is_empty() { closest(p95) } else { mean(&last) };
    (first_level, last_level)
}

/// Quadratic-term contribution over the observed span, measured against the
/// total outcome range. Below 5% counts as nearly linear.
fn is_nearly_linear(data: &LongitudinalDataset) -> bool {
    let (ts, ys) = pooled_obs(data);
    let (_, _, c2) = ols_quadratic(&ts, &ys);
    let (tlo, thi) = data.time_range();
    let t2_hi = tlo.powi(2).max(thi.powi(2));
    let t2_lo = if tlo <= 0.0 && thi >= 0.0 {
        0.0
    } else {
        tlo.powi(2).min(thi.powi(2))
    };
    let contribution = c2.abs() * (t2_hi - t2_lo);
    let (ylo, yhi) = data.outcome_range();
    contribution < 0.05 * (yhi - ylo)
}

/// Sum of squared deviations between the logistic at `psi` and the per-year
/// pooled outcome means; buckets where the curve is undefined are skipped.
fn yearly_sse(data: &LongitudinalDataset, psi: &SubjectParams) -> f64 {
    use std::collections::BTreeMap;
    let mut buckets: BTreeMap<i64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for s in &data.subjects {
        for o in &s.observations {
            let e = buckets.entry(o.time.floor() as i64).or_default();
            e.0.push(o.time);
            e.1.push(o.outcome);
        }
    }
    let mut sse = 0.0;
    for (ts, ys) in buckets.values() {
        let t = mean(ts);
        if let Ok(f) = smm_value(t, psi) {
            let d = mean(ys) - f;
            sse += d * d;
        }
    }
    sse
}

/// Starting values for the sigmoidal family:
/// (first level, last level, midpoint, Hill slope).
pub fn initials_smm(data: &LongitudinalDataset) -> Result<StartValues> {
    let times = data.pooled_times();
    if times.len() < 2 || times.first() == times.last() {
        return Err(Error::DegenerateWindow(
            "need at least two distinct observation times".into(),
        ));
    }
    let (first_level, last_level) = level_windows(data);
    let median_t = percentile(&times, 0.5);
    let sign = if median_t < 0.0 { -1.0 } else { 1.0 };
    let midpoint = if is_nearly_linear(data) {
        sign * 300.0
    } else {
        sign * 2.0
    };
    let mut best = (f64::INFINITY, 0.5);
    for hill in [0.5, 1.05] {
        let cand = SubjectParams::new(first_level, last_level, midpoint, hill);
        let sse = yearly_sse(data, &cand);
        if sse < best.0 {
            best = (sse, hill);
        }
    }
    Ok(StartValues {
        values: [first_level, last_level, midpoint, best.1],
        provenance: Provenance::Auto,
    })
}

/// Observations of one subject restricted to `[lo, hi)` (or `[lo, hi]` when
/// `closed_right`).
fn window_groups(
    data: &LongitudinalDataset,
    lo: f64,
    hi: f64,
    closed_right: bool,
) -> Vec<Vec<(f64, f64)>> {
    data.subjects
        .iter()
        .map(|s| {
            s.observations
                .iter()
                .filter(|o| o.time >= lo && (o.time < hi || (closed_right && o.time <= hi)))
                .map(|o| (o.time, o.outcome))
                .collect::<Vec<_>>()
        })
        .filter(|g: &Vec<(f64, f64)>| !g.is_empty())
        .collect()
}

/// Slope of a window, preferring the mixed model and degrading to pooled OLS
/// when the window cannot support one.
fn window_slope(groups: &[Vec<(f64, f64)>]) -> Option<f64> {
    if groups.is_empty() {
        return None;
    }
    match fit_simple_lmm(groups) {
        Ok(f) => Some(f.slope),
        Err(_) => {
            let ts: Vec<f64> = groups.iter().flatten().map(|&(t, _)| t).collect();
            let ys: Vec<f64> = groups.iter().flatten().map(|&(_, y)| y).collect();
            let mut distinct = ts.clone();
            distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
            distinct.dedup();
            if distinct.len() < 2 {
                None
            } else {
                Some(ols_line(&ts, &ys).1)
            }
        }
    }
}

const SLOPE_TIE_TOL: f64 = 1e-9;

/// Starting values for the changepoint families:
/// (last level, slope1, slope2, changepoint).
pub fn initials_pmm(data: &LongitudinalDataset) -> Result<StartValues> {
    let times = data.pooled_times();
    let (_, last_level) = level_windows(data);
    let mut distinct = times.clone();
    distinct.dedup();

    let fallback = |why: &str| -> Result<StartValues> {
        let _ = why;
        let (tlo, thi) = data.time_range();
        let groups = window_groups(data, tlo, thi, true);
        let slope = window_slope(&groups).unwrap_or(0.0);
        Ok(StartValues {
            values: [last_level, slope, slope, (tlo + thi) / 2.0],
            provenance: Provenance::AutoFallback,
        })
    };

    if distinct.len() < 5 {
        return fallback("fewer than 5 distinct observation times");
    }

    let (tlo, thi) = data.time_range();
    let bounds = [
        tlo,
        percentile(&times, 0.20),
        percentile(&times, 0.40),
        percentile(&times, 0.60),
        percentile(&times, 0.80),
        thi,
    ];

    let mut slopes: Vec<Option<f64>> = Vec::with_capacity(5);
    for q in 0..5 {
        let closed_right = q == 4;
        let groups = window_groups(data, bounds[q], bounds[q + 1], closed_right);
        slopes.push(window_slope(&groups));
    }

    // Steepest |slope| wins; ties within tolerance resolve to the latest
    // quintile.
    let mut winner: Option<(usize, f64)> = None;
    for (q, s) in slopes.iter().enumerate() {
        if let Some(s) = s {
            match winner {
                None => winner = Some((q, s.abs())),
                Some((_, best)) if s.abs() > best + SLOPE_TIE_TOL => winner = Some((q, s.abs())),
                Some((_, best)) if (s.abs() - best).abs() <= SLOPE_TIE_TOL => {
                    winner = Some((q, best.max(s.abs())))
                }
                _ => {}
            }
        }
    }
    let (q_win, _) = match winner {
        Some(w) => w,
        None => return fallback("no quintile admits a slope fit"),
    };
    let changepoint = bounds[q_win];

    let before = window_groups(data, f64::NEG_INFINITY, changepoint, false);
    let after = window_groups(data, changepoint, f64::INFINITY, true);
    let whole = window_groups(data, tlo, thi, true);
    let whole_slope = window_slope(&whole).unwrap_or(0.0);
    let slope1 = window_slope(&before).unwrap_or(whole_slope);
    let slope2 = window_slope(&after).unwrap_or(whole_slope);

    Ok(StartValues {
        values: [last_level, slope1, slope2, changepoint],
        provenance: Provenance::Auto,
    })
}
