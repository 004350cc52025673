//! Small numeric helpers shared across modules.

/// Empirical percentile with linear interpolation between order statistics
/// (the same definition as R's default type-7 quantile).
///
/// `sorted` must be ascending and non-empty; `p` in [0, 1].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile of an unsorted slice (copies and sorts).
pub fn percentile_of(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    percentile(&v, p)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance (denominator n - 1); 0 for fewer than 2 values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Ordinary least squares y ~ 1 + t. Returns (intercept, slope).
pub fn ols_line(times: &[f64], ys: &[f64]) -> (f64, f64) {
    debug_assert_eq!(times.len(), ys.len());
    let n = times.len() as f64;
    let tm = mean(times);
    let ym = mean(ys);
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (&t, &y) in times.iter().zip(ys) {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
    }
    if stt <= 0.0 || n < 2.0 {
        return (ym, 0.0);
    }
    let slope = sty / stt;
    (ym - slope * tm, slope)
}

/// Least squares y ~ 1 + t + t^2. Returns (c0, c1, c2).
pub fn ols_quadratic(times: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    use nalgebra::{DMatrix, DVector};
    let n = times.len();
    let mut x = DMatrix::zeros(n, 3);
    for (i, &t) in times.iter().enumerate() {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = t;
        x[(i, 2)] = t * t;
    }
    let y = DVector::from_column_slice(ys);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    match xtx.cholesky() {
        Some(ch) => {
            let c = ch.solve(&xty);
            (c[0], c[1], c[2])
        }
        None => {
            // Collinear design (e.g. fewer than 3 distinct times): fall back
            // to the line with zero curvature.
            let (c0, c1) = ols_line(times, ys);
            (c0, c1, 0.0)
        }
    }
}
