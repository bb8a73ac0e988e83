//! Small statistics toolbox for the experiment harness: medians, OLS on
//! log-log pairs, two-sample Kolmogorov-Smirnov and Spearman rank trends.

use serde::{Deserialize, Serialize};

use super::McError;

/// Median by total order; `None` on an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Standard error of the mean (sample standard deviation over sqrt n).
pub fn standard_error(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let m = mean(values)?;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n as f64 - 1.0);
    Some((var / n as f64).sqrt())
}

/// Ordinary least-squares fit of `log y` against `log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// OLS on `(ln x, ln y)`; requires at least three strictly positive points.
pub fn regress_loglog(pairs: &[(f64, f64)]) -> Result<RateFit, McError> {
    if pairs.len() < 3 {
        return Err(McError::TooFewPoints { count: pairs.len() });
    }
    if let Some(&(x, y)) = pairs.iter().find(|&&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(McError::NonPositiveStatistic { x, y });
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let mx = sx / n;
    let my = sy / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // residual variance with n - 2 degrees of freedom
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let slope_se = if pts.len() > 2 { (ss_res / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(RateFit { slope, intercept, slope_se })
}

/// Two-sample Kolmogorov-Smirnov outcome at a fixed level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub reject: bool,
}

/// Classical two-sample KS statistic with the asymptotic rejection
/// threshold `c(alpha) sqrt((n + m)/(n m))`, `c(alpha) = sqrt(-ln(alpha/2)/2)`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<KsOutcome, McError> {
    if a.is_empty() || b.is_empty() {
        return Err(McError::EmptySample);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0usize, 0usize);
    let mut statistic = 0.0f64;
    while i < xs.len() && j < ys.len() {
        // step both CDFs through the full tie group before measuring
        if xs[i] < ys[j] {
            i += 1;
        } else if ys[j] < xs[i] {
            j += 1;
        } else {
            let v = xs[i];
            while i < xs.len() && xs[i] == v {
                i += 1;
            }
            while j < ys.len() && ys[j] == v {
                j += 1;
            }
        }
        let diff = (i as f64 / xs.len() as f64 - j as f64 / ys.len() as f64).abs();
        statistic = statistic.max(diff);
    }
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let threshold =
        c * ((xs.len() + ys.len()) as f64 / (xs.len() as f64 * ys.len() as f64)).sqrt();
    Ok(KsOutcome { statistic, threshold, alpha, reject: statistic > threshold })
}

/// Spearman rank correlation; values are ranked by total order (ties get
/// average ranks).
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mx = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mx) * (b - mx);
        dx += (a - mx) * (a - mx);
        dy += (b - mx) * (b - mx);
    }
    Some(num / (dx * dy).sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// One-sided critical values of Spearman's rho at level 0.05 for tiny
/// samples (k = 4..=10); beyond that the normal approximation
/// `1.645 / sqrt(k - 1)` is used.
fn spearman_critical_one_sided_05(k: usize) -> f64 {
    match k {
        0..=3 => 1.1, // trends on fewer than 4 points are never significant
        4 => 1.0,
        5 => 0.9,
        6 => 0.829,
        7 => 0.714,
        8 => 0.643,
        9 => 0.600,
        10 => 0.564,
        _ => 1.645 / ((k - 1) as f64).sqrt(),
    }
}

/// True when the sequence shows a significantly positive monotone trend at
/// one-sided level 0.05 (Spearman rank test against the index).
pub fn has_positive_trend(values: &[f64]) -> bool {
    let idx: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    match spearman_rho(&idx, values) {
        Some(rho) => rho >= spearman_critical_one_sided_05(values.len()),
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn median_odd_even_empty() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn loglog_fit_recovers_exact_power_laws() {
        let quad: Vec<(f64, f64)> = (1..=6).map(|k| {
            let n = (1 << k) as f64;
            (n, n * n)
        }).collect();
        let fit = regress_loglog(&quad).unwrap();
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert!(fit.slope_se < 1e-12);

        let flat: Vec<(f64, f64)> = (1..=5).map(|k| ((1 << k) as f64, 7.5)).collect();
        let fit = regress_loglog(&flat).unwrap();
        assert_relative_eq!(fit.slope, 0.0, epsilon = 1e-12);

        let decay: Vec<(f64, f64)> =
            (4..=9).map(|k| {
                let n = (1u64 << k) as f64;
                (n, 3.0 * n.powf(-1.4))
            }).collect();
        let fit = regress_loglog(&decay).unwrap();
        assert_relative_eq!(fit.slope, -1.4, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 3.0f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn loglog_fit_rejects_bad_input() {
        assert!(matches!(
            regress_loglog(&[(1.0, 1.0), (2.0, 2.0)]),
            Err(McError::TooFewPoints { .. })
        ));
        assert!(matches!(
            regress_loglog(&[(1.0, 1.0), (2.0, 0.0), (4.0, 2.0)]),
            Err(McError::NonPositiveStatistic { .. })
        ));
    }

    #[test]
    fn ks_identical_and_disjoint_samples() {
        let a = [0.1, 0.5, 0.9, 1.4];
        let same = ks_two_sample(&a, &a, 0.01).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert!(!same.reject);

        let zeros = [0.0, 0.0, 0.0];
        let ones = [1.0, 1.0, 1.0];
        let far = ks_two_sample(&zeros, &ones, 0.01).unwrap();
        assert_eq!(far.statistic, 1.0);

        assert!(matches!(ks_two_sample(&[], &a, 0.05), Err(McError::EmptySample)));
    }

    #[test]
    fn ks_null_rejection_rate_is_nominal() {
        // two independent standard normal samples of size 2000: the test
        // should not reject at alpha = 0.01 in at least 95 of 100 repetitions
        let mut accepts = 0;
        for rep in 0..100u64 {
            let a = crate::fbm::standard_normals(crate::fbm::derive_seed(7, 70, rep), 2000);
            let b = crate::fbm::standard_normals(crate::fbm::derive_seed(7, 71, rep), 2000);
            if !ks_two_sample(&a, &b, 0.01).unwrap().reject {
                accepts += 1;
            }
        }
        assert!(accepts >= 95, "accepted only {accepts}/100 null cases");
    }

    #[test]
    fn spearman_detects_monotone_trends() {
        let up = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_relative_eq!(spearman_rho(&(0..5).map(|i| i as f64).collect::<Vec<_>>(), &up).unwrap(), 1.0);
        assert!(has_positive_trend(&up));
        let down = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert!(!has_positive_trend(&down));
        let wiggle = [1.0, 3.0, 2.0, 4.0, 1.5];
        assert!(!has_positive_trend(&wiggle));
    }
}
