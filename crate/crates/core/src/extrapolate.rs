//! Threshold extraction from time-to-solution measurements.
//!
//! Given success times `t*(delta3)` (censored when the overlap never reached
//! the success level), the threshold is the `delta3` at which `t*` diverges.
//! Two models are fitted:
//!
//! - linear: `1/t* = a + b delta3`, threshold `-a/b` (the reported value);
//! - power law: `t* = A (delta3 - delta3_c)^(-gamma)`, as a sensitivity check.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessTime {
    pub delta3: f64,
    /// `None` when censored at the time horizon.
    pub t_star: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    /// Use only the finite points closest to the threshold (smallest `1/t*`).
    pub nearest: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub threshold: f64,
    /// `(delta3, 1/t* - fit)` for the points used.
    pub residuals: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub amplitude: f64,
    pub exponent: f64,
    pub threshold: f64,
    /// Root-mean-square residual of `ln t*`.
    pub rms_log_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdFit {
    /// Linear-model threshold.
    pub threshold: f64,
    pub linear: LinearFit,
    pub power_law: Option<PowerLawFit>,
    /// The grid does not bracket the threshold, or the estimate leaves the sampled range.
    pub out_of_range: bool,
    pub censored: usize,
}

/// Ordinary least squares `y = a + b x`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

pub fn extrapolate(points: &[SuccessTime], opts: &FitOptions) -> Result<ThresholdFit> {
    let mut finite: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.t_star.filter(|t| *t > 0.0).map(|t| (p.delta3, t)))
        .collect();
    let censored = points.len() - finite.len();
    if finite.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} finite success times out of {}; need at least 2",
            finite.len(),
            points.len()
        )));
    }
    // Closest to threshold first.
    finite.sort_by(|a, b| b.1.total_cmp(&a.1));
    let used = match opts.nearest {
        Some(k) => &finite[..k.max(2).min(finite.len())],
        None => &finite[..],
    };
    let xs: Vec<f64> = used.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = used.iter().map(|p| 1.0 / p.1).collect();
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(Error::InsufficientData(
            "all finite success times share one delta3".into(),
        ));
    }
    let (a, b) = least_squares(&xs, &ys);
    let threshold = -a / b;
    let residuals = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (x, y - (a + b * x)))
        .collect();
    let linear = LinearFit {
        intercept: a,
        slope: b,
        threshold,
        residuals,
    };

    let min_grid = points.iter().map(|p| p.delta3).fold(f64::INFINITY, f64::min);
    let min_finite = finite.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let out_of_range = censored == 0
        || !threshold.is_finite()
        || b <= 0.0
        || threshold < min_grid
        || threshold > min_finite;

    Ok(ThresholdFit {
        threshold,
        linear,
        power_law: power_law_fit(&finite),
        out_of_range,
        censored,
    })
}

/// For fixed `delta3_c`, `ln t* = ln A - gamma ln(delta3 - delta3_c)` is linear;
/// `delta3_c` is then chosen by golden-section search on the residual.
fn power_law_fit(finite: &[(f64, f64)]) -> Option<PowerLawFit> {
    if finite.len() < 3 {
        return None;
    }
    let lo_x = finite.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi_x = finite.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let span = hi_x - lo_x;
    if span <= 0.0 {
        return None;
    }
    let fit_at = |dc: f64| -> (f64, f64, f64) {
        let xs: Vec<f64> = finite.iter().map(|p| libm::log(p.0 - dc)).collect();
        let ys: Vec<f64> = finite.iter().map(|p| libm::log(p.1)).collect();
        let (a, b) = least_squares(&xs, &ys);
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let e = y - (a + b * x);
                e * e
            })
            .sum();
        (rss, a, b)
    };
    let eps = 1e-9 * span.max(1e-12);
    let mut lo = (lo_x - 10.0 * span).max(0.0);
    let mut hi = lo_x - eps;
    if lo >= hi {
        lo = hi - span;
    }
    let g = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (fit_at(c).0, fit_at(d).0);
    for _ in 0..200 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = fit_at(c).0;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = fit_at(d).0;
        }
    }
    let dc = 0.5 * (lo + hi);
    let (rss, a, b) = fit_at(dc);
    Some(PowerLawFit {
        amplitude: libm::exp(a),
        exponent: -b,
        threshold: dc,
        rms_log_residual: libm::sqrt(rss / finite.len() as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(data: &[(f64, Option<f64>)]) -> Vec<SuccessTime> {
        data.iter()
            .map(|&(delta3, t_star)| SuccessTime { delta3, t_star })
            .collect()
    }

    #[test]
    fn exact_linear_inverse_time() {
        // 1/t* = 0.5 (delta3 - 0.8)
        let data: Vec<_> = [0.7, 0.75, 0.9, 1.0, 1.2]
            .iter()
            .map(|&d| (d, (d > 0.8).then(|| 2.0 / (d - 0.8))))
            .collect();
        let fit = extrapolate(&pts(&data), &FitOptions::default()).unwrap();
        assert!((fit.threshold - 0.8).abs() < 1e-12);
        assert!(!fit.out_of_range);
        assert_eq!(fit.censored, 2);
        let pl = fit.power_law.unwrap();
        assert!((pl.threshold - 0.8).abs() < 1e-6, "{pl:?}");
        assert!((pl.exponent - 1.0).abs() < 1e-4);
    }

    #[test]
    fn power_law_recovers_exponent() {
        let data: Vec<_> = [1.1, 1.2, 1.4, 1.8]
            .iter()
            .map(|&d: &f64| (d, Some(3.0 * libm::pow(d - 1.0, -1.5))))
            .collect();
        let fit = extrapolate(&pts(&data), &FitOptions::default()).unwrap();
        let pl = fit.power_law.unwrap();
        assert!((pl.threshold - 1.0).abs() < 1e-5);
        assert!((pl.exponent - 1.5).abs() < 1e-3);
        assert!((pl.amplitude - 3.0).abs() < 1e-2);
        // No censored points: the grid never crossed the threshold.
        assert!(fit.out_of_range);
    }

    #[test]
    fn nearest_points_subset() {
        let data = pts(&[(1.0, Some(10.0)), (2.0, Some(5.0)), (5.0, Some(1.0)), (0.5, None)]);
        let fit = extrapolate(&data, &FitOptions { nearest: Some(2) }).unwrap();
        assert_eq!(fit.linear.residuals.len(), 2);
        // Through (1, 0.1) and (2, 0.2): threshold 0.
        assert!(fit.threshold.abs() < 1e-12);
    }

    #[test]
    fn all_censored_is_insufficient() {
        let data = pts(&[(0.4, None), (0.5, None), (0.6, Some(3.0))]);
        assert!(matches!(
            extrapolate(&data, &FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
        assert!(extrapolate(&[], &FitOptions::default()).is_err());
    }
}
