//! Closed-form algorithmic thresholds.
//!
//! After the dynamics settles near the marginal threshold states, the overlap
//! grows as `exp(Lambda t)` with
//!
//! ```text
//! Lambda(delta2, delta3; beta) = 1/delta2 - sqrt(1/delta2 + 2 (1 - delta2/beta) / delta3)
//! ```
//!
//! and the Langevin (finite `beta`) or gradient-flow (`beta = inf`) threshold
//! line is the zero set of `Lambda`. Solving `Lambda = 0` for `delta3` gives
//! `delta3_c = 2 delta2^2 (1 - delta2/beta) / (1 - delta2)`; both the closed
//! form and a bracketing root of `Lambda` are computed and cross-checked.

use alloc::vec::Vec;

use crate::params::{check_beta, check_variance};
use crate::{Error, Result};

/// Agreement required between the closed form and the bracketed root.
pub const LINE_CONSISTENCY_TOL: f64 = 1e-10;

/// Inverse temperatures of the three reference lines.
pub const REFERENCE_BETAS: [f64; 3] = [1.0, 1.25, f64::INFINITY];

fn temperature_factor(delta2: f64, beta: f64) -> f64 {
    if beta.is_infinite() {
        1.0
    } else {
        1.0 - delta2 / beta
    }
}

/// Growth exponent of the overlap, evaluated exactly as the formula reads.
pub fn lambda_exponent(delta2: f64, delta3: f64, beta: f64) -> Result<f64> {
    check_variance("delta2", delta2)?;
    check_variance("delta3", delta3)?;
    check_beta(beta)?;
    let radicand = 1.0 / delta2 + 2.0 * temperature_factor(delta2, beta) / delta3;
    if radicand < 0.0 {
        return Err(Error::NegativeRadicand {
            delta2,
            delta3,
            beta,
            radicand,
        });
    }
    Ok(1.0 / delta2 - libm::sqrt(radicand))
}

/// `delta3_c = 2 delta2^2 (1 - delta2/beta) / (1 - delta2)`.
///
/// `None` outside `0 < delta2 < 1` or when the line leaves the positive axis.
pub fn critical_delta3(delta2: f64, beta: f64) -> Option<f64> {
    if !(delta2 > 0.0 && delta2 < 1.0) || !(beta > 0.0) {
        return None;
    }
    let d3 = 2.0 * delta2 * delta2 * temperature_factor(delta2, beta) / (1.0 - delta2);
    (d3 > 0.0 && d3.is_finite()).then_some(d3)
}

/// Root of `Lambda(delta2, . ; beta) = 0` by bisection on a bracket.
///
/// `Lambda` is increasing in `delta3` whenever `1 - delta2/beta > 0`, so the
/// bracket is grown geometrically until the sign changes.
pub fn critical_delta3_bracketed(delta2: f64, beta: f64) -> Option<f64> {
    if !(delta2 > 0.0 && delta2 < 1.0) || temperature_factor(delta2, beta) <= 0.0 {
        return None;
    }
    let f = |d3: f64| lambda_exponent(delta2, d3, beta).ok();
    let (mut lo, mut hi) = (1.0, 1.0);
    while f(lo)? >= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return None;
        }
    }
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// `delta2` outside `(0, 1)`.
    OutsideDomain,
    /// `1 - delta2/beta <= 0`: the line leaves the positive axis.
    NoPositiveRoot,
}

/// Samples of `delta3_c(delta2)` at one inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdLine {
    pub beta: f64,
    /// `(delta2, delta3_c)` pairs.
    pub samples: Vec<(f64, f64)>,
    pub skipped: Vec<(f64, SkipReason)>,
    /// Largest relative gap between closed form and bracketed root.
    pub max_discrepancy: f64,
}

/// Solves `Lambda = 0` along a grid of `delta2` values.
///
/// Fails with [`Error::Inconsistent`] if the closed form and the root finder
/// disagree by more than [`LINE_CONSISTENCY_TOL`] (relative).
pub fn threshold_line(beta: f64, delta2s: &[f64]) -> Result<ThresholdLine> {
    check_beta(beta)?;
    let mut line = ThresholdLine {
        beta,
        samples: Vec::with_capacity(delta2s.len()),
        skipped: Vec::new(),
        max_discrepancy: 0.0,
    };
    for &d2 in delta2s {
        if !(d2 > 0.0 && d2 < 1.0) {
            line.skipped.push((d2, SkipReason::OutsideDomain));
            continue;
        }
        match (critical_delta3(d2, beta), critical_delta3_bracketed(d2, beta)) {
            (Some(closed), Some(bracketed)) => {
                let rel = ((closed - bracketed) / closed).abs();
                if rel > LINE_CONSISTENCY_TOL {
                    return Err(Error::Inconsistent {
                        delta2: d2,
                        closed,
                        bracketed,
                    });
                }
                line.max_discrepancy = line.max_discrepancy.max(rel);
                line.samples.push((d2, closed));
            }
            _ => line.skipped.push((d2, SkipReason::NoPositiveRoot)),
        }
    }
    Ok(line)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderingRow {
    pub delta2: f64,
    /// `delta3_c` at `beta = 1`, `1.25`, `inf`.
    pub delta3_c: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingReport {
    pub rows: Vec<OrderingRow>,
    /// `delta2` values where `delta3_c(1) <= delta3_c(1.25) <= delta3_c(inf)` fails.
    pub violations: Vec<f64>,
}

impl OrderingReport {
    pub fn is_ordered(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Threshold lines at the three reference temperatures and their pointwise ordering.
pub fn threshold_ordering_report(delta2s: &[f64]) -> OrderingReport {
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for &d2 in delta2s {
        let cs = REFERENCE_BETAS.map(|b| critical_delta3(d2, b));
        let [Some(a), Some(b), Some(c)] = cs else {
            continue;
        };
        if !(a <= b && b <= c) {
            violations.push(d2);
        }
        rows.push(OrderingRow {
            delta2: d2,
            delta3_c: [a, b, c],
        });
    }
    OrderingReport { rows, violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn lambda_printed_values() {
        assert!(lambda_exponent(0.5, 1.0, INF).unwrap().abs() < 1e-12);
        assert!(lambda_exponent(0.5, 0.5, 1.0).unwrap().abs() < 1e-12);
        let l = lambda_exponent(0.5, 2.0, INF).unwrap();
        assert!((l - (2.0 - libm::sqrt(3.0))).abs() < 1e-15);
        assert!(l > 0.0);
    }

    #[test]
    fn negative_radicand_is_reported() {
        // 1 - delta2/beta = -9, so 2 + 2 * (-9) / 1 < 0.
        let err = lambda_exponent(0.5, 1.0, 0.05).unwrap_err();
        assert!(matches!(err, Error::NegativeRadicand { .. }));
    }

    #[test]
    fn closed_form_values() {
        assert!((critical_delta3(0.5, INF).unwrap() - 1.0).abs() < 1e-15);
        assert!((critical_delta3(0.5, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((critical_delta3(0.5, 1.25).unwrap() - 0.6).abs() < 1e-15);
        assert!((critical_delta3(0.9, INF).unwrap() - 16.2).abs() < 1e-12);
        assert!(critical_delta3(1.0, INF).is_none());
        assert!(critical_delta3(0.0, INF).is_none());
    }

    #[test]
    fn beta_one_line_tends_to_two() {
        for d2 in [0.99, 0.999, 0.99999] {
            let d3 = critical_delta3(d2, 1.0).unwrap();
            assert!((d3 - 2.0 * d2 * d2).abs() < 1e-9);
        }
        assert!((critical_delta3(1.0 - 1e-9, 1.0).unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn bracketed_root_matches_closed_form() {
        for beta in [1.0, 1.25, 2.0, INF] {
            let grid: Vec<f64> = (1..=19).map(|k| 0.05 * k as f64).collect();
            let line = threshold_line(beta, &grid).unwrap();
            assert!(line.max_discrepancy <= LINE_CONSISTENCY_TOL);
            assert_eq!(line.samples.len(), grid.len());
        }
    }

    #[test]
    fn line_skips_out_of_domain() {
        let line = threshold_line(1.0, &[0.5, 1.0, 1.5, -0.1]).unwrap();
        assert_eq!(line.samples.len(), 1);
        assert_eq!(line.skipped.len(), 3);
        // beta below delta2: no positive root.
        let line = threshold_line(0.3, &[0.5]).unwrap();
        assert_eq!(line.skipped, [(0.5, SkipReason::NoPositiveRoot)]);
    }

    #[test]
    fn ordering_report_at_half() {
        let rep = threshold_ordering_report(&[0.5]);
        let row = rep.rows[0];
        assert!((row.delta3_c[0] - 0.5).abs() < 1e-15);
        assert!((row.delta3_c[1] - 0.6).abs() < 1e-15);
        assert!((row.delta3_c[2] - 1.0).abs() < 1e-15);
        assert!(rep.is_ordered());
    }

    #[test]
    fn lambda_sign_matches_side_of_line() {
        for beta in [1.0, 1.25, INF] {
            for k in 1..20 {
                let d2 = 0.05 * k as f64;
                let c = critical_delta3(d2, beta).unwrap();
                for f in [0.5, 0.9, 0.999, 1.001, 1.1, 2.0] {
                    let l = lambda_exponent(d2, c * f, beta).unwrap();
                    assert_eq!(l > 0.0, f > 1.0, "d2={d2} beta={beta} f={f}");
                }
            }
        }
    }
}
