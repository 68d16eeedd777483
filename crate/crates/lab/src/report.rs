//! JSON threshold reports shared by the mean-field and finite-`N` methods.

use serde::Serialize;
use spiked_core::dmft::DmftThreshold;
use spiked_core::dynamics::EmpiricalThreshold;
use spiked_core::extrapolate::{SuccessTime, ThresholdFit};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct PointJson {
    pub delta3: f64,
    /// `null` when censored.
    pub t_star: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearJson {
    pub intercept: f64,
    pub slope: f64,
    pub threshold: f64,
    pub residuals: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerLawJson {
    pub amplitude: f64,
    pub exponent: f64,
    pub threshold: f64,
    pub rms_log_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitJson {
    pub threshold: f64,
    pub out_of_range: bool,
    pub censored: usize,
    pub linear: LinearJson,
    pub power_law: Option<PowerLawJson>,
}

impl From<&ThresholdFit> for FitJson {
    fn from(f: &ThresholdFit) -> Self {
        FitJson {
            threshold: f.threshold,
            out_of_range: f.out_of_range,
            censored: f.censored,
            linear: LinearJson {
                intercept: f.linear.intercept,
                slope: f.linear.slope,
                threshold: f.linear.threshold,
                residuals: f.linear.residuals.clone(),
            },
            power_law: f.power_law.map(|p| PowerLawJson {
                amplitude: p.amplitude,
                exponent: p.exponent,
                threshold: p.threshold,
                rms_log_residual: p.rms_log_residual,
            }),
        }
    }
}

fn points(ps: &[SuccessTime]) -> Vec<PointJson> {
    ps.iter()
        .map(|p| PointJson {
            delta3: p.delta3,
            t_star: p.t_star,
        })
        .collect()
}

/// One method's entry in a threshold report.
#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub threshold: Option<f64>,
    /// `100 |threshold - analytic| / analytic`.
    pub discrepancy_pct: Option<f64>,
    /// Per-`delta3` success times (medians for ensembles).
    pub points: Vec<PointJson>,
    pub fit: Option<FitJson>,
    /// Individual ensemble success times, `[delta3][member]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Vec<Option<f64>>>>,
    pub settings: serde_json::Value,
    pub notes: Vec<String>,
}

impl MethodReport {
    pub fn analytic(value: Option<f64>) -> Self {
        MethodReport {
            method: "analytic".into(),
            threshold: value,
            discrepancy_pct: value.map(|_| 0.0),
            points: Vec::new(),
            fit: None,
            samples: None,
            settings: serde_json::Value::Null,
            notes: if value.is_none() {
                vec!["no threshold line at this delta2 and beta".into()]
            } else {
                Vec::new()
            },
        }
    }

    pub fn from_dmft(t: &DmftThreshold, settings: serde_json::Value) -> Self {
        MethodReport {
            method: "dmft".into(),
            threshold: Some(t.fit.threshold),
            discrepancy_pct: None,
            points: points(&t.points),
            fit: Some((&t.fit).into()),
            samples: None,
            settings,
            notes: Vec::new(),
        }
    }

    pub fn from_finite_n(t: &EmpiricalThreshold, settings: serde_json::Value) -> Self {
        MethodReport {
            method: "finite-n".into(),
            threshold: Some(t.fit.threshold),
            discrepancy_pct: None,
            points: points(&t.points),
            fit: Some((&t.fit).into()),
            samples: Some(t.samples.clone()),
            settings,
            notes: vec![format!(
                "finite-size estimate at n = {}; O(n^-1/2) initial overlaps shorten success times",
                t.params.n
            )],
        }
    }

    /// Fills the discrepancy against `analytic` and flags out-of-range fits.
    pub fn compare_to(&mut self, analytic: Option<f64>) {
        if let (Some(a), Some(t)) = (analytic, self.threshold) {
            self.discrepancy_pct = Some(100.0 * (t - a).abs() / a);
        }
        if self.fit.as_ref().is_some_and(|f| f.out_of_range) {
            self.notes
                .push("extrapolated threshold lies outside the sampled grid or the grid does not straddle it".into());
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub schema: u32,
    pub delta2: f64,
    /// `"inf"` for gradient flow.
    pub beta: String,
    pub analytic: Option<f64>,
    pub methods: Vec<MethodReport>,
}
