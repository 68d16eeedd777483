use alloc::format;

use crate::{Error, KernelQ, Result};

/// Smallest supported dimension; the tensor channel needs three distinct indices.
pub const MIN_DIMENSION: usize = 3;

/// Problem definition shared by every algorithm.
///
/// `beta` may be `f64::INFINITY`, which selects gradient flow (maximum
/// likelihood) wherever a temperature enters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub delta2: f64,
    pub delta3: f64,
    pub beta: f64,
}

impl ModelParams {
    pub fn new(n: usize, delta2: f64, delta3: f64, beta: f64) -> Result<Self> {
        let p = ModelParams {
            n,
            delta2,
            delta3,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_DIMENSION {
            return Err(Error::domain(format!(
                "n = {} is below the minimum dimension {MIN_DIMENSION}",
                self.n
            )));
        }
        check_variance("delta2", self.delta2)?;
        check_variance("delta3", self.delta3)?;
        check_beta(self.beta)
    }

    /// `1/beta`, zero for gradient flow.
    pub fn temperature(&self) -> f64 {
        temperature(self.beta)
    }

    pub fn is_zero_temperature(&self) -> bool {
        self.beta.is_infinite()
    }

    pub fn kernel(&self) -> KernelQ {
        KernelQ::new(self.delta2, self.delta3)
    }

    pub fn with_delta3(self, delta3: f64) -> Self {
        ModelParams { delta3, ..self }
    }
}

pub(crate) fn check_variance(name: &str, v: f64) -> Result<()> {
    // +inf is accepted: it switches the corresponding channel off.
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {v}")))
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && !beta.is_nan() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "beta must be positive (or infinite), got {beta}"
        )))
    }
}

pub(crate) fn temperature(beta: f64) -> f64 {
    if beta.is_infinite() {
        0.0
    } else {
        1.0 / beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_domain() {
        assert!(ModelParams::new(2, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(8, 0.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(8, 1.0, -1.0, 1.0).is_err());
        assert!(ModelParams::new(8, 1.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(8, f64::NAN, 1.0, 1.0).is_err());
        assert!(ModelParams::new(8, 1.0, 1.0, f64::INFINITY).is_ok());
    }

    #[test]
    fn temperature_of_gradient_flow_is_zero() {
        let p = ModelParams::new(8, 1.0, 1.0, f64::INFINITY).unwrap();
        assert_eq!(p.temperature(), 0.0);
        assert!(p.is_zero_temperature());
        assert_eq!(ModelParams::new(8, 1.0, 1.0, 4.0).unwrap().temperature(), 0.25);
    }
}
