//! The mixing function `Q(x) = x^2/(2 delta2) + x^3/(3 delta3)` and its derivatives.

/// Covariance kernel of the matrix-plus-tensor landscape.
///
/// Stored through the inverse variances so that an infinite variance (a
/// switched-off channel) is represented exactly by a zero coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelQ {
    inv_delta2: f64,
    inv_delta3: f64,
}

impl KernelQ {
    pub fn new(delta2: f64, delta3: f64) -> Self {
        KernelQ {
            inv_delta2: 1.0 / delta2,
            inv_delta3: 1.0 / delta3,
        }
    }

    /// `Q == 0`: both channels switched off.
    pub fn free() -> Self {
        KernelQ {
            inv_delta2: 0.0,
            inv_delta3: 0.0,
        }
    }

    pub fn from_inverse(inv_delta2: f64, inv_delta3: f64) -> Self {
        KernelQ {
            inv_delta2,
            inv_delta3,
        }
    }

    pub fn inv_delta2(&self) -> f64 {
        self.inv_delta2
    }

    pub fn inv_delta3(&self) -> f64 {
        self.inv_delta3
    }

    #[inline]
    pub fn q(&self, x: f64) -> f64 {
        x * x * (0.5 * self.inv_delta2 + x * self.inv_delta3 / 3.0)
    }

    #[inline]
    pub fn dq(&self, x: f64) -> f64 {
        x * (self.inv_delta2 + x * self.inv_delta3)
    }

    #[inline]
    pub fn d2q(&self, x: f64) -> f64 {
        self.inv_delta2 + 2.0 * x * self.inv_delta3
    }
}
