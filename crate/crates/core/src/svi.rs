//! The raw SVI implied-variance smile
//!
//! ```text
//! v(y) = a + b·[ρ·(y − m) + √((y − m)² + s²)]
//! ```
//!
//! with `y = ln(K/F)`. Derivatives are closed-form; the local-volatility
//! denominator `g` is evaluated in total-variance space `w = v·T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw SVI parameters for one expiry.
///
/// Construction enforces `b ≥ 0`, `s > 0`, `|ρ| ≤ 1` and a nonnegative
/// minimum variance `a + b·s·√(1 − ρ²) ≥ 0`. `a` itself may be negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSvi")]
pub struct SviParams {
    a: f64,
    b: f64,
    s: f64,
    rho: f64,
    m: f64,
}

#[derive(Deserialize)]
struct RawSvi {
    a: f64,
    b: f64,
    s: f64,
    rho: f64,
    m: f64,
}

impl TryFrom<RawSvi> for SviParams {
    type Error = Error;

    fn try_from(r: RawSvi) -> Result<Self> {
        SviParams::new(r.a, r.b, r.s, r.rho, r.m)
    }
}

impl SviParams {
    pub fn new(a: f64, b: f64, s: f64, rho: f64, m: f64) -> Result<Self> {
        if ![a, b, s, rho, m].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if b < 0.0 {
            return Err(Error::InvalidParams(format!("b must be >= 0, got {b}")));
        }
        if s <= 0.0 {
            return Err(Error::InvalidParams(format!("s must be > 0, got {s}")));
        }
        if rho.abs() > 1.0 {
            return Err(Error::InvalidParams(format!(
                "rho must lie in [-1, 1], got {rho}"
            )));
        }
        let p = Self { a, b, s, rho, m };
        let floor = p.min_variance();
        if floor < 0.0 {
            return Err(Error::InvalidParams(format!(
                "minimum variance a + b*s*sqrt(1-rho^2) = {floor} is negative"
            )));
        }
        Ok(p)
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn m(&self) -> f64 {
        self.m
    }

    /// Smallest variance attained over all `y`.
    pub fn min_variance(&self) -> f64 {
        self.a + self.b * self.s * (1.0 - self.rho * self.rho).max(0.0).sqrt()
    }

    /// Implied variance `v(y)`.
    #[inline]
    pub fn variance(&self, y: f64) -> f64 {
        let x = y - self.m;
        self.a + self.b * (self.rho * x + x.hypot(self.s))
    }

    /// `∂v/∂y = b·[ρ + (y − m)/√((y − m)² + s²)]`.
    #[inline]
    pub fn variance_dy(&self, y: f64) -> f64 {
        let x = y - self.m;
        self.b * (self.rho + x / x.hypot(self.s))
    }

    /// `∂²v/∂y² = b·s²/((y − m)² + s²)^{3/2}`.
    #[inline]
    pub fn variance_d2y(&self, y: f64) -> f64 {
        let x = y - self.m;
        let r = x.hypot(self.s);
        self.b * self.s * self.s / (r * r * r)
    }

    /// Wing slopes of `v` as `(left, right) = (b(1−ρ), b(1+ρ))`.
    pub fn asymptotic_slopes(&self) -> (f64, f64) {
        (self.b * (1.0 - self.rho), self.b * (1.0 + self.rho))
    }

    /// `b(1 + |ρ|)`, the steeper of the two wings.
    pub fn max_wing_slope(&self) -> f64 {
        self.b * (1.0 + self.rho.abs())
    }
}

/// An SVI smile attached to its maturity, viewed as total variance `w = v·T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalVarianceCurve {
    pub params: SviParams,
    pub maturity: f64,
}

impl TotalVarianceCurve {
    pub fn new(params: SviParams, maturity: f64) -> Result<Self> {
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "maturity must be positive, got {maturity}"
            )));
        }
        Ok(Self { params, maturity })
    }

    #[inline]
    pub fn total_variance(&self, y: f64) -> f64 {
        self.params.variance(y) * self.maturity
    }

    #[inline]
    pub fn total_variance_dy(&self, y: f64) -> f64 {
        self.params.variance_dy(y) * self.maturity
    }

    #[inline]
    pub fn total_variance_d2y(&self, y: f64) -> f64 {
        self.params.variance_d2y(y) * self.maturity
    }

    /// Black volatility `√v(y)`; errors where the total variance is not positive.
    pub fn implied_vol(&self, y: f64) -> Result<f64> {
        let v = self.params.variance(y);
        if v > 0.0 {
            Ok(v.sqrt())
        } else {
            Err(Error::NonPositiveVariance {
                y,
                w: v * self.maturity,
            })
        }
    }

    /// Local-volatility denominator
    ///
    /// ```text
    /// g(y) = 1 − (y/w)·w′ + ¼·w′²·(−¼ − 1/w + y²/w²) + ½·w″
    /// ```
    ///
    /// `g` has the sign of the risk-neutral density at `K = F·eʸ`.
    pub fn g(&self, y: f64) -> Result<f64> {
        let w = self.total_variance(y);
        if !(w > 0.0) {
            return Err(Error::NonPositiveVariance { y, w });
        }
        let w1 = self.total_variance_dy(y);
        let w2 = self.total_variance_d2y(y);
        let r = y / w;
        Ok(1.0 - r * w1 + 0.25 * w1 * w1 * (-0.25 - 1.0 / w + r * r) + 0.5 * w2)
    }

    /// Same total variance expressed at another maturity (`v` rescaled by `T/T'`).
    pub fn rescaled(&self, maturity: f64) -> Result<Self> {
        let f = self.maturity / maturity;
        let p = &self.params;
        let params = SviParams::new(p.a * f, p.b * f, p.s, p.rho, p.m)?;
        Self::new(params, maturity)
    }
}
