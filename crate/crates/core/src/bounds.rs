//! Limits on the asymptotic slope of the implied variance.
//!
//! Two theoretical limits apply to `S = b(1 + |ρ|)`: the butterfly/call-spread
//! recommendation `S < 4/T` and the moment bound `S < 2/T`. Neither keeps
//! extreme-strike call prices small. The practical bound caps `S` so that a
//! linear wing `v(y) = S·y` prices the call at a far strike `K_max` no higher
//! than a tolerance `C_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pricing::{implied_vol, norm_cdf, norm_cdf_inv, ForwardContext};
use crate::svi::SviParams;

/// Inputs of the practical slope bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeBoundConfig {
    pub k_max: f64,
    pub c_max: f64,
    pub ctx: ForwardContext,
}

impl SlopeBoundConfig {
    pub fn new(k_max: f64, c_max: f64, ctx: ForwardContext) -> Result<Self> {
        let cfg = Self { k_max, c_max, ctx };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults used in reports: `K_max = 10⁶·F`, `C_max = 10⁻⁴·F`.
    pub fn default_for(ctx: ForwardContext) -> Self {
        Self {
            k_max: 1e6 * ctx.forward,
            c_max: 1e-4 * ctx.forward,
            ctx,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ctx
            .validate()
            .map_err(|e| Error::InvalidBoundConfig(e.to_string()))?;
        if !(self.k_max > self.ctx.forward && self.k_max.is_finite()) {
            return Err(Error::InvalidBoundConfig(format!(
                "k_max = {} must exceed the forward {}",
                self.k_max, self.ctx.forward
            )));
        }
        let upper = self.ctx.discounted_forward();
        if !(self.c_max > 0.0 && self.c_max < upper) {
            return Err(Error::InvalidBoundConfig(format!(
                "c_max = {} must lie in (0, B*F = {upper})",
                self.c_max
            )));
        }
        Ok(())
    }

    /// `y_max = ln(K_max/F)`.
    pub fn y_max(&self) -> f64 {
        self.ctx.log_moneyness(self.k_max)
    }
}

/// Limit of `d₁` as the strike goes to `+∞`, given the total-variance wing slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum D1LimitClass {
    /// `S·T < 2`: calls vanish at large strikes.
    MinusInfinity,
    /// `S·T = 2`: the limit depends on lower-order terms.
    IndeterminateSlopeTwo,
    /// `S·T > 2`: arbitrage is guaranteed.
    PlusInfinity,
}

/// Relative width of the band treated as `S·T = 2`, absorbing rounding in `S·T`.
const SLOPE_TWO_BAND: f64 = 1e-12;

/// Strict check `b(1 + |ρ|) < 4/T`.
pub fn check_gatheral(p: &SviParams, maturity: f64) -> bool {
    p.max_wing_slope() < 4.0 / maturity
}

/// Strict check `b(1 + |ρ|) < 2/T`.
pub fn check_lee(p: &SviParams, maturity: f64) -> bool {
    p.max_wing_slope() < 2.0 / maturity
}

/// Classify `lim d₁` from the variance wing slope `S` and maturity (compares `S·T` with 2).
pub fn classify_d1_limit(wing_slope: f64, maturity: f64) -> D1LimitClass {
    let st = wing_slope * maturity;
    if (st - 2.0).abs() <= SLOPE_TWO_BAND * 2.0 {
        D1LimitClass::IndeterminateSlopeTwo
    } else if st < 2.0 {
        D1LimitClass::MinusInfinity
    } else {
        D1LimitClass::PlusInfinity
    }
}

/// Practical slope bound with the `K·Φ(d₂)` term dropped.
///
/// With `q = Φ⁻¹(C_max/(B·F))` and `x = √(S·T)`, the condition
/// `C_max = B·F·Φ((−y_max + S·y_max·T/2)/√(S·y_max·T))` becomes
/// `½x² − (q/√y_max)·x − 1 = 0`; the positive root gives `S = x²/T`.
pub fn practical_slope_quadratic(cfg: &SlopeBoundConfig) -> Result<f64> {
    cfg.validate()?;
    let ratio = cfg.c_max / cfg.ctx.discounted_forward();
    let q = norm_cdf_inv(ratio).map_err(|e| Error::InvalidBoundConfig(e.to_string()))?;
    let c = q / cfg.y_max().sqrt();
    // c + √(c² + 2) written to avoid cancellation when c ≪ 0.
    let x = if c < 0.0 {
        2.0 / ((c * c + 2.0).sqrt() - c)
    } else {
        c + (c * c + 2.0).sqrt()
    };
    Ok(x * x / cfg.ctx.maturity)
}

/// Price implied by the linear-wing approximation at `K_max` for slope `S`
/// (the `K·Φ(d₂)` term dropped).
pub fn approximate_wing_price(cfg: &SlopeBoundConfig, slope: f64) -> f64 {
    let y = cfg.y_max();
    let tv = slope * y * cfg.ctx.maturity;
    cfg.ctx.discounted_forward() * norm_cdf((-y + 0.5 * tv) / tv.sqrt())
}

/// Practical slope bound with the full Black price.
///
/// Solves for the volatility that prices the `K_max` call at `C_max` and
/// reports `S = σ*²/y_max`, the slope of a wing `v(y) = S·y` through that
/// point. May exceed `2/T` when `C_max` approaches `B·F`.
pub fn practical_slope_exact(cfg: &SlopeBoundConfig) -> Result<f64> {
    cfg.validate()?;
    let vol = implied_vol(&cfg.ctx, cfg.k_max, cfg.c_max)?;
    Ok(vol * vol / cfg.y_max())
}

/// Wing-slope verdicts for one smile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdict {
    pub max_wing_slope: f64,
    pub right_wing_slope: f64,
    pub gatheral_limit: f64,
    pub lee_limit: f64,
    pub practical_limit: f64,
    pub practical_limit_exact: Option<f64>,
    pub passes_gatheral: bool,
    pub passes_lee: bool,
    /// `max_wing_slope < practical_limit`. A heuristic flag, not a theorem.
    pub passes_practical: bool,
    /// From the right-wing slope `b(1 + ρ)`, since the limit is taken as `K → ∞`.
    pub d1_limit_class: D1LimitClass,
}

impl BoundVerdict {
    pub fn evaluate(p: &SviParams, cfg: &SlopeBoundConfig) -> Result<Self> {
        let t = cfg.ctx.maturity;
        let practical_limit = practical_slope_quadratic(cfg)?;
        let practical_limit_exact = practical_slope_exact(cfg).ok();
        let max_wing_slope = p.max_wing_slope();
        let right_wing_slope = p.asymptotic_slopes().1;
        Ok(Self {
            max_wing_slope,
            right_wing_slope,
            gatheral_limit: 4.0 / t,
            lee_limit: 2.0 / t,
            practical_limit,
            practical_limit_exact,
            passes_gatheral: check_gatheral(p, t),
            passes_lee: check_lee(p, t),
            passes_practical: max_wing_slope < practical_limit,
            d1_limit_class: classify_d1_limit(right_wing_slope, t),
        })
    }
}
