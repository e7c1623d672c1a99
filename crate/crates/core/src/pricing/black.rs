use serde::{Deserialize, Serialize};

use super::normal::{norm_cdf, norm_pdf};
use crate::error::{Error, Result};

/// Forward, discount factor and maturity shared by all options of one expiry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardContext {
    pub forward: f64,
    pub discount_factor: f64,
    /// Year fraction.
    pub maturity: f64,
}

impl ForwardContext {
    pub fn new(forward: f64, discount_factor: f64, maturity: f64) -> Result<Self> {
        let ctx = Self {
            forward,
            discount_factor,
            maturity,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.forward > 0.0 && self.forward.is_finite()) {
            return Err(Error::InvalidContext(format!(
                "forward must be positive, got {}",
                self.forward
            )));
        }
        if !(self.discount_factor > 0.0 && self.discount_factor <= 1.0) {
            return Err(Error::InvalidContext(format!(
                "discount factor must lie in (0, 1], got {}",
                self.discount_factor
            )));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::InvalidContext(format!(
                "maturity must be positive, got {}",
                self.maturity
            )));
        }
        Ok(())
    }

    /// Log-moneyness `ln(K/F)`.
    #[inline]
    pub fn log_moneyness(&self, strike: f64) -> f64 {
        (strike / self.forward).ln()
    }

    /// Discounted forward `B·F`, the upper bound of any call price.
    #[inline]
    pub fn discounted_forward(&self) -> f64 {
        self.discount_factor * self.forward
    }

    #[inline]
    pub fn call_intrinsic(&self, strike: f64) -> f64 {
        self.discount_factor * (self.forward - strike).max(0.0)
    }
}

/// A single market quote: strike and Black implied volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub strike: f64,
    pub vol: f64,
}

impl OptionQuote {
    pub fn new(strike: f64, vol: f64) -> Result<Self> {
        check_strike(strike)?;
        check_vol(vol)?;
        Ok(Self { strike, vol })
    }
}

#[inline]
fn check_strike(strike: f64) -> Result<()> {
    if strike > 0.0 && strike.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveStrike(strike))
    }
}

#[inline]
fn check_vol(vol: f64) -> Result<()> {
    if vol >= 0.0 && vol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidVolatility(vol))
    }
}

/// Undiscounted out-of-the-money option value: call for `K ≥ F`, put for `K < F`.
/// Both terms are small, so the difference keeps its relative accuracy far
/// into the wings.
fn otm_undiscounted(forward: f64, strike: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    let d1 = (forward / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    let v = if strike >= forward {
        forward * norm_cdf(d1) - strike * norm_cdf(d2)
    } else {
        strike * norm_cdf(-d2) - forward * norm_cdf(-d1)
    };
    v.max(0.0)
}

/// Black-76 call price `B·[F·Φ(d₁) − K·Φ(d₂)]`.
///
/// Zero volatility returns the discounted intrinsic value; extreme tails
/// saturate instead of erroring.
pub fn black_call(ctx: &ForwardContext, strike: f64, vol: f64) -> Result<f64> {
    check_strike(strike)?;
    check_vol(vol)?;
    let sd = vol * ctx.maturity.sqrt();
    let otm = otm_undiscounted(ctx.forward, strike, sd);
    let b = ctx.discount_factor;
    let price = if strike >= ctx.forward {
        b * otm
    } else {
        b * (otm + (ctx.forward - strike))
    };
    Ok(price.clamp(ctx.call_intrinsic(strike), ctx.discounted_forward()))
}

/// Black-76 put price, consistent with [`black_call`] through put-call parity.
pub fn black_put(ctx: &ForwardContext, strike: f64, vol: f64) -> Result<f64> {
    check_strike(strike)?;
    check_vol(vol)?;
    let sd = vol * ctx.maturity.sqrt();
    let otm = otm_undiscounted(ctx.forward, strike, sd);
    let b = ctx.discount_factor;
    let price = if strike < ctx.forward {
        b * otm
    } else {
        b * (otm + (strike - ctx.forward))
    };
    Ok(price.clamp(b * (strike - ctx.forward).max(0.0), b * strike))
}

/// Sensitivity of the call price to volatility, `B·F·φ(d₁)·√T`.
pub fn black_vega(ctx: &ForwardContext, strike: f64, vol: f64) -> Result<f64> {
    check_strike(strike)?;
    check_vol(vol)?;
    let sqrt_t = ctx.maturity.sqrt();
    let sd = vol * sqrt_t;
    if sd == 0.0 {
        return Ok(0.0);
    }
    let d1 = (ctx.forward / strike).ln() / sd + 0.5 * sd;
    Ok(ctx.discount_factor * ctx.forward * norm_pdf(d1) * sqrt_t)
}

const VOL_LOWER: f64 = 1e-8;
const VOL_UPPER: f64 = 10.0;
const MAX_ITER: usize = 300;

/// Black implied volatility of a call price.
///
/// Inverts on the out-of-the-money side (the put, via parity, for strikes
/// below the forward) using Newton steps on the log-price, safeguarded by a
/// bracket that starts at `[1e-8, 10]` and widens when needed.
pub fn implied_vol(ctx: &ForwardContext, strike: f64, call_price: f64) -> Result<f64> {
    check_strike(strike)?;
    let intrinsic = ctx.call_intrinsic(strike);
    let upper = ctx.discounted_forward();
    if !(call_price > intrinsic) {
        return Err(Error::PriceBelowIntrinsic {
            price: call_price,
            intrinsic,
        });
    }
    if !(call_price < upper) {
        return Err(Error::PriceAboveForward {
            price: call_price,
            upper,
        });
    }

    let b = ctx.discount_factor;
    let target = if strike >= ctx.forward {
        call_price / b
    } else {
        call_price / b - (ctx.forward - strike)
    };
    if !(target > 0.0) {
        return Err(Error::PriceBelowIntrinsic {
            price: call_price,
            intrinsic,
        });
    }
    let ln_target = target.ln();
    let sqrt_t = ctx.maturity.sqrt();
    let (f, k) = (ctx.forward, strike);

    // h(σ) = ln otm(σ) − ln target, increasing in σ.
    let h = |vol: f64| otm_undiscounted(f, k, vol * sqrt_t).ln() - ln_target;

    let mut lo = VOL_LOWER;
    while h(lo) > 0.0 {
        lo *= 0.125;
        if lo < 1e-300 {
            return Err(Error::NoConvergence { price: call_price });
        }
    }
    let mut hi = VOL_UPPER;
    while !(h(hi) >= 0.0) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::NoConvergence { price: call_price });
        }
    }

    let mut vol = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        let hv = h(vol);
        if hv == 0.0 {
            return Ok(vol);
        }
        if hv < 0.0 {
            lo = vol;
        } else {
            hi = vol;
        }
        let sd = vol * sqrt_t;
        let d1 = (f / k).ln() / sd + 0.5 * sd;
        let otm = otm_undiscounted(f, k, sd);
        let slope = f * norm_pdf(d1) * sqrt_t / otm;
        let newton = vol - hv / slope;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if (next - vol).abs() <= 4.0 * f64::EPSILON * vol || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        vol = next;
    }
    Err(Error::NoConvergence { price: call_price })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ForwardContext {
        ForwardContext::new(1.0, 1.0, 1.0).unwrap()
    }

    /// Discounted expected lognormal payoff by composite Simpson in the
    /// Gaussian driver, independent of the closed form.
    fn quadrature_call(ctx: &ForwardContext, strike: f64, vol: f64) -> f64 {
        let sd = vol * ctx.maturity.sqrt();
        let z0 = ((strike / ctx.forward).ln() + 0.5 * sd * sd) / sd;
        let (a, b) = (z0, z0.max(0.0) + 12.0);
        let n = 40_000;
        let h = (b - a) / n as f64;
        let payoff = |z: f64| {
            let s = ctx.forward * (sd * z - 0.5 * sd * sd).exp();
            (s - strike).max(0.0) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        let mut acc = payoff(a) + payoff(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * payoff(a + i as f64 * h);
        }
        ctx.discount_factor * acc * h / 3.0
    }

    #[test]
    fn at_the_money_zero_vol_is_zero() {
        assert_eq!(black_call(&unit(), 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(black_call(&unit(), 1.0, 1e-300).unwrap(), 0.0);
    }

    #[test]
    fn far_strike_reference_price() {
        let ctx = ForwardContext::new(100.0, 1.0, 1.0).unwrap();
        let c = black_call(&ctx, 150.0, 0.156).unwrap();
        assert!((c - 0.0279).abs() < 5e-4, "{c}");
        let q = quadrature_call(&ctx, 150.0, 0.156);
        assert!((c - q).abs() < 1e-10, "{c} vs {q}");
    }

    #[test]
    fn quadrature_oracle_on_grid() {
        let ctx = ForwardContext::new(2.0, 0.95, 0.7).unwrap();
        for &k in &[0.5, 1.5, 2.0, 2.5, 6.0] {
            for &v in &[0.05, 0.2, 0.8] {
                let c = black_call(&ctx, k, v).unwrap();
                let q = quadrature_call(&ctx, k, v);
                assert!((c - q).abs() < 1e-10, "k={k} v={v}: {c} vs {q}");
            }
        }
    }

    #[test]
    fn parity_and_symmetry() {
        let ctx = ForwardContext::new(1.3, 0.9, 2.0).unwrap();
        for i in 1..60 {
            let k = 0.05 * i as f64;
            let c = black_call(&ctx, k, 0.3).unwrap();
            let p = black_put(&ctx, k, 0.3).unwrap();
            let parity = ctx.discount_factor * (ctx.forward - k);
            assert!((c - p - parity).abs() <= 1e-14, "k={k}");
        }
        let c = black_call(&ctx, ctx.forward, 0.25).unwrap();
        let p = black_put(&ctx, ctx.forward, 0.25).unwrap();
        assert!((c - p).abs() <= 1e-15);
        let put_intrinsic = black_put(&unit(), 2.0, 0.0).unwrap();
        assert_eq!(put_intrinsic, 1.0);
        let at_fwd = black_call(&unit(), 1.0, 0.2).unwrap() - black_put(&unit(), 1.0, 0.2).unwrap();
        assert!(at_fwd.abs() < 1e-16);
    }

    #[test]
    fn price_bounds_and_monotonicity() {
        let ctx = ForwardContext::new(1.0, 0.97, 1.5).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..400 {
            let k = 0.01 * (1.03f64).powi(i);
            let c = black_call(&ctx, k, 0.4).unwrap();
            assert!(c >= ctx.call_intrinsic(k) && c <= ctx.discounted_forward());
            assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn vega_matches_finite_difference() {
        let ctx = ForwardContext::new(1.0, 0.98, 0.5).unwrap();
        for &k in &[0.8, 1.0, 1.25] {
            for &v in &[0.25, 0.5, 1.0] {
                let h = 1e-5 * v;
                let fd = (black_call(&ctx, k, v + h).unwrap()
                    - black_call(&ctx, k, v - h).unwrap())
                    / (2.0 * h);
                let an = black_vega(&ctx, k, v).unwrap();
                assert!(((fd - an) / an).abs() < 1e-6, "k={k} v={v}");
            }
        }
    }

    #[test]
    fn implied_vol_round_trip_atm() {
        let ctx = unit();
        let c = black_call(&ctx, 1.0, 0.215).unwrap();
        assert!((implied_vol(&ctx, 1.0, c).unwrap() - 0.215).abs() < 1e-8);
    }

    #[test]
    fn implied_vol_far_strike() {
        let ctx = ForwardContext::new(100.0, 1.0, 1.0).unwrap();
        let v = implied_vol(&ctx, 150.0, 0.0279).unwrap();
        assert!((v - 0.156).abs() < 1e-3, "{v}");
        let back = black_call(&ctx, 150.0, v).unwrap();
        assert!((back - 0.0279).abs() <= 1e-12 * 100.0);
    }

    #[test]
    fn implied_vol_rejects_out_of_bounds() {
        let ctx = unit();
        assert!(matches!(
            implied_vol(&ctx, 0.8, 0.19),
            Err(Error::PriceBelowIntrinsic { .. })
        ));
        assert!(matches!(
            implied_vol(&ctx, 1.2, 0.0),
            Err(Error::PriceBelowIntrinsic { .. })
        ));
        assert!(matches!(
            implied_vol(&ctx, 1.2, 1.0),
            Err(Error::PriceAboveForward { .. })
        ));
        assert!(matches!(
            implied_vol(&ctx, -1.0, 0.1),
            Err(Error::NonPositiveStrike(_))
        ));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            black_call(&unit(), 0.0, 0.2),
            Err(Error::NonPositiveStrike(_))
        ));
        assert!(matches!(
            black_call(&unit(), 1.0, -0.2),
            Err(Error::InvalidVolatility(_))
        ));
        assert!(ForwardContext::new(1.0, 1.2, 1.0).is_err());
        assert!(ForwardContext::new(-1.0, 1.0, 1.0).is_err());
        assert!(ForwardContext::new(1.0, 1.0, 0.0).is_err());
    }
}
