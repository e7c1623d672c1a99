//! Strike-space arbitrage scans.
//!
//! Call-spread arbitrage shows up as call prices increasing in strike;
//! butterfly arbitrage as a negative local-volatility denominator `g`.
//! Both are evaluated on a log-uniform grid in `K/F`, adjacent violating
//! cells are merged, and interval endpoints are refined by bisection
//! between grid points.

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundVerdict, SlopeBoundConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::pricing::{black_call, norm_cdf, norm_pdf, ForwardContext};
use crate::svi::{SviParams, TotalVarianceCurve};

/// Absolute tolerance on consecutive price differences, in units of `B·F`.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-16;
/// Violations whose prices stay below this (in units of `B·F`) are flagged negligible.
pub const NEGLIGIBLE_PRICE: f64 = 1e-18;
/// Endpoint refinement of call-spread intervals, relative in moneyness.
const MONEYNESS_REFINE_TOL: f64 = 1e-3;
/// Endpoint refinement of negative-`g` intervals, absolute in log-moneyness.
const LOG_MONEYNESS_REFINE_TOL: f64 = 1e-6;

/// Log-uniform grid in moneyness `K/F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub min_moneyness: f64,
    pub max_moneyness: f64,
    pub points_per_decade: usize,
}

impl Default for ScanGrid {
    fn default() -> Self {
        Self {
            min_moneyness: 1e-2,
            max_moneyness: 1e7,
            points_per_decade: 64,
        }
    }
}

impl ScanGrid {
    pub fn new(min_moneyness: f64, max_moneyness: f64, points_per_decade: usize) -> Result<Self> {
        let g = Self {
            min_moneyness,
            max_moneyness,
            points_per_decade,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_moneyness > 0.0 && self.min_moneyness.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "min_moneyness must be positive, got {}",
                self.min_moneyness
            )));
        }
        if !(self.max_moneyness > self.min_moneyness && self.max_moneyness.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "max_moneyness {} must exceed min_moneyness {}",
                self.max_moneyness, self.min_moneyness
            )));
        }
        if self.points_per_decade < 16 {
            return Err(Error::InvalidGrid(format!(
                "points_per_decade must be at least 16, got {}",
                self.points_per_decade
            )));
        }
        Ok(())
    }

    /// Grid nodes in `K/F`, first and last included exactly.
    pub fn moneyness(&self) -> Vec<f64> {
        let lo = self.min_moneyness.log10();
        let hi = self.max_moneyness.log10();
        let cells = (((hi - lo) * self.points_per_decade as f64).ceil() as usize).max(1);
        let mut out: Vec<f64> = (0..=cells)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / cells as f64))
            .collect();
        out[0] = self.min_moneyness;
        out[cells] = self.max_moneyness;
        out
    }
}

/// A closed interval in moneyness `K/F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoneynessInterval {
    pub lower: f64,
    pub upper: f64,
    /// The violation reaches the first grid node (lower end not bracketed).
    pub open_lower: bool,
    /// The violation reaches the last grid node (upper end not bracketed).
    pub open_upper: bool,
}

impl MoneynessInterval {
    pub fn contains(&self, moneyness: f64) -> bool {
        self.lower <= moneyness && moneyness <= self.upper
    }
}

/// An interval where call prices increase with strike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallSpreadViolation {
    #[serde(flatten)]
    pub interval: MoneynessInterval,
    /// Largest price inside the interval, in currency.
    pub max_price: f64,
    /// Total price increase across the violating cells.
    pub price_rise: f64,
    /// Prices stay below `1e-18·B·F`; listed but indistinguishable from noise.
    pub numerically_negligible: bool,
}

/// An interval where `g < 0` (negative implied density).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButterflyViolation {
    #[serde(flatten)]
    pub interval: MoneynessInterval,
    pub min_g: f64,
}

/// Combined bound verdicts and strike-space scans for one smile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageReport {
    pub monotonicity_violations: Vec<CallSpreadViolation>,
    pub negative_g_intervals: Vec<ButterflyViolation>,
    /// `K/F` where the call price last stops increasing beyond the forward:
    /// the upper end of the last non-negligible call-spread violation at
    /// `K/F ≥ 1`, or the first grid node at or beyond the forward when the
    /// wing is monotone.
    pub price_argmax_moneyness: f64,
    pub verdict: BoundVerdict,
}

impl ArbitrageReport {
    /// True when any scan found a violation or the right wing forces `d₁ → +∞`.
    pub fn arbitrage_detected(&self) -> bool {
        !self.monotonicity_violations.is_empty()
            || !self.negative_g_intervals.is_empty()
            || self.verdict.d1_limit_class == crate::bounds::D1LimitClass::PlusInfinity
    }
}

/// Per-node values behind the scans, also used for plot output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub moneyness: f64,
    pub implied_vol: f64,
    pub call_price: f64,
    pub g: f64,
}

/// Evaluate vol, call price and `g` at every grid node.
pub fn evaluate_grid(
    curve: &TotalVarianceCurve,
    ctx: &ForwardContext,
    grid: &ScanGrid,
    exec: Execution,
) -> Result<Vec<GridPoint>> {
    grid.validate()?;
    let nodes = grid.moneyness();
    exec.map(&nodes, |&x| -> Result<GridPoint> {
        let y = x.ln();
        let vol = curve.implied_vol(y)?;
        Ok(GridPoint {
            moneyness: x,
            implied_vol: vol,
            call_price: black_call(ctx, x * ctx.forward, vol)?,
            g: curve.g(y)?,
        })
    })
    .into_iter()
    .collect()
}

/// Slope `dC/dK` of the call price along the smile at moneyness `x`.
fn price_slope(curve: &TotalVarianceCurve, ctx: &ForwardContext, x: f64) -> f64 {
    let y = x.ln();
    let w = curve.total_variance(y);
    let sd = w.sqrt();
    let d1 = -y / sd + 0.5 * sd;
    let d2 = d1 - sd;
    // dC/dK = −B·Φ(d₂) + B·F·φ(d₁)·∂√w/∂K, with ∂√w/∂K = w′/(2·√w·K).
    let dsd_dk = curve.total_variance_dy(y) / (2.0 * sd * x * ctx.forward);
    ctx.discount_factor * (ctx.forward * norm_pdf(d1) * dsd_dk - norm_cdf(d2))
}

/// Bisect on `x ∈ [lo, hi]` (moneyness) for the sign change of `pred`, where
/// `pred(lo) != pred(hi)`; geometric midpoints, relative tolerance `tol`.
fn bisect_moneyness(mut lo: f64, mut hi: f64, tol: f64, pred: impl Fn(f64) -> bool) -> f64 {
    let at_lo = pred(lo);
    while hi / lo - 1.0 > tol {
        let mid = (lo * hi).sqrt();
        if pred(mid) == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Locate where `pred` switches away from `from` within a few consecutive
/// nodes; falls back to the middle node when no switch is bracketed.
fn refine_transition(nodes: &[GridPoint], from: bool, pred: &impl Fn(f64) -> bool) -> f64 {
    let xs: Vec<f64> = nodes.iter().map(|p| p.moneyness).collect();
    let states: Vec<bool> = xs.iter().map(|&x| pred(x)).collect();
    for k in 0..xs.len() - 1 {
        if states[k] == from && states[k + 1] != from {
            return bisect_moneyness(xs[k], xs[k + 1], MONEYNESS_REFINE_TOL, pred);
        }
    }
    xs[xs.len() / 2]
}

/// Maximal runs of `true` in `flags`, as inclusive index ranges.
fn runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, flags.len() - 1));
    }
    out
}

fn check_curve_positive(points: &[GridPoint]) -> Result<()> {
    // evaluate_grid already errors on w ≤ 0; kept for callers passing their own points.
    match points.iter().find(|p| !(p.implied_vol > 0.0)) {
        Some(p) => Err(Error::NonPositiveVariance {
            y: p.moneyness.ln(),
            w: 0.0,
        }),
        None => Ok(()),
    }
}

fn call_spread_from_points(
    curve: &TotalVarianceCurve,
    ctx: &ForwardContext,
    points: &[GridPoint],
) -> Result<Vec<CallSpreadViolation>> {
    check_curve_positive(points)?;
    let scale = ctx.discounted_forward();
    let tol = MONOTONICITY_TOLERANCE * scale;
    // Cell i spans nodes i and i+1.
    let rising: Vec<bool> = points
        .windows(2)
        .map(|w| w[1].call_price - w[0].call_price > tol)
        .collect();
    let last = points.len() - 1;
    let increasing = |x: f64| price_slope(curve, ctx, x) > 0.0;
    let out = runs(&rising)
        .into_iter()
        .map(|(i, j)| {
            let (open_lower, open_upper) = (i == 0, j + 1 == last);
            let lower = if open_lower {
                points[0].moneyness
            } else {
                refine_transition(&points[i - 1..=i + 1], false, &increasing)
            };
            let upper = if open_upper {
                points[last].moneyness
            } else {
                refine_transition(&points[j..=j + 2], true, &increasing)
            };
            let cells = &points[i..=j + 1];
            let max_price = cells.iter().map(|p| p.call_price).fold(0.0, f64::max);
            CallSpreadViolation {
                interval: MoneynessInterval {
                    lower,
                    upper,
                    open_lower,
                    open_upper,
                },
                max_price,
                price_rise: cells[cells.len() - 1].call_price - cells[0].call_price,
                numerically_negligible: max_price < NEGLIGIBLE_PRICE * scale,
            }
        })
        .collect();
    Ok(out)
}

fn butterfly_from_points(
    curve: &TotalVarianceCurve,
    points: &[GridPoint],
) -> Result<Vec<ButterflyViolation>> {
    check_curve_positive(points)?;
    let negative: Vec<bool> = points.iter().map(|p| p.g < 0.0).collect();
    let last = points.len() - 1;
    let g_negative = |x: f64| curve.g(x.ln()).map(|g| g < 0.0).unwrap_or(false);
    let refine = |lo: f64, hi: f64| {
        // Tolerance is absolute in y = ln(K/F), i.e. relative in K/F.
        bisect_moneyness(lo, hi, LOG_MONEYNESS_REFINE_TOL, g_negative)
    };
    Ok(runs(&negative)
        .into_iter()
        .map(|(i, j)| {
            let (open_lower, open_upper) = (i == 0, j == last);
            let lower = if open_lower {
                points[0].moneyness
            } else {
                refine(points[i - 1].moneyness, points[i].moneyness)
            };
            let upper = if open_upper {
                points[last].moneyness
            } else {
                refine(points[j].moneyness, points[j + 1].moneyness)
            };
            let min_g = points[i..=j]
                .iter()
                .map(|p| p.g)
                .fold(f64::INFINITY, f64::min);
            ButterflyViolation {
                interval: MoneynessInterval {
                    lower,
                    upper,
                    open_lower,
                    open_upper,
                },
                min_g,
            }
        })
        .collect())
}

/// Intervals of `K/F` where call prices increase with strike.
pub fn scan_call_monotonicity(
    curve: &TotalVarianceCurve,
    ctx: &ForwardContext,
    grid: &ScanGrid,
) -> Result<Vec<CallSpreadViolation>> {
    scan_call_monotonicity_with(curve, ctx, grid, Execution::default())
}

pub fn scan_call_monotonicity_with(
    curve: &TotalVarianceCurve,
    ctx: &ForwardContext,
    grid: &ScanGrid,
    exec: Execution,
) -> Result<Vec<CallSpreadViolation>> {
    let points = evaluate_grid(curve, ctx, grid, exec)?;
    call_spread_from_points(curve, ctx, &points)
}

/// Intervals of `K/F` where `g < 0`.
pub fn scan_butterfly(
    curve: &TotalVarianceCurve,
    grid: &ScanGrid,
) -> Result<Vec<ButterflyViolation>> {
    scan_butterfly_with(curve, grid, Execution::default())
}

pub fn scan_butterfly_with(
    curve: &TotalVarianceCurve,
    grid: &ScanGrid,
    exec: Execution,
) -> Result<Vec<ButterflyViolation>> {
    grid.validate()?;
    let nodes = grid.moneyness();
    let points: Vec<GridPoint> = exec
        .map(&nodes, |&x| -> Result<GridPoint> {
            let y = x.ln();
            Ok(GridPoint {
                moneyness: x,
                implied_vol: curve.implied_vol(y)?,
                call_price: f64::NAN,
                g: curve.g(y)?,
            })
        })
        .into_iter()
        .collect::<Result<_>>()?;
    butterfly_from_points(curve, &points)
}

fn argmax_beyond_forward(points: &[GridPoint], violations: &[CallSpreadViolation]) -> f64 {
    violations
        .iter()
        .filter(|v| !v.numerically_negligible && v.interval.upper >= 1.0)
        .map(|v| v.interval.upper)
        .next_back()
        .unwrap_or_else(|| {
            points
                .iter()
                .map(|p| p.moneyness)
                .find(|&x| x >= 1.0)
                .unwrap_or(points[points.len() - 1].moneyness)
        })
}

/// Bound verdicts plus both scans for one set of SVI parameters.
pub fn full_report(
    p: &SviParams,
    ctx: &ForwardContext,
    grid: &ScanGrid,
    cfg: &SlopeBoundConfig,
) -> Result<ArbitrageReport> {
    full_report_with(p, ctx, grid, cfg, Execution::default())
}

pub fn full_report_with(
    p: &SviParams,
    ctx: &ForwardContext,
    grid: &ScanGrid,
    cfg: &SlopeBoundConfig,
    exec: Execution,
) -> Result<ArbitrageReport> {
    ctx.validate()?;
    let curve = TotalVarianceCurve::new(*p, ctx.maturity)?;
    let verdict = BoundVerdict::evaluate(p, cfg)?;
    let points = evaluate_grid(&curve, ctx, grid, exec)?;
    let monotonicity_violations = call_spread_from_points(&curve, ctx, &points)?;
    let negative_g_intervals = butterfly_from_points(&curve, &points)?;
    Ok(ArbitrageReport {
        price_argmax_moneyness: argmax_beyond_forward(&points, &monotonicity_violations),
        monotonicity_violations,
        negative_g_intervals,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ForwardContext {
        ForwardContext::new(1.0, 1.0, 1.0).unwrap()
    }

    fn flat() -> SviParams {
        SviParams::new(0.04, 0.0, 0.1, 0.0, 0.0).unwrap()
    }

    #[test]
    fn grid_nodes() {
        let g = ScanGrid::new(1.0, 1e7, 64).unwrap();
        let x = g.moneyness();
        assert_eq!(x.len(), 7 * 64 + 1);
        assert_eq!(x[0], 1.0);
        assert_eq!(*x.last().unwrap(), 1e7);
        assert!((x[64] - 10.0).abs() < 1e-12);
        assert!(x.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn invalid_grids() {
        assert!(ScanGrid::new(0.0, 10.0, 64).is_err());
        assert!(ScanGrid::new(2.0, 1.0, 64).is_err());
        assert!(ScanGrid::new(0.1, 10.0, 15).is_err());
    }

    #[test]
    fn runs_extraction() {
        assert_eq!(
            runs(&[false, true, true, false, true]),
            vec![(1, 2), (4, 4)]
        );
        assert_eq!(runs(&[true, true]), vec![(0, 1)]);
        assert!(runs(&[false, false]).is_empty());
    }

    #[test]
    fn flat_smile_is_clean() {
        let curve = TotalVarianceCurve::new(flat(), 1.0).unwrap();
        let grid = ScanGrid::default();
        assert!(scan_call_monotonicity(&curve, &unit(), &grid)
            .unwrap()
            .is_empty());
        assert!(scan_butterfly(&curve, &grid).unwrap().is_empty());
        let r = full_report(
            &flat(),
            &unit(),
            &grid,
            &SlopeBoundConfig::default_for(unit()),
        )
        .unwrap();
        assert!(!r.arbitrage_detected());
        assert!(r.verdict.passes_gatheral && r.verdict.passes_lee && r.verdict.passes_practical);
        assert_eq!(r.price_argmax_moneyness, 1.0);
    }

    #[test]
    fn price_slope_matches_difference_quotient() {
        let p = SviParams::new(-0.112306, 0.596259, 0.302274, 0.677123, 0.590297).unwrap();
        let curve = TotalVarianceCurve::new(p, 1.0).unwrap();
        let ctx = ForwardContext::new(100.0, 0.95, 1.0).unwrap();
        let price =
            |x: f64| black_call(&ctx, x * 100.0, curve.implied_vol(x.ln()).unwrap()).unwrap();
        for x in [0.5, 1.0, 3.0, 19.0, 150.0] {
            let h = 1e-5 * x;
            let fd = (price(x + h) - price(x - h)) / (2.0 * h * 100.0);
            let an = price_slope(&curve, &ctx, x);
            assert!(
                (fd - an).abs() < 1e-7 * an.abs().max(1e-3),
                "x={x}: {fd} vs {an}"
            );
        }
    }

    #[test]
    fn rejects_nonpositive_variance() {
        let zero = SviParams::new(0.0, 0.0, 0.1, 0.0, 0.0).unwrap();
        let curve = TotalVarianceCurve::new(zero, 1.0).unwrap();
        assert!(scan_butterfly(&curve, &ScanGrid::default()).is_err());
        assert!(scan_call_monotonicity(&curve, &unit(), &ScanGrid::default()).is_err());
    }
}
