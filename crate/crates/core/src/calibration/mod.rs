//! Multi-start least-squares SVI calibration with a cap on the wing slope.
//!
//! The slope cap is built into the parameterization: the optimizer works on
//! `(a, u, ln s, r, m)` with `ρ = sin r` and `b = sin²u · cap/(1 + |ρ|)`, so
//! every candidate satisfies `b(1 + |ρ|) ≤ cap`. Candidates violating the
//! nonnegative-variance condition score +∞ and are never accepted.

mod simplex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::pricing::{black_vega, ForwardContext, OptionQuote};
use crate::svi::SviParams;

use simplex::{minimize, SimplexOptions};

/// Relative margin keeping an imposed `4/T` cap strictly below the limit.
pub const STRICT_MARGIN: f64 = 1e-6;

/// One expiry of market quotes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSmile {
    pub ctx: ForwardContext,
    pub quotes: Vec<OptionQuote>,
    #[serde(default)]
    pub day_count_note: String,
}

impl MarketSmile {
    pub fn new(
        ctx: ForwardContext,
        quotes: Vec<OptionQuote>,
        day_count_note: impl Into<String>,
    ) -> Result<Self> {
        let smile = Self {
            ctx,
            quotes,
            day_count_note: day_count_note.into(),
        };
        smile.validate()?;
        Ok(smile)
    }

    pub fn validate(&self) -> Result<()> {
        self.ctx.validate()?;
        if self.quotes.len() < 5 {
            return Err(Error::InvalidSmile(format!(
                "need at least 5 quotes, got {}",
                self.quotes.len()
            )));
        }
        for (i, q) in self.quotes.iter().enumerate() {
            if !(q.strike > 0.0 && q.strike.is_finite()) {
                return Err(Error::InvalidSmile(format!(
                    "quote {i}: strike {} is not positive",
                    q.strike
                )));
            }
            if !(q.vol > 0.0 && q.vol < 5.0) {
                return Err(Error::InvalidSmile(format!(
                    "quote {i}: vol {} outside (0, 5)",
                    q.vol
                )));
            }
        }
        if let Some(i) = self
            .quotes
            .windows(2)
            .position(|w| w[1].strike <= w[0].strike)
        {
            return Err(Error::InvalidSmile(format!(
                "strikes must be strictly increasing (quote {} = {} after {})",
                i + 1,
                self.quotes[i + 1].strike,
                self.quotes[i].strike
            )));
        }
        Ok(())
    }

    pub fn log_moneyness(&self) -> Vec<f64> {
        self.quotes
            .iter()
            .map(|q| self.ctx.log_moneyness(q.strike))
            .collect()
    }
}

/// Per-quote weights in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    #[default]
    Uniform,
    /// Black vega at the quoted vol, normalized to a maximum of 1.
    Vega,
}

/// Space in which residuals are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitSpace {
    /// `v_SVI(y) − σ²`.
    #[default]
    ImpliedVariance,
    /// `√v_SVI(y) − σ`.
    ImpliedVol,
}

mod unbounded_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Upper bound on `b(1 + |ρ|)`; `f64::INFINITY` for none (`null` in JSON).
    #[serde(with = "unbounded_as_null")]
    pub slope_cap: f64,
    /// Additionally cap the slope just below `4/T` (the limit is strict).
    pub impose_gatheral: bool,
    pub restarts: usize,
    pub weights: Weights,
    pub space: FitSpace,
    pub seed: u64,
    /// Objective evaluations per local simplex run.
    pub max_iterations: usize,
    /// Relative objective change below which a local run stops.
    pub tolerance: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            slope_cap: f64::INFINITY,
            impose_gatheral: false,
            restarts: 16,
            weights: Weights::Uniform,
            space: FitSpace::ImpliedVariance,
            seed: 42,
            max_iterations: 20_000,
            tolerance: 1e-13,
            execution: Execution::default(),
        }
    }
}

impl CalibrationConfig {
    pub fn with_cap(slope_cap: f64) -> Self {
        Self {
            slope_cap,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope_cap > 0.0) {
            return Err(Error::InvalidCalibration(format!(
                "slope cap must be positive, got {}",
                self.slope_cap
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidCalibration(
                "restarts must be at least 1".into(),
            ));
        }
        if self.max_iterations < 100 {
            return Err(Error::InvalidCalibration(format!(
                "max_iterations must be at least 100, got {}",
                self.max_iterations
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::InvalidCalibration(format!(
                "tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        Ok(())
    }

    /// Cap actually enforced, after the optional `4/T` limit.
    pub fn effective_cap(&self, maturity: f64) -> f64 {
        if self.impose_gatheral {
            self.slope_cap.min(4.0 / maturity * (1.0 - STRICT_MARGIN))
        } else {
            self.slope_cap
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restarts: usize,
    pub best_restart: usize,
    pub best_objective: f64,
    pub median_objective: f64,
    pub converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: SviParams,
    /// Root-mean-square implied-vol residual.
    pub rmse: f64,
    pub objective: f64,
    /// `None` when the slope was unconstrained.
    pub effective_slope_cap: Option<f64>,
    pub fitted_slope: f64,
    /// Fitted slope within 1e-6 of the cap.
    pub constraint_active: bool,
    pub restarts_summary: RestartSummary,
}

/// Root-mean-square vol residual and per-quote residuals `σ_SVI − σ`.
pub fn evaluate_fit(p: &SviParams, smile: &MarketSmile) -> Result<(f64, Vec<f64>)> {
    let mut residuals = Vec::with_capacity(smile.quotes.len());
    for q in &smile.quotes {
        let y = smile.ctx.log_moneyness(q.strike);
        let v = p.variance(y);
        if !(v > 0.0) {
            return Err(Error::NonPositiveVariance {
                y,
                w: v * smile.ctx.maturity,
            });
        }
        residuals.push(v.sqrt() - q.vol);
    }
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok((rmse, residuals))
}

/// Maps unconstrained optimizer coordinates onto valid SVI parameters.
#[derive(Debug, Clone, Copy)]
struct Mapping {
    cap: Option<f64>,
}

impl Mapping {
    fn params(&self, x: &[f64]) -> Option<SviParams> {
        let rho = x[3].sin();
        let b = match self.cap {
            Some(cap) => x[1].sin().powi(2) * cap / (1.0 + rho.abs()),
            None => x[1] * x[1],
        };
        SviParams::new(x[0], b, x[2].exp(), rho, x[4]).ok()
    }

    fn coords(&self, p: &SviParams) -> [f64; 5] {
        let u = match self.cap {
            Some(cap) => (p.max_wing_slope() / cap).clamp(0.0, 1.0).sqrt().asin(),
            None => p.b().sqrt(),
        };
        [p.a(), u, p.s().ln(), p.rho().clamp(-1.0, 1.0).asin(), p.m()]
    }
}

struct Objective<'a> {
    ys: Vec<f64>,
    targets: Vec<f64>,
    weights: Vec<f64>,
    space: FitSpace,
    mapping: Mapping,
    _smile: &'a MarketSmile,
}

impl<'a> Objective<'a> {
    fn new(smile: &'a MarketSmile, cfg: &CalibrationConfig, mapping: Mapping) -> Result<Self> {
        let ys = smile.log_moneyness();
        let targets = smile
            .quotes
            .iter()
            .map(|q| match cfg.space {
                FitSpace::ImpliedVariance => q.vol * q.vol,
                FitSpace::ImpliedVol => q.vol,
            })
            .collect();
        let weights = match cfg.weights {
            Weights::Uniform => vec![1.0; ys.len()],
            Weights::Vega => {
                let raw = smile
                    .quotes
                    .iter()
                    .map(|q| black_vega(&smile.ctx, q.strike, q.vol))
                    .collect::<Result<Vec<_>>>()?;
                let top = raw.iter().cloned().fold(0.0, f64::max);
                if !(top > 0.0) {
                    return Err(Error::InvalidSmile("all vegas vanish".into()));
                }
                raw.into_iter().map(|v| v / top).collect()
            }
        };
        Ok(Self {
            ys,
            targets,
            weights,
            space: cfg.space,
            mapping,
            _smile: smile,
        })
    }

    fn of_params(&self, p: &SviParams) -> f64 {
        let mut acc = 0.0;
        for ((&y, &t), &w) in self.ys.iter().zip(&self.targets).zip(&self.weights) {
            let v = p.variance(y);
            let r = match self.space {
                FitSpace::ImpliedVariance => v - t,
                FitSpace::ImpliedVol => {
                    if !(v > 0.0) {
                        return f64::INFINITY;
                    }
                    v.sqrt() - t
                }
            };
            acc += w * r * r;
        }
        acc
    }

    fn of_coords(&self, x: &[f64]) -> f64 {
        match self.mapping.params(x) {
            Some(p) => self.of_params(&p),
            None => f64::INFINITY,
        }
    }
}

/// Moment-style starting point: vertex near the lowest quoted vol, minimum
/// variance near (a fraction of) the lowest quoted variance.
fn starting_point(smile: &MarketSmile, rng: &mut ChaCha8Rng, cap: Option<f64>) -> SviParams {
    let ys = smile.log_moneyness();
    let (i_min, min_vol) = smile
        .quotes
        .iter()
        .enumerate()
        .map(|(i, q)| (i, q.vol))
        .fold(
            (0, f64::INFINITY),
            |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
        );
    let span = (ys[ys.len() - 1] - ys[0]).max(1e-3);
    let rho: f64 = rng.gen_range(-0.9..0.9);
    let s: f64 = span * rng.gen_range(0.05..0.6);
    let m = ys[i_min] + span * rng.gen_range(-0.3..0.3);
    let b = match cap {
        Some(cap) => rng.gen_range(0.05..0.95) * cap / (1.0 + rho.abs()),
        None => rng.gen_range(0.05..1.5),
    };
    let floor = min_vol * min_vol * rng.gen_range(0.2..1.0);
    let a = floor - b * s * (1.0 - rho * rho).sqrt();
    SviParams::new(a, b, s, rho, m).expect("starting point is feasible by construction")
}

#[derive(Debug, Clone)]
struct LocalFit {
    params: SviParams,
    objective: f64,
    converged: bool,
}

fn local_fit(objective: &Objective<'_>, start: &SviParams, cfg: &CalibrationConfig) -> LocalFit {
    let opts = SimplexOptions {
        max_evaluations: cfg.max_iterations,
        f_tol: cfg.tolerance,
        f_abs: 1e-30,
        x_tol: 1e-9,
    };
    let mut x = objective.mapping.coords(start).to_vec();
    let mut best = objective.of_coords(&x);
    let mut converged = false;
    let mut step = 0.1;
    // Re-seed the simplex around the incumbent until it stops improving.
    for _ in 0..8 {
        let steps = [0.02 * step * 10.0, step * 3.0, step * 3.0, step * 3.0, step];
        let m = minimize(|z| objective.of_coords(z), &x, &steps, &opts);
        let improved =
            m.value < best * (1.0 - 1e-12) || (best.is_infinite() && m.value.is_finite());
        if m.value <= best {
            x = m.x;
            best = m.value;
        }
        converged = m.converged;
        if !improved {
            break;
        }
        step *= 0.3;
    }
    let params = objective.mapping.params(&x).unwrap_or(*start);
    LocalFit {
        params,
        objective: best,
        converged,
    }
}

/// Fit SVI to `smile` under the configured slope cap.
///
/// Restarts are independent and seeded from `(cfg.seed, restart index)`, so
/// the result does not depend on the execution strategy. The best objective
/// wins, ties going to the lowest restart index.
pub fn calibrate(smile: &MarketSmile, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    smile.validate()?;
    cfg.validate()?;
    let cap = cfg.effective_cap(smile.ctx.maturity);
    let mapping = Mapping {
        cap: cap.is_finite().then_some(cap),
    };
    let objective = Objective::new(smile, cfg, mapping)?;

    let fits: Vec<LocalFit> = cfg.execution.map_range(cfg.restarts, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let start = starting_point(smile, &mut rng, mapping.cap);
        local_fit(&objective, &start, cfg)
    });

    let mut best_restart = 0;
    for (i, f) in fits.iter().enumerate() {
        if f.objective < fits[best_restart].objective {
            best_restart = i;
        }
    }
    let best = &fits[best_restart];
    if !best.objective.is_finite() {
        return Err(Error::InvalidSmile(
            "no restart found a feasible fit".into(),
        ));
    }
    let mut objectives: Vec<f64> = fits.iter().map(|f| f.objective).collect();
    objectives.sort_by(f64::total_cmp);
    let n = objectives.len();
    let median_objective = if n % 2 == 1 {
        objectives[n / 2]
    } else {
        0.5 * (objectives[n / 2 - 1] + objectives[n / 2])
    };

    let (rmse, _) = evaluate_fit(&best.params, smile)?;
    let fitted_slope = best.params.max_wing_slope();
    Ok(CalibrationResult {
        params: best.params,
        rmse,
        objective: best.objective,
        effective_slope_cap: mapping.cap,
        fitted_slope,
        constraint_active: mapping
            .cap
            .is_some_and(|c| (c - fitted_slope).abs() <= 1e-6),
        restarts_summary: RestartSummary {
            restarts: cfg.restarts,
            best_restart,
            best_objective: best.objective,
            median_objective,
            converged: fits.iter().filter(|f| f.converged).count(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(p: &SviParams) -> MarketSmile {
        let ctx = ForwardContext::new(1.0, 1.0, 1.0).unwrap();
        let quotes = (0..19)
            .map(|i| {
                let k = 0.5 + i as f64 * (1.0 / 18.0);
                OptionQuote::new(k, p.variance(k.ln()).sqrt()).unwrap()
            })
            .collect();
        MarketSmile::new(ctx, quotes, "synthetic").unwrap()
    }

    #[test]
    fn mapping_round_trip() {
        let p = SviParams::new(-0.02, 0.3, 0.2, -0.4, 0.1).unwrap();
        for cap in [Some(1.0), Some(0.42 * 1.4), None] {
            let m = Mapping { cap };
            let q = m.params(&m.coords(&p)).unwrap();
            assert!((q.a() - p.a()).abs() < 1e-12);
            assert!((q.b() - p.b()).abs() < 1e-12);
            assert!((q.s() - p.s()).abs() < 1e-12);
            assert!((q.rho() - p.rho()).abs() < 1e-12);
            assert!((q.m() - p.m()).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_fit_on_exact_smile() {
        let p = SviParams::new(0.01, 0.2, 0.3, -0.3, 0.05).unwrap();
        let (rmse, res) = evaluate_fit(&p, &synthetic(&p)).unwrap();
        assert!(rmse < 1e-15);
        assert_eq!(res.len(), 19);
    }

    #[test]
    fn evaluate_fit_rejects_negative_variance() {
        let p = SviParams::new(0.0, 0.0, 0.3, 0.0, 0.0).unwrap();
        let smile = synthetic(&SviParams::new(0.01, 0.2, 0.3, -0.3, 0.05).unwrap());
        assert!(evaluate_fit(&p, &smile).is_err());
    }

    #[test]
    fn config_validation() {
        let smile = synthetic(&SviParams::new(0.01, 0.2, 0.3, -0.3, 0.05).unwrap());
        for cap in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                calibrate(&smile, &CalibrationConfig::with_cap(cap)),
                Err(Error::InvalidCalibration(_))
            ));
        }
        let cfg = CalibrationConfig {
            restarts: 0,
            ..CalibrationConfig::default()
        };
        assert!(calibrate(&smile, &cfg).is_err());
        assert_eq!(
            CalibrationConfig {
                impose_gatheral: true,
                ..CalibrationConfig::default()
            }
            .effective_cap(2.0),
            2.0 * (1.0 - STRICT_MARGIN)
        );
    }

    #[test]
    fn smile_validation() {
        let ctx = ForwardContext::new(1.0, 1.0, 1.0).unwrap();
        let q = |k: f64, v: f64| OptionQuote { strike: k, vol: v };
        let few = vec![q(0.9, 0.2), q(1.0, 0.2), q(1.1, 0.2), q(1.2, 0.2)];
        assert!(MarketSmile::new(ctx, few, "").is_err());
        let unsorted = vec![
            q(0.9, 0.2),
            q(1.0, 0.2),
            q(0.95, 0.2),
            q(1.2, 0.2),
            q(1.3, 0.2),
        ];
        assert!(MarketSmile::new(ctx, unsorted, "").is_err());
        let wild = vec![
            q(0.9, 0.2),
            q(1.0, 0.2),
            q(1.1, 5.0),
            q(1.2, 0.2),
            q(1.3, 0.2),
        ];
        assert!(MarketSmile::new(ctx, wild, "").is_err());
    }

    fn assert_recovered(fit: &CalibrationResult, p: &SviParams) {
        let got = [
            fit.params.a(),
            fit.params.b(),
            fit.params.s(),
            fit.params.rho(),
            fit.params.m(),
        ];
        let want = [p.a(), p.b(), p.s(), p.rho(), p.m()];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-4, "got {got:?}, want {want:?}");
        }
        assert!(fit.rmse <= 1e-10, "rmse {}", fit.rmse);
    }

    #[test]
    fn exact_recovery_unconstrained() {
        let p = SviParams::new(0.01, 0.2, 0.3, -0.3, 0.05).unwrap();
        let fit = calibrate(&synthetic(&p), &CalibrationConfig::default()).unwrap();
        assert_recovered(&fit, &p);
        assert!(!fit.constraint_active);
    }

    #[test]
    fn exact_recovery_with_slack_cap() {
        let p = SviParams::new(-0.02, 0.5, 0.15, 0.4, 0.1).unwrap();
        for space in [FitSpace::ImpliedVariance, FitSpace::ImpliedVol] {
            let cfg = CalibrationConfig {
                space,
                ..CalibrationConfig::with_cap(1.5)
            };
            let fit = calibrate(&synthetic(&p), &cfg).unwrap();
            assert_recovered(&fit, &p);
            assert!(fit.fitted_slope <= 1.5 + 1e-9);
        }
    }

    #[test]
    fn binding_cap_is_respected() {
        let p = SviParams::new(-0.02, 0.5, 0.15, 0.4, 0.1).unwrap();
        let fit = calibrate(&synthetic(&p), &CalibrationConfig::with_cap(0.3)).unwrap();
        assert!(fit.fitted_slope <= 0.3 + 1e-9);
        assert!(fit.constraint_active);
        assert!(fit.rmse > 1e-4);
    }

    #[test]
    fn identical_across_execution_modes() {
        let p = SviParams::new(0.01, 0.2, 0.3, -0.3, 0.05).unwrap();
        let smile = synthetic(&p);
        let base = CalibrationConfig {
            restarts: 6,
            ..CalibrationConfig::with_cap(0.4)
        };
        let seq = calibrate(
            &smile,
            &CalibrationConfig {
                execution: Execution::Sequential,
                ..base
            },
        )
        .unwrap();
        let par = calibrate(
            &smile,
            &CalibrationConfig {
                execution: Execution::Parallel,
                ..base
            },
        )
        .unwrap();
        assert_eq!(seq, par);
        assert_eq!(
            seq,
            calibrate(
                &smile,
                &CalibrationConfig {
                    execution: Execution::Sequential,
                    ..base
                }
            )
            .unwrap()
        );
    }

    #[test]
    fn vega_weights_fit_exact_smile() {
        let p = SviParams::new(0.01, 0.2, 0.3, -0.3, 0.05).unwrap();
        let cfg = CalibrationConfig {
            weights: Weights::Vega,
            ..CalibrationConfig::default()
        };
        assert_recovered(&calibrate(&synthetic(&p), &cfg).unwrap(), &p);
    }
}
