//! Command-line front end behind the `svi-guard` binary.
//!
//! Exit codes: 0 clean, 2 arbitrage detected (report still written),
//! 1 usage or input error.

pub mod report;
pub mod smile_file;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::bounds::{practical_slope_exact, practical_slope_quadratic, SlopeBoundConfig};
use crate::calibration::{calibrate, CalibrationConfig, FitSpace, MarketSmile, Weights};
use crate::pricing::ForwardContext;
use crate::scan::{evaluate_grid, full_report, GridPoint, ScanGrid};
use crate::svi::{SviParams, TotalVarianceCurve};
use crate::Execution;

use report::{to_json, write_atomic, BoundSection, InputEcho, ReportDocument, SmileEcho};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_INPUT_ERROR: i32 = 1;
pub const EXIT_ARBITRAGE: i32 = 2;

/// Environment variable capping worker threads (0 or unset: automatic).
pub const THREADS_ENV: &str = "SVI_GUARD_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "svi-guard",
    version,
    propagate_version = true,
    about = "SVI calibration, wing-slope bounds and strike-space arbitrage scans"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit SVI to a `strike,vol_percent` CSV smile under a slope cap and scan the fit.
    Calibrate(CalibrateArgs),
    /// Scan explicit SVI parameters for call-spread and butterfly arbitrage.
    Scan(ScanArgs),
    /// Practical asymptotic-slope limit from an extreme strike and price cap.
    Bound(BoundArgs),
}

#[derive(Debug, Args)]
pub struct ContextArgs {
    /// Forward price F.
    #[arg(long, default_value_t = 1.0)]
    pub forward: f64,
    /// Discount factor B.
    #[arg(long, default_value_t = 1.0)]
    pub discount: f64,
    /// Maturity in years.
    #[arg(long = "T", visible_alias = "maturity", default_value_t = 1.0)]
    pub maturity: f64,
}

impl ContextArgs {
    fn build(&self) -> Result<ForwardContext> {
        Ok(ForwardContext::new(
            self.forward,
            self.discount,
            self.maturity,
        )?)
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Smallest scanned moneyness K/F.
    #[arg(long, default_value_t = 1e-2)]
    pub min_moneyness: f64,
    /// Largest scanned moneyness K/F.
    #[arg(long, default_value_t = 1e7)]
    pub max_moneyness: f64,
    #[arg(long, default_value_t = 64)]
    pub points_per_decade: usize,
}

impl GridArgs {
    fn build(&self) -> Result<ScanGrid> {
        Ok(ScanGrid::new(
            self.min_moneyness,
            self.max_moneyness,
            self.points_per_decade,
        )?)
    }
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    /// Extreme strike K_max (default 1e6·F).
    #[arg(long)]
    pub k_max: Option<f64>,
    /// Largest acceptable call price at K_max (default 1e-4·F).
    #[arg(long)]
    pub c_max: Option<f64>,
}

impl LimitArgs {
    fn build(&self, ctx: ForwardContext) -> Result<SlopeBoundConfig> {
        let d = SlopeBoundConfig::default_for(ctx);
        Ok(SlopeBoundConfig::new(
            self.k_max.unwrap_or(d.k_max),
            self.c_max.unwrap_or(d.c_max),
            ctx,
        )?)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpaceArg {
    Variance,
    Vol,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightsArg {
    Uniform,
    Vega,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV file with header `strike,vol_percent`.
    pub smile_file: PathBuf,
    /// Cap on b(1+|ρ|); `inf` for none.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub slope_cap: f64,
    /// Also keep the slope strictly below 4/T.
    #[arg(long)]
    pub gatheral: bool,
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Residual space of the least-squares objective.
    #[arg(long, value_enum, default_value_t = SpaceArg::Variance)]
    pub space: SpaceArg,
    #[arg(long, value_enum, default_value_t = WeightsArg::Uniform)]
    pub weights: WeightsArg,
    #[command(flatten)]
    pub ctx: ContextArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub limits: LimitArgs,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-node `moneyness,implied_vol,call_price,g` CSV for the fit.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long)]
    pub b: f64,
    #[arg(long)]
    pub s: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub m: f64,
    #[command(flatten)]
    pub ctx: ContextArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub limits: LimitArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-node `moneyness,implied_vol,call_price,g` CSV.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub limits: LimitArgs,
    #[command(flatten)]
    pub ctx: ContextArgs,
    /// Also solve the bound with the full Black price instead of the d₁-only approximation.
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_CLEAN,
                _ => EXIT_INPUT_ERROR,
            };
        }
    };
    match configure_threads().and_then(|()| execute(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT_ERROR
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_ENV}={raw:?} is not a thread count"))?;
    #[cfg(feature = "parallel")]
    if n > 0 {
        // A pool may already exist when embedded; the cap is best effort then.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

/// Run a parsed command.
pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Bound(a) => cmd_bound(a),
    }
}

fn emit(doc: &ReportDocument, out: Option<&Path>) -> Result<()> {
    let bytes = to_json(doc)?;
    match out {
        Some(path) => write_atomic(path, &bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn write_plot_data(path: &Path, points: &[GridPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["moneyness", "implied_vol", "call_price", "g"])?;
    for p in points {
        w.write_record([p.moneyness, p.implied_vol, p.call_price, p.g].map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().context("buffering plot data")?;
    write_atomic(path, &bytes)
}

fn scan_and_emit(
    doc: &mut ReportDocument,
    params: &SviParams,
    ctx: &ForwardContext,
    grid: &ScanGrid,
    limits: &SlopeBoundConfig,
    out: Option<&Path>,
    plot_data: Option<&Path>,
) -> Result<i32> {
    let report = full_report(params, ctx, grid, limits)?;
    let detected = report.arbitrage_detected();
    if let Some(path) = plot_data {
        let curve = TotalVarianceCurve::new(*params, ctx.maturity)?;
        write_plot_data(
            path,
            &evaluate_grid(&curve, ctx, grid, Execution::default())?,
        )?;
    }
    doc.arbitrage = Some(report);
    doc.arbitrage_detected = Some(detected);
    emit(doc, out)?;
    Ok(if detected { EXIT_ARBITRAGE } else { EXIT_CLEAN })
}

pub fn load_smile(path: &Path, ctx: ForwardContext) -> Result<(MarketSmile, SmileEcho)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let quotes = smile_file::read_quotes(bytes.as_slice())
        .with_context(|| format!("parsing {}", path.display()))?;
    let echo = SmileEcho {
        path: path.display().to_string(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
        quotes: quotes.len(),
    };
    let smile = MarketSmile::new(ctx, quotes, "ACT/365 maturity as given by --T")?;
    Ok((smile, echo))
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<i32> {
    let ctx = args.ctx.build()?;
    let grid = args.grid.build()?;
    let limits = args.limits.build(ctx)?;
    let (smile, echo) = load_smile(&args.smile_file, ctx)?;
    let cfg = CalibrationConfig {
        slope_cap: args.slope_cap,
        impose_gatheral: args.gatheral,
        restarts: args.restarts,
        weights: match args.weights {
            WeightsArg::Uniform => Weights::Uniform,
            WeightsArg::Vega => Weights::Vega,
        },
        space: match args.space {
            SpaceArg::Variance => FitSpace::ImpliedVariance,
            SpaceArg::Vol => FitSpace::ImpliedVol,
        },
        seed: args.seed,
        ..CalibrationConfig::default()
    };
    cfg.validate()?;
    let fit = calibrate(&smile, &cfg)?;

    let mut doc = ReportDocument::new(
        "calibrate",
        InputEcho {
            smile: Some(echo),
            ctx,
            params: None,
            grid: Some(grid),
            calibration: Some(cfg),
            bound: limits,
        },
    );
    let params = fit.params;
    doc.calibration = Some(fit);
    scan_and_emit(
        &mut doc,
        &params,
        &ctx,
        &grid,
        &limits,
        args.out.as_deref(),
        args.plot_data.as_deref(),
    )
}

fn cmd_scan(args: &ScanArgs) -> Result<i32> {
    let ctx = args.ctx.build()?;
    let grid = args.grid.build()?;
    let limits = args.limits.build(ctx)?;
    let params = SviParams::new(args.a, args.b, args.s, args.rho, args.m)?;
    let mut doc = ReportDocument::new(
        "scan",
        InputEcho {
            smile: None,
            ctx,
            params: Some(params),
            grid: Some(grid),
            calibration: None,
            bound: limits,
        },
    );
    scan_and_emit(
        &mut doc,
        &params,
        &ctx,
        &grid,
        &limits,
        args.out.as_deref(),
        args.plot_data.as_deref(),
    )
}

fn cmd_bound(args: &BoundArgs) -> Result<i32> {
    let ctx = args.ctx.build()?;
    let cfg = args.limits.build(ctx)?;
    let quadratic = practical_slope_quadratic(&cfg)?;
    let exact = if args.exact {
        Some(practical_slope_exact(&cfg)?)
    } else {
        None
    };
    if !quadratic.is_finite() {
        bail!("bound is not finite for these inputs");
    }
    eprintln!("practical_slope_quadratic = {quadratic}");
    if let Some(s) = exact {
        eprintln!("practical_slope_exact = {s}");
    }
    let mut doc = ReportDocument::new(
        "bound",
        InputEcho {
            smile: None,
            ctx,
            params: None,
            grid: None,
            calibration: None,
            bound: cfg,
        },
    );
    doc.bound = Some(BoundSection {
        y_max: cfg.y_max(),
        practical_slope_quadratic: quadratic,
        practical_slope_exact: exact,
    });
    emit(&doc, args.out.as_deref())?;
    Ok(EXIT_CLEAN)
}
