//! Subcommands. Each date is processed independently on a thread pool of the
//! requested size; results are collected and written in date order.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Subcommand};
use multicurve::experiments::{
    average_surfaces, loocv, masking_experiment, DateMasking, ExperimentReport, LoocvSurface, Panel, SkippedDate,
};
use multicurve::gp::{posterior, PosteriorSurface};
use multicurve::instruments::{CashFlowMatrix, Instrument};
use multicurve::CurveError;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, fmt_opt, target, write_csv, write_json};
use crate::quotes::{instruments, read_quotes, write_quotes, Located, QuoteRow};

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit curves and write discount, yield, forward and yield bands per date.
    Estimate(RunArgs),
    /// Write discount and yield confidence bands with posterior diagnostics.
    Bands(RunArgs),
    /// Standalone leave-one-out cross-validation over the γ × α grid.
    Loocv(RunArgs),
    /// Masking experiment over the θ grid.
    Mask(RunArgs),
}

impl Command {
    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Estimate(a) | Command::Bands(a) | Command::Loocv(a) | Command::Mask(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Quote file (CSV).
    #[arg(long)]
    pub quotes: PathBuf,
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Inclusive date range `FROM:TO`, or a single date.
    #[arg(long)]
    pub dates: Option<DateRange>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DateRange {
    pub from: String,
    pub to: String,
}

impl FromStr for DateRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (from, to) = s.split_once(':').unwrap_or((s, s));
        for d in [from, to] {
            chrono::NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|_| format!("invalid date {d:?}"))?;
        }
        if from > to {
            return Err(format!("empty date range {s}"));
        }
        Ok(Self {
            from: from.into(),
            to: to.into(),
        })
    }
}

pub fn run(cmd: &Command) -> CliResult<Vec<PathBuf>> {
    let ctx = Context::load(cmd.args())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.threads)
        .build()
        .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    pool.install(|| match cmd {
        Command::Estimate(_) => estimate(&ctx),
        Command::Bands(_) => bands(&ctx),
        Command::Loocv(_) => run_loocv(&ctx),
        Command::Mask(_) => mask(&ctx),
    })
}

struct DateData {
    date: String,
    rows: Vec<QuoteRow>,
    instruments: Vec<Instrument>,
}

struct Context {
    cfg: RunConfig,
    dates: Vec<DateData>,
    out: PathBuf,
    threads: usize,
}

impl Context {
    fn load(args: &RunArgs) -> CliResult<Self> {
        if args.threads == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        let cfg = RunConfig::load(&args.config)?;
        let mut book = read_quotes(&args.quotes)?;
        if let Some(r) = &args.dates {
            book.retain(|d, _| *d >= r.from && *d <= r.to);
            if r.from == r.to {
                book.entry(r.from.clone()).or_default();
            }
        }
        let dates = book
            .into_iter()
            .map(|(date, rows)| {
                let instruments = instruments(&rows, &cfg.classes)?;
                let rows = rows.into_iter().map(|Located { row, .. }| row).collect();
                Ok(DateData {
                    date,
                    rows,
                    instruments,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let out = args
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            cfg,
            dates,
            out,
            threads: args.threads,
        })
    }

    fn assemble(&self, d: &DateData) -> CliResult<CashFlowMatrix> {
        CashFlowMatrix::assemble(&d.instruments, self.cfg.num_classes(), self.cfg.weight_mode)
            .map_err(|e| CliError::curve(&d.date, e))
    }

    /// Runs `f` on every date in parallel; the first error in date order wins.
    fn per_date<T: Send>(&self, f: impl Fn(&DateData) -> CliResult<T> + Sync + Send) -> CliResult<Vec<T>> {
        self.dates.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
    }

    fn label(&self, class: usize) -> &str {
        &self.cfg.classes[class]
    }
}

fn longest_maturity(insts: &[Instrument]) -> f64 {
    insts.iter().map(Instrument::maturity).fold(0.0, f64::max)
}

/// Posterior with the fitted scale, or the prior scale `1` without data.
fn fitted_posterior(ctx: &Context, d: &DateData, cfm: &CashFlowMatrix) -> CliResult<PosteriorSurface> {
    let est = ctx.cfg.estimator()?;
    let post = posterior(cfm, &est, &ctx.cfg.noise()).map_err(|e| CliError::curve(&d.date, e))?;
    match post.fit_scale() {
        Ok(s) => Ok(post.with_scale(s)),
        Err(CurveError::ScaleUndefined) => Ok(post.with_scale(1.0)),
        Err(e) => Err(CliError::curve(&d.date, e)),
    }
}

const CURVE_HEADER: [&str; 7] = ["z", "class", "discount", "yield", "forward", "band_lo", "band_hi"];

fn estimate(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let files = ctx.per_date(|d| {
        let cfm = ctx.assemble(d)?;
        let post = fitted_posterior(ctx, d, &cfm)?;
        let sol = post.solution();
        let zs = ctx.cfg.eval_grid.points(longest_maturity(&d.instruments));
        let mut records = Vec::new();
        for a in 0..ctx.cfg.num_classes() {
            let yf = sol.yield_and_forward(a, &zs).map_err(|e| CliError::curve(&d.date, e))?;
            let bands = post
                .confidence_bands(a, &zs, ctx.cfg.bands.n_sigma, ctx.cfg.bands.cap)
                .map_err(|e| CliError::curve(&d.date, e))?;
            for ((&z, (y, f)), b) in zs.iter().zip(yf).zip(bands) {
                records.push(vec![
                    fmt_f64(z),
                    ctx.label(a).to_string(),
                    fmt_f64(sol.discount_at(a, z)),
                    fmt_f64(y),
                    fmt_f64(f),
                    fmt_f64(b.yield_.lower),
                    fmt_f64(b.yield_.upper),
                ]);
            }
        }
        let curves = target(&ctx.out, &format!("curves_{}.csv", d.date))?;
        write_csv(&curves, &CURVE_HEADER, records)?;
        let defs = target(&ctx.out, &format!("instruments_{}.csv", d.date))?;
        let file = std::fs::File::create(&defs).map_err(|e| CliError::io(&defs, e))?;
        write_quotes(std::io::BufWriter::new(file), &d.rows).map_err(|e| CliError::io(&defs, e))?;
        Ok(vec![curves, defs])
    })?;
    Ok(files.into_iter().flatten().collect())
}

const BAND_HEADER: [&str; 9] = [
    "z",
    "class",
    "discount_lo",
    "discount",
    "discount_hi",
    "yield_lo",
    "yield",
    "yield_hi",
    "variance",
];

#[derive(Serialize)]
struct PosteriorSummary<'a> {
    date: &'a str,
    instruments: usize,
    scale: f64,
    q1: f64,
    q2: f64,
    log_likelihood: f64,
    task_correlation: Vec<Vec<f64>>,
}

fn bands(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let files = ctx.per_date(|d| {
        let cfm = ctx.assemble(d)?;
        let post = fitted_posterior(ctx, d, &cfm)?;
        let zs = ctx.cfg.eval_grid.points(longest_maturity(&d.instruments));
        let mut records = Vec::new();
        for a in 0..ctx.cfg.num_classes() {
            let bands = post
                .confidence_bands(a, &zs, ctx.cfg.bands.n_sigma, ctx.cfg.bands.cap)
                .map_err(|e| CliError::curve(&d.date, e))?;
            for b in bands {
                records.push(vec![
                    fmt_f64(b.z),
                    ctx.label(a).to_string(),
                    fmt_f64(b.discount.lower),
                    fmt_f64(b.discount.mean),
                    fmt_f64(b.discount.upper),
                    fmt_f64(b.yield_.lower),
                    fmt_f64(b.yield_.mean),
                    fmt_f64(b.yield_.upper),
                    fmt_f64(post.variance(a, b.z)),
                ]);
            }
        }
        let path = target(&ctx.out, &format!("bands_{}.csv", d.date))?;
        write_csv(&path, &BAND_HEADER, records)?;

        let (q1, q2) = post.likelihood_terms();
        let c = post.task_correlation();
        let summary = PosteriorSummary {
            date: &d.date,
            instruments: cfm.num_instruments(),
            scale: post.scale(),
            q1,
            q2,
            log_likelihood: post.log_likelihood(post.scale()),
            task_correlation: c.row_iter().map(|r| r.iter().copied().collect()).collect(),
        };
        let json = target(&ctx.out, &format!("posterior_{}.json", d.date))?;
        write_json(&json, &summary)?;
        Ok(vec![path, json])
    })?;
    Ok(files.into_iter().flatten().collect())
}

const LOOCV_HEADER: [&str; 4] = ["class", "gamma", "alpha", "rmse_bp"];

fn surface_records<'a>(ctx: &'a Context, surfaces: &'a [LoocvSurface]) -> impl Iterator<Item = Vec<String>> + 'a {
    surfaces.iter().flat_map(move |s| {
        s.gammas.iter().enumerate().flat_map(move |(i, g)| {
            s.alphas.iter().enumerate().map(move |(j, a)| {
                vec![
                    ctx.label(s.class_id).to_string(),
                    fmt_f64(*g),
                    fmt_f64(*a),
                    fmt_opt(s.rmse_bp[i][j]),
                ]
            })
        })
    })
}

#[derive(Serialize)]
struct LoocvBestEntry<'a> {
    class: &'a str,
    gamma: Option<f64>,
    alpha: Option<f64>,
    rmse_bp: Option<f64>,
}

fn run_loocv(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let settings = ctx.cfg.loocv_settings();
    let per_date = ctx.per_date(|d| {
        let cfm = ctx.assemble(d)?;
        let surfaces = loocv(&cfm, &settings).map_err(|e| CliError::curve(&d.date, e))?;
        let path = target(&ctx.out, &format!("loocv_{}.csv", d.date))?;
        write_csv(&path, &LOOCV_HEADER, surface_records(ctx, &surfaces))?;
        Ok((path, surfaces))
    })?;
    let (mut files, surfaces): (Vec<PathBuf>, Vec<Vec<LoocvSurface>>) = per_date.into_iter().unzip();
    let avg = average_surfaces(&surfaces).map_err(|e| CliError::curve("loocv", e))?;
    let path = target(&ctx.out, "loocv_average.csv")?;
    write_csv(&path, &LOOCV_HEADER, surface_records(ctx, &avg))?;
    files.push(path);
    let best: Vec<LoocvBestEntry> = avg
        .iter()
        .map(|s| LoocvBestEntry {
            class: ctx.label(s.class_id),
            gamma: s.best.map(|b| b.gamma),
            alpha: s.best.map(|b| b.alpha),
            rmse_bp: s.best.map(|b| b.rmse_bp),
        })
        .collect();
    let json = target(&ctx.out, "loocv_best.json")?;
    write_json(&json, &best)?;
    files.push(json);
    Ok(files)
}

const TABLE_HEADER: [&str; 9] = [
    "panel", "label", "theta", "class", "region", "average_bp", "median_bp", "dates", "winner",
];
const ERROR_HEADER: [&str; 10] = [
    "date", "panel", "label", "theta", "class", "id", "maturity", "market_ytm", "model_ytm", "error_bp",
];

#[derive(Serialize)]
struct MaskOutput<'a> {
    classes: &'a [String],
    report: &'a ExperimentReport,
}

fn mask(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let cfg = ctx.cfg.masking_config()?;
    let outcomes = ctx.per_date(|d| {
        let cfm = ctx.assemble(d)?;
        match masking_experiment(&d.date, &cfm, &cfg) {
            Ok(m) => Ok(Ok(m)),
            Err(CurveError::ExperimentSkipped(reason)) => Ok(Err(SkippedDate {
                date: d.date.clone(),
                reason,
            })),
            Err(e) => Err(CliError::curve(&d.date, e)),
        }
    })?;
    let mut details: Vec<DateMasking> = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(m) => details.push(m),
            Err(s) => {
                eprintln!("skipped {}: {}", s.date, s.reason);
                skipped.push(s);
            }
        }
    }
    let report = ExperimentReport::build(&cfg, details, skipped).map_err(|e| CliError::curve("mask", e))?;
    write_mask(ctx, &report)
}

fn write_mask(ctx: &Context, report: &ExperimentReport) -> CliResult<Vec<PathBuf>> {
    let table = target(&ctx.out, "mask_table.csv")?;
    write_csv(
        &table,
        &TABLE_HEADER,
        report.rows.iter().map(|r| {
            vec![
                panel_name(r.panel).to_string(),
                r.label.clone(),
                fmt_f64(r.theta),
                ctx.label(r.class_id).to_string(),
                r.region.clone(),
                fmt_opt(r.average),
                fmt_opt(r.median),
                r.per_date.iter().flatten().count().to_string(),
                r.winner.to_string(),
            ]
        }),
    )?;

    let errors = target(&ctx.out, "mask_errors.csv")?;
    let records = report.details.iter().flat_map(|d| {
        d.fits.iter().flat_map(move |f| {
            f.errors.iter().map(move |e| {
                vec![
                    d.date.clone(),
                    panel_name(f.panel).to_string(),
                    f.label().to_string(),
                    fmt_f64(f.theta),
                    ctx.label(e.class_id).to_string(),
                    e.id.clone(),
                    fmt_f64(e.maturity),
                    fmt_f64(e.market_ytm),
                    fmt_f64(e.model_ytm),
                    fmt_f64(e.error_bp()),
                ]
            })
        })
    });
    write_csv(&errors, &ERROR_HEADER, records)?;

    let json = target(&ctx.out, "mask_report.json")?;
    write_json(
        &json,
        &MaskOutput {
            classes: &ctx.cfg.classes,
            report,
        },
    )?;
    Ok(vec![table, errors, json])
}

fn panel_name(p: Panel) -> &'static str {
    match p {
        Panel::Unmasked => "unmasked",
        Panel::Masked => "masked",
    }
}
