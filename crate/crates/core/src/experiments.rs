//! Pricing-error metrics, leave-one-out cross-validation and the masking
//! experiment.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CurveError, Result};
use crate::estimator::{instrument_gram, solve, solve_with_instrument_gram, CurveSolution, EstimatorConfig, Prior};
use crate::instruments::{CashFlowMatrix, Instrument, WeightMode};
use crate::kernel::{GraphRegularization, ScalarKernel, SeparableKernel};

/// Basis points per unit of yield.
pub const BP: f64 = 1e4;

/// Maturity cut points in years. Bucket `i` is `(edges[i-1], edges[i]]`,
/// with the first bucket starting at zero; maturities past the last edge fall
/// in no bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BucketSpec {
    edges: Vec<f64>,
}

impl BucketSpec {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return invalid("at least one bucket edge is required");
        }
        if !(edges[0].is_finite() && edges[0] > 0.0) {
            return invalid("first bucket edge must be positive");
        }
        if edges.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return invalid("bucket edges must be strictly increasing");
        }
        Ok(Self { edges })
    }

    /// `{1, 5, 10, 15, ..., 50}`.
    pub fn standard() -> Self {
        let mut edges = vec![1.0];
        edges.extend((1..=10).map(|k| 5.0 * k as f64));
        Self { edges }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn bucket_of(&self, maturity: f64) -> Option<usize> {
        let tol = crate::instruments::DATE_TOLERANCE;
        self.edges.iter().position(|&e| maturity <= e + tol)
    }

    /// Labels such as `"0-1"`, `"1-5"`.
    pub fn labels(&self) -> Vec<String> {
        let mut lo = 0.0;
        self.edges
            .iter()
            .map(|&hi| {
                let s = format!("{}-{}", fmt_edge(lo), fmt_edge(hi));
                lo = hi;
                s
            })
            .collect()
    }
}

fn fmt_edge(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

impl Default for BucketSpec {
    fn default() -> Self {
        Self::standard()
    }
}

impl TryFrom<Vec<f64>> for BucketSpec {
    type Error = CurveError;
    fn try_from(edges: Vec<f64>) -> Result<Self> {
        Self::new(edges)
    }
}

impl From<BucketSpec> for Vec<f64> {
    fn from(b: BucketSpec) -> Self {
        b.edges
    }
}

/// Yield-to-maturity error of one instrument under fitted curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingError {
    pub class_id: usize,
    pub id: String,
    pub maturity: f64,
    pub market_ytm: f64,
    pub model_ytm: f64,
}

impl PricingError {
    pub fn new(inst: &Instrument, model_price: f64) -> Result<Self> {
        Ok(Self {
            class_id: inst.class_id(),
            id: inst.id().to_string(),
            maturity: inst.maturity(),
            market_ytm: inst.ytm()?,
            model_ytm: inst.ytm_for_price(model_price)?,
        })
    }

    /// Model minus market yield, in basis points.
    pub fn error_bp(&self) -> f64 {
        (self.model_ytm - self.market_ytm) * BP
    }
}

/// Reprices each instrument on its own class curve.
pub fn pricing_errors(instruments: &[Instrument], curves: &CurveSolution) -> Result<Vec<PricingError>> {
    instruments
        .iter()
        .map(|inst| {
            let a = inst.class_id();
            if a >= curves.num_classes() {
                return invalid(format!("instrument {} has class {a} outside the fit", inst.id()));
            }
            PricingError::new(inst, inst.reprice(|z| curves.discount_at(a, z)))
        })
        .collect()
}

/// Root mean square of errors in basis points; `None` for an empty set.
pub fn rmse_bp(errors_bp: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (n, ss) = errors_bp
        .into_iter()
        .fold((0usize, 0.0), |(n, ss), e| (n + 1, ss + e * e));
    (n > 0).then(|| (ss / n as f64).sqrt())
}

/// Maturity range over which errors are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Region {
    /// Index into a [`BucketSpec`].
    Bucket(usize),
    /// Maturity `≤ H`.
    AtMost(f64),
    /// Maturity `> H`.
    Beyond(f64),
    Overall,
}

impl Region {
    pub fn contains(&self, maturity: f64, buckets: &BucketSpec) -> bool {
        let tol = crate::instruments::DATE_TOLERANCE;
        match *self {
            Region::Bucket(i) => buckets.bucket_of(maturity) == Some(i),
            Region::AtMost(h) => maturity <= h + tol,
            Region::Beyond(h) => maturity > h + tol,
            Region::Overall => true,
        }
    }

    pub fn label(&self, buckets: &BucketSpec) -> String {
        match *self {
            Region::Bucket(i) => buckets.labels()[i].clone(),
            Region::AtMost(h) => format!("<={}", fmt_edge(h)),
            Region::Beyond(h) => format!(">{}", fmt_edge(h)),
            Region::Overall => "overall".into(),
        }
    }
}

/// RMSE in bp of the errors of one class within a region.
pub fn region_rmse(errors: &[PricingError], class_id: usize, region: Region, buckets: &BucketSpec) -> Option<f64> {
    rmse_bp(
        errors
            .iter()
            .filter(|e| e.class_id == class_id && region.contains(e.maturity, buckets))
            .map(PricingError::error_bp),
    )
}

// ---------------------------------------------------------------------------
// Leave-one-out cross-validation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvGrid {
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl Default for LoocvGrid {
    /// `α ∈ {0.01, ..., 0.10}`, `γ ∈ {0.01, 0.05, ..., 100}·10⁻⁴`.
    fn default() -> Self {
        Self {
            gammas: [0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0]
                .iter()
                .map(|g| g * 1e-4)
                .collect(),
            alphas: (1..=10).map(|k| k as f64 / 100.0).collect(),
        }
    }
}

impl LoocvGrid {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() || self.alphas.is_empty() {
            return invalid("LOOCV grid must be non-empty");
        }
        if self.gammas.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return invalid("LOOCV gammas must be positive");
        }
        if self.alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return invalid("LOOCV alphas must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvSettings {
    pub grid: LoocvGrid,
    pub lambda: f64,
    pub prior: Prior,
    pub jitter: f64,
}

impl Default for LoocvSettings {
    fn default() -> Self {
        Self {
            grid: LoocvGrid::default(),
            lambda: 1.0,
            prior: Prior::Constant,
            jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoocvBest {
    pub gamma: f64,
    pub alpha: f64,
    pub rmse_bp: f64,
}

/// LOOCV RMSE over the `γ × α` grid for one class; `rmse_bp[i][j]` belongs to
/// `gammas[i]`, `alphas[j]` and is `None` where a refit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvSurface {
    pub class_id: usize,
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub rmse_bp: Vec<Vec<Option<f64>>>,
    pub best: Option<LoocvBest>,
}

impl LoocvSurface {
    fn new(class_id: usize, grid: &LoocvGrid, rmse_bp: Vec<Vec<Option<f64>>>) -> Self {
        let mut best: Option<LoocvBest> = None;
        for (i, row) in rmse_bp.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = *v {
                    if best.is_none_or(|b| v < b.rmse_bp) {
                        best = Some(LoocvBest {
                            gamma: grid.gammas[i],
                            alpha: grid.alphas[j],
                            rmse_bp: v,
                        });
                    }
                }
            }
        }
        Self {
            class_id,
            gammas: grid.gammas.clone(),
            alphas: grid.alphas.clone(),
            rmse_bp,
            best,
        }
    }
}

/// Standalone leave-one-out cross-validation of every class. Each left-out
/// instrument is repriced under a direct re-solve on the remaining quotes of
/// its class; weights are those of the full cross-section.
pub fn loocv(cfm: &CashFlowMatrix, settings: &LoocvSettings) -> Result<Vec<LoocvSurface>> {
    settings.grid.validate()?;
    let grid = &settings.grid;
    let mut out = Vec::with_capacity(cfm.num_classes());
    for a in 0..cfm.num_classes() {
        let sub = cfm.single_class(a);
        let m = sub.num_instruments();
        if m < 2 {
            return invalid(format!("LOOCV needs at least two instruments in class {a}, got {m}"));
        }
        let market: Vec<f64> = sub.instruments().iter().map(Instrument::ytm).collect::<Result<_>>()?;
        let mut surface = vec![vec![None; grid.alphas.len()]; grid.gammas.len()];
        for (j, &alpha) in grid.alphas.iter().enumerate() {
            let scalar = ScalarKernel::new(alpha)?;
            let s = instrument_gram(&sub, &scalar);
            for (i, &gamma) in grid.gammas.iter().enumerate() {
                let kernel = SeparableKernel::new(scalar, GraphRegularization::standalone(vec![gamma])?)?;
                let cfg = EstimatorConfig::new(kernel)
                    .with_lambda(settings.lambda)
                    .with_prior(settings.prior)
                    .with_jitter(settings.jitter);
                surface[i][j] = loo_cell(&sub, &cfg, &s, &market).ok();
            }
        }
        out.push(LoocvSurface::new(a, grid, surface));
    }
    Ok(out)
}

fn loo_cell(sub: &CashFlowMatrix, cfg: &EstimatorConfig, s: &nalgebra::DMatrix<f64>, market: &[f64]) -> Result<f64> {
    let m = sub.num_instruments();
    let mut errors = Vec::with_capacity(m);
    for left in 0..m {
        let keep: Vec<usize> = (0..m).filter(|&i| i != left).collect();
        let rest = sub.select(&keep);
        let s_rest = s.select_rows(&keep).select_columns(&keep);
        let fit = solve_with_instrument_gram(&rest, cfg, &s_rest)?;
        let inst = &sub.instruments()[left];
        let model = inst.ytm_for_price(inst.reprice(|z| fit.discount_at(0, z)))?;
        errors.push((model - market[left]) * BP);
    }
    rmse_bp(errors).ok_or_else(|| CurveError::InvalidInput("empty LOOCV cell".into()))
}

/// Averages per-date surfaces cell by cell over the dates where the cell is
/// valid, then recomputes the argmin.
pub fn average_surfaces(per_date: &[Vec<LoocvSurface>]) -> Result<Vec<LoocvSurface>> {
    let Some(first) = per_date.first() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::with_capacity(first.len());
    for (c, template) in first.iter().enumerate() {
        let grid = LoocvGrid {
            gammas: template.gammas.clone(),
            alphas: template.alphas.clone(),
        };
        let (ng, na) = (grid.gammas.len(), grid.alphas.len());
        let mut sum = vec![vec![(0.0, 0usize); na]; ng];
        for date in per_date {
            let s = date
                .get(c)
                .filter(|s| s.class_id == template.class_id && s.gammas == grid.gammas && s.alphas == grid.alphas)
                .ok_or_else(|| CurveError::InvalidInput("LOOCV surfaces differ across dates".into()))?;
            for i in 0..ng {
                for j in 0..na {
                    if let Some(v) = s.rmse_bp[i][j] {
                        sum[i][j].0 += v;
                        sum[i][j].1 += 1;
                    }
                }
            }
        }
        let avg = sum
            .into_iter()
            .map(|row| row.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect())
            .collect();
        out.push(LoocvSurface::new(template.class_id, &grid, avg));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Masking experiment

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskingConfig {
    pub horizon: f64,
    pub masked_class: usize,
    /// Coupling strengths tried besides the standalone `θ = 0`.
    pub thetas: Vec<f64>,
    /// Per-class `γ`.
    pub gammas: Vec<f64>,
    pub alpha: f64,
    pub lambda: f64,
    pub prior: Prior,
    pub jitter: f64,
    pub weight_mode: WeightMode,
    pub buckets: BucketSpec,
}

impl Default for MaskingConfig {
    /// `H = 10`, class 0 masked, `θ ∈ {1, 5, 10, 50, 100, 500, 1000}·10⁻⁴`,
    /// `γ = 10⁻⁴` for two classes, `α = 0.05`.
    fn default() -> Self {
        Self {
            horizon: 10.0,
            masked_class: 0,
            thetas: [1.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0].iter().map(|t| t * 1e-4).collect(),
            gammas: vec![1e-4, 1e-4],
            alpha: 0.05,
            lambda: 1.0,
            prior: Prior::Constant,
            jitter: 0.0,
            weight_mode: WeightMode::Duration,
            buckets: BucketSpec::standard(),
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return invalid("masking horizon must be positive");
        }
        if self.masked_class >= self.gammas.len() {
            return invalid(format!(
                "masked class {} out of range for {} classes",
                self.masked_class,
                self.gammas.len()
            ));
        }
        if self.thetas.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return invalid("theta values must be non-negative");
        }
        Ok(())
    }

    /// `0` followed by the configured grid.
    pub fn all_thetas(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.thetas.iter().copied()).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.gammas.len()
    }

    /// Estimator configuration for a uniform coupling `θ`.
    pub fn estimator(&self, theta: f64) -> Result<EstimatorConfig> {
        let kernel = SeparableKernel::new(
            ScalarKernel::new(self.alpha)?,
            GraphRegularization::uniform(self.gammas.clone(), theta)?,
        )?;
        let cfg = EstimatorConfig::new(kernel)
            .with_lambda(self.lambda)
            .with_prior(self.prior)
            .with_jitter(self.jitter);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Regions reported per class: buckets, `≤ H`, `> H`, overall.
    pub fn regions(&self) -> Vec<Region> {
        let mut r: Vec<Region> = (0..self.buckets.len()).map(Region::Bucket).collect();
        r.extend([Region::AtMost(self.horizon), Region::Beyond(self.horizon), Region::Overall]);
        r
    }

    /// Instruments left in the fit once the masked class is cut at `H`.
    pub fn masked_subset(&self, instruments: &[Instrument]) -> Vec<Instrument> {
        instruments
            .iter()
            .filter(|i| {
                i.class_id() != self.masked_class || i.maturity() <= self.horizon + crate::instruments::DATE_TOLERANCE
            })
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Panel {
    Unmasked,
    Masked,
}

/// Errors of every instrument of one date under one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitErrors {
    pub panel: Panel,
    pub theta: f64,
    pub errors: Vec<PricingError>,
}

impl FitErrors {
    /// `SA` for the standalone fit, `TL` otherwise.
    pub fn label(&self) -> &'static str {
        theta_label(self.theta)
    }
}

fn theta_label(theta: f64) -> &'static str {
    if theta == 0.0 {
        "SA"
    } else {
        "TL"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateMasking {
    pub date: String,
    pub fits: Vec<FitErrors>,
}

/// Runs both panels of the masking experiment on one cross-section: every
/// `θ` is fitted on all quotes and on quotes with the masked class cut at `H`,
/// and all instruments are repriced under each fit.
pub fn masking_experiment(date: &str, data: &CashFlowMatrix, cfg: &MaskingConfig) -> Result<DateMasking> {
    cfg.validate()?;
    if data.num_classes() != cfg.num_classes() {
        return invalid(format!(
            "data has {} classes, masking config has {}",
            data.num_classes(),
            cfg.num_classes()
        ));
    }
    let all = data.instruments();
    let masked_class: Vec<&Instrument> = all.iter().filter(|i| i.class_id() == cfg.masked_class).collect();
    let short = masked_class
        .iter()
        .filter(|i| Region::AtMost(cfg.horizon).contains(i.maturity(), &cfg.buckets))
        .count();
    if short == 0 || short == masked_class.len() {
        return Err(CurveError::ExperimentSkipped(format!(
            "{date}: class {} needs quotes on both sides of {} years",
            cfg.masked_class, cfg.horizon
        )));
    }

    let n = cfg.num_classes();
    let full = CashFlowMatrix::assemble(all, n, cfg.weight_mode)?;
    let cut = CashFlowMatrix::assemble(&cfg.masked_subset(all), n, cfg.weight_mode)?;
    let mut fits = Vec::new();
    for (panel, fit_data) in [(Panel::Unmasked, &full), (Panel::Masked, &cut)] {
        for theta in cfg.all_thetas() {
            let curves = solve(fit_data, &cfg.estimator(theta)?)?;
            fits.push(FitErrors {
                panel,
                theta,
                errors: pricing_errors(all, &curves)?,
            });
        }
    }
    Ok(DateMasking {
        date: date.to_string(),
        fits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDate {
    pub date: String,
    pub reason: String,
}

/// One cell of the summary table, aggregated over dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub panel: Panel,
    pub label: String,
    pub theta: f64,
    pub class_id: usize,
    pub region: String,
    /// Per-date RMSE in bp, aligned with [`ExperimentReport::dates`]; `None` for empty regions.
    pub per_date: Vec<Option<f64>>,
    pub average: Option<f64>,
    pub median: Option<f64>,
    pub winner: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub horizon: f64,
    pub masked_class: usize,
    pub thetas: Vec<f64>,
    pub regions: Vec<String>,
    pub dates: Vec<String>,
    pub skipped: Vec<SkippedDate>,
    pub rows: Vec<SummaryRow>,
    pub details: Vec<DateMasking>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

impl ExperimentReport {
    /// Aggregates per-date results. The winner is the `θ` with the smallest
    /// average masked-panel error of the masked class over all its quotes.
    pub fn build(cfg: &MaskingConfig, details: Vec<DateMasking>, skipped: Vec<SkippedDate>) -> Result<Self> {
        cfg.validate()?;
        let thetas = cfg.all_thetas();
        let regions = cfg.regions();
        let mut rows = Vec::new();
        for panel in [Panel::Unmasked, Panel::Masked] {
            for &theta in &thetas {
                for class_id in 0..cfg.num_classes() {
                    for region in &regions {
                        let per_date: Vec<Option<f64>> = details
                            .iter()
                            .map(|d| {
                                d.fits
                                    .iter()
                                    .find(|f| f.panel == panel && f.theta == theta)
                                    .map(|f| region_rmse(&f.errors, class_id, *region, &cfg.buckets))
                                    .ok_or_else(|| {
                                        CurveError::InvalidInput(format!("date {} lacks theta {theta}", d.date))
                                    })
                            })
                            .collect::<Result<_>>()?;
                        let mut present: Vec<f64> = per_date.iter().flatten().copied().collect();
                        let average = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
                        rows.push(SummaryRow {
                            panel,
                            label: theta_label(theta).to_string(),
                            theta,
                            class_id,
                            region: region.label(&cfg.buckets),
                            per_date,
                            average,
                            median: median(&mut present),
                            winner: false,
                        });
                    }
                }
            }
        }
        let overall = Region::Overall.label(&cfg.buckets);
        let winner = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.panel == Panel::Masked && r.class_id == cfg.masked_class && r.region == overall)
            .filter_map(|(k, r)| r.average.map(|v| (k, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k);
        if let Some(k) = winner {
            rows[k].winner = true;
        }
        Ok(Self {
            horizon: cfg.horizon,
            masked_class: cfg.masked_class,
            thetas,
            regions: regions.iter().map(|r| r.label(&cfg.buckets)).collect(),
            dates: details.iter().map(|d| d.date.clone()).collect(),
            skipped,
            rows,
            details,
        })
    }

    pub fn row(&self, panel: Panel, theta: f64, class_id: usize, region: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.panel == panel && r.theta == theta && r.class_id == class_id && r.region == region)
    }

    pub fn winner(&self) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.winner)
    }
}

/// Runs the masking experiment on every date; dates that fail the
/// precondition are listed as skipped, other errors abort.
pub fn run_masking(dates: &[(String, CashFlowMatrix)], cfg: &MaskingConfig) -> Result<ExperimentReport> {
    let mut details = Vec::new();
    let mut skipped = Vec::new();
    for (date, data) in dates {
        match masking_experiment(date, data, cfg) {
            Ok(d) => details.push(d),
            Err(CurveError::ExperimentSkipped(reason)) => skipped.push(SkippedDate {
                date: date.clone(),
                reason,
            }),
            Err(e) => return Err(e),
        }
    }
    ExperimentReport::build(cfg, details, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::{build_bond, CashFlow};
    use approx::assert_relative_eq;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse_bp([0.0, 0.0]), Some(0.0));
        assert_eq!(rmse_bp([10.0]), Some(10.0));
        assert_relative_eq!(rmse_bp([3.0, -4.0]).unwrap(), 3.5355339059327378, epsilon = 1e-15);
        assert_eq!(rmse_bp(std::iter::empty()), None);
    }

    #[test]
    fn buckets() {
        let b = BucketSpec::standard();
        assert_eq!(b.len(), 11);
        assert_eq!(b.bucket_of(0.5), Some(0));
        assert_eq!(b.bucket_of(1.0), Some(0));
        assert_eq!(b.bucket_of(1.5), Some(1));
        assert_eq!(b.bucket_of(50.0), Some(10));
        assert_eq!(b.bucket_of(51.0), None);
        assert_eq!(b.labels()[1], "1-5");
        assert!(BucketSpec::new(vec![]).is_err());
        assert!(BucketSpec::new(vec![0.0, 1.0]).is_err());
        assert!(BucketSpec::new(vec![2.0, 1.0]).is_err());
        let json = serde_json_roundtrip(&b);
        assert_eq!(json, b);
    }

    fn serde_json_roundtrip(b: &BucketSpec) -> BucketSpec {
        let v: Vec<f64> = b.clone().into();
        BucketSpec::try_from(v).unwrap()
    }

    fn zero_coupon(class: usize, id: &str, t: f64, rate: f64) -> Instrument {
        Instrument::new(class, id, (-rate * t).exp(), vec![CashFlow::new(t, 1.0)]).unwrap()
    }

    #[test]
    fn pricing_error_sign_and_units() {
        let inst = zero_coupon(0, "z", 2.0, 0.03);
        let e = PricingError::new(&inst, (-0.031 * 2.0f64).exp()).unwrap();
        assert_relative_eq!(e.error_bp(), 10.0, epsilon = 1e-8);
        assert!(e.error_bp() > 0.0);
    }

    #[test]
    fn loocv_grid_of_size_one_returns_that_cell() {
        let insts: Vec<Instrument> = (1..=5).map(|k| zero_coupon(0, &format!("z{k}"), k as f64 * 2.0, 0.03)).collect();
        let cfm = CashFlowMatrix::assemble(&insts, 1, WeightMode::Duration).unwrap();
        let settings = LoocvSettings {
            grid: LoocvGrid {
                gammas: vec![1e-4],
                alphas: vec![0.05],
            },
            ..Default::default()
        };
        let s = loocv(&cfm, &settings).unwrap();
        let best = s[0].best.unwrap();
        assert_eq!((best.gamma, best.alpha), (1e-4, 0.05));
        assert_eq!(Some(best.rmse_bp), s[0].rmse_bp[0][0]);
    }

    #[test]
    fn loocv_needs_two_per_class() {
        let cfm = CashFlowMatrix::assemble(&[zero_coupon(0, "z", 1.0, 0.02)], 1, WeightMode::Unit).unwrap();
        assert!(loocv(&cfm, &LoocvSettings::default()).is_err());
    }

    #[test]
    fn duplicate_instrument_loo_error_matches_twin_residual() {
        let mut insts = vec![
            build_bond(0, "a", 0.03, 2, 2.0, 0.99).unwrap(),
            build_bond(0, "b", 0.035, 2, 5.0, 0.985).unwrap(),
            build_bond(0, "c", 0.04, 2, 10.0, 0.97).unwrap(),
        ];
        insts.push(insts[1].clone());
        let cfm = CashFlowMatrix::assemble(&insts, 1, WeightMode::Duration).unwrap();
        let settings = LoocvSettings {
            grid: LoocvGrid {
                gammas: vec![1e-4],
                alphas: vec![0.05],
            },
            ..Default::default()
        };
        // leaving out the second copy of b leaves a fit that still sees b
        let rest = cfm.select(&[0, 1, 2]);
        let cfg = EstimatorConfig::new(
            SeparableKernel::new(
                ScalarKernel::new(0.05).unwrap(),
                GraphRegularization::standalone(vec![1e-4]).unwrap(),
            )
            .unwrap(),
        );
        let fit = solve(&rest, &cfg).unwrap();
        let twin = PricingError::new(&insts[1], insts[1].reprice(|z| fit.discount_at(0, z))).unwrap();
        let s = loocv(&cfm, &settings).unwrap();
        let mut manual = Vec::new();
        for left in 0..4 {
            let keep: Vec<usize> = (0..4).filter(|&i| i != left).collect();
            let f = solve(&cfm.select(&keep), &cfg).unwrap();
            let inst = &cfm.instruments()[left];
            manual.push(PricingError::new(inst, inst.reprice(|z| f.discount_at(0, z))).unwrap().error_bp());
        }
        assert_relative_eq!(manual[3], twin.error_bp(), epsilon = 1e-9);
        assert_relative_eq!(s[0].rmse_bp[0][0].unwrap(), rmse_bp(manual).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn average_surfaces_skips_invalid_cells() {
        let grid = LoocvGrid {
            gammas: vec![1.0],
            alphas: vec![0.1, 0.2],
        };
        let d1 = vec![LoocvSurface::new(0, &grid, vec![vec![Some(2.0), None]])];
        let d2 = vec![LoocvSurface::new(0, &grid, vec![vec![Some(4.0), Some(1.0)]])];
        let avg = average_surfaces(&[d1, d2]).unwrap();
        assert_eq!(avg[0].rmse_bp, vec![vec![Some(3.0), Some(1.0)]]);
        assert_eq!(avg[0].best.unwrap().alpha, 0.2);
    }

    fn two_class_quotes() -> Vec<Instrument> {
        let mut v = Vec::new();
        for (k, t) in [1.0, 3.0, 7.0, 15.0, 25.0].iter().enumerate() {
            v.push(zero_coupon(0, &format!("b{k}"), *t, 0.035));
        }
        for (k, t) in [1.0, 5.0, 10.0, 20.0, 30.0].iter().enumerate() {
            v.push(zero_coupon(1, &format!("s{k}"), *t, 0.03));
        }
        v
    }

    #[test]
    fn masking_skips_when_nothing_to_mask() {
        let quotes: Vec<Instrument> = two_class_quotes()
            .into_iter()
            .filter(|i| i.class_id() == 1 || i.maturity() <= 10.0)
            .collect();
        let cfm = CashFlowMatrix::assemble(&quotes, 2, WeightMode::Duration).unwrap();
        let cfg = MaskingConfig::default();
        assert!(matches!(
            masking_experiment("d", &cfm, &cfg),
            Err(CurveError::ExperimentSkipped(_))
        ));
        let report = run_masking(&[("d".into(), cfm)], &cfg).unwrap();
        assert_eq!(report.skipped.len(), 1);
        assert!(report.dates.is_empty());
        assert!(report.rows.iter().all(|r| r.average.is_none()));
    }

    #[test]
    fn masking_report_layout() {
        let cfm = CashFlowMatrix::assemble(&two_class_quotes(), 2, WeightMode::Duration).unwrap();
        let cfg = MaskingConfig {
            thetas: vec![1e-2],
            ..Default::default()
        };
        let report = run_masking(&[("d1".into(), cfm.clone()), ("d2".into(), cfm)], &cfg).unwrap();
        assert_eq!(report.thetas, vec![0.0, 1e-2]);
        assert_eq!(report.rows.len(), 2 * 2 * 2 * (11 + 3));
        assert_eq!(report.winner().unwrap().panel, Panel::Masked);
        let sa = report.row(Panel::Masked, 0.0, 0, ">10").unwrap();
        assert_eq!(sa.label, "SA");
        assert_eq!(sa.per_date[0], sa.per_date[1]);
        assert_relative_eq!(sa.average.unwrap(), sa.per_date[0].unwrap());
        // empty bucket stays absent
        assert!(report.row(Panel::Masked, 0.0, 0, "40-45").unwrap().average.is_none());
    }

    #[test]
    fn overall_rmse_matches_pooled_errors() {
        let cfm = CashFlowMatrix::assemble(&two_class_quotes(), 2, WeightMode::Duration).unwrap();
        let cfg = MaskingConfig {
            thetas: vec![1e-3],
            ..Default::default()
        };
        let d = masking_experiment("d", &cfm, &cfg).unwrap();
        let report = ExperimentReport::build(&cfg, vec![d.clone()], vec![]).unwrap();
        for fit in &d.fits {
            let raw: Vec<f64> = fit.errors.iter().filter(|e| e.class_id == 0).map(|e| e.error_bp()).collect();
            let pooled = (raw.iter().map(|e| e * e).sum::<f64>() / raw.len() as f64).sqrt();
            let row = report.row(fit.panel, fit.theta, 0, "overall").unwrap();
            assert!((row.average.unwrap() - pooled).abs() <= 1e-12 * pooled.max(1.0));
        }
    }
}
