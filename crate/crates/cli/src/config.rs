//! JSON run configuration.

use std::path::{Path, PathBuf};

use multicurve::estimator::{EstimatorConfig, Prior};
use multicurve::experiments::{BucketSpec, LoocvGrid, LoocvSettings, MaskingConfig};
use multicurve::gp::NoiseSpec;
use multicurve::instruments::WeightMode;
use multicurve::kernel::{GraphRegularization, ScalarKernel, SeparableKernel};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub alpha: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self { alpha: 0.05 }
    }
}

/// One value for every class, or one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    All(f64),
    PerClass(Vec<f64>),
}

/// Uniform coupling of every class pair, or a full symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Uniform(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalGrid {
    pub step: f64,
    /// Defaults to `max(50, longest maturity)`.
    pub max: Option<f64>,
}

impl Default for EvalGrid {
    fn default() -> Self {
        Self { step: 0.25, max: None }
    }
}

impl EvalGrid {
    pub fn points(&self, longest_maturity: f64) -> Vec<f64> {
        let max = self.max.unwrap_or(longest_maturity.max(50.0));
        let n = (max / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum NoiseConfig {
    /// `Σ = Λ`.
    Ridge,
    Homoskedastic { variance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandSection {
    pub n_sigma: f64,
    /// Yield-band half-width cap; `null` disables it.
    pub cap: Option<f64>,
    pub noise: NoiseConfig,
}

impl Default for BandSection {
    fn default() -> Self {
        Self {
            n_sigma: 3.0,
            cap: Some(0.02),
            noise: NoiseConfig::Ridge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskingSection {
    pub horizon: f64,
    /// Class label; defaults to the first class.
    pub masked_class: Option<String>,
    pub thetas: Vec<f64>,
}

impl Default for MaskingSection {
    fn default() -> Self {
        let d = MaskingConfig::default();
        Self {
            horizon: d.horizon,
            masked_class: None,
            thetas: d.thetas,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Class labels used in the quote file, in index order.
    pub classes: Vec<String>,
    pub kernel: KernelSection,
    pub gamma: GammaSpec,
    pub theta: ThetaSpec,
    pub lambda: f64,
    pub jitter: f64,
    pub prior: Prior,
    pub weight_mode: WeightMode,
    pub buckets: BucketSpec,
    pub eval_grid: EvalGrid,
    pub bands: BandSection,
    pub loocv: LoocvGrid,
    pub masking: MaskingSection,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            classes: Vec::new(),
            kernel: KernelSection::default(),
            gamma: GammaSpec::All(1e-4),
            theta: ThetaSpec::Uniform(0.0),
            lambda: 1.0,
            jitter: 0.0,
            prior: Prior::Constant,
            weight_mode: WeightMode::Duration,
            buckets: BucketSpec::standard(),
            eval_grid: EvalGrid::default(),
            bands: BandSection::default(),
            loocv: LoocvGrid::default(),
            masking: MaskingSection::default(),
            output_dir: None,
        }
    }
}

fn input_err(e: multicurve::CurveError) -> CliError {
    CliError::curve("config", e)
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    /// Checks every section so that no computation starts on a bad config.
    pub fn validate(&self) -> CliResult<()> {
        if self.classes.is_empty() {
            return Err(CliError::input("config: `classes` must list at least one class label"));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(c) {
                return Err(CliError::input(format!("config: duplicate class label {c:?}")));
            }
        }
        self.estimator()?;
        if !(self.eval_grid.step.is_finite() && self.eval_grid.step > 0.0) {
            return Err(CliError::input("config: eval_grid.step must be positive"));
        }
        if let Some(m) = self.eval_grid.max {
            if !(m.is_finite() && m >= 0.0) {
                return Err(CliError::input("config: eval_grid.max must be non-negative"));
            }
        }
        if !(self.bands.n_sigma.is_finite() && self.bands.n_sigma >= 0.0) {
            return Err(CliError::input("config: bands.n_sigma must be non-negative"));
        }
        if let Some(c) = self.bands.cap {
            if !(c.is_finite() && c > 0.0) {
                return Err(CliError::input("config: bands.cap must be positive"));
            }
        }
        if let NoiseConfig::Homoskedastic { variance } = self.bands.noise {
            if !(variance.is_finite() && variance > 0.0) {
                return Err(CliError::input("config: bands.noise.variance must be positive"));
            }
        }
        self.loocv.validate().map_err(input_err)?;
        self.masking_config()?;
        Ok(())
    }

    pub fn gammas(&self) -> CliResult<Vec<f64>> {
        let a = self.num_classes();
        match &self.gamma {
            GammaSpec::All(g) => Ok(vec![*g; a]),
            GammaSpec::PerClass(v) if v.len() == a => Ok(v.clone()),
            GammaSpec::PerClass(v) => Err(CliError::input(format!(
                "config: {} gamma values for {a} classes",
                v.len()
            ))),
        }
    }

    pub fn regularization(&self) -> CliResult<GraphRegularization> {
        let gammas = self.gammas()?;
        let a = gammas.len();
        match &self.theta {
            ThetaSpec::Uniform(t) => GraphRegularization::uniform(gammas, *t),
            ThetaSpec::Matrix(rows) => {
                if rows.len() != a || rows.iter().any(|r| r.len() != a) {
                    return Err(CliError::input(format!("config: theta must be a {a}x{a} matrix")));
                }
                GraphRegularization::new(gammas, DMatrix::from_fn(a, a, |i, j| rows[i][j]))
            }
        }
        .map_err(input_err)
    }

    pub fn estimator(&self) -> CliResult<EstimatorConfig> {
        let scalar = ScalarKernel::new(self.kernel.alpha).map_err(input_err)?;
        let kernel = SeparableKernel::new(scalar, self.regularization()?).map_err(input_err)?;
        let cfg = EstimatorConfig::new(kernel)
            .with_lambda(self.lambda)
            .with_prior(self.prior)
            .with_jitter(self.jitter);
        cfg.validate().map_err(input_err)?;
        Ok(cfg)
    }

    pub fn noise(&self) -> NoiseSpec {
        match self.bands.noise {
            NoiseConfig::Ridge => NoiseSpec::Ridge,
            NoiseConfig::Homoskedastic { variance } => NoiseSpec::Homoskedastic(variance),
        }
    }

    pub fn loocv_settings(&self) -> LoocvSettings {
        LoocvSettings {
            grid: self.loocv.clone(),
            lambda: self.lambda,
            prior: self.prior,
            jitter: self.jitter,
        }
    }

    pub fn masking_config(&self) -> CliResult<MaskingConfig> {
        let masked_class = match &self.masking.masked_class {
            None => 0,
            Some(label) => self
                .class_index(label)
                .ok_or_else(|| CliError::input(format!("config: masked_class {label:?} is not a listed class")))?,
        };
        let cfg = MaskingConfig {
            horizon: self.masking.horizon,
            masked_class,
            thetas: self.masking.thetas.clone(),
            gammas: self.gammas()?,
            alpha: self.kernel.alpha,
            lambda: self.lambda,
            prior: self.prior,
            jitter: self.jitter,
            weight_mode: self.weight_mode,
            buckets: self.buckets.clone(),
        };
        cfg.validate().map_err(input_err)?;
        Ok(cfg)
    }
}
