//! Gaussian-process reading of the kernel ridge estimator.
//!
//! Under the prior `g ~ GP(m, K)` and pricing noise `ε ~ N(0, Σ)` the posterior
//! mean is
//!
//! ```text
//! m_post(z) = m(z) + K(z, x)Cᵀ (CKCᵀ + Σ)⁻¹ (P - C m(x))
//! ```
//!
//! and with `m = p`, `Σ = Λ` it coincides with the ridge curve. The posterior
//! kernel is `K(y,z) - K(y,x)Cᵀ(CKCᵀ + Σ)⁻¹CK(x,z)`, scaled by the maximum
//! likelihood factor `ŝ = 2q₂/M`.
//!
//! Everything here is evaluated through each instrument's sparse cash flows
//! (`u_i(z) = Σ_j C_ij k(z, x_j)`), not through the grid coefficients `β`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, CurveError, Result};
use crate::estimator::{instrument_gram, prior_residual, CurveSolution, EstimatorConfig, Prior};
use crate::instruments::{CashFlowMatrix, CashFlowRow};
use crate::kernel::{check_maturity, SeparableKernel};
use crate::linalg::SpdFactor;

/// Pricing-noise covariance `Σ` (diagonal).
#[derive(Debug, Clone, PartialEq, Default)]
pub enum NoiseSpec {
    /// `Σ = Λ = diag(λ/ω)`.
    #[default]
    Ridge,
    /// `Σ = σ² I`.
    Homoskedastic(f64),
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct PosteriorSurface {
    solution: CurveSolution,
    kernel: SeparableKernel,
    priors: Vec<Prior>,
    grid: Vec<f64>,
    rows: Vec<CashFlowRow>,
    noise: Vec<f64>,
    factor: SpdFactor,
    /// `(CKCᵀ + Σ)⁻¹ r`.
    dual: DVector<f64>,
    q2: f64,
    scale: f64,
}

/// Lower, central and upper values at one maturity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lower: f64,
    pub mean: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub z: f64,
    pub discount: Band,
    /// Upper yield is `+∞` where the lower discount band is not positive.
    pub yield_: Band,
}

pub fn posterior(cfm: &CashFlowMatrix, cfg: &EstimatorConfig, noise: &NoiseSpec) -> Result<PosteriorSurface> {
    let solution = crate::estimator::solve(cfm, cfg)?;
    let m = cfm.num_instruments();
    let noise = match noise {
        NoiseSpec::Ridge => cfg.ridge_diagonal(cfm),
        NoiseSpec::Homoskedastic(s2) => {
            if !(s2.is_finite() && *s2 > 0.0) {
                return invalid(format!("noise variance must be positive, got {s2}"));
            }
            vec![*s2; m]
        }
        NoiseSpec::Diagonal(d) => {
            if d.len() != m {
                return invalid(format!("{} noise variances for {m} instruments", d.len()));
            }
            if let Some(bad) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return invalid(format!("noise variances must be positive, got {bad}"));
            }
            d.clone()
        }
    };

    let rows = cfm.rows().to_vec();
    let b = cfg.kernel.tasks().b();
    let s = instrument_gram(cfm, cfg.kernel.scalar());
    let mut sys = DMatrix::from_fn(m, m, |i, l| b[(rows[i].class_id, rows[l].class_id)] * s[(i, l)]);
    for (i, v) in noise.iter().enumerate() {
        sys[(i, i)] += v;
    }
    let factor = SpdFactor::new(&sys)?;
    let r = prior_residual(cfm, &cfg.priors);
    let dual = factor.solve(&r);
    let q2 = 0.5 * r.dot(&dual);

    Ok(PosteriorSurface {
        solution,
        kernel: cfg.kernel.clone(),
        priors: cfg.priors.clone(),
        grid: cfm.grid().to_vec(),
        rows,
        noise,
        factor,
        dual,
        q2,
        scale: 1.0,
    })
}

impl PosteriorSurface {
    /// The ridge solution fitted on the same data.
    pub fn solution(&self) -> &CurveSolution {
        &self.solution
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn num_instruments(&self) -> usize {
        self.rows.len()
    }

    pub fn num_classes(&self) -> usize {
        self.kernel.num_classes()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Maximum-likelihood scale `ŝ = 2q₂/M`.
    pub fn fit_scale(&self) -> Result<f64> {
        if self.rows.is_empty() {
            return Err(CurveError::ScaleUndefined);
        }
        Ok(2.0 * self.q2 / self.rows.len() as f64)
    }

    /// Sets the scale to [`PosteriorSurface::fit_scale`].
    pub fn fitted(self) -> Result<Self> {
        let s = self.fit_scale()?;
        Ok(self.with_scale(s))
    }

    /// `(q₁, q₂)` of the scale log-likelihood.
    pub fn likelihood_terms(&self) -> (f64, f64) {
        let m = self.rows.len() as f64;
        let q1 = 0.5 * self.factor.log_det() + 0.5 * m * (2.0 * std::f64::consts::PI).ln();
        (q1, self.q2)
    }

    /// `L(s) = -q₂/s - (M/2) ln s - q₁`.
    pub fn log_likelihood(&self, s: f64) -> f64 {
        let (q1, q2) = self.likelihood_terms();
        -q2 / s - 0.5 * self.rows.len() as f64 * s.ln() - q1
    }

    fn row_kernel(&self, row: &CashFlowRow, z: f64) -> f64 {
        let k = self.kernel.scalar();
        row.entries.iter().map(|&(j, c)| c * k.eval(z, self.grid[j])).sum()
    }

    fn row_kernel_slope(&self, row: &CashFlowRow, z: f64) -> f64 {
        let k = self.kernel.scalar();
        row.entries.iter().map(|&(j, c)| c * k.d_first(z, self.grid[j])).sum()
    }

    /// `m_post(z)` for every class.
    pub fn mean(&self, z: f64) -> DVector<f64> {
        let b = self.kernel.tasks().b();
        let a = self.num_classes();
        DVector::from_fn(a, |cls, _| {
            let update: f64 = self
                .rows
                .iter()
                .zip(self.dual.iter())
                .map(|(r, d)| b[(cls, r.class_id)] * self.row_kernel(r, z) * d)
                .sum();
            self.priors[cls].value(z) + update
        })
    }

    pub fn mean_slope(&self, class_id: usize, z: f64) -> f64 {
        let b = self.kernel.tasks().b();
        let update: f64 = self
            .rows
            .iter()
            .zip(self.dual.iter())
            .map(|(r, d)| b[(class_id, r.class_id)] * self.row_kernel_slope(r, z) * d)
            .sum();
        self.priors[class_id].derivative(z) + update
    }

    /// `L⁻¹ C K(x, z) e_a` for each class `a`, as columns.
    fn whitened_cross(&self, z: f64) -> DMatrix<f64> {
        let b = self.kernel.tasks().b();
        let a = self.num_classes();
        let m = self.rows.len();
        let u: Vec<f64> = self.rows.iter().map(|r| self.row_kernel(r, z)).collect();
        let mut out = DMatrix::zeros(m, a);
        for cls in 0..a {
            let col = DVector::from_fn(m, |i, _| b[(self.rows[i].class_id, cls)] * u[i]);
            out.set_column(cls, &self.factor.forward(&col));
        }
        out
    }

    /// Unscaled posterior kernel `K_post(y, z)` (`A × A`).
    pub fn posterior_kernel(&self, y: f64, z: f64) -> DMatrix<f64> {
        let prior = self.kernel.eval(y, z);
        if self.rows.is_empty() {
            return prior;
        }
        let wy = self.whitened_cross(y);
        let wz = if y == z { wy.clone() } else { self.whitened_cross(z) };
        prior - wy.transpose() * wz
    }

    /// Unscaled class-major posterior covariance over `zs`: entry
    /// `(a·n + i, b·n + j)` is `K_post(z_i, z_j)_ab`.
    pub fn posterior_gram(&self, zs: &[f64]) -> DMatrix<f64> {
        let a = self.num_classes();
        let n = zs.len();
        let cross: Vec<DMatrix<f64>> = zs.iter().map(|&z| self.whitened_cross(z)).collect();
        let b = self.kernel.tasks().b();
        let k = self.kernel.scalar();
        let mut out = DMatrix::zeros(a * n, a * n);
        for i in 0..n {
            for j in 0..n {
                let kij = k.eval(zs[i], zs[j]);
                let upd = if self.rows.is_empty() {
                    DMatrix::zeros(a, a)
                } else {
                    cross[i].transpose() * &cross[j]
                };
                for p in 0..a {
                    for q in 0..a {
                        out[(p * n + i, q * n + j)] = b[(p, q)] * kij - upd[(p, q)];
                    }
                }
            }
        }
        out
    }

    /// Scaled posterior variance `ŝ K_post(z, z)_aa`.
    pub fn variance(&self, class_id: usize, z: f64) -> f64 {
        let v = self.posterior_kernel(z, z)[(class_id, class_id)];
        self.scale * v.max(0.0)
    }

    /// Discount bands `m_post ± n σ` and yield bands obtained by pushing them
    /// through `y = -ln(g)/z`. The optional `cap` clips the yield band to
    /// `mean ± cap` and is meant for display.
    pub fn confidence_bands(
        &self,
        class_id: usize,
        zs: &[f64],
        n_sigma: f64,
        cap: Option<f64>,
    ) -> Result<Vec<BandPoint>> {
        if class_id >= self.num_classes() {
            return invalid(format!("class {class_id} out of range"));
        }
        if !(n_sigma.is_finite() && n_sigma >= 0.0) {
            return invalid(format!("n_sigma must be non-negative, got {n_sigma}"));
        }
        zs.iter()
            .map(|&z| {
                check_maturity(z)?;
                let mean = self.mean(z)[class_id];
                let half = n_sigma * self.variance(class_id, z).sqrt();
                let discount = Band {
                    lower: mean - half,
                    mean,
                    upper: mean + half,
                };
                let yield_ = self.yield_band(class_id, z, &discount)?;
                let yield_ = match cap {
                    Some(c) => Band {
                        lower: yield_.lower.max(yield_.mean - c),
                        mean: yield_.mean,
                        upper: yield_.upper.min(yield_.mean + c),
                    },
                    None => yield_,
                };
                Ok(BandPoint { z, discount, yield_ })
            })
            .collect()
    }

    fn yield_band(&self, class_id: usize, z: f64, d: &Band) -> Result<Band> {
        if !(d.mean > 0.0) {
            return Err(CurveError::NonPositiveDiscount {
                maturity: z,
                value: d.mean,
            });
        }
        if z == 0.0 {
            let f = -self.mean_slope(class_id, 0.0) / d.mean;
            return Ok(Band {
                lower: f,
                mean: f,
                upper: f,
            });
        }
        let to_yield = |g: f64| if g > 0.0 { -g.ln() / z } else { f64::INFINITY };
        Ok(Band {
            lower: to_yield(d.upper),
            mean: to_yield(d.mean),
            upper: to_yield(d.lower),
        })
    }

    /// Trapezoidal integral of the discount band width over `[from, to]`.
    pub fn integrated_band_width(&self, class_id: usize, from: f64, to: f64, steps: usize, n_sigma: f64) -> f64 {
        let h = (to - from) / steps as f64;
        (0..=steps)
            .map(|i| {
                let z = from + i as f64 * h;
                let w = 2.0 * n_sigma * self.variance(class_id, z).sqrt();
                if i == 0 || i == steps {
                    0.5 * w * h
                } else {
                    w * h
                }
            })
            .sum()
    }

    /// Prior cross-class correlation `C` at equal maturities.
    pub fn task_correlation(&self) -> DMatrix<f64> {
        self.kernel.normalize().correlation
    }
}
