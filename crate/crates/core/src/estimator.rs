//! Closed-form vector-valued kernel ridge regression for discount curves.
//!
//! With prices `P`, cash-flow matrix `C`, prior `p` and separable kernel `K`,
//! the curve is `ĝ = p + Σ_j K(·, x_j) β_j` with
//!
//! ```text
//! vec(βᵀ) = Cᵀ (C K Cᵀ + Λ)⁻¹ (P - C vec(pᵀ(x))),   Λ = diag(λ / ω)
//! ```
//!
//! Only the `M × M` dual system is ever factored.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CurveError, Result};
use crate::instruments::CashFlowMatrix;
use crate::kernel::{check_maturity, ScalarKernel, SeparableKernel};
use crate::linalg::SpdFactor;

/// Prior discount curve `p` with `p(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Prior {
    #[default]
    Constant,
    /// `p(z) = e^{-rz}`.
    FlatRate { rate: f64 },
}

impl Prior {
    pub fn value(&self, z: f64) -> f64 {
        match *self {
            Prior::Constant => 1.0,
            Prior::FlatRate { rate } => (-rate * z).exp(),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            Prior::Constant => 0.0,
            Prior::FlatRate { rate } => -rate * (-rate * z).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub kernel: SeparableKernel,
    /// One prior per class.
    pub priors: Vec<Prior>,
    pub lambda: f64,
    /// Added to the diagonal of the dual system.
    pub jitter: f64,
}

impl EstimatorConfig {
    /// Constant prior, `λ = 1`, no jitter.
    pub fn new(kernel: SeparableKernel) -> Self {
        let a = kernel.num_classes();
        Self {
            kernel,
            priors: vec![Prior::Constant; a],
            lambda: 1.0,
            jitter: 0.0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_prior(mut self, prior: Prior) -> Self {
        self.priors = vec![prior; self.kernel.num_classes()];
        self
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return invalid(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return invalid(format!("jitter must be non-negative, got {}", self.jitter));
        }
        if self.priors.len() != self.kernel.num_classes() {
            return invalid(format!(
                "{} priors for {} classes",
                self.priors.len(),
                self.kernel.num_classes()
            ));
        }
        for p in &self.priors {
            if let Prior::FlatRate { rate } = p {
                if !rate.is_finite() {
                    return invalid("prior rate must be finite");
                }
            }
        }
        Ok(())
    }

    pub(crate) fn check_against(&self, cfm: &CashFlowMatrix) -> Result<()> {
        self.validate()?;
        if cfm.num_classes() != self.kernel.num_classes() {
            return invalid(format!(
                "cash-flow matrix has {} classes, kernel has {}",
                cfm.num_classes(),
                self.kernel.num_classes()
            ));
        }
        Ok(())
    }

    /// Diagonal of `Λ` (plus jitter); zero for exact-fit rows.
    pub fn ridge_diagonal(&self, cfm: &CashFlowMatrix) -> Vec<f64> {
        cfm.rows()
            .iter()
            .map(|r| {
                let base = if r.is_exact() { 0.0 } else { self.lambda / r.weight };
                base + self.jitter
            })
            .collect()
    }
}

/// `P - C vec(pᵀ(x))`.
pub fn prior_residual(cfm: &CashFlowMatrix, priors: &[Prior]) -> DVector<f64> {
    let grid = cfm.grid();
    DVector::from_iterator(
        cfm.num_instruments(),
        cfm.rows().iter().map(|r| {
            let p = &priors[r.class_id];
            r.price - r.entries.iter().map(|&(j, c)| c * p.value(grid[j])).sum::<f64>()
        }),
    )
}

/// Scalar instrument Gram matrix `S_il = Σ C_ij C_lj' k(x_j, x_j')`. The dual
/// system is `B_{c(i) c(l)} S_il`.
pub fn instrument_gram(cfm: &CashFlowMatrix, scalar: &ScalarKernel) -> DMatrix<f64> {
    let grid = cfm.grid();
    let m = cfm.num_instruments();
    let kg = scalar.gram(grid, grid);
    // u_i = k(grid, grid) c_i
    let mut u = DMatrix::<f64>::zeros(grid.len(), m);
    for (i, r) in cfm.rows().iter().enumerate() {
        for &(j, c) in &r.entries {
            for t in 0..grid.len() {
                u[(t, i)] += c * kg[(t, j)];
            }
        }
    }
    let mut s = DMatrix::<f64>::zeros(m, m);
    for (i, r) in cfm.rows().iter().enumerate() {
        for l in 0..m {
            s[(i, l)] = r.entries.iter().map(|&(j, c)| c * u[(j, l)]).sum();
        }
    }
    (&s + s.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// `P_i - Σ_j C_ij ĝ(x_j)` in row order.
    pub residuals: Vec<f64>,
    /// Weighted squared pricing error plus `λ‖ĥ‖²`; exact-fit rows are constraints and excluded.
    pub objective: f64,
    /// `‖ĥ‖²_H`.
    pub norm_sq: f64,
    pub min_pivot: f64,
}

/// Fitted curves `ĝ_a(z) = p_a(z) + Σ_b B_ab Σ_j k(z, x_j) β_bj`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSolution {
    beta: DMatrix<f64>,
    grid: Vec<f64>,
    kernel: SeparableKernel,
    priors: Vec<Prior>,
    diagnostics: Diagnostics,
}

impl CurveSolution {
    pub(crate) fn from_beta(
        beta: DMatrix<f64>,
        cfm: &CashFlowMatrix,
        cfg: &EstimatorConfig,
        min_pivot: f64,
    ) -> Self {
        let mut sol = Self {
            beta,
            grid: cfm.grid().to_vec(),
            kernel: cfg.kernel.clone(),
            priors: cfg.priors.clone(),
            diagnostics: Diagnostics {
                residuals: Vec::new(),
                objective: 0.0,
                norm_sq: 0.0,
                min_pivot,
            },
        };
        let (residuals, objective, norm_sq) = sol.evaluate_objective(cfm, cfg.lambda);
        sol.diagnostics.residuals = residuals;
        sol.diagnostics.objective = objective;
        sol.diagnostics.norm_sq = norm_sq;
        sol
    }

    /// `A × N` coefficients.
    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn kernel(&self) -> &SeparableKernel {
        &self.kernel
    }

    pub fn priors(&self) -> &[Prior] {
        &self.priors
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn num_classes(&self) -> usize {
        self.kernel.num_classes()
    }

    /// Same curves with a different coefficient matrix; used to probe optimality.
    pub fn with_beta(&self, beta: DMatrix<f64>, cfm: &CashFlowMatrix, lambda: f64) -> Self {
        let mut sol = self.clone();
        sol.beta = beta;
        let (residuals, objective, norm_sq) = sol.evaluate_objective(cfm, lambda);
        sol.diagnostics.residuals = residuals;
        sol.diagnostics.objective = objective;
        sol.diagnostics.norm_sq = norm_sq;
        sol
    }

    fn evaluate_objective(&self, cfm: &CashFlowMatrix, lambda: f64) -> (Vec<f64>, f64, f64) {
        let n = self.grid.len();
        let a = self.num_classes();
        let kg = self.kernel.scalar().gram(&self.grid, &self.grid);
        // f_b(x_i) = Σ_j k(x_i, x_j) β_bj
        let f = &self.beta * &kg;
        let h = self.kernel.tasks().b() * &f;
        let norm_sq = if n == 0 { 0.0 } else { self.beta.component_mul(&h).sum() };
        let mut loss = 0.0;
        let mut residuals = Vec::with_capacity(cfm.num_instruments());
        for r in cfm.rows() {
            let prior = &self.priors[r.class_id];
            let model: f64 = r
                .entries
                .iter()
                .map(|&(j, c)| c * (prior.value(self.grid[j]) + h[(r.class_id, j)]))
                .sum();
            let res = r.price - model;
            if !r.is_exact() {
                loss += r.weight * res * res;
            }
            residuals.push(res);
        }
        debug_assert_eq!(h.nrows(), a);
        (residuals, loss + lambda * norm_sq, norm_sq)
    }

    fn coefficient_curves(&self, z: f64) -> DVector<f64> {
        let k: DVector<f64> = DVector::from_iterator(
            self.grid.len(),
            self.grid.iter().map(|&x| self.kernel.scalar().eval(z, x)),
        );
        &self.beta * k
    }

    fn coefficient_slopes(&self, z: f64) -> DVector<f64> {
        let k: DVector<f64> = DVector::from_iterator(
            self.grid.len(),
            self.grid.iter().map(|&x| self.kernel.scalar().d_first(z, x)),
        );
        &self.beta * k
    }

    /// `ĥ(z)` for all classes.
    pub fn hypothesis(&self, z: f64) -> DVector<f64> {
        if self.grid.is_empty() {
            return DVector::zeros(self.num_classes());
        }
        self.kernel.tasks().b() * self.coefficient_curves(z)
    }

    /// `ĝ_a(z)`; `z` is assumed valid.
    pub fn discount_at(&self, class_id: usize, z: f64) -> f64 {
        self.priors[class_id].value(z) + self.hypothesis(z)[class_id]
    }

    /// `ĝ_a'(z)` from the analytic first-argument derivative of `k`.
    pub fn discount_slope_at(&self, class_id: usize, z: f64) -> f64 {
        let slope = if self.grid.is_empty() {
            0.0
        } else {
            (self.kernel.tasks().b() * self.coefficient_slopes(z))[class_id]
        };
        self.priors[class_id].derivative(z) + slope
    }

    pub fn evaluate_curve(&self, class_id: usize, zs: &[f64]) -> Result<Vec<f64>> {
        self.check_class(class_id)?;
        zs.iter()
            .map(|&z| {
                check_maturity(z)?;
                Ok(self.discount_at(class_id, z))
            })
            .collect()
    }

    /// Zero yields `-ln ĝ(z)/z` and instantaneous forwards `-ĝ'(z)/ĝ(z)`.
    /// At `z = 0` the yield is reported as the short forward.
    pub fn yield_and_forward(&self, class_id: usize, zs: &[f64]) -> Result<Vec<(f64, f64)>> {
        self.check_class(class_id)?;
        zs.iter()
            .map(|&z| {
                check_maturity(z)?;
                let g = self.discount_at(class_id, z);
                if !(g > 0.0) {
                    return Err(CurveError::NonPositiveDiscount { maturity: z, value: g });
                }
                let fwd = -self.discount_slope_at(class_id, z) / g;
                let y = if z > 0.0 { -g.ln() / z } else { fwd };
                Ok((y, fwd))
            })
            .collect()
    }

    fn check_class(&self, class_id: usize) -> Result<()> {
        if class_id >= self.num_classes() {
            return invalid(format!(
                "class {class_id} out of range for {} classes",
                self.num_classes()
            ));
        }
        Ok(())
    }
}

/// Solves the kernel ridge problem through the `M × M` dual system.
pub fn solve(cfm: &CashFlowMatrix, cfg: &EstimatorConfig) -> Result<CurveSolution> {
    cfg.check_against(cfm)?;
    let s = instrument_gram(cfm, cfg.kernel.scalar());
    solve_with_instrument_gram(cfm, cfg, &s)
}

/// [`solve`] with a precomputed [`instrument_gram`] for the rows of `cfm`.
pub fn solve_with_instrument_gram(
    cfm: &CashFlowMatrix,
    cfg: &EstimatorConfig,
    s: &DMatrix<f64>,
) -> Result<CurveSolution> {
    cfg.check_against(cfm)?;
    let m = cfm.num_instruments();
    let n = cfm.grid().len();
    let a = cfm.num_classes();
    if s.nrows() != m || s.ncols() != m {
        return invalid(format!("instrument Gram is {}x{}, expected {m}x{m}", s.nrows(), s.ncols()));
    }
    if m == 0 {
        return Ok(CurveSolution::from_beta(DMatrix::zeros(a, n), cfm, cfg, f64::INFINITY));
    }

    let rows = cfm.rows();
    let b = cfg.kernel.tasks().b();
    let mut sys = DMatrix::from_fn(m, m, |i, l| b[(rows[i].class_id, rows[l].class_id)] * s[(i, l)]);

    let exact: Vec<usize> = (0..m).filter(|&i| rows[i].is_exact()).collect();
    if !exact.is_empty() {
        let block = sys.select_rows(&exact).select_columns(&exact);
        SpdFactor::new(&block).map_err(|e| match e {
            CurveError::IllConditioned { pivot, row } => CurveError::IllConditioned {
                pivot,
                row: exact[row],
            },
            other => other,
        })?;
    }

    for (i, d) in cfg.ridge_diagonal(cfm).into_iter().enumerate() {
        sys[(i, i)] += d;
    }
    let factor = SpdFactor::new(&sys)?;
    let dual = factor.solve(&prior_residual(cfm, &cfg.priors));

    let mut beta = DMatrix::zeros(a, n);
    for (i, r) in rows.iter().enumerate() {
        for &(j, c) in &r.entries {
            beta[(r.class_id, j)] += c * dual[i];
        }
    }
    Ok(CurveSolution::from_beta(beta, cfm, cfg, factor.min_pivot()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::{build_bond, build_swap, CashFlow, Instrument, SwapSpec, WeightMode};
    use crate::kernel::GraphRegularization;
    use approx::assert_relative_eq;

    fn kernel(gammas: Vec<f64>, theta: f64) -> SeparableKernel {
        SeparableKernel::new(
            ScalarKernel::new(0.05).unwrap(),
            GraphRegularization::uniform(gammas, theta).unwrap(),
        )
        .unwrap()
    }

    fn sample() -> CashFlowMatrix {
        let insts = vec![
            build_bond(0, "b2", 0.03, 2, 2.0, 1.0).unwrap(),
            build_bond(0, "b5", 0.04, 2, 5.0, 1.01).unwrap(),
            build_swap(1, "s3", &SwapSpec::spot(3.0, 0.035, 1.0)).unwrap(),
            build_swap(1, "s10", &SwapSpec::spot(10.0, 0.04, 1.0)).unwrap(),
        ];
        CashFlowMatrix::assemble(&insts, 2, WeightMode::Duration).unwrap()
    }

    #[test]
    fn no_quotes_returns_prior() {
        let cfm = CashFlowMatrix::assemble(&[], 2, WeightMode::Duration).unwrap();
        let cfg = EstimatorConfig::new(kernel(vec![1e-4, 1e-4], 0.01)).with_prior(Prior::FlatRate { rate: 0.02 });
        let sol = solve(&cfm, &cfg).unwrap();
        assert_eq!(sol.beta().len(), 0);
        for z in [0.0, 1.0, 30.0] {
            assert_eq!(sol.discount_at(1, z), (-0.02 * z).exp());
        }
    }

    #[test]
    fn discount_is_one_at_origin() {
        let sol = solve(&sample(), &EstimatorConfig::new(kernel(vec![1e-4, 2e-4], 5e-3))).unwrap();
        assert_eq!(sol.discount_at(0, 0.0), 1.0);
        assert_eq!(sol.discount_at(1, 0.0), 1.0);
    }

    #[test]
    fn zero_beta_gives_prior() {
        let cfm = sample();
        let cfg = EstimatorConfig::new(kernel(vec![1e-4, 1e-4], 0.0)).with_prior(Prior::FlatRate { rate: 0.03 });
        let sol = solve(&cfm, &cfg).unwrap();
        let flat = sol.with_beta(DMatrix::zeros(2, cfm.grid().len()), &cfm, 1.0);
        let yf = flat.yield_and_forward(0, &[0.0, 0.5, 7.0, 40.0]).unwrap();
        for (y, f) in yf {
            assert_relative_eq!(y, 0.03, max_relative = 1e-12);
            assert_relative_eq!(f, 0.03, max_relative = 1e-12);
        }
    }

    #[test]
    fn residuals_match_repricing() {
        let cfm = sample();
        let sol = solve(&cfm, &EstimatorConfig::new(kernel(vec![1e-4, 1e-4], 1e-2))).unwrap();
        for (inst, res) in cfm.instruments().iter().zip(&sol.diagnostics().residuals) {
            let model = inst.reprice(|z| sol.discount_at(inst.class_id(), z));
            assert_relative_eq!(inst.price() - model, *res, epsilon = 1e-12);
        }
    }

    #[test]
    fn small_ridge_fits_zero_coupon() {
        let zc = Instrument::new(0, "z", (-0.02f64).exp(), vec![CashFlow::new(1.0, 1.0)]).unwrap();
        let cfm = CashFlowMatrix::assemble(&[zc], 1, WeightMode::Duration).unwrap();
        let cfg = EstimatorConfig::new(kernel(vec![1e-4], 0.0)).with_lambda(1e-6);
        let sol = solve(&cfm, &cfg).unwrap();
        let (y, _) = sol.yield_and_forward(0, &[1.0]).unwrap()[0];
        assert!((y - 0.02).abs() < 1e-8, "{y}");
    }

    #[test]
    fn exact_quote_is_matched() {
        let insts = vec![
            build_bond(0, "a", 0.03, 1, 3.0, 1.0).unwrap().exact(true),
            build_bond(0, "b", 0.05, 1, 6.0, 1.05).unwrap(),
        ];
        let cfm = CashFlowMatrix::assemble(&insts, 1, WeightMode::Duration).unwrap();
        let sol = solve(&cfm, &EstimatorConfig::new(kernel(vec![1.0], 0.0))).unwrap();
        assert!(sol.diagnostics().residuals[0].abs() < 1e-10);
        assert!(sol.diagnostics().residuals[1].abs() > 1e-6);
    }

    #[test]
    fn singular_exact_block_is_rejected() {
        let insts = vec![
            build_bond(0, "a", 0.03, 1, 3.0, 1.0).unwrap().exact(true),
            build_bond(0, "a2", 0.03, 1, 3.0, 1.0).unwrap().exact(true),
        ];
        let cfm = CashFlowMatrix::assemble(&insts, 1, WeightMode::Unit).unwrap();
        let err = solve(&cfm, &EstimatorConfig::new(kernel(vec![1.0], 0.0))).unwrap_err();
        assert!(matches!(err, CurveError::IllConditioned { .. }), "{err:?}");
    }

    #[test]
    fn non_positive_discount_is_reported() {
        let cfm = sample();
        let sol = solve(&cfm, &EstimatorConfig::new(kernel(vec![1e-4, 1e-4], 0.0))).unwrap();
        let mut beta = sol.beta().clone();
        beta.fill(-1.0);
        let broken = sol.with_beta(beta, &cfm, 1.0);
        let err = broken.yield_and_forward(0, &[20.0]).unwrap_err();
        assert!(matches!(err, CurveError::NonPositiveDiscount { .. }));
    }

    #[test]
    fn config_validation() {
        let cfm = sample();
        let k = kernel(vec![1e-4, 1e-4], 0.0);
        assert!(solve(&cfm, &EstimatorConfig::new(k.clone()).with_lambda(0.0)).is_err());
        assert!(solve(&cfm, &EstimatorConfig::new(k.clone()).with_jitter(-1.0)).is_err());
        assert!(solve(&cfm, &EstimatorConfig::new(kernel(vec![1e-4], 0.0))).is_err());
        let sol = solve(&cfm, &EstimatorConfig::new(k)).unwrap();
        assert!(sol.evaluate_curve(2, &[1.0]).is_err());
        assert!(sol.evaluate_curve(0, &[-1.0]).is_err());
    }
}
