//! Dense reference solver used to cross-check [`crate::estimator::solve`].
//!
//! Works in the primal coefficients `b = vec(βᵀ) ∈ ℝ^{AN}` with the full
//! kernel matrix `𝐊 = B ⊗ k`. The objective
//!
//! ```text
//! J(b) = (r - C𝐊b)ᵀ W (r - C𝐊b) + λ bᵀ𝐊b
//! ```
//!
//! has gradient `2𝐊[(CᵀWC𝐊 + λI) b - CᵀW r]`, so any solution of the
//! (non-symmetric, always invertible) system `(CᵀWC𝐊 + λI) b = CᵀW r` is a
//! minimizer. That system is solved by LU. Intended for small instances only.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, CurveError, Result};
use crate::estimator::{CurveSolution, EstimatorConfig, Prior};
use crate::instruments::CashFlowMatrix;

/// Largest `A·N` the dense oracle accepts.
pub const MAX_DIMENSION: usize = 200;

/// Weights after folding the diagonal jitter into the ridge: `λ / (λ/ω + jitter)`.
fn effective_weights(cfm: &CashFlowMatrix, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    cfm.rows()
        .iter()
        .map(|r| {
            if r.is_exact() {
                return invalid("the dense oracle does not support exact-fit quotes");
            }
            Ok(cfg.lambda / (cfg.lambda / r.weight + cfg.jitter))
        })
        .collect()
}

fn stacked_prior(grid: &[f64], priors: &[Prior]) -> DVector<f64> {
    let n = grid.len();
    DVector::from_fn(priors.len() * n, |k, _| priors[k / n].value(grid[k % n]))
}

pub fn oracle_solve(cfm: &CashFlowMatrix, cfg: &EstimatorConfig) -> Result<CurveSolution> {
    cfg.validate()?;
    let a = cfg.kernel.num_classes();
    if cfm.num_classes() != a {
        return invalid("class count mismatch between data and kernel");
    }
    let n = cfm.grid().len();
    if a * n > MAX_DIMENSION {
        return invalid(format!("oracle limited to A*N <= {MAX_DIMENSION}, got {}", a * n));
    }
    let w = effective_weights(cfm, cfg)?;
    let c = cfm.dense();
    let big_k = cfg.kernel.gram(cfm.grid())?;
    let prices = DVector::from_vec(cfm.prices());
    let r = &prices - &c * stacked_prior(cfm.grid(), &cfg.priors);

    let w_diag = DMatrix::from_diagonal(&DVector::from_vec(w));
    let ctw = c.transpose() * &w_diag;
    let lhs = &ctw * &c * &big_k + DMatrix::identity(a * n, a * n) * cfg.lambda;
    let rhs = &ctw * r;
    let b = lhs
        .lu()
        .solve(&rhs)
        .ok_or(CurveError::IllConditioned { pivot: 0.0, row: 0 })?;

    // vec(βᵀ) is class-major, i.e. row a of β occupies b[a*N .. (a+1)*N]
    let beta = DMatrix::from_fn(a, n, |i, j| b[i * n + j]);
    Ok(CurveSolution::from_beta(beta, cfm, cfg, f64::NAN))
}

/// Objective `J` evaluated with dense matrices for an arbitrary `β`.
pub fn oracle_objective(cfm: &CashFlowMatrix, cfg: &EstimatorConfig, beta: &DMatrix<f64>) -> Result<f64> {
    let a = cfg.kernel.num_classes();
    let n = cfm.grid().len();
    if beta.shape() != (a, n) {
        return invalid("coefficient shape mismatch");
    }
    let w = effective_weights(cfm, cfg)?;
    let c = cfm.dense();
    let big_k = cfg.kernel.gram(cfm.grid())?;
    let b = DVector::from_fn(a * n, |k, _| beta[(k / n, k % n)]);
    let kb = &big_k * &b;
    let r = DVector::from_vec(cfm.prices()) - &c * stacked_prior(cfm.grid(), &cfg.priors) - &c * &kb;
    let loss: f64 = r.iter().zip(&w).map(|(e, w)| w * e * e).sum();
    Ok(loss + cfg.lambda * b.dot(&kb))
}
