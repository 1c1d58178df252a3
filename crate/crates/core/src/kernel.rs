//! Scalar maturity kernel, graph-regularized task covariance and the separable
//! matrix-valued kernel `K(x, y) = B k(x, y)` built from them.
//!
//! The scalar kernel is the reproducing kernel of the weighted Sobolev space of
//! twice weakly differentiable `h` on `[0, ∞)` with `h(0) = 0`,
//! `h'(∞) = 0` and norm
//!
//! ```text
//! ‖h‖² = ∫₀^∞ h''(x)² e^{αx} dx
//! ```
//!
//! It is always evaluated through its closed form, rearranged as
//!
//! ```text
//! k(x, y) = [φ(αm) + αm e^{-αm} (1 - e^{-α(M-m)})] / α³,   φ(u) = 2(1 - (1+u) e^{-u})
//! ```
//!
//! with `m = min(x, y)`, `M = max(x, y)`. Both terms are non-negative, which
//! avoids the `O(m/α²)` cancellation of the textbook form when `α` is small.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::SpdFactor;

/// `φ(u) = 2(1 - (1+u)e^{-u})`, by its Taylor series below `u = 0.5`.
fn phi(u: f64) -> f64 {
    if u < 0.5 {
        // Σ_{n≥2} (-1)^n (n-1) uⁿ / n!
        let mut term = u * u / 2.0;
        let mut sum = term;
        for n in 3..40 {
            term *= -u / n as f64;
            let next = term * (n - 1) as f64;
            sum += next;
            if next.abs() < 1e-18 * sum {
                break;
            }
        }
        2.0 * sum
    } else {
        2.0 * (-(-u).exp_m1() - u * (-u).exp())
    }
}

/// Scalar kernel with maturity-weight rate `alpha` (1/years).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarKernel {
    alpha: f64,
}

impl ScalarKernel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return invalid(format!("kernel alpha must be positive and finite, got {alpha}"));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Evaluates `k(x, y)`. Inputs are assumed finite and non-negative; use
    /// [`ScalarKernel::try_eval`] for unvalidated data.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        debug_assert!(x >= 0.0 && y >= 0.0, "negative maturity ({x}, {y})");
        let a = self.alpha;
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let u = a * lo;
        (phi(u) - u * (-u).exp() * (-a * (hi - lo)).exp_m1()) / (a * a * a)
    }

    pub fn try_eval(&self, x: f64, y: f64) -> Result<f64> {
        check_maturity(x)?;
        check_maturity(y)?;
        Ok(self.eval(x, y))
    }

    /// Partial derivative of `k(x, y)` in its first argument.
    ///
    /// For `x < y`: `e^{-αx}/α² + (x/α) e^{-αx} - e^{-αy}/α²`;
    /// for `x > y`: `(y/α) e^{-αx}`. Both branches agree at `x = y`, so `k` is
    /// continuously differentiable across the diagonal (only `∂²k` jumps there).
    pub fn d_first(&self, x: f64, y: f64) -> f64 {
        let a = self.alpha;
        if x < y {
            (-a * x).exp() * (-(-a * (y - x)).exp_m1() / (a * a) + x / a)
        } else {
            (y / a) * (-a * x).exp()
        }
    }

    /// Scalar Gram matrix `k(xs_i, ys_j)`.
    pub fn gram(&self, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), ys.len(), |i, j| self.eval(xs[i], ys[j]))
    }

    /// Normalized kernel `ρ(x, y) = k(x,x)^{-1/2} k(x,y) k(y,y)^{-1/2}` with
    /// `ρ(x, x) = 1` and `ρ = 0` whenever a variance vanishes.
    pub fn correlation(&self, x: f64, y: f64) -> f64 {
        if x == y {
            return 1.0;
        }
        let kxx = self.eval(x, x);
        let kyy = self.eval(y, y);
        if kxx > 0.0 && kyy > 0.0 {
            self.eval(x, y) / (kxx.sqrt() * kyy.sqrt())
        } else {
            0.0
        }
    }
}

pub(crate) fn check_maturity(x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        invalid(format!("maturity must be finite and non-negative, got {x}"))
    }
}

/// Per-class smoothness `γ` and pairwise spread weights `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphRegularization {
    gammas: Vec<f64>,
    thetas: DMatrix<f64>,
}

impl GraphRegularization {
    pub fn new(gammas: Vec<f64>, thetas: DMatrix<f64>) -> Result<Self> {
        let a = gammas.len();
        if a == 0 {
            return invalid("at least one product class is required");
        }
        if thetas.nrows() != a || thetas.ncols() != a {
            return invalid(format!(
                "theta matrix is {}x{}, expected {a}x{a}",
                thetas.nrows(),
                thetas.ncols()
            ));
        }
        for (i, g) in gammas.iter().enumerate() {
            if !(g.is_finite() && *g > 0.0) {
                return invalid(format!("gamma[{i}] must be positive, got {g}"));
            }
        }
        for i in 0..a {
            if thetas[(i, i)] != 0.0 {
                return invalid(format!("theta[{i},{i}] must be zero"));
            }
            for j in 0..a {
                let t = thetas[(i, j)];
                if !(t.is_finite() && t >= 0.0) {
                    return invalid(format!("theta[{i},{j}] must be non-negative, got {t}"));
                }
                if t != thetas[(j, i)] {
                    return invalid(format!("theta is not symmetric at ({i},{j})"));
                }
            }
        }
        Ok(Self { gammas, thetas })
    }

    /// Independent classes: `Θ = 0`.
    pub fn standalone(gammas: Vec<f64>) -> Result<Self> {
        let a = gammas.len();
        Self::new(gammas, DMatrix::zeros(a, a))
    }

    /// Every pair of classes coupled with the same spread weight.
    pub fn uniform(gammas: Vec<f64>, theta: f64) -> Result<Self> {
        let a = gammas.len();
        let thetas = DMatrix::from_fn(a, a, |i, j| if i == j { 0.0 } else { theta });
        Self::new(gammas, thetas)
    }

    pub fn num_classes(&self) -> usize {
        self.gammas.len()
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn thetas(&self) -> &DMatrix<f64> {
        &self.thetas
    }

    /// `Q = diag(γ) + L(Θ)` and `B = Q⁻¹`.
    pub fn task_matrices(&self) -> Result<TaskMatrices> {
        let a = self.num_classes();
        let q = DMatrix::from_fn(a, a, |i, j| {
            if i == j {
                self.gammas[i] + (0..a).filter(|&k| k != i).map(|k| self.thetas[(i, k)]).sum::<f64>()
            } else {
                -self.thetas[(i, j)]
            }
        });
        let b = SpdFactor::new(&q)?.inverse();
        // symmetrize away round-off from the column-wise solves
        let b = (&b + b.transpose()) * 0.5;
        Ok(TaskMatrices { q, b })
    }
}

/// Graph precision `Q` and task covariance `B = Q⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMatrices {
    q: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl TaskMatrices {
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Row sums of `Q`; these are the per-class weights of the spread form of the norm.
    pub fn row_sums(&self) -> Vec<f64> {
        self.q.row_iter().map(|r| r.iter().sum()).collect()
    }

    /// Task correlation `C_ab = B_aa^{-1/2} B_ab B_bb^{-1/2}` with unit diagonal.
    pub fn correlation(&self) -> DMatrix<f64> {
        let b = &self.b;
        let a = b.nrows();
        DMatrix::from_fn(a, a, |i, j| {
            if i == j {
                1.0
            } else if b[(i, i)] > 0.0 && b[(j, j)] > 0.0 {
                b[(i, j)] / (b[(i, i)].sqrt() * b[(j, j)].sqrt())
            } else {
                0.0
            }
        })
    }
}

/// `K(x, y) = B k(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableKernel {
    scalar: ScalarKernel,
    regularization: GraphRegularization,
    tasks: TaskMatrices,
}

impl SeparableKernel {
    pub fn new(scalar: ScalarKernel, regularization: GraphRegularization) -> Result<Self> {
        let tasks = regularization.task_matrices()?;
        Ok(Self {
            scalar,
            regularization,
            tasks,
        })
    }

    pub fn scalar(&self) -> &ScalarKernel {
        &self.scalar
    }

    pub fn regularization(&self) -> &GraphRegularization {
        &self.regularization
    }

    pub fn tasks(&self) -> &TaskMatrices {
        &self.tasks
    }

    pub fn num_classes(&self) -> usize {
        self.regularization.num_classes()
    }

    /// Same maturity kernel, new task covariance.
    pub fn with_regularization(&self, regularization: GraphRegularization) -> Result<Self> {
        Self::new(self.scalar, regularization)
    }

    /// The `A×A` matrix `K(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> DMatrix<f64> {
        self.tasks.b() * self.scalar.eval(x, y)
    }

    /// Class-major kernel matrix `B ⊗ k` over `xs`: row `a·N + i`, column `b·N + j`
    /// holds `B_ab k(x_i, x_j)`.
    pub fn gram(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        for &x in xs {
            check_maturity(x)?;
        }
        let k = self.scalar.gram(xs, xs);
        Ok(self.tasks.b().kronecker(&k))
    }

    /// Task correlation matrix together with the normalized scalar kernel.
    pub fn normalize(&self) -> NormalizedKernel {
        NormalizedKernel {
            correlation: self.tasks.correlation(),
            scalar: self.scalar,
        }
    }

    /// Squared RKHS norm of `h = Σ_j K(·, y_j) v_j`, where `coefs` is `A×n`
    /// with column `j` holding `v_j`.
    pub fn span_norm(&self, anchors: &[f64], coefs: &DMatrix<f64>) -> Result<SpanNorm> {
        let a = self.num_classes();
        if coefs.nrows() != a || coefs.ncols() != anchors.len() {
            return invalid(format!(
                "coefficient matrix is {}x{}, expected {a}x{}",
                coefs.nrows(),
                coefs.ncols(),
                anchors.len()
            ));
        }
        for &y in anchors {
            check_maturity(y)?;
        }
        let k = self.scalar.gram(anchors, anchors);
        let b = self.tasks.b();
        let q = self.tasks.q();

        let mut gram_form = 0.0;
        for i in 0..anchors.len() {
            let bv = b * coefs.column(i);
            for j in 0..anchors.len() {
                gram_form += coefs.column(j).dot(&bv) * k[(i, j)];
            }
        }

        // component functions h_a = Σ_j (B v_j)_a k(·, y_j)
        let w = b * coefs;
        let inner = &w * &k * w.transpose();

        let q_form = q.component_mul(&inner).sum();

        let gammas = self.tasks.row_sums();
        let mut spread_form: f64 = (0..a).map(|i| gammas[i] * inner[(i, i)]).sum();
        for i in 0..a {
            for j in (i + 1)..a {
                let diff = inner[(i, i)] + inner[(j, j)] - 2.0 * inner[(i, j)];
                spread_form -= q[(i, j)] * diff;
            }
        }

        Ok(SpanNorm {
            gram_form,
            q_form,
            spread_form,
            component_inner: inner,
        })
    }
}

/// The three equivalent expressions for `‖h‖²_H` of a span function.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanNorm {
    /// `Σ_{i,j} v_iᵀ B v_j k(y_i, y_j)`.
    pub gram_form: f64,
    /// `Σ_{a,b} Q_ab ⟨h_a, h_b⟩`.
    pub q_form: f64,
    /// `Σ_a γ_a ‖h_a‖² - Σ_{a<b} Q_ab ‖h_a - h_b‖²` with `γ_a` the row sums of `Q`.
    pub spread_form: f64,
    /// Scalar-RKHS inner products `⟨h_a, h_b⟩`.
    pub component_inner: DMatrix<f64>,
}

/// `R(x, y) = C ρ(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedKernel {
    pub correlation: DMatrix<f64>,
    scalar: ScalarKernel,
}

impl NormalizedKernel {
    pub fn rho(&self, x: f64, y: f64) -> f64 {
        self.scalar.correlation(x, y)
    }

    pub fn eval(&self, x: f64, y: f64) -> DMatrix<f64> {
        &self.correlation * self.rho(x, y)
    }
}
