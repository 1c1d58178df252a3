//! Joint estimation of discount curves for several fixed-income product classes.
//!
//! Curves are fitted by kernel ridge regression with a separable kernel
//! `K(x, y) = B k(x, y)`, where `B = Q⁻¹` comes from per-class smoothness
//! weights plus graph-Laplacian spread penalties between classes. The same
//! fit has a Gaussian-process reading that yields confidence bands.
//!
//! ```
//! use multicurve::prelude::*;
//!
//! let bond = build_bond(0, "UST 2y", 0.04, 2, 2.0, 0.995).unwrap();
//! let swap = build_swap(1, "SOFR 5y", &SwapSpec::spot(5.0, 0.038, 1.0)).unwrap();
//! let cfm = CashFlowMatrix::assemble(&[bond, swap], 2, WeightMode::Duration).unwrap();
//!
//! let kernel = SeparableKernel::new(
//!     ScalarKernel::new(0.05).unwrap(),
//!     GraphRegularization::uniform(vec![1e-4, 1e-4], 1e-2).unwrap(),
//! )
//! .unwrap();
//! let curves = solve(&cfm, &EstimatorConfig::new(kernel)).unwrap();
//! assert_eq!(curves.discount_at(0, 0.0), 1.0);
//! ```

pub mod error;
pub mod estimator;
pub mod experiments;
pub mod gp;
pub mod instruments;
pub mod kernel;
pub mod linalg;
pub mod oracle;
pub mod synthetic;

pub use error::{CurveError, Result};

pub mod prelude {
    pub use crate::error::{CurveError, Result};
    pub use crate::estimator::{solve, CurveSolution, EstimatorConfig, Prior};

    pub use crate::experiments::{
        loocv, masking_experiment, rmse_bp, run_masking, BucketSpec, ExperimentReport, LoocvGrid, LoocvSettings,
        MaskingConfig, Panel,
    };
    pub use crate::gp::{posterior, NoiseSpec, PosteriorSurface};
    pub use crate::instruments::{
        build_bond, build_swap, fx_forward, CashFlow, CashFlowMatrix, Instrument, SwapSpec, WeightMode,
    };
    pub use crate::kernel::{GraphRegularization, ScalarKernel, SeparableKernel};
    pub use crate::synthetic::SyntheticUniverse;
}
