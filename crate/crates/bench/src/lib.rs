//! Fixtures shared by the benchmarks.

use multicurve::prelude::*;

/// Two-class synthetic cross-section with the standard tenor menus.
pub fn cross_section(seed: u64) -> CashFlowMatrix {
    let insts = SyntheticUniverse::standard(seed).instruments().expect("synthetic instruments");
    CashFlowMatrix::assemble(&insts, 2, WeightMode::Duration).expect("assemble")
}

pub fn estimator(theta: f64) -> EstimatorConfig {
    let kernel = SeparableKernel::new(
        ScalarKernel::new(0.05).expect("alpha"),
        GraphRegularization::uniform(vec![1e-4, 1e-4], theta).expect("regularization"),
    )
    .expect("kernel");
    EstimatorConfig::new(kernel)
}
